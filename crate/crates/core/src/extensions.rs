//! Hourly expected throughput with overlapping collisions and on two-lane
//! roads with lane changing, plus the one-hour CIC approximation they are
//! compared against.
//!
//! All forms are truncated at two collisions per horizon. With
//! `n = (H/τ)·(L/(ηv))` pair-steps per horizon, `n·p` is the expected number
//! of collisions; past one the truncation is no longer trustworthy.

use serde::Serialize;
use std::io::Write;

use crate::analytics::{self, Policy, RoadConfig};
use crate::error::{Error, Result};
use crate::fmt::g9;

/// Expected collisions per horizon above which results are flagged.
pub const WARN_COLLISIONS: f64 = 1.0;
/// Expected collisions per horizon above which simulation refuses to run.
pub const REFUSE_COLLISIONS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OneHour {
    pub value: f64,
    pub floored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapTerms {
    /// No collision in the horizon.
    pub term0: f64,
    /// Exactly one collision.
    pub term1: f64,
    /// Two overlapping collisions.
    pub term2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlap {
    pub value: f64,
    pub expanded: f64,
    pub terms: OverlapTerms,
    pub expected_collisions: f64,
    pub out_of_regime: bool,
    pub floored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoLane {
    pub value: f64,
    pub s_overlap: f64,
    /// `p_l2·Δs_l2` with both factors in their approximate forms.
    pub gain: f64,
    /// Same gain with `(1 − p)^(n−1)` kept and the `(L − 2D)/L` factor.
    pub gain_exact: f64,
    pub p_l2: f64,
    pub delta_s: f64,
    pub floored: bool,
}

/// Pair-steps per horizon, `(H/τ)·(L/(ηv))`.
pub fn pair_steps(policy: &Policy, road: &RoadConfig) -> f64 {
    road.horizon / road.tau * analytics::vehicle_count(policy, road)
}

/// `(1/(H·L²))·∫₀ᴸ (x²/(2v) + (L − x)²/(2c)) dx = L(v + c)/(6vcH)`.
pub fn position_weight(length: f64, v: f64, c: f64, horizon: f64) -> f64 {
    length * (v + c) / (6.0 * v * c * horizon)
}

fn wave_magnitude(policy: &Policy, l: f64) -> Result<f64> {
    if policy.spacing() <= l {
        return Err(Error::Domain(format!(
            "mean spacing {} m does not exceed vehicle length {l} m",
            policy.spacing()
        )));
    }
    Ok(analytics::policy_shockwave(policy, l)?.abs())
}

/// `(1 − (TL/(τηv))·p)·s⁺`, floored at 0.
pub fn cic_one_hour(policy: &Policy, road: &RoadConfig, l: f64, sigma_o: f64) -> OneHour {
    let t = road.clearance_time(policy.v);
    let p = analytics::collision_probability(policy, l, sigma_o);
    let raw = (1.0 - t * road.length / (road.tau * policy.spacing()) * p) * analytics::full_capacity(policy);
    OneHour { value: raw.max(0.0), floored: raw < 0.0 }
}

/// Single-lane hourly throughput with at most two, possibly overlapping,
/// collisions.
pub fn cic_overlap(policy: &Policy, road: &RoadConfig, l: f64, sigma_o: f64) -> Result<Overlap> {
    policy.validate()?;
    road.validate()?;
    let c = wave_magnitude(policy, l)?;
    let (v, h) = (policy.v, road.horizon);
    let t = road.clearance_time(v);
    let sp = analytics::full_capacity(policy);
    let p = analytics::collision_probability(policy, l, sigma_o);
    let n = pair_steps(policy, road);
    let keep = 1.0 - t / h;
    let w = position_weight(road.length, v, c, h);
    let terms = OverlapTerms {
        term0: (1.0 - n * p + n * (n - 1.0) / 2.0 * p * p) * sp,
        term1: (1.0 - (n - 1.0) * p) * n * p * keep * sp,
        term2: n * (n - 1.0) / 2.0 * p * p * w * keep * sp,
    };
    let expanded = terms.term0 + terms.term1 + terms.term2;
    let coef = t / h - 0.5 + road.length * (v + c) / (12.0 * v * c * h) * keep;
    let raw = (1.0 - t / road.tau * road.length / policy.spacing() * p + coef * n * (n - 1.0) * p * p) * sp;
    let expected_collisions = n * p;
    Ok(Overlap {
        value: raw.max(0.0),
        expanded,
        terms,
        expected_collisions,
        out_of_regime: expected_collisions > WARN_COLLISIONS,
        floored: raw < 0.0,
    })
}

/// Per-lane hourly throughput on a two-lane road where traffic may bypass a
/// wreck through the other lane.
pub fn throughput_two_lane(policy: &Policy, road: &RoadConfig, l: f64, sigma_o: f64) -> Result<TwoLane> {
    if road.n_lanes != 2 {
        return Err(Error::Unsupported(format!("lane-change throughput needs 2 lanes, got {}", road.n_lanes)));
    }
    if 2.0 * road.lane_change_gap > 0.1 * road.length {
        return Err(Error::Unsupported(format!(
            "lane-change gap {} m is not small against segment length {} m",
            road.lane_change_gap, road.length
        )));
    }
    let ov = cic_overlap(policy, road, l, sigma_o)?;
    let sp = analytics::full_capacity(policy);
    let t = road.clearance_time(policy.v);
    let h = road.horizon;
    let p = analytics::collision_probability(policy, l, sigma_o);
    let n = pair_steps(policy, road);
    let share = t * t / (2.0 * h * h);
    let p_l2 = (n * p).powi(2);
    let delta_s = share * sp;
    let one = n * p * (n - 1.0).mul_add((-p).ln_1p(), 0.0).exp();
    let gain_exact = one * one * (road.length - 2.0 * road.lane_change_gap) / road.length * share * sp;
    let gain = p_l2 * delta_s;
    let raw = ov.value + gain;
    Ok(TwoLane { value: raw.max(0.0), s_overlap: ov.value, gain, gain_exact, p_l2, delta_s, floored: ov.floored })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub eta: f64,
    pub s_baseline: f64,
    pub s_overlap: f64,
    pub s_two_lane: f64,
    pub terms: OverlapTerms,
    pub lane_change_gain: f64,
    pub flags: Vec<&'static str>,
}

/// All three hourly throughputs at one policy; `road.n_lanes` is ignored and
/// the two-lane figure assumes two lanes.
pub fn throughput_report(policy: &Policy, road: &RoadConfig, l: f64, sigma_o: f64) -> Result<ThroughputReport> {
    let base = cic_one_hour(policy, road, l, sigma_o);
    let ov = cic_overlap(policy, road, l, sigma_o)?;
    let two = throughput_two_lane(policy, &RoadConfig { n_lanes: 2, ..*road }, l, sigma_o)?;
    let mut flags = Vec::new();
    if ov.out_of_regime {
        flags.push("out-of-regime");
    }
    if base.floored || ov.floored || two.floored {
        flags.push("floored");
    }
    Ok(ThroughputReport {
        eta: policy.eta,
        s_baseline: base.value,
        s_overlap: ov.value,
        s_two_lane: two.value,
        terms: ov.terms,
        lane_change_gain: two.gain,
        flags,
    })
}

pub fn write_comparison_csv<W: Write>(rows: &[ThroughputReport], mut w: W) -> Result<()> {
    writeln!(w, "eta,s_baseline,s_overlap,s_two_lane,flags")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", g9(r.eta), g9(r.s_baseline), g9(r.s_overlap), g9(r.s_two_lane), r.flags.join("|"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    const L_VEH: f64 = 5.0;

    fn v50() -> f64 {
        50.0 / 3.6
    }

    fn two_lane_road() -> RoadConfig {
        RoadConfig { n_lanes: 2, ..RoadConfig::default() }
    }

    #[test]
    fn zero_probability_gives_full_capacity() {
        let pol = Policy::new(v50(), 1.5);
        let road = two_lane_road();
        let sp = 1.0 / 1.5;
        assert_eq!(cic_one_hour(&pol, &road, L_VEH, 0.0).value, sp);
        let ov = cic_overlap(&pol, &road, L_VEH, 0.0).unwrap();
        assert_eq!(ov.value, sp);
        assert_eq!((ov.terms.term1, ov.terms.term2), (0.0, 0.0));
        let two = throughput_two_lane(&pol, &road, L_VEH, 0.0).unwrap();
        assert_eq!((two.gain, two.value), (0.0, sp));
    }

    #[test]
    fn expanded_matches_factored() {
        let road = RoadConfig::default();
        for &(sigma, eta) in &[(0.05, 0.6), (0.05, 0.62), (0.2, 1.0), (0.3, 1.5), (0.1, 0.8)] {
            let ov = cic_overlap(&Policy::new(v50(), eta), &road, L_VEH, sigma).unwrap();
            assert!(((ov.expanded - ov.value) / ov.value).abs() <= 1e-12, "{sigma} {eta}: {ov:?}");
        }
    }

    #[test]
    fn position_weight_matches_quadrature() {
        let (len, v, c, h) = (5000.0, v50(), 4.386, 3600.0);
        let q = quad::integrate(|x| x * x / (2.0 * v) + (len - x).powi(2) / (2.0 * c), 0.0, len, 0.0, 1e-14);
        let w = q.value / (h * len * len);
        assert!(((w - position_weight(len, v, c, h)) / w).abs() < 1e-9);
    }

    #[test]
    fn gain_positive_and_lane_count_checked() {
        let pol = Policy::new(v50(), 1.0);
        let two = throughput_two_lane(&pol, &two_lane_road(), L_VEH, 0.12).unwrap();
        assert!(two.gain > 0.0 && two.gain_exact > 0.0);
        assert!(two.value > two.s_overlap);
        let three = RoadConfig { n_lanes: 3, ..RoadConfig::default() };
        assert!(matches!(throughput_two_lane(&pol, &three, L_VEH, 0.2), Err(Error::Unsupported(_))));
        let wide = RoadConfig { lane_change_gap: 300.0, ..two_lane_road() };
        assert!(throughput_two_lane(&pol, &wide, L_VEH, 0.2).is_err());
    }

    #[test]
    fn flooring_flags_large_p() {
        let r = cic_one_hour(&Policy::new(v50(), 0.45), &RoadConfig::default(), L_VEH, 0.05);
        assert!(r.floored);
        assert_eq!(r.value, 0.0);
        let t = throughput_report(&Policy::new(v50(), 0.45), &RoadConfig::default(), L_VEH, 0.05).unwrap();
        assert!(t.flags.contains(&"out-of-regime") && t.flags.contains(&"floored"));
    }

    #[test]
    fn comparison_csv_header() {
        let r = throughput_report(&Policy::new(v50(), 2.0), &RoadConfig::default(), L_VEH, 0.05).unwrap();
        let mut buf = Vec::new();
        write_comparison_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("eta,s_baseline,s_overlap,s_two_lane,flags\n2,"));
    }
}

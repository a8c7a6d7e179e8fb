//! Closed-form macroscopic layer: collision probability, segment collision
//! rate, state capacities, shock-wave speed, abnormal-state weight and the
//! collision-inclusive capacity (CIC).
//!
//! Probabilities are carried as natural logs wherever they can underflow;
//! `p` itself is only materialized at the end.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{check, Error, Result};
use crate::fmt::g9;
use crate::gauss::{ln_norm_cdf, ln_norm_pdf, ln_to_log10};
use crate::roots;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub v: f64,
    pub eta: f64,
}

impl Policy {
    pub fn new(v: f64, eta: f64) -> Self {
        Policy { v, eta }
    }

    pub fn validate(&self) -> Result<()> {
        check(self.v > 0.0 && self.v.is_finite(), "v", "must be > 0")?;
        check(self.eta > 0.0 && self.eta.is_finite(), "eta", "must be > 0")
    }

    /// Mean spacing `v·η`.
    pub fn spacing(&self) -> f64 {
        self.v * self.eta
    }
}

/// Total clearance time model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Tct {
    Fixed { seconds: f64 },
    Linear { t0: f64, slope: f64, t_min: f64, t_max: f64 },
}

impl Tct {
    /// 30 min at standstill rising linearly to 60 min at 120 km/h.
    pub fn linear_default() -> Self {
        Tct::Linear { t0: 1800.0, slope: 1800.0 / (120.0 / 3.6), t_min: 1800.0, t_max: 3600.0 }
    }

    pub fn at(&self, v: f64) -> f64 {
        match *self {
            Tct::Fixed { seconds } => seconds,
            Tct::Linear { t0, slope, t_min, t_max } => (t0 + slope * v).clamp(t_min, t_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadConfig {
    /// Segment length (m).
    pub length: f64,
    /// Operational time step (s).
    pub tau: f64,
    pub tct: Tct,
    pub n_lanes: usize,
    /// Minimum spacing between two wrecks that still lets traffic change lanes (m).
    pub lane_change_gap: f64,
    /// Study horizon (s).
    pub horizon: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        RoadConfig {
            length: 5000.0,
            tau: 0.1,
            tct: Tct::linear_default(),
            n_lanes: 1,
            lane_change_gap: 50.0,
            horizon: 3600.0,
        }
    }
}

impl RoadConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.length > 0.0, "length", "must be > 0")?;
        check(self.tau > 0.0, "tau", "must be > 0")?;
        check(self.n_lanes >= 1, "n_lanes", "must be >= 1")?;
        check(self.lane_change_gap >= 0.0, "lane_change_gap", "must be >= 0")?;
        check(self.horizon > 0.0, "horizon", "must be > 0")?;
        match self.tct {
            Tct::Fixed { seconds } => check(seconds > 0.0, "tct", "fixed clearance time must be > 0"),
            Tct::Linear { t0, t_min, t_max, .. } => {
                check(t_min > 0.0 && t_max >= t_min, "tct", "needs 0 < t_min <= t_max")?;
                check(t0 > 0.0, "tct", "t0 must be > 0")
            }
        }
    }

    pub fn clearance_time(&self, v: f64) -> f64 {
        self.tct.at(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficState {
    pub q: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityReport {
    pub v: f64,
    pub eta: f64,
    pub p: f64,
    pub log10_p: f64,
    #[serde(rename = "P")]
    pub rate: f64,
    pub s_plus: f64,
    pub lambda: f64,
    pub s: f64,
    pub c: f64,
    #[serde(rename = "T")]
    pub t_clear: f64,
}

/// Standardized collision threshold `(l − vη)/(vσ√η)`.
pub fn z_score(policy: &Policy, l: f64, sigma_o: f64) -> f64 {
    (l - policy.spacing()) / (policy.v * sigma_o * policy.eta.sqrt())
}

/// `ln p` with `p = Φ((l − vη)/(vσ_o√η))`.
pub fn ln_collision_probability(policy: &Policy, l: f64, sigma_o: f64) -> f64 {
    if sigma_o == 0.0 {
        let d = policy.spacing();
        return if d > l {
            f64::NEG_INFINITY
        } else if d < l {
            0.0
        } else {
            -std::f64::consts::LN_2
        };
    }
    ln_norm_cdf(z_score(policy, l, sigma_o))
}

/// Per-pair, per-step collision probability.
pub fn collision_probability(policy: &Policy, l: f64, sigma_o: f64) -> f64 {
    ln_collision_probability(policy, l, sigma_o).exp()
}

pub fn log10_collision_probability(policy: &Policy, l: f64, sigma_o: f64) -> f64 {
    ln_to_log10(ln_collision_probability(policy, l, sigma_o))
}

/// `ln(∂z/∂η)` magnitude; `∂z/∂η` itself is always negative.
fn ln_neg_dz_deta(v: f64, eta: f64, l: f64, sigma_o: f64) -> f64 {
    let dz = l / (2.0 * v * sigma_o) * eta.powf(-1.5) + 0.5 / sigma_o * eta.powf(-0.5);
    dz.ln()
}

/// `ln(−∂p/∂η) = ln φ(z) + ln|∂z/∂η|`.
pub fn ln_neg_dp_deta(policy: &Policy, l: f64, sigma_o: f64) -> f64 {
    let z = z_score(policy, l, sigma_o);
    ln_norm_pdf(z) + ln_neg_dz_deta(policy.v, policy.eta, l, sigma_o)
}

/// Closed-form `∂p/∂η`.
pub fn dp_deta(policy: &Policy, l: f64, sigma_o: f64) -> f64 {
    -ln_neg_dp_deta(policy, l, sigma_o).exp()
}

/// Closed-form `∂p/∂v`; `∂z/∂v = −l/(v²σ√η)`.
pub fn dp_dv(policy: &Policy, l: f64, sigma_o: f64) -> f64 {
    let z = z_score(policy, l, sigma_o);
    let dz = -l / (policy.v * policy.v * sigma_o * policy.eta.sqrt());
    ln_norm_pdf(z).exp() * dz
}

/// Expected vehicles on the segment, `L/(vη)`.
pub fn vehicle_count(policy: &Policy, road: &RoadConfig) -> f64 {
    road.length / policy.spacing()
}

/// Expected collisions per step on the segment, `(L/(vη))·p`.
pub fn collision_rate(policy: &Policy, road: &RoadConfig, l: f64, sigma_o: f64) -> f64 {
    (vehicle_count(policy, road).ln() + ln_collision_probability(policy, l, sigma_o)).exp()
}

/// `s⁺ = 1/η`.
pub fn full_capacity(policy: &Policy) -> f64 {
    1.0 / policy.eta
}

/// `(q_n − q_b)/(ρ_n − ρ_b)`; negative values travel upstream.
pub fn shockwave_speed(normal: &TrafficState, blocked: &TrafficState) -> Result<f64> {
    if normal.rho == blocked.rho {
        return Err(Error::Degenerate("shock wave between states of equal density".into()));
    }
    Ok((normal.q - blocked.q) / (normal.rho - blocked.rho))
}

/// Wave between free flow at the policy and a jam of stopped vehicles
/// packed nose to tail (`ρ_b = 1/l`).
pub fn policy_shockwave(policy: &Policy, l: f64) -> Result<f64> {
    shockwave_speed(
        &TrafficState { q: 1.0 / policy.eta, rho: 1.0 / policy.spacing() },
        &TrafficState { q: 0.0, rho: 1.0 / l },
    )
}

pub fn clearance_time(road: &RoadConfig, v: f64) -> f64 {
    road.clearance_time(v)
}

/// `λ = 1/(1 + τ/(T·P))`, written as `TP/(TP + τ)` so `P = 0` gives 0.
pub fn abnormal_weight(policy: &Policy, road: &RoadConfig, l: f64, sigma_o: f64) -> f64 {
    let tp = road.clearance_time(policy.v) * collision_rate(policy, road, l, sigma_o);
    if tp.is_infinite() {
        return 1.0;
    }
    tp / (tp + road.tau)
}

/// `ln((T·L/(τ·v))·p)`, the collision penalty added to η in `1/s`.
pub fn ln_penalty(policy: &Policy, road: &RoadConfig, l: f64, sigma_o: f64) -> f64 {
    let t = road.clearance_time(policy.v);
    (t * road.length / (road.tau * policy.v)).ln() + ln_collision_probability(policy, l, sigma_o)
}

/// `s = 1/(η + (TL/(τv))·p)`.
pub fn cic_value(policy: &Policy, road: &RoadConfig, l: f64, sigma_o: f64) -> f64 {
    1.0 / (policy.eta + ln_penalty(policy, road, l, sigma_o).exp())
}

/// Full capacity report at one policy.
pub fn cic(policy: &Policy, road: &RoadConfig, l: f64, sigma_o: f64) -> Result<CapacityReport> {
    policy.validate()?;
    road.validate()?;
    check(l > 0.0, "l", "must be > 0")?;
    check(sigma_o >= 0.0 && sigma_o.is_finite(), "sigma_o", "must be >= 0")?;
    let ln_p = ln_collision_probability(policy, l, sigma_o);
    let rate = collision_rate(policy, road, l, sigma_o);
    Ok(CapacityReport {
        v: policy.v,
        eta: policy.eta,
        p: ln_p.exp(),
        log10_p: ln_to_log10(ln_p),
        rate,
        s_plus: full_capacity(policy),
        lambda: abnormal_weight(policy, road, l, sigma_o),
        s: cic_value(policy, road, l, sigma_o),
        c: policy_shockwave(policy, l).unwrap_or(f64::NAN),
        t_clear: road.clearance_time(policy.v),
    })
}

/// Solves `λ = (s/s⁺)(T/τ)P` and `s = (1 − λ)s⁺` for `s` by root finding
/// instead of the closed form; used to cross-check `cic`.
pub fn cic_by_root(policy: &Policy, road: &RoadConfig, l: f64, sigma_o: f64) -> Result<(f64, f64)> {
    let s_plus = full_capacity(policy);
    let k = road.clearance_time(policy.v) / road.tau * collision_rate(policy, road, l, sigma_o);
    let lambda_of = |s: f64| s / s_plus * k;
    let s = roots::brent(|s| s - (1.0 - lambda_of(s)) * s_plus, 0.0, s_plus, 1e-15)?;
    Ok((s, lambda_of(s)))
}

/// One report per `(v, η)` cell, `v` outermost.
pub fn cic_surface(
    v_grid: &[f64],
    eta_grid: &[f64],
    road: &RoadConfig,
    l: f64,
    sigma_o: f64,
) -> Result<Vec<CapacityReport>> {
    check(!v_grid.is_empty() && !eta_grid.is_empty(), "grid", "must not be empty")?;
    let cells: Vec<Policy> =
        v_grid.iter().flat_map(|&v| eta_grid.iter().map(move |&e| Policy::new(v, e))).collect();
    cells.par_iter().map(|p| cic(p, road, l, sigma_o)).collect()
}

pub fn write_surface_csv<W: Write>(rows: &[CapacityReport], mut w: W) -> Result<()> {
    writeln!(w, "v,eta,p,log10_p,P,s_plus,lambda,s,T")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            g9(r.v),
            g9(r.eta),
            g9(r.p),
            g9(r.log10_p),
            g9(r.rate),
            g9(r.s_plus),
            g9(r.lambda),
            g9(r.s),
            g9(r.t_clear)
        )?;
    }
    Ok(())
}

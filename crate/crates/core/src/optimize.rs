//! Headway/speed policy optimization: capacity under a collision-probability
//! cap, and collision probability under a capacity floor.

use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use crate::analytics::{self, CapacityReport, Policy, RoadConfig};
use crate::error::{check, Result};
use crate::fmt::g9;
use crate::gauss::{norm_quantile, norm_quantile_ln};
use crate::roots;

/// Upper end of every headway search (s).
pub const ETA_CAP: f64 = 120.0;
const Z_SCAN: f64 = 40.0;
const Z_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binding {
    ConstraintBinding,
    InteriorStationary,
    CapacityRoot,
}

impl Binding {
    pub fn tag(&self) -> &'static str {
        match self {
            Binding::ConstraintBinding => "constraint-binding",
            Binding::InteriorStationary => "interior-stationary",
            Binding::CapacityRoot => "capacity-root",
        }
    }
}

/// Headway `η(z)` at which the standardized threshold equals `z`: the
/// positive root `u = √η` of `v·u² + z·v·σ·u − l = 0`.
pub fn eta_at_z(v: f64, z: f64, l: f64, sigma_o: f64) -> f64 {
    let b = z * v * sigma_o;
    let disc = (b * b + 4.0 * v * l).sqrt();
    // pick the form without cancellation
    let u = if b <= 0.0 { (disc - b) / (2.0 * v) } else { 2.0 * l / (b + disc) };
    u * u
}

/// Smallest headway meeting `p(v, η) ≤ p̂`.
pub fn eta_hat(v: f64, p_hat: f64, l: f64, sigma_o: f64) -> Result<f64> {
    check(p_hat > 0.0 && p_hat < 1.0, "p_hat", "must lie in (0, 1)")?;
    check(v > 0.0, "v", "must be > 0")?;
    check(l > 0.0, "l", "must be > 0")?;
    check(sigma_o >= 0.0, "sigma_o", "must be >= 0")?;
    if sigma_o == 0.0 {
        return Ok(l / v);
    }
    Ok(eta_at_z(v, norm_quantile(p_hat), l, sigma_o))
}

/// `eta_hat` from `ln p̂`, for caps below the smallest double.
pub fn eta_hat_ln(v: f64, ln_p_hat: f64, l: f64, sigma_o: f64) -> Result<f64> {
    check(v > 0.0, "v", "must be > 0")?;
    check(l > 0.0, "l", "must be > 0")?;
    check(sigma_o >= 0.0, "sigma_o", "must be >= 0")?;
    check(ln_p_hat < 0.0, "p_hat", "must lie in (0, 1)")?;
    if sigma_o == 0.0 {
        return Ok(l / v);
    }
    Ok(eta_at_z(v, norm_quantile_ln(ln_p_hat), l, sigma_o))
}

/// Penalty factor `K = T·L/(τ·v)` in `1/s = η + K·p`.
fn ln_k(v: f64, road: &RoadConfig) -> f64 {
    (road.clearance_time(v) * road.length / (road.tau * v)).ln()
}

/// `1/s(v, η)`.
pub fn inverse_capacity(v: f64, eta: f64, road: &RoadConfig, l: f64, sigma_o: f64) -> f64 {
    let pol = Policy::new(v, eta);
    eta + (ln_k(v, road) + analytics::ln_collision_probability(&pol, l, sigma_o)).exp()
}

/// `ln(−K·p′(η))`; the objective `η + K·p` is stationary where this is 0.
fn stationarity(v: f64, eta: f64, ln_k: f64, l: f64, sigma_o: f64) -> f64 {
    ln_k + analytics::ln_neg_dp_deta(&Policy::new(v, eta), l, sigma_o)
}

/// Stationary headway minimizing `1/s = η + K·p` (the interior capacity
/// maximum), or `None` when `1/s` has no interior minimum.
pub fn eta_star(v: f64, road: &RoadConfig, l: f64, sigma_o: f64) -> Option<f64> {
    if !(sigma_o > 0.0) || !(v > 0.0) {
        return None;
    }
    let lk = ln_k(v, road);
    let g_of_z = |z: f64| stationarity(v, eta_at_z(v, z, l, sigma_o), lk, l, sigma_o);
    // walk z downward (η upward); a minimum is a sign change from + to −
    let steps = (2.0 * Z_SCAN / Z_STEP).round() as usize;
    let mut candidates = Vec::new();
    let mut z_prev = Z_SCAN;
    let mut g_prev = g_of_z(z_prev);
    for k in 1..=steps {
        let z = Z_SCAN - k as f64 * Z_STEP;
        let g = g_of_z(z);
        if g_prev >= 0.0 && g < 0.0 {
            if let Ok(zr) = roots::brent(g_of_z, z, z_prev, 1e-13) {
                let eta = eta_at_z(v, zr, l, sigma_o);
                if eta <= ETA_CAP {
                    candidates.push(eta);
                }
            }
        }
        z_prev = z;
        g_prev = g;
    }
    let eta = candidates
        .into_iter()
        .min_by(|a, b| inverse_capacity(v, *a, road, l, sigma_o).total_cmp(&inverse_capacity(v, *b, road, l, sigma_o)))?;
    // second-order check: (1/s)' changes from − to + at a minimum
    let h = 1e-6 * eta;
    let d1 = |e: f64| 1.0 - stationarity(v, e, lk, l, sigma_o).exp();
    if d1(eta + h) - d1(eta - h) > 0.0 {
        Some(eta)
    } else {
        None
    }
}

/// `η† = max(η̂, η*)` with the branch that produced it.
pub fn optimal_headway_capacity(v: f64, p_hat: f64, road: &RoadConfig, l: f64, sigma_o: f64) -> Result<(f64, Binding)> {
    let hat = eta_hat(v, p_hat, l, sigma_o)?;
    Ok(match eta_star(v, road, l, sigma_o) {
        Some(star) if star > hat => (star, Binding::InteriorStationary),
        _ => (hat, Binding::ConstraintBinding),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub v: f64,
    pub eta: f64,
    pub binding: Option<Binding>,
    pub p: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub status: &'static str,
    pub v_opt: f64,
    pub eta_opt: f64,
    pub binding: Option<Binding>,
    pub capped: bool,
    /// Largest capacity attainable anywhere in the range when infeasible.
    pub max_s: Option<f64>,
    pub report: Option<CapacityReport>,
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
}

fn check_common(v_min: f64, v_max: f64, road: &RoadConfig, l: f64, sigma_o: f64, n_grid: usize) -> Result<()> {
    check(v_min > 0.0 && v_max >= v_min, "v_range", "needs 0 < v_min <= v_max")?;
    check(n_grid >= 2, "n_grid", "must be >= 2")?;
    check(l > 0.0, "l", "must be > 0")?;
    check(sigma_o >= 0.0, "sigma_o", "must be >= 0")?;
    road.validate()
}

pub fn speed_grid(v_min: f64, v_max: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { v_max } else { v_min + (v_max - v_min) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Capacity maximization subject to `p ≤ p̂`. The optimum sits at the top
/// speed; the curve `s_η†(v)` over the range is returned alongside.
pub fn maximize_capacity(
    v_min: f64,
    v_max: f64,
    p_hat: f64,
    road: &RoadConfig,
    l: f64,
    sigma_o: f64,
    n_grid: usize,
) -> Result<OptimizationResult> {
    check_common(v_min, v_max, road, l, sigma_o, n_grid)?;
    check(p_hat > 0.0 && p_hat < 1.0, "p_hat", "must lie in (0, 1)")?;
    let curve = speed_grid(v_min, v_max, n_grid)
        .par_iter()
        .map(|&v| {
            let (eta, b) = optimal_headway_capacity(v, p_hat, road, l, sigma_o)?;
            let pol = Policy::new(v, eta);
            Ok(CurvePoint {
                v,
                eta,
                binding: Some(b),
                p: analytics::collision_probability(&pol, l, sigma_o),
                s: analytics::cic_value(&pol, road, l, sigma_o),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let top = *curve.last().expect("grid has points");
    Ok(OptimizationResult {
        status: "optimal",
        v_opt: top.v,
        eta_opt: top.eta,
        binding: top.binding,
        capped: false,
        max_s: None,
        report: Some(analytics::cic(&Policy::new(top.v, top.eta), road, l, sigma_o)?),
        curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum EtaR {
    Feasible { eta: f64, capped: bool },
    Infeasible { max_s: f64 },
}

/// Headway maximizing `s(v, ·)` and the maximum itself.
pub fn capacity_peak(v: f64, road: &RoadConfig, l: f64, sigma_o: f64) -> (f64, f64) {
    if sigma_o == 0.0 {
        // p drops from 1/2 to 0 at η = l/v; the supremum is approached from above
        let eta = l / v * (1.0 + 1e-12);
        return (eta, 1.0 / inverse_capacity(v, eta, road, l, sigma_o));
    }
    let eta = match eta_star(v, road, l, sigma_o) {
        Some(e) => e,
        None => roots::minimize_scan(|e| inverse_capacity(v, e, road, l, sigma_o), 1e-6, ETA_CAP, 4001, 1e-12).0,
    };
    (eta, 1.0 / inverse_capacity(v, eta, road, l, sigma_o))
}

/// Largest headway with `s(v, η) ≥ ŝ`.
pub fn eta_r(v: f64, s_hat: f64, road: &RoadConfig, l: f64, sigma_o: f64) -> Result<EtaR> {
    check(s_hat > 0.0, "s_hat", "must be > 0")?;
    check(v > 0.0, "v", "must be > 0")?;
    let (eta_m, s_max) = capacity_peak(v, road, l, sigma_o);
    if s_max < s_hat {
        return Ok(EtaR::Infeasible { max_s: s_max });
    }
    let excess = |e: f64| 1.0 / s_hat - inverse_capacity(v, e, road, l, sigma_o);
    let mut lo = eta_m;
    let mut hi = eta_m.max(1e-3) * 2.0;
    while excess(hi) >= 0.0 {
        if hi >= ETA_CAP {
            return Ok(EtaR::Feasible { eta: ETA_CAP, capped: true });
        }
        lo = hi;
        hi = (hi * 2.0).min(ETA_CAP);
    }
    let eta = roots::brent(excess, lo, hi, 1e-13)?;
    Ok(EtaR::Feasible { eta, capped: false })
}

/// Collision minimization subject to `s ≥ ŝ`: the fastest feasible speed at
/// its critical headway `η^r`.
pub fn minimize_collision(
    v_min: f64,
    v_max: f64,
    s_hat: f64,
    road: &RoadConfig,
    l: f64,
    sigma_o: f64,
    n_grid: usize,
) -> Result<OptimizationResult> {
    check_common(v_min, v_max, road, l, sigma_o, n_grid)?;
    check(s_hat > 0.0, "s_hat", "must be > 0")?;
    let grid = speed_grid(v_min, v_max, n_grid);
    let rs = grid.par_iter().map(|&v| eta_r(v, s_hat, road, l, sigma_o)).collect::<Result<Vec<_>>>()?;
    let curve: Vec<CurvePoint> = grid
        .iter()
        .zip(&rs)
        .map(|(&v, r)| match *r {
            EtaR::Feasible { eta, .. } => {
                let pol = Policy::new(v, eta);
                CurvePoint {
                    v,
                    eta,
                    binding: Some(Binding::CapacityRoot),
                    p: analytics::collision_probability(&pol, l, sigma_o),
                    s: analytics::cic_value(&pol, road, l, sigma_o),
                }
            }
            EtaR::Infeasible { max_s } => CurvePoint { v, eta: f64::NAN, binding: None, p: f64::NAN, s: max_s },
        })
        .collect();
    let Some(k) = rs.iter().rposition(|r| matches!(r, EtaR::Feasible { .. })) else {
        let max_s = curve.iter().map(|c| c.s).fold(0.0, f64::max);
        return Ok(OptimizationResult {
            status: "infeasible",
            v_opt: f64::NAN,
            eta_opt: f64::NAN,
            binding: None,
            capped: false,
            max_s: Some(max_s),
            report: None,
            curve,
        });
    };
    let mut v_opt = grid[k];
    if k + 1 < grid.len() {
        // feasibility edge between two grid speeds
        let peak_gap = |v: f64| capacity_peak(v, road, l, sigma_o).1 - s_hat;
        if let Ok(edge) = roots::bisect(peak_gap, grid[k], grid[k + 1], 1e-10) {
            if peak_gap(edge) >= 0.0 {
                v_opt = edge;
            }
        }
    }
    let (eta_opt, capped) = match eta_r(v_opt, s_hat, road, l, sigma_o)? {
        EtaR::Feasible { eta, capped } => (eta, capped),
        EtaR::Infeasible { .. } => match rs[k] {
            EtaR::Feasible { eta, capped } => {
                v_opt = grid[k];
                (eta, capped)
            }
            EtaR::Infeasible { .. } => unreachable!("index chosen as feasible"),
        },
    };
    Ok(OptimizationResult {
        status: "optimal",
        v_opt,
        eta_opt,
        binding: Some(Binding::CapacityRoot),
        capped,
        max_s: None,
        report: Some(analytics::cic(&Policy::new(v_opt, eta_opt), road, l, sigma_o)?),
        curve,
    })
}

/// Curve CSV; `eta_column` names the headway column.
pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], eta_column: &str, mut w: W) -> Result<()> {
    writeln!(w, "v,{eta_column},binding,p,s")?;
    for c in curve {
        let tag = c.binding.map(|b| b.tag()).unwrap_or("infeasible");
        writeln!(w, "{},{},{},{},{}", g9(c.v), g9(c.eta), tag, g9(c.p), g9(c.s))?;
    }
    Ok(())
}

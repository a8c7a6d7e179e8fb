//! Noise-perturbed IDM car-following.
//!
//! A follower observes the gap and closing speed through additive Gaussian
//! errors and applies its IDM acceleration with an additive control error.
//! Integration is explicit Euler–Maruyama: speed first, then position with
//! the new speed.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{check, Error, Result};
use crate::fmt::g9;
use crate::rng::{self, Rng};

const GAP_FLOOR: f64 = 0.01;
const GAP_REDRAWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub a: f64,
    pub b: f64,
    pub v0: f64,
    pub xi: f64,
    pub d0: f64,
    pub h0: f64,
    pub l: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        VehicleSpec { a: 2.0, b: 2.0, v0: 120.0 / 3.6, xi: 4.0, d0: 0.0, h0: 1.5, l: 5.0 }
    }
}

impl VehicleSpec {
    pub fn validate(&self) -> Result<()> {
        check(self.a > 0.0, "a", "must be > 0")?;
        check(self.b > 0.0, "b", "must be > 0")?;
        check(self.v0 > 0.0, "v0", "must be > 0")?;
        check(self.xi >= 1.0, "xi", "must be >= 1")?;
        check(self.d0 >= 0.0, "d0", "must be >= 0")?;
        check(self.h0 > 0.0, "h0", "must be > 0")?;
        check(self.l > 0.0, "l", "must be > 0")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_d: f64,
    pub sigma_dv: f64,
    pub sigma_acc: f64,
    pub sigma_o: f64,
}

impl NoiseSpec {
    pub fn new(sigma_d: f64, sigma_dv: f64, sigma_acc: f64) -> Self {
        NoiseSpec { sigma_d, sigma_dv, sigma_acc, sigma_o: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_d", self.sigma_d),
            ("sigma_dv", self.sigma_dv),
            ("sigma_acc", self.sigma_acc),
            ("sigma_o", self.sigma_o),
        ] {
            check(v >= 0.0 && v.is_finite(), name, "must be finite and >= 0")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub x_e: f64,
    pub v_e: f64,
    pub x_lead: f64,
    pub v_lead: f64,
    pub t: f64,
}

impl SimState {
    pub fn gap(&self) -> f64 {
        self.x_lead - self.x_e
    }
}

/// One realization of the three error channels.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NoiseDraw {
    pub e_d: f64,
    pub e_dv: f64,
    pub e_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub state: SimState,
    pub accel: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub gap: f64,
    pub v_e: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub seed: u64,
    pub samples: Vec<Sample>,
    pub clamp_count: usize,
}

impl Trajectory {
    pub fn gaps(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.gap).collect()
    }

    /// Gap series with the warm-up window removed.
    pub fn stationary_gaps(&self) -> Vec<f64> {
        let skip = warmup_len(self.samples.len());
        self.samples[skip..].iter().map(|s| s.gap).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,gap,v_e,accel")?;
        for s in &self.samples {
            writeln!(w, "{},{},{},{}", g9(s.t), g9(s.gap), g9(s.v_e), g9(s.accel))?;
        }
        Ok(())
    }
}

/// Samples discarded before computing statistics: 10%, at least 100.
pub fn warmup_len(n: usize) -> usize {
    (n / 10).max(100).min(n.saturating_sub(2))
}

/// IDM acceleration from observed quantities, without the control error.
pub fn idm_accel(veh: &VehicleSpec, v_e: f64, gap_obs: f64, dv_obs: f64) -> f64 {
    let d_star = veh.d0 + v_e * veh.h0 + v_e * dv_obs / (2.0 * (veh.a * veh.b).sqrt());
    veh.a * (1.0 - (v_e / veh.v0).powf(veh.xi) - (d_star / gap_obs).powi(2))
}

/// Advances one step with explicit error values. `Err` when the observed gap
/// is at or below the floor.
pub fn step_with(state: &SimState, veh: &VehicleSpec, dt: f64, draw: NoiseDraw, step: usize) -> Result<StepOutput> {
    let gap_obs = state.gap() + draw.e_d;
    if !(gap_obs > GAP_FLOOR) {
        return Err(Error::GapCollapse { step, gap: gap_obs });
    }
    let dv_obs = state.v_e - state.v_lead + draw.e_dv;
    let accel = idm_accel(veh, state.v_e, gap_obs, dv_obs) + draw.e_acc;
    if !accel.is_finite() {
        return Err(Error::GapCollapse { step, gap: gap_obs });
    }
    let mut v_e = state.v_e + accel * dt;
    let clamped = v_e < 0.0;
    if clamped {
        v_e = 0.0;
    }
    Ok(StepOutput {
        state: SimState {
            x_e: state.x_e + v_e * dt,
            v_e,
            x_lead: state.x_lead + state.v_lead * dt,
            v_lead: state.v_lead,
            t: state.t + dt,
        },
        accel,
        clamped,
    })
}

fn normal(rng: &mut Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        let z: f64 = rng.sample(StandardNormal);
        sigma * z
    }
}

/// Draws the three errors, re-drawing the gap error while the observed gap
/// would sit at or below the floor.
pub fn draw_noise(gap: f64, noise: &NoiseSpec, rng: &mut Rng, step: usize) -> Result<NoiseDraw> {
    let mut e_d = normal(rng, noise.sigma_d);
    let mut tries = 0;
    while gap + e_d <= GAP_FLOOR {
        if tries == GAP_REDRAWS {
            return Err(Error::GapCollapse { step, gap: gap + e_d });
        }
        e_d = normal(rng, noise.sigma_d);
        tries += 1;
    }
    let e_dv = normal(rng, noise.sigma_dv);
    let e_acc = normal(rng, noise.sigma_acc);
    Ok(NoiseDraw { e_d, e_dv, e_acc })
}

/// One Euler–Maruyama step of the perturbed IDM against a constant-speed leader.
pub fn step_idm(
    state: &SimState,
    veh: &VehicleSpec,
    noise: &NoiseSpec,
    dt: f64,
    step: usize,
    rng: &mut Rng,
) -> Result<StepOutput> {
    check(dt > 0.0, "dt", "must be > 0")?;
    let draw = draw_noise(state.gap(), noise, rng, step)?;
    step_with(state, veh, dt, draw, step)
}

/// `(d0 + h0·v)·(1 − (v/v0)^ξ)^(−1/2)`.
pub fn equilibrium_gap(veh: &VehicleSpec, v: f64) -> Result<f64> {
    if !(v >= 0.0) || v >= veh.v0 {
        return Err(Error::Domain(format!("equilibrium gap needs 0 <= v < v0, got v = {v}")));
    }
    Ok((veh.d0 + veh.h0 * v) / (1.0 - (v / veh.v0).powf(veh.xi)).sqrt())
}

fn check_run(veh: &VehicleSpec, noise: &NoiseSpec, v_lead: f64, duration: f64, dt: f64) -> Result<usize> {
    veh.validate()?;
    noise.validate()?;
    check(dt > 0.0, "dt", "must be > 0")?;
    check(duration >= 100.0 * dt, "duration", "must cover at least 100 steps")?;
    check(v_lead > 0.0 && v_lead < veh.v0, "v_lead", "must lie in (0, v0)")?;
    Ok((duration / dt).round() as usize)
}

/// Follower behind a leader at constant `v_lead`, started at equilibrium.
pub fn simulate_pair(
    veh: &VehicleSpec,
    noise: &NoiseSpec,
    v_lead: f64,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = rng::stream(seed, 0);
    simulate_pair_rng(veh, noise, v_lead, duration, dt, seed, &mut rng)
}

pub(crate) fn simulate_pair_rng(
    veh: &VehicleSpec,
    noise: &NoiseSpec,
    v_lead: f64,
    duration: f64,
    dt: f64,
    seed: u64,
    rng: &mut Rng,
) -> Result<Trajectory> {
    let n = check_run(veh, noise, v_lead, duration, dt)?;
    let d_eq = equilibrium_gap(veh, v_lead)?;
    let mut state = SimState { x_e: 0.0, v_e: v_lead, x_lead: d_eq, v_lead, t: 0.0 };
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(Sample { t: 0.0, gap: d_eq, v_e: v_lead, accel: 0.0 });
    let mut clamp_count = 0;
    for k in 0..n {
        let out = step_idm(&state, veh, noise, dt, k, rng)?;
        clamp_count += out.clamped as usize;
        state = out.state;
        // t from the step index keeps the spacing exact
        samples.push(Sample { t: (k + 1) as f64 * dt, gap: state.gap(), v_e: state.v_e, accel: out.accel });
    }
    Ok(Trajectory { dt, seed, samples, clamp_count })
}

/// A platoon of `n_followers` behind a constant-speed leader. All vehicles
/// update synchronously from the states at the start of the step. Returns one
/// trajectory per consecutive pair, pair 1 being directly behind the leader.
pub fn simulate_string(
    veh: &VehicleSpec,
    noise: &NoiseSpec,
    n_followers: usize,
    v_lead: f64,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    check(n_followers >= 1, "n_followers", "must be >= 1")?;
    let n = check_run(veh, noise, v_lead, duration, dt)?;
    let d_eq = equilibrium_gap(veh, v_lead)?;
    let mut rng = rng::stream(seed, 0);
    // x[0] is the leader
    let mut x: Vec<f64> = (0..=n_followers).map(|i| -(i as f64) * d_eq).collect();
    let mut v = vec![v_lead; n_followers + 1];
    let mut trajs: Vec<Trajectory> = (0..n_followers)
        .map(|_| {
            let mut samples = Vec::with_capacity(n + 1);
            samples.push(Sample { t: 0.0, gap: d_eq, v_e: v_lead, accel: 0.0 });
            Trajectory { dt, seed, samples, clamp_count: 0 }
        })
        .collect();
    let mut acc = vec![0.0; n_followers + 1];
    for k in 0..n {
        for i in 1..=n_followers {
            let gap = x[i - 1] - x[i];
            let draw = draw_noise(gap, noise, &mut rng, k)?;
            let gap_obs = gap + draw.e_d;
            let dv_obs = v[i] - v[i - 1] + draw.e_dv;
            let a = idm_accel(veh, v[i], gap_obs, dv_obs) + draw.e_acc;
            if !a.is_finite() {
                return Err(Error::GapCollapse { step: k, gap: gap_obs });
            }
            acc[i] = a;
        }
        x[0] += v_lead * dt;
        for i in 1..=n_followers {
            let mut vi = v[i] + acc[i] * dt;
            if vi < 0.0 {
                vi = 0.0;
                trajs[i - 1].clamp_count += 1;
            }
            v[i] = vi;
            x[i] += vi * dt;
        }
        let t = (k + 1) as f64 * dt;
        for i in 1..=n_followers {
            let gap = x[i - 1] - x[i];
            if gap <= veh.l {
                return Err(Error::Collision { vehicle: i, t });
            }
            trajs[i - 1].samples.push(Sample { t, gap, v_e: v[i], accel: acc[i] });
        }
    }
    Ok(trajs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub v: f64,
    pub eta: f64,
    pub var_gap: f64,
    pub collided: bool,
    pub seed: u64,
}

/// Post-warm-up gap variance over a (v, η) grid, with `h0 = η` and `d0 = 0`.
/// Each cell pools `seeds.len()` replications; cell `i` with seed `s` uses
/// stream `i` of `s`, so the table does not depend on scheduling.
pub fn variance_sweep(
    veh: &VehicleSpec,
    noise: &NoiseSpec,
    v_grid: &[f64],
    eta_grid: &[f64],
    duration: f64,
    dt: f64,
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    check(!v_grid.is_empty(), "v_grid", "must not be empty")?;
    check(!eta_grid.is_empty(), "eta_grid", "must not be empty")?;
    check(!seeds.is_empty(), "seeds", "must not be empty")?;
    let cells: Vec<(usize, f64, f64)> = v_grid
        .iter()
        .flat_map(|&v| eta_grid.iter().map(move |&e| (v, e)))
        .enumerate()
        .map(|(i, (v, e))| (i, v, e))
        .collect();
    cells
        .par_iter()
        .map(|&(i, v, eta)| {
            let cell_veh = VehicleSpec { h0: eta, d0: 0.0, ..*veh };
            let mut pooled = Vec::new();
            let mut collided = false;
            for &seed in seeds {
                let mut rng = rng::stream(seed, i as u64);
                match simulate_pair_rng(&cell_veh, noise, v, duration, dt, seed, &mut rng) {
                    Ok(traj) => {
                        let g = traj.stationary_gaps();
                        collided |= g.iter().any(|&d| d <= veh.l);
                        pooled.push(g);
                    }
                    Err(Error::GapCollapse { .. }) => collided = true,
                    Err(e) => return Err(e),
                }
            }
            // mean of per-replication variances
            let var_gap = if pooled.is_empty() {
                f64::NAN
            } else {
                pooled.iter().map(|g| sample_var(g)).sum::<f64>() / pooled.len() as f64
            };
            Ok(SweepRow { v, eta, var_gap, collided, seed: seeds[0] })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "v,eta,var_gap,collided,seed")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", g9(r.v), g9(r.eta), g9(r.var_gap), r.collided as u8, r.seed)?;
    }
    Ok(())
}

fn sample_var(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
}

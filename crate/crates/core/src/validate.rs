//! Monte Carlo oracles for the macroscopic layer.
//!
//! [`run_semi_markov`] simulates the two-state occupancy process directly.
//! [`run_spacetime`] simulates vehicle platoons under Newell's kinematic-wave
//! car following: every follower copies its leader's trajectory shifted by
//! `δ = η − l/v` in time and `l` in space, which produces stopping and
//! restoring waves of speed `vl/(vη − l)`. A trajectory on the segment is
//! stored as a delay profile `D(u)` over travelled distance `u = L − x`, so
//! arrival at `u` happens at `t0 + u/v + D(u)`.

use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use crate::analytics::{self, Policy, RoadConfig};
use crate::error::{check, Error, Result};
use crate::extensions;
use crate::fmt::g9;
use crate::rng::{stream, GeometricSkip};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_runs: usize,
}

impl MonteCarloEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        MonteCarloEstimate { mean, std_error, n_runs: n }
    }

    /// `|mean − reference|` in units of the standard error; exact agreement
    /// with zero error counts as 0.
    pub fn z(&self, reference: f64) -> f64 {
        let d = (self.mean - reference).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

// ---------------------------------------------------------------------------
// Semi-Markov occupancy

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiMarkovConfig {
    pub p_transition: f64,
    pub sojourn_normal: f64,
    pub sojourn_abnormal: f64,
    pub horizon: f64,
    pub n_runs: usize,
    /// Capacity credited while normal.
    pub capacity_normal: f64,
    pub seed: u64,
}

impl SemiMarkovConfig {
    pub fn validate(&self) -> Result<()> {
        check((0.0..=1.0).contains(&self.p_transition), "p_transition", "must lie in [0, 1]")?;
        check(self.sojourn_normal > 0.0, "sojourn_normal", "must be positive")?;
        check(self.sojourn_abnormal > 0.0, "sojourn_abnormal", "must be positive")?;
        check(self.horizon > 0.0, "horizon", "must be positive")?;
        check(self.n_runs >= 1, "n_runs", "must be at least 1")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemiMarkovEstimate {
    pub abnormal_fraction: MonteCarloEstimate,
    pub capacity: MonteCarloEstimate,
}

fn semi_markov_run(cfg: &SemiMarkovConfig, run: usize) -> f64 {
    if cfg.p_transition == 0.0 {
        return 0.0;
    }
    let mut rng = stream(cfg.seed, run as u64);
    let geo = GeometricSkip::new(cfg.p_transition).expect("probability checked");
    let (mut t, mut abnormal) = (0.0, 0.0);
    while t < cfg.horizon {
        let steps = geo.sample(&mut rng) as f64 + 1.0;
        t += steps * cfg.sojourn_normal;
        if t >= cfg.horizon {
            break;
        }
        abnormal += cfg.sojourn_abnormal.min(cfg.horizon - t);
        t += cfg.sojourn_abnormal;
    }
    abnormal / cfg.horizon
}

/// Fraction of time spent abnormal, and the matching time-average capacity,
/// over `n_runs` independent runs starting in the normal state.
pub fn run_semi_markov(cfg: &SemiMarkovConfig) -> Result<SemiMarkovEstimate> {
    cfg.validate()?;
    let fracs: Vec<f64> = (0..cfg.n_runs).into_par_iter().map(|r| semi_markov_run(cfg, r)).collect();
    let caps: Vec<f64> = fracs.iter().map(|f| (1.0 - f) * cfg.capacity_normal).collect();
    Ok(SemiMarkovEstimate {
        abnormal_fraction: MonteCarloEstimate::from_samples(&fracs),
        capacity: MonteCarloEstimate::from_samples(&caps),
    })
}

// ---------------------------------------------------------------------------
// Space-time simulator

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceTimeEvent {
    pub x_c: f64,
    pub t_c: f64,
    pub lane: usize,
}

pub const DEFAULT_PROBES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeConfig {
    pub policy: Policy,
    pub road: RoadConfig,
    pub l: f64,
    pub sigma_o: f64,
    pub lane_change: bool,
    pub n_runs: usize,
    pub seed: u64,
    /// Overrides the per-step collision probability implied by `sigma_o`.
    pub p_override: Option<f64>,
    /// Collisions imposed on every run: the first vehicle reaching `x_c`
    /// at or after `t_c` in `lane` stops there.
    pub forced: Vec<SpaceTimeEvent>,
    /// Probe positions as fractions of `L`, measured from the exit.
    pub probes: Vec<f64>,
}

impl SpaceTimeConfig {
    pub fn new(policy: Policy, road: RoadConfig, l: f64, sigma_o: f64) -> Self {
        SpaceTimeConfig {
            policy,
            road,
            l,
            sigma_o,
            lane_change: false,
            n_runs: 1,
            seed: 0,
            p_override: None,
            forced: Vec::new(),
            probes: Vec::new(),
        }
    }

    pub fn p(&self) -> f64 {
        self.p_override.unwrap_or_else(|| analytics::collision_probability(&self.policy, self.l, self.sigma_o))
    }

    /// `(H/τ)·(L/(ηv))·p`.
    pub fn expected_collisions(&self) -> f64 {
        extensions::pair_steps(&self.policy, &self.road) * self.p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Vehicles leaving the segment in `[0, H)`, per lane.
    pub counts: Vec<usize>,
    /// Extra vehicles summed over both lanes from bypassing wrecks.
    pub bypass: f64,
    pub events: Vec<SpaceTimeEvent>,
    /// Abnormal episode durations per lane, per probe.
    pub probe_abnormal: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceTimeResult {
    /// Per-lane throughput in veh/s, including bypass when enabled.
    pub throughput: MonteCarloEstimate,
    /// Per-lane throughput without bypass, from the same runs.
    pub without_change: MonteCarloEstimate,
    /// Per-lane bypass gain in veh/s.
    pub gain: MonteCarloEstimate,
    pub expected_collisions: f64,
    #[serde(skip)]
    pub runs: Vec<RunOutcome>,
}

/// Delay profile: `D(u)` is the value of the last breakpoint strictly before
/// `u`, or `base`.
#[derive(Debug, Clone, Default)]
struct Delay {
    base: f64,
    bps: Vec<(f64, f64)>,
}

impl Delay {
    fn eval(&self, u: f64) -> f64 {
        let i = self.bps.partition_point(|&(b, _)| b < u);
        if i == 0 {
            self.base
        } else {
            self.bps[i - 1].1
        }
    }

    /// Newell follower constraint `D_leader(u + l)`.
    fn follow(&self, l: f64) -> Delay {
        Delay {
            base: self.eval(l),
            bps: self.bps.iter().filter(|&&(b, _)| b >= l).map(|&(b, d)| (b - l, d)).collect(),
        }
    }

    /// Own stop of `dur` at `u`: beyond `u` the delay is at least `D(u) + dur`.
    fn stop(&mut self, u: f64, dur: f64) {
        let floor = self.eval(u) + dur;
        self.bps.retain(|&(b, d)| b < u || d > floor);
        let at = self.bps.partition_point(|&(b, _)| b < u);
        self.bps.insert(at, (u, floor));
    }
}

struct Wreck {
    t: f64,
    u: f64,
}

struct LaneOutcome {
    count: usize,
    wrecks: Vec<Wreck>,
    probes: Vec<Vec<f64>>,
}

struct LaneSim<'a> {
    cfg: &'a SpaceTimeConfig,
    v: f64,
    eta: f64,
    length: f64,
    t_clear: f64,
    horizon: f64,
    slots: u64,
    step: f64,
}

impl LaneSim<'_> {
    fn run(&self, lane: usize, geo: Option<&GeometricSkip>, rng: &mut crate::rng::Rng) -> LaneOutcome {
        let (v, eta, len) = (self.v, self.eta, self.length);
        let warm = 2.0 * len / v + self.t_clear + 10.0 * eta;
        let first = (-warm / eta).floor() as i64;
        let last = (self.horizon / eta).ceil() as i64;
        let draw = |rng: &mut crate::rng::Rng| geo.map_or(u64::MAX, |g| g.sample(rng));
        let mut skip = draw(rng);

        let mut forced: Vec<(f64, f64)> = self
            .cfg
            .forced
            .iter()
            .filter(|e| e.lane == lane)
            .map(|e| (e.t_c, len - e.x_c))
            .collect();
        let probe_u: Vec<f64> = self.cfg.probes.iter().map(|f| len * (1.0 - f)).collect();
        let mut passes: Vec<Vec<f64>> = vec![Vec::new(); probe_u.len()];

        let mut out = LaneOutcome { count: 0, wrecks: Vec::new(), probes: Vec::new() };
        let mut prev: Option<Delay> = None;
        let mut own: Vec<(f64, Option<usize>)> = Vec::new();
        for i in first..=last {
            let t0 = i as f64 * eta;
            let mut d = prev.as_ref().map_or_else(Delay::default, |p| p.follow(self.cfg.l));

            own.clear();
            let mut pos = 0u64;
            while skip < self.slots - pos {
                let k = pos + skip;
                own.push((k as f64 * self.step, None));
                pos = k + 1;
                skip = draw(rng);
            }
            skip -= self.slots - pos;
            own.extend(forced.iter().enumerate().map(|(j, &(_, u))| (u, Some(j))));
            own.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut used = Vec::new();
            for &(u, tag) in &own {
                let t = t0 + u / v + d.eval(u);
                if let Some(j) = tag {
                    if t < forced[j].0 {
                        continue;
                    }
                    used.push(j);
                }
                d.stop(u, self.t_clear);
                out.wrecks.push(Wreck { t, u });
            }
            used.sort_unstable();
            for j in used.into_iter().rev() {
                forced.swap_remove(j);
            }

            let exit = t0 + len / v + d.eval(len);
            if (0.0..self.horizon).contains(&exit) {
                out.count += 1;
            }
            for (k, &u) in probe_u.iter().enumerate() {
                passes[k].push(t0 + u / v + d.eval(u));
            }
            prev = Some(d);
        }
        out.probes = passes
            .iter()
            .map(|ts| {
                ts.windows(2)
                    .map(|w| w[1] - w[0] - eta)
                    .filter(|&g| g > 1e-6 * eta)
                    .collect()
            })
            .collect();
        out
    }
}

/// Vehicles gained at the exit in `[0, H)` while both lanes hold a wreck at
/// least `D` apart; during such overlaps one lane's capacity keeps flowing.
fn bypass_vehicles(a: &[Wreck], b: &[Wreck], sim: &LaneSim, gap: f64) -> f64 {
    let mut total = 0.0;
    for wa in a {
        for wb in b {
            if (wa.u - wb.u).abs() < gap {
                continue;
            }
            let lo = wa.t.max(wb.t);
            let hi = (wa.t + sim.t_clear).min(wb.t + sim.t_clear);
            if hi <= lo {
                continue;
            }
            let shift = (sim.length - wa.u.max(wb.u)) / sim.v;
            let (lo, hi) = ((lo + shift).max(0.0), (hi + shift).min(sim.horizon));
            if hi > lo {
                total += (hi - lo) / sim.eta;
            }
        }
    }
    total
}

/// One run of the space-time simulator; runs are reproducible by index.
pub fn spacetime_run(cfg: &SpaceTimeConfig, run: usize) -> Result<RunOutcome> {
    check_spacetime(cfg)?;
    Ok(spacetime_run_unchecked(cfg, run))
}

fn check_spacetime(cfg: &SpaceTimeConfig) -> Result<()> {
    cfg.policy.validate()?;
    cfg.road.validate()?;
    check(cfg.n_runs >= 1, "n_runs", "must be at least 1")?;
    check((1..=2).contains(&cfg.road.n_lanes), "n_lanes", "simulator supports 1 or 2 lanes")?;
    check(cfg.policy.spacing() > cfg.l, "eta", "mean spacing must exceed vehicle length")?;
    let p = cfg.p();
    check((0.0..1.0).contains(&p), "p", "must lie in [0, 1)")?;
    for e in &cfg.forced {
        check((0.0..=cfg.road.length).contains(&e.x_c), "x_c", "must lie on the segment")?;
        check(e.lane < cfg.road.n_lanes, "lane", "must index an existing lane")?;
    }
    let n = cfg.expected_collisions();
    if n > extensions::REFUSE_COLLISIONS {
        return Err(Error::OutOfRegime(format!(
            "{n:.3} expected collisions per lane per horizon exceeds {}",
            extensions::REFUSE_COLLISIONS
        )));
    }
    Ok(())
}

fn spacetime_run_unchecked(cfg: &SpaceTimeConfig, run: usize) -> RunOutcome {
    let (v, tau) = (cfg.policy.v, cfg.road.tau);
    let step = v * tau;
    let sim = LaneSim {
        cfg,
        v,
        eta: cfg.policy.eta,
        length: cfg.road.length,
        t_clear: cfg.road.clearance_time(v),
        horizon: cfg.road.horizon,
        slots: (cfg.road.length / step).ceil() as u64,
        step,
    };
    let p = cfg.p();
    let geo = GeometricSkip::new(p);
    let lanes: Vec<LaneOutcome> = (0..cfg.road.n_lanes)
        .map(|k| {
            let mut rng = stream(cfg.seed, ((run as u64) << 4) | k as u64);
            sim.run(k, geo.as_ref(), &mut rng)
        })
        .collect();
    let bypass = if cfg.lane_change && lanes.len() == 2 {
        bypass_vehicles(&lanes[0].wrecks, &lanes[1].wrecks, &sim, cfg.road.lane_change_gap)
    } else {
        0.0
    };
    let mut events: Vec<SpaceTimeEvent> = lanes
        .iter()
        .enumerate()
        .flat_map(|(k, o)| o.wrecks.iter().map(move |w| SpaceTimeEvent { x_c: sim.length - w.u, t_c: w.t, lane: k }))
        .collect();
    events.sort_by(|a, b| a.t_c.total_cmp(&b.t_c).then(a.lane.cmp(&b.lane)));
    RunOutcome {
        counts: lanes.iter().map(|o| o.count).collect(),
        bypass,
        events,
        probe_abnormal: lanes.into_iter().map(|o| o.probes).collect(),
    }
}

/// Per-lane throughput over `n_runs` runs of one horizon each.
pub fn run_spacetime(cfg: &SpaceTimeConfig) -> Result<SpaceTimeResult> {
    check_spacetime(cfg)?;
    let runs: Vec<RunOutcome> = (0..cfg.n_runs).into_par_iter().map(|r| spacetime_run_unchecked(cfg, r)).collect();
    let (h, lanes) = (cfg.road.horizon, cfg.road.n_lanes as f64);
    let base: Vec<f64> = runs.iter().map(|o| o.counts.iter().sum::<usize>() as f64 / (lanes * h)).collect();
    let gain: Vec<f64> = runs.iter().map(|o| o.bypass / (lanes * h)).collect();
    let with: Vec<f64> = base.iter().zip(&gain).map(|(a, b)| a + b).collect();
    Ok(SpaceTimeResult {
        throughput: MonteCarloEstimate::from_samples(&with),
        without_change: MonteCarloEstimate::from_samples(&base),
        gain: MonteCarloEstimate::from_samples(&gain),
        expected_collisions: cfg.expected_collisions(),
        runs,
    })
}

pub fn write_events_csv<W: Write>(runs: &[RunOutcome], mut w: W) -> Result<()> {
    writeln!(w, "run,t_c,x_c,lane")?;
    for (r, o) in runs.iter().enumerate() {
        for e in &o.events {
            writeln!(w, "{r},{},{},{}", g9(e.t_c), g9(e.x_c), e.lane)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Extension comparison

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Baseline,
    Overlap,
    TwoLane,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::Overlap => "overlap",
            Scenario::TwoLane => "two_lane",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Scenario::Baseline),
            "overlap" => Ok(Scenario::Overlap),
            "two_lane" | "two-lane" => Ok(Scenario::TwoLane),
            _ => Err(Error::InvalidParameter { name: "scenario", reason: format!("unknown scenario `{s}`") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub scenario: Scenario,
    pub analytic: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub n_runs: usize,
    pub rel_gap: f64,
}

/// Closed-form hourly throughput against the space-time simulator.
pub fn compare_extension(
    policy: &Policy,
    road: &RoadConfig,
    l: f64,
    sigma_o: f64,
    scenario: Scenario,
    n_runs: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let lanes = if scenario == Scenario::TwoLane { 2 } else { 1 };
    let road = RoadConfig { n_lanes: lanes, ..*road };
    let analytic = match scenario {
        Scenario::Baseline => extensions::cic_one_hour(policy, &road, l, sigma_o).value,
        Scenario::Overlap => extensions::cic_overlap(policy, &road, l, sigma_o)?.value,
        Scenario::TwoLane => extensions::throughput_two_lane(policy, &road, l, sigma_o)?.value,
    };
    let cfg = SpaceTimeConfig {
        lane_change: lanes == 2,
        n_runs,
        seed,
        ..SpaceTimeConfig::new(*policy, road, l, sigma_o)
    };
    let mc = run_spacetime(&cfg)?.throughput;
    Ok(ValidationReport {
        scenario,
        analytic,
        mc_mean: mc.mean,
        mc_stderr: mc.std_error,
        n_runs,
        rel_gap: (mc.mean - analytic) / analytic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::Tct;

    fn road(length: f64, horizon: f64, t: f64) -> RoadConfig {
        RoadConfig { length, horizon, tct: Tct::Fixed { seconds: t }, ..RoadConfig::default() }
    }

    fn forced_cfg() -> SpaceTimeConfig {
        SpaceTimeConfig {
            p_override: Some(0.0),
            probes: DEFAULT_PROBES.to_vec(),
            ..SpaceTimeConfig::new(Policy::new(50.0 / 3.6, 1.5), road(5000.0, 3600.0, 2550.0), 5.0, 0.05)
        }
    }

    #[test]
    fn delay_profile_operations() {
        let mut d = Delay::default();
        d.stop(100.0, 5.0);
        assert_eq!((d.eval(100.0), d.eval(100.1)), (0.0, 5.0));
        let f = d.follow(5.0);
        assert_eq!((f.eval(95.0), f.eval(95.1)), (0.0, 5.0));
        let mut g = f.clone();
        g.stop(50.0, 5.0);
        assert_eq!((g.eval(60.0), g.eval(96.0)), (5.0, 5.0));
        g.stop(200.0, 1.0);
        assert_eq!(g.eval(201.0), 6.0);
    }

    #[test]
    fn semi_markov_limits() {
        let mut cfg = SemiMarkovConfig {
            p_transition: 0.0,
            sojourn_normal: 0.1,
            sojourn_abnormal: 2700.0,
            horizon: 1e6,
            n_runs: 4,
            capacity_normal: 0.5,
            seed: 3,
        };
        let est = run_semi_markov(&cfg).unwrap();
        assert_eq!(est.abnormal_fraction.mean, 0.0);
        assert_eq!(est.capacity.mean, 0.5);
        cfg.p_transition = 1.0;
        cfg.horizon = 1e8;
        let est = run_semi_markov(&cfg).unwrap();
        assert!((est.abnormal_fraction.mean - 2700.0 / 2700.1).abs() < 1e-3);
    }

    #[test]
    fn no_collisions_gives_full_capacity() {
        let cfg = SpaceTimeConfig { probes: Vec::new(), ..forced_cfg() };
        let r = run_spacetime(&cfg).unwrap();
        assert_eq!(r.runs[0].counts, vec![2400]);
        assert_eq!(r.throughput.mean, 1.0 / 1.5);
    }

    #[test]
    fn forced_collision_probes_see_clearance_time() {
        let mut cfg = forced_cfg();
        cfg.forced.push(SpaceTimeEvent { x_c: 2500.0, t_c: 0.0, lane: 0 });
        let o = spacetime_run(&cfg, 0).unwrap();
        assert_eq!(o.events.len(), 1);
        for eps in &o.probe_abnormal[0] {
            assert_eq!(eps.len(), 1);
            assert!((eps[0] - 2550.0).abs() <= 0.1, "{eps:?}");
        }
        assert_eq!(o.counts[0], 2400 - 1700);
    }

    #[test]
    fn overlapping_second_collision_only_shifts_flow() {
        let mut cfg = forced_cfg();
        cfg.forced.push(SpaceTimeEvent { x_c: 2500.0, t_c: 0.0, lane: 0 });
        let one = spacetime_run(&cfg, 0).unwrap().counts[0];
        cfg.forced.push(SpaceTimeEvent { x_c: 1250.0, t_c: 30.0, lane: 0 });
        let o = spacetime_run(&cfg, 0).unwrap();
        assert_eq!(o.events.len(), 2);
        assert!(o.counts[0].abs_diff(one) <= 1);
    }

    #[test]
    fn identical_seeds_reproduce_events() {
        let cfg = SpaceTimeConfig {
            p_override: Some(2e-6),
            n_runs: 3,
            seed: 11,
            ..SpaceTimeConfig::new(Policy::new(50.0 / 3.6, 1.5), road(1000.0, 600.0, 450.0), 5.0, 0.05)
        };
        let a = run_spacetime(&cfg).unwrap();
        let b = run_spacetime(&cfg).unwrap();
        assert_eq!(a.runs, b.runs);
        assert!(a.runs.iter().any(|r| !r.events.is_empty()));
    }

    #[test]
    fn refuses_far_outside_rare_events() {
        let cfg = SpaceTimeConfig {
            p_override: Some(1e-3),
            ..SpaceTimeConfig::new(Policy::new(50.0 / 3.6, 1.5), RoadConfig::default(), 5.0, 0.05)
        };
        assert!(matches!(run_spacetime(&cfg), Err(Error::OutOfRegime(_))));
    }

    #[test]
    fn baseline_report_at_zero_probability() {
        let rep = compare_extension(
            &Policy::new(50.0 / 3.6, 1.5),
            &RoadConfig::default(),
            5.0,
            0.0,
            Scenario::Baseline,
            2,
            1,
        )
        .unwrap();
        assert_eq!(rep.rel_gap, 0.0);
        assert_eq!(rep.mc_stderr, 0.0);
    }

    #[test]
    fn events_csv_layout() {
        let mut cfg = forced_cfg();
        cfg.forced.push(SpaceTimeEvent { x_c: 2500.0, t_c: 0.0, lane: 0 });
        let o = spacetime_run(&cfg, 0).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&[o], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("run,t_c,x_c,lane\n0,"));
        assert!(text.trim_end().ends_with(",2500,0"));
    }
}

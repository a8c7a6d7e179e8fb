use cic_core::analytics::{Policy, RoadConfig, Tct};
use cic_core::{extensions, kmh};
use cic_core::validate::{self, SemiMarkovConfig, SpaceTimeConfig, SpaceTimeEvent};

const TAU: f64 = 0.1;
const T_ABN: f64 = 2700.0;

fn semi_markov(p: f64, cycles: f64, n_runs: usize, seed: u64) -> (f64, validate::MonteCarloEstimate) {
    let lambda = T_ABN * p / (T_ABN * p + TAU);
    let cfg = SemiMarkovConfig {
        p_transition: p,
        sojourn_normal: TAU,
        sojourn_abnormal: T_ABN,
        horizon: cycles * (TAU / p + T_ABN),
        n_runs,
        capacity_normal: 1.0,
        seed,
    };
    (lambda, validate::run_semi_markov(&cfg).unwrap().abnormal_fraction)
}

#[test]
fn semi_markov_fraction_converges() {
    for lambda in [1e-3, 0.1, 0.5] {
        let p = lambda * TAU / (T_ABN * (1.0 - lambda));
        let (want, est) = semi_markov(p, 2000.0, 200, 11);
        println!("lambda {want:.4e}: mc {:.5e} ± {:.1e}", est.mean, est.std_error);
        assert!(est.z(want) < 4.0, "lambda {want}: {est:?}");
    }
}

#[test]
fn semi_markov_worked_example() {
    let (want, est) = semi_markov(1e-4, 2000.0, 200, 5);
    assert!((want - 0.7297).abs() < 1e-4);
    assert!(est.z(want) < 4.0, "{est:?}");
}

#[test]
fn semi_markov_certain_transition() {
    let (want, est) = semi_markov(1.0, 2000.0, 4, 1);
    assert!((want - T_ABN / (T_ABN + TAU)).abs() < 1e-15);
    assert!((est.mean - want).abs() < 1e-3);
}

fn quiet_road(length: f64, horizon: f64, t: f64) -> RoadConfig {
    RoadConfig { length, horizon, tct: Tct::Fixed { seconds: t }, ..RoadConfig::default() }
}

#[test]
fn noiseless_segment_passes_every_vehicle() {
    let pol = Policy::new(kmh(50.0), 1.5);
    let cfg = SpaceTimeConfig { n_runs: 3, ..SpaceTimeConfig::new(pol, quiet_road(5000.0, 3600.0, 2550.0), 5.0, 0.0) };
    let res = validate::run_spacetime(&cfg).unwrap();
    for run in &res.runs {
        assert!(run.events.is_empty());
        assert!((run.counts[0] as i64 - 2400).abs() <= 1);
    }
}

#[test]
fn forced_wreck_blocks_for_the_clearance_time() {
    let pol = Policy::new(kmh(50.0), 1.5);
    let mut cfg = SpaceTimeConfig::new(pol, quiet_road(5000.0, 3600.0, 2550.0), 5.0, 0.0);
    cfg.forced = vec![SpaceTimeEvent { x_c: 2500.0, t_c: 0.0, lane: 0 }];
    cfg.probes = validate::DEFAULT_PROBES.to_vec();
    let run = validate::spacetime_run(&cfg, 0).unwrap();
    assert!((run.counts[0] as i64 - 700).abs() <= 1, "{:?}", run.counts);
    for probe in &run.probe_abnormal[0] {
        assert_eq!(probe.len(), 1);
        assert!((probe[0] - 2550.0).abs() <= 0.1, "{probe:?}");
    }
}

#[test]
fn overlapping_wrecks_shift_flow() {
    let pol = Policy::new(kmh(50.0), 1.5);
    let mut cfg = SpaceTimeConfig::new(pol, quiet_road(5000.0, 3600.0, 2550.0), 5.0, 0.0);
    cfg.forced = vec![SpaceTimeEvent { x_c: 2500.0, t_c: 0.0, lane: 0 }];
    let one = validate::spacetime_run(&cfg, 0).unwrap().counts[0] as i64;
    cfg.forced.push(SpaceTimeEvent { x_c: 1250.0, t_c: 30.0, lane: 0 });
    let two = validate::spacetime_run(&cfg, 0).unwrap().counts[0] as i64;
    assert!((one - two).abs() <= 1, "{one} vs {two}");
}

#[test]
fn two_lane_change_never_loses_throughput() {
    let pol = Policy::new(kmh(50.0), 1.5);
    let road = RoadConfig { n_lanes: 2, lane_change_gap: 10.0, ..quiet_road(1000.0, 600.0, 450.0) };
    let cfg = SpaceTimeConfig {
        lane_change: true,
        n_runs: 2000,
        seed: 3,
        p_override: Some(0.3 / extensions::pair_steps(&pol, &road)),
        ..SpaceTimeConfig::new(pol, road, 5.0, 0.05)
    };
    let res = validate::run_spacetime(&cfg).unwrap();
    assert!(res.gain.mean > 0.0);
    assert!(res.runs.iter().all(|r| r.bypass >= 0.0));
    assert!(res.throughput.mean >= res.without_change.mean);
}

#[test]
fn refuses_runaway_collision_counts() {
    let pol = Policy::new(kmh(50.0), 1.0);
    let cfg = SpaceTimeConfig { p_override: Some(0.5), ..SpaceTimeConfig::new(pol, RoadConfig::default(), 5.0, 0.05) };
    assert!(validate::run_spacetime(&cfg).is_err());
}

#[test]
fn far_tail_probability_runs_collision_free() {
    let pol = Policy::new(kmh(50.0), 1.5);
    let road = RoadConfig { n_lanes: 2, ..RoadConfig::default() };
    let cfg = SpaceTimeConfig { lane_change: true, n_runs: 4, seed: 9, ..SpaceTimeConfig::new(pol, road, 5.0, 0.05) };
    assert!(cfg.p() < 1e-70);
    let res = validate::run_spacetime(&cfg).unwrap();
    assert!(res.runs.iter().all(|r| r.events.is_empty() && r.bypass == 0.0));
    assert!((res.without_change.mean - 1.0 / 1.5).abs() < 1.0 / 3600.0);
}

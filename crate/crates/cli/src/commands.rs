use cic_core::analytics::{self, Policy, RoadConfig, Tct};
use cic_core::extensions;
use cic_core::ingest::{self, FilterMode, FilterSpec};
use cic_core::optimize::{self, OptimizationResult};
use cic_core::simcore::{self, NoiseSpec, VehicleSpec};
use cic_core::stats::{self, FitReport};
use cic_core::validate::{self, Scenario, SpaceTimeConfig};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::output::{to_json, OutDir};
use crate::units::TctArg;
use crate::*;

type Out = Result<String, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: &Cli) -> Out {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads: must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Table1(a) => table1(cli, a),
        Command::SweepVariance(a) => sweep(cli, a),
        Command::Capacity(a) => capacity(cli, a),
        Command::Optimize(a) => optimize_cmd(cli, a),
        Command::Validate(a) => validate_cmd(cli, a),
        Command::Ingest(a) => ingest_cmd(cli, a),
    }
}

fn summary(value: serde_json::Value, out: &OutDir) -> Out {
    let files: Vec<String> = out.written.iter().map(|p| p.display().to_string()).collect();
    let mut v = value;
    v["files"] = json!(files);
    to_json(&v)
}

fn vehicle(a: &VehicleArgs) -> VehicleSpec {
    VehicleSpec { a: a.a, b: a.b, v0: a.v0.0, xi: a.xi, d0: a.d0, h0: a.h0, l: a.l }
}

fn noise(a: &NoiseArgs) -> NoiseSpec {
    NoiseSpec::new(a.sigma_d, a.sigma_dv, a.sigma_acc)
}

fn road(a: &RoadArgs) -> Result<RoadConfig, CliError> {
    let tct = match a.tct {
        TctArg::Linear => Tct::linear_default(),
        TctArg::Fixed(seconds) => Tct::Fixed { seconds },
    };
    let r = RoadConfig {
        length: a.length,
        tau: a.tau,
        tct,
        n_lanes: a.lanes,
        lane_change_gap: a.lane_change_gap,
        horizon: a.horizon,
    };
    r.validate()?;
    if !(a.l > 0.0) {
        return Err(usage("--l: must be > 0"));
    }
    if !(a.sigma_o >= 0.0) {
        return Err(usage("--sigma-o: must be >= 0"));
    }
    Ok(r)
}

fn linspace(lo: f64, hi: f64, n: usize, flag: &str) -> Result<Vec<f64>, CliError> {
    if n == 0 || !(hi >= lo) {
        return Err(usage(format!("{flag}: needs at least one point and min <= max")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect())
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Out {
    let veh = vehicle(&a.vehicle);
    let traj = simcore::simulate_pair(&veh, &noise(&a.noise), a.v_lead.0, a.duration, a.dt, cli.seed)?;
    let (hist, expected, fit) = stats::gaussian_goodness(&traj.stationary_gaps(), a.bins)?;
    let mut out = OutDir::new(&cli.out)?;
    out.write("trajectory.csv", |w| traj.write_csv(w).map_err(CliError::from))?;
    out.write("histogram.csv", |w| hist.write_csv(&expected, w).map_err(CliError::from))?;
    out.json("fit.json", &fit)?;
    summary(json!({ "fit": fit, "clamp_count": traj.clamp_count }), &out)
}

#[derive(Serialize)]
struct Table1Row {
    sigma_d: f64,
    sigma_dv: f64,
    sigma_acc: f64,
    nrmse: f64,
    mu: f64,
    var: f64,
    n: usize,
}

fn table1(cli: &Cli, a: &Table1Args) -> Out {
    if a.sigma_set.is_empty() || a.sigma_set.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(usage("--sigma-set: needs finite values >= 0"));
    }
    let levels: Vec<f64> = a.sigma_set.iter().map(|&s| if a.std { s } else { s.sqrt() }).collect();
    let mut cells = Vec::new();
    for &acc in &levels {
        for &d in &levels {
            for &dv in &levels {
                cells.push((d, dv, acc));
            }
        }
    }
    let veh = VehicleSpec::default();
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(d, dv, acc))| {
            let tr = simcore::simulate_pair(&veh, &NoiseSpec::new(d, dv, acc), a.v_lead.0, a.duration, a.dt, cli.seed + i as u64)?;
            let (_, _, f): (_, _, FitReport) = stats::gaussian_goodness(&tr.stationary_gaps(), a.bins)?;
            Ok(Table1Row { sigma_d: d, sigma_dv: dv, sigma_acc: acc, nrmse: f.nrmse, mu: f.mu, var: f.var, n: f.n })
        })
        .collect::<cic_core::Result<Vec<_>>>()?;
    let worst = rows.iter().map(|r| r.nrmse).fold(0.0, f64::max);
    let mut out = OutDir::new(&cli.out)?;
    out.table("table1", cli.format, &rows, |w| {
        writeln!(w, "sigma_d,sigma_dv,sigma_acc,nrmse,mu,var,n")?;
        for r in &rows {
            use cic_core::fmt::g9;
            writeln!(w, "{},{},{},{},{},{},{}", g9(r.sigma_d), g9(r.sigma_dv), g9(r.sigma_acc), g9(r.nrmse), g9(r.mu), g9(r.var), r.n)?;
        }
        Ok(())
    })?;
    summary(json!({ "cells": rows.len(), "worst_nrmse": worst }), &out)
}

fn sweep(cli: &Cli, a: &SweepArgs) -> Out {
    let vg = linspace(a.v_min.0, a.v_max.0, a.v_steps, "--v-steps")?;
    let eg = linspace(a.eta_min, a.eta_max, a.eta_steps, "--eta-steps")?;
    if a.replications == 0 {
        return Err(usage("--replications: must be >= 1"));
    }
    let seeds: Vec<u64> = (0..a.replications).map(|k| cli.seed + k).collect();
    let rows = simcore::variance_sweep(&VehicleSpec::default(), &noise(&a.noise), &vg, &eg, a.duration, a.dt, &seeds)?;
    let ok: Vec<&simcore::SweepRow> = rows.iter().filter(|r| r.var_gap.is_finite()).collect();
    let v: Vec<f64> = ok.iter().map(|r| r.v).collect();
    let e: Vec<f64> = ok.iter().map(|r| r.eta).collect();
    let y: Vec<f64> = ok.iter().map(|r| r.var_gap).collect();
    let forms = stats::fit_forms(&v, &e, &y)?;
    let best = forms.iter().max_by(|x, y| x.r2.total_cmp(&y.r2)).map(|f| f.form);
    let mut out = OutDir::new(&cli.out)?;
    out.table("sweep", cli.format, &rows, |w| simcore::write_sweep_csv(&rows, w))?;
    out.table("forms", cli.format, &forms, |w| {
        writeln!(w, "form,r2,r2_no_intercept")?;
        for f in &forms {
            writeln!(w, "{},{},{}", f.form, cic_core::fmt::g9(f.r2), cic_core::fmt::g9(f.r2_no_intercept))?;
        }
        Ok(())
    })?;
    summary(json!({ "cells": rows.len(), "fitted_cells": ok.len(), "best_form": best }), &out)
}

fn capacity(cli: &Cli, a: &CapacityArgs) -> Out {
    let r = road(&a.road)?;
    let mut out = OutDir::new(&cli.out)?;
    if a.grid {
        let vg = linspace(a.v_min.0, a.v_max.0, a.v_steps, "--v-steps")?;
        let eg = linspace(a.eta_min, a.eta_max, a.eta_steps, "--eta-steps")?;
        let rows = analytics::cic_surface(&vg, &eg, &r, a.road.l, a.road.sigma_o)?;
        let best = rows.iter().max_by(|x, y| x.s.total_cmp(&y.s)).copied();
        out.table("surface", cli.format, &rows, |w| analytics::write_surface_csv(&rows, w))?;
        summary(json!({ "cells": rows.len(), "max": best }), &out)
    } else {
        let rep = analytics::cic(&Policy::new(a.v.0, a.eta), &r, a.road.l, a.road.sigma_o)?;
        out.json("capacity.json", &rep)?;
        summary(serde_json::to_value(rep).map_err(|e| CliError::Runtime(e.to_string()))?, &out)
    }
}

fn optimize_cmd(cli: &Cli, a: &OptimizeArgs) -> Out {
    let r = road(&a.road)?;
    let (res, column): (OptimizationResult, &str) = match a.objective {
        Objective::Capacity => {
            let p_hat = a.p_hat.ok_or_else(|| usage("--p-hat is required for --objective capacity"))?;
            let res = optimize::maximize_capacity(a.v_min.0, a.v_max.0, p_hat, &r, a.road.l, a.road.sigma_o, a.n_grid)?;
            (res, "eta_dagger")
        }
        Objective::Safety => {
            let s_hat = a.s_hat.ok_or_else(|| usage("--s-hat is required for --objective safety"))?;
            let res = optimize::minimize_collision(a.v_min.0, a.v_max.0, s_hat.0, &r, a.road.l, a.road.sigma_o, a.n_grid)?;
            (res, "eta_r")
        }
    };
    let mut out = OutDir::new(&cli.out)?;
    out.json("result.json", &res)?;
    out.table("curve", cli.format, &res.curve, |w| optimize::write_curve_csv(&res.curve, column, w))?;
    summary(serde_json::to_value(&res).map_err(|e| CliError::Runtime(e.to_string()))?, &out)
}

fn validate_cmd(cli: &Cli, a: &ValidateArgs) -> Out {
    let r = road(&a.road)?;
    let scenario = match a.scenario {
        ScenarioArg::Baseline => Scenario::Baseline,
        ScenarioArg::Overlap => Scenario::Overlap,
        ScenarioArg::TwoLane => Scenario::TwoLane,
    };
    if a.runs == 0 {
        return Err(usage("--runs: must be >= 1"));
    }
    let pol = Policy::new(a.v.0, a.eta);
    let (l, sigma) = (a.road.l, a.road.sigma_o);
    let report = validate::compare_extension(&pol, &r, l, sigma, scenario, a.runs, cli.seed)?;
    let etas = linspace(a.eta_min, a.eta_max, a.eta_steps, "--eta-steps")?;
    let curve = etas
        .iter()
        .map(|&eta| extensions::throughput_report(&Policy::new(a.v.0, eta), &r, l, sigma))
        .collect::<cic_core::Result<Vec<_>>>()?;
    let mut out = OutDir::new(&cli.out)?;
    out.json("validation.json", &report)?;
    out.table("comparison", cli.format, &curve, |w| extensions::write_comparison_csv(&curve, w))?;
    if a.events {
        let lanes = if scenario == Scenario::TwoLane { 2 } else { 1 };
        let cfg = SpaceTimeConfig {
            lane_change: lanes == 2,
            n_runs: a.runs,
            seed: cli.seed,
            ..SpaceTimeConfig::new(pol, RoadConfig { n_lanes: lanes, ..r }, l, sigma)
        };
        let res = validate::run_spacetime(&cfg)?;
        out.write("events.csv", |w| validate::write_events_csv(&res.runs, w).map_err(CliError::from))?;
    }
    summary(serde_json::to_value(&report).map_err(|e| CliError::Runtime(e.to_string()))?, &out)
}

fn ingest_cmd(cli: &Cli, a: &IngestArgs) -> Out {
    if !a.input.exists() {
        return Err(usage(format!("--input: {} does not exist", a.input.display())));
    }
    let loaded = ingest::load_records(&a.input)?;
    let spec = FilterSpec { v_lead_target: a.v_lead_target.0, v_lead_tol: a.v_lead_tol.0, dv_max: a.dv_max.0 };
    let mode = match a.mode {
        ModeArg::Sample => FilterMode::Sample,
        ModeArg::Strict => FilterMode::Strict,
    };
    let (kept, filter) = ingest::filter_stable(&loaded.records, &spec, mode)?;
    let norm = ingest::normalize_gaps(&kept, a.min_samples);
    let mut out = OutDir::new(&cli.out)?;
    let fit = if norm.samples.len() >= 2 {
        let (hist, expected, fit) = stats::gaussian_goodness(&norm.samples, a.bins)?;
        out.write("histogram.csv", |w| hist.write_csv(&expected, w).map_err(CliError::from))?;
        Some(fit)
    } else {
        None
    };
    let body = json!({
        "filter": filter,
        "rejected_on_load": loaded.rejected,
        "cases_normalized": norm.cases_used,
        "dropped_on_normalize": norm.dropped,
        "fit": fit,
    });
    out.json("summary.json", &body)?;
    summary(body, &out)
}

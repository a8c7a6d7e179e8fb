//! `cic`: experiments on collision-inclusive capacity of homogeneous
//! autonomous traffic.

mod commands;
mod output;
mod units;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use output::Format;
use units::{Flow, Speed, TctArg};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<cic_core::Error> for CliError {
    fn from(e: cic_core::Error) -> Self {
        use cic_core::Error as E;
        match e {
            E::InvalidParameter { name, reason } => CliError::Usage(format!("--{}: {reason}", name.replace('_', "-"))),
            E::Parse { .. } | E::Domain(_) | E::Unsupported(_) | E::OutOfRegime(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "cic", version, about = "Collision-inclusive capacity experiments for autonomous traffic")]
pub struct Cli {
    /// Base seed; every subcommand is deterministic given its arguments and this seed.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Follower behind a constant-speed leader: trajectory, gap histogram and Gaussian fit.
    Simulate(SimulateArgs),
    /// Gaussian-fit NRMSE over every combination of noise levels.
    Table1(Table1Args),
    /// Gap variance over a speed/headway grid and the fit of each scaling form.
    SweepVariance(SweepArgs),
    /// Capacity report at one policy, or the surface over a grid.
    Capacity(CapacityArgs),
    /// Optimal speed and headway for capacity or for safety.
    Optimize(OptimizeArgs),
    /// Closed-form throughput against the space-time simulator.
    Validate(ValidateArgs),
    /// Filter and normalize recorded car-following data, then fit a Gaussian.
    Ingest(IngestArgs),
}

#[derive(Args, Debug, Clone)]
pub struct VehicleArgs {
    /// Maximum acceleration (m/s²).
    #[arg(long, default_value_t = 2.0)]
    pub a: f64,
    /// Comfortable deceleration (m/s²).
    #[arg(long, default_value_t = 2.0)]
    pub b: f64,
    /// Desired speed.
    #[arg(long, default_value = "120kmh")]
    pub v0: Speed,
    #[arg(long, default_value_t = 4.0)]
    pub xi: f64,
    /// Standstill gap (m).
    #[arg(long, default_value_t = 0.0)]
    pub d0: f64,
    /// Desired time headway (s).
    #[arg(long, default_value_t = 1.5)]
    pub h0: f64,
    /// Vehicle length (m).
    #[arg(long, default_value_t = 5.0)]
    pub l: f64,
}

#[derive(Args, Debug, Clone)]
pub struct NoiseArgs {
    /// Standard deviation of the gap observation error (m).
    #[arg(long, default_value_t = 1.0)]
    pub sigma_d: f64,
    /// Standard deviation of the closing-speed observation error (m/s).
    #[arg(long, default_value_t = 1.0)]
    pub sigma_dv: f64,
    /// Standard deviation of the acceleration error (m/s²).
    #[arg(long, default_value_t = 1.0)]
    pub sigma_acc: f64,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long, default_value = "50kmh")]
    pub v_lead: Speed,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub vehicle: VehicleArgs,
    /// Simulated time (s).
    #[arg(long, default_value_t = 3600.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
}

#[derive(Args, Debug, Clone)]
pub struct Table1Args {
    /// Noise levels applied to each channel, as variances.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1")]
    pub sigma_set: Vec<f64>,
    /// Read `--sigma-set` as standard deviations instead.
    #[arg(long)]
    pub std: bool,
    #[arg(long, default_value = "50kmh")]
    pub v_lead: Speed,
    #[arg(long, default_value_t = 3600.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long, default_value = "20kmh")]
    pub v_min: Speed,
    #[arg(long, default_value = "100kmh")]
    pub v_max: Speed,
    #[arg(long, default_value_t = 9)]
    pub v_steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub eta_min: f64,
    #[arg(long, default_value_t = 5.0)]
    pub eta_max: f64,
    #[arg(long, default_value_t = 9)]
    pub eta_steps: usize,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, default_value_t = 3600.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    /// Replications per cell, seeded `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 3)]
    pub replications: u64,
}

#[derive(Args, Debug, Clone)]
pub struct RoadArgs {
    /// Segment length (m).
    #[arg(long, default_value_t = 5000.0)]
    pub length: f64,
    /// Operational time step (s).
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    /// Clearance time: `linear` or `fixed:SECONDS`.
    #[arg(long, default_value = "linear")]
    pub tct: TctArg,
    #[arg(long, default_value_t = 1)]
    pub lanes: usize,
    /// Minimum distance between two wrecks that still lets traffic change lanes (m).
    #[arg(long, default_value_t = 50.0)]
    pub lane_change_gap: f64,
    /// Study horizon (s).
    #[arg(long, default_value_t = 3600.0)]
    pub horizon: f64,
    /// Vehicle length (m).
    #[arg(long, default_value_t = 5.0)]
    pub l: f64,
    /// Spacing noise intensity (m per m/s per √s).
    #[arg(long, default_value_t = 0.05)]
    pub sigma_o: f64,
}

#[derive(Args, Debug, Clone)]
pub struct CapacityArgs {
    #[arg(long, default_value = "50kmh")]
    pub v: Speed,
    #[arg(long, default_value_t = 1.5)]
    pub eta: f64,
    /// Emit the surface over a speed/headway grid instead of one report.
    #[arg(long)]
    pub grid: bool,
    #[arg(long, default_value = "20kmh")]
    pub v_min: Speed,
    #[arg(long, default_value = "100kmh")]
    pub v_max: Speed,
    #[arg(long, default_value_t = 81)]
    pub v_steps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub eta_min: f64,
    #[arg(long, default_value_t = 5.0)]
    pub eta_max: f64,
    #[arg(long, default_value_t = 91)]
    pub eta_steps: usize,
    #[command(flatten)]
    pub road: RoadArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Objective {
    Capacity,
    Safety,
}

#[derive(Args, Debug, Clone)]
pub struct OptimizeArgs {
    #[arg(long, value_enum)]
    pub objective: Objective,
    /// Collision probability cap for the capacity objective.
    #[arg(long)]
    pub p_hat: Option<f64>,
    /// Capacity floor for the safety objective, e.g. `1500vph`.
    #[arg(long)]
    pub s_hat: Option<Flow>,
    #[arg(long, default_value = "20kmh")]
    pub v_min: Speed,
    #[arg(long, default_value = "100kmh")]
    pub v_max: Speed,
    /// Speeds on the reported curve.
    #[arg(long, default_value_t = 81)]
    pub n_grid: usize,
    #[command(flatten)]
    pub road: RoadArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScenarioArg {
    Baseline,
    Overlap,
    #[value(name = "two-lane", alias = "two_lane")]
    TwoLane,
}

#[derive(Args, Debug, Clone)]
pub struct ValidateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
    #[arg(long, default_value = "50kmh")]
    pub v: Speed,
    #[arg(long, default_value_t = 1.5)]
    pub eta: f64,
    /// Also write the collision event log.
    #[arg(long)]
    pub events: bool,
    /// Headway range of the analytic comparison curve.
    #[arg(long, default_value_t = 1.5)]
    pub eta_min: f64,
    #[arg(long, default_value_t = 5.0)]
    pub eta_max: f64,
    #[arg(long, default_value_t = 71)]
    pub eta_steps: usize,
    #[command(flatten)]
    pub road: RoadArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    /// Drop only samples whose speed difference is too large.
    Sample,
    /// Drop any case containing such a sample.
    Strict,
}

#[derive(Args, Debug, Clone)]
pub struct IngestArgs {
    /// Records CSV with columns case_id,t,gap,v_lead,v_follow,a_follow.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Sample)]
    pub mode: ModeArg,
    #[arg(long, default_value = "20.2ms")]
    pub v_lead_target: Speed,
    #[arg(long, default_value = "0.2ms")]
    pub v_lead_tol: Speed,
    #[arg(long, default_value = "1ms")]
    pub dv_max: Speed,
    /// Cases with fewer retained samples are not normalized.
    #[arg(long, default_value_t = 10)]
    pub min_samples: usize,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

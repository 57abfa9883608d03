//! Command-line surface.
//!
//! Exit status: 0 on success, 2 on usage errors, 1 on runtime errors. A
//! runtime error prints exactly one line `CODE: message` to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::config::ValidatedConfig;
use crate::error::{ConfigError, ModelError, OptError, SimError, SweepError, TraceError};
use crate::io::sweep::{
    run_sweep, trace_run_sweep, ChannelKind, ChannelSpec, Sweep, SweepReport, SweepSpec, SystemKind, TraceRunOptions,
};
use crate::io::trace::{load_trace, shipped_trace};
use crate::optimizer::{
    optimize_bcc, optimize_delay_under_energy, optimize_rf, BccOptProblem, DelayOptProblem, OptResult, ParamColumns,
    RfOptProblem,
};
use crate::protocol::{bcc_input, estimate_rf, rf_input};
use crate::rf_model::solve_rf;
use crate::bcc_model::solve_bcc;
use crate::selfcheck;
use crate::sim::METRICS_HEADER;

#[derive(Debug, Parser)]
#[command(name = "bodynet", version, about = "Dual RF/BCC body-area network models, optimizer and simulator")]
pub struct Cli {
    /// Network configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Random seed (first seed for sweeps).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Write reports into this directory instead of stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate an analytic model.
    Model {
        #[command(subcommand)]
        which: ModelCmd,
    },
    /// Run a parameter optimization.
    Optimize {
        #[command(subcommand)]
        which: OptimizeCmd,
    },
    /// One simulation run.
    Simulate(SimulateArgs),
    /// Run a sweep spec.
    Sweep {
        spec: PathBuf,
    },
    /// Compare the proposed system, the RF-relay baseline and each single
    /// link on an RSSI trace.
    TraceRun(TraceRunArgs),
    /// Run the invariant checks.
    Selfcheck,
}

#[derive(Debug, Subcommand)]
pub enum ModelCmd {
    Rf {
        /// Frame-failure probability of every relay link.
        #[arg(long, default_value_t = 0.0)]
        pi_e: f64,
    },
    Bcc,
}

#[derive(Debug, Subcommand)]
pub enum OptimizeCmd {
    /// Minimize RF energy per packet subject to a loss bound.
    Rf {
        #[arg(long, default_value_t = 0.0)]
        pi_e: f64,
        #[arg(long, default_value_t = 0.15)]
        plr_max: f64,
    },
    /// Minimize BCC energy subject to an end-to-end delay bound.
    Bcc {
        /// Delay bound, s.
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 0.0)]
        pi_e: f64,
    },
    /// Minimize delay subject to an energy budget per packet.
    Delay {
        /// Energy budget, J.
        #[arg(long)]
        budget: f64,
        #[arg(long, default_value_t = 0.0)]
        pi_e: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    Proposed,
    Baseline,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Scenario1,
    Scenario2,
    Fixed,
    Rayleigh,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SystemArg::Proposed)]
    pub system: SystemArg,
    #[arg(long, value_enum, default_value_t = ChannelArg::Scenario1)]
    pub channel: ChannelArg,
    /// Gateway links replay this RSSI trace instead.
    #[arg(long, conflicts_with = "channel")]
    pub trace: Option<PathBuf>,
    /// Mean gateway SNR of line-of-sight nodes, dB.
    #[arg(long, default_value_t = 20.0)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pi_e: f64,
    /// Packets per node.
    #[arg(long, conflicts_with = "duration")]
    pub packets: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Tune the BCC duty cycle for this delay bound, s.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Charge radio power-ups and protocol computation.
    #[arg(long)]
    pub extended: bool,
    /// Write the message dump to this file.
    #[arg(long, value_name = "PATH")]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceRunArgs {
    /// Trace CSV; the shipped torso/pocket trace when omitted.
    pub trace: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub m_r: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    pub est_period: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Packets/s per node.
    #[arg(long, default_value_t = 10.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 10.0)]
    pub neighbor_snr_db: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long)]
    pub extended: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{failed} of {total} runs failed")]
    RunsFailed { failed: usize, total: usize },
    #[error("{0} checks failed")]
    Selfcheck(usize),
}

fn model_code(e: &ModelError) -> &'static str {
    match e {
        ModelError::UnstableSystem { .. } => "UNSTABLE",
        ModelError::Solver(_) => "NO_CONVERGENCE",
        ModelError::NegativeDuration { .. } | ModelError::InvalidDutyCycle { .. } | ModelError::InvalidInput(_) => {
            "MODEL_INPUT"
        }
    }
}

impl CliError {
    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "CONFIG",
            CliError::Model(e) => model_code(e),
            CliError::Opt(OptError::Infeasible { .. }) => "INFEASIBLE",
            CliError::Opt(_) => "OPT_INPUT",
            CliError::Trace(_) => "TRACE",
            CliError::Sim(SimError::Model(e)) => model_code(e),
            CliError::Sim(SimError::Opt(OptError::Infeasible { .. })) => "INFEASIBLE",
            CliError::Sim(SimError::Config(_)) => "CONFIG",
            CliError::Sim(_) => "SCENARIO",
            CliError::Sweep(SweepError::TooManyRuns { .. }) => "TOO_MANY_RUNS",
            CliError::Sweep(SweepError::Config(_)) => "CONFIG",
            CliError::Sweep(SweepError::Trace(_)) => "TRACE",
            CliError::Sweep(SweepError::Io(_)) | CliError::Io(_) | CliError::Csv(_) => "IO",
            CliError::Sweep(_) => "SWEEP_SPEC",
            CliError::RunsFailed { .. } => "RUNS_FAILED",
            CliError::Selfcheck(_) => "SELFCHECK_FAILED",
        }
    }
}

/// Parse `args` and run; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("{}: {msg}", e.code());
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<ValidatedConfig, CliError> {
    Ok(match &cli.config {
        Some(p) => ValidatedConfig::load(p)?,
        None => ValidatedConfig::default(),
    })
}

/// Write `text` to `name` under `--out`, or to `out` when no directory was given.
fn emit(cli: &Cli, out: &mut dyn Write, name: &str, text: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(name);
            std::fs::write(&path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn serialize_row<T: Serialize>(row: &T) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(row)?;
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

fn opt_best<P: ParamColumns>(r: &OptResult<P>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = P::header();
    header.extend(["objective", "feasible_count", "evaluated_count"]);
    w.write_record(&header)?;
    let mut row = r.best_params.values();
    row.extend([
        format!("{:e}", r.best_objective),
        r.feasible_count.to_string(),
        r.evaluated_count.to_string(),
    ]);
    w.write_record(&row)?;
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

fn opt_table<P: ParamColumns>(r: &OptResult<P>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    r.write_table(&mut buf)?;
    Ok(String::from_utf8(buf).expect("utf-8"))
}

fn emit_opt<P: ParamColumns>(cli: &Cli, out: &mut dyn Write, r: &OptResult<P>) -> Result<(), CliError> {
    emit(cli, out, "best.csv", &opt_best(r)?)?;
    if cli.out.is_some() {
        emit(cli, out, "candidates.csv", &opt_table(r)?)?;
    }
    Ok(())
}

fn emit_report(cli: &Cli, out: &mut dyn Write, report: &SweepReport) -> Result<(), CliError> {
    match &cli.out {
        Some(dir) => {
            for p in report.write(dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => out.write_all(report.aggregate_csv().as_bytes())?,
    }
    if !report.failures.is_empty() {
        eprint!("{}", report.failure_summary());
        return Err(CliError::RunsFailed {
            failed: report.failures.len(),
            total: report.failures.len() + report.rows.len(),
        });
    }
    Ok(())
}

fn rf_delay(cfg: &ValidatedConfig, pi_e: f64) -> f64 {
    estimate_rf(cfg, pi_e, 1.0).map(|e| e.mean_delay).unwrap_or(0.0)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Model { which } => {
            let cfg = load_config(cli)?;
            let text = match which {
                ModelCmd::Rf { pi_e } => serialize_row(&solve_rf(&rf_input(&cfg, *pi_e))?)?,
                ModelCmd::Bcc => serialize_row(&solve_bcc(&bcc_input(&cfg))?)?,
            };
            emit(cli, out, "model.csv", &text)
        }
        Command::Optimize { which } => {
            let cfg = load_config(cli)?;
            match which {
                OptimizeCmd::Rf { pi_e, plr_max } => {
                    let mut p = RfOptProblem::new(rf_input(&cfg, *pi_e), 0);
                    p.plr_max = *plr_max;
                    emit_opt(cli, out, &optimize_rf(&p)?)
                }
                OptimizeCmd::Bcc { tau, pi_e } => {
                    let p = BccOptProblem::new(bcc_input(&cfg), rf_delay(&cfg, *pi_e), *tau);
                    emit_opt(cli, out, &optimize_bcc(&p)?)
                }
                OptimizeCmd::Delay { budget, pi_e } => {
                    let p = DelayOptProblem {
                        rf: RfOptProblem::new(rf_input(&cfg, *pi_e), 0),
                        bcc: BccOptProblem::new(bcc_input(&cfg), 0.0, f64::INFINITY),
                        budget: *budget,
                    };
                    emit_opt(cli, out, &optimize_delay_under_energy(&p)?)
                }
            }
        }
        Command::Simulate(args) => simulate(cli, args, out),
        Command::Sweep { spec } => {
            let mut sweep = Sweep::load(spec, cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                sweep.spec.first_seed = s;
            }
            emit_report(cli, out, &run_sweep(&sweep))
        }
        Command::TraceRun(args) => {
            let trace = match &args.trace {
                Some(p) => load_trace(p)?,
                None => shipped_trace(),
            };
            let opts = TraceRunOptions {
                m_r: args.m_r.clone(),
                est_period: args.est_period.clone(),
                seeds: args.seeds,
                first_seed: cli.seed.unwrap_or(0),
                rate: args.rate,
                neighbor_snr_db: args.neighbor_snr_db,
                tau: Some(args.tau),
                extended_accounting: args.extended,
            };
            let sweep = trace_run_sweep(&load_config(cli)?, Arc::new(trace), &opts)?;
            emit_report(cli, out, &run_sweep(&sweep))
        }
        Command::Selfcheck => {
            let checks = selfcheck::run_all();
            let mut text = String::new();
            for c in &checks {
                text.push_str(&c.line());
                text.push('\n');
            }
            emit(cli, out, "selfcheck.txt", &text)?;
            match checks.iter().filter(|c| !c.passed).count() {
                0 => Ok(()),
                n => Err(CliError::Selfcheck(n)),
            }
        }
    }
}

fn simulate(cli: &Cli, args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let trace = match &args.trace {
        Some(p) => Some(Arc::new(load_trace(p)?)),
        None => None,
    };
    let kind = match (&trace, args.channel) {
        (Some(_), _) => ChannelKind::Trace,
        (None, ChannelArg::Scenario1) => ChannelKind::Scenario1,
        (None, ChannelArg::Scenario2) => ChannelKind::Scenario2,
        (None, ChannelArg::Fixed) => ChannelKind::Fixed,
        (None, ChannelArg::Rayleigh) => ChannelKind::Rayleigh,
    };
    let mut cfg = load_config(cli)?;
    if let Some(t) = &trace {
        if t.n_nodes() != cfg.network.n_nodes {
            let rate = cfg.network.per_node_rate[0];
            cfg = cfg.with_network(t.n_nodes(), cfg.network.n_relays.min(t.n_nodes()), rate);
        }
    }
    let system = match args.system {
        SystemArg::Proposed => SystemKind::Proposed,
        SystemArg::Baseline => SystemKind::Baseline,
        SystemArg::Direct => SystemKind::Direct,
    };
    let spec = SweepSpec {
        base_config: None,
        seeds: 1,
        first_seed: 0,
        systems: vec![system.clone()],
        channel: ChannelSpec {
            kind,
            snr_db: args.snr_db,
            pi_e: args.pi_e,
            ..ChannelSpec::default()
        },
        packets: args.packets,
        duration_s: args.duration,
        warmup_s: 0.0,
        tau: args.tau,
        extended_accounting: args.extended,
        max_runs: 1,
        axes: Default::default(),
    };
    let sweep = Sweep::new(spec, cfg, trace)?;
    let metrics = sweep.simulate(cli.seed.unwrap_or(0), &system, args.dump.is_some())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    w.write_record(metrics.csv_record())?;
    let text = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");
    emit(cli, out, "metrics.csv", &text)?;
    if let Some(path) = &args.dump {
        write_dump(path, &metrics.dump)?;
    }
    Ok(())
}

fn write_dump(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut text = String::from("time_s,kind,src,dst,payload\n");
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

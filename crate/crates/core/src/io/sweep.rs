//! Parameter sweeps: the cross product of the axes, times seeds, times
//! systems. Runs execute in parallel; reports are written afterwards by a
//! single writer, in run order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::config::{db_to_linear, validate_config, ValidatedConfig};
use crate::error::{SimError, SweepError};
use crate::io::trace::{load_trace, RssiTrace};
use crate::sim::{
    body_scenario, energy_accounting, percentile, run, with_tuned_bcc, ChannelModel, LinkMatrix, LinkQuality, RunMetrics,
    ScenarioKind, ScenarioParams, SimConfig, StopCondition, System, METRICS_HEADER,
};

pub const DEFAULT_MAX_RUNS: usize = 10_000;

/// Which network a run simulates.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(try_from = "String")]
pub enum SystemKind {
    Proposed,
    Baseline,
    /// RF only, no relaying.
    Direct,
    /// One trace node alone on its own link, `<name>-only`.
    Single(String),
}

impl SystemKind {
    pub fn name(&self) -> String {
        match self {
            SystemKind::Proposed => "proposed".into(),
            SystemKind::Baseline => "baseline".into(),
            SystemKind::Direct => "direct".into(),
            SystemKind::Single(n) => format!("{n}-only"),
        }
    }
}

impl TryFrom<String> for SystemKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        match s.as_str() {
            "proposed" => Ok(SystemKind::Proposed),
            "baseline" => Ok(SystemKind::Baseline),
            "direct" => Ok(SystemKind::Direct),
            other => match other.strip_suffix("-only") {
                Some(name) if !name.is_empty() => Ok(SystemKind::Single(name.to_string())),
                _ => Err(format!("unknown system `{other}`")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Scenario1,
    Scenario2,
    /// Every link fails exchanges with probability `pi_e`.
    Fixed,
    /// Every link Rayleigh with mean `snr_db`.
    Rayleigh,
    /// Gateway links replay an RSSI trace.
    Trace,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    /// Mean gateway SNR of line-of-sight nodes (every node for `rayleigh`).
    pub snr_db: f64,
    /// Non-line-of-sight nodes sit this far below `snr_db`.
    pub nlos_offset_db: f64,
    pub p_los: f64,
    /// Mean SNR of on-body RF links.
    pub neighbor_snr_db: f64,
    pub pi_e: f64,
    /// Trace file, relative to the spec file.
    pub trace: Option<PathBuf>,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        let p = ScenarioParams::default();
        ChannelSpec {
            kind: ChannelKind::Scenario1,
            snr_db: p.los_snr_db,
            nlos_offset_db: p.los_snr_db - p.nlos_snr_db,
            p_los: p.p_los,
            neighbor_snr_db: p.neighbor_snr_db,
            pi_e: 0.0,
            trace: None,
        }
    }
}

/// Values swept; an empty list leaves the base value in place.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Axes {
    pub n_nodes: Vec<usize>,
    pub n_relays: Vec<usize>,
    /// Total offered load as a fraction of the RF maximum, split evenly.
    pub load: Vec<f64>,
    /// Per-node rate, packets/s.
    pub rate: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub pi_e: Vec<f64>,
    pub m_r: Vec<u32>,
    pub m_c: Vec<u32>,
    pub est_period: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Network configuration file, relative to the spec file.
    pub base_config: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default)]
    pub first_seed: u64,
    #[serde(default = "default_systems")]
    pub systems: Vec<SystemKind>,
    #[serde(default)]
    pub channel: ChannelSpec,
    /// Packets generated per node; default 1000 unless `duration_s` is set.
    pub packets: Option<u64>,
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub warmup_s: f64,
    /// Tune BCC sleep/listen intervals for this forwarded-packet delay bound.
    pub tau: Option<f64>,
    #[serde(default)]
    pub extended_accounting: bool,
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
    #[serde(default)]
    pub axes: Axes,
}

fn default_seeds() -> u64 {
    10
}

fn default_systems() -> Vec<SystemKind> {
    vec![SystemKind::Proposed, SystemKind::Baseline]
}

fn default_max_runs() -> usize {
    DEFAULT_MAX_RUNS
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SweepError> {
        toml::from_str(text).map_err(|e| SweepError::Spec(e.to_string()))
    }
}

/// One combination of axis values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Point {
    pub n_nodes: Option<usize>,
    pub n_relays: Option<usize>,
    pub load: Option<f64>,
    pub rate: Option<f64>,
    pub snr_db: Option<f64>,
    pub pi_e: Option<f64>,
    pub m_r: Option<u32>,
    pub m_c: Option<u32>,
    pub est_period: Option<f64>,
}

fn expand<T: Copy>(points: Vec<Point>, values: &[T], set: impl Fn(&mut Point, T)) -> Vec<Point> {
    if values.is_empty() {
        return points;
    }
    points
        .into_iter()
        .flat_map(|p| {
            let set = &set;
            values.iter().map(move |&v| {
                let mut q = p;
                set(&mut q, v);
                q
            })
        })
        .collect::<Vec<_>>()
}

impl Axes {
    /// Cross product, last axis varying fastest.
    pub fn points(&self) -> Vec<Point> {
        let mut p = vec![Point::default()];
        p = expand(p, &self.n_nodes, |q, v| q.n_nodes = Some(v));
        p = expand(p, &self.n_relays, |q, v| q.n_relays = Some(v));
        p = expand(p, &self.load, |q, v| q.load = Some(v));
        p = expand(p, &self.rate, |q, v| q.rate = Some(v));
        p = expand(p, &self.snr_db, |q, v| q.snr_db = Some(v));
        p = expand(p, &self.pi_e, |q, v| q.pi_e = Some(v));
        p = expand(p, &self.m_r, |q, v| q.m_r = Some(v));
        p = expand(p, &self.m_c, |q, v| q.m_c = Some(v));
        p = expand(p, &self.est_period, |q, v| q.est_period = Some(v));
        p
    }
}

/// A validated sweep ready to execute.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub spec: SweepSpec,
    pub base: ValidatedConfig,
    pub trace: Option<Arc<RssiTrace>>,
}

impl Sweep {
    /// Build from a spec; `base` replaces the spec's own `base_config`.
    pub fn new(spec: SweepSpec, base: ValidatedConfig, trace: Option<Arc<RssiTrace>>) -> Result<Self, SweepError> {
        if spec.seeds == 0 || spec.systems.is_empty() {
            return Err(SweepError::Spec("need at least one seed and one system".into()));
        }
        if !spec.axes.load.is_empty() && !spec.axes.rate.is_empty() {
            return Err(SweepError::Spec("`load` and `rate` axes are exclusive".into()));
        }
        if spec.channel.kind == ChannelKind::Trace && trace.is_none() {
            return Err(SweepError::Spec("trace channel without a trace".into()));
        }
        let single = spec.systems.iter().any(|s| matches!(s, SystemKind::Single(_)));
        if single && spec.channel.kind != ChannelKind::Trace {
            return Err(SweepError::Spec("single-node systems need a trace channel".into()));
        }
        if let Some(t) = &trace {
            for s in &spec.systems {
                if let SystemKind::Single(name) = s {
                    if t.node_index(name).is_none() {
                        return Err(SweepError::Spec(format!("trace has no node `{name}`")));
                    }
                }
            }
        }
        let runs = spec.axes.points().len() * spec.seeds as usize * spec.systems.len();
        if runs > spec.max_runs {
            return Err(SweepError::TooManyRuns { runs, cap: spec.max_runs });
        }
        Ok(Sweep { spec, base, trace })
    }

    /// Read a spec file, resolving its config and trace paths against the
    /// spec's directory. `config` overrides the spec's `base_config`.
    pub fn load(path: &Path, config: Option<&Path>) -> Result<Self, SweepError> {
        let spec = SweepSpec::from_toml_str(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let base = match (config, &spec.base_config) {
            (Some(c), _) => ValidatedConfig::load(c)?,
            (None, Some(c)) => ValidatedConfig::load(&dir.join(c))?,
            (None, None) => ValidatedConfig::default(),
        };
        let trace = match &spec.channel.trace {
            Some(t) => Some(Arc::new(load_trace(&dir.join(t))?)),
            None => None,
        };
        Sweep::new(spec, base, trace)
    }

    fn stop(&self) -> StopCondition {
        match (self.spec.packets, self.spec.duration_s, &self.trace) {
            (Some(p), _, _) => StopCondition::Packets(p),
            (None, Some(d), _) => StopCondition::Time(d),
            (None, None, Some(t)) if self.spec.channel.kind == ChannelKind::Trace => StopCondition::Time(t.duration()),
            _ => StopCondition::Packets(1000),
        }
    }

    fn prepare(&self, p: &Point) -> Result<Prepared, SimError> {
        let mut cfg = self.base.clone();
        let n = p.n_nodes.unwrap_or(cfg.network.n_nodes);
        if n != cfg.network.n_nodes {
            let rate = cfg.network.per_node_rate[0];
            cfg = cfg.with_network(n, cfg.network.n_relays.min(n), rate);
        }
        if let Some(r) = p.n_relays {
            cfg.network.n_relays = r;
        }
        if let Some(load) = p.load {
            cfg.network.per_node_rate = vec![load * cfg.network.max_load() / n as f64; n];
        }
        if let Some(rate) = p.rate {
            cfg.network.per_node_rate = vec![rate; n];
        }
        if let Some(m) = p.m_r {
            cfg.mac.m_r = m;
        }
        if let Some(m) = p.m_c {
            cfg.mac.m_c = m;
        }
        if let Some(t) = p.est_period {
            cfg.network.est_period = t;
        }
        let mut cfg = validate_config(
            cfg.network,
            cfg.rf_timing,
            cfg.bcc_timing,
            cfg.rf_power,
            cfg.bcc_power,
            cfg.mac,
            cfg.options,
        )?;
        if let Some(tau) = self.spec.tau {
            cfg = with_tuned_bcc(&cfg, tau)?;
        }
        if let Some(t) = &self.trace {
            if self.spec.channel.kind == ChannelKind::Trace && t.n_nodes() != n {
                return Err(SimError::Scenario(format!("trace has {} nodes, config has {n}", t.n_nodes())));
            }
        }
        Ok(Prepared {
            cfg,
            snr_db: p.snr_db.unwrap_or(self.spec.channel.snr_db),
            pi_e: p.pi_e.unwrap_or(self.spec.channel.pi_e),
        })
    }

    fn channel(&self, prep: &Prepared, seed: u64) -> Result<ChannelModel, SimError> {
        let c = &self.spec.channel;
        let n = prep.cfg.network.n_nodes;
        let params = ScenarioParams {
            los_snr_db: prep.snr_db,
            nlos_snr_db: prep.snr_db - c.nlos_offset_db,
            p_los: c.p_los,
            neighbor_snr_db: c.neighbor_snr_db,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // clear of the per-node streams the engine uses
        rng.set_stream(u64::MAX);
        Ok(match c.kind {
            ChannelKind::Scenario1 => ChannelModel::Links(body_scenario(&ScenarioKind::Scenario1, n, &params, &mut rng)?),
            ChannelKind::Scenario2 => ChannelModel::Links(body_scenario(&ScenarioKind::Scenario2, n, &params, &mut rng)?),
            ChannelKind::Fixed => ChannelModel::Links(LinkMatrix::uniform(n, LinkQuality::Fixed { pi_e: prep.pi_e })),
            ChannelKind::Rayleigh => ChannelModel::Links(LinkMatrix::uniform(
                n,
                LinkQuality::Rayleigh { mean_snr: db_to_linear(prep.snr_db) },
            )),
            ChannelKind::Trace => ChannelModel::Trace {
                trace: self.trace.clone().expect("checked in Sweep::new"),
                neighbor: LinkQuality::Rayleigh { mean_snr: db_to_linear(c.neighbor_snr_db) },
            },
        })
    }

    fn sim_config(&self, system: System, dump: bool) -> SimConfig {
        SimConfig {
            system,
            stop: self.stop(),
            accounting: energy_accounting(self.spec.extended_accounting),
            warmup: self.spec.warmup_s,
            dump,
            ..SimConfig::default()
        }
    }

    /// A single run at the base point, without the axes.
    pub fn simulate(&self, seed: u64, system: &SystemKind, dump: bool) -> Result<RunMetrics, SimError> {
        let prep = self.prepare(&Point::default())?;
        self.run_one(&prep, seed, system, dump)
    }

    fn run_one(&self, prep: &Prepared, seed: u64, system: &SystemKind, dump: bool) -> Result<RunMetrics, SimError> {
        match system {
            SystemKind::Single(name) => {
                let trace = self.trace.as_ref().expect("checked in Sweep::new");
                let node = trace.node_index(name).expect("checked in Sweep::new");
                let rate = prep.cfg.network.per_node_rate[node];
                let cfg = prep.cfg.with_network(1, 1, rate);
                let channel = ChannelModel::Trace {
                    trace: Arc::new(trace.single_node(node)),
                    neighbor: LinkQuality::Blocked,
                };
                run(&cfg, &channel, &self.sim_config(System::DirectOnly, dump), seed)
            }
            other => {
                let sys = match other {
                    SystemKind::Proposed => System::Proposed,
                    SystemKind::Baseline => System::Baseline,
                    _ => System::DirectOnly,
                };
                run(&prep.cfg, &self.channel(prep, seed)?, &self.sim_config(sys, dump), seed)
            }
        }
    }

    fn axis_values(&self, prep: &Prepared) -> Vec<String> {
        let cfg = &prep.cfg;
        let kind = self.spec.channel.kind;
        let opt = |show: bool, v: f64| if show { v.to_string() } else { String::new() };
        vec![
            cfg.network.n_nodes.to_string(),
            cfg.network.n_relays.to_string(),
            cfg.network.per_node_rate[0].to_string(),
            (cfg.network.total_load() / cfg.network.max_load()).to_string(),
            opt(
                matches!(kind, ChannelKind::Scenario1 | ChannelKind::Scenario2 | ChannelKind::Rayleigh),
                prep.snr_db,
            ),
            opt(kind == ChannelKind::Fixed, prep.pi_e),
            cfg.mac.m_r.to_string(),
            cfg.mac.m_c.to_string(),
            cfg.network.est_period.to_string(),
            self.spec.tau.map(|t| t.to_string()).unwrap_or_default(),
        ]
    }
}

struct Prepared {
    cfg: ValidatedConfig,
    snr_db: f64,
    pi_e: f64,
}

pub const AXIS_HEADER: [&str; 10] = [
    "n_nodes",
    "n_relays",
    "rate",
    "load",
    "snr_db",
    "pi_e",
    "m_r",
    "m_c",
    "est_period",
    "tau",
];

/// Metrics summarized in the aggregate report.
pub const AGGREGATE_METRICS: [&str; 5] = ["plr", "mean_delay_s", "energy_total_j", "energy_per_delivered_j", "control_bps"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub point: usize,
    pub seed: u64,
    pub system: String,
    pub axes: Vec<String>,
    pub metrics: Vec<String>,
}

impl RunRow {
    pub fn metric(&self, name: &str) -> f64 {
        let i = METRICS_HEADER.iter().position(|h| *h == name).expect("known metric");
        self.metrics[i].parse().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub point: usize,
    pub seed: u64,
    pub system: String,
    pub error: String,
}

/// Median and interquartile range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Summary {
            median: percentile(&v, 0.5),
            q1: percentile(&v, 0.25),
            q3: percentile(&v, 0.75),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub point: usize,
    pub axes: Vec<String>,
    pub system: String,
    pub runs: usize,
    /// One entry per `AGGREGATE_METRICS`.
    pub stats: Vec<Summary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub point: usize,
    pub axes: Vec<String>,
    pub pairs: usize,
    pub energy: Summary,
    pub delay: Summary,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<RunRow>,
    pub failures: Vec<Failure>,
}

/// Execute every run of the sweep.
pub fn run_sweep(sweep: &Sweep) -> SweepReport {
    let points = sweep.spec.axes.points();
    let prepared: Vec<Result<Prepared, SimError>> = points.par_iter().map(|p| sweep.prepare(p)).collect();
    let mut jobs = Vec::new();
    for (i, _) in points.iter().enumerate() {
        for s in 0..sweep.spec.seeds {
            for sys in &sweep.spec.systems {
                jobs.push((i, sweep.spec.first_seed + s, sys));
            }
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(i, seed, sys)| {
            let out = match &prepared[i] {
                Ok(prep) => sweep.run_one(prep, seed, sys, false).map(|m| (sweep.axis_values(prep), m.csv_record())),
                Err(e) => Err(e.clone()),
            };
            (i, seed, sys.name(), out)
        })
        .collect();
    let mut report = SweepReport::default();
    for (point, seed, system, out) in results {
        match out {
            Ok((axes, metrics)) => report.rows.push(RunRow { point, seed, system, axes, metrics }),
            Err(e) => report.failures.push(Failure {
                point,
                seed,
                system,
                error: e.to_string(),
            }),
        }
    }
    report
}

fn csv_string(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn stat_columns(name: &str) -> [String; 3] {
    [format!("{name}_median"), format!("{name}_q1"), format!("{name}_q3")]
}

fn stat_values(s: &Summary) -> [String; 3] {
    [format!("{:e}", s.median), format!("{:e}", s.q1), format!("{:e}", s.q3)]
}

pub fn long_header() -> Vec<String> {
    let mut h = strings(&["point", "seed", "system"]);
    h.extend(strings(&AXIS_HEADER));
    h.extend(strings(&METRICS_HEADER));
    h
}

pub fn aggregate_header() -> Vec<String> {
    let mut h = strings(&["point"]);
    h.extend(strings(&AXIS_HEADER));
    h.extend(strings(&["system", "runs"]));
    for m in AGGREGATE_METRICS {
        h.extend(stat_columns(m));
    }
    h
}

pub fn ratio_header() -> Vec<String> {
    let mut h = strings(&["point"]);
    h.extend(strings(&AXIS_HEADER));
    h.push("pairs".into());
    h.extend(stat_columns("energy_ratio"));
    h.extend(stat_columns("delay_ratio"));
    h
}

impl SweepReport {
    /// Per point and system, in order of first appearance.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut keys: Vec<(usize, &str)> = Vec::new();
        for r in &self.rows {
            if !keys.contains(&(r.point, r.system.as_str())) {
                keys.push((r.point, &r.system));
            }
        }
        keys.into_iter()
            .map(|(point, system)| {
                let rows: Vec<&RunRow> = self.rows.iter().filter(|r| r.point == point && r.system == system).collect();
                AggregateRow {
                    point,
                    axes: rows[0].axes.clone(),
                    system: system.to_string(),
                    runs: rows.len(),
                    stats: AGGREGATE_METRICS
                        .iter()
                        .map(|m| Summary::of(&rows.iter().map(|r| r.metric(m)).collect::<Vec<_>>()))
                        .collect(),
                }
            })
            .collect()
    }

    /// Proposed over baseline, paired by seed, for every point that has both.
    pub fn ratios(&self) -> Vec<RatioRow> {
        let mut points: Vec<usize> = self.rows.iter().map(|r| r.point).collect();
        points.dedup();
        let find = |p: usize, seed: u64, sys: &str| self.rows.iter().find(|r| r.point == p && r.seed == seed && r.system == sys);
        points
            .into_iter()
            .filter_map(|p| {
                let pairs: Vec<(&RunRow, &RunRow)> = self
                    .rows
                    .iter()
                    .filter(|r| r.point == p && r.system == "proposed")
                    .filter_map(|prop| find(p, prop.seed, "baseline").map(|base| (prop, base)))
                    .collect();
                if pairs.is_empty() {
                    return None;
                }
                let ratio = |m: &str| {
                    Summary::of(&pairs.iter().map(|(a, b)| a.metric(m) / b.metric(m)).collect::<Vec<_>>())
                };
                Some(RatioRow {
                    point: p,
                    axes: pairs[0].0.axes.clone(),
                    pairs: pairs.len(),
                    energy: ratio("energy_total_j"),
                    delay: ratio("mean_delay_s"),
                })
            })
            .collect()
    }

    pub fn long_csv(&self) -> String {
        csv_string(
            long_header(),
            self.rows.iter().map(|r| {
                let mut v = vec![r.point.to_string(), r.seed.to_string(), r.system.clone()];
                v.extend(r.axes.iter().cloned());
                v.extend(r.metrics.iter().cloned());
                v
            }),
        )
    }

    pub fn aggregate_csv(&self) -> String {
        csv_string(
            aggregate_header(),
            self.aggregate().into_iter().map(|a| {
                let mut v = vec![a.point.to_string()];
                v.extend(a.axes);
                v.push(a.system);
                v.push(a.runs.to_string());
                for s in &a.stats {
                    v.extend(stat_values(s));
                }
                v
            }),
        )
    }

    pub fn ratio_csv(&self) -> String {
        csv_string(
            ratio_header(),
            self.ratios().into_iter().map(|r| {
                let mut v = vec![r.point.to_string()];
                v.extend(r.axes);
                v.push(r.pairs.to_string());
                v.extend(stat_values(&r.energy));
                v.extend(stat_values(&r.delay));
                v
            }),
        )
    }

    pub fn failure_summary(&self) -> String {
        let mut out = String::new();
        for f in &self.failures {
            writeln!(out, "point {} seed {} system {}: {}", f.point, f.seed, f.system, f.error).unwrap();
        }
        out
    }

    /// Write `long.csv`, `aggregate.csv` and, when both systems ran,
    /// `ratios.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, SweepError> {
        std::fs::create_dir_all(dir)?;
        let mut files = vec![
            (dir.join("long.csv"), self.long_csv()),
            (dir.join("aggregate.csv"), self.aggregate_csv()),
        ];
        if !self.ratios().is_empty() {
            files.push((dir.join("ratios.csv"), self.ratio_csv()));
        }
        if !self.failures.is_empty() {
            files.push((dir.join("failures.txt"), self.failure_summary()));
        }
        for (path, text) in &files {
            std::fs::write(path, text)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// Settings of the trace-driven comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRunOptions {
    pub m_r: Vec<u32>,
    pub est_period: Vec<f64>,
    pub seeds: u64,
    pub first_seed: u64,
    /// Per-node rate, packets/s.
    pub rate: f64,
    /// Mean SNR of the on-body RF link between the trace nodes.
    pub neighbor_snr_db: f64,
    /// Delay bound for BCC tuning, s.
    pub tau: Option<f64>,
    pub extended_accounting: bool,
}

impl Default for TraceRunOptions {
    fn default() -> Self {
        TraceRunOptions {
            m_r: vec![1, 2, 3, 4],
            est_period: vec![1.0, 5.0],
            seeds: 5,
            first_seed: 0,
            rate: 10.0,
            neighbor_snr_db: 10.0,
            tau: Some(1.0),
            extended_accounting: false,
        }
    }
}

/// Proposed system, RF-relay baseline and every trace node alone, over
/// the retransmission limits and estimation periods in `opts`.
pub fn trace_run_sweep(base: &ValidatedConfig, trace: Arc<RssiTrace>, opts: &TraceRunOptions) -> Result<Sweep, SweepError> {
    let mut systems = vec![SystemKind::Proposed, SystemKind::Baseline];
    systems.extend(trace.node_names.iter().map(|n| SystemKind::Single(n.clone())));
    let n = trace.n_nodes();
    let spec = SweepSpec {
        base_config: None,
        seeds: opts.seeds,
        first_seed: opts.first_seed,
        systems,
        channel: ChannelSpec {
            kind: ChannelKind::Trace,
            neighbor_snr_db: opts.neighbor_snr_db,
            ..ChannelSpec::default()
        },
        packets: None,
        duration_s: None,
        warmup_s: 0.0,
        tau: opts.tau,
        extended_accounting: opts.extended_accounting,
        max_runs: DEFAULT_MAX_RUNS,
        axes: Axes {
            m_r: opts.m_r.clone(),
            est_period: opts.est_period.clone(),
            ..Axes::default()
        },
    };
    let base = base.with_network(n, 1, opts.rate);
    Sweep::new(spec, base, Some(trace))
}

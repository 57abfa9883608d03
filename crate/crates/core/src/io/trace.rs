//! RSSI traces: `time_s,node_id,rssi_dbm` CSV with `#` comments.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::TraceError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    pub node: usize,
    pub rssi_dbm: f64,
}

/// RSSI samples of one or more nodes. Node indices follow the order in
/// which names first appear in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RssiTrace {
    pub node_names: Vec<String>,
    /// Samples in file order.
    pub samples: Vec<TraceSample>,
    series: Vec<Vec<(f64, f64)>>,
}

impl RssiTrace {
    pub fn from_samples(node_names: Vec<String>, samples: Vec<TraceSample>) -> Result<Self, TraceError> {
        if samples.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        let mut series = vec![Vec::new(); node_names.len()];
        for (i, s) in samples.iter().enumerate() {
            let node_series: &mut Vec<(f64, f64)> = &mut series[s.node];
            if let Some(&(last, _)) = node_series.last() {
                if s.time < last {
                    return Err(TraceError::Parse {
                        line: i + 1,
                        message: format!("time {} precedes {} for node {}", s.time, last, node_names[s.node]),
                    });
                }
            }
            node_series.push((s.time, s.rssi_dbm));
        }
        if let Some(i) = series.iter().position(|s| s.is_empty()) {
            return Err(TraceError::Parse {
                line: 0,
                message: format!("node {} has no samples", node_names[i]),
            });
        }
        Ok(RssiTrace { node_names, samples, series })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn duration(&self) -> f64 {
        self.samples.iter().map(|s| s.time).fold(0.0, f64::max)
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_names.iter().position(|n| n == name)
    }

    /// RSSI of `node` at time `t`, holding the last observation; before the
    /// first sample the first value is used.
    pub fn rssi_at(&self, node: usize, t: f64) -> f64 {
        let s = &self.series[node];
        let idx = s.partition_point(|&(time, _)| time <= t);
        if idx == 0 {
            s[0].1
        } else {
            s[idx - 1].1
        }
    }

    /// Trace restricted to one node, renumbered as node 0.
    pub fn single_node(&self, node: usize) -> RssiTrace {
        let samples = self
            .samples
            .iter()
            .filter(|s| s.node == node)
            .map(|s| TraceSample { node: 0, ..*s })
            .collect();
        RssiTrace::from_samples(vec![self.node_names[node].clone()], samples).expect("node has samples")
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("time_s,node_id,rssi_dbm\n");
        for s in &self.samples {
            writeln!(out, "{},{},{}", s.time, self.node_names[s.node], s.rssi_dbm).unwrap();
        }
        out
    }
}

pub fn parse_trace(text: &str) -> Result<RssiTrace, TraceError> {
    let mut names: Vec<String> = Vec::new();
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("time_s") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(TraceError::Parse {
                line: line_no,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| TraceError::Parse {
                line: line_no,
                message: format!("invalid {what} `{s}`"),
            })
        };
        let time = num(fields[0], "time")?;
        let rssi = num(fields[2], "rssi")?;
        let name = fields[1];
        if name.is_empty() {
            return Err(TraceError::Parse {
                line: line_no,
                message: "empty node id".into(),
            });
        }
        let node = match names.iter().position(|n| n == name) {
            Some(n) => n,
            None => {
                names.push(name.to_string());
                names.len() - 1
            }
        };
        samples.push((line_no, TraceSample { time, node, rssi_dbm: rssi }));
    }
    // re-run the ordering check with file line numbers
    let mut last = vec![f64::NEG_INFINITY; names.len()];
    for (line, s) in &samples {
        if s.time < last[s.node] {
            return Err(TraceError::Parse {
                line: *line,
                message: format!("timestamp {} is out of order for node {}", s.time, names[s.node]),
            });
        }
        last[s.node] = s.time;
    }
    RssiTrace::from_samples(names, samples.into_iter().map(|(_, s)| s).collect())
}

pub fn load_trace(path: &Path) -> Result<RssiTrace, TraceError> {
    parse_trace(&std::fs::read_to_string(path)?)
}

/// Parameters of the synthetic two-node walking trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTraceParams {
    pub duration: f64,
    pub step: f64,
    /// Torso node: strong line-of-sight link.
    pub torso_rssi_dbm: f64,
    /// Torso link is shadowed while the walkers cross.
    pub outage_start: f64,
    pub outage_end: f64,
    pub outage_rssi_dbm: f64,
    /// The torso link fades into and out of the outage over this long, s.
    pub outage_ramp: f64,
    /// Pocket node: weaker, stable link.
    pub pocket_rssi_dbm: f64,
    pub ripple_db: f64,
    pub seed: u64,
}

impl Default for SyntheticTraceParams {
    fn default() -> Self {
        SyntheticTraceParams {
            duration: 120.0,
            step: 0.1,
            torso_rssi_dbm: -65.0,
            outage_start: 50.0,
            outage_end: 70.0,
            outage_rssi_dbm: -100.0,
            outage_ramp: 5.0,
            pocket_rssi_dbm: -88.0,
            ripple_db: 1.0,
            seed: 7,
        }
    }
}

/// Two walkers approach each other, cross and separate. The torso node
/// fades towards the crossing and is fully shadowed during it; the pocket
/// node stays weak but steady.
pub fn synthetic_torso_pocket(p: &SyntheticTraceParams) -> RssiTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let steps = (p.duration / p.step).round() as usize;
    let mid = 0.5 * (p.outage_start + p.outage_end);
    let half_width = 0.5 * (p.outage_end - p.outage_start);
    let mut samples = Vec::with_capacity(2 * (steps + 1));
    for k in 0..=steps {
        // decimal rounding keeps the CSV round trip exact
        let t = (k as f64 * p.step * 1e6).round() / 1e6;
        // up to 10 dB of extra path loss as the crossing approaches
        let dist = ((t - mid).abs() - half_width).max(0.0);
        let open = p.torso_rssi_dbm - 10.0 * (-dist / 10.0).exp();
        // fraction of the shadowing in effect, linear in dB across the ramps
        let shadow = if (p.outage_start..p.outage_end).contains(&t) {
            1.0
        } else if p.outage_ramp > 0.0 && dist < p.outage_ramp {
            1.0 - dist / p.outage_ramp
        } else {
            0.0
        };
        let torso = open + shadow * (p.outage_rssi_dbm - open);
        let pocket = p.pocket_rssi_dbm + rng.gen_range(-p.ripple_db..=p.ripple_db);
        let torso = torso + rng.gen_range(-p.ripple_db..=p.ripple_db);
        samples.push(TraceSample { time: t, node: 0, rssi_dbm: (torso * 100.0).round() / 100.0 });
        samples.push(TraceSample { time: t, node: 1, rssi_dbm: (pocket * 100.0).round() / 100.0 });
    }
    RssiTrace::from_samples(vec!["torso".into(), "pocket".into()], samples).expect("synthetic trace is well formed")
}

/// The synthetic trace shipped with the crate.
pub const SHIPPED_TRACE: &str = include_str!("../../data/torso_pocket.csv");

pub fn shipped_trace() -> RssiTrace {
    parse_trace(SHIPPED_TRACE).expect("shipped trace parses")
}

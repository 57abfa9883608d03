//! Run statistics and the per-run CSV record.

use serde::Serialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub active: f64,
    pub cca: f64,
    pub tx: f64,
    pub rx: f64,
    pub sleep: f64,
    pub transitions: f64,
    pub compute: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.active + self.cca + self.tx + self.rx + self.sleep + self.transitions + self.compute
    }

    pub fn add(&mut self, o: &EnergyBreakdown) {
        self.active += o.active;
        self.cca += o.cca;
        self.tx += o.tx;
        self.rx += o.rx;
        self.sleep += o.sleep;
        self.transitions += o.transitions;
        self.compute += o.compute;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeMetrics {
    pub generated: u64,
    pub delivered: u64,
    pub lost: u64,
    /// Counts restricted to packets generated after the warm-up.
    pub steady_generated: u64,
    pub steady_delivered: u64,
    pub steady_lost: u64,
    /// End-to-end delays of delivered packets, in delivery order.
    pub delays: Vec<f64>,
    /// RF MAC services (head-of-line to final outcome) completed by this node.
    pub services: u64,
    pub service_failures: u64,
    pub service_delay_sum: f64,
    /// Backoff, CCA and exchange energy spent on those services.
    pub service_energy: f64,
    pub collisions: u64,
    pub bcc_collisions: u64,
    pub control_bits: u64,
    pub rf_power_ups: u64,
    pub energy: EnergyBreakdown,
}

impl NodeMetrics {
    pub fn plr(&self) -> f64 {
        ratio(self.lost as f64, self.generated as f64)
    }

    pub fn steady_plr(&self) -> f64 {
        ratio(self.steady_lost as f64, self.steady_generated as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub nodes: Vec<NodeMetrics>,
    /// Simulated time covered, s.
    pub duration: f64,
    pub events: u64,
    pub relay_changes: u64,
    /// Times the relay-set invariant was found broken.
    pub monitor_violations: u64,
    /// Copies of already-delivered packets that reached the gateway again.
    pub duplicates: u64,
    /// Stopped by the event budget with packets still outstanding.
    pub truncated: bool,
    /// Debug message dump, when requested.
    pub dump: Vec<String>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub const METRICS_HEADER: [&str; 26] = [
    "generated",
    "delivered",
    "lost",
    "plr",
    "mean_delay_s",
    "p50_delay_s",
    "p95_delay_s",
    "p99_delay_s",
    "energy_total_j",
    "energy_active_j",
    "energy_cca_j",
    "energy_tx_j",
    "energy_rx_j",
    "energy_sleep_j",
    "energy_transitions_j",
    "energy_compute_j",
    "energy_per_delivered_j",
    "mean_service_delay_s",
    "service_energy_j",
    "control_bits",
    "control_bps",
    "relay_changes",
    "collisions",
    "duration_s",
    "events",
    "truncated",
];

impl RunMetrics {
    fn sum(&self, f: impl Fn(&NodeMetrics) -> u64) -> u64 {
        self.nodes.iter().map(f).sum()
    }

    pub fn generated(&self) -> u64 {
        self.sum(|n| n.generated)
    }

    pub fn delivered(&self) -> u64 {
        self.sum(|n| n.delivered)
    }

    pub fn lost(&self) -> u64 {
        self.sum(|n| n.lost)
    }

    pub fn plr(&self) -> f64 {
        ratio(self.lost() as f64, self.generated() as f64)
    }

    /// Loss rate over the given nodes, counting only post-warm-up packets.
    pub fn steady_plr_of(&self, nodes: &[usize]) -> f64 {
        let lost: u64 = nodes.iter().map(|&i| self.nodes[i].steady_lost).sum();
        let gen: u64 = nodes.iter().map(|&i| self.nodes[i].steady_generated).sum();
        ratio(lost as f64, gen as f64)
    }

    pub fn sorted_delays(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self.nodes.iter().flat_map(|n| n.delays.iter().copied()).collect();
        d.sort_by(f64::total_cmp);
        d
    }

    pub fn mean_delay(&self) -> f64 {
        let n = self.delivered();
        let s: f64 = self.nodes.iter().flat_map(|n| n.delays.iter()).sum();
        if n > 0 {
            s / n as f64
        } else {
            f64::NAN
        }
    }

    pub fn energy(&self) -> EnergyBreakdown {
        let mut e = EnergyBreakdown::default();
        for n in &self.nodes {
            e.add(&n.energy);
        }
        e
    }

    pub fn total_energy(&self) -> f64 {
        self.energy().total()
    }

    pub fn control_bits(&self) -> u64 {
        self.sum(|n| n.control_bits)
    }

    pub fn collisions(&self) -> u64 {
        self.sum(|n| n.collisions + n.bcc_collisions)
    }

    pub fn services(&self) -> u64 {
        self.sum(|n| n.services)
    }

    /// Mean RF service time (head-of-line to final outcome).
    pub fn mean_service_delay(&self) -> f64 {
        let s: f64 = self.nodes.iter().map(|n| n.service_delay_sum).sum();
        ratio(s, self.services() as f64)
    }

    /// Fraction of RF services that ended without an acknowledgment.
    pub fn service_failure_rate(&self) -> f64 {
        ratio(self.sum(|n| n.service_failures) as f64, self.services() as f64)
    }

    /// Mean RF MAC energy per service.
    pub fn service_energy_per_packet(&self) -> f64 {
        let s: f64 = self.nodes.iter().map(|n| n.service_energy).sum();
        ratio(s, self.services() as f64)
    }

    pub fn csv_record(&self) -> Vec<String> {
        let delays = self.sorted_delays();
        let e = self.energy();
        let delivered = self.delivered();
        let per_delivered = if delivered > 0 { e.total() / delivered as f64 } else { f64::NAN };
        let bps = if self.duration > 0.0 { self.control_bits() as f64 / self.duration } else { 0.0 };
        let f = |v: f64| format!("{v:.9e}");
        vec![
            self.generated().to_string(),
            delivered.to_string(),
            self.lost().to_string(),
            f(self.plr()),
            f(self.mean_delay()),
            f(percentile(&delays, 0.5)),
            f(percentile(&delays, 0.95)),
            f(percentile(&delays, 0.99)),
            f(e.total()),
            f(e.active),
            f(e.cca),
            f(e.tx),
            f(e.rx),
            f(e.sleep),
            f(e.transitions),
            f(e.compute),
            f(per_delivered),
            f(self.mean_service_delay()),
            f(self.service_energy_per_packet()),
            self.control_bits().to_string(),
            f(bps),
            self.relay_changes.to_string(),
            self.collisions().to_string(),
            f(self.duration),
            self.events.to_string(),
            self.truncated.to_string(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert_eq!(percentile(&v, 0.5), 2.5);
        assert!(percentile(&[], 0.5).is_nan());
    }

    #[test]
    fn record_matches_header() {
        let m = RunMetrics {
            nodes: vec![NodeMetrics::default()],
            ..Default::default()
        };
        assert_eq!(m.csv_record().len(), METRICS_HEADER.len());
        assert_eq!(m.plr(), 0.0);
    }
}

//! Quick invariant checks run by `bodynet selfcheck`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bcc_model::{data_phase_delay, wakeup_timing};
use crate::config::{MacParams, NetworkConfig, TimingParams, ValidatedConfig};
use crate::error::ModelError;
use crate::io::trace::{parse_trace, shipped_trace};
use crate::numerics::q_function;
use crate::protocol::rf_input;
use crate::rf_model::{frame_failure_prob, solve_rf};
use crate::sim::{body_scenario, run, ChannelModel, ScenarioKind, ScenarioParams, SimConfig, StopCondition};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name,
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        if self.detail.is_empty() {
            format!("{verdict} {}", self.name)
        } else {
            format!("{verdict} {}: {}", self.name, self.detail)
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
}

fn golden_values() -> Check {
    let mut bad = Vec::new();
    if q_function(0.0) != 0.5 {
        bad.push("q(0)");
    }
    if !close(frame_failure_prob(0.1, 0.05), 0.145) {
        bad.push("pi_e");
    }
    let mac = MacParams {
        r_s: 10e-3,
        r_l: 10e-3,
        ..MacParams::default()
    };
    match wakeup_timing(&mac, &TimingParams::bcc_default()) {
        Ok(w) if close(w.mean_t_a, 2.5e-3) => {}
        _ => bad.push("E[T_a]"),
    }
    if !close(data_phase_delay(&TimingParams::bcc_default()), 0.5e-3) {
        bad.push("T_3");
    }
    let one = ValidatedConfig::default().with_network(1, 1, 10.0);
    let mut input = rf_input(&one, 0.0);
    input.mac.m_c = 1;
    match solve_rf(&input) {
        Ok(s) if close(s.mean_hol_delay, 0.922e-3) => {}
        _ => bad.push("contention delay"),
    }
    Check::new("golden values", bad.is_empty(), bad.join(", "))
}

fn overhead() -> Check {
    let n = NetworkConfig {
        n_nodes: 10,
        n_relays: 5,
        per_node_rate: vec![1.0; 10],
        payload_bits: 800,
        est_period: 1.0,
        status_len_bits: 160,
    };
    let bps = n.control_overhead_bps();
    Check::new("control overhead", bps == 2400.0, format!("{bps} bit/s"))
}

fn fixed_point_grid() -> Check {
    let base = ValidatedConfig::default();
    let mut worst: f64 = 0.0;
    let mut unstable = 0;
    let mut failures = Vec::new();
    for n_r in 1..=4 {
        for load in [0.1, 0.3, 0.5] {
            for pi_e in [0.0, 0.1, 0.3] {
                let mut cfg = base.with_network(4, n_r, 0.0);
                cfg.network.per_node_rate = vec![load * cfg.network.max_load() / 4.0; 4];
                match solve_rf(&rf_input(&cfg, pi_e)) {
                    Ok(s) => worst = worst.max(s.residual),
                    Err(ModelError::UnstableSystem { .. }) => unstable += 1,
                    Err(e) => failures.push(format!("N_r={n_r} load={load} pi_e={pi_e}: {e}")),
                }
            }
        }
    }
    let passed = failures.is_empty() && worst < 1e-9;
    let detail = if failures.is_empty() {
        format!("max residual {worst:.1e}, {unstable} declared unstable")
    } else {
        failures.join("; ")
    };
    Check::new("fixed-point validity", passed, detail)
}

fn scenario_channel(kind: ScenarioKind, n: usize, seed: u64) -> ChannelModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelModel::Links(body_scenario(&kind, n, &ScenarioParams::default(), &mut rng).expect("valid scenario"))
}

fn simulation_checks() -> Vec<Check> {
    let cfg = ValidatedConfig::default();
    let sc = SimConfig {
        stop: StopCondition::Packets(300),
        dump: true,
        ..SimConfig::default()
    };
    let ch = scenario_channel(ScenarioKind::Scenario1, 4, 1);
    let (a, b) = match (run(&cfg, &ch, &sc, 11), run(&cfg, &ch, &sc, 11)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return vec![Check::new("simulation", false, e.to_string())],
    };
    let conserved = a.nodes.iter().all(|n| n.delivered + n.lost == n.generated);
    let mut out = vec![
        Check::new(
            "conservation",
            conserved && !a.truncated,
            format!("{} generated, {} delivered, {} lost", a.generated(), a.delivered(), a.lost()),
        ),
        Check::new(
            "determinism",
            a.dump == b.dump && a.csv_record() == b.csv_record(),
            format!("{} dump lines", a.dump.len()),
        ),
    ];
    let e = a.energy();
    let parts = e.active + e.cca + e.tx + e.rx + e.sleep + e.transitions + e.compute;
    out.push(Check::new("energy categories", (parts - e.total()).abs() <= 1e-12 * e.total(), ""));

    let blocked = scenario_channel(ScenarioKind::Scenario2, 4, 2);
    let sc2 = SimConfig {
        stop: StopCondition::Packets(300),
        ..SimConfig::default()
    };
    out.push(match run(&cfg, &blocked, &sc2, 12) {
        Ok(m) => Check::new(
            "relay-set invariant",
            m.monitor_violations == 0,
            format!("{} violations, {} relay changes", m.monitor_violations, m.relay_changes),
        ),
        Err(e) => Check::new("relay-set invariant", false, e.to_string()),
    });
    out
}

fn trace_round_trip() -> Check {
    let t = shipped_trace();
    let ok = parse_trace(&t.to_csv_string()).is_ok_and(|again| again == t);
    // the trace channel accepts it
    let ch = ChannelModel::Trace {
        trace: Arc::new(t),
        neighbor: crate::sim::LinkQuality::Blocked,
    };
    Check::new("trace round trip", ok && ch.n_nodes() == 2, "")
}

/// Run every check.
pub fn run_all() -> Vec<Check> {
    let mut checks = vec![golden_values(), overhead(), fixed_point_grid()];
    checks.extend(simulation_checks());
    checks.push(trace_round_trip());
    checks
}

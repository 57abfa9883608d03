use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bodynet::config::ValidatedConfig;
use bodynet::io::trace::shipped_trace;
use bodynet::protocol::rf_input;
use bodynet::rf_model::solve_rf;
use bodynet::sim::{
    body_scenario, energy_accounting, run, with_tuned_bcc, ChannelModel, LinkMatrix, LinkQuality, RunMetrics, ScenarioKind, ScenarioParams,
    SimConfig, StopCondition, System,
};

fn fixed(n: usize, pi_e: f64) -> ChannelModel {
    ChannelModel::Links(LinkMatrix::uniform(n, LinkQuality::Fixed { pi_e }))
}

fn scenario(kind: ScenarioKind, n: usize, seed: u64) -> ChannelModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelModel::Links(body_scenario(&kind, n, &ScenarioParams::default(), &mut rng).unwrap())
}

fn sc(system: System, stop: StopCondition) -> SimConfig {
    SimConfig {
        system,
        stop,
        ..SimConfig::default()
    }
}

/// Every packet is resolved exactly once. Copies the gateway hears again
/// after a lost ACK are counted in `duplicates`, not delivered twice.
fn assert_conserved(m: &RunMetrics) {
    assert!(!m.truncated);
    for (i, n) in m.nodes.iter().enumerate() {
        assert_eq!(n.delivered + n.lost, n.generated, "node {i}");
        assert_eq!(n.delays.len() as u64, n.delivered, "node {i}");
    }
}

#[test]
fn no_traffic_means_sleep_only() {
    let cfg = ValidatedConfig::default().with_network(3, 1, 0.0);
    let m = run(&cfg, &fixed(3, 0.0), &sc(System::DirectOnly, StopCondition::Time(50.0)), 1).unwrap();
    assert_eq!(m.generated(), 0);
    assert_eq!(m.delivered(), 0);
    let e = m.energy();
    assert_eq!(e.total(), e.sleep);
    let expected = 3.0 * 50.0 * cfg.rf_power.p_sleep;
    assert!((e.sleep - expected).abs() <= 1e-12 * expected, "{} vs {expected}", e.sleep);
}

#[test]
fn single_node_delay_matches_model() {
    let cfg = ValidatedConfig::default().with_network(1, 1, 5.0);
    let model = solve_rf(&rf_input(&cfg, 0.0)).unwrap();
    assert_eq!(model.pi_cca, 0.0);
    let m = run(&cfg, &fixed(1, 0.0), &sc(System::DirectOnly, StopCondition::Packets(100_000)), 3).unwrap();
    assert_conserved(&m);
    assert_eq!(m.lost(), 0);
    let err = (m.mean_service_delay() - model.mean_delay).abs() / model.mean_delay;
    assert!(err < 0.01, "simulated {} vs model {}", m.mean_service_delay(), model.mean_delay);
}

#[test]
fn single_packet_delay_is_backoff_plus_exchange() {
    let cfg = ValidatedConfig::default().with_network(1, 1, 1.0);
    let m = run(&cfg, &fixed(1, 0.0), &sc(System::DirectOnly, StopCondition::Packets(1)), 9).unwrap();
    assert_eq!(m.delivered(), 1);
    let t = cfg.rf_timing;
    let d = m.nodes[0].delays[0];
    let slots = (d - t.t_cca - t.t_data - t.t_att - t.t_ack) / t.t_slot;
    assert!((slots - slots.round()).abs() < 1e-6, "{slots}");
    assert!((0.0..8.0).contains(&slots.round()), "{slots}");
}

#[test]
fn conservation_in_every_system() {
    let cfg = with_tuned_bcc(&ValidatedConfig::default().with_network(4, 2, 20.0), 1.0).unwrap();
    for (kind, seed) in [(ScenarioKind::Scenario1, 1), (ScenarioKind::Scenario2, 2)] {
        let ch = scenario(kind, 4, seed);
        for system in [System::Proposed, System::Baseline, System::DirectOnly] {
            let m = run(&cfg, &ch, &sc(system, StopCondition::Packets(2000)), seed).unwrap();
            assert_conserved(&m);
            assert_eq!(m.monitor_violations, 0);
        }
    }
}

#[test]
fn same_seed_same_dump() {
    let cfg = ValidatedConfig::default().with_network(4, 2, 20.0);
    let ch = scenario(ScenarioKind::Scenario1, 4, 4);
    let config = SimConfig {
        dump: true,
        ..sc(System::Proposed, StopCondition::Packets(500))
    };
    let a = run(&cfg, &ch, &config, 4).unwrap();
    let b = run(&cfg, &ch, &config, 4).unwrap();
    assert!(!a.dump.is_empty());
    assert_eq!(a.dump, b.dump);
    assert_eq!(a, b);
    let c = run(&cfg, &ch, &config, 5).unwrap();
    assert_ne!(a.dump, c.dump);
}

#[test]
fn plain_accounting_has_no_transition_or_compute_energy() {
    let cfg = ValidatedConfig::default().with_network(4, 2, 20.0);
    let ch = scenario(ScenarioKind::Scenario1, 4, 6);
    let m = run(&cfg, &ch, &sc(System::Proposed, StopCondition::Packets(500)), 6).unwrap();
    let e = m.energy();
    assert_eq!(e.transitions, 0.0);
    assert_eq!(e.compute, 0.0);
}

#[test]
fn transition_energy_is_linear_in_power_ups() {
    let cfg = ValidatedConfig::default().with_network(4, 2, 20.0);
    let ch = scenario(ScenarioKind::Scenario1, 4, 7);
    let accounting = energy_accounting(true);
    let config = SimConfig {
        accounting,
        ..sc(System::Proposed, StopCondition::Packets(500))
    };
    let m = run(&cfg, &ch, &config, 7).unwrap();
    for n in &m.nodes {
        assert!(n.rf_power_ups > 0);
        let expected = n.rf_power_ups as f64 * accounting.transition_energy;
        assert!((n.energy.transitions - expected).abs() <= 1e-12 * expected);
    }
    assert!(m.energy().compute > 0.0);
}

#[test]
fn baseline_without_blocking_delivers_like_direct() {
    let cfg = ValidatedConfig::default().with_network(3, 1, 10.0);
    let ch = fixed(3, 0.0);
    let stop = StopCondition::Packets(1000);
    let base = run(&cfg, &ch, &sc(System::Baseline, stop), 8).unwrap();
    let direct = run(&cfg, &ch, &sc(System::DirectOnly, stop), 8).unwrap();
    for (b, d) in base.nodes.iter().zip(&direct.nodes) {
        assert_eq!(b.generated, d.generated);
        assert_eq!(b.delivered, d.delivered);
    }
}

#[test]
fn isolated_node_loses_its_share_under_baseline() {
    let mut links = LinkMatrix::uniform(3, LinkQuality::Fixed { pi_e: 0.0 });
    links.gateway[0] = LinkQuality::Blocked;
    for k in 0..3 {
        links.neighbor[0][k] = LinkQuality::Blocked;
        links.neighbor[k][0] = LinkQuality::Blocked;
    }
    let cfg = ValidatedConfig::default().with_network(3, 1, 10.0);
    let m = run(&cfg, &ChannelModel::Links(links), &sc(System::Baseline, StopCondition::Packets(1000)), 9).unwrap();
    assert_conserved(&m);
    assert_eq!(m.nodes[0].delivered, 0);
    assert_eq!(m.nodes[0].plr(), 1.0);
    // the isolated node's losses make up exactly its share of the traffic
    let share = m.nodes[0].generated as f64 / m.generated() as f64;
    assert_eq!(m.nodes[0].lost as f64 / m.generated() as f64, share);
}

#[test]
fn proposed_delivers_for_blocked_nodes() {
    let cfg = with_tuned_bcc(&ValidatedConfig::default().with_network(4, 2, 10.0), 1.0).unwrap();
    let ch = scenario(ScenarioKind::Scenario2, 4, 10);
    let config = SimConfig {
        warmup: 5.0,
        ..sc(System::Proposed, StopCondition::Packets(2000))
    };
    let m = run(&cfg, &ch, &config, 10).unwrap();
    assert_conserved(&m);
    // blocked nodes only reach the gateway through BCC forwarding
    assert!(m.nodes[0].delivered > 0 && m.nodes[1].delivered > 0);
    assert_eq!(m.monitor_violations, 0);
}

#[test]
fn trace_run_with_extended_accounting_saves_energy() {
    let trace = Arc::new(shipped_trace());
    let cfg = with_tuned_bcc(&ValidatedConfig::default().with_network(2, 1, 10.0), 1.0).unwrap();
    let ch = ChannelModel::Trace {
        trace,
        neighbor: LinkQuality::Rayleigh { mean_snr: 10.0 },
    };
    let config = |system| SimConfig {
        accounting: energy_accounting(true),
        ..sc(system, StopCondition::Time(120.0))
    };
    let prop = run(&cfg, &ch, &config(System::Proposed), 11).unwrap();
    let base = run(&cfg, &ch, &config(System::Baseline), 11).unwrap();
    assert!(
        prop.total_energy() < base.total_energy(),
        "{} vs {}",
        prop.total_energy(),
        base.total_energy()
    );
}

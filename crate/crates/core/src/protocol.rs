//! Network-layer relay selection: periodic estimation and STATUS broadcast,
//! ordered peer lists, token hand-over of the relay role and the per-packet
//! forwarding decision.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bcc_model::{solve_bcc, BccModelInput, BccModelSolution};
use crate::config::{LinkState, PerfEstimate, ValidatedConfig};
use crate::error::{ModelError, ProtocolError};
use crate::rf_model::{solve_rf, RfModelInput};

/// Loss probabilities at or above this make the direct link useless.
const CERTAIN_LOSS: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageKind {
    StatusBcc,
    TokenBcc,
    DataBcc,
    DataRf,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::StatusBcc => "STATUS_BCC",
            MessageKind::TokenBcc => "TOKEN_BCC",
            MessageKind::DataBcc => "DATA_BCC",
            MessageKind::DataRf => "DATA_RF",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Destination {
    Broadcast,
    Node(usize),
    Gateway,
}

impl fmt::Display for Destination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Destination::Broadcast => f.write_str("*"),
            Destination::Node(n) => write!(f, "{n}"),
            Destination::Gateway => f.write_str("gw"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Status { delay: f64, cost: f64 },
    Token { new_relay: usize },
    Data { packet: u64 },
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Status { delay, cost } => write!(f, "delay={delay:e};cost={cost:e}"),
            Payload::Token { new_relay } => write!(f, "new_relay={new_relay}"),
            Payload::Data { packet } => write!(f, "packet={packet}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub kind: MessageKind,
    pub src: usize,
    pub dst: Destination,
    pub payload: Payload,
    pub len_bits: u32,
}

impl ControlMessage {
    pub fn status(src: usize, estimate: &PerfEstimate, len_bits: u32) -> Self {
        ControlMessage {
            kind: MessageKind::StatusBcc,
            src,
            dst: Destination::Broadcast,
            payload: Payload::Status {
                delay: estimate.mean_delay,
                cost: estimate.energy_cost,
            },
            len_bits,
        }
    }

    pub fn token(src: usize, new_relay: usize, len_bits: u32) -> Self {
        ControlMessage {
            kind: MessageKind::TokenBcc,
            src,
            dst: Destination::Node(new_relay),
            payload: Payload::Token { new_relay },
            len_bits,
        }
    }

    /// One line of the debug dump: `time,kind,src,dst,payload`.
    pub fn debug_line(&self, time: f64) -> String {
        format!("{time:.9},{},{},{},{}", self.kind, self.src, self.dst, self.payload)
    }
}

/// Which estimate the forwarding test compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    #[default]
    Energy,
    Delay,
    /// Forward only when both the energy and the delay tests pass.
    Combined,
}

/// Which ranking decides whether a node belongs among the relays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMetric {
    #[default]
    Delay,
    /// Drop the role when at least `N_r` nodes beat this one in delay or in energy cost.
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_relays: usize,
    pub metric: MetricMode,
    pub ranking: RankingMetric,
    pub status_len_bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Direct,
    ViaRelay(usize),
}

/// Ordered `(node, value)` list, ascending by value then node id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankedList(Vec<(usize, f64)>);

fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

impl RankedList {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn value(&self, node: usize) -> Option<f64> {
        self.0.iter().find(|e| e.0 == node).map(|e| e.1)
    }

    fn upsert(&mut self, node: usize, value: f64) {
        match self.0.iter_mut().find(|e| e.0 == node) {
            Some(e) => e.1 = value,
            None => self.0.push((node, value)),
        }
        self.0.sort_by(rank_order);
    }

    /// Number of nodes ranked strictly ahead of `node`.
    pub fn ahead_of(&self, node: usize) -> usize {
        self.0.iter().position(|e| e.0 == node).unwrap_or(self.0.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeProtocolState {
    pub node_id: usize,
    pub is_relay: bool,
    pub waiting_for_token: bool,
    /// Main BCC receiver state; the wake-up receiver is always on.
    pub bcc_main_rx_on: bool,
    pub nodes_d: RankedList,
    pub nodes_e: RankedList,
    pub relays: BTreeSet<usize>,
    pub local_estimate: PerfEstimate,
    pub bcc_estimate: Option<(f64, f64)>,
    pub e_rem: f64,
    /// Set when the latest estimation failed and the previous one was reused.
    pub stale: bool,
    /// Token sent and not yet delivered.
    pub pending_token: Option<usize>,
    pub config: ProtocolConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub status: ControlMessage,
    pub token: Option<ControlMessage>,
}

impl NodeProtocolState {
    pub fn new(node_id: usize, initial_relays: &BTreeSet<usize>, e_rem: f64, config: ProtocolConfig) -> Self {
        NodeProtocolState {
            node_id,
            is_relay: initial_relays.contains(&node_id),
            waiting_for_token: false,
            bcc_main_rx_on: true,
            nodes_d: RankedList::default(),
            nodes_e: RankedList::default(),
            relays: initial_relays.clone(),
            local_estimate: PerfEstimate::new(f64::INFINITY, f64::INFINITY, e_rem, 1.0),
            bcc_estimate: None,
            e_rem,
            stale: true,
            pending_token: None,
            config,
        }
    }

    /// Record the BCC network's `(delay, energy)` estimate.
    pub fn set_bcc_estimate(&mut self, delay: f64, energy: f64) {
        self.bcc_estimate = Some((delay, energy));
    }

    /// Periodic estimation: adopt the new estimate (or keep the previous one
    /// on failure), broadcast it and process it locally.
    pub fn param_est_tick(&mut self, estimate: Result<PerfEstimate, ModelError>) -> TickOutput {
        match estimate {
            Ok(e) => {
                self.local_estimate = e;
                self.stale = false;
            }
            Err(err) => {
                log::warn!("node {}: estimation failed ({err}); re-broadcasting previous estimate", self.node_id);
                self.stale = true;
            }
        }
        let status = ControlMessage::status(self.node_id, &self.local_estimate, self.config.status_len_bits);
        let token = self.on_status(&status);
        TickOutput { status, token }
    }

    /// Nodes ranked ahead of this one under the configured ranking.
    pub fn better_count(&self) -> usize {
        let by_delay = self.nodes_d.ahead_of(self.node_id);
        match self.config.ranking {
            RankingMetric::Delay => by_delay,
            RankingMetric::Either => by_delay.max(self.nodes_e.ahead_of(self.node_id)),
        }
    }

    /// Best non-relay node by delay, the recipient of a released token.
    pub fn token_target(&self) -> Option<usize> {
        self.nodes_d
            .entries()
            .iter()
            .map(|e| e.0)
            .find(|n| *n != self.node_id && !self.relays.contains(n))
    }

    /// Whether this relay ranks outside the best `N_r` and should hand over.
    pub fn should_release(&self) -> bool {
        self.is_relay && self.better_count() >= self.config.n_relays
    }

    pub fn on_status(&mut self, msg: &ControlMessage) -> Option<ControlMessage> {
        let Payload::Status { delay, cost } = msg.payload else {
            return None;
        };
        self.nodes_d.upsert(msg.src, delay);
        self.nodes_e.upsert(msg.src, cost);
        // no own estimate yet: nothing to compare against
        self.nodes_d.value(self.node_id)?;
        let better = self.better_count();
        let n_r = self.config.n_relays;
        if self.is_relay {
            self.waiting_for_token = false;
            self.bcc_main_rx_on = true;
            if better >= n_r && self.pending_token.is_none() {
                if let Some(target) = self.token_target() {
                    self.pending_token = Some(target);
                    return Some(ControlMessage::token(self.node_id, target, self.config.status_len_bits));
                }
            }
        } else if better < n_r {
            self.waiting_for_token = true;
            self.bcc_main_rx_on = true;
        } else {
            self.waiting_for_token = false;
            self.bcc_main_rx_on = false;
        }
        None
    }

    /// A token transfer completed (every node acknowledged it).
    pub fn on_token(&mut self, msg: &ControlMessage) {
        let Payload::Token { new_relay } = msg.payload else {
            return;
        };
        self.relays.remove(&msg.src);
        self.relays.insert(new_relay);
        if msg.src == self.node_id {
            self.is_relay = false;
            self.pending_token = None;
        }
        if new_relay == self.node_id {
            if !self.waiting_for_token {
                log::info!("node {}: token from {} arrived while not waiting; honored", self.node_id, msg.src);
            }
            self.is_relay = true;
            self.waiting_for_token = false;
            self.bcc_main_rx_on = true;
        }
    }

    /// Abandon a token that could not be sent.
    pub fn cancel_token(&mut self) {
        self.pending_token = None;
    }

    /// Re-check a queued token just before it goes on the medium: the target
    /// is re-chosen from the current lists, and the token is dropped if this
    /// node no longer needs to release its role.
    pub fn revalidate_token(&mut self) -> Option<ControlMessage> {
        self.pending_token?;
        match self.token_target().filter(|_| self.should_release()) {
            Some(target) => {
                self.pending_token = Some(target);
                Some(ControlMessage::token(self.node_id, target, self.config.status_len_bits))
            }
            None => {
                self.pending_token = None;
                None
            }
        }
    }

    /// Best relay other than this node under the configured metric.
    fn best_relay(&self) -> Option<(usize, usize)> {
        let list = match self.config.metric {
            MetricMode::Delay => &self.nodes_d,
            MetricMode::Energy | MetricMode::Combined => &self.nodes_e,
        };
        list.entries()
            .iter()
            .enumerate()
            .find(|(_, e)| e.0 != self.node_id && self.relays.contains(&e.0))
            .map(|(rank, e)| (e.0, rank))
    }

    pub fn forward_decision(&self) -> Result<Route, ProtocolError> {
        if self.is_relay {
            return Ok(Route::Direct);
        }
        let (relay, relay_rank) = self.best_relay().ok_or(ProtocolError::NoRelayAvailable)?;
        let list = match self.config.metric {
            MetricMode::Delay => &self.nodes_d,
            MetricMode::Energy | MetricMode::Combined => &self.nodes_e,
        };
        if list.ahead_of(self.node_id) < relay_rank {
            return Ok(Route::Direct);
        }
        let (bcc_delay, bcc_energy) = self.bcc_estimate.unwrap_or((0.0, 0.0));
        let energy_ok = || {
            let cost = self.nodes_e.value(relay).unwrap_or(f64::INFINITY);
            energy_forwarding_wins(self.local_estimate.mean_energy, bcc_energy, cost)
        };
        let delay_ok = || {
            let d = self.nodes_d.value(relay).unwrap_or(f64::INFINITY);
            delay_forwarding_wins(self.local_estimate.mean_delay, bcc_delay, d)
        };
        let forward = match self.config.metric {
            MetricMode::Energy => energy_ok(),
            MetricMode::Delay => delay_ok(),
            MetricMode::Combined => energy_ok() && delay_ok(),
        };
        Ok(if forward { Route::ViaRelay(relay) } else { Route::Direct })
    }

    /// Forwarding decision, falling back to direct transmission without relays.
    pub fn route(&self) -> Route {
        match self.forward_decision() {
            Ok(r) => r,
            Err(e) => {
                log::warn!("node {}: {e}; sending direct", self.node_id);
                Route::Direct
            }
        }
    }
}

/// Own RF energy against BCC energy plus the relay's energy cost.
pub fn energy_forwarding_wins(local_energy: f64, bcc_energy: f64, relay_cost: f64) -> bool {
    local_energy >= bcc_energy + relay_cost
}

pub fn delay_forwarding_wins(local_delay: f64, bcc_delay: f64, relay_delay: f64) -> bool {
    local_delay >= bcc_delay + relay_delay
}

/// RF estimate of a node whose gateway link fails frames with `pi_e`,
/// evaluated as if every relay saw the same link.
pub fn estimate_rf(cfg: &ValidatedConfig, pi_e: f64, e_rem: f64) -> Result<PerfEstimate, ModelError> {
    let sol = solve_rf(&rf_input(cfg, pi_e))?;
    if sol.pi_loss >= CERTAIN_LOSS {
        // nothing gets through: the per-delivered-packet cost is unbounded
        return Ok(PerfEstimate::new(f64::INFINITY, f64::INFINITY, e_rem, sol.pi_loss));
    }
    Ok(PerfEstimate::new(sol.mean_delay, sol.mean_energy, e_rem, sol.pi_loss))
}

/// RF model input for `cfg` with every relay link failing frames with `pi_e`.
pub fn rf_input(cfg: &ValidatedConfig, pi_e: f64) -> RfModelInput {
    RfModelInput {
        relay_links: (0..cfg.network.n_relays.max(1)).map(|k| LinkState::with_pi_e(k, pi_e)).collect(),
        mac: cfg.mac,
        timing: cfg.rf_timing,
        power: cfg.rf_power,
        load_direct: cfg.network.load_direct(),
        load_forwarded: cfg.network.load_forwarded(),
        options: cfg.options,
    }
}

pub fn bcc_input(cfg: &ValidatedConfig) -> BccModelInput {
    BccModelInput {
        n_nodes: cfg.network.n_nodes,
        n_relays: cfg.network.n_relays,
        load_forwarded: cfg.network.load_forwarded(),
        mac: cfg.mac,
        timing: cfg.bcc_timing,
        power: cfg.bcc_power,
    }
}

pub fn estimate_bcc(cfg: &ValidatedConfig) -> Result<BccModelSolution, ModelError> {
    solve_bcc(&bcc_input(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n_relays: usize) -> ProtocolConfig {
        ProtocolConfig {
            n_relays,
            metric: MetricMode::Energy,
            ranking: RankingMetric::Delay,
            status_len_bits: 160,
        }
    }

    fn status(src: usize, delay: f64, cost: f64) -> ControlMessage {
        ControlMessage {
            kind: MessageKind::StatusBcc,
            src,
            dst: Destination::Broadcast,
            payload: Payload::Status { delay, cost },
            len_bits: 160,
        }
    }

    fn nodes(n: usize, relays: &[usize], n_r: usize) -> Vec<NodeProtocolState> {
        let set: BTreeSet<usize> = relays.iter().copied().collect();
        (0..n).map(|i| NodeProtocolState::new(i, &set, 100.0, config(n_r))).collect()
    }

    /// Deliver a status to every node (the sender included) and collect tokens.
    fn broadcast(net: &mut [NodeProtocolState], msg: &ControlMessage) -> Vec<ControlMessage> {
        net.iter_mut().filter_map(|s| s.on_status(msg)).collect()
    }

    #[test]
    fn energy_cost_examples() {
        let e = PerfEstimate::new(1e-3, 1e-3, 100.0, 0.0);
        assert!((e.energy_cost - 1e-8).abs() <= 1e-20);
        let half = PerfEstimate::new(1e-3, 1e-3, 50.0, 0.0);
        assert!((half.energy_cost - 2.0 * e.energy_cost).abs() <= 1e-20);
    }

    #[test]
    fn fig5_relay_drops_after_degrading() {
        // five nodes, relays {1, 2}; node 2 degrades to last place
        let mut net = nodes(5, &[1, 2], 2);
        let initial = [(0, 3.0), (1, 1.0), (2, 2.0), (3, 4.0), (4, 5.0)];
        for (n, d) in initial {
            assert!(broadcast(&mut net, &status(n, d, d)).is_empty());
        }
        assert!(!net[0].waiting_for_token);
        assert!(!net[3].bcc_main_rx_on);
        let tokens = broadcast(&mut net, &status(2, 9.0, 9.0));
        assert!(net[0].waiting_for_token);
        assert_eq!(tokens.len(), 1);
        let token = tokens[0];
        assert_eq!(token.src, 2);
        assert_eq!(token.payload, Payload::Token { new_relay: 0 });
        // every node applies the acknowledged transfer
        for s in net.iter_mut() {
            s.on_token(&token);
        }
        assert!(net[0].is_relay && !net[2].is_relay);
        for s in &net {
            assert_eq!(s.relays, BTreeSet::from([0, 1]));
            assert_eq!(s.nodes_d, net[0].nodes_d);
        }
    }

    #[test]
    fn repeated_status_is_idempotent() {
        let mut net = nodes(4, &[0, 1], 2);
        for (n, d) in [(0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0)] {
            broadcast(&mut net, &status(n, d, d));
        }
        let before = net.clone();
        assert!(broadcast(&mut net, &status(2, 3.0, 3.0)).is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn unknown_node_is_registered() {
        let mut net = nodes(3, &[0], 1);
        net[0].on_status(&status(7, 1.0, 1.0));
        assert_eq!(net[0].nodes_d.value(7), Some(1.0));
    }

    #[test]
    fn tie_breaks_by_node_id() {
        let mut s = nodes(3, &[0], 1).remove(2);
        s.on_status(&status(2, 1.0, 1.0));
        s.on_status(&status(0, 1.0, 1.0));
        s.on_status(&status(1, 1.0, 1.0));
        assert_eq!(s.nodes_d.entries().iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(s.better_count(), 2);
    }

    #[test]
    fn overheard_token_updates_relays_only() {
        let mut net = nodes(4, &[0], 1);
        let token = ControlMessage::token(0, 2, 160);
        net[3].on_token(&token);
        assert!(!net[3].is_relay);
        assert_eq!(net[3].relays, BTreeSet::from([2]));
    }

    #[test]
    fn token_while_not_waiting_is_honored() {
        let mut net = nodes(4, &[0], 1);
        let token = ControlMessage::token(0, 2, 160);
        assert!(!net[2].waiting_for_token);
        net[2].on_token(&token);
        assert!(net[2].is_relay);
    }

    #[test]
    fn addressed_waiting_node_becomes_relay() {
        let mut net = nodes(2, &[0], 1);
        net[1].waiting_for_token = true;
        net[1].on_token(&ControlMessage::token(0, 1, 160));
        assert!(net[1].is_relay && !net[1].waiting_for_token);
    }

    fn with_lists(node: usize, relays: &[usize], entries: &[(usize, f64, f64)], metric: MetricMode) -> NodeProtocolState {
        let set: BTreeSet<usize> = relays.iter().copied().collect();
        let mut cfg = config(relays.len());
        cfg.metric = metric;
        let mut s = NodeProtocolState::new(node, &set, 100.0, cfg);
        for &(n, d, c) in entries {
            s.nodes_d.upsert(n, d);
            s.nodes_e.upsert(n, c);
        }
        s
    }

    #[test]
    fn energy_decision_example() {
        let mut s = with_lists(3, &[0], &[(0, 1e-3, 2e-3), (3, 5e-3, 5e-3)], MetricMode::Energy);
        s.local_estimate = PerfEstimate::new(5e-3, 10e-3, 100.0, 0.0);
        s.set_bcc_estimate(1e-3, 0.1e-3);
        assert_eq!(s.forward_decision(), Ok(Route::ViaRelay(0)));
    }

    #[test]
    fn best_node_sends_direct() {
        let mut s = with_lists(3, &[0], &[(0, 2e-3, 2e-3), (3, 1e-3, 1e-6)], MetricMode::Energy);
        s.local_estimate = PerfEstimate::new(1e-3, 10e-3, 100.0, 0.0);
        s.set_bcc_estimate(1e-3, 0.0);
        assert_eq!(s.forward_decision(), Ok(Route::Direct));
    }

    #[test]
    fn relay_always_sends_direct() {
        let mut s = with_lists(0, &[0, 1], &[(0, 9.0, 9.0), (1, 1.0, 1.0)], MetricMode::Energy);
        s.local_estimate = PerfEstimate::new(9.0, 9.0, 100.0, 0.0);
        assert_eq!(s.forward_decision(), Ok(Route::Direct));
    }

    #[test]
    fn no_relay_available() {
        let s = with_lists(1, &[], &[(1, 1.0, 1.0)], MetricMode::Energy);
        assert_eq!(s.forward_decision(), Err(ProtocolError::NoRelayAvailable));
        assert_eq!(s.route(), Route::Direct);
    }

    #[test]
    fn blocked_link_forwards() {
        let cfg = ValidatedConfig::default();
        let blocked = estimate_rf(&cfg, 1.0, 100.0).unwrap();
        assert!(blocked.mean_energy.is_infinite() && blocked.mean_delay.is_infinite());
        let good = estimate_rf(&cfg, 0.05, 100.0).unwrap();
        let bcc = estimate_bcc(&cfg).unwrap();
        for metric in [MetricMode::Energy, MetricMode::Delay, MetricMode::Combined] {
            let mut s = with_lists(
                3,
                &[0, 1],
                &[(0, good.mean_delay, good.energy_cost), (1, good.mean_delay, good.energy_cost), (3, blocked.mean_delay, blocked.energy_cost)],
                metric,
            );
            s.local_estimate = blocked;
            s.set_bcc_estimate(bcc.mean_delay, bcc.mean_energy);
            assert_eq!(s.forward_decision(), Ok(Route::ViaRelay(0)));
        }
    }

    #[test]
    fn debug_line_format() {
        let m = ControlMessage::token(2, 0, 160);
        assert_eq!(m.debug_line(1.5), "1.500000000,TOKEN_BCC,2,0,new_relay=0");
        let s = status(4, 2.5e-3, 1e-8);
        assert_eq!(s.debug_line(0.0), "0.000000000,STATUS_BCC,4,*,delay=2.5e-3;cost=1e-8");
    }

    /// Exhaustive 4-node check against a direct ranking oracle: after every
    /// node has heard every status, the releasing relays are exactly the
    /// relays outside the best `N_r`, the waiting nodes exactly the
    /// non-relays inside it, and serialized hand-overs converge to that set.
    #[test]
    fn exhaustive_four_node_states() {
        let n = 4;
        let mut perms = Vec::new();
        permutations(&mut (0..n).collect::<Vec<_>>(), 0, &mut perms);
        for n_r in 1..=n {
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != n_r {
                    continue;
                }
                let relays: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                for order in &perms {
                    // order[k] is the node in rank k
                    let delay = |node: usize| order.iter().position(|&x| x == node).unwrap() as f64;
                    let top: BTreeSet<usize> = order[..n_r].iter().copied().collect();
                    let mut net = nodes(n, &relays, n_r);
                    let mut tokens = Vec::new();
                    for i in 0..n {
                        tokens.extend(broadcast(&mut net, &status(i, delay(i), delay(i))));
                    }
                    let releasing: BTreeSet<usize> = net.iter().filter(|s| s.should_release()).map(|s| s.node_id).collect();
                    let waiting: BTreeSet<usize> = net.iter().filter(|s| s.waiting_for_token).map(|s| s.node_id).collect();
                    let relay_set: BTreeSet<usize> = relays.iter().copied().collect();
                    assert_eq!(releasing, relay_set.difference(&top).copied().collect());
                    assert_eq!(waiting, top.difference(&relay_set).copied().collect());
                    if n_r == n {
                        assert!(tokens.is_empty());
                    }
                    // serialized transfers: one token in flight, re-checked when sent
                    let mut queue: Vec<usize> = tokens.iter().map(|t| t.src).collect();
                    let mut guard = 0;
                    while let Some(src) = queue.first().copied() {
                        queue.remove(0);
                        let Some(tok) = net[src].revalidate_token() else { continue };
                        for s in net.iter_mut() {
                            s.on_token(&tok);
                        }
                        for s in &net {
                            assert_eq!(s.relays.len(), n_r);
                        }
                        // the next status round lets remaining relays release
                        if queue.is_empty() {
                            for i in 0..n {
                                queue.extend(broadcast(&mut net, &status(i, delay(i), delay(i))).iter().map(|t| t.src));
                            }
                        }
                        guard += 1;
                        assert!(guard < 20);
                    }
                    let final_relays: BTreeSet<usize> = net.iter().filter(|s| s.is_relay).map(|s| s.node_id).collect();
                    assert_eq!(final_relays, top);
                }
            }
        }
    }

    fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permutations(items, k + 1, out);
            items.swap(k, i);
        }
    }

    proptest::proptest! {
        #[test]
        fn decision_is_scale_invariant(local in 1e-9f64..1e-1, bcc in 1e-9f64..1e-1, relay in 1e-9f64..1e-1, k in 1e-3f64..1e3) {
            // powers of two keep the scaled comparison exact
            let k = 2f64.powi(k.log2().round() as i32);
            proptest::prop_assert_eq!(
                energy_forwarding_wins(local, bcc, relay),
                energy_forwarding_wins(local * k, bcc * k, relay * k)
            );
            proptest::prop_assert_eq!(
                delay_forwarding_wins(local, bcc, relay),
                delay_forwarding_wins(local * k, bcc * k, relay * k)
            );
        }
    }
}

//! The discrete-event engine: Poisson sources, unslotted CSMA/CA on RF,
//! low-power-listening MAC on BCC, and the relay-selection protocol.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::config::{db_to_linear, linear_to_db, PerfEstimate, ValidatedConfig};
use crate::error::{ModelError, SimError};
use crate::optimizer::{optimize_bcc, BccOptProblem};
use crate::rf_model::link_failure_prob;
use crate::protocol::{
    bcc_input, estimate_bcc, estimate_rf, ControlMessage, Destination, MessageKind, MetricMode, NodeProtocolState, Payload,
    ProtocolConfig, RankingMetric, Route,
};
use crate::sim::channel::{ChannelModel, ExchangeOutcome, Hop};
use crate::sim::event::{EventKind, EventQueue, Radio};
use crate::sim::metrics::{NodeMetrics, RunMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    /// RF to the gateway plus BCC forwarding to elected relays.
    Proposed,
    /// RF only; a node whose gateway link is lost relays through an RF neighbor.
    Baseline,
    /// RF only, every node on its own link.
    DirectOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCondition {
    /// Each node generates this many packets; the run ends once all are resolved.
    Packets(u64),
    /// Simulated seconds.
    Time(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAccounting {
    pub extended: bool,
    /// Energy of one RF power-up/power-down cycle, J.
    pub transition_energy: f64,
    /// Energy of one protocol invocation (STATUS processing or forwarding decision), J.
    pub compute_energy: f64,
}

/// CC2420 start-up: about 1 ms of oscillator and regulator settling at the
/// receive current, 1.8 V.
pub const DEFAULT_TRANSITION_ENERGY: f64 = 1.0e-3 * 17.4e-3 * 1.8;
/// Estimate: 1 ms on an MSP430-class MCU at 3 mW.
pub const DEFAULT_COMPUTE_ENERGY: f64 = 3.0e-6;

pub fn energy_accounting(extended: bool) -> EnergyAccounting {
    EnergyAccounting {
        extended,
        transition_energy: DEFAULT_TRANSITION_ENERGY,
        compute_energy: DEFAULT_COMPUTE_ENERGY,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub system: System,
    pub stop: StopCondition,
    pub accounting: EnergyAccounting,
    pub metric: MetricMode,
    pub ranking: RankingMetric,
    /// Initial battery energy of every node, J.
    pub battery: f64,
    /// Packets generated before this time are excluded from steady-state counts.
    pub warmup: f64,
    pub max_events: u64,
    pub dump: bool,
    /// Retries of a BCC frame after a collision (any frame) or a CCA
    /// failure (control frames) before it is abandoned.
    pub bcc_retries: u32,
    /// Baseline: estimated frame-failure probability at which a node gives
    /// up its gateway link and relays through a neighbor.
    pub blocked_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            system: System::Proposed,
            stop: StopCondition::Packets(1000),
            accounting: energy_accounting(false),
            metric: MetricMode::Energy,
            ranking: RankingMetric::Delay,
            battery: 100.0,
            warmup: 0.0,
            max_events: 50_000_000,
            dump: false,
            bcc_retries: 5,
            blocked_threshold: 0.99,
        }
    }
}

/// Copy of `cfg` whose BCC sleep/listen intervals and CCA limit minimize BCC
/// energy subject to a forwarded-packet delay of at most `tau`.
pub fn with_tuned_bcc(cfg: &ValidatedConfig, tau: f64) -> Result<ValidatedConfig, SimError> {
    let rf_delay = estimate_rf(cfg, 0.0, 1.0).map(|e| e.mean_delay).unwrap_or(0.0);
    let best = optimize_bcc(&BccOptProblem::new(bcc_input(cfg), rf_delay, tau))?.best_params;
    let mut out = cfg.clone();
    out.mac.r_s = best.r_s;
    out.mac.r_l = best.r_l;
    out.mac.m_mp = best.m_mp;
    Ok(out)
}

const STREAM_ARRIVAL: u64 = 0;
const STREAM_CHANNEL: u64 = 1;
const STREAM_BACKOFF: u64 = 2;
const STREAM_BCC: u64 = 3;
const STREAM_PROBE: u64 = 4;

/// Independent random stream per node and purpose.
pub fn substream(seed: u64, node: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((node as u64) << 8 | purpose);
    rng
}

#[derive(Debug, Clone, Copy)]
enum RfDst {
    Gateway,
    Node(usize),
}

#[derive(Debug, Clone, Copy)]
struct RfFrame {
    packet: usize,
    dst: RfDst,
}

#[derive(Debug, Default)]
struct RfMac {
    queue: VecDeque<RfFrame>,
    active: bool,
    stage: u32,
    round: u32,
    hol_start: f64,
    service_energy: f64,
    outcome: Option<ExchangeOutcome>,
    data_ok: bool,
    tx: usize,
}

#[derive(Debug, Clone)]
enum BccKind {
    Data { packet: usize, dst: usize },
    Status(ControlMessage),
    /// Message is fixed at send time after revalidation.
    Token(Option<ControlMessage>),
}

#[derive(Debug, Clone)]
struct BccItem {
    kind: BccKind,
    retries: u32,
}

#[derive(Debug, Default)]
struct BccMac {
    ctrl: VecDeque<BccItem>,
    data: VecDeque<BccItem>,
    current: Option<BccItem>,
    stage: u32,
    tx: usize,
    /// Offset of this node's sleep/listen schedule.
    phase: f64,
}

struct Node {
    arrivals: ChaCha8Rng,
    channel: ChaCha8Rng,
    backoff: ChaCha8Rng,
    bcc_rng: ChaCha8Rng,
    probe: ChaCha8Rng,
    rate: f64,
    generated: u64,
    rf: RfMac,
    bcc: BccMac,
    proto: Option<NodeProtocolState>,
    baseline_relay: Option<usize>,
    relayed: HashSet<usize>,
    rf_busy: f64,
    bcc_busy: f64,
    /// Sum of SNR readings (dB) of gateway frames since the last tick.
    snr_sum: f64,
    snr_count: u32,
}

#[derive(Debug, Clone, Copy)]
struct PacketRecord {
    origin: usize,
    created: f64,
    steady: bool,
    copies: u32,
    delivered: bool,
    resolved: bool,
}

/// One transmission on a shared medium. `data_end` splits the frame from
/// its acknowledgment.
#[derive(Debug, Clone, Copy)]
struct Occupancy {
    id: usize,
    start: f64,
    data_end: f64,
    end: f64,
    data_hit: bool,
    ack_hit: bool,
}

#[derive(Debug, Default)]
struct Medium {
    active: Vec<Occupancy>,
    next_id: usize,
}

impl Medium {
    fn busy(&self, from: f64, to: f64) -> bool {
        self.active.iter().any(|o| o.start < to && o.end > from)
    }

    fn start(&mut self, start: f64, data_end: f64, end: f64) -> usize {
        let mut new = Occupancy {
            id: self.next_id,
            start,
            data_end,
            end,
            data_hit: false,
            ack_hit: false,
        };
        self.next_id += 1;
        for o in &mut self.active {
            if o.start < end && o.end > start {
                let lo = o.start.max(start);
                let hi = o.end.min(end);
                o.data_hit |= lo < o.data_end;
                o.ack_hit |= hi > o.data_end;
                new.data_hit |= lo < data_end;
                new.ack_hit |= hi > data_end;
            }
        }
        self.active.push(new);
        new.id
    }

    /// End of the occupancy chain covering `now`.
    fn free_at(&self, now: f64) -> f64 {
        let mut t = now;
        loop {
            let next = self.active.iter().filter(|o| o.start <= t && o.end > t).map(|o| o.end).fold(t, f64::max);
            if next == t {
                return t;
            }
            t = next;
        }
    }

    fn get(&self, id: usize) -> Occupancy {
        *self.active.iter().find(|o| o.id == id).expect("live transmission")
    }

    fn prune(&mut self, now: f64, margin: f64) {
        self.active.retain(|o| o.end + margin >= now);
    }
}

struct Sim<'a> {
    cfg: &'a ValidatedConfig,
    sc: &'a SimConfig,
    ch: &'a ChannelModel,
    now: f64,
    q: EventQueue,
    nodes: Vec<Node>,
    metrics: Vec<NodeMetrics>,
    packets: Vec<PacketRecord>,
    rf_medium: Medium,
    bcc_medium: Medium,
    token_lock: Option<usize>,
    outstanding: u64,
    relay_changes: u64,
    violations: u64,
    duplicates: u64,
    dump: Vec<String>,
    estimates: HashMap<u64, Result<PerfEstimate, ModelError>>,
    events: u64,
}

/// Simulate `cfg` on `channel` for the system in `sc`.
pub fn run(cfg: &ValidatedConfig, channel: &ChannelModel, sc: &SimConfig, seed: u64) -> Result<RunMetrics, SimError> {
    let n = cfg.network.n_nodes;
    if channel.n_nodes() != n {
        return Err(SimError::Scenario(format!(
            "channel describes {} nodes, config has {n}",
            channel.n_nodes()
        )));
    }
    let mut sim = Sim::new(cfg, channel, sc, seed)?;
    sim.execute();
    Ok(sim.finish())
}

/// The RF-only comparison system on the same inputs.
pub fn run_baseline(cfg: &ValidatedConfig, channel: &ChannelModel, sc: &SimConfig, seed: u64) -> Result<RunMetrics, SimError> {
    let sc = SimConfig {
        system: System::Baseline,
        ..sc.clone()
    };
    run(cfg, channel, &sc, seed)
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ValidatedConfig, ch: &'a ChannelModel, sc: &'a SimConfig, seed: u64) -> Result<Self, SimError> {
        let n = cfg.network.n_nodes;
        let relays: BTreeSet<usize> = (0..cfg.network.n_relays).collect();
        let bcc_estimate = match sc.system {
            System::Proposed => Some(match estimate_bcc(cfg) {
                Ok(sol) => (sol.mean_delay, sol.mean_energy),
                Err(e) => {
                    log::warn!("BCC model failed ({e}); forwarding disabled");
                    (f64::INFINITY, f64::INFINITY)
                }
            }),
            _ => None,
        };
        let cycle = cfg.mac.r_s + cfg.mac.r_l;
        let nodes = (0..n)
            .map(|i| {
                let mut bcc_rng = substream(seed, i, STREAM_BCC);
                let phase = bcc_rng.gen_range(0.0..cycle);
                let proto = bcc_estimate.map(|(d, e)| {
                    let mut p = NodeProtocolState::new(
                        i,
                        &relays,
                        sc.battery,
                        ProtocolConfig {
                            n_relays: cfg.network.n_relays,
                            metric: sc.metric,
                            ranking: sc.ranking,
                            status_len_bits: cfg.network.status_len_bits,
                        },
                    );
                    p.set_bcc_estimate(d, e);
                    p
                });
                Node {
                    arrivals: substream(seed, i, STREAM_ARRIVAL),
                    channel: substream(seed, i, STREAM_CHANNEL),
                    backoff: substream(seed, i, STREAM_BACKOFF),
                    bcc_rng,
                    probe: substream(seed, i, STREAM_PROBE),
                    rate: cfg.network.per_node_rate[i],
                    generated: 0,
                    rf: RfMac::default(),
                    bcc: BccMac {
                        phase,
                        ..Default::default()
                    },
                    proto,
                    baseline_relay: None,
                    relayed: HashSet::new(),
                    rf_busy: 0.0,
                    bcc_busy: 0.0,
                    snr_sum: 0.0,
                    snr_count: 0,
                }
            })
            .collect();
        let mut sim = Sim {
            cfg,
            sc,
            ch,
            now: 0.0,
            q: EventQueue::new(),
            nodes,
            metrics: vec![NodeMetrics::default(); n],
            packets: Vec::new(),
            rf_medium: Medium::default(),
            bcc_medium: Medium::default(),
            token_lock: None,
            outstanding: 0,
            relay_changes: 0,
            violations: 0,
            duplicates: 0,
            dump: Vec::new(),
            estimates: HashMap::new(),
            events: 0,
        };
        for i in 0..n {
            sim.schedule_arrival(i);
            if sc.system != System::DirectOnly {
                // unsynchronized clocks: each node ticks with its own phase
                let phase = sim.nodes[i].probe.gen_range(0.0..cfg.network.est_period);
                sim.q.schedule(phase, EventKind::EstTick, i);
            }
        }
        Ok(sim)
    }

    fn budget_reached(&self, i: usize) -> bool {
        match self.sc.stop {
            StopCondition::Packets(b) => self.nodes[i].generated >= b,
            StopCondition::Time(_) => false,
        }
    }

    fn done(&self) -> bool {
        match self.sc.stop {
            StopCondition::Packets(_) => {
                self.outstanding == 0 && (0..self.nodes.len()).all(|i| self.budget_reached(i) || self.nodes[i].rate <= 0.0)
            }
            StopCondition::Time(_) => false,
        }
    }

    fn execute(&mut self) {
        let horizon = match self.sc.stop {
            StopCondition::Time(t) => t,
            StopCondition::Packets(_) => f64::INFINITY,
        };
        let mut events = 0u64;
        while !self.done() {
            match self.q.peek_time() {
                Some(t) if t <= horizon => {}
                _ => {
                    if horizon.is_finite() {
                        self.now = horizon;
                    }
                    break;
                }
            }
            if events >= self.sc.max_events {
                break;
            }
            let ev = self.q.pop().expect("peeked");
            events += 1;
            self.now = ev.time;
            let i = ev.node;
            match ev.kind {
                EventKind::PacketArrival => self.on_arrival(i),
                EventKind::BackoffExpiry(Radio::Rf) => self.rf_cca_start(i),
                EventKind::CcaResult(Radio::Rf) => self.rf_cca_result(i),
                EventKind::TxEnd(Radio::Rf) => self.rf_data_end(i),
                EventKind::AckTimeout => self.rf_ack_end(i),
                EventKind::BackoffExpiry(Radio::Bcc) => self.bcc_cca_start(i),
                EventKind::CcaResult(Radio::Bcc) => self.bcc_cca_result(i),
                EventKind::TxEnd(Radio::Bcc) => self.bcc_exchange_end(i),
                EventKind::EstTick => self.on_tick(i),
            }
            if events.is_multiple_of(1024) {
                self.rf_medium.prune(self.now, 0.1);
                self.bcc_medium.prune(self.now, 0.1);
            }
        }
        self.events = events;
    }
}


// sources and packet bookkeeping
impl Sim<'_> {
    fn schedule_arrival(&mut self, i: usize) {
        if self.nodes[i].rate <= 0.0 || self.budget_reached(i) {
            return;
        }
        let node = &mut self.nodes[i];
        let gap = Exp::new(node.rate).expect("positive rate").sample(&mut node.arrivals);
        self.q.schedule(self.now + gap, EventKind::PacketArrival, i);
    }

    fn on_arrival(&mut self, i: usize) {
        let id = self.packets.len();
        let steady = self.now >= self.sc.warmup;
        self.packets.push(PacketRecord {
            origin: i,
            created: self.now,
            steady,
            copies: 1,
            delivered: false,
            resolved: false,
        });
        self.outstanding += 1;
        self.nodes[i].generated += 1;
        let m = &mut self.metrics[i];
        m.generated += 1;
        if steady {
            m.steady_generated += 1;
        }
        match self.sc.system {
            System::Proposed => {
                self.charge_compute(i);
                let route = self.nodes[i].proto.as_ref().expect("proposed node").route();
                match route {
                    Route::Direct => self.rf_enqueue(i, RfFrame { packet: id, dst: RfDst::Gateway }),
                    Route::ViaRelay(dst) => {
                        self.nodes[i].bcc.data.push_back(BccItem {
                            kind: BccKind::Data { packet: id, dst },
                            retries: 0,
                        });
                        self.bcc_kick(i);
                    }
                }
            }
            System::Baseline => {
                let dst = self.nodes[i].baseline_relay.map_or(RfDst::Gateway, RfDst::Node);
                self.rf_enqueue(i, RfFrame { packet: id, dst });
            }
            System::DirectOnly => self.rf_enqueue(i, RfFrame { packet: id, dst: RfDst::Gateway }),
        }
        self.schedule_arrival(i);
    }

    /// The gateway has the data frame; the delay runs to the end of its ACK.
    fn gateway_receive(&mut self, packet: usize) {
        let t = self.cfg.rf_timing;
        let done = self.now + t.t_att + t.t_ack;
        let rec = &mut self.packets[packet];
        if rec.delivered {
            self.duplicates += 1;
            return;
        }
        rec.delivered = true;
        rec.resolved = true;
        let rec = *rec;
        self.outstanding -= 1;
        let m = &mut self.metrics[rec.origin];
        m.delivered += 1;
        m.delays.push(done - rec.created);
        if rec.steady {
            m.steady_delivered += 1;
        }
    }

    /// A holder is done with its copy; the packet is lost once no copy is left.
    fn release_copy(&mut self, packet: usize) {
        let rec = &mut self.packets[packet];
        rec.copies -= 1;
        if rec.copies > 0 || rec.resolved {
            return;
        }
        rec.resolved = true;
        let rec = *rec;
        self.outstanding -= 1;
        let m = &mut self.metrics[rec.origin];
        m.lost += 1;
        if rec.steady {
            m.steady_lost += 1;
        }
    }

    fn charge_compute(&mut self, i: usize) {
        if self.sc.accounting.extended {
            self.metrics[i].energy.compute += self.sc.accounting.compute_energy;
        }
    }

    fn power_up_rf(&mut self, i: usize) {
        self.metrics[i].rf_power_ups += 1;
        if self.sc.accounting.extended {
            self.metrics[i].energy.transitions += self.sc.accounting.transition_energy;
        }
    }

    fn log_message(&mut self, msg: &ControlMessage) {
        if self.sc.dump {
            self.dump.push(msg.debug_line(self.now));
        }
    }

    fn data_message(&self, kind: MessageKind, src: usize, dst: Destination, packet: usize) -> ControlMessage {
        ControlMessage {
            kind,
            src,
            dst,
            payload: Payload::Data { packet: packet as u64 },
            len_bits: self.cfg.network.payload_bits,
        }
    }
}

// RF: unslotted CSMA/CA with one CCA per attempt
impl Sim<'_> {
    fn rf_enqueue(&mut self, i: usize, frame: RfFrame) {
        self.nodes[i].rf.queue.push_back(frame);
        if !self.nodes[i].rf.active {
            self.power_up_rf(i);
            self.rf_start_service(i);
        }
    }

    fn rf_start_service(&mut self, i: usize) {
        let rf = &mut self.nodes[i].rf;
        if rf.active || rf.queue.is_empty() {
            return;
        }
        rf.active = true;
        rf.stage = 0;
        rf.round = 0;
        rf.hol_start = self.now;
        rf.service_energy = 0.0;
        self.rf_backoff(i);
    }

    fn rf_backoff(&mut self, i: usize) {
        let w = self.cfg.mac.window(self.nodes[i].rf.stage);
        let slots = self.nodes[i].backoff.gen_range(0..w);
        let dur = slots as f64 * self.cfg.rf_timing.t_slot;
        let e = dur * self.cfg.rf_power.p_act;
        self.metrics[i].energy.active += e;
        let node = &mut self.nodes[i];
        node.rf.service_energy += e;
        node.rf_busy += dur;
        self.q.schedule(self.now + dur, EventKind::BackoffExpiry(Radio::Rf), i);
    }

    fn rf_cca_start(&mut self, i: usize) {
        let t = self.cfg.rf_timing.t_cca;
        let e = t * self.cfg.rf_power.p_cca;
        self.metrics[i].energy.cca += e;
        let node = &mut self.nodes[i];
        node.rf.service_energy += e;
        node.rf_busy += t;
        self.q.schedule(self.now + t, EventKind::CcaResult(Radio::Rf), i);
    }

    fn rf_cca_result(&mut self, i: usize) {
        let timing = self.cfg.rf_timing;
        if self.rf_medium.busy(self.now - timing.t_cca, self.now) {
            let rf = &mut self.nodes[i].rf;
            rf.stage += 1;
            if rf.stage >= self.cfg.mac.m_c {
                self.rf_finish(i, false);
            } else {
                self.rf_backoff(i);
            }
            return;
        }
        let frame = *self.nodes[i].rf.queue.front().expect("frame in service");
        let hop = match frame.dst {
            RfDst::Gateway => Hop::Gateway(i),
            RfDst::Node(j) => Hop::Neighbor(i, j),
        };
        let outcome = self
            .ch
            .exchange(hop, self.now, &mut self.nodes[i].channel, self.cfg.network.payload_bits, &self.cfg.options);
        let data_end = self.now + timing.t_data;
        let tx = self.rf_medium.start(self.now, data_end, data_end + timing.t_att + timing.t_ack);
        let p = self.cfg.rf_power;
        let e_tx = timing.t_data * p.p_tx;
        let e_act = timing.t_att * p.p_act;
        let e_rx = timing.t_ack * p.p_rx;
        let m = &mut self.metrics[i];
        m.energy.tx += e_tx;
        m.energy.active += e_act;
        m.energy.rx += e_rx;
        let node = &mut self.nodes[i];
        node.rf.service_energy += e_tx + e_act + e_rx;
        node.rf_busy += timing.exchange();
        node.rf.outcome = Some(outcome);
        node.rf.tx = tx;
        if let (RfDst::Gateway, Some(snr)) = (frame.dst, outcome.snr) {
            node.snr_sum += linear_to_db(snr);
            node.snr_count += 1;
        }
        let dst = match frame.dst {
            RfDst::Gateway => Destination::Gateway,
            RfDst::Node(j) => Destination::Node(j),
        };
        if self.sc.dump {
            let msg = self.data_message(MessageKind::DataRf, i, dst, frame.packet);
            self.log_message(&msg);
        }
        self.q.schedule(data_end, EventKind::TxEnd(Radio::Rf), i);
    }

    /// The data frame is over: the receiver has it or not.
    fn rf_data_end(&mut self, i: usize) {
        let occ = self.rf_medium.get(self.nodes[i].rf.tx);
        let outcome = self.nodes[i].rf.outcome.expect("frame on air");
        let data_ok = outcome.data_ok && !occ.data_hit;
        self.nodes[i].rf.data_ok = data_ok;
        let frame = *self.nodes[i].rf.queue.front().expect("frame in service");
        if data_ok {
            match frame.dst {
                RfDst::Gateway => self.gateway_receive(frame.packet),
                RfDst::Node(j) => {
                    let t = self.cfg.rf_timing;
                    let p = self.cfg.rf_power;
                    let m = &mut self.metrics[j];
                    m.energy.rx += t.t_data * p.p_rx;
                    m.energy.active += t.t_att * p.p_act;
                    m.energy.tx += t.t_ack * p.p_tx;
                    self.nodes[j].rf_busy += t.exchange();
                    if self.nodes[j].relayed.insert(frame.packet) {
                        self.packets[frame.packet].copies += 1;
                        self.rf_enqueue(j, RfFrame { packet: frame.packet, dst: RfDst::Gateway });
                    }
                }
            }
        }
        let t = self.cfg.rf_timing;
        self.q.schedule(self.now + t.t_att + t.t_ack, EventKind::AckTimeout, i);
    }

    fn rf_ack_end(&mut self, i: usize) {
        let occ = self.rf_medium.get(self.nodes[i].rf.tx);
        let rf = &self.nodes[i].rf;
        let acked = rf.data_ok && rf.outcome.expect("frame on air").ack_ok && !occ.ack_hit;
        if occ.data_hit || occ.ack_hit {
            self.metrics[i].collisions += 1;
        }
        let rf = &mut self.nodes[i].rf;
        rf.round += 1;
        if acked || rf.round >= self.cfg.mac.m_r {
            self.rf_finish(i, acked);
        } else {
            rf.stage = 0;
            self.rf_backoff(i);
        }
    }

    fn rf_finish(&mut self, i: usize, acked: bool) {
        let rf = &mut self.nodes[i].rf;
        let frame = rf.queue.pop_front().expect("frame in service");
        rf.active = false;
        let m = &mut self.metrics[i];
        m.services += 1;
        m.service_delay_sum += self.now - rf.hol_start;
        m.service_energy += rf.service_energy;
        if !acked {
            m.service_failures += 1;
        }
        self.release_copy(frame.packet);
        // the busy period continues without another power-up
        self.rf_start_service(i);
    }
}

// BCC: preamble sampling with CSMA before the preamble
impl Sim<'_> {
    fn enqueue_token(&mut self, i: usize) {
        let bcc = &mut self.nodes[i].bcc;
        let queued = bcc.ctrl.iter().any(|it| matches!(it.kind, BccKind::Token(_)));
        let sending = matches!(bcc.current, Some(BccItem { kind: BccKind::Token(_), .. }));
        if !queued && !sending {
            bcc.ctrl.push_back(BccItem {
                kind: BccKind::Token(None),
                retries: 0,
            });
        }
        self.bcc_kick(i);
    }

    /// Start the next frame if the MAC is idle: control first, a token only
    /// while no other token is in flight.
    fn bcc_kick(&mut self, i: usize) {
        while self.nodes[i].bcc.current.is_none() {
            let lock_free = self.token_lock.is_none();
            let bcc = &mut self.nodes[i].bcc;
            let pos = bcc.ctrl.iter().position(|it| !matches!(it.kind, BccKind::Token(_)) || lock_free);
            let mut item = match pos {
                Some(p) => bcc.ctrl.remove(p).expect("position valid"),
                None => match bcc.data.pop_front() {
                    Some(it) => it,
                    None => return,
                },
            };
            if let BccKind::Token(_) = item.kind {
                let proto = self.nodes[i].proto.as_mut().expect("proposed node");
                match proto.revalidate_token() {
                    Some(msg) => {
                        item.kind = BccKind::Token(Some(msg));
                        self.token_lock = Some(i);
                    }
                    None => continue,
                }
            }
            let bcc = &mut self.nodes[i].bcc;
            bcc.current = Some(item);
            bcc.stage = 0;
            self.bcc_backoff(i);
        }
    }

    fn bcc_backoff(&mut self, i: usize) {
        self.bcc_backoff_after(i, 0.0);
    }

    /// Backoff starting after `wait` seconds spent listening.
    fn bcc_backoff_after(&mut self, i: usize, wait: f64) {
        let w = self.cfg.mac.window(self.nodes[i].bcc.stage);
        let slots = self.nodes[i].bcc_rng.gen_range(0..w);
        let dur = wait + slots as f64 * self.cfg.bcc_timing.t_slot;
        self.metrics[i].energy.active += dur * self.cfg.bcc_power.p_act;
        self.nodes[i].bcc_busy += dur;
        self.q.schedule(self.now + dur, EventKind::BackoffExpiry(Radio::Bcc), i);
    }

    fn bcc_cca_start(&mut self, i: usize) {
        let t = self.cfg.bcc_timing.t_cca;
        self.metrics[i].energy.cca += t * self.cfg.bcc_power.p_cca;
        self.nodes[i].bcc_busy += t;
        self.q.schedule(self.now + t, EventKind::CcaResult(Radio::Bcc), i);
    }

    fn bcc_cca_result(&mut self, i: usize) {
        let t_cca = self.cfg.bcc_timing.t_cca;
        if self.bcc_medium.busy(self.now - t_cca, self.now) {
            let bcc = &mut self.nodes[i].bcc;
            bcc.stage += 1;
            if bcc.stage < self.cfg.mac.m_mp {
                self.bcc_backoff(i);
                return;
            }
            let item = bcc.current.as_mut().expect("item in service");
            // control frames contend again; data is dropped
            if matches!(item.kind, BccKind::Data { .. }) || item.retries >= self.sc.bcc_retries {
                self.bcc_abandon(i);
            } else {
                // the wake-up receiver heard the preamble: contend again once it is over
                item.retries += 1;
                bcc.stage = 0;
                let wait = self.bcc_medium.free_at(self.now) - self.now;
                self.bcc_backoff_after(i, wait);
            }
            return;
        }
        self.bcc_transmit(i);
    }

    /// Time until receiver `j` samples the channel, given a preamble
    /// starting now.
    fn wake_delay(&self, j: usize) -> f64 {
        let mac = &self.cfg.mac;
        let cycle = mac.r_s + mac.r_l;
        let pos = (self.now + self.nodes[j].bcc.phase).rem_euclid(cycle);
        if pos < mac.r_l {
            0.0
        } else {
            cycle - pos
        }
    }

    fn bcc_transmit(&mut self, i: usize) {
        let t = self.cfg.bcc_timing;
        let p = self.cfg.bcc_power;
        let n = self.nodes.len();
        let preamble = t.preamble(&self.cfg.mac);
        let t_ctrl = t.frame_time(self.cfg.network.status_len_bits, self.cfg.network.payload_bits);
        let kind = self.nodes[i].bcc.current.as_ref().expect("item in service").kind.clone();
        // (duration, sender energy by category [tx, active, rx], receivers)
        let (dur, s_tx, s_act, s_rx, receivers, msg): (f64, f64, f64, f64, Vec<usize>, ControlMessage) = match &kind {
            BccKind::Data { packet, dst } => {
                let dur = preamble + t.t_att + t.t_rtr + t.t_data + 2.0 * t.t_att + t.t_ack;
                let msg = self.data_message(MessageKind::DataBcc, i, Destination::Node(*dst), *packet);
                (
                    dur,
                    (preamble + t.t_data) * p.p_tx,
                    3.0 * t.t_att * p.p_act,
                    (t.t_rtr + t.t_ack) * p.p_rx,
                    vec![*dst],
                    msg,
                )
            }
            BccKind::Status(msg) => {
                let dur = preamble + t.t_att + t_ctrl;
                let others = (0..n).filter(|&j| j != i).collect();
                (dur, (preamble + t_ctrl) * p.p_tx, t.t_att * p.p_act, 0.0, others, *msg)
            }
            BccKind::Token(msg) => {
                let acks = (n - 1) as f64;
                let dur = preamble + t.t_att + t.t_rtr + t_ctrl + acks * (t.t_att + t.t_ack);
                let others = (0..n).filter(|&j| j != i).collect();
                (
                    dur,
                    (preamble + t_ctrl) * p.p_tx,
                    (1.0 + acks) * t.t_att * p.p_act,
                    (t.t_rtr + acks * t.t_ack) * p.p_rx,
                    others,
                    msg.expect("revalidated token"),
                )
            }
        };
        let m = &mut self.metrics[i];
        m.energy.tx += s_tx;
        m.energy.active += s_act;
        m.energy.rx += s_rx;
        self.nodes[i].bcc_busy += dur;
        for j in receivers {
            let t_b = preamble - self.wake_delay(j);
            let (r_tx, r_rx) = match kind {
                BccKind::Data { .. } => ((t.t_rtr + t.t_ack) * p.p_tx, t.t_data * p.p_rx),
                BccKind::Status(_) => (0.0, t_ctrl * p.p_rx),
                BccKind::Token(_) => (t.t_ack * p.p_tx, t_ctrl * p.p_rx),
            };
            let m = &mut self.metrics[j];
            m.energy.active += t_b * p.p_act;
            m.energy.tx += r_tx;
            m.energy.rx += r_rx;
            self.nodes[j].bcc_busy += dur - (preamble - t_b);
        }
        self.log_message(&msg);
        let end = self.now + dur;
        self.nodes[i].bcc.tx = self.bcc_medium.start(self.now, end, end);
        self.q.schedule(end, EventKind::TxEnd(Radio::Bcc), i);
    }

    fn bcc_exchange_end(&mut self, i: usize) {
        let occ = self.bcc_medium.get(self.nodes[i].bcc.tx);
        if occ.data_hit {
            self.metrics[i].bcc_collisions += 1;
            let item = self.nodes[i].bcc.current.as_mut().expect("item in service");
            item.retries += 1;
            if item.retries > self.sc.bcc_retries {
                self.bcc_abandon(i);
            } else {
                self.nodes[i].bcc.stage = 0;
                self.bcc_backoff(i);
            }
            return;
        }
        let item = self.nodes[i].bcc.current.take().expect("item in service");
        match item.kind {
            BccKind::Data { packet, dst } => {
                self.rf_enqueue(dst, RfFrame { packet, dst: RfDst::Gateway });
            }
            BccKind::Status(msg) => {
                self.metrics[i].control_bits += msg.len_bits as u64;
                for j in 0..self.nodes.len() {
                    if j == i {
                        continue;
                    }
                    self.charge_compute(j);
                    let token = self.nodes[j].proto.as_mut().expect("proposed node").on_status(&msg);
                    if token.is_some() {
                        self.enqueue_token(j);
                    }
                }
            }
            BccKind::Token(msg) => {
                let msg = msg.expect("revalidated token");
                self.metrics[i].control_bits += msg.len_bits as u64;
                for node in &mut self.nodes {
                    node.proto.as_mut().expect("proposed node").on_token(&msg);
                }
                self.relay_changes += 1;
                self.token_lock = None;
                self.check_relays();
                self.kick_all_bcc();
            }
        }
        self.bcc_kick(i);
    }

    /// Give up on the frame in service.
    fn bcc_abandon(&mut self, i: usize) {
        let item = self.nodes[i].bcc.current.take().expect("item in service");
        match item.kind {
            BccKind::Data { packet, .. } => self.release_copy(packet),
            BccKind::Status(_) => {}
            BccKind::Token(_) => {
                log::warn!("node {i}: token could not be delivered; relay role kept");
                self.nodes[i].proto.as_mut().expect("proposed node").cancel_token();
                self.token_lock = None;
                self.kick_all_bcc();
            }
        }
        self.bcc_kick(i);
    }

    fn kick_all_bcc(&mut self) {
        for j in 0..self.nodes.len() {
            self.bcc_kick(j);
        }
    }

    /// Runtime check of the relay-set invariant.
    fn check_relays(&mut self) {
        let truth: BTreeSet<usize> = (0..self.nodes.len())
            .filter(|&j| self.nodes[j].proto.as_ref().is_some_and(|p| p.is_relay))
            .collect();
        let consistent = truth.len() == self.cfg.network.n_relays
            && self.nodes.iter().all(|n| n.proto.as_ref().is_some_and(|p| p.relays == truth));
        if !consistent {
            log::error!("relay-set invariant violated at t={}: {:?}", self.now, truth);
            self.violations += 1;
        }
    }
}

// periodic estimation
impl Sim<'_> {
    fn on_tick(&mut self, i: usize) {
        let payload = self.cfg.network.payload_bits;
        let opts = self.cfg.options;
        let node = &mut self.nodes[i];
        // RSSI averaged in dB over the period's own gateway frames, else a fresh reading
        let pi_e = if node.snr_count > 0 {
            link_failure_prob(db_to_linear(node.snr_sum / node.snr_count as f64), payload, &opts)
        } else {
            self.ch.observe_pi_e(i, self.now, &mut node.probe, payload, &opts)
        };
        node.snr_sum = 0.0;
        node.snr_count = 0;
        match self.sc.system {
            System::Proposed => self.proposed_tick(i, pi_e),
            System::Baseline => self.baseline_tick(i, pi_e),
            System::DirectOnly => {}
        }
        self.q.schedule(self.now + self.cfg.network.est_period, EventKind::EstTick, i);
    }

    fn proposed_tick(&mut self, i: usize, pi_e: f64) {
        let is_relay = self.nodes[i].proto.as_ref().expect("proposed node").is_relay;
        if !is_relay {
            // a probe exchange to read the gateway RSSI
            let t = self.cfg.rf_timing;
            let p = self.cfg.rf_power;
            if !self.nodes[i].rf.active {
                self.power_up_rf(i);
            }
            let m = &mut self.metrics[i];
            m.energy.tx += t.t_data * p.p_tx;
            m.energy.active += t.t_att * p.p_act;
            m.energy.rx += t.t_ack * p.p_rx;
            self.nodes[i].rf_busy += t.exchange();
        }
        let e_rem = (self.sc.battery - self.metrics[i].energy.total()).max(0.0);
        let estimate = self
            .estimates
            .entry(pi_e.to_bits())
            .or_insert_with(|| estimate_rf(self.cfg, pi_e, 1.0))
            .clone()
            .map(|e| PerfEstimate::new(e.mean_delay, e.mean_energy, e_rem, e.plr));
        self.charge_compute(i);
        let out = self.nodes[i].proto.as_mut().expect("proposed node").param_est_tick(estimate);
        self.nodes[i].bcc.ctrl.push_back(BccItem {
            kind: BccKind::Status(out.status),
            retries: 0,
        });
        if out.token.is_some() {
            self.enqueue_token(i);
        }
        self.bcc_kick(i);
        if self.token_lock.is_none() {
            self.check_relays();
        }
    }

    /// Relay through the reachable neighbor with the best gateway link when
    /// the own link looks lost.
    fn baseline_tick(&mut self, i: usize, pi_e: f64) {
        let payload = self.cfg.network.payload_bits;
        self.nodes[i].baseline_relay = if pi_e >= self.sc.blocked_threshold {
            (0..self.nodes.len())
                .filter(|&j| self.ch.neighbor_reachable(i, j))
                .map(|j| (j, self.ch.gateway_success(j, self.now, payload, &self.cfg.options)))
                .filter(|&(_, s)| s > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(j, _)| j)
        } else {
            None
        };
    }

    fn finish(mut self) -> RunMetrics {
        let duration = self.now;
        let proposed = self.sc.system == System::Proposed;
        for (node, m) in self.nodes.iter().zip(self.metrics.iter_mut()) {
            m.energy.sleep += (duration - node.rf_busy).max(0.0) * self.cfg.rf_power.p_sleep;
            if proposed {
                m.energy.sleep += (duration - node.bcc_busy).max(0.0) * self.cfg.bcc_power.p_sleep;
            }
        }
        let unfinished = self.outstanding > 0
            || match self.sc.stop {
                StopCondition::Packets(b) => self.nodes.iter().any(|n| n.rate > 0.0 && n.generated < b),
                StopCondition::Time(_) => false,
            };
        let truncated = self.events >= self.sc.max_events && unfinished;
        // time-limited runs: packets still in flight count as neither
        if matches!(self.sc.stop, StopCondition::Time(_)) {
            for rec in self.packets.iter().filter(|r| !r.resolved) {
                let m = &mut self.metrics[rec.origin];
                m.generated -= 1;
                if rec.steady {
                    m.steady_generated -= 1;
                }
            }
        }
        RunMetrics {
            nodes: std::mem::take(&mut self.metrics),
            duration,
            events: self.events,
            relay_changes: self.relay_changes,
            monitor_violations: self.violations,
            duplicates: self.duplicates,
            truncated,
            dump: std::mem::take(&mut self.dump),
        }
    }
}

//! Link qualities and per-frame loss realization.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::config::{snr_from_rssi, BerMode, ModelOptions};
use crate::io::trace::RssiTrace;
use crate::rf_model::{bit_error_rate, link_failure_prob, packet_error_prob, rayleigh_bit_error_rate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkQuality {
    /// Nothing gets through.
    Blocked,
    /// Exchange (data + ACK) fails with a fixed probability.
    Fixed { pi_e: f64 },
    /// Per-frame SNR drawn exponential with this mean (linear).
    Rayleigh { mean_snr: f64 },
}

impl LinkQuality {
    pub fn is_blocked(&self) -> bool {
        matches!(self, LinkQuality::Blocked)
    }

    /// Mean exchange success probability; ranks candidate neighbors.
    pub fn mean_success(&self, payload_bits: u32, ack_bits: u32) -> f64 {
        match *self {
            LinkQuality::Blocked => 0.0,
            LinkQuality::Fixed { pi_e } => 1.0 - pi_e,
            LinkQuality::Rayleigh { mean_snr } => {
                let ber = rayleigh_bit_error_rate(mean_snr);
                (1.0 - packet_error_prob(ber, payload_bits)) * (1.0 - packet_error_prob(ber, ack_bits))
            }
        }
    }
}

/// Per-link qualities: node-to-gateway and node-to-node (on-body RF).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrix {
    pub gateway: Vec<LinkQuality>,
    pub neighbor: Vec<Vec<LinkQuality>>,
}

impl LinkMatrix {
    /// Every link gets the same quality.
    pub fn uniform(n: usize, q: LinkQuality) -> Self {
        LinkMatrix {
            gateway: vec![q; n],
            neighbor: vec![vec![q; n]; n],
        }
    }

    /// Gateway links as given; on-body links all blocked.
    pub fn gateway_only(gateway: Vec<LinkQuality>) -> Self {
        let n = gateway.len();
        LinkMatrix {
            gateway,
            neighbor: vec![vec![LinkQuality::Blocked; n]; n],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.gateway.len()
    }
}

#[derive(Debug, Clone)]
pub enum ChannelModel {
    Links(LinkMatrix),
    /// Gateway links follow RSSI traces; on-body links use `neighbor`.
    Trace { trace: Arc<RssiTrace>, neighbor: LinkQuality },
}

/// Which way a frame travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hop {
    Gateway(usize),
    Neighbor(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeOutcome {
    pub data_ok: bool,
    pub ack_ok: bool,
    /// SNR the transmitter can read from the exchange, when the link has one.
    pub snr: Option<f64>,
}

impl ChannelModel {
    pub fn n_nodes(&self) -> usize {
        match self {
            ChannelModel::Links(m) => m.n_nodes(),
            ChannelModel::Trace { trace, .. } => trace.n_nodes(),
        }
    }

    fn quality(&self, hop: Hop) -> Option<LinkQuality> {
        match (self, hop) {
            (ChannelModel::Links(m), Hop::Gateway(i)) => Some(m.gateway[i]),
            (ChannelModel::Links(m), Hop::Neighbor(i, j)) => Some(m.neighbor[i][j]),
            (ChannelModel::Trace { .. }, Hop::Gateway(_)) => None,
            (ChannelModel::Trace { neighbor, .. }, Hop::Neighbor(..)) => Some(*neighbor),
        }
    }

    fn trace_snr(&self, node: usize, t: f64, options: &ModelOptions) -> f64 {
        match self {
            ChannelModel::Trace { trace, .. } => snr_from_rssi(trace.rssi_at(node, t), options.noise_floor_dbm),
            ChannelModel::Links(_) => unreachable!("trace SNR on a link matrix"),
        }
    }

    /// Draw the fate of one data frame and its ACK at time `t`.
    pub fn exchange<R: Rng>(&self, hop: Hop, t: f64, rng: &mut R, payload_bits: u32, options: &ModelOptions) -> ExchangeOutcome {
        let ack_bits = options.ack_bits;
        let mut snr = None;
        let (p_data, p_ack) = match self.quality(hop) {
            Some(LinkQuality::Blocked) => (1.0, 1.0),
            Some(LinkQuality::Fixed { pi_e }) => {
                // common per-bit error rate reproducing pi_e over data + ACK
                let ber = -((-pi_e).ln_1p() / (payload_bits + ack_bits) as f64).exp_m1();
                (packet_error_prob(ber, payload_bits), packet_error_prob(ber, ack_bits))
            }
            Some(LinkQuality::Rayleigh { mean_snr }) => {
                let exp = Exp::new(1.0 / mean_snr).expect("positive mean SNR");
                let d = exp.sample(rng);
                let a = exp.sample(rng);
                snr = Some(d);
                (
                    packet_error_prob(bit_error_rate(d), payload_bits),
                    packet_error_prob(bit_error_rate(a), ack_bits),
                )
            }
            None => {
                let Hop::Gateway(i) = hop else { unreachable!() };
                let g = self.trace_snr(i, t, options);
                snr = Some(g);
                let ber = bit_error_rate(g);
                (packet_error_prob(ber, payload_bits), packet_error_prob(ber, ack_bits))
            }
        };
        let data_ok = !rng.gen_bool(p_data.clamp(0.0, 1.0));
        let ack_ok = !rng.gen_bool(p_ack.clamp(0.0, 1.0));
        ExchangeOutcome { data_ok, ack_ok, snr }
    }

    /// Frame-failure probability a node would estimate for its gateway link
    /// from a fresh RSSI reading at `t`.
    pub fn observe_pi_e<R: Rng>(&self, node: usize, t: f64, rng: &mut R, payload_bits: u32, options: &ModelOptions) -> f64 {
        match self.quality(Hop::Gateway(node)) {
            Some(LinkQuality::Blocked) => 1.0,
            Some(LinkQuality::Fixed { pi_e }) => pi_e,
            Some(LinkQuality::Rayleigh { mean_snr }) => {
                let snr = Exp::new(1.0 / mean_snr).expect("positive mean SNR").sample(rng);
                link_failure_prob(snr, payload_bits, options)
            }
            None => link_failure_prob(self.trace_snr(node, t, options), payload_bits, options),
        }
    }

    /// Mean exchange success of the gateway link of `node` at `t`.
    pub fn gateway_success(&self, node: usize, t: f64, payload_bits: u32, options: &ModelOptions) -> f64 {
        match self.quality(Hop::Gateway(node)) {
            Some(q) => q.mean_success(payload_bits, options.ack_bits),
            None => {
                let point = ModelOptions { ber: BerMode::Point, ..*options };
                1.0 - link_failure_prob(self.trace_snr(node, t, options), payload_bits, &point)
            }
        }
    }

    pub fn neighbor_reachable(&self, from: usize, to: usize) -> bool {
        from != to && !self.quality(Hop::Neighbor(from, to)).is_some_and(|q| q.is_blocked())
    }
}

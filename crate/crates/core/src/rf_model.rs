//! Closed-form model of the IEEE 802.15.4 relay network: frame erasures,
//! the coupled CCA-busy / head-of-line delay fixed point, delay, loss and
//! per-packet transmission energy.
//!
//! Two readings of the retransmission terms are available through
//! [`HolDelayForm`]. `Renewal` (default) repeats the contention phase for
//! every transmission round and ends service on a CCA failure, which is how
//! the MAC behaves. `Printed` keeps the typeset expressions, whose erasure
//! sums are not normalized and which count a single contention phase.

use serde::Serialize;

use crate::config::{BerMode, CcaCountForm, HolDelayForm, LinkState, MacParams, ModelOptions, PowerProfile, TimingParams};
use crate::error::ModelError;
use crate::numerics::{geometric_sum, q_function, solve_with_fallback, FixedPointProblem};

/// Instantaneous BER of O-QPSK at linear SNR `snr`.
pub fn bit_error_rate(snr: f64) -> f64 {
    q_function((3.0 * snr.max(0.0)).sqrt())
}

/// Mean of [`bit_error_rate`] over Rayleigh fading with mean SNR `mean_snr`.
pub fn rayleigh_bit_error_rate(mean_snr: f64) -> f64 {
    let g = 3.0 * mean_snr.max(0.0);
    0.5 * (1.0 - (g / (2.0 + g)).sqrt())
}

/// `1 - (1 - ε)^L`, evaluated in log space.
pub fn packet_error_prob(ber: f64, len_bits: u32) -> f64 {
    let ber = ber.clamp(0.0, 1.0);
    -(len_bits as f64 * (-ber).ln_1p()).exp_m1()
}

/// A transmission fails when either the data frame or its ACK is corrupted.
pub fn frame_failure_prob(peb_data: f64, peb_ack: f64) -> f64 {
    1.0 - (1.0 - peb_data) * (1.0 - peb_ack)
}

/// Frame failure probability of a link at the given SNR reading.
pub fn link_failure_prob(snr: f64, payload_bits: u32, options: &ModelOptions) -> f64 {
    let ber = match options.ber {
        BerMode::Point => bit_error_rate(snr),
        BerMode::RayleighAveraged => rayleigh_bit_error_rate(snr),
    };
    frame_failure_prob(packet_error_prob(ber, payload_bits), packet_error_prob(ber, options.ack_bits))
}

/// Expected contention time of one transmission round: backoff slots and
/// CCAs up to the first clear CCA, or until `M_c` busy CCAs.
pub fn contention_delay(pi_cca: f64, mac: &MacParams, timing: &TimingParams) -> f64 {
    let half_window = |i: u32| (mac.window(i) as f64 - 1.0) / 2.0 * timing.t_slot;
    let mut total = 0.0;
    let mut backoff = 0.0;
    let mut pv = 1.0;
    for v in 0..mac.m_c {
        backoff += half_window(v);
        total += pv * (1.0 - pi_cca) * (backoff + (v + 1) as f64 * timing.t_cca);
        pv *= pi_cca;
    }
    total + pv * (backoff + (mac.m_c + 1) as f64 * timing.t_cca)
}

/// Expected number of CCAs performed in one transmission round.
pub fn cca_per_round(pi_cca: f64, m_c: u32) -> f64 {
    let mut total = 0.0;
    let mut pv = 1.0;
    for v in 0..m_c {
        total += pv * (1.0 - pi_cca) * (v + 1) as f64;
        pv *= pi_cca;
    }
    total + pv * m_c as f64
}

/// Per-link quantities at a given CCA-busy probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkMetrics {
    pub hol_delay: f64,
    /// Part of `hol_delay` spent in backoff and CCA.
    pub contention: f64,
    pub pi_loss: f64,
    pub cca_count: f64,
    /// Expected number of data transmissions.
    pub transmissions: f64,
}

pub fn link_metrics(
    pi_e: f64,
    pi_cca: f64,
    mac: &MacParams,
    timing: &TimingParams,
    options: &ModelOptions,
) -> LinkMetrics {
    let a = contention_delay(pi_cca, mac, timing);
    let c = timing.exchange();
    let cca_fail = pi_cca.powi(mac.m_c as i32);
    match options.hol_form {
        HolDelayForm::Renewal => {
            let s = 1.0 - cca_fail;
            let rounds = geometric_sum(s * pi_e, mac.m_r);
            let cca_count = match options.cca_count {
                CcaCountForm::Printed => printed_cca_count(pi_e, pi_cca, mac),
                CcaCountForm::Corrected => cca_per_round(pi_cca, mac.m_c) * rounds,
            };
            LinkMetrics {
                hol_delay: a * rounds + (rounds - 1.0) * c,
                contention: a * rounds,
                pi_loss: 1.0 - s * (1.0 - pi_e) * rounds,
                cca_count,
                transmissions: s * rounds,
            }
        }
        HolDelayForm::Printed => {
            let mut hol = 0.0;
            let mut delivered = 0.0;
            let mut ek = 1.0;
            for k in 0..mac.m_r {
                let w = ek * (1.0 - pi_e);
                hol += w * (a + k as f64 * c);
                delivered += w;
                ek *= pi_e;
            }
            let cca_count = match options.cca_count {
                CcaCountForm::Printed => printed_cca_count(pi_e, pi_cca, mac),
                CcaCountForm::Corrected => cca_per_round(pi_cca, mac.m_c),
            };
            LinkMetrics {
                hol_delay: hol,
                contention: a,
                pi_loss: delivered * cca_fail,
                cca_count,
                transmissions: 1.0,
            }
        }
    }
}

/// `sum_k k π_e^k (1-π_e) * sum_u u π_cca^u (1-π_cca)`.
fn printed_cca_count(pi_e: f64, pi_cca: f64, mac: &MacParams) -> f64 {
    let mut kk = 0.0;
    let mut ek = 1.0;
    for k in 0..mac.m_r {
        kk += k as f64 * ek * (1.0 - pi_e);
        ek *= pi_e;
    }
    let mut uu = 0.0;
    let mut pu = 1.0;
    for u in 0..mac.m_c {
        uu += u as f64 * pu * (1.0 - pi_cca);
        pu *= pi_cca;
    }
    kk * uu
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RfModelInput {
    pub relay_links: Vec<LinkState>,
    pub mac: MacParams,
    pub timing: TimingParams,
    pub power: PowerProfile,
    pub load_direct: f64,
    pub load_forwarded: f64,
    pub options: ModelOptions,
}

impl RfModelInput {
    pub fn total_load(&self) -> f64 {
        self.load_direct + self.load_forwarded
    }

    fn averaged(&self, pi_cca: f64) -> LinkMetrics {
        let n = self.relay_links.len() as f64;
        let mut acc = LinkMetrics {
            hol_delay: 0.0,
            contention: 0.0,
            pi_loss: 0.0,
            cca_count: 0.0,
            transmissions: 0.0,
        };
        for link in &self.relay_links {
            let m = link_metrics(link.pi_e, pi_cca, &self.mac, &self.timing, &self.options);
            acc.hol_delay += m.hol_delay / n;
            acc.contention += m.contention / n;
            acc.pi_loss += m.pi_loss / n;
            acc.cca_count += m.cca_count / n;
            acc.transmissions += m.transmissions / n;
        }
        acc
    }

    /// Queue quantities `(ρ, E[S])` for a head-of-line delay; `E[S]` is
    /// infinite once the queue saturates.
    fn queue(&self, hol_delay: f64) -> (f64, f64) {
        let service = hol_delay + self.timing.exchange();
        let rho = self.total_load() * service;
        let busy = if rho < 1.0 { 1.0 / (1.0 - rho) } else { f64::INFINITY };
        (rho, busy)
    }

    /// Channel-busy probability implied by the busy-period balance.
    fn busy_probability(&self, pi_loss: f64, hol_delay: f64) -> f64 {
        let contenders = self.relay_links.len() as f64 - 1.0;
        if contenders <= 0.0 {
            return 0.0;
        }
        let occupancy = self.timing.t_cca + self.timing.exchange();
        let (_, busy) = self.queue(hol_delay);
        let scale = contenders * (1.0 - pi_loss) * occupancy;
        if busy.is_finite() {
            scale * busy / (1.0 / self.total_load() + busy * hol_delay)
        } else if hol_delay > 0.0 {
            scale / hol_delay
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RfModelSolution {
    pub pi_cca: f64,
    pub mean_hol_delay: f64,
    pub mean_delay: f64,
    pub pi_loss: f64,
    pub mean_cca_count: f64,
    pub mean_energy: f64,
    pub utilization: f64,
    pub mean_busy_pkts: f64,
    /// Expected transmissions per packet.
    pub mean_transmissions: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn check_input(input: &RfModelInput) -> Result<(), ModelError> {
    if input.relay_links.is_empty() {
        return Err(ModelError::InvalidInput("relay_links is empty".into()));
    }
    if !(input.load_direct >= 0.0 && input.load_forwarded >= 0.0) {
        return Err(ModelError::InvalidInput("loads must be non-negative".into()));
    }
    if !(input.total_load() > 0.0) {
        return Err(ModelError::InvalidInput("total load must be positive".into()));
    }
    if input.relay_links.iter().any(|l| !(0.0..=1.0).contains(&l.pi_e)) {
        return Err(ModelError::InvalidInput("pi_e outside [0, 1]".into()));
    }
    Ok(())
}

/// Jointly solve the CCA-busy probability and mean HOL delay, then derive
/// delay, loss, CCA count and energy.
pub fn solve_rf(input: &RfModelInput) -> Result<RfModelSolution, ModelError> {
    check_input(input)?;
    let map = |x: &[f64]| {
        let m = input.averaged(x[0]);
        vec![input.busy_probability(m.pi_loss, m.hol_delay), m.hol_delay]
    };
    let init = [0.0, contention_delay(0.0, &input.mac, &input.timing)];
    let fp = solve_with_fallback(FixedPointProblem::new(map).with_probabilities(&[0]), &init)?;
    let pi_cca = fp.x[0];
    let m = input.averaged(pi_cca);
    let (rho, busy) = input.queue(m.hol_delay);
    if rho >= 1.0 {
        return Err(ModelError::UnstableSystem { rho });
    }
    let mut sol = RfModelSolution {
        pi_cca,
        mean_hol_delay: m.hol_delay,
        mean_delay: m.hol_delay + input.timing.exchange(),
        pi_loss: m.pi_loss,
        mean_cca_count: m.cca_count,
        mean_energy: 0.0,
        utilization: rho,
        mean_busy_pkts: busy,
        mean_transmissions: m.transmissions,
        residual: fp.residual,
        iterations: fp.iterations,
    };
    sol.mean_energy = rf_energy(&sol, input)?;
    Ok(sol)
}

/// Mean transmission energy per packet.
pub fn rf_energy(solution: &RfModelSolution, input: &RfModelInput) -> Result<f64, ModelError> {
    let t = &input.timing;
    let p = &input.power;
    let cca_time = solution.mean_cca_count * t.t_cca;
    let attempt = t.t_data * p.p_tx + t.t_att * p.p_act + t.t_ack * p.p_rx;
    let (contention, transmissions) = match input.options.hol_form {
        HolDelayForm::Printed => (solution.mean_hol_delay, 1.0),
        HolDelayForm::Renewal => {
            let m = input.averaged(solution.pi_cca);
            (m.contention, m.transmissions)
        }
    };
    if contention < cca_time {
        return Err(ModelError::NegativeDuration {
            hol_delay: contention,
            cca_time,
        });
    }
    Ok((contention - cca_time) * p.p_act + cca_time * p.p_cca + transmissions * attempt)
}

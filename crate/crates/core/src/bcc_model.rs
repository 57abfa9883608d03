//! Closed-form model of the BCC low-power-listening MAC: preamble
//! contention, the three-phase delay decomposition and per-packet energy of
//! sender and receiver.

use serde::Serialize;

use crate::config::{MacParams, PowerProfile, TimingParams};
use crate::error::ModelError;
use crate::numerics::{solve_with_fallback, FixedPointProblem};
use crate::rf_model::{cca_per_round, contention_delay};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BccModelInput {
    pub n_nodes: usize,
    pub n_relays: usize,
    /// Total load offered to the BCC network by non-relay nodes, pkt/s.
    pub load_forwarded: f64,
    pub mac: MacParams,
    pub timing: TimingParams,
    pub power: PowerProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BccModelSolution {
    pub sigma_cca: f64,
    pub mean_hol_delay: f64,
    pub t2: f64,
    pub t3: f64,
    pub mean_delay: f64,
    pub mean_t_a: f64,
    pub mean_t_b: f64,
    pub mean_t_w: f64,
    pub pi_loss: f64,
    pub mean_cca_count: f64,
    pub utilization: f64,
    pub energy_send: f64,
    pub energy_recv: f64,
    pub mean_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WakeupTiming {
    pub mean_t_w: f64,
    pub mean_t_a: f64,
    pub mean_t_b: f64,
    pub t2: f64,
}

/// Receiver wake-up timing and the preamble/RTR phase duration.
pub fn wakeup_timing(mac: &MacParams, timing: &TimingParams) -> Result<WakeupTiming, ModelError> {
    let cycle = mac.r_s + mac.r_l;
    if !(cycle > 0.0) {
        return Err(ModelError::InvalidInput("r_s + r_l must be positive".into()));
    }
    let preamble = timing.preamble(mac);
    if preamble < mac.r_s {
        return Err(ModelError::InvalidDutyCycle {
            preamble,
            sleep: mac.r_s,
        });
    }
    let mean_t_w = mac.r_s / 2.0;
    let mean_t_a = mean_t_w * mac.r_s / cycle;
    Ok(WakeupTiming {
        mean_t_w,
        mean_t_a,
        mean_t_b: preamble - mean_t_a,
        t2: preamble + timing.t_att + timing.t_rtr,
    })
}

/// Data, two turnarounds and the final ACK.
pub fn data_phase_delay(timing: &TimingParams) -> f64 {
    timing.t_data + 2.0 * timing.t_att + timing.t_ack
}

fn check_input(input: &BccModelInput) -> Result<(), ModelError> {
    if input.n_relays > input.n_nodes {
        return Err(ModelError::InvalidInput("n_relays exceeds n_nodes".into()));
    }
    if !(input.load_forwarded >= 0.0) {
        return Err(ModelError::InvalidInput("load_forwarded must be non-negative".into()));
    }
    Ok(())
}

pub fn solve_bcc(input: &BccModelInput) -> Result<BccModelSolution, ModelError> {
    check_input(input)?;
    let wake = wakeup_timing(&input.mac, &input.timing)?;
    let t3 = data_phase_delay(&input.timing);
    let contenders = input.n_nodes as f64 - input.n_relays as f64 - 1.0;
    let lambda = input.load_forwarded;
    let m = input.mac.m_mp;
    let hol = |sigma: f64| contention_delay(sigma, &contention_mac(&input.mac), &input.timing);
    let occupancy = input.timing.t_cca + input.timing.exchange();

    let sigma = if lambda == 0.0 || contenders <= 0.0 {
        0.0
    } else {
        let map = |x: &[f64]| {
            let d = hol(x[0]);
            let rho = lambda * (d + wake.t2 + t3);
            let loss = x[0].powi(m as i32);
            let scale = contenders * (1.0 - loss) * occupancy;
            let sigma = if rho < 1.0 {
                let busy = 1.0 / (1.0 - rho);
                scale * busy / (1.0 / lambda + busy * d)
            } else {
                scale / d
            };
            vec![sigma, d]
        };
        let fp = solve_with_fallback(FixedPointProblem::new(map).with_probabilities(&[0]), &[0.0, hol(0.0)])?;
        fp.x[0]
    };

    let mean_hol_delay = hol(sigma);
    let mean_delay = mean_hol_delay + wake.t2 + t3;
    let utilization = lambda * mean_delay;
    if utilization >= 1.0 {
        return Err(ModelError::UnstableSystem { rho: utilization });
    }
    let mut sol = BccModelSolution {
        sigma_cca: sigma,
        mean_hol_delay,
        t2: wake.t2,
        t3,
        mean_delay,
        mean_t_a: wake.mean_t_a,
        mean_t_b: wake.mean_t_b,
        mean_t_w: wake.mean_t_w,
        pi_loss: sigma.powi(m as i32),
        mean_cca_count: cca_per_round(sigma, m),
        utilization,
        energy_send: 0.0,
        energy_recv: 0.0,
        mean_energy: 0.0,
    };
    let (send, recv, total) = bcc_energy(&sol, input)?;
    sol.energy_send = send;
    sol.energy_recv = recv;
    sol.mean_energy = total;
    Ok(sol)
}

/// The BCC contention uses `M_mp` CCA attempts with the shared backoff law.
fn contention_mac(mac: &MacParams) -> MacParams {
    MacParams { m_c: mac.m_mp, ..*mac }
}

/// `(sender, receiver, total)` energy per packet.
pub fn bcc_energy(solution: &BccModelSolution, input: &BccModelInput) -> Result<(f64, f64, f64), ModelError> {
    let t = &input.timing;
    let p = &input.power;
    let preamble = t.preamble(&input.mac);
    let cca_time = solution.mean_cca_count * t.t_cca;
    if solution.mean_hol_delay < cca_time {
        return Err(ModelError::NegativeDuration {
            hol_delay: solution.mean_hol_delay,
            cca_time,
        });
    }
    let contention = (solution.mean_hol_delay - cca_time) * p.p_act + cca_time * p.p_cca;
    let wake_phase = preamble * p.p_tx + t.t_att * p.p_act + t.t_rtr * p.p_rx;
    let data_phase = t.t_data * p.p_tx + 2.0 * t.t_att * p.p_act + t.t_ack * p.p_rx;
    let send = contention + wake_phase + data_phase;
    let recv = input.mac.r_s * p.p_sleep
        + solution.mean_t_b * p.p_act
        + t.t_rtr * p.p_tx
        + t.t_data * p.p_rx
        + t.t_ack * p.p_tx;
    Ok((send, recv, send + recv))
}

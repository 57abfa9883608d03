//! Shared domain types and configuration validation.
//!
//! Units: durations in seconds, energies in joules, powers in watts, rates in
//! packets per second, lengths in bits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// CC2420 current draws (A).
pub const CC2420_TX_CURRENT: f64 = 19.7e-3;
pub const CC2420_RX_CURRENT: f64 = 17.4e-3;
/// Power-down mode with the voltage regulator on.
pub const CC2420_SLEEP_CURRENT: f64 = 20e-6;

pub const DEFAULT_SUPPLY_VOLTAGE: f64 = 1.8;
pub const DEFAULT_NOISE_FLOOR_DBM: f64 = -95.0;
/// 11-byte IEEE 802.15.4 acknowledgment frame.
pub const DEFAULT_ACK_BITS: u32 = 88;
/// Nominal 802.15.4 PHY bit rate, used to define the maximum offered load.
pub const RF_PHY_RATE_BPS: f64 = 250_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_nodes: usize,
    pub n_relays: usize,
    /// Poisson generation rate of every node (packets/s).
    pub per_node_rate: Vec<f64>,
    pub payload_bits: u32,
    pub est_period: f64,
    pub status_len_bits: u32,
}

impl NetworkConfig {
    pub fn total_load(&self) -> f64 {
        self.per_node_rate.iter().sum()
    }

    /// `(λ_d, λ_f)` for an explicit relay set.
    pub fn load_split(&self, relays: &[usize]) -> (f64, f64) {
        let direct: f64 = relays.iter().map(|&n| self.per_node_rate[n]).sum();
        (direct, self.total_load() - direct)
    }

    /// Load carried directly by the relays when nodes `0..N_r` hold the role.
    pub fn load_direct(&self) -> f64 {
        self.per_node_rate[..self.n_relays].iter().sum()
    }

    pub fn load_forwarded(&self) -> f64 {
        self.per_node_rate[self.n_relays..].iter().sum()
    }

    /// Maximum RF load in packets/s: the PHY bit rate divided by the payload.
    pub fn max_load(&self) -> f64 {
        RF_PHY_RATE_BPS / self.payload_bits as f64
    }

    /// Worst-case control traffic: every node sends a STATUS and every relay
    /// hands off its token once per estimation period.
    pub fn control_overhead_bps(&self) -> f64 {
        (self.n_nodes + self.n_relays) as f64 * self.status_len_bits as f64 / self.est_period
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    pub t_slot: f64,
    pub t_cca: f64,
    pub t_data: f64,
    pub t_ack: f64,
    pub t_att: f64,
    pub t_rtr: f64,
    /// Fixed preamble length. `None` sizes it as `R_s + R_l`.
    pub t_pream: Option<f64>,
    /// PHY bit rate used to cross-check `t_data` against the payload length.
    pub phy_rate_bps: Option<f64>,
}

impl TimingParams {
    pub fn rf_default() -> Self {
        TimingParams {
            t_slot: 0.192e-3,
            t_cca: 0.25e-3,
            t_data: 1.12e-3,
            t_ack: 0.352e-3,
            t_att: 0.384e-3,
            t_rtr: 0.0,
            t_pream: None,
            phy_rate_bps: None,
        }
    }

    pub fn bcc_default() -> Self {
        TimingParams {
            t_slot: 23e-6,
            t_cca: 23e-6,
            t_data: 0.2e-3,
            t_ack: 0.1e-3,
            t_att: 0.1e-3,
            t_rtr: 0.1e-3,
            t_pream: None,
            phy_rate_bps: None,
        }
    }

    pub fn preamble(&self, mac: &MacParams) -> f64 {
        self.t_pream.unwrap_or(mac.r_s + mac.r_l)
    }

    /// Time of one data exchange on the medium: data, turnaround and ACK.
    pub fn exchange(&self) -> f64 {
        self.t_data + self.t_att + self.t_ack
    }

    /// Airtime of a frame of `bits`, scaled from the data frame duration.
    pub fn frame_time(&self, bits: u32, payload_bits: u32) -> f64 {
        self.t_data * bits as f64 / payload_bits as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub p_act: f64,
    pub p_cca: f64,
    pub p_tx: f64,
    pub p_rx: f64,
    pub p_sleep: f64,
}

impl PowerProfile {
    /// CC2420 at the given supply voltage. The receiver stays on while
    /// backing off, so active and CCA power equal RX power.
    pub fn cc2420(voltage: f64) -> Self {
        let p_rx = CC2420_RX_CURRENT * voltage;
        PowerProfile {
            p_act: p_rx,
            p_cca: p_rx,
            p_tx: CC2420_TX_CURRENT * voltage,
            p_rx,
            p_sleep: CC2420_SLEEP_CURRENT * voltage,
        }
    }

    /// BCC transceiver: 2.1 mW RX, 0.6 mW TX; CCA costs RX power. The sleep
    /// figure is the always-on wake-up receiver.
    pub fn bcc_default() -> Self {
        PowerProfile {
            p_act: 2.1e-3,
            p_cca: 2.1e-3,
            p_tx: 0.6e-3,
            p_rx: 2.1e-3,
            p_sleep: 10e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacParams {
    /// Maximum RF transmissions per packet.
    pub m_r: u32,
    /// Maximum RF CCA attempts per transmission round.
    pub m_c: u32,
    pub be_min: u32,
    /// Optional cap on the backoff exponent; unbounded growth when `None`.
    pub be_max: Option<u32>,
    /// Maximum BCC preamble CCA attempts.
    pub m_mp: u32,
    /// BCC sleep interval.
    pub r_s: f64,
    /// BCC listen interval.
    pub r_l: f64,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            m_r: 3,
            m_c: 3,
            be_min: 3,
            be_max: None,
            m_mp: 3,
            r_s: 10e-3,
            r_l: 10e-3,
        }
    }
}

impl MacParams {
    /// Backoff exponent of stage `i`.
    pub fn backoff_exponent(&self, stage: u32) -> u32 {
        let be = self.be_min + stage;
        match self.be_max {
            Some(cap) => be.min(cap),
            None => be,
        }
    }

    /// Contention window `W_i = 2^(BE_min+i)`; backoff draws span `0..W_i`.
    pub fn window(&self, stage: u32) -> u64 {
        1u64 << self.backoff_exponent(stage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HolDelayForm {
    /// Every transmission round repeats the contention phase; a CCA failure
    /// ends service. Consistent with the MAC as simulated.
    #[default]
    Renewal,
    /// The closed forms exactly as typeset: one contention phase, erasure
    /// terms not normalized.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CcaCountForm {
    /// Product of the retransmission index and CCA-failure index means.
    #[default]
    Printed,
    /// Expected number of CCAs actually performed, successful rounds included.
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BerMode {
    /// Point SNR of the latest RSSI reading.
    #[default]
    Point,
    /// BER averaged over Rayleigh fading with the reading as the mean SNR.
    RayleighAveraged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub hol_form: HolDelayForm,
    pub cca_count: CcaCountForm,
    pub ber: BerMode,
    pub noise_floor_dbm: f64,
    pub ack_bits: u32,
    pub supply_voltage: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            hol_form: HolDelayForm::Renewal,
            cca_count: CcaCountForm::Printed,
            ber: BerMode::Point,
            noise_floor_dbm: DEFAULT_NOISE_FLOOR_DBM,
            ack_bits: DEFAULT_ACK_BITS,
            supply_voltage: DEFAULT_SUPPLY_VOLTAGE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub node_id: usize,
    pub rssi_dbm: f64,
    pub snr_linear: f64,
    pub pi_e: f64,
    pub e_rem: f64,
}

impl LinkState {
    /// A link known only through its frame failure probability.
    pub fn with_pi_e(node_id: usize, pi_e: f64) -> Self {
        LinkState {
            node_id,
            rssi_dbm: f64::NAN,
            snr_linear: f64::NAN,
            pi_e,
            e_rem: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfEstimate {
    pub mean_delay: f64,
    pub mean_energy: f64,
    pub energy_cost: f64,
    pub plr: f64,
}

impl PerfEstimate {
    pub fn new(mean_delay: f64, mean_energy: f64, e_rem: f64, plr: f64) -> Self {
        PerfEstimate {
            mean_delay,
            mean_energy,
            energy_cost: energy_cost(mean_energy, e_rem),
            plr,
        }
    }
}

/// Relay energy cost `E[E]^2 / E_rem`.
pub fn energy_cost(mean_energy: f64, e_rem: f64) -> f64 {
    mean_energy * mean_energy / e_rem
}

/// Linear SNR from an RSSI reading and the receiver noise floor.
pub fn snr_from_rssi(rssi_dbm: f64, noise_floor_dbm: f64) -> f64 {
    10f64.powf((rssi_dbm - noise_floor_dbm) / 10.0).max(0.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// A configuration that passed every invariant check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedConfig {
    pub network: NetworkConfig,
    pub rf_timing: TimingParams,
    pub bcc_timing: TimingParams,
    pub rf_power: PowerProfile,
    pub bcc_power: PowerProfile,
    pub mac: MacParams,
    pub options: ModelOptions,
}

impl Default for ValidatedConfig {
    fn default() -> Self {
        let n = 4;
        ValidatedConfig {
            network: NetworkConfig {
                n_nodes: n,
                n_relays: 2,
                per_node_rate: vec![10.0; n],
                payload_bits: 800,
                est_period: 1.0,
                status_len_bits: 160,
            },
            rf_timing: TimingParams::rf_default(),
            bcc_timing: TimingParams::bcc_default(),
            rf_power: PowerProfile::cc2420(DEFAULT_SUPPLY_VOLTAGE),
            bcc_power: PowerProfile::bcc_default(),
            mac: MacParams::default(),
            options: ModelOptions::default(),
        }
    }
}

impl ValidatedConfig {
    /// Copy with a different network size, uniform rates and relay count.
    pub fn with_network(&self, n_nodes: usize, n_relays: usize, rate: f64) -> Self {
        let mut out = self.clone();
        out.network.n_nodes = n_nodes;
        out.network.n_relays = n_relays;
        out.network.per_node_rate = vec![rate; n_nodes];
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        file.into_validated()
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ConfigFile::from(self)).expect("config serializes")
    }
}

/// Check every invariant and return the normalized configuration.
pub fn validate_config(
    network: NetworkConfig,
    rf_timing: TimingParams,
    bcc_timing: TimingParams,
    rf_power: PowerProfile,
    bcc_power: PowerProfile,
    mac: MacParams,
    options: ModelOptions,
) -> Result<ValidatedConfig, ConfigError> {
    let inv = ConfigError::invariant;
    if network.n_nodes < 1 {
        return Err(inv("n_nodes must be at least 1"));
    }
    if network.n_relays < 1 {
        return Err(inv("n_relays must be at least 1"));
    }
    if network.n_relays > network.n_nodes {
        return Err(inv("n_relays exceeds n_nodes"));
    }
    if network.per_node_rate.len() != network.n_nodes {
        return Err(ConfigError::invariant(format!(
            "per_node_rate has {} entries, expected n_nodes = {}",
            network.per_node_rate.len(),
            network.n_nodes
        )));
    }
    if network.per_node_rate.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(inv("per_node_rate entries must be finite and non-negative"));
    }
    if network.payload_bits == 0 {
        return Err(inv("payload_bits must be positive"));
    }
    if !(network.est_period > 0.0 && network.est_period.is_finite()) {
        return Err(inv("est_period must be positive"));
    }
    if network.status_len_bits == 0 {
        return Err(inv("status_len_bits must be positive"));
    }
    for (name, t) in [("rf", &rf_timing), ("bcc", &bcc_timing)] {
        check_timing(name, t, network.payload_bits)?;
    }
    for (name, p) in [("rf", &rf_power), ("bcc", &bcc_power)] {
        check_power(name, p)?;
    }
    if mac.m_r < 1 {
        return Err(inv("m_r must be at least 1"));
    }
    if mac.m_c < 1 {
        return Err(inv("m_c must be at least 1"));
    }
    if mac.m_mp < 1 {
        return Err(inv("m_mp must be at least 1"));
    }
    if mac.be_min > 20 || mac.be_max.is_some_and(|c| c < mac.be_min || c > 20) {
        return Err(inv("backoff exponents must satisfy be_min <= be_max <= 20"));
    }
    if !(mac.r_s >= 0.0 && mac.r_l >= 0.0) || mac.r_s + mac.r_l <= 0.0 {
        return Err(inv("r_s and r_l must be non-negative with r_s + r_l > 0"));
    }
    if !(options.noise_floor_dbm.is_finite()) {
        return Err(inv("noise_floor_dbm must be finite"));
    }
    if options.ack_bits == 0 {
        return Err(inv("ack_bits must be positive"));
    }
    if !(options.supply_voltage > 0.0) {
        return Err(inv("supply_voltage must be positive"));
    }
    Ok(ValidatedConfig {
        network,
        rf_timing,
        bcc_timing,
        rf_power,
        bcc_power,
        mac,
        options,
    })
}

fn check_timing(name: &str, t: &TimingParams, payload_bits: u32) -> Result<(), ConfigError> {
    let fields = [
        ("t_slot", t.t_slot),
        ("t_cca", t.t_cca),
        ("t_data", t.t_data),
        ("t_ack", t.t_ack),
        ("t_att", t.t_att),
        ("t_rtr", t.t_rtr),
        ("t_pream", t.t_pream.unwrap_or(0.0)),
    ];
    for (field, v) in fields {
        if !(v.is_finite() && v >= 0.0) {
            return Err(ConfigError::invariant(format!("{name}.timing.{field} must be finite and >= 0")));
        }
    }
    if let Some(rate) = t.phy_rate_bps {
        let expected = payload_bits as f64 / rate;
        if !(rate > 0.0) || ((t.t_data - expected) / expected).abs() > 0.01 {
            return Err(ConfigError::invariant(format!(
                "{name}.timing.t_data {:e} s inconsistent with payload_bits / phy_rate_bps = {:e} s",
                t.t_data, expected
            )));
        }
    }
    Ok(())
}

fn check_power(name: &str, p: &PowerProfile) -> Result<(), ConfigError> {
    let all = [p.p_act, p.p_cca, p.p_tx, p.p_rx, p.p_sleep];
    if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(ConfigError::invariant(format!("{name}.power values must be finite and >= 0")));
    }
    if p.p_sleep > p.p_act {
        return Err(ConfigError::invariant(format!("{name}.power.p_sleep exceeds p_act")));
    }
    if p.p_act > p.p_tx.max(p.p_rx) {
        return Err(ConfigError::invariant(format!("{name}.power.p_act exceeds max(p_tx, p_rx)")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// File schema. Every field is optional; omitted values take the defaults.

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub rf: TechSection,
    #[serde(default)]
    pub bcc: TechSection,
    #[serde(default)]
    pub mac: MacSection,
    #[serde(default)]
    pub model: ModelSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub n_nodes: Option<usize>,
    pub n_relays: Option<usize>,
    /// Uniform rate applied to every node when `per_node_rate` is absent.
    pub rate: Option<f64>,
    pub per_node_rate: Option<Vec<f64>>,
    pub payload_bits: Option<u32>,
    pub est_period: Option<f64>,
    pub status_len_bits: Option<u32>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechSection {
    #[serde(default)]
    pub timing: TimingSection,
    #[serde(default)]
    pub power: PowerSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSection {
    pub t_slot: Option<f64>,
    pub t_cca: Option<f64>,
    pub t_data: Option<f64>,
    pub t_ack: Option<f64>,
    pub t_att: Option<f64>,
    pub t_rtr: Option<f64>,
    pub t_pream: Option<f64>,
    pub phy_rate_bps: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub p_act: Option<f64>,
    pub p_cca: Option<f64>,
    pub p_tx: Option<f64>,
    pub p_rx: Option<f64>,
    pub p_sleep: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacSection {
    pub m_r: Option<u32>,
    pub m_c: Option<u32>,
    pub be_min: Option<u32>,
    pub be_max: Option<u32>,
    pub m_mp: Option<u32>,
    pub r_s: Option<f64>,
    pub r_l: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hol_form: Option<HolDelayForm>,
    pub cca_count: Option<CcaCountForm>,
    pub ber: Option<BerMode>,
    pub noise_floor_dbm: Option<f64>,
    pub ack_bits: Option<u32>,
    /// Supply voltage converting CC2420 currents to RF powers.
    pub supply_voltage: Option<f64>,
}

fn merge_timing(base: TimingParams, s: &TimingSection) -> TimingParams {
    TimingParams {
        t_slot: s.t_slot.unwrap_or(base.t_slot),
        t_cca: s.t_cca.unwrap_or(base.t_cca),
        t_data: s.t_data.unwrap_or(base.t_data),
        t_ack: s.t_ack.unwrap_or(base.t_ack),
        t_att: s.t_att.unwrap_or(base.t_att),
        t_rtr: s.t_rtr.unwrap_or(base.t_rtr),
        t_pream: s.t_pream.or(base.t_pream),
        phy_rate_bps: s.phy_rate_bps.or(base.phy_rate_bps),
    }
}

fn merge_power(base: PowerProfile, s: &PowerSection) -> PowerProfile {
    PowerProfile {
        p_act: s.p_act.unwrap_or(base.p_act),
        p_cca: s.p_cca.unwrap_or(base.p_cca),
        p_tx: s.p_tx.unwrap_or(base.p_tx),
        p_rx: s.p_rx.unwrap_or(base.p_rx),
        p_sleep: s.p_sleep.unwrap_or(base.p_sleep),
    }
}

impl ConfigFile {
    pub fn into_validated(self) -> Result<ValidatedConfig, ConfigError> {
        let d = ValidatedConfig::default();
        let n_nodes = self.network.n_nodes.unwrap_or(d.network.n_nodes);
        let per_node_rate = match (&self.network.per_node_rate, self.network.rate) {
            (Some(v), _) => v.clone(),
            (None, Some(r)) => vec![r; n_nodes],
            (None, None) => vec![d.network.per_node_rate[0]; n_nodes],
        };
        let network = NetworkConfig {
            n_nodes,
            n_relays: self.network.n_relays.unwrap_or(d.network.n_relays.min(n_nodes)),
            per_node_rate,
            payload_bits: self.network.payload_bits.unwrap_or(d.network.payload_bits),
            est_period: self.network.est_period.unwrap_or(d.network.est_period),
            status_len_bits: self.network.status_len_bits.unwrap_or(d.network.status_len_bits),
        };
        let m = &self.model;
        let options = ModelOptions {
            hol_form: m.hol_form.unwrap_or(d.options.hol_form),
            cca_count: m.cca_count.unwrap_or(d.options.cca_count),
            ber: m.ber.unwrap_or(d.options.ber),
            noise_floor_dbm: m.noise_floor_dbm.unwrap_or(d.options.noise_floor_dbm),
            ack_bits: m.ack_bits.unwrap_or(d.options.ack_bits),
            supply_voltage: m.supply_voltage.unwrap_or(d.options.supply_voltage),
        };
        let mac = MacParams {
            m_r: self.mac.m_r.unwrap_or(d.mac.m_r),
            m_c: self.mac.m_c.unwrap_or(d.mac.m_c),
            be_min: self.mac.be_min.unwrap_or(d.mac.be_min),
            be_max: self.mac.be_max.or(d.mac.be_max),
            m_mp: self.mac.m_mp.unwrap_or(d.mac.m_mp),
            r_s: self.mac.r_s.unwrap_or(d.mac.r_s),
            r_l: self.mac.r_l.unwrap_or(d.mac.r_l),
        };
        validate_config(
            network,
            merge_timing(d.rf_timing, &self.rf.timing),
            merge_timing(d.bcc_timing, &self.bcc.timing),
            merge_power(PowerProfile::cc2420(options.supply_voltage), &self.rf.power),
            merge_power(d.bcc_power, &self.bcc.power),
            mac,
            options,
        )
    }
}

impl From<&ValidatedConfig> for ConfigFile {
    fn from(c: &ValidatedConfig) -> Self {
        let timing = |t: &TimingParams| TimingSection {
            t_slot: Some(t.t_slot),
            t_cca: Some(t.t_cca),
            t_data: Some(t.t_data),
            t_ack: Some(t.t_ack),
            t_att: Some(t.t_att),
            t_rtr: Some(t.t_rtr),
            t_pream: t.t_pream,
            phy_rate_bps: t.phy_rate_bps,
        };
        let power = |p: &PowerProfile| PowerSection {
            p_act: Some(p.p_act),
            p_cca: Some(p.p_cca),
            p_tx: Some(p.p_tx),
            p_rx: Some(p.p_rx),
            p_sleep: Some(p.p_sleep),
        };
        ConfigFile {
            network: NetworkSection {
                n_nodes: Some(c.network.n_nodes),
                n_relays: Some(c.network.n_relays),
                rate: None,
                per_node_rate: Some(c.network.per_node_rate.clone()),
                payload_bits: Some(c.network.payload_bits),
                est_period: Some(c.network.est_period),
                status_len_bits: Some(c.network.status_len_bits),
            },
            rf: TechSection {
                timing: timing(&c.rf_timing),
                power: power(&c.rf_power),
            },
            bcc: TechSection {
                timing: timing(&c.bcc_timing),
                power: power(&c.bcc_power),
            },
            mac: MacSection {
                m_r: Some(c.mac.m_r),
                m_c: Some(c.mac.m_c),
                be_min: Some(c.mac.be_min),
                be_max: c.mac.be_max,
                m_mp: Some(c.mac.m_mp),
                r_s: Some(c.mac.r_s),
                r_l: Some(c.mac.r_l),
            },
            model: ModelSection {
                hol_form: Some(c.options.hol_form),
                cca_count: Some(c.options.cca_count),
                ber: Some(c.options.ber),
                noise_floor_dbm: Some(c.options.noise_floor_dbm),
                ack_bits: Some(c.options.ack_bits),
                supply_voltage: Some(c.options.supply_voltage),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(n: usize, nr: usize) -> NetworkConfig {
        NetworkConfig {
            n_nodes: n,
            n_relays: nr,
            per_node_rate: vec![10.0; n],
            payload_bits: 800,
            est_period: 1.0,
            status_len_bits: 160,
        }
    }

    fn validate(network: NetworkConfig) -> Result<ValidatedConfig, ConfigError> {
        let d = ValidatedConfig::default();
        validate_config(network, d.rf_timing, d.bcc_timing, d.rf_power, d.bcc_power, d.mac, d.options)
    }

    #[test]
    fn load_decomposition() {
        let cfg = validate(net(4, 2)).unwrap();
        assert_eq!(cfg.network.load_direct(), 20.0);
        assert_eq!(cfg.network.load_forwarded(), 20.0);
        assert_eq!(cfg.network.total_load(), 40.0);
    }

    #[test]
    fn too_many_relays_rejected() {
        let err = validate(net(4, 5)).unwrap_err();
        assert_eq!(err, ConfigError::Invariant("n_relays exceeds n_nodes".into()));
    }

    #[test]
    fn negative_rate_rejected() {
        let mut n = net(3, 1);
        n.per_node_rate[1] = -1.0;
        assert!(validate(n).is_err());
    }

    #[test]
    fn defaults_match_reference_values() {
        let c = ValidatedConfig::from_toml_str("").unwrap();
        assert_eq!(c.bcc_timing.t_slot, 23e-6);
        assert_eq!(c.bcc_timing.t_data, 0.2e-3);
        assert_eq!(c.rf_timing.t_slot, 0.192e-3);
        assert_eq!(c.rf_timing.t_cca, 0.25e-3);
        assert_eq!(c.rf_timing.t_data, 1.12e-3);
        assert_eq!(c.rf_timing.t_ack, 0.352e-3);
        assert_eq!(c.rf_timing.t_att, 0.384e-3);
        assert_eq!(c.bcc_timing.t_att, 0.1e-3);
        assert_eq!(c.network.payload_bits, 800);
        assert!((c.rf_power.p_tx - 19.7e-3 * 1.8).abs() < 1e-15);
        assert!((c.rf_power.p_rx - 17.4e-3 * 1.8).abs() < 1e-15);
    }

    #[test]
    fn phy_rate_consistency_checked_when_given() {
        let text = "[rf.timing]\nphy_rate_bps = 250000.0\n";
        assert!(ValidatedConfig::from_toml_str(text).is_err());
        let text = "[rf.timing]\nphy_rate_bps = 250000.0\nt_data = 0.0032\n";
        assert!(ValidatedConfig::from_toml_str(text).is_ok());
    }

    #[test]
    fn voltage_scales_rf_power() {
        let c = ValidatedConfig::from_toml_str("[model]\nsupply_voltage = 3.0\n").unwrap();
        assert!((c.rf_power.p_tx - 19.7e-3 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_parse_error() {
        assert!(matches!(
            ValidatedConfig::from_toml_str("[network]\nbogus = 1\n"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn snr_examples() {
        assert!((snr_from_rssi(-95.0, -95.0) - 1.0).abs() < 1e-12);
        assert!((snr_from_rssi(-85.0, -95.0) - 10.0).abs() < 1e-12);
        assert!((snr_from_rssi(-75.0, -95.0) - 100.0).abs() < 1e-12);
        assert_eq!(snr_from_rssi(f64::NEG_INFINITY, -95.0), 0.0);
    }

    #[test]
    fn overhead_formula() {
        let mut n = net(10, 5);
        n.status_len_bits = 160;
        assert_eq!(n.control_overhead_bps(), 2400.0);
    }

    #[test]
    fn contention_window() {
        let mac = MacParams::default();
        assert_eq!(mac.window(0), 8);
        assert_eq!(mac.window(2), 32);
        let capped = MacParams { be_max: Some(4), ..mac };
        assert_eq!(capped.window(3), 16);
    }

    proptest::proptest! {
        #[test]
        fn toml_round_trip(rate in 0.0f64..500.0, t_slot in 1e-6f64..1e-2, r_s in 0.0f64..1.0, p in 1e-4f64..0.03) {
            let mut c = ValidatedConfig::default();
            c.network.per_node_rate = vec![rate, rate / 3.0, rate * 1.7, 0.0];
            c.rf_timing.t_slot = t_slot;
            c.mac.r_s = r_s;
            c.rf_power.p_tx = p.max(c.rf_power.p_act);
            let back = ValidatedConfig::from_toml_str(&c.to_toml_string()).unwrap();
            let rel = |a: f64, b: f64| if a == b { 0.0 } else { ((a - b) / a.abs().max(b.abs())).abs() };
            for (a, b) in c.network.per_node_rate.iter().zip(&back.network.per_node_rate) {
                proptest::prop_assert!(rel(*a, *b) <= 1e-12);
            }
            proptest::prop_assert!(rel(c.rf_timing.t_slot, back.rf_timing.t_slot) <= 1e-12);
            proptest::prop_assert!(rel(c.mac.r_s, back.mac.r_s) <= 1e-12);
            proptest::prop_assert!(rel(c.rf_power.p_tx, back.rf_power.p_tx) <= 1e-12);
            proptest::prop_assert_eq!(back, c);
        }

        #[test]
        fn load_split_identity(rates in proptest::collection::vec(0.0f64..100.0, 1..8), mask in 0u32..256) {
            let n = rates.len();
            let relays: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let cfg = NetworkConfig { n_nodes: n, n_relays: 1, per_node_rate: rates.clone(), payload_bits: 800, est_period: 1.0, status_len_bits: 160 };
            let (d, f) = cfg.load_split(&relays);
            proptest::prop_assert!((d + f - rates.iter().sum::<f64>()).abs() < 1e-9);
        }
    }
}

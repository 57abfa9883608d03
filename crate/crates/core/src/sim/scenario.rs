//! On-body placements: which nodes see the gateway and how well.

use rand::Rng;

use crate::config::db_to_linear;
use crate::error::SimError;
use crate::sim::channel::{LinkMatrix, LinkQuality};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub los_snr_db: f64,
    pub nlos_snr_db: f64,
    /// Probability that a node is in line of sight (Scenario 1).
    pub p_los: f64,
    /// Mean SNR of unobstructed on-body links.
    pub neighbor_snr_db: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            los_snr_db: 20.0,
            nlos_snr_db: 10.0,
            p_los: 0.5,
            neighbor_snr_db: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    /// Random placement with at least half of the nodes in line of sight.
    Scenario1,
    /// Lying in bed: the first `⌊N/2⌋` nodes are on the back and fully
    /// blocked, to the gateway and to every other node.
    Scenario2,
    Custom(LinkMatrix),
}

pub fn body_scenario<R: Rng>(kind: &ScenarioKind, n: usize, params: &ScenarioParams, rng: &mut R) -> Result<LinkMatrix, SimError> {
    if n == 0 {
        return Err(SimError::Scenario("no nodes".into()));
    }
    let los = LinkQuality::Rayleigh { mean_snr: db_to_linear(params.los_snr_db) };
    let nlos = LinkQuality::Rayleigh { mean_snr: db_to_linear(params.nlos_snr_db) };
    let body = LinkQuality::Rayleigh { mean_snr: db_to_linear(params.neighbor_snr_db) };
    let min_los = n.div_ceil(2);
    match kind {
        ScenarioKind::Scenario1 => {
            if !(params.p_los > 0.0 && params.p_los <= 1.0) {
                return Err(SimError::Scenario(format!("p_los {} outside (0, 1]", params.p_los)));
            }
            let in_los = loop {
                let draw: Vec<bool> = (0..n).map(|_| rng.gen_bool(params.p_los)).collect();
                if draw.iter().filter(|&&l| l).count() >= min_los {
                    break draw;
                }
            };
            Ok(LinkMatrix {
                gateway: in_los.iter().map(|&l| if l { los } else { nlos }).collect(),
                neighbor: neighbors(n, body, |_| false),
            })
        }
        ScenarioKind::Scenario2 => {
            let blocked = |i: usize| i < n - min_los;
            Ok(LinkMatrix {
                gateway: (0..n).map(|i| if blocked(i) { LinkQuality::Blocked } else { los }).collect(),
                neighbor: neighbors(n, body, blocked),
            })
        }
        ScenarioKind::Custom(m) => {
            if m.gateway.len() != n || m.neighbor.len() != n || m.neighbor.iter().any(|row| row.len() != n) {
                return Err(SimError::Scenario(format!("link matrix is not {n}x{n}")));
            }
            let bad = |q: &LinkQuality| match *q {
                LinkQuality::Blocked => false,
                LinkQuality::Fixed { pi_e } => !(0.0..=1.0).contains(&pi_e),
                LinkQuality::Rayleigh { mean_snr } => !(mean_snr > 0.0 && mean_snr.is_finite()),
            };
            if m.gateway.iter().chain(m.neighbor.iter().flatten()).any(bad) {
                return Err(SimError::Scenario("link quality out of range".into()));
            }
            Ok(m.clone())
        }
    }
}

fn neighbors(n: usize, q: LinkQuality, blocked: impl Fn(usize) -> bool) -> Vec<Vec<LinkQuality>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j || blocked(i) || blocked(j) { LinkQuality::Blocked } else { q })
                .collect()
        })
        .collect()
}

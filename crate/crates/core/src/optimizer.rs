//! Exhaustive grid search over MAC parameters.
//!
//! Candidates are evaluated in parallel and reduced in a fixed total order,
//! so results do not depend on the thread schedule.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::bcc_model::{solve_bcc, BccModelInput, BccModelSolution};
use crate::config::MacParams;
use crate::error::OptError;
use crate::rf_model::{link_metrics, solve_rf, RfModelInput, RfModelSolution};

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Parameter sets that can be written as columns of the candidate table.
pub trait ParamColumns {
    fn header() -> Vec<&'static str>;
    fn values(&self) -> Vec<String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RfParams {
    pub m_c: u32,
    pub m_r: u32,
}

impl ParamColumns for RfParams {
    fn header() -> Vec<&'static str> {
        vec!["m_c", "m_r"]
    }
    fn values(&self) -> Vec<String> {
        vec![self.m_c.to_string(), self.m_r.to_string()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BccParams {
    pub r_s: f64,
    pub r_l: f64,
    pub m_mp: u32,
}

impl ParamColumns for BccParams {
    fn header() -> Vec<&'static str> {
        vec!["r_s", "r_l", "m_mp"]
    }
    fn values(&self) -> Vec<String> {
        vec![self.r_s.to_string(), self.r_l.to_string(), self.m_mp.to_string()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointParams {
    pub rf: RfParams,
    pub bcc: BccParams,
}

impl ParamColumns for JointParams {
    fn header() -> Vec<&'static str> {
        let mut h = RfParams::header();
        h.extend(BccParams::header());
        h
    }
    fn values(&self) -> Vec<String> {
        let mut v = self.rf.values();
        v.extend(self.bcc.values());
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<P> {
    pub params: P,
    /// Objective value; infinite when the model could not be evaluated.
    pub objective: f64,
    /// Value compared against the constraint bound.
    pub constraint: f64,
    pub feasible: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult<P> {
    pub best_params: P,
    pub best_objective: f64,
    pub feasible_count: usize,
    pub evaluated_count: usize,
    pub table: Vec<Candidate<P>>,
}

impl<P: ParamColumns> OptResult<P> {
    pub fn write_table<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = P::header();
        header.extend(["objective", "constraint", "feasible", "note"]);
        w.write_record(&header)?;
        for c in &self.table {
            let mut row = c.params.values();
            row.extend([
                c.objective.to_string(),
                c.constraint.to_string(),
                c.feasible.to_string(),
                c.note.clone(),
            ]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pick the feasible candidate with the smallest objective, breaking exact
/// ties with `tie`. Without a feasible candidate, the one closest to the
/// constraint bound is reported.
fn select<P: Clone + std::fmt::Debug>(
    table: Vec<Candidate<P>>,
    tie: impl Fn(&P, &P) -> Ordering,
) -> Result<OptResult<P>, OptError> {
    if table.is_empty() {
        return Err(OptError::EmptySearchSpace);
    }
    let best = table
        .iter()
        .filter(|c| c.feasible)
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then_with(|| tie(&a.params, &b.params)));
    match best {
        Some(b) => Ok(OptResult {
            best_params: b.params.clone(),
            best_objective: b.objective,
            feasible_count: table.iter().filter(|c| c.feasible).count(),
            evaluated_count: table.len(),
            table,
        }),
        None => {
            let closest = table
                .iter()
                .min_by(|a, b| a.constraint.total_cmp(&b.constraint).then_with(|| tie(&a.params, &b.params)))
                .expect("table is non-empty");
            Err(OptError::Infeasible {
                evaluated: table.len(),
                diagnostic: format!("{:?} with constraint value {:e}", closest.params, closest.constraint),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfOptProblem {
    /// Network state; the relay at `node` is the one optimizing.
    pub base: RfModelInput,
    pub node: usize,
    pub m_c_values: Vec<u32>,
    pub m_r_values: Vec<u32>,
    pub plr_max: f64,
}

impl RfOptProblem {
    pub fn new(base: RfModelInput, node: usize) -> Self {
        RfOptProblem {
            base,
            node,
            m_c_values: (1..=8).collect(),
            m_r_values: (1..=8).collect(),
            plr_max: 0.15,
        }
    }

    fn candidates(&self) -> Vec<RfParams> {
        let mut out = Vec::new();
        for &m_r in &self.m_r_values {
            for &m_c in &self.m_c_values {
                out.push(RfParams { m_c, m_r });
            }
        }
        out
    }
}

fn with_rf_params(base: &RfModelInput, p: RfParams) -> RfModelInput {
    RfModelInput {
        mac: MacParams { m_c: p.m_c, m_r: p.m_r, ..base.mac },
        ..base.clone()
    }
}

/// Evaluate one RF candidate: the model solution and the optimizing node's own loss.
fn eval_rf(base: &RfModelInput, node: usize, p: RfParams) -> Result<(RfModelSolution, f64), String> {
    let input = with_rf_params(base, p);
    let sol = solve_rf(&input).map_err(|e| e.to_string())?;
    let link = input.relay_links[node];
    let own = link_metrics(link.pi_e, sol.pi_cca, &input.mac, &input.timing, &input.options);
    Ok((sol, own.pi_loss))
}

fn rf_tie(a: &RfParams, b: &RfParams) -> Ordering {
    (a.m_r, a.m_c).cmp(&(b.m_r, b.m_c))
}

pub fn optimize_rf(problem: &RfOptProblem) -> Result<OptResult<RfParams>, OptError> {
    if problem.node >= problem.base.relay_links.len() {
        return Err(OptError::InvalidProblem("node is not a relay link".into()));
    }
    if problem.m_c_values.iter().chain(&problem.m_r_values).any(|&v| v == 0) {
        return Err(OptError::InvalidProblem("m_c and m_r must be >= 1".into()));
    }
    let table: Vec<_> = problem
        .candidates()
        .into_par_iter()
        .map(|p| match eval_rf(&problem.base, problem.node, p) {
            Ok((sol, loss)) => Candidate {
                params: p,
                objective: sol.mean_energy,
                constraint: loss,
                feasible: loss <= problem.plr_max,
                note: String::new(),
            },
            Err(note) => Candidate {
                params: p,
                objective: f64::INFINITY,
                constraint: f64::INFINITY,
                feasible: false,
                note,
            },
        })
        .collect();
    select(table, rf_tie)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BccOptProblem {
    pub base: BccModelInput,
    pub r_s_grid: Vec<f64>,
    pub r_l_grid: Vec<f64>,
    pub m_mp_values: Vec<u32>,
    /// Mean RF delay the forwarded packet also incurs.
    pub rf_delay: f64,
    pub delay_max: f64,
}

impl BccOptProblem {
    pub fn new(base: BccModelInput, rf_delay: f64, delay_max: f64) -> Self {
        BccOptProblem {
            base,
            r_s_grid: log_grid(0.1e-3, 1.0, 16),
            r_l_grid: log_grid(0.1e-3, 1.0, 16),
            m_mp_values: (1..=8).collect(),
            rf_delay,
            delay_max,
        }
    }

    fn candidates(&self) -> Vec<BccParams> {
        let mut out = Vec::new();
        for &r_s in &self.r_s_grid {
            for &r_l in &self.r_l_grid {
                for &m_mp in &self.m_mp_values {
                    out.push(BccParams { r_s, r_l, m_mp });
                }
            }
        }
        out
    }
}

fn with_bcc_params(base: &BccModelInput, p: BccParams) -> BccModelInput {
    BccModelInput {
        mac: MacParams {
            r_s: p.r_s,
            r_l: p.r_l,
            m_mp: p.m_mp,
            ..base.mac
        },
        ..base.clone()
    }
}

fn eval_bcc(base: &BccModelInput, p: BccParams) -> Result<BccModelSolution, String> {
    solve_bcc(&with_bcc_params(base, p)).map_err(|e| e.to_string())
}

/// Larger sleep interval first, then shorter listen, then fewer CCAs.
fn bcc_tie(a: &BccParams, b: &BccParams) -> Ordering {
    b.r_s
        .total_cmp(&a.r_s)
        .then_with(|| a.r_l.total_cmp(&b.r_l))
        .then_with(|| a.m_mp.cmp(&b.m_mp))
}

pub fn optimize_bcc(problem: &BccOptProblem) -> Result<OptResult<BccParams>, OptError> {
    if !(problem.delay_max > 0.0) {
        return Err(OptError::InvalidProblem("delay_max must be positive".into()));
    }
    if problem.m_mp_values.contains(&0) {
        return Err(OptError::InvalidProblem("m_mp must be >= 1".into()));
    }
    let table: Vec<_> = problem
        .candidates()
        .into_par_iter()
        .map(|p| match eval_bcc(&problem.base, p) {
            Ok(sol) => {
                let delay = problem.rf_delay + sol.mean_delay;
                Candidate {
                    params: p,
                    objective: sol.mean_energy,
                    constraint: delay,
                    feasible: delay <= problem.delay_max,
                    note: String::new(),
                }
            }
            Err(note) => Candidate {
                params: p,
                objective: f64::INFINITY,
                constraint: f64::INFINITY,
                feasible: false,
                note,
            },
        })
        .collect();
    select(table, bcc_tie)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayOptProblem {
    pub rf: RfOptProblem,
    pub bcc: BccOptProblem,
    /// Energy allowed per packet, J.
    pub budget: f64,
}

fn joint_tie(a: &JointParams, b: &JointParams) -> Ordering {
    rf_tie(&a.rf, &b.rf).then_with(|| bcc_tie(&a.bcc, &b.bcc))
}

/// Minimize `E[D_rf] + E[D_bcc]` subject to `E[E_rf] + E[E_bcc] <= budget`.
pub fn optimize_delay_under_energy(problem: &DelayOptProblem) -> Result<OptResult<JointParams>, OptError> {
    if !(problem.budget > 0.0) {
        return Err(OptError::InvalidProblem("budget must be positive".into()));
    }
    // the two links are independent for fixed N and N_r: evaluate each grid once
    let rf: Vec<_> = problem
        .rf
        .candidates()
        .into_par_iter()
        .map(|p| (p, solve_rf(&with_rf_params(&problem.rf.base, p)).map_err(|e| e.to_string())))
        .collect();
    let bcc: Vec<_> = problem
        .bcc
        .candidates()
        .into_par_iter()
        .map(|p| (p, eval_bcc(&problem.bcc.base, p)))
        .collect();
    let mut table = Vec::with_capacity(rf.len() * bcc.len());
    for (rp, rs) in &rf {
        for (bp, bs) in &bcc {
            let params = JointParams { rf: *rp, bcc: *bp };
            table.push(match (rs, bs) {
                (Ok(r), Ok(b)) => {
                    let energy = r.mean_energy + b.mean_energy;
                    Candidate {
                        params,
                        objective: r.mean_delay + b.mean_delay,
                        constraint: energy,
                        feasible: energy <= problem.budget,
                        note: String::new(),
                    }
                }
                (Err(e), _) | (_, Err(e)) => Candidate {
                    params,
                    objective: f64::INFINITY,
                    constraint: f64::INFINITY,
                    feasible: false,
                    note: e.clone(),
                },
            });
        }
    }
    select(table, joint_tie)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{LinkState, ModelOptions, PowerProfile, TimingParams};

    fn rf_base(pis: &[f64], load: f64) -> RfModelInput {
        RfModelInput {
            relay_links: pis.iter().enumerate().map(|(i, &p)| LinkState::with_pi_e(i, p)).collect(),
            mac: MacParams::default(),
            timing: TimingParams::rf_default(),
            power: PowerProfile::cc2420(1.8),
            load_direct: load,
            load_forwarded: 0.0,
            options: ModelOptions::default(),
        }
    }

    fn bcc_base(t_pream: Option<f64>) -> BccModelInput {
        BccModelInput {
            n_nodes: 4,
            n_relays: 2,
            load_forwarded: 10.0,
            mac: MacParams::default(),
            timing: TimingParams {
                t_pream,
                ..TimingParams::bcc_default()
            },
            power: PowerProfile::bcc_default(),
        }
    }

    /// Brute-force re-enumeration with a plain sequential scan.
    fn brute_rf(problem: &RfOptProblem) -> Option<(RfParams, f64)> {
        let mut best: Option<(RfParams, f64)> = None;
        for &m_r in &problem.m_r_values {
            for &m_c in &problem.m_c_values {
                let p = RfParams { m_c, m_r };
                let Ok((sol, loss)) = eval_rf(&problem.base, problem.node, p) else { continue };
                if loss > problem.plr_max {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bp, be)) => sol.mean_energy < be || (sol.mean_energy == be && (m_r, m_c) < (bp.m_r, bp.m_c)),
                };
                if better {
                    best = Some((p, sol.mean_energy));
                }
            }
        }
        best
    }

    #[test]
    fn clean_links_pick_single_transmission() {
        let problem = RfOptProblem::new(rf_base(&[0.0, 0.0], 10.0), 0);
        let res = optimize_rf(&problem).unwrap();
        assert_eq!(res.best_params.m_r, 1);
        assert_eq!(res.evaluated_count, 64);
        let (bp, be) = brute_rf(&problem).unwrap();
        assert_eq!(res.best_params, bp);
        assert_eq!(res.best_objective, be);
    }

    #[test]
    fn zero_loss_bound_with_erasures_is_infeasible() {
        let mut problem = RfOptProblem::new(rf_base(&[0.5, 0.5], 10.0), 1);
        problem.plr_max = 0.0;
        match optimize_rf(&problem) {
            Err(OptError::Infeasible { evaluated, diagnostic }) => {
                assert_eq!(evaluated, 64);
                assert!(diagnostic.contains("m_r: 8"), "{diagnostic}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_candidate_grid() {
        let mut problem = RfOptProblem::new(rf_base(&[0.2, 0.1], 20.0), 0);
        problem.m_c_values = vec![3];
        problem.m_r_values = vec![3];
        let res = optimize_rf(&problem).unwrap();
        assert_eq!(res.best_params, RfParams { m_c: 3, m_r: 3 });
        problem.plr_max = 1e-6;
        assert!(matches!(optimize_rf(&problem), Err(OptError::Infeasible { .. })));
    }

    #[test]
    fn empty_grid() {
        let mut problem = RfOptProblem::new(rf_base(&[0.2], 20.0), 0);
        problem.m_c_values.clear();
        assert_eq!(optimize_rf(&problem), Err(OptError::EmptySearchSpace));
    }

    #[test]
    fn relaxing_loss_bound_never_hurts() {
        let base = rf_base(&[0.3, 0.05, 0.1], 40.0);
        let mut prev = f64::INFINITY;
        for &plr in &[0.01, 0.03, 0.05, 0.1, 0.15, 0.3, 1.0] {
            let problem = RfOptProblem { plr_max: plr, ..RfOptProblem::new(base.clone(), 0) };
            if let Ok(r) = optimize_rf(&problem) {
                assert!(r.best_objective <= prev);
                prev = r.best_objective;
            }
        }
        assert!(prev.is_finite());
    }

    #[test]
    fn rf_matches_brute_force_across_states() {
        for &pe in &[0.0, 0.05, 0.2, 0.5, 0.8] {
            for &load in &[10.0, 50.0, 100.0] {
                let problem = RfOptProblem::new(rf_base(&[pe, 0.1, 0.02], load), 0);
                let brute = brute_rf(&problem);
                match optimize_rf(&problem) {
                    Ok(r) => {
                        let (bp, be) = brute.unwrap();
                        assert_eq!(r.best_params, bp);
                        assert_eq!(r.best_objective, be);
                    }
                    Err(OptError::Infeasible { .. }) => assert!(brute.is_none()),
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn deterministic_results() {
        let problem = RfOptProblem::new(rf_base(&[0.2, 0.1], 50.0), 1);
        let a = optimize_rf(&problem).unwrap();
        for _ in 0..5 {
            assert_eq!(optimize_rf(&problem).unwrap(), a);
        }
    }

    fn brute_bcc(problem: &BccOptProblem) -> Option<(BccParams, f64)> {
        let mut best: Option<(BccParams, f64)> = None;
        for &r_s in &problem.r_s_grid {
            for &r_l in &problem.r_l_grid {
                for &m_mp in &problem.m_mp_values {
                    let p = BccParams { r_s, r_l, m_mp };
                    let Ok(sol) = eval_bcc(&problem.base, p) else { continue };
                    if problem.rf_delay + sol.mean_delay > problem.delay_max {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bp, be)) => sol.mean_energy < be || (sol.mean_energy == be && bcc_tie(&p, &bp) == Ordering::Less),
                    };
                    if better {
                        best = Some((p, sol.mean_energy));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn unconstrained_bcc_with_fixed_preamble_sleeps_as_long_as_allowed() {
        let problem = BccOptProblem::new(bcc_base(Some(12e-3)), 3e-3, f64::INFINITY);
        let res = optimize_bcc(&problem).unwrap();
        let (bp, be) = brute_bcc(&problem).unwrap();
        assert_eq!(res.best_params, bp);
        assert_eq!(res.best_objective, be);
        let max_valid = problem.r_s_grid.iter().copied().filter(|&r| r <= 12e-3).fold(0.0, f64::max);
        assert_eq!(res.best_params.r_s, max_valid);
    }

    #[test]
    fn unconstrained_bcc_with_derived_preamble_matches_brute_force() {
        let problem = BccOptProblem::new(bcc_base(None), 3e-3, f64::INFINITY);
        let res = optimize_bcc(&problem).unwrap();
        let (bp, be) = brute_bcc(&problem).unwrap();
        assert_eq!(res.best_params, bp);
        assert_eq!(res.best_objective, be);
        // the preamble grows with the sleep interval, so shorter sleep is cheaper per packet
        assert_eq!(res.best_params.r_s, problem.r_s_grid[0]);
    }

    #[test]
    fn bcc_delay_floor_is_infeasible() {
        let base = bcc_base(None);
        let floor = crate::bcc_model::data_phase_delay(&base.timing) + base.timing.t_att + base.timing.t_rtr;
        let problem = BccOptProblem::new(base, 0.0, floor);
        assert!(matches!(optimize_bcc(&problem), Err(OptError::Infeasible { .. })));
    }

    #[test]
    fn bcc_feasible_set_nesting() {
        let loose = optimize_bcc(&BccOptProblem::new(bcc_base(None), 3e-3, 1.0)).unwrap();
        let tight = optimize_bcc(&BccOptProblem::new(bcc_base(None), 3e-3, 50e-3)).unwrap();
        assert!(loose.best_objective <= tight.best_objective);
        let slow = BccModelInput { load_forwarded: 1.0, ..bcc_base(Some(0.5)) };
        let tight = optimize_bcc(&BccOptProblem::new(slow.clone(), 3e-3, 0.6)).unwrap();
        let loose = optimize_bcc(&BccOptProblem::new(slow, 3e-3, 1.0)).unwrap();
        assert!(loose.best_objective <= tight.best_objective);
    }

    fn delay_problem(budget: f64) -> DelayOptProblem {
        let mut rf = RfOptProblem::new(rf_base(&[0.1, 0.05], 20.0), 0);
        rf.m_c_values = vec![1, 3, 5];
        rf.m_r_values = vec![1, 3, 5];
        let mut bcc = BccOptProblem::new(bcc_base(None), 0.0, f64::INFINITY);
        bcc.r_s_grid = log_grid(1e-3, 50e-3, 5);
        bcc.r_l_grid = log_grid(1e-3, 50e-3, 5);
        bcc.m_mp_values = vec![1, 4];
        DelayOptProblem { rf, bcc, budget }
    }

    #[test]
    fn unlimited_budget_returns_delay_minimum() {
        let res = optimize_delay_under_energy(&delay_problem(f64::INFINITY)).unwrap();
        let min = res.table.iter().map(|c| c.objective).fold(f64::INFINITY, f64::min);
        assert_eq!(res.best_objective, min);
        assert_eq!(res.feasible_count, res.table.iter().filter(|c| c.objective.is_finite()).count());
    }

    #[test]
    fn budget_below_cheapest_is_infeasible() {
        let all = optimize_delay_under_energy(&delay_problem(f64::INFINITY)).unwrap();
        let cheapest = all.table.iter().map(|c| c.constraint).fold(f64::INFINITY, f64::min);
        let res = optimize_delay_under_energy(&delay_problem(cheapest * 0.999));
        assert!(matches!(res, Err(OptError::Infeasible { .. })));
        let res = optimize_delay_under_energy(&delay_problem(cheapest)).unwrap();
        assert_eq!(res.feasible_count, 1);
    }

    #[test]
    fn proportional_budget_is_feasible() {
        let res = optimize_delay_under_energy(&delay_problem(100.0 / 1000.0)).unwrap();
        assert!(res.feasible_count > 0);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.1e-3, 1.0, 16);
        assert_eq!(g.len(), 16);
        assert_eq!(g[0], 0.1e-3);
        assert_eq!(g[15], 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn table_csv_has_one_row_per_candidate() {
        let mut problem = RfOptProblem::new(rf_base(&[0.1], 10.0), 0);
        problem.m_c_values = vec![1, 2];
        problem.m_r_values = vec![1, 2, 3];
        let res = optimize_rf(&problem).unwrap();
        let mut buf = Vec::new();
        res.write_table(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "m_c,m_r,objective,constraint,feasible,note");
        assert_eq!(lines.count(), 6);
    }
}

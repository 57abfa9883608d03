use thiserror::Error;

/// Rejected configuration. The message names the first violated invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invariant(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config io error: {0}")]
    Io(String),
}

impl ConfigError {
    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        ConfigError::Invariant(msg.into())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("fixed point did not converge (best residual {best_residual:e} after {iterations} iterations)")]
    NonConvergence { best_residual: f64, iterations: usize },
    #[error("fixed point iteration diverged: coordinate {coordinate} became non-finite")]
    Divergence { coordinate: usize },
    #[error("invalid solver settings: {0}")]
    InvalidProblem(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unstable queue: utilization {rho:.4} >= 1")]
    UnstableSystem { rho: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("negative duration: HOL delay {hol_delay:e} s is shorter than CCA time {cca_time:e} s")]
    NegativeDuration { hol_delay: f64, cca_time: f64 },
    #[error("invalid duty cycle: preamble {preamble:e} s is shorter than sleep interval {sleep:e} s")]
    InvalidDutyCycle { preamble: f64, sleep: f64 },
    #[error("invalid model input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptError {
    #[error("no feasible candidate among {evaluated} evaluated; closest: {diagnostic}")]
    Infeasible { evaluated: usize, diagnostic: String },
    #[error("empty search space")]
    EmptySearchSpace,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("no relay available")]
    NoRelayAvailable,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Opt(#[from] OptError),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace contains no samples")]
    EmptyTrace,
    #[error("trace io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    Spec(String),
    #[error("sweep has {runs} runs, cap is {cap}")]
    TooManyRuns { runs: usize, cap: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("report io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

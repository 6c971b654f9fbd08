use crate::mdp::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model failed validation with {} violation(s): {}", .0.len(), join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value iteration did not converge in {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("chain did not mix within {cap} steps (last TV distance {tv})")]
    MixingCap { cap: u64, tv: f64 },

    #[error("NaN entry at state {state}, action {action}")]
    NaN { state: usize, action: usize },

    #[error("iterate left [0, {upper}] at t = {t}: value {value}")]
    RangeViolation { t: u64, value: f64, upper: f64 },

    #[error("behavior policy row {0} is not a probability vector over allowed actions")]
    BehaviorRow(usize),

    #[error("linear system is numerically singular: {0}")]
    Singular(String),

    #[error("internal numerical error: {0}")]
    Numerical(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    #[error("unsupported file version {found} (this build reads version {supported}); {hint}")]
    UnsupportedVersion { found: u64, supported: u64, hint: String },
}

impl Error {
    /// True for errors caused by an iterative method failing to converge.
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, Error::NotConverged { .. } | Error::MixingCap { .. })
    }

    /// Process exit status for the command-line tool: 3 for non-convergence,
    /// 2 for every other failure of the inputs or the computation.
    pub fn exit_code(&self) -> i32 {
        if self.is_non_convergence() {
            3
        } else {
            2
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

use thiserror::Error;

/// Failures reported by the numerical routines.
///
/// Each variant corresponds to one failure kind; callers (the CLI in
/// particular) map them onto exit codes through [`Error::kind`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("cubic for the coexistence equilibrium is ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("state is not an equilibrium (residual {residual:e})")]
    NotEquilibrium { residual: f64 },
    #[error("no interior fold: alpha*chi = {alpha_chi} <= 1")]
    NoFold { alpha_chi: f64 },
    #[error("entry-exit balance has no root on the admissible interval")]
    NoRoot,
    #[error("height {height} outside the critical-manifold range [0, {v_fold}]")]
    OutOfRange { height: f64, v_fold: f64 },
    #[error("slow-flow integrand has a pole on the integration path near u = {at}")]
    PoleOnPath { at: f64 },
    #[error("quadrature did not reach tolerance (estimated error {estimate:e})")]
    QuadratureFailed { estimate: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("bound violation at t = {t}: {what}")]
    BoundViolation { t: f64, what: String },
    #[error("no limit cycle detected ({crossings} section crossings)")]
    NoCycle { crossings: usize },
    #[error("no sign change of the test function on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("determinant is non-positive at the trace zero ({det:e})")]
    DetNonpositive { det: f64 },
    #[error("first Lyapunov coefficient is numerically zero ({value:e})")]
    NearZero { value: f64 },
    #[error("transition unresolved at parameter resolution {resolution:e}")]
    Unresolved { resolution: f64 },
    #[error("domain label ambiguous: {0}")]
    Ambiguous(String),
    #[error("no feasible coexistence equilibrium")]
    NoCoexistence,
    #[error("no Turing band: discriminant negative")]
    NoBand,
    #[error("Turing feasibility restriction fails: {0}")]
    Infeasible(String),
    #[error("no Turing instability possible: {0}")]
    NoTuring(String),
    #[error("mode {n} sits on the pole of the mode boundary")]
    SingularMode { n: u32 },
    #[error("transient did not settle before the horizon (lower bound {lower_bound})")]
    NotSettled { lower_bound: f64 },
    #[error("power-law data must be strictly positive")]
    NonpositiveData,
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Unsettled,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParams(_) => ErrorKind::Config,
            Error::NotSettled { .. } | Error::Ambiguous(_) => ErrorKind::Unsettled,
            _ => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the timescale, plant, controller and simulation layers.
///
/// Values are carried as `f64` regardless of the scalar type the failing
/// routine was instantiated with.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{quantity} is outside its domain: {value} ({constraint})")]
    Domain {
        quantity: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("invalid parameter `{field}`: {constraint} (got {value})")]
    InvalidParameter {
        field: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("non-finite value while evaluating {what} at {point:?}")]
    Evaluation { what: &'static str, point: Vec<f64> },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("steady-state solver failed for u_hat = {u_hat}: best residual {best_residual:e} at {best_point:?}")]
    Solver {
        u_hat: f64,
        best_residual: f64,
        best_point: Vec<f64>,
    },

    #[error("step size underflow at t = {t}: h = {h:e}")]
    StepUnderflow { t: f64, h: f64 },

    #[error("optimum search found no feasible point in [{lo}, {hi}]")]
    NoFeasiblePoint { lo: f64, hi: f64 },

    #[error("trajectory diverged at t = {t}: {reason}")]
    Diverged { t: f64, reason: String },

    #[error("trajectories are not on a common grid: {0}")]
    GridMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// Errors shared across the whole laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// A coordinate of a sampled window was requested outside the window.
    #[error("index {index} outside sampled window [{lo}, {hi}]")]
    Range { index: i64, lo: i64, hi: i64 },

    /// A word cannot be closed into a periodic point of the shift space.
    #[error("inadmissible wrap transition {from} -> {to} when closing word")]
    Closure { from: u8, to: u8 },

    /// Construction-time invariant violation (bad measure, bad table, ...).
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    /// A symbol window has no entry in a generator table.
    #[error("no generator entry for window {0:?}")]
    MissingWindow(Vec<u8>),

    /// A running product collapsed to exact zero.
    #[error("degenerate product: rank collapsed to zero")]
    Degenerate,

    /// The restriction of the cocycle to a fast block is numerically singular.
    #[error("restriction of A to E_{level} is numerically rank-deficient (sigma_min = {sigma_min:.3e})")]
    SingularRestriction { level: usize, sigma_min: f64 },

    /// Oblique projection onto the Oseledets blocks failed.
    #[error("frame blocks numerically dependent (condition number {cond:.3e})")]
    ProjectionFailure { cond: f64 },

    /// Pullback frames did not stabilise at the configured tolerance.
    #[error("frame did not converge: stability residual {residual:.3e} > tol {tol:.3e}")]
    ConvergenceFailure { residual: f64, tol: f64 },

    /// No recurrence time within the allotted horizon.
    #[error("no recurrence within horizon {horizon} for k = {k}")]
    NoRecurrence { k: u64, horizon: i64 },

    /// Brute-force word scan exceeds the configured budget.
    #[error("word scan budget exceeded: {words} words (cap {cap}); enable pruning or lower n")]
    Budget { words: u128, cap: u128 },

    /// A Lasota-Yorke style hypothesis does not hold.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Config / input file parse problems, all collected.
    #[error("parse errors:\n{}", .0.join("\n"))]
    Parse(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;

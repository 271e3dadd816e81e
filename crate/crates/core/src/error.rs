use thiserror::Error;

use crate::frames::ReconstructionReport;
use crate::group_core::GroupPoint;

#[derive(Debug, Error)]
pub enum CoorbitError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("group mismatch: {0}")]
    GroupMismatch(String),

    #[error("wavelet is not admissible (|psi_hat(0)| / max |psi_hat| = {dc_ratio:e})")]
    NotAdmissible { dc_ratio: f64 },

    #[error("no closed form for {0}")]
    NoClosedForm(String),

    #[error("control-weight precondition violated: {0}")]
    NotControlWeight(String),

    #[error("family is not dense: uncovered point {witness:?}")]
    NotDense { witness: GroupPoint },

    #[error("schedule exhausted after {steps} steps without a passing certificate (best q = {best_q})")]
    CapReached { steps: usize, best_q: f64 },

    #[error("Neumann iteration diverged after {} iterations", .report.iterations)]
    Diverged { report: Box<ReconstructionReport> },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, CoorbitError>;

pub(crate) fn invalid(msg: impl Into<String>) -> CoorbitError {
    CoorbitError::InvalidParameter(msg.into())
}

//! Achievable rate region and Pareto boundary of the two-user single-beam
//! MIMO interference channel with MMSE receivers.
//!
//! The crate computes the key operating points of the rate region in closed
//! form (single-user points, turning points, the weak boundary segments and
//! zero-forcing points) and traces the strict Pareto boundary with an
//! iterative alternating algorithm: for a fixed rate target on link 2, the
//! rate of link 1 is maximized by alternating two single-beamformer
//! optimizations, each solved exactly through a semidefinite relaxation
//! followed by a rank-one extraction.
//!
//! Modules:
//! - [`linalg`]: dense complex Hermitian eigendecompositions, generalized
//!   pencils, projectors, pseudo-inverse, Hermitian angle.
//! - [`channel`]: the problem instance (four channel matrices, noise powers)
//!   and the SINR/rate formulas.
//! - [`keypoints`]: closed-form boundary points and beamformer
//!   parameterizations.
//! - [`sdp`]: a small dense interior-point SDP solver plus the two problem
//!   builders used by the alternating algorithm.
//! - [`rankone`]: matrix rank-one decomposition and beamformer extraction.
//! - [`iaa`]: the alternating algorithm, feasibility checks and the
//!   full-power perturbation oracle.
//! - [`artifact`]: run configuration, boundary artifacts, envelope
//!   filtering and CSV/JSON emission.

pub mod artifact;
pub mod channel;
pub mod iaa;
pub mod keypoints;
pub mod linalg;
pub mod rankone;
pub mod sdp;

#[cfg(test)]
pub(crate) mod testdata;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

//! First-order solvers for the structured programs: operator-splitting ADMM
//! with a semi-banded (Woodbury) linear-system path, a three-block extended
//! variant that keeps the subproblem purely banded, second-order-cone
//! projections, and an independent interior-point reference backend.

mod admm;
pub mod banded;
mod eadmm;
mod reference;
pub mod woodbury;

pub use admm::{admm_qp, admm_socp};
pub use eadmm::admm_qp_extended;
pub use reference::dense_reference_solve;

use nalgebra::DVector;
use thiserror::Error;

use crate::formulations::{ProgramKind, StructuredProgram};
use crate::scalar::{convert, Scalar};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Banded(#[from] banded::BandedError),
    #[error(transparent)]
    Woodbury(#[from] woodbury::WoodburyError),
    #[error("dense KKT factorization failed")]
    SingularKkt,
    #[error("program too large for the reference backend ({0} variables)")]
    TooLarge(usize),
    #[error("extended backend requires no mixed stage/tail inequality rows")]
    UnsupportedStructure,
    #[error(transparent)]
    Conic(#[from] crate::conic::ConicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    MaxIter,
    PrimalInfeasible,
    DualInfeasible,
}

/// Which linear-system path a solve used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearPath {
    /// Banded KKT factor plus Woodbury rank correction.
    SemiBanded,
    /// Banded factorization of the whole KKT (no low-rank part).
    Banded,
    /// Dense LU of the KKT.
    Dense,
    /// Interior-point backend.
    InteriorPoint,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings<T> {
    /// ADMM penalty.
    pub rho: T,
    pub eps_abs: T,
    pub eps_rel: T,
    pub max_iter: usize,
    /// Residual-balancing penalty updates. The rule is iteration-indexed and
    /// driven only by computed residuals, so solves stay bitwise
    /// deterministic with it enabled.
    pub adaptive_rho: bool,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: T,
    /// Force the dense KKT path even when a structure descriptor is present.
    pub force_dense: bool,
    /// Record residual/objective history (streamed as CSV by the CLI).
    pub record_history: bool,
}

impl<T: Scalar> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            rho: T::one(),
            eps_abs: convert(1e-8),
            eps_rel: convert(1e-8),
            max_iter: 20_000,
            adaptive_rho: true,
            alpha: convert(1.6),
            force_dense: false,
            record_history: false,
        }
    }
}

/// Deterministic operation counts of a solve (multiply–add estimates of the
/// KKT solve path; matvec work is identical across backends and excluded).
#[derive(Debug, Clone, Copy, Default)]
pub struct WorkStats {
    pub setup_flops: u64,
    pub per_iter_solve_flops: u64,
    pub iterations: usize,
}

impl WorkStats {
    pub fn total_solve_flops(&self) -> u64 {
        self.setup_flops + self.per_iter_solve_flops * self.iterations as u64
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    pub z: DVector<T>,
    /// Dual variables ordered `[equalities, inequalities, cone rows]`.
    pub dual: DVector<T>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    pub objective: T,
    pub work: WorkStats,
    pub path: LinearPath,
    /// Optional per-iteration history `(iteration, r_prim, r_dual, objective)`.
    pub history: Vec<(usize, T, T, T)>,
}

/// Euclidean projection onto the second-order cone `{(s, t) : ‖s‖₂ ≤ t}`.
pub fn project_soc<T: Scalar>(s: &DVector<T>, t: T) -> (DVector<T>, T) {
    let norm = s.norm();
    if norm <= t {
        (s.clone(), t)
    } else if norm <= -t {
        (DVector::zeros(s.len()), T::zero())
    } else {
        let scale = (t + norm) / (convert::<T>(2.0) * norm);
        ((s * scale), (t + norm) * convert::<T>(0.5))
    }
}

/// Solves a program with the default first-order backend for its kind.
pub fn solve<T: Scalar>(
    prog: &StructuredProgram<T>,
    settings: &SolverSettings<T>,
    warm: Option<&SolveResult<T>>,
) -> Result<SolveResult<T>, SolverError> {
    match prog.kind {
        ProgramKind::Qp => admm_qp(prog, settings, warm),
        ProgramKind::Socp => admm_socp(prog, settings, warm),
    }
}

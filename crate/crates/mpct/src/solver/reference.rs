//! Independent reference backend: a primal-dual interior-point solve with no
//! code shared with the ADMM path, used as the test oracle and for
//! feasibility scans.

use crate::conic::{self, ConicStatus};
use crate::formulations::StructuredProgram;
use crate::scalar::Scalar;

use super::{LinearPath, SolveResult, SolveStatus, SolverError, WorkStats};

/// Solves a program at tolerance `1e-10` with the interior-point backend.
/// Restricted to moderate dimensions; the first-order path has no such cap.
pub fn dense_reference_solve<T: Scalar>(
    prog: &StructuredProgram<T>,
) -> Result<SolveResult<T>, SolverError> {
    if prog.num_vars() > 2000 {
        return Err(SolverError::TooLarge(prog.num_vars()));
    }
    let sol = conic::solve_program(
        prog,
        conic::ConicOptions {
            tol: 1e-10,
            max_iter: 500,
        },
    )?;
    let status = match sol.status {
        ConicStatus::Solved | ConicStatus::Inaccurate => SolveStatus::Solved,
        ConicStatus::PrimalInfeasible => SolveStatus::PrimalInfeasible,
        ConicStatus::DualInfeasible => SolveStatus::DualInfeasible,
        ConicStatus::MaxIter => SolveStatus::MaxIter,
    };
    let objective = prog.objective(&sol.x);
    Ok(SolveResult {
        z: sol.x,
        dual: sol.dual,
        status,
        iterations: sol.iterations,
        primal_residual: T::zero(),
        dual_residual: T::zero(),
        objective,
        work: WorkStats::default(),
        path: LinearPath::InteriorPoint,
        history: Vec::new(),
    })
}

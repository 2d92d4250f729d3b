//! Interior-point backend for structured programs.
//!
//! This is the crate's oracle path: small LPs used by the set machinery
//! (support functions, Chebyshev centers, redundancy tests) and the
//! independent reference solves all go through Clarabel. Problems are
//! converted to `f64` regardless of the working scalar type so that
//! certificates keep full precision.

use nalgebra::DVector;
use thiserror::Error;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::formulations::{ProgramKind, StructuredProgram};
use crate::scalar::{convert, to_f64, Scalar};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Solved,
    /// Reduced-accuracy solution (tolerances nearly met).
    Inaccurate,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct ConicSolution<T> {
    pub x: DVector<T>,
    /// Dual variables ordered as [equalities, inequalities, cone rows].
    pub dual: DVector<T>,
    pub status: ConicStatus,
    pub objective: T,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("conic solver setup failed: {0}")]
    Setup(String),
    #[error("conic solver returned {0:?}")]
    Failed(SolverStatus),
}

/// Options for a conic solve. `tol` drives the gap and feasibility targets.
#[derive(Debug, Clone, Copy)]
pub struct ConicOptions {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for ConicOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

fn to_clarabel_csc<T: Scalar>(m: &SparseMatrix<T>) -> CscMatrix<f64> {
    let (colptr, rowind, vals) = m.to_csc();
    CscMatrix::new(
        m.nrows(),
        m.ncols(),
        colptr,
        rowind,
        vals.into_iter().map(to_f64).collect(),
    )
}

/// Solves a [`StructuredProgram`] with the interior-point backend.
pub fn solve_program<T: Scalar>(
    prog: &StructuredProgram<T>,
    opts: ConicOptions,
) -> Result<ConicSolution<T>, ConicError> {
    let n = prog.num_vars();
    let me = prog.num_eq();
    let mi = prog.num_ineq();

    // Row layout: equalities (zero cone), inequalities (nonnegative cone),
    // then (t, s) rows per second-order cone.
    let mut rows: Vec<&SparseMatrix<T>> = vec![&prog.a_eq, &prog.f];
    let mut cone_maps: Vec<SparseMatrix<T>> = Vec::new();
    for cone in &prog.cones {
        cone_maps.push(SparseMatrix::vstack(&[&cone.t_map, &cone.s_map]).scale(-T::one()));
    }
    for cm in &cone_maps {
        rows.push(cm);
    }
    let a = SparseMatrix::vstack(&rows);

    let mut b: Vec<f64> = Vec::with_capacity(a.nrows());
    b.extend(prog.b_eq.iter().map(|v| to_f64(*v)));
    b.extend(prog.g.iter().map(|v| to_f64(*v)));
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if me > 0 {
        cones.push(SupportedConeT::ZeroConeT(me));
    }
    if mi > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(mi));
    }
    for cone in &prog.cones {
        b.push(to_f64(cone.t_offset));
        b.extend(cone.s_offset.iter().map(|v| to_f64(*v)));
        cones.push(SupportedConeT::SecondOrderConeT(cone.s_offset.len() + 1));
    }

    if a.nrows() == 0 {
        return solve_unconstrained(prog);
    }

    let p = to_clarabel_csc(&prog.h);
    let a_csc = to_clarabel_csc(&a);
    let q: Vec<f64> = prog.q.iter().map(|v| to_f64(*v)).collect();

    let settings = DefaultSettingsBuilder::<f64>::default()
        .verbose(false)
        .max_iter(opts.max_iter)
        .tol_gap_abs(opts.tol)
        .tol_gap_rel(opts.tol)
        .tol_feas(opts.tol)
        .build()
        .map_err(|e| ConicError::Setup(e.to_string()))?;
    let mut solver = DefaultSolver::new(&p, &q, &a_csc, &b, &cones, settings)
        .map_err(|e| ConicError::Setup(format!("{e:?}")))?;
    solver.solve();

    let status = match solver.solution.status {
        SolverStatus::Solved => ConicStatus::Solved,
        SolverStatus::AlmostSolved => ConicStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            ConicStatus::PrimalInfeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            ConicStatus::DualInfeasible
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => ConicStatus::MaxIter,
        other => return Err(ConicError::Failed(other)),
    };
    let x = DVector::from_iterator(n, solver.solution.x.iter().map(|v| convert::<T>(*v)));
    let dual = DVector::from_iterator(
        a.nrows(),
        solver.solution.z.iter().map(|v| convert::<T>(*v)),
    );
    let objective = convert::<T>(solver.solution.obj_val) + prog.c;
    Ok(ConicSolution {
        x,
        dual,
        status,
        objective,
        iterations: solver.solution.iterations as usize,
    })
}

/// Constraint-free fallback: solve `H x = -q` densely, flag unbounded
/// directions when the quadratic part is absent.
fn solve_unconstrained<T: Scalar>(
    prog: &StructuredProgram<T>,
) -> Result<ConicSolution<T>, ConicError> {
    let n = prog.num_vars();
    let h = prog.h.to_dense();
    if h.amax() == T::zero() {
        let status = if prog.q.amax() == T::zero() {
            ConicStatus::Solved
        } else {
            ConicStatus::DualInfeasible
        };
        return Ok(ConicSolution {
            x: DVector::zeros(n),
            dual: DVector::zeros(0),
            status,
            objective: prog.c,
            iterations: 0,
        });
    }
    let x = h
        .lu()
        .solve(&(-&prog.q))
        .ok_or_else(|| ConicError::Setup("singular unconstrained Hessian".into()))?;
    let objective = prog.objective(&x);
    Ok(ConicSolution {
        x,
        dual: DVector::zeros(0),
        status: ConicStatus::Solved,
        objective,
        iterations: 0,
    })
}

/// Outcome of a linear-program solve over a polytope.
#[derive(Debug, Clone)]
pub enum LpOutcome<T> {
    Optimal { x: DVector<T>, value: T },
    Infeasible,
    Unbounded,
}

/// Maximizes `objᵀx` subject to `F x ≤ g`, `F_eq x = g_eq`.
pub fn maximize_linear<T: Scalar>(
    obj: &DVector<T>,
    f: &SparseMatrix<T>,
    g: &DVector<T>,
    feq: Option<(&SparseMatrix<T>, &DVector<T>)>,
    tol: f64,
) -> Result<LpOutcome<T>, ConicError> {
    let n = obj.len();
    let (a_eq, b_eq) = match feq {
        Some((m, v)) => (m.clone(), v.clone()),
        None => (SparseMatrix::zeros(0, n), DVector::zeros(0)),
    };
    let mut layout = crate::formulations::VarLayout::new();
    layout.push("x", n);
    let prog = StructuredProgram {
        kind: ProgramKind::Qp,
        h: SparseMatrix::zeros(n, n),
        q: -obj.clone(),
        c: T::zero(),
        a_eq,
        b_eq,
        f: f.clone(),
        g: g.clone(),
        cones: Vec::new(),
        structure: None,
        layout,
    };
    let sol = solve_program(&prog, ConicOptions { tol, max_iter: 200 })?;
    Ok(match sol.status {
        ConicStatus::Solved | ConicStatus::Inaccurate => LpOutcome::Optimal {
            value: obj.dot(&sol.x),
            x: sol.x,
        },
        ConicStatus::PrimalInfeasible => LpOutcome::Infeasible,
        ConicStatus::DualInfeasible => LpOutcome::Unbounded,
        ConicStatus::MaxIter => return Err(ConicError::Failed(SolverStatus::MaxIterations)),
    })
}

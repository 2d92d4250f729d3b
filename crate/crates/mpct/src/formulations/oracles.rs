//! Steady-state oracle problems: the optimal reachable reference, its
//! periodic analogue, and the optimal economic setpoint. These are the
//! convergence targets asserted by the closed-loop acceptance tests, solved
//! independently of the MPC programs at tight tolerance.

use nalgebra::{DMatrix, DVector};

use crate::conic::{self, ConicStatus};
use crate::model::{LinearSystem, Polytope};
use crate::scalar::{convert, Scalar};
use crate::sparse::SparseMatrix;

use super::builders::{EconomicCost, FormulationError, ProgramBuilder};
use super::program::{ProgramKind, SocConstraint};

/// Offset-cost specification for the reachable-reference oracle.
#[derive(Debug, Clone)]
pub enum OffsetCost<T> {
    /// `‖y − y_r‖²_S`.
    Quadratic(DMatrix<T>),
    /// `α‖y − y_r‖₂` — the choice that recovers local optimality.
    ScaledNorm(T),
}

fn solve_oracle<T: Scalar>(
    prog: &super::program::StructuredProgram<T>,
) -> Result<conic::ConicSolution<T>, FormulationError> {
    let sol = conic::solve_program(
        prog,
        conic::ConicOptions {
            tol: 1e-10,
            max_iter: 500,
        },
    )?;
    match sol.status {
        ConicStatus::Solved | ConicStatus::Inaccurate => Ok(sol),
        ConicStatus::PrimalInfeasible => Err(FormulationError::EmptySet),
        other => Err(FormulationError::Dimension(format!(
            "oracle solve ended with {other:?}"
        ))),
    }
}

/// Optimal reachable reference `y_a° = argmin_{y ∈ Y_s} V_O(y − y_r)`.
pub fn optimal_reachable_reference<T: Scalar>(
    sys: &LinearSystem<T>,
    z: &Polytope<T>,
    sigma: T,
    yr: &DVector<T>,
    offset: &OffsetCost<T>,
) -> Result<DVector<T>, FormulationError> {
    let nx = sys.nx();
    let nu = sys.nu();
    let ny = sys.ny();
    let zs = crate::model::steady_state_manifold(sys, z, sigma)?;
    let mut pb = ProgramBuilder::new();
    let xu = pb.var("xu", nx + nu);
    pb.polytope(&zs, &[(xu.clone(), DMatrix::identity(nx + nu, nx + nu))]);
    let mut cd = DMatrix::zeros(ny, nx + nu);
    cd.view_mut((0, 0), (ny, nx)).copy_from(sys.c());
    cd.view_mut((0, nx), (ny, nu)).copy_from(sys.d());
    let kind = match offset {
        OffsetCost::Quadratic(s) => {
            // ‖C x + D u − yr‖²_S expanded over (x, u)
            let sym = (s.clone() + s.transpose()) * convert::<T>(0.5);
            pb.quad(&xu, &(cd.transpose() * &sym * &cd));
            pb.lin(&xu, &((cd.transpose() * &sym * yr) * convert::<T>(-2.0)));
            pb.constant(yr.dot(&(&sym * yr)));
            ProgramKind::Qp
        }
        OffsetCost::ScaledNorm(alpha) => {
            let t = pb.var("soc_t", 1);
            pb.lin(&t, &DVector::from_element(1, *alpha));
            let dim = pb.layout.len();
            let mut s_trips = Vec::new();
            for i in 0..ny {
                for j in 0..nx + nu {
                    if cd[(i, j)] != T::zero() {
                        s_trips.push((i, xu.start + j, cd[(i, j)]));
                    }
                }
            }
            pb.cone(SocConstraint {
                s_map: SparseMatrix::from_triplets(ny, dim, &s_trips),
                s_offset: -yr.clone(),
                t_map: SparseMatrix::from_triplets(1, dim, &[(0, t.start, T::one())]),
                t_offset: T::zero(),
            });
            ProgramKind::Socp
        }
    };
    let prog = pb.finish(kind);
    let sol = solve_oracle(&prog)?;
    let x = sol.x.rows(0, nx).clone_owned();
    let u = sol.x.rows(nx, nu).clone_owned();
    Ok(sys.output(&x, &u))
}

/// Optimal reachable periodic trajectory: minimizer of
/// `Σ_k ‖y_{a,k} − y_r(t+k)‖²_S` over the strictly reachable τ-periodic
/// trajectories, solved as a single QP spanning one period.
pub fn optimal_periodic_reference<T: Scalar>(
    sys: &LinearSystem<T>,
    z: &Polytope<T>,
    sigma: T,
    tau: usize,
    yr_traj: &[DVector<T>],
    s_weight: &DMatrix<T>,
) -> Result<Vec<DVector<T>>, FormulationError> {
    if tau == 0 || yr_traj.len() != tau {
        return Err(FormulationError::Dimension(
            "trajectory must carry τ samples".into(),
        ));
    }
    let nx = sys.nx();
    let nu = sys.nu();
    let mut pb = ProgramBuilder::new();
    let mut xs = Vec::with_capacity(tau);
    let mut us = Vec::with_capacity(tau);
    for k in 0..tau {
        xs.push(pb.var(format!("xa{k}"), nx));
        us.push(pb.var(format!("ua{k}"), nu));
    }
    for k in 0..tau {
        let next = xs[(k + 1) % tau].clone();
        pb.eq(
            &[
                (next, DMatrix::identity(nx, nx)),
                (xs[k].clone(), -sys.a()),
                (us[k].clone(), -sys.b()),
            ],
            &DVector::zeros(nx),
        );
    }
    let sz = z.scale(sigma);
    let sym = (s_weight.clone() + s_weight.transpose()) * convert::<T>(0.5);
    for k in 0..tau {
        let mut mx = DMatrix::zeros(nx + nu, nx);
        mx.view_mut((0, 0), (nx, nx))
            .copy_from(&DMatrix::identity(nx, nx));
        let mut mu = DMatrix::zeros(nx + nu, nu);
        mu.view_mut((nx, 0), (nu, nu))
            .copy_from(&DMatrix::identity(nu, nu));
        pb.polytope(&sz, &[(xs[k].clone(), mx), (us[k].clone(), mu)]);
        // ‖C xa_k + D ua_k − yr_k‖²_S
        let cs = sys.c().transpose() * &sym;
        let ds = sys.d().transpose() * &sym;
        pb.quad(&xs[k], &(&cs * sys.c()));
        pb.quad(&us[k], &(&ds * sys.d()));
        pb.cross(&xs[k], &us[k], &(&cs * sys.d() * convert::<T>(2.0)));
        pb.lin(&xs[k], &((&cs * &yr_traj[k]) * convert::<T>(-2.0)));
        pb.lin(&us[k], &((&ds * &yr_traj[k]) * convert::<T>(-2.0)));
        pb.constant(yr_traj[k].dot(&(&sym * &yr_traj[k])));
    }
    let prog = pb.finish(ProgramKind::Qp);
    let sol = solve_oracle(&prog)?;
    let mut out = Vec::with_capacity(tau);
    for k in 0..tau {
        let x = sol.x.rows(xs[k].start, nx).clone_owned();
        let u = sol.x.rows(us[k].start, nu).clone_owned();
        out.push(sys.output(&x, &u));
    }
    Ok(out)
}

/// Optimal economic setpoint `(x*, u*) = argmin_{(x,u) ∈ Z_s} ℓ_eco(x, u, θ)`.
/// Must be re-solved whenever θ changes.
pub fn economic_setpoint<T: Scalar>(
    sys: &LinearSystem<T>,
    z: &Polytope<T>,
    sigma: T,
    econ: &EconomicCost<T>,
    theta: &DVector<T>,
) -> Result<(DVector<T>, DVector<T>), FormulationError> {
    let nx = sys.nx();
    let nu = sys.nu();
    let zs = crate::model::steady_state_manifold(sys, z, sigma)?;
    let mut pb = ProgramBuilder::new();
    let xu = pb.var("xu", nx + nu);
    pb.polytope(&zs, &[(xu.clone(), DMatrix::identity(nx + nu, nx + nu))]);
    let sym = (econ.hessian.clone() + econ.hessian.transpose()) * convert::<T>(0.5);
    pb.quad(&xu, &(&sym * convert::<T>(0.5)));
    pb.lin(&xu, &econ.linear_term(theta));
    let prog = pb.finish(ProgramKind::Qp);
    let sol = solve_oracle(&prog)?;
    Ok((
        sol.x.rows(0, nx).clone_owned(),
        sol.x.rows(nx, nu).clone_owned(),
    ))
}

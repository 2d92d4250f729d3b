//! Operator-splitting (ADMM) solver for the structured QPs and SOCPs.
//!
//! The splitting follows the standard two-block scheme on
//! `min ½xᵀHx + qᵀx  s.t.  Ãx ∈ C` with `C` a product of a point (equality
//! rows), a box (inequality rows) and shifted second-order cones. Each
//! iteration solves the quasi-definite KKT system
//! `[[H + σI, Ãᵀ], [Ã, -diag(1/ρ)]]`; when the program carries a semi-banded
//! structure descriptor the system is `K_B + Û V̂ᵀ` and is dispatched to the
//! Woodbury path, otherwise to a dense factorization.

use nalgebra::{DMatrix, DVector};

use crate::formulations::{ProgramKind, StructuredProgram};
use crate::scalar::{convert, to_f64, Scalar};
use crate::sparse::SparseMatrix;

use super::banded::BandedFactor;
use super::woodbury::SemiBandedKkt;
use super::{project_soc, LinearPath, SolveResult, SolveStatus, SolverError, SolverSettings, WorkStats};

const SIGMA: f64 = 1e-6;
const EQ_RHO_SCALE: f64 = 1e3;
const INFEAS_TOL: f64 = 1e-7;

struct ConeBlock<T> {
    /// First row of the block within the stacked constraint matrix (the `t`
    /// row; the `s` rows follow).
    row0: usize,
    s_len: usize,
    s_offset: DVector<T>,
    t_offset: T,
}

struct Canonical<T> {
    a: SparseMatrix<T>,
    me: usize,
    mi: usize,
    b_eq: DVector<T>,
    g: DVector<T>,
    cones: Vec<ConeBlock<T>>,
}

fn canonicalize<T: Scalar>(prog: &StructuredProgram<T>) -> Canonical<T> {
    let me = prog.num_eq();
    let mi = prog.num_ineq();
    let mut parts: Vec<&SparseMatrix<T>> = vec![&prog.a_eq, &prog.f];
    let mut cone_maps = Vec::new();
    for cone in &prog.cones {
        cone_maps.push(SparseMatrix::vstack(&[&cone.t_map, &cone.s_map]));
    }
    for m in &cone_maps {
        parts.push(m);
    }
    let a = SparseMatrix::vstack(&parts);
    let mut cones = Vec::new();
    let mut row = me + mi;
    for cone in &prog.cones {
        cones.push(ConeBlock {
            row0: row,
            s_len: cone.s_offset.len(),
            s_offset: cone.s_offset.clone(),
            t_offset: cone.t_offset,
        });
        row += 1 + cone.s_offset.len();
    }
    Canonical {
        a,
        me,
        mi,
        b_eq: prog.b_eq.clone(),
        g: prog.g.clone(),
        cones,
    }
}

impl<T: Scalar> Canonical<T> {
    fn rows(&self) -> usize {
        self.a.nrows()
    }

    fn rho_vec(&self, rho: T) -> DVector<T> {
        let m = self.rows();
        let mut v = DVector::from_element(m, rho);
        for i in 0..self.me {
            v[i] = rho * convert(EQ_RHO_SCALE);
        }
        v
    }

    /// Projection onto the constraint set C.
    fn project(&self, w: &DVector<T>) -> DVector<T> {
        let mut v = w.clone();
        for i in 0..self.me {
            v[i] = self.b_eq[i];
        }
        for i in 0..self.mi {
            let idx = self.me + i;
            if v[idx] > self.g[i] {
                v[idx] = self.g[i];
            }
        }
        for cone in &self.cones {
            let t = w[cone.row0] + cone.t_offset;
            let s = DVector::from_fn(cone.s_len, |k, _| w[cone.row0 + 1 + k]) + &cone.s_offset;
            let (ps, pt) = project_soc(&s, t);
            v[cone.row0] = pt - cone.t_offset;
            for k in 0..cone.s_len {
                v[cone.row0 + 1 + k] = ps[k] - cone.s_offset[k];
            }
        }
        v
    }

    /// Support function of C at `y`, or `None` when infinite.
    fn support(&self, y: &DVector<T>, tol: T) -> Option<T> {
        let mut acc = T::zero();
        for i in 0..self.me {
            acc += self.b_eq[i] * y[i];
        }
        for i in 0..self.mi {
            let yi = y[self.me + i];
            if yi < -tol {
                return None; // lower bound is -infinity
            }
            acc += self.g[i] * yi.max(T::zero());
        }
        for cone in &self.cones {
            // support of the shifted cone {v : v + off ∈ K} at y is
            // -offᵀy when y ∈ K* (t ≥ ‖s‖), +inf otherwise
            let t = y[cone.row0];
            let s = DVector::from_fn(cone.s_len, |k, _| y[cone.row0 + 1 + k]);
            if s.norm() > t + tol {
                return None;
            }
            acc -= cone.t_offset * t;
            acc -= cone.s_offset.dot(&s);
        }
        Some(acc)
    }
}

enum KktSolver<T: Scalar> {
    SemiBanded(SemiBandedKkt<T>),
    Banded(BandedFactor<T>),
    Dense {
        lu: nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
        setup_flops: u64,
        solve_flops: u64,
    },
}

impl<T: Scalar> KktSolver<T> {
    fn solve(&self, rhs: &DVector<T>) -> DVector<T> {
        match self {
            Self::SemiBanded(k) => k.solve(rhs),
            Self::Banded(f) => f.solve(rhs),
            Self::Dense { lu, .. } => lu.solve(rhs).expect("KKT factor verified at setup"),
        }
    }

    fn setup_flops(&self) -> u64 {
        match self {
            Self::SemiBanded(k) => k.setup_flops(),
            Self::Banded(f) => f.factor_flops(),
            Self::Dense { setup_flops, .. } => *setup_flops,
        }
    }

    fn solve_flops(&self) -> u64 {
        match self {
            Self::SemiBanded(k) => k.solve_flops(),
            Self::Banded(f) => f.solve_flops(),
            Self::Dense { solve_flops, .. } => *solve_flops,
        }
    }

    fn path(&self) -> LinearPath {
        match self {
            Self::SemiBanded(_) => LinearPath::SemiBanded,
            Self::Banded(_) => LinearPath::Banded,
            Self::Dense { .. } => LinearPath::Dense,
        }
    }
}

pub(crate) enum LinearChoice {
    Auto,
    ForceDense,
    /// Banded factorization of the full KKT, never Woodbury (extended path).
    FullBanded,
}

fn kkt_triplets<T: Scalar>(
    h: &SparseMatrix<T>,
    a: &SparseMatrix<T>,
    rho_vec: &DVector<T>,
    sigma: T,
) -> Vec<(usize, usize, T)> {
    let n = h.nrows();
    let m = a.nrows();
    let mut trips = Vec::with_capacity(h.nnz() + 2 * a.nnz() + n + m);
    for (i, j, v) in h.iter() {
        trips.push((i, j, v));
    }
    for i in 0..n {
        trips.push((i, i, sigma));
    }
    for (i, j, v) in a.iter() {
        trips.push((n + i, j, v));
        trips.push((j, n + i, v));
    }
    for i in 0..m {
        trips.push((n + i, n + i, -T::one() / rho_vec[i]));
    }
    trips
}

fn build_kkt<T: Scalar>(
    prog: &StructuredProgram<T>,
    canon: &Canonical<T>,
    rho_vec: &DVector<T>,
    choice: &LinearChoice,
) -> Result<KktSolver<T>, SolverError> {
    let n = prog.num_vars();
    let m = canon.rows();
    let sigma = convert::<T>(SIGMA);
    let use_structure = prog.structure.is_some()
        && matches!(choice, LinearChoice::Auto)
        && prog.cones.is_empty();
    if use_structure {
        let st = prog.structure.as_ref().unwrap();
        let trips = kkt_triplets(&st.h_banded, &canon.a, rho_vec, sigma);
        let factor = BandedFactor::factor(n + m, &trips, None)?;
        let mut u = DMatrix::zeros(n + m, st.u.ncols());
        u.view_mut((0, 0), (n, st.u.ncols())).copy_from(&st.u);
        let mut v = DMatrix::zeros(n + m, st.v.ncols());
        v.view_mut((0, 0), (n, st.v.ncols())).copy_from(&st.v);
        return Ok(KktSolver::SemiBanded(SemiBandedKkt::new(factor, u, v)?));
    }
    match choice {
        LinearChoice::FullBanded => {
            let trips = kkt_triplets(&prog.h, &canon.a, rho_vec, sigma);
            Ok(KktSolver::Banded(BandedFactor::factor(n + m, &trips, None)?))
        }
        _ => {
            let dim = n + m;
            let mut dense: DMatrix<T> = DMatrix::zeros(dim, dim);
            for (i, j, v) in kkt_triplets(&prog.h, &canon.a, rho_vec, sigma) {
                dense[(i, j)] += v;
            }
            let scale = dense.amax();
            let lu = dense.lu();
            // the determinant of a large KKT under/overflows; gauge
            // singularity by the smallest pivot instead. The regularized KKT
            // is quasi-definite, so only a near-exact zero signals bad input.
            let min_pivot = (0..dim)
                .map(|i| lu.u()[(i, i)].abs())
                .fold(T::from_f64(f64::INFINITY).unwrap(), |a, b| a.min(b));
            if min_pivot <= scale * T::default_epsilon() * convert(1e-2) {
                return Err(SolverError::SingularKkt);
            }
            Ok(KktSolver::Dense {
                lu,
                setup_flops: (dim as u64).pow(3) * 2 / 3,
                solve_flops: (dim as u64).pow(2) * 2,
            })
        }
    }
}

pub(crate) fn admm_core<T: Scalar>(
    prog: &StructuredProgram<T>,
    settings: &SolverSettings<T>,
    warm: Option<&SolveResult<T>>,
    choice: LinearChoice,
) -> Result<SolveResult<T>, SolverError> {
    let canon = canonicalize(prog);
    let n = prog.num_vars();
    let m = canon.rows();
    let mut rho = settings.rho;
    let mut rho_vec = canon.rho_vec(rho);
    let choice = if settings.force_dense {
        LinearChoice::ForceDense
    } else {
        choice
    };
    let mut kkt = build_kkt(prog, &canon, &rho_vec, &choice)?;
    let path = kkt.path();
    let mut setup_flops = kkt.setup_flops();

    let alpha = settings.alpha;
    let one_minus_alpha = T::one() - alpha;
    let sigma = convert::<T>(SIGMA);

    let mut x = warm.map(|w| w.z.clone()).unwrap_or_else(|| DVector::zeros(n));
    if x.len() != n {
        x = DVector::zeros(n);
    }
    let mut y = warm
        .map(|w| w.dual.clone())
        .filter(|d| d.len() == m)
        .unwrap_or_else(|| DVector::zeros(m));
    let mut zc = canon.project(&canon.a.matvec(&x));

    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = settings.max_iter;
    let mut r_prim = T::zero();
    let mut r_dual = T::zero();

    let mut rhs = DVector::zeros(n + m);
    for it in 0..settings.max_iter {
        // KKT right-hand side
        for i in 0..n {
            rhs[i] = sigma * x[i] - prog.q[i];
        }
        for i in 0..m {
            rhs[n + i] = zc[i] - y[i] / rho_vec[i];
        }
        let sol = kkt.solve(&rhs);
        let x_tilde = sol.rows(0, n).clone_owned();
        let nu = sol.rows(n, m).clone_owned();
        let mut z_tilde = zc.clone();
        for i in 0..m {
            z_tilde[i] += (nu[i] - y[i]) / rho_vec[i];
        }
        // relaxed updates
        let x_next = &x_tilde * alpha + &x * one_minus_alpha;
        let w = &z_tilde * alpha + &zc * one_minus_alpha;
        let mut w_shift = w.clone();
        for i in 0..m {
            w_shift[i] += y[i] / rho_vec[i];
        }
        let zc_next = canon.project(&w_shift);
        let mut y_next = y.clone();
        for i in 0..m {
            y_next[i] += rho_vec[i] * (w[i] - zc_next[i]);
        }

        let delta_x = &x_next - &x;
        let delta_y = &y_next - &y;
        x = x_next;
        zc = zc_next;
        y = y_next;

        // residuals
        let ax = canon.a.matvec(&x);
        r_prim = (&ax - &zc).amax();
        let grad = prog.h.matvec(&x) + &prog.q + canon.a.matvec_transpose(&y);
        r_dual = grad.amax();
        let eps_p = settings.eps_abs
            + settings.eps_rel * ax.amax().max(zc.amax());
        let aty = canon.a.matvec_transpose(&y).amax();
        let eps_d = settings.eps_abs
            + settings.eps_rel * prog.h.matvec(&x).amax().max(prog.q.amax()).max(aty);
        if settings.record_history && (it % 10 == 0 || it + 1 == settings.max_iter) {
            history.push((it, r_prim, r_dual, prog.objective(&x)));
        }
        if r_prim <= eps_p && r_dual <= eps_d {
            status = SolveStatus::Solved;
            iterations = it + 1;
            break;
        }

        // infeasibility certificates every 25 iterations
        if it % 25 == 24 {
            let tol = convert::<T>(INFEAS_TOL);
            let ndy = delta_y.amax();
            if ndy > settings.eps_abs * convert(10.0) {
                let at_dy = canon.a.matvec_transpose(&delta_y).amax();
                if at_dy <= tol * ndy {
                    if let Some(sup) = canon.support(&delta_y, tol * ndy) {
                        if sup < -tol * ndy {
                            status = SolveStatus::PrimalInfeasible;
                            iterations = it + 1;
                            break;
                        }
                    }
                }
            }
            let ndx = delta_x.amax();
            if ndx > settings.eps_abs * convert(10.0) {
                let hdx = prog.h.matvec(&delta_x).amax();
                let qdx = prog.q.dot(&delta_x);
                if hdx <= tol * ndx && qdx < -tol * ndx {
                    let adx = canon.a.matvec(&delta_x);
                    let mut certified = true;
                    for i in 0..canon.me {
                        if adx[i].abs() > tol * ndx {
                            certified = false;
                            break;
                        }
                    }
                    if certified {
                        for i in 0..canon.mi {
                            if adx[canon.me + i] > tol * ndx {
                                certified = false;
                                break;
                            }
                        }
                    }
                    if certified && canon.cones.is_empty() {
                        status = SolveStatus::DualInfeasible;
                        iterations = it + 1;
                        break;
                    }
                }
            }
        }

        // residual balancing
        if settings.adaptive_rho && it % 100 == 99 {
            let scale_p = eps_p.max(T::default_epsilon());
            let scale_d = eps_d.max(T::default_epsilon());
            let ratio = to_f64((r_prim / scale_p) / (r_dual / scale_d).max(T::default_epsilon()));
            if ratio > 10.0 || ratio < 0.1 {
                rho = (rho * convert(ratio.sqrt().clamp(0.2, 5.0)))
                    .max(convert(1e-6))
                    .min(convert(1e6));
                rho_vec = canon.rho_vec(rho);
                kkt = build_kkt(prog, &canon, &rho_vec, &choice)?;
                setup_flops += kkt.setup_flops();
            }
        }
    }

    Ok(SolveResult {
        objective: prog.objective(&x),
        z: x,
        dual: y,
        status,
        iterations,
        primal_residual: r_prim,
        dual_residual: r_dual,
        work: WorkStats {
            setup_flops,
            per_iter_solve_flops: kkt.solve_flops(),
            iterations,
        },
        path,
        history,
    })
}

/// Standard two-block ADMM for QPs; the per-iteration linear system goes to
/// the semi-banded Woodbury path when a structure descriptor is present.
pub fn admm_qp<T: Scalar>(
    prog: &StructuredProgram<T>,
    settings: &SolverSettings<T>,
    warm: Option<&SolveResult<T>>,
) -> Result<SolveResult<T>, SolverError> {
    debug_assert_eq!(prog.kind, ProgramKind::Qp);
    admm_core(prog, settings, warm, LinearChoice::Auto)
}

/// ADMM with mixed box/cone projections for SOCPs.
pub fn admm_socp<T: Scalar>(
    prog: &StructuredProgram<T>,
    settings: &SolverSettings<T>,
    warm: Option<&SolveResult<T>>,
) -> Result<SolveResult<T>, SolverError> {
    debug_assert_eq!(prog.kind, ProgramKind::Socp);
    admm_core(prog, settings, warm, LinearChoice::Auto)
}

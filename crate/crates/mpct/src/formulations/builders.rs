//! Builders translating a system + design into concrete structured programs.
//!
//! Conventions: programs are `min ½zᵀHz + qᵀz + c`; stage variables are
//! interleaved `x_0, u_0, x_1, u_1, …` so that the equality-constrained KKT
//! system is banded, with the artificial-reference blocks at the tail of the
//! decision vector.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::conic::{self, ConicStatus};
use crate::design::TrackingDesign;
use crate::model::{LinearSystem, ModelError, Polytope, Zonotope};
use crate::scalar::{convert, Scalar};
use crate::sparse::SparseMatrix;

use super::program::{
    ProgramKind, SemiBandedStructure, SocConstraint, StructuredProgram, VarLayout,
};

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("reference is not a reachable setpoint (steady-state program infeasible)")]
    UnreachableReference,
    #[error("set is empty")]
    EmptySet,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("periodic formulation requires N ≤ τ (got N = {n}, τ = {tau})")]
    PeriodHorizon { n: usize, tau: usize },
    #[error(transparent)]
    Conic(#[from] conic::ConicError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Incremental assembly of a [`StructuredProgram`].
pub(crate) struct ProgramBuilder<T> {
    pub(crate) layout: VarLayout,
    h: Vec<(usize, usize, T)>,
    q: Vec<T>,
    c: T,
    aeq: Vec<(usize, usize, T)>,
    beq: Vec<T>,
    f: Vec<(usize, usize, T)>,
    g: Vec<T>,
    cones: Vec<SocConstraint<T>>,
}

impl<T: Scalar> ProgramBuilder<T> {
    pub fn new() -> Self {
        Self {
            layout: VarLayout::new(),
            h: Vec::new(),
            q: Vec::new(),
            c: T::zero(),
            aeq: Vec::new(),
            beq: Vec::new(),
            f: Vec::new(),
            g: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub fn var(&mut self, name: impl Into<String>, len: usize) -> Range<usize> {
        let r = self.layout.push(name, len);
        self.q.resize(self.layout.len(), T::zero());
        r
    }

    /// Adds the cost term `x_rᵀ M x_r`.
    pub fn quad(&mut self, r: &Range<usize>, m: &DMatrix<T>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)] + m[(j, i)];
                if v != T::zero() {
                    self.h.push((r.start + i, r.start + j, v));
                }
            }
        }
    }

    /// Adds the cost term `x_aᵀ M x_b` for distinct blocks.
    pub fn cross(&mut self, a: &Range<usize>, b: &Range<usize>, m: &DMatrix<T>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != T::zero() {
                    self.h.push((a.start + i, b.start + j, v));
                    self.h.push((b.start + j, a.start + i, v));
                }
            }
        }
    }

    /// Adds the cost term `vᵀ x_r`.
    pub fn lin(&mut self, r: &Range<usize>, v: &DVector<T>) {
        for i in 0..v.len() {
            self.q[r.start + i] += v[i];
        }
    }

    pub fn constant(&mut self, c: T) {
        self.c += c;
    }

    /// Adds `‖x − t‖²_M` for a constant target `t`.
    pub fn quad_to_target(&mut self, r: &Range<usize>, m: &DMatrix<T>, t: &DVector<T>) {
        self.quad(r, m);
        let sym = (m.clone() + m.transpose()) * convert::<T>(0.5);
        self.lin(r, &((&sym * t) * convert::<T>(-2.0)));
        self.constant(t.dot(&(&sym * t)));
    }

    /// Adds `‖x − Σ_i c_i b_i‖²_M` for variable target blocks `b_i`.
    pub fn tracking_cost(
        &mut self,
        x: &Range<usize>,
        targets: &[(Range<usize>, T)],
        m: &DMatrix<T>,
    ) {
        let sym = (m.clone() + m.transpose()) * convert::<T>(0.5);
        self.quad(x, &sym);
        for (b, ci) in targets {
            self.cross(x, b, &(&sym * (-(*ci) * convert::<T>(2.0))));
        }
        for (i, (bi, ci)) in targets.iter().enumerate() {
            self.quad(bi, &(&sym * (*ci * *ci)));
            for (bj, cj) in targets.iter().skip(i + 1) {
                self.cross(bi, bj, &(&sym * (*ci * *cj * convert::<T>(2.0))));
            }
        }
    }

    /// Adds equality rows `Σ_b M_b x_b = rhs`.
    pub fn eq(&mut self, blocks: &[(Range<usize>, DMatrix<T>)], rhs: &DVector<T>) {
        let row0 = self.beq.len();
        for (r, m) in blocks {
            assert_eq!(m.ncols(), r.len(), "equality block width mismatch");
            assert_eq!(m.nrows(), rhs.len(), "equality block height mismatch");
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if m[(i, j)] != T::zero() {
                        self.aeq.push((row0 + i, r.start + j, m[(i, j)]));
                    }
                }
            }
        }
        self.beq.extend(rhs.iter().copied());
    }

    /// Adds inequality rows `Σ_b M_b x_b ≤ rhs`.
    pub fn ineq(&mut self, blocks: &[(Range<usize>, DMatrix<T>)], rhs: &DVector<T>) {
        let row0 = self.g.len();
        for (r, m) in blocks {
            assert_eq!(m.ncols(), r.len());
            assert_eq!(m.nrows(), rhs.len());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if m[(i, j)] != T::zero() {
                        self.f.push((row0 + i, r.start + j, m[(i, j)]));
                    }
                }
            }
        }
        self.g.extend(rhs.iter().copied());
    }

    /// Imposes polytope membership of `Σ_b M_b x_b` (both parts).
    pub fn polytope(&mut self, p: &Polytope<T>, blocks: &[(Range<usize>, DMatrix<T>)]) {
        if p.num_rows() > 0 {
            let mapped: Vec<(Range<usize>, DMatrix<T>)> = blocks
                .iter()
                .map(|(r, m)| (r.clone(), p.f() * m))
                .collect();
            self.ineq(&mapped, p.g());
        }
        if p.num_eq_rows() > 0 {
            let mapped: Vec<(Range<usize>, DMatrix<T>)> = blocks
                .iter()
                .map(|(r, m)| (r.clone(), p.feq() * m))
                .collect();
            self.eq(&mapped, p.geq());
        }
    }

    pub fn cone(&mut self, cone: SocConstraint<T>) {
        self.cones.push(cone);
    }

    pub fn finish(self, kind: ProgramKind) -> StructuredProgram<T> {
        let n = self.layout.len();
        let me = self.beq.len();
        let mi = self.g.len();
        StructuredProgram {
            kind,
            h: SparseMatrix::from_triplets(n, n, &self.h),
            q: DVector::from_vec(self.q),
            c: self.c,
            a_eq: SparseMatrix::from_triplets(me, n, &self.aeq),
            b_eq: DVector::from_vec(self.beq),
            f: SparseMatrix::from_triplets(mi, n, &self.f),
            g: DVector::from_vec(self.g),
            cones: self.cones,
            structure: None,
            layout: self.layout,
        }
    }
}

fn identity_block<T: Scalar>(n: usize) -> DMatrix<T> {
    DMatrix::identity(n, n)
}

/// Steady state `(x_r, u_r) ∈ Z_s` with output `y_r`, minimum-norm among the
/// admissible ones. Fails with [`FormulationError::UnreachableReference`]
/// when `y_r ∉ Y_s` — the motivating defect of classical MPC.
pub fn steady_state_for_ref<T: Scalar>(
    sys: &LinearSystem<T>,
    z: &Polytope<T>,
    sigma: T,
    yr: &DVector<T>,
) -> Result<(DVector<T>, DVector<T>), FormulationError> {
    let nx = sys.nx();
    let nu = sys.nu();
    let mut pb = ProgramBuilder::new();
    let xu = pb.var("xu", nx + nu);
    pb.quad(&xu, &(identity_block::<T>(nx + nu) * convert::<T>(0.5)));
    // (I - A)x - Bu = 0 and Cx + Du = yr
    let mut ss = DMatrix::zeros(nx + sys.ny(), nx + nu);
    ss.view_mut((0, 0), (nx, nx))
        .copy_from(&(identity_block::<T>(nx) - sys.a()));
    ss.view_mut((0, nx), (nx, nu)).copy_from(&(-sys.b()));
    ss.view_mut((nx, 0), (sys.ny(), nx)).copy_from(sys.c());
    ss.view_mut((nx, nx), (sys.ny(), nu)).copy_from(sys.d());
    let mut rhs = DVector::zeros(nx + sys.ny());
    rhs.rows_mut(nx, sys.ny()).copy_from(yr);
    pb.eq(&[(xu.clone(), ss)], &rhs);
    let scaled = z.scale(sigma);
    pb.polytope(&scaled, &[(xu.clone(), identity_block(nx + nu))]);
    let prog = pb.finish(ProgramKind::Qp);
    let sol = conic::solve_program(&prog, conic::ConicOptions::default())?;
    match sol.status {
        ConicStatus::Solved | ConicStatus::Inaccurate => Ok((
            sol.x.rows(0, nx).clone_owned(),
            sol.x.rows(nx, nu).clone_owned(),
        )),
        ConicStatus::PrimalInfeasible => Err(FormulationError::UnreachableReference),
        other => Err(FormulationError::Dimension(format!(
            "steady-state program ended with {other:?}"
        ))),
    }
}

/// Minimum-norm steady-state target for an output setpoint, ignoring
/// constraints (translates output schedules into `(x_r, u_r)` targets for
/// the terminal-equality and harmonic variants).
pub fn steady_state_target<T: Scalar>(
    sys: &LinearSystem<T>,
    yr: &DVector<T>,
) -> (DVector<T>, DVector<T>) {
    let nx = sys.nx();
    let nu = sys.nu();
    let ny = sys.ny();
    let mut m = DMatrix::zeros(nx + ny, nx + nu);
    m.view_mut((0, 0), (nx, nx))
        .copy_from(&(identity_block::<T>(nx) - sys.a()));
    m.view_mut((0, nx), (nx, nu)).copy_from(&(-sys.b()));
    m.view_mut((nx, 0), (ny, nx)).copy_from(sys.c());
    m.view_mut((nx, nx), (ny, nu)).copy_from(sys.d());
    let mut rhs = DVector::zeros(nx + ny);
    rhs.rows_mut(nx, ny).copy_from(yr);
    let sol = m
        .pseudo_inverse(convert(1e-10))
        .map(|pinv| pinv * rhs)
        .unwrap_or_else(|_| DVector::zeros(nx + nu));
    (sol.rows(0, nx).clone_owned(), sol.rows(nx, nu).clone_owned())
}

/// Shared scaffold: interleaved stage variables plus dynamics rows.
struct StagePrefix {
    xs: Vec<Range<usize>>,
    us: Vec<Range<usize>>,
}

fn stage_prefix<T: Scalar>(
    pb: &mut ProgramBuilder<T>,
    sys: &LinearSystem<T>,
    x_now: Option<&DVector<T>>,
    count_x: usize,
    count_u: usize,
) -> StagePrefix {
    let nx = sys.nx();
    let nu = sys.nu();
    let mut xs = Vec::with_capacity(count_x);
    let mut us = Vec::with_capacity(count_u);
    for k in 0..count_x.max(count_u) {
        if k < count_x {
            xs.push(pb.var(format!("x{k}"), nx));
        }
        if k < count_u {
            us.push(pb.var(format!("u{k}"), nu));
        }
    }
    if let Some(x0) = x_now {
        pb.eq(&[(xs[0].clone(), identity_block(nx))], &x0.clone());
    }
    for k in 0..count_x.saturating_sub(1) {
        pb.eq(
            &[
                (xs[k + 1].clone(), identity_block(nx)),
                (xs[k].clone(), -sys.a()),
                (us[k].clone(), -sys.b()),
            ],
            &DVector::zeros(nx),
        );
    }
    StagePrefix { xs, us }
}

fn xu_blocks<T: Scalar>(
    x: &Range<usize>,
    u: &Range<usize>,
    nx: usize,
    nu: usize,
) -> Vec<(Range<usize>, DMatrix<T>)> {
    let mut mx = DMatrix::zeros(nx + nu, nx);
    mx.view_mut((0, 0), (nx, nx))
        .copy_from(&identity_block::<T>(nx));
    let mut mu = DMatrix::zeros(nx + nu, nu);
    mu.view_mut((nx, 0), (nu, nu))
        .copy_from(&identity_block::<T>(nu));
    vec![(x.clone(), mx), (u.clone(), mu)]
}

fn terminal_triple_blocks<T: Scalar>(
    xn: &Range<usize>,
    xa: &Range<usize>,
    ua: &Range<usize>,
    nx: usize,
    nu: usize,
) -> Vec<(Range<usize>, DMatrix<T>)> {
    let d = 2 * nx + nu;
    let mut ext_x = DMatrix::zeros(d, nx);
    ext_x
        .view_mut((0, 0), (nx, nx))
        .copy_from(&identity_block::<T>(nx));
    let mut ext_a = DMatrix::zeros(d, nx);
    ext_a
        .view_mut((nx, 0), (nx, nx))
        .copy_from(&identity_block::<T>(nx));
    let mut ext_u = DMatrix::zeros(d, nu);
    ext_u
        .view_mut((2 * nx, 0), (nu, nu))
        .copy_from(&identity_block::<T>(nu));
    vec![
        (xn.clone(), ext_x),
        (xa.clone(), ext_a),
        (ua.clone(), ext_u),
    ]
}

/// Classical MPC with a fixed terminal set `X_f` around the reference. The
/// steady-state pair for `y_r` is computed first and fails when the
/// reference is unreachable.
pub fn build_stan_mpc<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    z: &Polytope<T>,
    xf: &Polytope<T>,
    x_now: &DVector<T>,
    yr: &DVector<T>,
) -> Result<StructuredProgram<T>, FormulationError> {
    let (xr, ur) = steady_state_for_ref(sys, z, design.sigma, yr)?;
    let nx = sys.nx();
    let nu = sys.nu();
    let n = design.n;
    let mut pb = ProgramBuilder::new();
    let stages = stage_prefix(&mut pb, sys, Some(x_now), n + 1, n);
    for k in 0..n {
        pb.quad_to_target(&stages.xs[k], &design.q, &xr);
        pb.quad_to_target(&stages.us[k], &design.r, &ur);
        pb.polytope(z, &xu_blocks(&stages.xs[k], &stages.us[k], nx, nu));
    }
    pb.quad_to_target(&stages.xs[n], &design.p, &xr);
    pb.polytope(xf, &[(stages.xs[n].clone(), identity_block(nx))]);
    Ok(pb.finish(ProgramKind::Qp))
}

/// MPC for tracking with an artificial steady-state reference and the
/// invariant set for tracking `X_t` as terminal constraint. The constraint
/// blocks do not depend on `y_r`; the reference enters only the linear cost.
pub fn build_lin_mpct<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    z: &Polytope<T>,
    xt: &Polytope<T>,
    x_now: &DVector<T>,
    yr: &DVector<T>,
) -> Result<StructuredProgram<T>, FormulationError> {
    let nx = sys.nx();
    let nu = sys.nu();
    let n = design.n;
    if xt.dim() != 2 * nx + nu {
        return Err(FormulationError::Dimension(
            "X_t must live in (x, x_a, u_a)".into(),
        ));
    }
    let mut pb = ProgramBuilder::new();
    let stages = stage_prefix(&mut pb, sys, Some(x_now), n + 1, n);
    let xa = pb.var("xa", nx);
    let ua = pb.var("ua", nu);
    for k in 0..n {
        pb.tracking_cost(&stages.xs[k], &[(xa.clone(), T::one())], &design.q);
        pb.tracking_cost(&stages.us[k], &[(ua.clone(), T::one())], &design.r);
        pb.polytope(z, &xu_blocks(&stages.xs[k], &stages.us[k], nx, nu));
    }
    pb.tracking_cost(&stages.xs[n], &[(xa.clone(), T::one())], &design.p);
    add_output_offset(&mut pb, sys, &design.s, &xa, &ua, yr);
    let zs = crate::model::steady_state_manifold(sys, z, design.sigma)?;
    pb.polytope(&zs, &xu_blocks(&xa, &ua, nx, nu));
    pb.polytope(xt, &terminal_triple_blocks(&stages.xs[n], &xa, &ua, nx, nu));
    Ok(pb.finish(ProgramKind::Qp))
}

/// Offset `‖C x_a + D u_a − y_r‖²_S` with `y_a` eliminated by substitution;
/// `y_r` lands in the linear term and the constant only.
fn add_output_offset<T: Scalar>(
    pb: &mut ProgramBuilder<T>,
    sys: &LinearSystem<T>,
    s: &DMatrix<T>,
    xa: &Range<usize>,
    ua: &Range<usize>,
    yr: &DVector<T>,
) {
    let sym = (s.clone() + s.transpose()) * convert::<T>(0.5);
    let cs = sys.c().transpose() * &sym;
    let ds = sys.d().transpose() * &sym;
    pb.quad(xa, &(&cs * sys.c()));
    pb.quad(ua, &(&ds * sys.d()));
    pb.cross(xa, ua, &(&cs * sys.d() * convert::<T>(2.0)));
    pb.lin(xa, &((&cs * yr) * convert::<T>(-2.0)));
    pb.lin(ua, &((&ds * yr) * convert::<T>(-2.0)));
    pb.constant(yr.dot(&(&sym * yr)));
}

/// MPC for tracking with a terminal equality constraint `x_N = x_a` and the
/// quadratic offset `‖x_a − x_r‖²_T + ‖u_a − u_r‖²_{S_u}`.
///
/// `x_N` is eliminated through the final dynamics row, so the decision
/// vector is exactly `(x_0, u_0, …, x_{N-1}, u_{N-1}, x_a, u_a)` and the
/// Hessian carries the semi-banded split recorded in the structure
/// descriptor: `H_B = diag(Q, R, …, NQ, NR)` with the `−Q/−R` coupling
/// columns plus the `T, S_u` block in the rank-`2(nx+nu)` part.
pub fn build_equ_mpct<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    z: &Polytope<T>,
    x_now: &DVector<T>,
    xr: &DVector<T>,
    ur: &DVector<T>,
) -> Result<StructuredProgram<T>, FormulationError> {
    let nx = sys.nx();
    let nu = sys.nu();
    let n = design.n;
    let mut pb = ProgramBuilder::new();
    let stages = stage_prefix(&mut pb, sys, Some(x_now), n, n);
    let xa = pb.var("xa", nx);
    let ua = pb.var("ua", nu);
    // final dynamics row doubles as the terminal equality: A x_{N-1} + B u_{N-1} = x_a
    pb.eq(
        &[
            (xa.clone(), identity_block(nx)),
            (stages.xs[n - 1].clone(), -sys.a()),
            (stages.us[n - 1].clone(), -sys.b()),
        ],
        &DVector::zeros(nx),
    );
    for k in 0..n {
        pb.tracking_cost(&stages.xs[k], &[(xa.clone(), T::one())], &design.q);
        pb.tracking_cost(&stages.us[k], &[(ua.clone(), T::one())], &design.r);
        pb.polytope(z, &xu_blocks(&stages.xs[k], &stages.us[k], nx, nu));
    }
    pb.quad_to_target(&xa, &design.t_offset, xr);
    pb.quad_to_target(&ua, &design.su_offset, ur);
    let zs = crate::model::steady_state_manifold(sys, z, design.sigma)?;
    pb.polytope(&zs, &xu_blocks(&xa, &ua, nx, nu));

    let mut prog = pb.finish(ProgramKind::Qp);
    prog.structure = Some(equ_mpct_structure(sys, design, prog.num_vars()));
    Ok(prog)
}

fn equ_mpct_structure<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    dim: usize,
) -> SemiBandedStructure<T> {
    let nx = sys.nx();
    let nu = sys.nu();
    let n = design.n;
    let m = nx + nu;
    let q2 = design.q.clone() + design.q.transpose();
    let r2 = design.r.clone() + design.r.transpose();
    let t2 = design.t_offset.clone() + design.t_offset.transpose();
    let s2 = design.su_offset.clone() + design.su_offset.transpose();

    let mut hb = Vec::new();
    for k in 0..n {
        let x0 = k * m;
        let u0 = k * m + nx;
        for i in 0..nx {
            for j in 0..nx {
                if q2[(i, j)] != T::zero() {
                    hb.push((x0 + i, x0 + j, q2[(i, j)]));
                }
            }
        }
        for i in 0..nu {
            for j in 0..nu {
                if r2[(i, j)] != T::zero() {
                    hb.push((u0 + i, u0 + j, r2[(i, j)]));
                }
            }
        }
    }
    let tail0 = n * m;
    let nt = convert::<T>(n as f64);
    for i in 0..nx {
        for j in 0..nx {
            let v = q2[(i, j)] * nt;
            if v != T::zero() {
                hb.push((tail0 + i, tail0 + j, v));
            }
        }
    }
    for i in 0..nu {
        for j in 0..nu {
            let v = r2[(i, j)] * nt;
            if v != T::zero() {
                hb.push((tail0 + nx + i, tail0 + nx + j, v));
            }
        }
    }
    let h_banded = SparseMatrix::from_triplets(dim, dim, &hb);

    // U = [C | E], V = [E | C + E D]: U Vᵀ = CEᵀ + ECᵀ + EDEᵀ.
    let mut c_mat = DMatrix::<T>::zeros(dim, m);
    for k in 0..n {
        let x0 = k * m;
        let u0 = k * m + nx;
        for i in 0..nx {
            for j in 0..nx {
                c_mat[(x0 + i, j)] = -q2[(i, j)];
            }
        }
        for i in 0..nu {
            for j in 0..nu {
                c_mat[(u0 + i, nx + j)] = -r2[(i, j)];
            }
        }
    }
    let mut e_mat = DMatrix::<T>::zeros(dim, m);
    for i in 0..m {
        e_mat[(tail0 + i, i)] = T::one();
    }
    let mut d_blk = DMatrix::<T>::zeros(m, m);
    d_blk.view_mut((0, 0), (nx, nx)).copy_from(&t2);
    d_blk.view_mut((nx, nx), (nu, nu)).copy_from(&s2);

    let mut u = DMatrix::<T>::zeros(dim, 2 * m);
    u.view_mut((0, 0), (dim, m)).copy_from(&c_mat);
    u.view_mut((0, m), (dim, m)).copy_from(&e_mat);
    let mut v = DMatrix::<T>::zeros(dim, 2 * m);
    v.view_mut((0, 0), (dim, m)).copy_from(&e_mat);
    v.view_mut((0, m), (dim, m))
        .copy_from(&(&c_mat + &e_mat * d_blk));

    let stages = (0..n).map(|k| k * m..(k + 1) * m).collect();
    SemiBandedStructure {
        h_banded,
        u,
        v,
        tail: tail0..tail0 + m,
        stages,
    }
}

/// Tube-based robust MPC for tracking on tightened constraints. The initial
/// nominal state is a decision variable with `x(t) − x_0 ∈ φ_K` encoded by
/// auxiliary box-bounded generator coefficients; the associated control law
/// is `u(t) = K(x(t) − x_0*) + u_0*`.
pub fn build_robust_mpct<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    phi: &Zonotope<T>,
    z_tight: &Polytope<T>,
    xt_tight: &Polytope<T>,
    x_now: &DVector<T>,
    yr: &DVector<T>,
) -> Result<StructuredProgram<T>, FormulationError> {
    let nx = sys.nx();
    let nu = sys.nu();
    let n = design.n;
    let mut pb = ProgramBuilder::new();
    let stages = stage_prefix(&mut pb, sys, None, n + 1, n);
    let xa = pb.var("xa", nx);
    let ua = pb.var("ua", nu);
    let ngen = phi.num_generators();
    let lam = pb.var("lam", ngen);
    // x(t) − x_0 ∈ φ_K: x_0 + G λ = x(t) − c_φ, |λ| ≤ 1
    if ngen > 0 {
        pb.eq(
            &[
                (stages.xs[0].clone(), identity_block(nx)),
                (lam.clone(), phi.generator_matrix()),
            ],
            &(x_now - phi.center()),
        );
        let mut box_rows = DMatrix::zeros(2 * ngen, ngen);
        for i in 0..ngen {
            box_rows[(2 * i, i)] = T::one();
            box_rows[(2 * i + 1, i)] = -T::one();
        }
        pb.ineq(
            &[(lam.clone(), box_rows)],
            &DVector::from_element(2 * ngen, T::one()),
        );
    } else {
        pb.eq(
            &[(stages.xs[0].clone(), identity_block(nx))],
            &(x_now - phi.center()),
        );
    }
    for k in 0..n {
        pb.tracking_cost(&stages.xs[k], &[(xa.clone(), T::one())], &design.q);
        pb.tracking_cost(&stages.us[k], &[(ua.clone(), T::one())], &design.r);
        pb.polytope(z_tight, &xu_blocks(&stages.xs[k], &stages.us[k], nx, nu));
    }
    pb.tracking_cost(&stages.xs[n], &[(xa.clone(), T::one())], &design.p);
    add_output_offset(&mut pb, sys, &design.s, &xa, &ua, yr);
    let zs = crate::model::steady_state_manifold(sys, z_tight, design.sigma)?;
    pb.polytope(&zs, &xu_blocks(&xa, &ua, nx, nu));
    pb.polytope(
        xt_tight,
        &terminal_triple_blocks(&stages.xs[n], &xa, &ua, nx, nu),
    );
    Ok(pb.finish(ProgramKind::Qp))
}

/// Periodic MPC for tracking: a τ-periodic artificial trajectory with the
/// terminal equality `x_N = x_{a,N}`. Requires `N ≤ τ`; periodicity holds by
/// index wrap-around (`x_{a,τ} ≡ x_{a,0}`).
pub fn build_periodic_mpct<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    z: &Polytope<T>,
    tau: usize,
    x_now: &DVector<T>,
    yr_window: &[DVector<T>],
) -> Result<StructuredProgram<T>, FormulationError> {
    let nx = sys.nx();
    let nu = sys.nu();
    let n = design.n;
    if tau == 0 || yr_window.len() != tau {
        return Err(FormulationError::Dimension(format!(
            "reference window must carry τ = {tau} samples, got {}",
            yr_window.len()
        )));
    }
    if n > tau {
        return Err(FormulationError::PeriodHorizon { n, tau });
    }
    let mut pb = ProgramBuilder::new();
    let stages = stage_prefix(&mut pb, sys, Some(x_now), n, n);
    let mut xas = Vec::with_capacity(tau);
    let mut uas = Vec::with_capacity(tau);
    for k in 0..tau {
        xas.push(pb.var(format!("xa{k}"), nx));
        uas.push(pb.var(format!("ua{k}"), nu));
    }
    // terminal equality through the final dynamics row: A x_{N-1} + B u_{N-1} = x_{a,N}
    let xan = xas[n % tau].clone();
    pb.eq(
        &[
            (xan, identity_block(nx)),
            (stages.xs[n - 1].clone(), -sys.a()),
            (stages.us[n - 1].clone(), -sys.b()),
        ],
        &DVector::zeros(nx),
    );
    for k in 0..tau {
        let next = xas[(k + 1) % tau].clone();
        pb.eq(
            &[
                (next, identity_block(nx)),
                (xas[k].clone(), -sys.a()),
                (uas[k].clone(), -sys.b()),
            ],
            &DVector::zeros(nx),
        );
    }
    let sz = z.scale(design.sigma);
    for k in 0..tau {
        pb.polytope(&sz, &xu_blocks(&xas[k], &uas[k], nx, nu));
    }
    for k in 0..n {
        pb.tracking_cost(&stages.xs[k], &[(xas[k].clone(), T::one())], &design.q);
        pb.tracking_cost(&stages.us[k], &[(uas[k].clone(), T::one())], &design.r);
        pb.polytope(z, &xu_blocks(&stages.xs[k], &stages.us[k], nx, nu));
    }
    for k in 0..tau {
        add_output_offset(&mut pb, sys, &design.s, &xas[k], &uas[k], &yr_window[k]);
    }
    Ok(pb.finish(ProgramKind::Qp))
}

/// Harmonic MPC: the artificial reference is the harmonic signal
/// `x_{h,k} = x_e + x_s sin(ωk) + x_c cos(ωk)` (likewise for the input);
/// admissibility of the whole harmonic is enforced through second-order
/// cone constraints, making the program an SOCP.
pub fn build_hmpc<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    y_low: &DVector<T>,
    y_high: &DVector<T>,
    x_now: &DVector<T>,
    xr: &DVector<T>,
    ur: &DVector<T>,
) -> Result<StructuredProgram<T>, FormulationError> {
    let nx = sys.nx();
    let nu = sys.nu();
    let ny = sys.ny();
    let n = design.n;
    let omega = design.omega;
    if y_low.iter().any(|v| *v >= T::zero()) || y_high.iter().any(|v| *v <= T::zero()) {
        return Err(FormulationError::Dimension(
            "output bounds must satisfy y_low < 0 < y_high".into(),
        ));
    }
    let mut pb = ProgramBuilder::new();
    let stages = stage_prefix(&mut pb, sys, Some(x_now), n, n);
    let xe = pb.var("xe", nx);
    let xs = pb.var("xs", nx);
    let xc = pb.var("xc", nx);
    let ue = pb.var("ue", nu);
    let us = pb.var("us", nu);
    let uc = pb.var("uc", nu);

    let (sw, cw) = (omega.sin(), omega.cos());
    let wn = omega * convert::<T>(n as f64);
    // terminal: A x_{N-1} + B u_{N-1} = x_e + sin(ωN) x_s + cos(ωN) x_c
    pb.eq(
        &[
            (xe.clone(), identity_block(nx)),
            (xs.clone(), identity_block::<T>(nx) * wn.sin()),
            (xc.clone(), identity_block::<T>(nx) * wn.cos()),
            (stages.xs[n - 1].clone(), -sys.a()),
            (stages.us[n - 1].clone(), -sys.b()),
        ],
        &DVector::zeros(nx),
    );
    // harmonic dynamics consistency
    pb.eq(
        &[
            (xe.clone(), sys.a() - identity_block::<T>(nx)),
            (ue.clone(), sys.b().clone()),
        ],
        &DVector::zeros(nx),
    );
    pb.eq(
        &[
            (xs.clone(), sys.a() - identity_block::<T>(nx) * cw),
            (xc.clone(), identity_block::<T>(nx) * sw),
            (us.clone(), sys.b().clone()),
        ],
        &DVector::zeros(nx),
    );
    pb.eq(
        &[
            (xs.clone(), -(identity_block::<T>(nx) * sw)),
            (xc.clone(), sys.a() - identity_block::<T>(nx) * cw),
            (uc.clone(), sys.b().clone()),
        ],
        &DVector::zeros(nx),
    );
    // stage output bounds y_low ≤ C x + D u ≤ y_high
    for k in 0..n {
        pb.ineq(
            &[
                (stages.xs[k].clone(), sys.c().clone()),
                (stages.us[k].clone(), sys.d().clone()),
            ],
            y_high,
        );
        pb.ineq(
            &[
                (stages.xs[k].clone(), -sys.c()),
                (stages.us[k].clone(), -sys.d()),
            ],
            &(-y_low),
        );
    }
    // harmonic stage cost
    for k in 0..n {
        let wk = omega * convert::<T>(k as f64);
        let (sk, ck) = (wk.sin(), wk.cos());
        pb.tracking_cost(
            &stages.xs[k],
            &[(xe.clone(), T::one()), (xs.clone(), sk), (xc.clone(), ck)],
            &design.q,
        );
        pb.tracking_cost(
            &stages.us[k],
            &[(ue.clone(), T::one()), (us.clone(), sk), (uc.clone(), ck)],
            &design.r,
        );
    }
    // offset V_h
    pb.quad_to_target(&xe, &design.t_offset, xr);
    pb.quad_to_target(&ue, &design.su_offset, ur);
    pb.quad(&xs, &design.t_h);
    pb.quad(&xc, &design.t_h);
    pb.quad(&us, &design.s_h);
    pb.quad(&uc, &design.s_h);

    // cones per output: ‖(y_s(i), y_c(i))‖ ≤ σ ȳ_i − y_e(i), plus the lower twin
    let sigma = design.sigma;
    let dim = pb.layout.len();
    for i in 0..ny {
        let crow = sys.c().row(i).clone_owned();
        let drow = sys.d().row(i).clone_owned();
        let mut s_trips = Vec::new();
        for j in 0..nx {
            if crow[j] != T::zero() {
                s_trips.push((0usize, xs.start + j, crow[j]));
                s_trips.push((1usize, xc.start + j, crow[j]));
            }
        }
        for j in 0..nu {
            if drow[j] != T::zero() {
                s_trips.push((0usize, us.start + j, drow[j]));
                s_trips.push((1usize, uc.start + j, drow[j]));
            }
        }
        let s_map = SparseMatrix::from_triplets(2, dim, &s_trips);
        let mut t_up = Vec::new();
        let mut t_lo = Vec::new();
        for j in 0..nx {
            if crow[j] != T::zero() {
                t_up.push((0usize, xe.start + j, -crow[j]));
                t_lo.push((0usize, xe.start + j, crow[j]));
            }
        }
        for j in 0..nu {
            if drow[j] != T::zero() {
                t_up.push((0usize, ue.start + j, -drow[j]));
                t_lo.push((0usize, ue.start + j, drow[j]));
            }
        }
        pb.cone(SocConstraint {
            s_map: s_map.clone(),
            s_offset: DVector::zeros(2),
            t_map: SparseMatrix::from_triplets(1, dim, &t_up),
            t_offset: sigma * y_high[i],
        });
        pb.cone(SocConstraint {
            s_map,
            s_offset: DVector::zeros(2),
            t_map: SparseMatrix::from_triplets(1, dim, &t_lo),
            t_offset: -(sigma * y_low[i]),
        });
    }
    Ok(pb.finish(ProgramKind::Socp))
}

/// Convex quadratic economic stage cost `½ vᵀ H v + (C_θ θ + c_0)ᵀ v` over
/// `v = (x, u)`.
#[derive(Debug, Clone)]
pub struct EconomicCost<T> {
    pub hessian: DMatrix<T>,
    pub theta_map: DMatrix<T>,
    pub linear: DVector<T>,
}

impl<T: Scalar> EconomicCost<T> {
    pub fn linear_term(&self, theta: &DVector<T>) -> DVector<T> {
        &self.theta_map * theta + &self.linear
    }

    pub fn value(&self, x: &DVector<T>, u: &DVector<T>, theta: &DVector<T>) -> T {
        let mut v = DVector::zeros(x.len() + u.len());
        v.rows_mut(0, x.len()).copy_from(x);
        v.rows_mut(x.len(), u.len()).copy_from(u);
        convert::<T>(0.5) * v.dot(&(&self.hessian * &v)) + self.linear_term(theta).dot(&v)
    }
}

/// Economic MPC for tracking: constraints coincide with the
/// terminal-equality variant; the offset
/// `γ‖x_a − x*‖ + ‖x_a − x*‖²_T + ‖u_a − u*‖²_{S_u}` uses one epigraph
/// variable and one second-order cone, making the program an SOCP.
pub fn build_econ_mpct<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    z: &Polytope<T>,
    econ: &EconomicCost<T>,
    theta: &DVector<T>,
    setpoint: (&DVector<T>, &DVector<T>),
    x_now: &DVector<T>,
) -> Result<StructuredProgram<T>, FormulationError> {
    let nx = sys.nx();
    let nu = sys.nu();
    let n = design.n;
    let (x_star, u_star) = setpoint;
    let mut pb = ProgramBuilder::new();
    let stages = stage_prefix(&mut pb, sys, Some(x_now), n, n);
    let xa = pb.var("xa", nx);
    let ua = pb.var("ua", nu);
    let epi = pb.var("soc_t", 1);
    pb.eq(
        &[
            (xa.clone(), identity_block(nx)),
            (stages.xs[n - 1].clone(), -sys.a()),
            (stages.us[n - 1].clone(), -sys.b()),
        ],
        &DVector::zeros(nx),
    );
    // economic stage cost on v_k = (x_k − x_a + x*, u_k − u_a + u*)
    let he = (econ.hessian.clone() + econ.hessian.transpose()) * convert::<T>(0.5);
    let mut v_star = DVector::zeros(nx + nu);
    v_star.rows_mut(0, nx).copy_from(x_star);
    v_star.rows_mut(nx, nu).copy_from(u_star);
    let c_theta = econ.linear_term(theta);
    let lin_w = &he * &v_star + &c_theta;
    let const_k = convert::<T>(0.5) * v_star.dot(&(&he * &v_star)) + c_theta.dot(&v_star);
    let hxx = he.view((0, 0), (nx, nx)).clone_owned();
    let hxu = he.view((0, nx), (nx, nu)).clone_owned();
    let huu = he.view((nx, nx), (nu, nu)).clone_owned();
    let half = convert::<T>(0.5);
    for k in 0..n {
        let xk = &stages.xs[k];
        let uk = &stages.us[k];
        pb.quad(xk, &(&hxx * half));
        pb.quad(uk, &(&huu * half));
        pb.quad(&xa, &(&hxx * half));
        pb.quad(&ua, &(&huu * half));
        pb.cross(xk, uk, &hxu);
        pb.cross(&xa, &ua, &hxu);
        pb.cross(xk, &xa, &(-&hxx));
        pb.cross(uk, &ua, &(-&huu));
        pb.cross(xk, &ua, &(-&hxu));
        pb.cross(&xa, uk, &(-hxu.transpose()));
        pb.lin(xk, &lin_w.rows(0, nx).clone_owned());
        pb.lin(uk, &lin_w.rows(nx, nu).clone_owned());
        pb.lin(&xa, &(-lin_w.rows(0, nx).clone_owned()));
        pb.lin(&ua, &(-lin_w.rows(nx, nu).clone_owned()));
        pb.constant(const_k);
        pb.polytope(z, &xu_blocks(xk, uk, nx, nu));
    }
    // offset: γ t + ‖x_a − x*‖²_T + ‖u_a − u*‖²_{S_u}, with ‖x_a − x*‖ ≤ t
    pb.lin(&epi, &DVector::from_element(1, design.gamma));
    pb.quad_to_target(&xa, &design.t_offset, x_star);
    pb.quad_to_target(&ua, &design.su_offset, u_star);
    let zs = crate::model::steady_state_manifold(sys, z, design.sigma)?;
    pb.polytope(&zs, &xu_blocks(&xa, &ua, nx, nu));
    let dim = pb.layout.len();
    let mut s_trips = Vec::new();
    for j in 0..nx {
        s_trips.push((j, xa.start + j, T::one()));
    }
    pb.cone(SocConstraint {
        s_map: SparseMatrix::from_triplets(nx, dim, &s_trips),
        s_offset: -x_star.clone(),
        t_map: SparseMatrix::from_triplets(1, dim, &[(0, epi.start, T::one())]),
        t_offset: T::zero(),
    });
    Ok(pb.finish(ProgramKind::Socp))
}

/// Same constraints, zero objective: used by domain-of-attraction scans.
pub fn feasibility_only<T: Scalar>(prog: &StructuredProgram<T>) -> StructuredProgram<T> {
    let n = prog.num_vars();
    StructuredProgram {
        kind: prog.kind,
        h: SparseMatrix::zeros(n, n),
        q: DVector::zeros(n),
        c: T::zero(),
        a_eq: prog.a_eq.clone(),
        b_eq: prog.b_eq.clone(),
        f: prog.f.clone(),
        g: prog.g.clone(),
        cones: prog.cones.clone(),
        structure: None,
        layout: prog.layout.clone(),
    }
}

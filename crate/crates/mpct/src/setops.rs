//! Invariant-set machinery: maximal admissible invariant sets, the invariant
//! set for tracking, robust positive invariant outer approximations and
//! Pontryagin-difference constraint tightening.

use nalgebra::{ComplexField, DMatrix, DVector};
use thiserror::Error;

use crate::model::{LinearSystem, ModelError, Polytope, Zonotope};
use crate::scalar::{convert, to_f64, Scalar};

#[derive(Debug, Error)]
pub enum SetOpsError<T: Scalar + 'static> {
    #[error("closed-loop matrix is not Schur stable (spectral radius {0})")]
    NotSchur(f64),
    #[error("invariant-set recursion hit the iteration cap without reaching a fixpoint")]
    NotConverged(Box<InvariantSetReport<T>>),
    #[error("no contraction step s ≤ {cap} with A^s W ⊆ αW, α ≤ {eps}")]
    NoContainment { cap: usize, eps: f64 },
    #[error("tightened set is empty: tube exceeds the constraints on row {row}")]
    EmptyTightened { row: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Result of a maximal-invariant-set recursion.
#[derive(Debug, Clone)]
pub struct InvariantSetReport<T> {
    pub set: Polytope<T>,
    pub iterations: usize,
    pub converged: bool,
    pub removed_redundant: usize,
}

/// Outer approximation of the minimal robust positive invariant set,
/// `φ_K = (1-α)⁻¹ ⊕_{i<s} A_K^i W`.
#[derive(Debug, Clone)]
pub struct RpiApproximation<T> {
    pub set: Zonotope<T>,
    pub s: usize,
    pub alpha: T,
    pub scaling: T,
}

pub(crate) fn spectral_radius<T: Scalar>(m: &DMatrix<T>) -> T {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.modulus())
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// Maximal invariant set of `z⁺ = A_cl z` within `G`: the fixpoint of
/// `Ω_{k+1} = Ω_k ∩ {z : A_cl z ∈ Ω_k}` starting at `Ω_0 = G`, with
/// LP-based redundancy removal after every step.
pub fn max_invariant_set<T: Scalar>(
    a_cl: &DMatrix<T>,
    g: &Polytope<T>,
    max_iter: usize,
) -> Result<InvariantSetReport<T>, SetOpsError<T>> {
    assert_eq!(a_cl.nrows(), a_cl.ncols(), "A_cl must be square");
    assert_eq!(a_cl.nrows(), g.dim(), "dimension mismatch");
    let tol = convert::<T>(1e-8);

    let mut current = g.clone();
    let mut removed_total = 0usize;
    // rows whose pre-image still has to be propagated
    let mut frontier = g.clone();
    for it in 0..max_iter {
        let pre = frontier.preimage(a_cl);
        // equality rows: keep only genuinely new ones
        let new_eq = dedup_equalities(&current, &pre);
        if let Some((feq, geq)) = &new_eq {
            current = current.intersect(&Polytope::with_equalities(
                DMatrix::zeros(0, current.dim()),
                DVector::zeros(0),
                Some((feq.clone(), geq.clone())),
            )?);
        }
        // inequality rows: add those not redundant for the current iterate
        let mut added_rows = Vec::new();
        let mut added_rhs = Vec::new();
        for i in 0..pre.num_rows() {
            let dir = pre.f().row(i).transpose();
            let h = current.support(&dir)?;
            if h > pre.g()[i] + tol {
                added_rows.push(pre.f().row(i).clone_owned());
                added_rhs.push(pre.g()[i]);
            } else {
                removed_total += 1;
            }
        }
        if added_rows.is_empty() && new_eq.is_none() {
            let (set, removed) = current.remove_redundant(tol)?;
            return Ok(InvariantSetReport {
                set,
                iterations: it + 1,
                converged: true,
                removed_redundant: removed_total + removed,
            });
        }
        let addition = Polytope::new(
            DMatrix::from_rows(&added_rows),
            DVector::from_vec(added_rhs.clone()),
        )?;
        current = current.intersect(&addition);
        frontier = addition;
    }
    Err(SetOpsError::NotConverged(Box::new(InvariantSetReport {
        set: current,
        iterations: max_iter,
        converged: false,
        removed_redundant: removed_total,
    })))
}

/// New equality rows of `pre` not already implied by `current` (row-wise
/// comparison after normalization).
fn dedup_equalities<T: Scalar>(
    current: &Polytope<T>,
    pre: &Polytope<T>,
) -> Option<(DMatrix<T>, DVector<T>)> {
    if pre.num_eq_rows() == 0 {
        return None;
    }
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..pre.num_eq_rows() {
        let row = pre.feq().row(i).clone_owned();
        let norm = row.transpose().norm();
        if to_f64(norm) <= 1e-12 {
            continue;
        }
        let rn = row.clone() / norm;
        let gn = pre.geq()[i] / norm;
        let mut duplicate = false;
        for j in 0..current.num_eq_rows() {
            let other = current.feq().row(j).clone_owned();
            let onorm = other.transpose().norm();
            if to_f64(onorm) <= 1e-12 {
                continue;
            }
            let on = other / onorm;
            let og = current.geq()[j] / onorm;
            let same = (rn.clone() - on.clone()).norm() < convert(1e-10)
                && (gn - og).abs() < convert(1e-10);
            let flipped =
                (rn.clone() + on).norm() < convert(1e-10) && (gn + og).abs() < convert(1e-10);
            if same || flipped {
                duplicate = true;
                break;
            }
        }
        if !duplicate {
            rows.push(row);
            rhs.push(pre.geq()[i]);
        }
    }
    if rows.is_empty() {
        None
    } else {
        Some((DMatrix::from_rows(&rows), DVector::from_vec(rhs)))
    }
}

/// Invariant set for tracking: maximal invariant set of the system extended
/// with a constant artificial reference `(x, x_a, u_a)` under the terminal
/// feedback `u = K(x - x_a) + u_a`, subject to
/// `(x, u) ∈ Z` and `(x_a, u_a) ∈ σZ ∩ {steady states}`.
pub fn invariant_set_for_tracking<T: Scalar>(
    sys: &LinearSystem<T>,
    k_gain: &DMatrix<T>,
    z: &Polytope<T>,
    sigma: T,
    max_iter: usize,
) -> Result<InvariantSetReport<T>, SetOpsError<T>> {
    let nx = sys.nx();
    let nu = sys.nu();
    assert_eq!(k_gain.nrows(), nu);
    assert_eq!(k_gain.ncols(), nx);
    assert_eq!(z.dim(), nx + nu);
    let a_k = sys.a() + sys.b() * k_gain;
    let rho = spectral_radius(&a_k);
    if rho >= T::one() {
        return Err(SetOpsError::NotSchur(to_f64(rho)));
    }

    let d = 2 * nx + nu;
    // extended closed loop: x⁺ = (A+BK)x - BK x_a + B u_a ; (x_a, u_a)⁺ = (x_a, u_a)
    let mut a_ext = DMatrix::zeros(d, d);
    a_ext.view_mut((0, 0), (nx, nx)).copy_from(&a_k);
    a_ext
        .view_mut((0, nx), (nx, nx))
        .copy_from(&(-(sys.b() * k_gain)));
    a_ext.view_mut((0, 2 * nx), (nx, nu)).copy_from(sys.b());
    a_ext
        .view_mut((nx, nx), (nx + nu, nx + nu))
        .copy_from(&DMatrix::identity(nx + nu, nx + nu));

    // (x, K(x - x_a) + u_a) ∈ Z rows
    let mut map_xu = DMatrix::zeros(nx + nu, d);
    map_xu
        .view_mut((0, 0), (nx, nx))
        .copy_from(&DMatrix::identity(nx, nx));
    map_xu.view_mut((nx, 0), (nu, nx)).copy_from(k_gain);
    map_xu.view_mut((nx, nx), (nu, nx)).copy_from(&(-k_gain));
    map_xu
        .view_mut((nx, 2 * nx), (nu, nu))
        .copy_from(&DMatrix::identity(nu, nu));
    let stage = z.preimage(&map_xu);

    // (x_a, u_a) ∈ σZ ∩ steady-state subspace
    let mut map_a = DMatrix::zeros(nx + nu, d);
    map_a
        .view_mut((0, nx), (nx + nu, nx + nu))
        .copy_from(&DMatrix::identity(nx + nu, nx + nu));
    let zs = crate::model::steady_state_manifold(sys, z, sigma)?;
    let tail = zs.preimage(&map_a);

    let g_ext = stage.intersect(&tail);
    max_invariant_set(&a_ext, &g_ext, max_iter)
}

/// Classical terminal set: maximal invariant set of `x⁺ = (A+BK)x` shifted
/// to a steady-state target, admissible for `(x, K(x − x_r) + u_r) ∈ Z`.
/// Computed in error coordinates and translated back.
pub fn terminal_set_for_target<T: Scalar>(
    sys: &LinearSystem<T>,
    k_gain: &DMatrix<T>,
    z: &Polytope<T>,
    xr: &DVector<T>,
    ur: &DVector<T>,
    max_iter: usize,
) -> Result<InvariantSetReport<T>, SetOpsError<T>> {
    let nx = sys.nx();
    let nu = sys.nu();
    let a_k = sys.a() + sys.b() * k_gain;
    let rho = spectral_radius(&a_k);
    if rho >= T::one() {
        return Err(SetOpsError::NotSchur(to_f64(rho)));
    }
    // (x_r + e, K e + u_r) ∈ Z as a set over the error e
    let mut map = DMatrix::zeros(nx + nu, nx);
    map.view_mut((0, 0), (nx, nx))
        .copy_from(&DMatrix::identity(nx, nx));
    map.view_mut((nx, 0), (nu, nx)).copy_from(k_gain);
    let mut offset = DVector::zeros(nx + nu);
    offset.rows_mut(0, nx).copy_from(xr);
    offset.rows_mut(nx, nu).copy_from(ur);
    let g_err = z.affine_preimage(&map, &offset);
    let mut report = max_invariant_set(&a_k, &g_err, max_iter)?;
    report.set = report.set.translate(xr);
    Ok(report)
}

/// Smallest `s` with `A_K^s W ⊆ α W`, `α ≤ eps_alpha`, and the resulting
/// scaled Minkowski sum `φ_K = (1-α)⁻¹ ⊕_{i<s} A_K^i W`.
///
/// Containment of the centered zonotopes is certified by generator
/// decomposition: `A^s G_W = G_W Γ` with `α = max_i Σ_j |Γ_ij|`, closed-form
/// when the generator matrix has full row rank.
pub fn rpi_outer_approx<T: Scalar>(
    a_k: &DMatrix<T>,
    w: &Zonotope<T>,
    eps_alpha: T,
    cap: usize,
) -> Result<RpiApproximation<T>, SetOpsError<T>> {
    let rho = spectral_radius(a_k);
    if rho >= T::one() {
        return Err(SetOpsError::NotSchur(to_f64(rho)));
    }
    assert!(
        to_f64(w.center().amax()) == 0.0,
        "disturbance set must be centered at the origin"
    );
    if w.num_generators() == 0 {
        return Ok(RpiApproximation {
            set: Zonotope::origin(w.dim()),
            s: 1,
            alpha: T::zero(),
            scaling: T::one(),
        });
    }
    let g_w = w.generator_matrix();
    let pinv = g_w
        .clone()
        .pseudo_inverse(convert(1e-12))
        .map_err(|e| SetOpsError::Model(ModelError::Dimension(e.to_string())))?;
    let mut power = a_k.clone();
    for s in 1..=cap {
        // Γ = G_W⁺ (A^s G_W); valid certificate only if the product reproduces
        // the mapped generators (always true for full-row-rank G_W).
        let mapped = &power * &g_w;
        let gamma = &pinv * &mapped;
        let exact = (&g_w * &gamma - &mapped).amax();
        if to_f64(exact) < 1e-10 {
            let mut alpha = T::zero();
            for i in 0..gamma.nrows() {
                let mut row_l1 = T::zero();
                for j in 0..gamma.ncols() {
                    row_l1 += gamma[(i, j)].abs();
                }
                if row_l1 > alpha {
                    alpha = row_l1;
                }
            }
            if alpha <= eps_alpha {
                let scaling = T::one() / (T::one() - alpha);
                let mut phi = w.clone();
                let mut a_pow = a_k.clone();
                for _ in 1..s {
                    phi = phi.minkowski_sum(&w.linear_map(&a_pow));
                    a_pow = &a_pow * a_k;
                }
                return Ok(RpiApproximation {
                    set: phi.scale(scaling),
                    s,
                    alpha,
                    scaling,
                });
            }
        }
        power = &power * a_k;
    }
    Err(SetOpsError::NoContainment {
        cap,
        eps: to_f64(eps_alpha),
    })
}

/// Pontryagin difference `Z ⊖ (φ × Kφ)` via per-row support evaluation:
/// each inequality row `f_z ≤ g` becomes `f_z ≤ g − h_{φ×Kφ}(f)`.
pub fn tighten<T: Scalar>(
    z: &Polytope<T>,
    phi: &Zonotope<T>,
    k_gain: &DMatrix<T>,
) -> Result<Polytope<T>, SetOpsError<T>> {
    let nx = phi.dim();
    let nu = k_gain.nrows();
    assert_eq!(z.dim(), nx + nu, "Z must live in (x, u)");
    assert_eq!(k_gain.ncols(), nx);
    let mut g = z.g().clone();
    for i in 0..z.num_rows() {
        let fx = DVector::from_fn(nx, |j, _| z.f()[(i, j)]);
        let fu = DVector::from_fn(nu, |j, _| z.f()[(i, nx + j)]);
        // support of {(e, Ke)} in direction (fx, fu) is h_φ(fx + Kᵀ fu)
        let dir = fx + k_gain.transpose() * fu;
        let h = phi.support(&dir);
        g[i] -= h;
        if g[i] < -T::default_epsilon() && is_strictly_infeasible_row(z, i, g[i]) {
            return Err(SetOpsError::EmptyTightened { row: i });
        }
    }
    Ok(Polytope::with_equalities(
        z.f().clone(),
        g,
        (z.num_eq_rows() > 0).then(|| (z.feq().clone(), z.geq().clone())),
    )
    .map_err(SetOpsError::Model)?)
}

/// A tightened row is fatal when it excludes the origin of a set that
/// previously contained it (the tube outgrew the constraint).
fn is_strictly_infeasible_row<T: Scalar>(z: &Polytope<T>, row: usize, new_g: T) -> bool {
    let _ = (z, row);
    new_g < T::zero()
}

//! Controller synthesis ingredients: Riccati/LQR gains, Lyapunov terminal
//! costs, and validation of the tracking-design conditions.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::model::{LinearSystem, Polytope};
use crate::scalar::{convert, to_f64, Scalar};
use crate::setops::{spectral_radius, InvariantSetReport};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("doubling iteration failed to produce a stabilizing solution: {0}")]
    NoStabilizingSolution(String),
    #[error("closed loop is not Schur stable (spectral radius {0})")]
    NotSchur(f64),
    #[error("weight matrix has wrong shape or is not positive (semi)definite: {0}")]
    BadWeight(String),
}

/// All synthesis ingredients of a tracking controller: stage weights,
/// offset weights, terminal cost/gain, horizon, steady-state margin and the
/// scalars used by the harmonic and economic variants.
#[derive(Debug, Clone)]
pub struct TrackingDesign<T> {
    /// State stage weight (PSD).
    pub q: DMatrix<T>,
    /// Input stage weight (PD).
    pub r: DMatrix<T>,
    /// Output offset weight (PD), used by the setpoint-tracking variants.
    pub s: DMatrix<T>,
    /// State offset weight for the terminal-equality variant (PD).
    pub t_offset: DMatrix<T>,
    /// Input offset weight for the terminal-equality variant (PD).
    pub su_offset: DMatrix<T>,
    /// Harmonic amplitude weights (PD diagonal).
    pub t_h: DMatrix<T>,
    pub s_h: DMatrix<T>,
    /// Terminal cost.
    pub p: DMatrix<T>,
    /// Terminal feedback gain.
    pub k: DMatrix<T>,
    /// Tube gain for the robust variant; equals `k` unless overridden.
    pub k_tube: DMatrix<T>,
    /// Prediction horizon.
    pub n: usize,
    /// Steady-state margin in [0, 1).
    pub sigma: T,
    /// Harmonic reference frequency.
    pub omega: T,
    /// Economic offset scale.
    pub gamma: T,
}

/// Weight inputs for [`TrackingDesign::synthesize`].
#[derive(Debug, Clone)]
pub struct DesignWeights<T> {
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
    pub s: Option<DMatrix<T>>,
    pub t_offset: Option<DMatrix<T>>,
    pub su_offset: Option<DMatrix<T>>,
    pub t_h: Option<DMatrix<T>>,
    pub s_h: Option<DMatrix<T>>,
}

impl<T: Scalar> DesignWeights<T> {
    pub fn quadratic(q: DMatrix<T>, r: DMatrix<T>) -> Self {
        Self {
            q,
            r,
            s: None,
            t_offset: None,
            su_offset: None,
            t_h: None,
            s_h: None,
        }
    }
}

impl<T: Scalar> TrackingDesign<T> {
    /// Builds a design from stage weights: `P` and `K` from the discrete
    /// algebraic Riccati equation, offset weights defaulting to identity
    /// (`S`), `P`'s state block (`T`) and identity (`S_u`).
    ///
    /// Well-formedness (shapes, PD of R) is enforced here; the conditions
    /// required by the stability theory are advisory and live in
    /// [`validate_assumption1`].
    pub fn synthesize(
        sys: &LinearSystem<T>,
        weights: DesignWeights<T>,
        n: usize,
        sigma: T,
    ) -> Result<Self, DesignError> {
        let nx = sys.nx();
        let nu = sys.nu();
        let ny = sys.ny();
        check_square("Q", &weights.q, nx)?;
        check_square("R", &weights.r, nu)?;
        if nalgebra::Cholesky::new(weights.r.clone()).is_none() {
            return Err(DesignError::BadWeight("R must be positive definite".into()));
        }
        let (p, k) = dare_lqr(sys.a(), sys.b(), &weights.q, &weights.r)?;
        let s = weights.s.unwrap_or_else(|| DMatrix::identity(ny, ny));
        check_square("S", &s, ny)?;
        let t_offset = weights.t_offset.unwrap_or_else(|| p.clone());
        check_square("T", &t_offset, nx)?;
        let su_offset = weights
            .su_offset
            .unwrap_or_else(|| DMatrix::identity(nu, nu));
        check_square("S_u", &su_offset, nu)?;
        let t_h = weights.t_h.unwrap_or_else(|| DMatrix::identity(nx, nx));
        check_square("T_h", &t_h, nx)?;
        let s_h = weights.s_h.unwrap_or_else(|| DMatrix::identity(nu, nu));
        check_square("S_h", &s_h, nu)?;
        Ok(Self {
            q: weights.q,
            r: weights.r,
            s,
            t_offset,
            su_offset,
            t_h,
            s_h,
            p,
            k: k.clone(),
            k_tube: k,
            n,
            sigma,
            omega: convert(0.3),
            gamma: T::one(),
        })
    }

    pub fn with_horizon(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_tube_gain(mut self, k_tube: DMatrix<T>) -> Self {
        self.k_tube = k_tube;
        self
    }

    pub fn with_omega(mut self, omega: T) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_gamma(mut self, gamma: T) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_terminal(mut self, p: DMatrix<T>, k: DMatrix<T>) -> Self {
        self.p = p;
        self.k = k;
        self
    }
}

fn check_square<T: Scalar>(
    name: &str,
    m: &DMatrix<T>,
    dim: usize,
) -> Result<(), DesignError> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(DesignError::BadWeight(format!(
            "{name} must be {dim}x{dim}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Stabilizing solution of the discrete algebraic Riccati equation and the
/// associated LQR gain `K = -(R + BᵀPB)⁻¹BᵀPA`.
///
/// Solved by the structure-preserving doubling iteration, which converges
/// quadratically for controllable `(A, B)`; the residual of the returned
/// solution is verified before returning.
pub fn dare_lqr<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>), DesignError> {
    let nx = a.nrows();
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or_else(|| DesignError::BadWeight("R must be positive definite".into()))?
        .inverse();
    let mut ak = a.clone();
    let mut gk = b * &r_inv * b.transpose();
    let mut hk = q.clone();
    let eye = DMatrix::<T>::identity(nx, nx);
    let mut converged = false;
    for _ in 0..120 {
        let m = (&eye + &gk * &hk)
            .lu()
            .try_inverse()
            .ok_or_else(|| DesignError::NoStabilizingSolution("singular I + GH".into()))?;
        let a_next = &ak * &m * &ak;
        let g_next = &gk + &ak * &m * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &m * &ak;
        let delta = (&h_next - &hk).amax();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if delta <= T::default_epsilon() * convert(8.0) * (T::one() + hk.amax()) {
            converged = true;
            break;
        }
    }
    let p = (hk.clone() + hk.transpose()) * convert::<T>(0.5);
    let residual = dare_residual(a, b, q, r, &p);
    // 1e-10 at f64; scaled up for lower-precision scalar types
    let gate = f64::max(1e-10, 100.0 * to_f64(T::default_epsilon()));
    if !converged || to_f64(residual) > gate * (1.0 + to_f64(p.amax())) {
        return Err(DesignError::NoStabilizingSolution(format!(
            "residual {} after doubling",
            to_f64(residual)
        )));
    }
    let gain_denom = (r + b.transpose() * &p * b)
        .lu()
        .try_inverse()
        .ok_or_else(|| DesignError::NoStabilizingSolution("singular R + BᵀPB".into()))?;
    let k = -(&gain_denom * b.transpose() * &p * a);
    let rho = spectral_radius(&(a + b * &k));
    if rho >= T::one() {
        return Err(DesignError::NotSchur(to_f64(rho)));
    }
    Ok((p, k))
}

/// `‖AᵀPA − P − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q‖_∞`.
pub fn dare_residual<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    p: &DMatrix<T>,
) -> T {
    let btpb = r + b.transpose() * p * b;
    let inv = btpb.lu().try_inverse().expect("R + BᵀPB invertible");
    let res =
        a.transpose() * p * a - p - a.transpose() * p * b * inv * b.transpose() * p * a + q;
    res.amax()
}

/// Solves the discrete Lyapunov equation
/// `P − (A+BK)ᵀ P (A+BK) = Q + KᵀRK`
/// exactly through the vectorized linear system.
pub fn lyapunov_terminal_cost<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    k: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<DMatrix<T>, DesignError> {
    let a_cl = a + b * k;
    let rho = spectral_radius(&a_cl);
    if rho >= T::one() {
        return Err(DesignError::NotSchur(to_f64(rho)));
    }
    let q_eff = q + k.transpose() * r * k;
    let nx = a.nrows();
    // (I − A_clᵀ ⊗ A_clᵀ) vec(P) = vec(Q_eff)
    let at = a_cl.transpose();
    let kron = at.kronecker(&at);
    let sys = DMatrix::<T>::identity(nx * nx, nx * nx) - kron;
    let rhs = DVector::from_iterator(nx * nx, q_eff.iter().copied());
    let vec_p = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| DesignError::NoStabilizingSolution("singular Lyapunov system".into()))?;
    let p = DMatrix::from_iterator(nx, nx, vec_p.iter().copied());
    Ok((p.clone() + p.transpose()) * convert::<T>(0.5))
}

/// One pass/fail entry of a design validation.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Signed margin; positive means the check holds with room to spare.
    pub margin: f64,
    pub detail: String,
}

/// Validation report: advisory, never blocking. A design failing any check
/// yields an uncertified controller.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
    pub certified: bool,
}

impl ValidationReport {
    fn from_checks(checks: Vec<CheckOutcome>) -> Self {
        let certified = checks.iter().all(|c| c.passed);
        Self { checks, certified }
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Validates the tracking-design conditions with numeric margins:
/// observability of `(Q^{1/2}, A)` (PBH test), `N ≥ ν`, Schur `K`, the
/// Lyapunov terminal inequality, sampled invariance of the terminal set and
/// convexity/uniqueness of the offset cost.
pub fn validate_assumption1<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    xt: Option<&InvariantSetReport<T>>,
) -> ValidationReport {
    let mut checks = Vec::new();

    // observability of (Q^{1/2}, A) via PBH at every eigenvalue of A
    let q_sqrt = matrix_sqrt_psd(&design.q);
    let pbh = pbh_observability_margin(sys.a(), &q_sqrt);
    checks.push(CheckOutcome {
        name: "observability".into(),
        passed: pbh > 1e-8,
        margin: pbh,
        detail: format!("min PBH singular value {pbh:.3e}"),
    });

    let nu_idx = sys.controllability_index();
    checks.push(CheckOutcome {
        name: "horizon".into(),
        passed: design.n >= nu_idx,
        margin: design.n as f64 - nu_idx as f64,
        detail: format!("N = {}, controllability index = {}", design.n, nu_idx),
    });

    let rho = to_f64(spectral_radius(&(sys.a() + sys.b() * &design.k)));
    checks.push(CheckOutcome {
        name: "schur_gain".into(),
        passed: rho < 1.0,
        margin: 1.0 - rho,
        detail: format!("spectral radius {rho:.6}"),
    });

    // (A+BK)ᵀP(A+BK) − P + Q + KᵀRK ⪯ 1e-8 I
    let a_cl = sys.a() + sys.b() * &design.k;
    let lhs = a_cl.transpose() * &design.p * &a_cl - &design.p
        + &design.q
        + design.k.transpose() * &design.r * &design.k;
    let max_eig = max_symmetric_eigenvalue(&lhs);
    checks.push(CheckOutcome {
        name: "lyapunov".into(),
        passed: max_eig <= 1e-8,
        margin: 1e-8 - max_eig,
        detail: format!("max eigenvalue of the Lyapunov residual {max_eig:.3e}"),
    });

    let s_min = min_symmetric_eigenvalue(&design.s);
    checks.push(CheckOutcome {
        name: "offset_cost".into(),
        passed: s_min > 0.0,
        margin: s_min,
        detail: format!(
            "min eigenvalue of S {s_min:.3e}; S ≻ 0 gives a strictly convex offset with a unique minimizer"
        ),
    });

    if let Some(report) = xt {
        let inv = sampled_invariance_margin(sys, design, report);
        checks.push(CheckOutcome {
            name: "terminal_set".into(),
            passed: report.converged && inv > -1e-7,
            margin: inv,
            detail: format!(
                "converged = {}, worst sampled invariance margin {inv:.3e}",
                report.converged
            ),
        });
    }

    ValidationReport::from_checks(checks)
}

fn sampled_invariance_margin<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    report: &InvariantSetReport<T>,
) -> f64 {
    let nx = sys.nx();
    let nu = sys.nu();
    let samples = match report.set.sample(200, 1234) {
        Ok(s) => s,
        Err(_) => return f64::NEG_INFINITY,
    };
    let mut worst = f64::INFINITY;
    for p in samples {
        let x = p.rows(0, nx).clone_owned();
        let xa = p.rows(nx, nx).clone_owned();
        let ua = p.rows(2 * nx, nu).clone_owned();
        let u = &design.k * (&x - &xa) + &ua;
        let xp = sys.step(&x, &u);
        let mut zp = p.clone();
        zp.rows_mut(0, nx).copy_from(&xp);
        // margin: how far inside the set the successor lies
        let slack = report.set.g() - report.set.f() * &zp;
        let m = to_f64(slack.min());
        if m < worst {
            worst = m;
        }
    }
    worst
}

/// Symmetric PSD square root via eigendecomposition, clamping tiny negative
/// eigenvalues at zero.
pub fn matrix_sqrt_psd<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let sym = (m.clone() + m.transpose()) * convert::<T>(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let ev = eig.eigenvalues[i].max(T::zero());
        d[(i, i)] = ev.sqrt();
    }
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn pbh_observability_margin<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>) -> f64 {
    let nx = a.nrows();
    let eigs = a.complex_eigenvalues();
    let mut min_sv = f64::INFINITY;
    for lambda in eigs.iter() {
        let mut m = DMatrix::<Complex<T>>::zeros(nx + c.nrows(), nx);
        for i in 0..nx {
            for j in 0..nx {
                m[(i, j)] = Complex::new(a[(i, j)], T::zero());
            }
            m[(i, i)] -= *lambda;
        }
        for i in 0..c.nrows() {
            for j in 0..nx {
                m[(nx + i, j)] = Complex::new(c[(i, j)], T::zero());
            }
        }
        let svd = m.svd(false, false);
        let sv = svd
            .singular_values
            .iter()
            .map(|s| to_f64(*s))
            .fold(f64::INFINITY, f64::min);
        if sv < min_sv {
            min_sv = sv;
        }
    }
    if min_sv.is_finite() {
        min_sv
    } else {
        0.0
    }
}

pub(crate) fn min_symmetric_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m.clone() + m.transpose()) * convert::<T>(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym);
    eig.eigenvalues
        .iter()
        .map(|v| to_f64(*v))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn max_symmetric_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let sym = (m.clone() + m.transpose()) * convert::<T>(0.5);
    let eig = nalgebra::SymmetricEigen::new(sym);
    eig.eigenvalues
        .iter()
        .map(|v| to_f64(*v))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Example-style helper: design for a constraint polytope, running the
/// validator as part of the pipeline.
pub fn validate_with_sets<T: Scalar>(
    sys: &LinearSystem<T>,
    design: &TrackingDesign<T>,
    z: &Polytope<T>,
    max_iter: usize,
) -> (ValidationReport, Option<InvariantSetReport<T>>) {
    let xt = crate::setops::invariant_set_for_tracking(sys, &design.k, z, design.sigma, max_iter)
        .ok();
    let report = validate_assumption1(sys, design, xt.as_ref());
    (report, xt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn double_integrator() -> LinearSystem<f64> {
        LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.5, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
        )
        .unwrap()
    }

    #[test]
    fn scalar_dare_hits_the_golden_ratio() {
        // a = b = q = r = 1: P solves P² = P + 1
        let one = DMatrix::from_row_slice(1, 1, &[1.0]);
        let (p, k) = dare_lqr(&one, &one, &one, &one).unwrap();
        let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
        assert_relative_eq!(p[(0, 0)], phi, epsilon = 1e-12);
        assert_relative_eq!(k[(0, 0)], -phi / (1.0 + phi), epsilon = 1e-12);
    }

    #[test]
    fn zero_dynamics_gives_p_equals_q() {
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::identity(2, 2);
        let q = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        let r = DMatrix::identity(2, 2);
        let (p, k) = dare_lqr(&a, &b, &q, &r).unwrap();
        assert_relative_eq!((p - q).amax(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(k.amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn example_dare_residual_is_tiny() {
        let sys = double_integrator();
        let q = DMatrix::identity(2, 2) * 100.0;
        let r = DMatrix::from_row_slice(1, 1, &[1.0]);
        let (p, k) = dare_lqr(sys.a(), sys.b(), &q, &r).unwrap();
        assert!(dare_residual(sys.a(), sys.b(), &q, &r, &p) <= 1e-9);
        // with the LQR gain the Lyapunov identity holds exactly
        let a_cl = sys.a() + sys.b() * &k;
        let res = a_cl.transpose() * &p * &a_cl - &p + &q + k.transpose() * &r * &k;
        assert!(res.amax() <= 1e-8);
    }

    #[test]
    fn dare_outputs_are_symmetric_positive_definite() {
        let sys = double_integrator();
        let (p, _) = dare_lqr(
            sys.a(),
            sys.b(),
            &(DMatrix::identity(2, 2) * 100.0),
            &DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .unwrap();
        assert!((p.clone() - p.transpose()).amax() <= 1e-12 * p.amax());
        assert!(min_symmetric_eigenvalue(&p) > 0.0);
    }

    #[test]
    fn lyapunov_closed_forms() {
        // nilpotent closed loop: P = Q + KᵀRK
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b = DMatrix::from_row_slice(1, 1, &[1.0]);
        let k = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let q = DMatrix::from_row_slice(1, 1, &[2.0]);
        let r = DMatrix::from_row_slice(1, 1, &[3.0]);
        let p = lyapunov_terminal_cost(&a, &b, &k, &q, &r).unwrap();
        assert_relative_eq!(p[(0, 0)], 5.0, epsilon = 1e-12);

        // scalar contraction 0.5 with unit effective weight: P = 1/(1-0.25)
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        let k0 = DMatrix::from_row_slice(1, 1, &[0.0]);
        let q1 = DMatrix::from_row_slice(1, 1, &[1.0]);
        let p = lyapunov_terminal_cost(&a, &b, &k0, &q1, &r).unwrap();
        assert_relative_eq!(p[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_residual_on_random_stable_instance() {
        let a = DMatrix::from_row_slice(3, 3, &[0.4, 0.2, 0.0, -0.1, 0.5, 0.1, 0.0, 0.2, 0.3]);
        let b = DMatrix::from_row_slice(3, 1, &[1.0, 0.5, 0.0]);
        let k = DMatrix::from_row_slice(1, 3, &[0.1, -0.2, 0.05]);
        let q = DMatrix::identity(3, 3);
        let r = DMatrix::from_row_slice(1, 1, &[2.0]);
        let p = lyapunov_terminal_cost(&a, &b, &k, &q, &r).unwrap();
        let a_cl = &a + &b * &k;
        let res = &p - a_cl.transpose() * &p * a_cl - (&q + k.transpose() * &r * &k);
        assert!(res.amax() <= 1e-10);
        assert!((p.clone() - p.transpose()).amax() <= 1e-12);
        assert!(min_symmetric_eigenvalue(&p) > 0.0);
    }

    #[test]
    fn rejects_unstable_closed_loop() {
        let a = DMatrix::from_row_slice(1, 1, &[1.5]);
        let b = DMatrix::from_row_slice(1, 1, &[1.0]);
        let k = DMatrix::from_row_slice(1, 1, &[0.0]);
        let q = DMatrix::identity(1, 1);
        let r = DMatrix::identity(1, 1);
        assert!(matches!(
            lyapunov_terminal_cost(&a, &b, &k, &q, &r),
            Err(DesignError::NotSchur(_))
        ));
    }

    #[test]
    fn validator_passes_the_example_design() {
        let sys = double_integrator();
        let design = TrackingDesign::synthesize(
            &sys,
            DesignWeights::quadratic(
                DMatrix::identity(2, 2) * 100.0,
                DMatrix::from_row_slice(1, 1, &[1.0]),
            ),
            5,
            0.99,
        )
        .unwrap();
        let z = Polytope::box_set(&[10.0, 2.0, 0.5]);
        let (report, xt) = validate_with_sets(&sys, &design, &z, 50);
        assert!(xt.is_some());
        assert!(report.certified, "failed checks: {:?}", report.checks);
    }

    #[test]
    fn zero_q_fails_observability() {
        let sys = double_integrator();
        let mut design = TrackingDesign::synthesize(
            &sys,
            DesignWeights::quadratic(
                DMatrix::identity(2, 2) * 100.0,
                DMatrix::from_row_slice(1, 1, &[1.0]),
            ),
            5,
            0.99,
        )
        .unwrap();
        design.q = DMatrix::zeros(2, 2);
        let report = validate_assumption1(&sys, &design, None);
        let obs = report.check("observability").unwrap();
        assert!(!obs.passed);
        assert!(!report.certified);
    }

    #[test]
    fn short_horizon_fails_the_horizon_check() {
        let sys = double_integrator();
        let design = TrackingDesign::synthesize(
            &sys,
            DesignWeights::quadratic(
                DMatrix::identity(2, 2) * 100.0,
                DMatrix::from_row_slice(1, 1, &[1.0]),
            ),
            sys.controllability_index() - 1,
            0.99,
        )
        .unwrap();
        let report = validate_assumption1(&sys, &design, None);
        assert!(!report.check("horizon").unwrap().passed);
    }
}

//! Core data model: linear systems, constraint sets, references and
//! steady-state manifolds.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::conic::{self, LpOutcome};
use crate::sampling;
use crate::scalar::{convert, to_f64, Scalar};
use crate::sparse::SparseMatrix;

/// Default absolute tolerance for set-membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("matrix dimensions are inconsistent: {0}")]
    Dimension(String),
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("(A, B) is not controllable (rank {rank} < {nx})")]
    NotControllable { rank: usize, nx: usize },
    #[error("polytope has a zero row in its inequality part")]
    ZeroRow,
    #[error("set is empty")]
    EmptySet,
    #[error("sigma must lie in [0, 1), got {0}")]
    SigmaRange(f64),
    #[error("conic backend failure: {0}")]
    Conic(#[from] conic::ConicError),
}

/// Discrete-time LTI model `x⁺ = A x + B u`, `y = C x + D u`.
///
/// Controllability is required and checked at construction; the
/// controllability index is computed and stored alongside.
#[derive(Debug, Clone)]
pub struct LinearSystem<T> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    c: DMatrix<T>,
    d: DMatrix<T>,
    ctrl_index: usize,
}

impl<T: Scalar> LinearSystem<T> {
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
    ) -> Result<Self, ModelError> {
        let nx = a.nrows();
        if a.ncols() != nx {
            return Err(ModelError::Dimension("A must be square".into()));
        }
        if b.nrows() != nx {
            return Err(ModelError::Dimension("B row count must match A".into()));
        }
        if c.ncols() != nx {
            return Err(ModelError::Dimension("C column count must match A".into()));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(ModelError::Dimension("D must be ny x nu".into()));
        }
        for m in [&a, &b, &c, &d] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite);
            }
        }
        let ctrl_index = controllability_index(&a, &b)?;
        Ok(Self {
            a,
            b,
            c,
            d,
            ctrl_index,
        })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<T> {
        &self.d
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn ny(&self) -> usize {
        self.c.nrows()
    }

    /// Smallest k with rank [B, AB, …, A^{k-1}B] = nx.
    pub fn controllability_index(&self) -> usize {
        self.ctrl_index
    }

    pub fn step(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.a * x + &self.b * u
    }

    pub fn output(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        &self.c * x + &self.d * u
    }
}

fn controllability_index<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<usize, ModelError> {
    let nx = a.nrows();
    let nu = b.ncols();
    let mut block = b.clone();
    let mut ctrb = DMatrix::<T>::zeros(nx, nx * nu);
    for k in 0..nx {
        ctrb.view_mut((0, k * nu), (nx, nu)).copy_from(&block);
        let partial = ctrb.columns(0, (k + 1) * nu).clone_owned();
        let rank = rank_of(&partial);
        if rank == nx {
            return Ok(k + 1);
        }
        block = a * block;
    }
    Err(ModelError::NotControllable {
        rank: rank_of(&ctrb),
        nx,
    })
}

pub(crate) fn rank_of<T: Scalar>(m: &DMatrix<T>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let tol = smax * convert::<T>(m.nrows().max(m.ncols()) as f64) * T::default_epsilon();
    svd.rank(tol.max(T::default_epsilon()))
}

/// H-representation polytope `{z : F z ≤ g, F_eq z = g_eq}`.
#[derive(Debug, Clone)]
pub struct Polytope<T> {
    f: DMatrix<T>,
    g: DVector<T>,
    feq: DMatrix<T>,
    geq: DVector<T>,
}

impl<T: Scalar> Polytope<T> {
    pub fn new(f: DMatrix<T>, g: DVector<T>) -> Result<Self, ModelError> {
        Self::with_equalities(f, g, None)
    }

    pub fn with_equalities(
        f: DMatrix<T>,
        g: DVector<T>,
        eq: Option<(DMatrix<T>, DVector<T>)>,
    ) -> Result<Self, ModelError> {
        if f.nrows() != g.len() {
            return Err(ModelError::Dimension("F rows must match g".into()));
        }
        if f.iter().any(|v| !v.is_finite()) || g.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        for i in 0..f.nrows() {
            if f.row(i).iter().all(|v| *v == T::zero()) {
                return Err(ModelError::ZeroRow);
            }
        }
        let (feq, geq) = match eq {
            Some((m, v)) => {
                if m.nrows() != v.len() || (m.nrows() > 0 && m.ncols() != f.ncols()) {
                    return Err(ModelError::Dimension("equality part mismatch".into()));
                }
                if m.iter().any(|x| !x.is_finite()) || v.iter().any(|x| !x.is_finite()) {
                    return Err(ModelError::NonFinite);
                }
                (m, v)
            }
            None => (DMatrix::zeros(0, f.ncols()), DVector::zeros(0)),
        };
        Ok(Self { f, g, feq, geq })
    }

    /// Axis-aligned box `|z_i| ≤ half_widths_i`.
    pub fn box_set(half_widths: &[T]) -> Self {
        let d = half_widths.len();
        let mut f = DMatrix::zeros(2 * d, d);
        let mut g = DVector::zeros(2 * d);
        for (i, &w) in half_widths.iter().enumerate() {
            f[(2 * i, i)] = T::one();
            g[2 * i] = w;
            f[(2 * i + 1, i)] = -T::one();
            g[2 * i + 1] = w;
        }
        Self::new(f, g).expect("box construction")
    }

    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn f(&self) -> &DMatrix<T> {
        &self.f
    }

    pub fn g(&self) -> &DVector<T> {
        &self.g
    }

    pub fn feq(&self) -> &DMatrix<T> {
        &self.feq
    }

    pub fn geq(&self) -> &DVector<T> {
        &self.geq
    }

    pub fn num_rows(&self) -> usize {
        self.f.nrows()
    }

    pub fn num_eq_rows(&self) -> usize {
        self.feq.nrows()
    }

    fn f_sparse(&self) -> SparseMatrix<T> {
        SparseMatrix::from_dense(&self.f)
    }

    fn feq_sparse(&self) -> Option<SparseMatrix<T>> {
        (self.feq.nrows() > 0).then(|| SparseMatrix::from_dense(&self.feq))
    }

    /// Scaled set `σZ = {σ z : z ∈ Z}`.
    pub fn scale(&self, sigma: T) -> Self {
        Self {
            f: self.f.clone(),
            g: &self.g * sigma,
            feq: self.feq.clone(),
            geq: &self.geq * sigma,
        }
    }

    /// Intersection (row concatenation); both operands must share dimension.
    pub fn intersect(&self, other: &Polytope<T>) -> Polytope<T> {
        assert_eq!(self.dim(), other.dim());
        let mut f = DMatrix::zeros(self.f.nrows() + other.f.nrows(), self.dim());
        f.view_mut((0, 0), (self.f.nrows(), self.dim())).copy_from(&self.f);
        f.view_mut((self.f.nrows(), 0), (other.f.nrows(), self.dim()))
            .copy_from(&other.f);
        let mut g = DVector::zeros(self.g.len() + other.g.len());
        g.rows_mut(0, self.g.len()).copy_from(&self.g);
        g.rows_mut(self.g.len(), other.g.len()).copy_from(&other.g);
        let mut feq = DMatrix::zeros(self.feq.nrows() + other.feq.nrows(), self.dim());
        feq.view_mut((0, 0), (self.feq.nrows(), self.dim()))
            .copy_from(&self.feq);
        feq.view_mut((self.feq.nrows(), 0), (other.feq.nrows(), self.dim()))
            .copy_from(&other.feq);
        let mut geq = DVector::zeros(self.geq.len() + other.geq.len());
        geq.rows_mut(0, self.geq.len()).copy_from(&self.geq);
        geq.rows_mut(self.geq.len(), other.geq.len())
            .copy_from(&other.geq);
        Polytope {
            f,
            g,
            feq,
            geq,
        }
    }

    /// Preimage `{z : M z ∈ self}` under a linear map.
    pub fn preimage(&self, m: &DMatrix<T>) -> Polytope<T> {
        assert_eq!(m.nrows(), self.dim());
        Polytope {
            f: &self.f * m,
            g: self.g.clone(),
            feq: &self.feq * m,
            geq: self.geq.clone(),
        }
    }

    /// Preimage `{z : M z + c ∈ self}` under an affine map.
    pub fn affine_preimage(&self, m: &DMatrix<T>, c: &DVector<T>) -> Polytope<T> {
        assert_eq!(m.nrows(), self.dim());
        Polytope {
            f: &self.f * m,
            g: &self.g - &self.f * c,
            feq: &self.feq * m,
            geq: &self.geq - &self.feq * c,
        }
    }

    /// Translate: `{z + shift : z ∈ self}`.
    pub fn translate(&self, shift: &DVector<T>) -> Polytope<T> {
        Polytope {
            f: self.f.clone(),
            g: &self.g + &self.f * shift,
            feq: self.feq.clone(),
            geq: &self.geq + &self.feq * shift,
        }
    }

    pub fn contains(&self, z: &DVector<T>, tol: T) -> bool {
        let r = &self.f * z - &self.g;
        if r.iter().any(|v| *v > tol) {
            return false;
        }
        if self.feq.nrows() > 0 {
            let e = &self.feq * z - &self.geq;
            if e.iter().any(|v| v.abs() > tol) {
                return false;
            }
        }
        true
    }

    /// Support function `h(q) = max { qᵀz : z ∈ self }`.
    pub fn support(&self, q: &DVector<T>) -> Result<T, ModelError> {
        let eq = self.feq_sparse();
        match conic::maximize_linear(
            q,
            &self.f_sparse(),
            &self.g,
            eq.as_ref().map(|m| (m, &self.geq)),
            1e-10,
        )? {
            LpOutcome::Optimal { value, .. } => Ok(value),
            LpOutcome::Infeasible => Err(ModelError::EmptySet),
            LpOutcome::Unbounded => Ok(T::from_f64(f64::INFINITY).unwrap()),
        }
    }

    /// Chebyshev center and radius with respect to the inequality rows,
    /// restricted to the equality subspace.
    pub fn chebyshev_center(&self) -> Result<(DVector<T>, T), ModelError> {
        let d = self.dim();
        // variables (z, r): maximize r s.t. F z + ||F_i|| r <= g, F_eq z = g_eq
        let mut trips = Vec::new();
        for i in 0..self.f.nrows() {
            for j in 0..d {
                if self.f[(i, j)] != T::zero() {
                    trips.push((i, j, self.f[(i, j)]));
                }
            }
            trips.push((i, d, self.f.row(i).transpose().norm()));
        }
        let f = SparseMatrix::from_triplets(self.f.nrows(), d + 1, &trips);
        let mut obj = DVector::zeros(d + 1);
        obj[d] = T::one();
        let eq = if self.feq.nrows() > 0 {
            let mut etrips = Vec::new();
            for i in 0..self.feq.nrows() {
                for j in 0..d {
                    if self.feq[(i, j)] != T::zero() {
                        etrips.push((i, j, self.feq[(i, j)]));
                    }
                }
            }
            Some((
                SparseMatrix::from_triplets(self.feq.nrows(), d + 1, &etrips),
                self.geq.clone(),
            ))
        } else {
            None
        };
        match conic::maximize_linear(
            &obj,
            &f,
            &self.g,
            eq.as_ref().map(|(m, v)| (m, v)),
            1e-10,
        )? {
            LpOutcome::Optimal { x, value } => {
                if value < convert(-1e-9) {
                    return Err(ModelError::EmptySet);
                }
                Ok((x.rows(0, d).clone_owned(), value))
            }
            LpOutcome::Infeasible => Err(ModelError::EmptySet),
            // radius unbounded: any equality-feasible point will do
            LpOutcome::Unbounded => {
                let z = self.any_feasible_point()?;
                Ok((z, T::from_f64(f64::INFINITY).unwrap()))
            }
        }
    }

    fn any_feasible_point(&self) -> Result<DVector<T>, ModelError> {
        let eq = self.feq_sparse();
        match conic::maximize_linear(
            &DVector::zeros(self.dim()),
            &self.f_sparse(),
            &self.g,
            eq.as_ref().map(|m| (m, &self.geq)),
            1e-10,
        )? {
            LpOutcome::Optimal { x, .. } => Ok(x),
            _ => Err(ModelError::EmptySet),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.any_feasible_point().is_err()
    }

    /// Certifies a strictly feasible point via the Chebyshev-center LP.
    pub fn has_interior(&self) -> bool {
        matches!(self.chebyshev_center(), Ok((_, r)) if to_f64(r) > 1e-9)
    }

    /// Removes inequality rows made redundant by the others (LP test).
    /// Returns the pruned set and the number of removed rows.
    pub fn remove_redundant(&self, tol: T) -> Result<(Polytope<T>, usize), ModelError> {
        let mut keep: Vec<usize> = (0..self.f.nrows()).collect();
        let mut removed = 0usize;
        let mut i = 0usize;
        while i < keep.len() {
            let row = keep[i];
            let others: Vec<usize> = keep
                .iter()
                .copied()
                .filter(|&r| r != row)
                .collect();
            if others.is_empty() {
                break;
            }
            let sub_f = self.f.select_rows(others.iter());
            let sub_g = DVector::from_iterator(others.len(), others.iter().map(|&r| self.g[r]));
            let sub = Polytope {
                f: sub_f,
                g: sub_g,
                feq: self.feq.clone(),
                geq: self.geq.clone(),
            };
            let dir = self.f.row(row).transpose();
            let h = sub.support(&dir)?;
            if h <= self.g[row] + tol {
                keep.remove(i);
                removed += 1;
            } else {
                i += 1;
            }
        }
        let f = self.f.select_rows(keep.iter());
        let g = DVector::from_iterator(keep.len(), keep.iter().map(|&r| self.g[r]));
        Ok((
            Polytope {
                f,
                g,
                feq: self.feq.clone(),
                geq: self.geq.clone(),
            },
            removed,
        ))
    }

    /// Orthonormal basis of the equality-constraint null space together with
    /// a particular solution; identity/origin when there are no equalities.
    fn equality_parametrization(&self) -> Result<(DMatrix<T>, DVector<T>), ModelError> {
        let d = self.dim();
        if self.feq.nrows() == 0 {
            return Ok((DMatrix::identity(d, d), DVector::zeros(d)));
        }
        let eps = self.feq.amax() * convert::<T>(1e-12) + T::default_epsilon();
        let pinv = self
            .feq
            .clone()
            .pseudo_inverse(eps)
            .map_err(|e| ModelError::Dimension(format!("equality pseudo-inverse: {e}")))?;
        let part = &pinv * &self.geq;
        let res = &self.feq * &part - &self.geq;
        if to_f64(res.amax()) > 1e-8 {
            return Err(ModelError::EmptySet);
        }
        // null space = range of the orthogonal projector I - F⁺F; its square
        // SVD is full, so the basis can be read off the left singular vectors
        let projector = DMatrix::identity(d, d) - &pinv * &self.feq;
        let svd = projector.svd(true, false);
        let u = svd.u.as_ref().expect("svd with u requested");
        let mut basis_cols = Vec::new();
        for i in 0..svd.singular_values.len() {
            if to_f64(svd.singular_values[i]) > 0.5 {
                basis_cols.push(u.column(i).clone_owned());
            }
        }
        let mut basis = DMatrix::zeros(d, basis_cols.len());
        for (k, col) in basis_cols.iter().enumerate() {
            basis.column_mut(k).copy_from(col);
        }
        Ok((basis, part))
    }

    /// Hit-and-run sampler; equality constraints are respected by walking in
    /// the null-space parametrization. Deterministic for a fixed seed.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<DVector<T>>, ModelError> {
        let (basis, origin) = self.equality_parametrization()?;
        let free = basis.ncols();
        if free == 0 {
            return Ok(vec![origin; count]);
        }
        // reduced inequality system F (origin + basis w) <= g
        let fr = &self.f * &basis;
        let gr = &self.g - &self.f * &origin;
        let reduced = Polytope {
            f: fr.clone(),
            g: gr.clone(),
            feq: DMatrix::zeros(0, free),
            geq: DVector::zeros(0),
        };
        let (mut w, radius) = reduced.chebyshev_center()?;
        if to_f64(radius) <= 0.0 {
            // no interior: return the center repeatedly
            return Ok(vec![&origin + &basis * &w; count]);
        }
        let mut rng = sampling::rng(seed);
        let burn_in = 10 * free;
        let mut out = Vec::with_capacity(count);
        let total = burn_in + count;
        for it in 0..total {
            let dir = sampling::sample_direction::<T>(free, &mut rng);
            let (mut tmin, mut tmax) = (
                T::from_f64(f64::NEG_INFINITY).unwrap(),
                T::from_f64(f64::INFINITY).unwrap(),
            );
            let fd = &fr * &dir;
            let slack = &gr - &fr * &w;
            for i in 0..fd.len() {
                let a = fd[i];
                let s = slack[i];
                if a > convert(1e-14) {
                    tmax = tmax.min(s / a);
                } else if a < convert(-1e-14) {
                    tmin = tmin.max(s / a);
                }
            }
            if tmin.is_finite() && tmax.is_finite() && tmax > tmin {
                let t = convert::<T>(rng.random_range(0.0..1.0)) * (tmax - tmin) + tmin;
                w += dir * t;
            }
            if it >= burn_in {
                out.push(&origin + &basis * &w);
            }
        }
        Ok(out)
    }

    /// Exact projection onto the listed coordinates by Gaussian elimination on
    /// the equality rows followed by Fourier–Motzkin on the inequalities.
    /// Intended for small targets (the output-set use case is ny ≤ 2).
    pub fn project(&self, keep: &[usize]) -> Result<Polytope<T>, ModelError> {
        let d = self.dim();
        let keep_set: Vec<bool> = {
            let mut v = vec![false; d];
            for &k in keep {
                v[k] = true;
            }
            v
        };
        // working copies: rows [F | g] and [Feq | geq]
        let mut f = self.f.clone();
        let mut g = self.g.clone();
        let mut feq = self.feq.clone();
        let mut geq = self.geq.clone();
        let mut live: Vec<usize> = (0..d).collect();

        while let Some(&var) = live.iter().find(|&&v| !keep_set[v]) {
            let col = var;
            // prefer elimination through an equality row
            let pivot = (0..feq.nrows()).max_by(|&a, &b| {
                feq[(a, col)]
                    .abs()
                    .partial_cmp(&feq[(b, col)].abs())
                    .unwrap()
            });
            let use_eq = pivot
                .map(|p| to_f64(feq[(p, col)].abs()) > 1e-10)
                .unwrap_or(false);
            if use_eq {
                let p = pivot.unwrap();
                let prow = feq.row(p).clone_owned();
                let pg = geq[p];
                let coef = prow[col];
                // substitute var = (pg - prow_rest z) / coef into all rows
                let subst = |row: &mut nalgebra::RowDVector<T>, rhs: &mut T| {
                    let a = row[col];
                    if a != T::zero() {
                        let scale = a / coef;
                        *row -= prow.clone() * scale;
                        *rhs -= pg * scale;
                        row[col] = T::zero();
                    }
                };
                for i in 0..f.nrows() {
                    let mut row = f.row(i).clone_owned();
                    let mut rhs = g[i];
                    subst(&mut row, &mut rhs);
                    f.set_row(i, &row);
                    g[i] = rhs;
                }
                let mut new_feq_rows = Vec::new();
                let mut new_geq = Vec::new();
                for i in 0..feq.nrows() {
                    if i == p {
                        continue;
                    }
                    let mut row = feq.row(i).clone_owned();
                    let mut rhs = geq[i];
                    subst(&mut row, &mut rhs);
                    new_feq_rows.push(row);
                    new_geq.push(rhs);
                }
                feq = if new_feq_rows.is_empty() {
                    DMatrix::zeros(0, d)
                } else {
                    DMatrix::from_rows(&new_feq_rows)
                };
                geq = DVector::from_vec(new_geq);
            } else {
                // Fourier–Motzkin on the inequality rows
                let mut zero_rows = Vec::new();
                let mut pos = Vec::new();
                let mut neg = Vec::new();
                for i in 0..f.nrows() {
                    let a = f[(i, col)];
                    if to_f64(a.abs()) <= 1e-12 {
                        zero_rows.push(i);
                    } else if a > T::zero() {
                        pos.push(i);
                    } else {
                        neg.push(i);
                    }
                }
                let mut rows = Vec::new();
                let mut rhs = Vec::new();
                for &i in &zero_rows {
                    rows.push(f.row(i).clone_owned());
                    rhs.push(g[i]);
                }
                for &ip in &pos {
                    for &in_ in &neg {
                        let ap = f[(ip, col)];
                        let an = f[(in_, col)];
                        let mut row = f.row(ip).clone_owned() * (-an) + f.row(in_).clone_owned() * ap;
                        let r = g[ip] * (-an) + g[in_] * ap;
                        row[col] = T::zero();
                        rows.push(row);
                        rhs.push(r);
                    }
                }
                if rows.is_empty() {
                    f = DMatrix::zeros(0, d);
                    g = DVector::zeros(0);
                } else {
                    f = DMatrix::from_rows(&rows);
                    g = DVector::from_vec(rhs);
                }
                // prune to keep FM from blowing up
                if f.nrows() > 0 {
                    let pruned = Polytope {
                        f: f.clone(),
                        g: g.clone(),
                        feq: DMatrix::zeros(0, d),
                        geq: DVector::zeros(0),
                    }
                    .drop_trivial_rows()
                    .remove_redundant(convert(1e-9))?;
                    f = pruned.0.f;
                    g = pruned.0.g;
                }
            }
            live.retain(|&v| v != var);
        }

        // restrict columns to `keep` in the requested order
        let take = |m: &DMatrix<T>| -> DMatrix<T> {
            let mut out = DMatrix::zeros(m.nrows(), keep.len());
            for (jnew, &jold) in keep.iter().enumerate() {
                out.column_mut(jnew).copy_from(&m.column(jold));
            }
            out
        };
        let fq = take(&f);
        let fe = take(&feq);
        Polytope {
            f: fq,
            g,
            feq: fe,
            geq: geq.clone(),
        }
        .drop_trivial_rows()
        .cleanup_projection()
    }

    /// Drops rows with an (almost) zero normal and a nonnegative rhs.
    fn drop_trivial_rows(&self) -> Polytope<T> {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..self.f.nrows() {
            let norm = self.f.row(i).transpose().norm();
            if to_f64(norm) <= 1e-12 {
                // 0 <= g: vacuous when g >= 0; an infeasible zero row is kept
                if self.g[i] < convert(-1e-12) {
                    rows.push(self.f.row(i).clone_owned());
                    rhs.push(self.g[i]);
                }
                continue;
            }
            rows.push(self.f.row(i).clone_owned());
            rhs.push(self.g[i]);
        }
        let f = if rows.is_empty() {
            DMatrix::zeros(0, self.dim())
        } else {
            DMatrix::from_rows(&rows)
        };
        Polytope {
            f,
            g: DVector::from_vec(rhs),
            feq: self.feq.clone(),
            geq: self.geq.clone(),
        }
    }

    fn cleanup_projection(self) -> Result<Polytope<T>, ModelError> {
        if self.f.nrows() == 0 {
            return Ok(self);
        }
        let (p, _) = self.remove_redundant(convert(1e-9))?;
        Ok(p)
    }

    /// Vertices of a bounded two-dimensional polytope (pairwise row
    /// intersections filtered by feasibility). Used as a projection oracle
    /// and for plotting.
    pub fn vertices_2d(&self, tol: T) -> Vec<DVector<T>> {
        assert_eq!(self.dim(), 2, "vertex enumeration is 2-D only");
        let mut verts: Vec<DVector<T>> = Vec::new();
        let m = self.f.nrows();
        for i in 0..m {
            for j in (i + 1)..m {
                let det = self.f[(i, 0)] * self.f[(j, 1)] - self.f[(i, 1)] * self.f[(j, 0)];
                if to_f64(det.abs()) < 1e-12 {
                    continue;
                }
                let x = (self.g[i] * self.f[(j, 1)] - self.f[(i, 1)] * self.g[j]) / det;
                let y = (self.f[(i, 0)] * self.g[j] - self.g[i] * self.f[(j, 0)]) / det;
                let v = DVector::from_vec(vec![x, y]);
                if self.contains(&v, tol) && !verts.iter().any(|w| (w - &v).norm() < tol) {
                    verts.push(v);
                }
            }
        }
        verts
    }
}

/// Zonotope `{center + Σ λ_i g_i : |λ_i| ≤ 1}`.
#[derive(Debug, Clone)]
pub struct Zonotope<T> {
    center: DVector<T>,
    generators: Vec<DVector<T>>,
}

impl<T: Scalar> Zonotope<T> {
    pub fn new(center: DVector<T>, generators: Vec<DVector<T>>) -> Self {
        for g in &generators {
            assert_eq!(g.len(), center.len(), "generator dimension mismatch");
        }
        Self { center, generators }
    }

    /// The singleton `{0}` in dimension `d`.
    pub fn origin(d: usize) -> Self {
        Self::new(DVector::zeros(d), Vec::new())
    }

    /// Axis-aligned box `center ± half_widths`.
    pub fn box_set(center: DVector<T>, half_widths: &[T]) -> Self {
        let d = center.len();
        assert_eq!(half_widths.len(), d);
        let generators = half_widths
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != T::zero())
            .map(|(i, &w)| {
                let mut g = DVector::zeros(d);
                g[i] = w;
                g
            })
            .collect();
        Self::new(center, generators)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<T> {
        &self.center
    }

    pub fn generators(&self) -> &[DVector<T>] {
        &self.generators
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    /// Generator matrix with one generator per column.
    pub fn generator_matrix(&self) -> DMatrix<T> {
        let d = self.dim();
        let mut g = DMatrix::zeros(d, self.generators.len());
        for (k, gen) in self.generators.iter().enumerate() {
            g.column_mut(k).copy_from(gen);
        }
        g
    }

    /// Exact support function `h(q) = qᵀc + Σ |qᵀg_i|`.
    pub fn support(&self, q: &DVector<T>) -> T {
        let mut h = q.dot(&self.center);
        for g in &self.generators {
            h += q.dot(g).abs();
        }
        h
    }

    /// Image under a linear map.
    pub fn linear_map(&self, m: &DMatrix<T>) -> Zonotope<T> {
        Zonotope::new(
            m * &self.center,
            self.generators.iter().map(|g| m * g).collect(),
        )
    }

    /// Minkowski sum (generator concatenation).
    pub fn minkowski_sum(&self, other: &Zonotope<T>) -> Zonotope<T> {
        assert_eq!(self.dim(), other.dim());
        let mut gens = self.generators.clone();
        gens.extend(other.generators.iter().cloned());
        Zonotope::new(&self.center + &other.center, gens)
    }

    pub fn scale(&self, s: T) -> Zonotope<T> {
        Zonotope::new(
            &self.center * s,
            self.generators.iter().map(|g| g * s).collect(),
        )
    }

    /// Membership via an LP over the generator coefficients.
    pub fn contains(&self, z: &DVector<T>, tol: f64) -> Result<bool, ModelError> {
        let k = self.generators.len();
        let rhs = z - &self.center;
        if k == 0 {
            return Ok(to_f64(rhs.amax()) <= tol);
        }
        // feasibility of G λ = rhs, |λ| ≤ 1  (maximize 0)
        let d = self.dim();
        let gmat = self.generator_matrix();
        let mut etrips = Vec::new();
        for i in 0..d {
            for j in 0..k {
                if gmat[(i, j)] != T::zero() {
                    etrips.push((i, j, gmat[(i, j)]));
                }
            }
        }
        let mut itrips = Vec::new();
        for j in 0..k {
            itrips.push((2 * j, j, T::one()));
            itrips.push((2 * j + 1, j, -T::one()));
        }
        let tol_t = convert::<T>(tol);
        let g = DVector::from_element(2 * k, T::one() + tol_t);
        let out = conic::maximize_linear(
            &DVector::zeros(k),
            &SparseMatrix::from_triplets(2 * k, k, &itrips),
            &g,
            Some((&SparseMatrix::from_triplets(d, k, &etrips), &rhs)),
            1e-9,
        )?;
        Ok(matches!(out, LpOutcome::Optimal { .. }))
    }

    /// All `2^k` extreme points (small `k` only); callers sample when the
    /// generator count is large.
    pub fn extreme_points(&self, cap: usize) -> Vec<DVector<T>> {
        let k = self.generators.len();
        if k == 0 {
            return vec![self.center.clone()];
        }
        let total = 1usize << k.min(20);
        let n = total.min(cap);
        let mut out = Vec::with_capacity(n);
        for mask in 0..total {
            if out.len() >= cap {
                break;
            }
            let mut p = self.center.clone();
            for (i, g) in self.generators.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    p += g;
                } else {
                    p -= g;
                }
            }
            out.push(p);
        }
        out
    }

    /// Uniform sample over the parameter box.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<T> {
        let lambda = sampling::sample_unit_box::<T>(self.generators.len(), rng);
        let mut p = self.center.clone();
        for (i, g) in self.generators.iter().enumerate() {
            p += g * lambda[i];
        }
        p
    }
}

/// Reference signal over time: piecewise-constant setpoints or a periodic
/// output trajectory.
#[derive(Debug, Clone)]
pub enum ReferenceSchedule<T> {
    /// `(switch time, setpoint)` pairs; times strictly increasing, the first
    /// entry applies from its switch time onwards and before the first switch
    /// time the first setpoint is used.
    PiecewiseConstant(Vec<(usize, DVector<T>)>),
    Periodic {
        period: usize,
        samples: Vec<DVector<T>>,
    },
}

impl<T: Scalar> ReferenceSchedule<T> {
    pub fn constant(y: DVector<T>) -> Self {
        Self::PiecewiseConstant(vec![(0, y)])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Self::PiecewiseConstant(steps) => {
                if steps.is_empty() {
                    return Err(ModelError::Dimension("empty schedule".into()));
                }
                for w in steps.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(ModelError::Dimension(
                            "switch times must be strictly increasing".into(),
                        ));
                    }
                }
                Ok(())
            }
            Self::Periodic { period, samples } => {
                if samples.len() != *period || *period == 0 {
                    return Err(ModelError::Dimension(
                        "periodic schedule must carry exactly `period` samples".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Setpoint active at time `t`.
    pub fn at(&self, t: usize) -> DVector<T> {
        match self {
            Self::PiecewiseConstant(steps) => {
                let mut current = steps[0].1.clone();
                for (time, y) in steps {
                    if *time <= t {
                        current = y.clone();
                    }
                }
                current
            }
            Self::Periodic { period, samples } => samples[t % period].clone(),
        }
    }

    /// Period-length window starting at `t` (periodic schedules only).
    pub fn window(&self, t: usize) -> Option<Vec<DVector<T>>> {
        match self {
            Self::Periodic { period, samples } => {
                Some((0..*period).map(|k| samples[(t + k) % period].clone()).collect())
            }
            _ => None,
        }
    }
}

/// Steady-state manifold `Z_s = {(x,u) ∈ σZ : x = A x + B u}` as a polytope
/// over `(x, u)` with an equality part.
pub fn steady_state_manifold<T: Scalar>(
    sys: &LinearSystem<T>,
    z: &Polytope<T>,
    sigma: T,
) -> Result<Polytope<T>, ModelError> {
    let s = to_f64(sigma);
    if !(0.0..1.0).contains(&s) {
        return Err(ModelError::SigmaRange(s));
    }
    let nx = sys.nx();
    let nu = sys.nu();
    assert_eq!(z.dim(), nx + nu, "constraint set must live in (x,u)");
    let scaled = z.scale(sigma);
    // (I - A) x - B u = 0
    let mut feq = DMatrix::zeros(nx, nx + nu);
    let eye = DMatrix::<T>::identity(nx, nx);
    feq.view_mut((0, 0), (nx, nx)).copy_from(&(&eye - sys.a()));
    feq.view_mut((0, nx), (nx, nu)).copy_from(&(-sys.b()));
    let ss = Polytope::with_equalities(
        scaled.f.clone(),
        scaled.g.clone(),
        Some((
            {
                let mut m = DMatrix::zeros(scaled.feq.nrows() + nx, nx + nu);
                m.view_mut((0, 0), (scaled.feq.nrows(), nx + nu))
                    .copy_from(&scaled.feq);
                m.view_mut((scaled.feq.nrows(), 0), (nx, nx + nu))
                    .copy_from(&feq);
                m
            },
            {
                let mut v = DVector::zeros(scaled.geq.len() + nx);
                v.rows_mut(0, scaled.geq.len()).copy_from(&scaled.geq);
                v
            },
        )),
    )?;
    if ss.is_empty() {
        return Err(ModelError::EmptySet);
    }
    Ok(ss)
}

/// Reachable output set: projection of `{C x + D u : (x,u) ∈ Z_s}` onto the
/// output coordinates. Exact H-representation for `ny ≤ 2`; otherwise only
/// the support/membership oracle is available.
#[derive(Debug, Clone)]
pub struct OutputSet<T> {
    manifold: Polytope<T>,
    c: DMatrix<T>,
    d: DMatrix<T>,
    exact: Option<Polytope<T>>,
}

impl<T: Scalar> OutputSet<T> {
    pub fn ny(&self) -> usize {
        self.c.nrows()
    }

    /// Exact polytope when `ny ≤ 2`.
    pub fn as_polytope(&self) -> Option<&Polytope<T>> {
        self.exact.as_ref()
    }

    /// Support function of the output set in direction `q`:
    /// `max qᵀ(Cx + Du)` over the manifold.
    pub fn support(&self, q: &DVector<T>) -> Result<T, ModelError> {
        let nx = self.c.ncols();
        let nu = self.d.ncols();
        let mut dir = DVector::zeros(self.manifold.dim());
        dir.rows_mut(0, nx).copy_from(&(self.c.transpose() * q));
        dir.rows_mut(nx, nu).copy_from(&(self.d.transpose() * q));
        self.manifold.support(&dir)
    }

    /// Membership `y ∈ Y_s` via a feasibility LP on the manifold.
    pub fn contains(&self, y: &DVector<T>, tol: f64) -> Result<bool, ModelError> {
        let nx = self.c.ncols();
        let nu = self.d.ncols();
        // augment manifold equalities with C x + D u = y
        let mut cd = DMatrix::zeros(self.ny(), nx + nu);
        cd.view_mut((0, 0), (self.ny(), nx)).copy_from(&self.c);
        cd.view_mut((0, nx), (self.ny(), nu)).copy_from(&self.d);
        let aug = self.manifold.intersect(&Polytope::with_equalities(
            DMatrix::zeros(0, nx + nu),
            DVector::zeros(0),
            Some((cd, y.clone())),
        )?);
        let _ = tol;
        Ok(!aug.is_empty())
    }
}

/// Builds the output set `Y_s` for a steady-state manifold.
pub fn output_set<T: Scalar>(
    sys: &LinearSystem<T>,
    manifold: &Polytope<T>,
) -> Result<OutputSet<T>, ModelError> {
    if manifold.is_empty() {
        return Err(ModelError::EmptySet);
    }
    let nx = sys.nx();
    let nu = sys.nu();
    let ny = sys.ny();
    assert_eq!(manifold.dim(), nx + nu);
    let exact = if ny <= 2 {
        // lift with y variables, add y = Cx + Du, then project onto y
        let d = nx + nu + ny;
        let mut f = DMatrix::zeros(manifold.f.nrows(), d);
        f.view_mut((0, 0), (manifold.f.nrows(), nx + nu))
            .copy_from(&manifold.f);
        let mut feq = DMatrix::zeros(manifold.feq.nrows() + ny, d);
        feq.view_mut((0, 0), (manifold.feq.nrows(), nx + nu))
            .copy_from(&manifold.feq);
        feq.view_mut((manifold.feq.nrows(), 0), (ny, nx))
            .copy_from(&(-sys.c()));
        feq.view_mut((manifold.feq.nrows(), nx), (ny, nu))
            .copy_from(&(-sys.d()));
        feq.view_mut((manifold.feq.nrows(), nx + nu), (ny, ny))
            .copy_from(&DMatrix::identity(ny, ny));
        let mut geq = DVector::zeros(manifold.geq.len() + ny);
        geq.rows_mut(0, manifold.geq.len()).copy_from(&manifold.geq);
        let lifted = Polytope::with_equalities(f, manifold.g.clone(), Some((feq, geq)))?;
        let keep: Vec<usize> = (nx + nu..nx + nu + ny).collect();
        Some(lifted.project(&keep)?)
    } else {
        None
    };
    Ok(OutputSet {
        manifold: manifold.clone(),
        c: sys.c().clone(),
        d: sys.d().clone(),
        exact,
    })
}

//! Woodbury-identity solves for banded-plus-low-rank systems
//! `(M + U Vᵀ) x = b` with `M` banded and `U, V` thin.

use nalgebra::{DMatrix, DVector, LU};
use thiserror::Error;

use crate::scalar::Scalar;

use super::banded::BandedFactor;

#[derive(Debug, Error)]
pub enum WoodburyError {
    #[error("capacitance matrix I + VᵀM⁻¹U is singular")]
    SingularCapacitance,
}

/// One-shot Woodbury solve: `x = M⁻¹b − M⁻¹U (I + VᵀM⁻¹U)⁻¹ VᵀM⁻¹b`,
/// costing two banded solves plus one rank-r dense solve (the `M⁻¹U` block
/// and the capacitance factorization are formed on the fly; use
/// [`SemiBandedKkt`] to amortize them across iterations).
pub fn semibanded_solve<T: Scalar>(
    factor: &BandedFactor<T>,
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    b: &DVector<T>,
) -> Result<DVector<T>, WoodburyError> {
    let r = u.ncols();
    if r == 0 {
        return Ok(factor.solve(b));
    }
    let minv_b = factor.solve(b);
    let minv_u = solve_multi(factor, u);
    let cap = DMatrix::identity(r, r) + v.transpose() * &minv_u;
    let rhs = v.transpose() * &minv_b;
    let alpha = cap
        .lu()
        .solve(&rhs)
        .ok_or(WoodburyError::SingularCapacitance)?;
    let correction = factor.solve(&(u * alpha));
    Ok(minv_b - correction)
}

fn solve_multi<T: Scalar>(factor: &BandedFactor<T>, u: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(u.nrows(), u.ncols());
    for k in 0..u.ncols() {
        let col = factor.solve(&u.column(k).clone_owned());
        out.column_mut(k).copy_from(&col);
    }
    out
}

/// Cached semi-banded KKT solver: the banded factor, `M⁻¹U` and the LU of
/// the capacitance matrix are computed once; each solve then costs one
/// banded solve plus O(n·r) dense work.
#[derive(Debug)]
pub struct SemiBandedKkt<T: Scalar> {
    factor: BandedFactor<T>,
    u: DMatrix<T>,
    v: DMatrix<T>,
    minv_u: DMatrix<T>,
    cap_lu: LU<T, nalgebra::Dyn, nalgebra::Dyn>,
    setup_flops: u64,
    solve_flops: u64,
}

impl<T: Scalar> SemiBandedKkt<T> {
    pub fn new(
        factor: BandedFactor<T>,
        u: DMatrix<T>,
        v: DMatrix<T>,
    ) -> Result<Self, WoodburyError> {
        let r = u.ncols();
        let n = factor.n() as u64;
        let minv_u = solve_multi(&factor, &u);
        let cap = DMatrix::identity(r, r) + v.transpose() * &minv_u;
        let cap_lu = cap.lu();
        if r > 0 && cap_lu.determinant().abs() <= T::default_epsilon() {
            return Err(WoodburyError::SingularCapacitance);
        }
        let setup_flops =
            factor.factor_flops() + factor.solve_flops() * r as u64 + (r as u64).pow(3) / 3;
        let solve_flops = factor.solve_flops() + 4 * n * r as u64 + (r as u64).pow(2);
        Ok(Self {
            factor,
            u,
            v,
            minv_u,
            cap_lu,
            setup_flops,
            solve_flops,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.factor.bandwidth()
    }

    pub fn setup_flops(&self) -> u64 {
        self.setup_flops
    }

    pub fn solve_flops(&self) -> u64 {
        self.solve_flops
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let t1 = self.factor.solve(b);
        if self.u.ncols() == 0 {
            return t1;
        }
        let rhs = self.v.transpose() * &t1;
        let alpha = self.cap_lu.solve(&rhs).expect("capacitance verified at setup");
        t1 - &self.minv_u * alpha
    }
}

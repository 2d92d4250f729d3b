//! Structured optimization programs produced by the formulation builders.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::scalar::{convert, to_f64, Scalar};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgramKind {
    Qp,
    Socp,
}

/// One second-order cone constraint `‖S z + s0‖₂ ≤ t·z + t0`.
#[derive(Debug, Clone)]
pub struct SocConstraint<T> {
    pub s_map: SparseMatrix<T>,
    pub s_offset: DVector<T>,
    /// Single-row map for the cone's scalar side.
    pub t_map: SparseMatrix<T>,
    pub t_offset: T,
}

/// Semi-banded Hessian descriptor: `H = H_B + U Vᵀ` with `H_B` banded under
/// a stage-wise ordering and `U, V` of rank `2(nx+nu)`.
#[derive(Debug, Clone)]
pub struct SemiBandedStructure<T> {
    pub h_banded: SparseMatrix<T>,
    pub u: DMatrix<T>,
    pub v: DMatrix<T>,
    /// Decision-vector block holding the artificial reference.
    pub tail: Range<usize>,
    /// Stage blocks coupled to the tail through the cost.
    pub stages: Vec<Range<usize>>,
}

/// Named, disjoint slices of the decision vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarLayout {
    blocks: Vec<(String, Range<usize>)>,
    len: usize,
}

impl VarLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a named block and returns its range.
    pub fn push(&mut self, name: impl Into<String>, len: usize) -> Range<usize> {
        let range = self.len..self.len + len;
        self.blocks.push((name.into(), range.clone()));
        self.len += len;
        range
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&str, Range<usize>)> {
        self.blocks.iter().map(|(n, r)| (n.as_str(), r.clone()))
    }

    /// Blocks are contiguous by construction; verifies cover of `0..len`.
    pub fn covers(&self) -> bool {
        let mut at = 0usize;
        for (_, r) in &self.blocks {
            if r.start != at {
                return false;
            }
            at = r.end;
        }
        at == self.len
    }
}

/// A QP or SOCP in the form
///
/// ```text
/// min ½ zᵀH z + qᵀz + c
/// s.t. A_eq z = b_eq,  F z ≤ g,  ‖S_i z + s_i‖ ≤ t_i z + τ_i
/// ```
///
/// with an optional banded-plus-low-rank Hessian descriptor and a named
/// variable layout.
#[derive(Debug, Clone)]
pub struct StructuredProgram<T> {
    pub kind: ProgramKind,
    pub h: SparseMatrix<T>,
    pub q: DVector<T>,
    pub c: T,
    pub a_eq: SparseMatrix<T>,
    pub b_eq: DVector<T>,
    pub f: SparseMatrix<T>,
    pub g: DVector<T>,
    pub cones: Vec<SocConstraint<T>>,
    pub structure: Option<SemiBandedStructure<T>>,
    pub layout: VarLayout,
}

impl<T: Scalar> StructuredProgram<T> {
    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &DVector<T>) -> T {
        let hz = self.h.matvec(z);
        convert::<T>(0.5) * z.dot(&hz) + self.q.dot(z) + self.c
    }

    /// Worst equality/inequality violation of a candidate point.
    pub fn constraint_violation(&self, z: &DVector<T>) -> T {
        let mut worst = T::zero();
        let eq = self.a_eq.matvec(z) - &self.b_eq;
        for v in eq.iter() {
            worst = worst.max(v.abs());
        }
        let ineq = self.f.matvec(z) - &self.g;
        for v in ineq.iter() {
            worst = worst.max(*v);
        }
        for cone in &self.cones {
            let s = cone.s_map.matvec(z) + &cone.s_offset;
            let t = cone.t_map.matvec(z)[0] + cone.t_offset;
            worst = worst.max(s.norm() - t);
        }
        worst.max(T::zero())
    }

    /// Checks layout cover and, when a structure descriptor is attached,
    /// the entrywise reconstruction `H = H_B + U Vᵀ`.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.num_vars();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err("Hessian dimension mismatch".into());
        }
        if self.a_eq.ncols() != n || self.f.ncols() != n {
            return Err("constraint dimension mismatch".into());
        }
        if self.a_eq.nrows() != self.b_eq.len() || self.f.nrows() != self.g.len() {
            return Err("constraint right-hand-side mismatch".into());
        }
        if !self.layout.covers() || self.layout.len() != n {
            return Err("variable layout does not cover the decision vector".into());
        }
        if self.kind == ProgramKind::Qp && !self.cones.is_empty() {
            return Err("QP carries cone constraints".into());
        }
        if let Some(st) = &self.structure {
            let dense = self.h.to_dense();
            let rebuilt = st.h_banded.to_dense() + &st.u * st.v.transpose();
            let err = (dense - rebuilt).amax();
            if to_f64(err) > 1e-12 {
                return Err(format!(
                    "structure reconstruction error {} exceeds 1e-12",
                    to_f64(err)
                ));
            }
        }
        Ok(())
    }
}

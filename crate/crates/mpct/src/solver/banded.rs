//! Banded LDLᵀ factorization for the quasi-definite ADMM linear systems.
//!
//! The KKT matrices factored here have the form `[[M, Aᵀ], [A, -E]]` with
//! `M ≻ 0` and `E ≻ 0` diagonal, which is strongly factorizable: the LDLᵀ
//! factorization without pivoting exists under any symmetric permutation.
//! A reverse Cuthill–McKee ordering keeps the bandwidth proportional to the
//! per-stage block size, so factor and solve cost stay linear in the horizon.

use nalgebra::DVector;
use thiserror::Error;

use crate::scalar::{convert, Scalar};

#[derive(Debug, Error)]
pub enum BandedError {
    #[error("zero pivot at column {0}: matrix is not quasi-definite")]
    ZeroPivot(usize),
}

/// Reverse Cuthill–McKee ordering of a symmetric sparsity pattern.
/// Deterministic: ties break on the smaller index.
pub fn reverse_cuthill_mckee(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in edges {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        // lowest-degree unvisited start node
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i));
        let Some(start) = start else { break };
        visited[start] = true;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    // order[k] = original index at position k; return the permutation
    order
}

/// LDLᵀ factorization of a symmetric banded matrix in packed lower storage.
#[derive(Debug, Clone)]
pub struct BandedFactor<T> {
    n: usize,
    bw: usize,
    /// `low[j * bw + (i - j - 1)] = L[i][j]` for `j < i ≤ j + bw`.
    low: Vec<T>,
    d: Vec<T>,
    /// `perm[k]` = original index placed at position `k`.
    perm: Vec<usize>,
    /// multiply–add count of one `solve` call.
    solve_flops: u64,
    /// multiply–add count of the factorization.
    factor_flops: u64,
}

impl<T: Scalar> BandedFactor<T> {
    /// Factors the symmetric matrix given by `triplets` (full pattern,
    /// duplicates summed) under the ordering `perm` (defaults to RCM).
    pub fn factor(
        n: usize,
        triplets: &[(usize, usize, T)],
        perm: Option<Vec<usize>>,
    ) -> Result<Self, BandedError> {
        let perm = perm.unwrap_or_else(|| {
            let edges: Vec<(usize, usize)> = triplets.iter().map(|&(i, j, _)| (i, j)).collect();
            reverse_cuthill_mckee(n, &edges)
        });
        let mut iperm = vec![0usize; n];
        for (k, &orig) in perm.iter().enumerate() {
            iperm[orig] = k;
        }
        // bandwidth under the permutation
        let mut bw = 0usize;
        for &(i, j, _) in triplets {
            let (pi, pj) = (iperm[i], iperm[j]);
            bw = bw.max(pi.abs_diff(pj));
        }
        // dense band accumulation: a[(i, j)] for j ≤ i ≤ j + bw
        let mut diag = vec![T::zero(); n];
        let mut band = vec![T::zero(); n * bw];
        for &(i, j, v) in triplets {
            let (pi, pj) = (iperm[i], iperm[j]);
            if pi == pj {
                diag[pi] += v;
            } else if pi > pj {
                band[pj * bw + (pi - pj - 1)] += v;
            }
            // upper entries are implied by symmetry
        }
        let mut factor_flops = 0u64;
        // in-place LDL: for each column j, eliminate into trailing columns
        let mut d = diag;
        let mut low = band;
        for j in 0..n {
            let dj = d[j];
            if dj.abs() <= convert(1e-300) {
                return Err(BandedError::ZeroPivot(j));
            }
            let hi = (j + bw).min(n.saturating_sub(1));
            // scale column j: low holds L[i][j] * d_j until normalization
            for i in (j + 1)..=hi {
                let lij = low[j * bw + (i - j - 1)] / dj;
                // update trailing submatrix entries (i2 >= i)
                for i2 in i..=hi {
                    let v = low[j * bw + (i2 - j - 1)];
                    if i2 == i {
                        d[i] -= lij * v;
                    } else {
                        low[i * bw + (i2 - i - 1)] -= lij * v;
                    }
                    factor_flops += 2;
                }
                low[j * bw + (i - j - 1)] = lij;
                factor_flops += 1;
            }
        }
        let mut solve_flops = 0u64;
        for j in 0..n {
            let hi = (j + bw).min(n.saturating_sub(1));
            solve_flops += 2 * (hi - j) as u64;
        }
        solve_flops += n as u64; // diagonal scaling
        solve_flops *= 2; // forward + backward sweeps
        Ok(Self {
            n,
            bw,
            low,
            d,
            perm,
            solve_flops,
            factor_flops,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn factor_flops(&self) -> u64 {
        self.factor_flops
    }

    pub fn solve_flops(&self) -> u64 {
        self.solve_flops
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        assert_eq!(b.len(), self.n);
        let mut y = DVector::zeros(self.n);
        for k in 0..self.n {
            y[k] = b[self.perm[k]];
        }
        // forward: L y' = y
        for j in 0..self.n {
            let hi = (j + self.bw).min(self.n.saturating_sub(1));
            let yj = y[j];
            for i in (j + 1)..=hi {
                let l = self.low[j * self.bw + (i - j - 1)];
                if l != T::zero() {
                    y[i] -= l * yj;
                }
            }
        }
        // diagonal
        for j in 0..self.n {
            y[j] /= self.d[j];
        }
        // backward: Lᵀ x = y
        for j in (0..self.n).rev() {
            let hi = (j + self.bw).min(self.n.saturating_sub(1));
            let mut acc = y[j];
            for i in (j + 1)..=hi {
                let l = self.low[j * self.bw + (i - j - 1)];
                if l != T::zero() {
                    acc -= l * y[i];
                }
            }
            y[j] = acc;
        }
        let mut x = DVector::zeros(self.n);
        for k in 0..self.n {
            x[self.perm[k]] = y[k];
        }
        x
    }
}

//! Extended three-block ADMM backend.
//!
//! For programs carrying the artificial-reference structure descriptor, the
//! stage-to-tail cost coupling is removed by giving every stage its own copy
//! `w_k` of the tail block with consensus `w_k = a` enforced through
//! multipliers: the first block solves a purely banded positive-definite
//! system (no Woodbury correction), the second a small dense system in the
//! tail, and the third clips the inequality copies. Programs without a
//! structure descriptor fall back to the two-block scheme with a banded
//! factorization of the whole KKT matrix.

use nalgebra::DVector;

use crate::formulations::StructuredProgram;
use crate::scalar::{convert, Scalar};
use crate::sparse::SparseMatrix;

use super::admm::{admm_core, LinearChoice};
use super::banded::BandedFactor;
use super::{LinearPath, SolveResult, SolveStatus, SolverError, SolverSettings, WorkStats};

const SIGMA: f64 = 1e-6;

/// Three-block extended ADMM: banded stage subproblem, dense tail
/// subproblem, clip step; same convergence contract as [`super::admm_qp`].
pub fn admm_qp_extended<T: Scalar>(
    prog: &StructuredProgram<T>,
    settings: &SolverSettings<T>,
    warm: Option<&SolveResult<T>>,
) -> Result<SolveResult<T>, SolverError> {
    if prog.structure.is_none() || !prog.cones.is_empty() {
        // no artificial-reference coupling: the whole KKT is already banded
        return admm_core(prog, settings, warm, LinearChoice::FullBanded);
    }
    consensus_eadmm(prog, settings, warm)
}

struct RowSplit {
    stage_rows: Vec<usize>,
    tail_rows: Vec<usize>,
    mixed_rows: Vec<usize>,
}

fn split_rows<T: Scalar>(a: &SparseMatrix<T>, tail: &std::ops::Range<usize>) -> RowSplit {
    let mut s = RowSplit {
        stage_rows: Vec::new(),
        tail_rows: Vec::new(),
        mixed_rows: Vec::new(),
    };
    for i in 0..a.nrows() {
        let mut touches_stage = false;
        let mut touches_tail = false;
        for (j, _) in a.row(i) {
            if tail.contains(&j) {
                touches_tail = true;
            } else {
                touches_stage = true;
            }
        }
        match (touches_stage, touches_tail) {
            (false, true) => s.tail_rows.push(i),
            (true, true) => s.mixed_rows.push(i),
            _ => s.stage_rows.push(i),
        }
    }
    s
}

fn select_rows<T: Scalar>(
    a: &SparseMatrix<T>,
    rows: &[usize],
    cols: std::ops::Range<usize>,
) -> SparseMatrix<T> {
    let mut trips = Vec::new();
    for (new_i, &i) in rows.iter().enumerate() {
        for (j, v) in a.row(i) {
            if cols.contains(&j) {
                trips.push((new_i, j - cols.start, v));
            }
        }
    }
    SparseMatrix::from_triplets(rows.len(), cols.len(), &trips)
}

fn gather<T: Scalar>(v: &DVector<T>, rows: &[usize]) -> DVector<T> {
    DVector::from_fn(rows.len(), |k, _| v[rows[k]])
}

fn consensus_eadmm<T: Scalar>(
    prog: &StructuredProgram<T>,
    settings: &SolverSettings<T>,
    warm: Option<&SolveResult<T>>,
) -> Result<SolveResult<T>, SolverError> {
    let st = prog.structure.as_ref().expect("structure checked by caller");
    let tail = st.tail.clone();
    let n = prog.num_vars();
    let n_stage = tail.start;
    let m_tail = tail.len();
    let n_copies = st.stages.len();
    if tail.end != n || st.stages.iter().any(|r| r.len() != m_tail) {
        return Err(SolverError::UnsupportedStructure);
    }

    let in_split = split_rows(&prog.f, &tail);
    if !in_split.mixed_rows.is_empty() {
        return Err(SolverError::UnsupportedStructure);
    }
    // all equality rows are multiplier-driven couplings between z1 and the tail
    let a_s = {
        let rows: Vec<usize> = (0..prog.num_eq()).collect();
        select_rows(&prog.a_eq, &rows, 0..n_stage)
    };
    let a_t = {
        let rows: Vec<usize> = (0..prog.num_eq()).collect();
        select_rows(&prog.a_eq, &rows, tail.clone())
    };
    let b_eq = prog.b_eq.clone();
    let me = prog.num_eq();
    let f_s = select_rows(&prog.f, &in_split.stage_rows, 0..n_stage);
    let g_s = gather(&prog.g, &in_split.stage_rows);
    let f_t = select_rows(&prog.f, &in_split.tail_rows, tail.clone());
    let g_t = gather(&prog.g, &in_split.tail_rows);
    let mis = in_split.stage_rows.len();
    let mit = in_split.tail_rows.len();

    // cost split: per-stage coupling C_k, copy quadratic W_k = −sym(C_k),
    // residual tail quadratic D_rem = H_aa − Σ_k W_k
    let h = prog.h.to_dense();
    let h_aa = h
        .view((tail.start, tail.start), (m_tail, m_tail))
        .clone_owned();
    let mut couplings = Vec::with_capacity(n_copies);
    let mut w_blocks = Vec::with_capacity(n_copies);
    let mut d_rem = h_aa.clone();
    for srange in &st.stages {
        let c_k = h
            .view((srange.start, tail.start), (srange.len(), m_tail))
            .clone_owned();
        let w_k = -(&c_k + c_k.transpose()) * convert::<T>(0.5);
        d_rem -= &w_k;
        couplings.push(c_k);
        w_blocks.push(w_k);
    }
    if crate::design::min_symmetric_eigenvalue(&d_rem) < -1e-7 {
        return Err(SolverError::UnsupportedStructure);
    }

    let sigma = convert::<T>(SIGMA);
    let n1 = n_stage + n_copies * m_tail;
    let w_at = |k: usize| n_stage + k * m_tail;

    // factor both block matrices for a given penalty:
    //   M1 = H_ss + couplings + copy quadratics + σI + β(A_sᵀA_s + F_sᵀF_s + I on copies)
    //   M2 = D_rem + σI + β(A_tᵀA_t + F_tᵀF_t + N·I)
    let build = |beta: T| -> Result<
        (BandedFactor<T>, nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>),
        SolverError,
    > {
        let mut trips: Vec<(usize, usize, T)> = Vec::new();
        for (i, j, v) in prog.h.iter() {
            if i < n_stage && j < n_stage {
                trips.push((i, j, v));
            }
        }
        for (k, srange) in st.stages.iter().enumerate() {
            let c_k = &couplings[k];
            for i in 0..m_tail {
                for j in 0..m_tail {
                    let v = c_k[(i, j)];
                    if v != T::zero() {
                        trips.push((srange.start + i, w_at(k) + j, v));
                        trips.push((w_at(k) + j, srange.start + i, v));
                    }
                    let w = w_blocks[k][(i, j)];
                    if w != T::zero() && j <= i {
                        trips.push((w_at(k) + i, w_at(k) + j, w));
                        if i != j {
                            trips.push((w_at(k) + j, w_at(k) + i, w));
                        }
                    }
                }
            }
            for i in 0..m_tail {
                trips.push((w_at(k) + i, w_at(k) + i, beta));
            }
        }
        for i in 0..n1 {
            trips.push((i, i, sigma));
        }
        let add_normal = |mat: &SparseMatrix<T>, trips: &mut Vec<(usize, usize, T)>| {
            for r in 0..mat.nrows() {
                let row: Vec<(usize, T)> = mat.row(r).collect();
                for &(i, vi) in &row {
                    for &(j, vj) in &row {
                        trips.push((i, j, beta * vi * vj));
                    }
                }
            }
        };
        add_normal(&a_s, &mut trips);
        add_normal(&f_s, &mut trips);
        let factor1 = BandedFactor::factor(n1, &trips, None)?;

        let mut m2 = (d_rem.clone() + d_rem.transpose()) * convert::<T>(0.5);
        for i in 0..m_tail {
            m2[(i, i)] += sigma + beta * convert::<T>(n_copies as f64);
        }
        let a_t_dense = a_t.to_dense();
        let f_t_dense = f_t.to_dense();
        m2 += a_t_dense.transpose() * &a_t_dense * beta;
        m2 += f_t_dense.transpose() * &f_t_dense * beta;
        let scale = m2.amax();
        let m2_lu = m2.lu();
        let min_pivot = (0..m_tail)
            .map(|i| m2_lu.u()[(i, i)].abs())
            .fold(T::from_f64(f64::INFINITY).unwrap(), |a, b| a.min(b));
        if m_tail > 0 && min_pivot <= scale * T::default_epsilon() * convert(1e-2) {
            return Err(SolverError::SingularKkt);
        }
        Ok((factor1, m2_lu))
    };
    let mut beta = settings.rho;
    let (mut factor1, mut m2_lu) = build(beta)?;
    let mut setup_flops = factor1.factor_flops() + (m_tail as u64).pow(3) * 2 / 3;

    // state
    let q_s = DVector::from_fn(n_stage, |i, _| prog.q[i]);
    let q_a = DVector::from_fn(m_tail, |i, _| prog.q[tail.start + i]);
    let mut z1: DVector<T> = DVector::zeros(n1);
    let mut a_var: DVector<T> = DVector::zeros(m_tail);
    if let Some(w) = warm {
        if w.z.len() == n {
            for i in 0..n_stage {
                z1[i] = w.z[i];
            }
            for i in 0..m_tail {
                a_var[i] = w.z[tail.start + i];
            }
            for k in 0..n_copies {
                for i in 0..m_tail {
                    z1[w_at(k) + i] = a_var[i];
                }
            }
        }
    }
    let mut nu: DVector<T> = DVector::zeros(me);
    let mut mu_s: DVector<T> = DVector::zeros(mis);
    let mut mu_t: DVector<T> = DVector::zeros(mit);
    if let Some(w) = warm {
        if w.dual.len() == me + prog.num_ineq() {
            nu = w.dual.rows(0, me).clone_owned();
            for (k, &r) in in_split.stage_rows.iter().enumerate() {
                mu_s[k] = w.dual[me + r];
            }
            for (k, &r) in in_split.tail_rows.iter().enumerate() {
                mu_t[k] = w.dual[me + r];
            }
        }
    }
    let mut lambda: Vec<DVector<T>> = (0..n_copies).map(|_| DVector::zeros(m_tail)).collect();
    let mut v_s = DVector::from_fn(mis, |i, _| g_s[i].min(T::zero()));
    let mut v_t = DVector::from_fn(mit, |i, _| g_t[i].min(T::zero()));

    let mut status = SolveStatus::MaxIter;
    let mut iterations = settings.max_iter;
    let mut r_prim = T::zero();
    let mut r_dual = T::zero();
    let mut history = Vec::new();

    let stage_of = |z1v: &DVector<T>| z1v.rows(0, n_stage).clone_owned();

    for it in 0..settings.max_iter {
        // ---- block 1: stage variables + copies (banded solve)
        let mut lin = DVector::zeros(n1);
        for i in 0..n_stage {
            lin[i] = q_s[i] - sigma * z1[i];
        }
        for k in 0..n_copies {
            for i in 0..m_tail {
                lin[w_at(k) + i] =
                    -sigma * z1[w_at(k) + i] + beta * (-a_var[i] + lambda[k][i] / beta);
            }
        }
        // β A_sᵀ (A_t a − b + ν/β)
        let mut r_eq = a_t.matvec(&a_var) - &b_eq;
        for i in 0..me {
            r_eq[i] += nu[i] / beta;
        }
        let ats_r = a_s.matvec_transpose(&r_eq);
        for i in 0..n_stage {
            lin[i] += beta * ats_r[i];
        }
        // β F_sᵀ (−v_s + μ_s/β)
        let mut r_in = -&v_s;
        for i in 0..mis {
            r_in[i] += mu_s[i] / beta;
        }
        let fts_r = f_s.matvec_transpose(&r_in);
        for i in 0..n_stage {
            lin[i] += beta * fts_r[i];
        }
        z1 = factor1.solve(&(-lin));

        // ---- block 2: tail (small dense solve)
        let s_new = stage_of(&z1);
        let mut lin2 = q_a.clone() - &a_var * sigma;
        let mut r_eq2 = a_s.matvec(&s_new) - &b_eq;
        for i in 0..me {
            r_eq2[i] += nu[i] / beta;
        }
        lin2 += a_t.matvec_transpose(&r_eq2) * beta;
        for k in 0..n_copies {
            for i in 0..m_tail {
                lin2[i] += -beta * (z1[w_at(k) + i] + lambda[k][i] / beta);
            }
        }
        let mut r_in_t = -&v_t;
        for i in 0..mit {
            r_in_t[i] += mu_t[i] / beta;
        }
        lin2 += f_t.matvec_transpose(&r_in_t) * beta;
        a_var = m2_lu.solve(&(-lin2)).expect("factor verified at setup");

        // ---- block 3: clip the inequality copies
        let fs_s = f_s.matvec(&s_new);
        for i in 0..mis {
            v_s[i] = (fs_s[i] + mu_s[i] / beta).min(g_s[i]);
        }
        let ft_a = f_t.matvec(&a_var);
        for i in 0..mit {
            v_t[i] = (ft_a[i] + mu_t[i] / beta).min(g_t[i]);
        }

        // ---- dual ascent
        let eq_res = a_s.matvec(&s_new) + a_t.matvec(&a_var) - &b_eq;
        for i in 0..me {
            nu[i] += beta * eq_res[i];
        }
        let mut cons_worst = T::zero();
        for k in 0..n_copies {
            for i in 0..m_tail {
                let r = z1[w_at(k) + i] - a_var[i];
                lambda[k][i] += beta * r;
                cons_worst = cons_worst.max(r.abs());
            }
        }
        for i in 0..mis {
            mu_s[i] += beta * (fs_s[i] - v_s[i]);
        }
        for i in 0..mit {
            mu_t[i] += beta * (ft_a[i] - v_t[i]);
        }

        // ---- residuals on the original problem
        let mut z = DVector::zeros(n);
        for i in 0..n_stage {
            z[i] = z1[i];
        }
        for i in 0..m_tail {
            z[tail.start + i] = a_var[i];
        }
        let mut rp = eq_res.amax().max(cons_worst);
        let fz = prog.f.matvec(&z);
        for i in 0..prog.num_ineq() {
            rp = rp.max(fz[i] - prog.g[i]);
        }
        r_prim = rp;
        let mut mu_full = DVector::zeros(prog.num_ineq());
        for (k, &r) in in_split.stage_rows.iter().enumerate() {
            mu_full[r] = mu_s[k];
        }
        for (k, &r) in in_split.tail_rows.iter().enumerate() {
            mu_full[r] = mu_t[k];
        }
        let grad = prog.h.matvec(&z)
            + &prog.q
            + prog.a_eq.matvec_transpose(&nu)
            + prog.f.matvec_transpose(&mu_full);
        r_dual = grad.amax();
        let eps_p = settings.eps_abs
            + settings.eps_rel * fz.amax().max(prog.b_eq.amax());
        let eps_d = settings.eps_abs
            + settings.eps_rel
                * prog
                    .h
                    .matvec(&z)
                    .amax()
                    .max(prog.q.amax())
                    .max(prog.a_eq.matvec_transpose(&nu).amax());
        if settings.record_history && it % 10 == 0 {
            history.push((it, r_prim, r_dual, prog.objective(&z)));
        }
        if r_prim <= eps_p && r_dual <= eps_d {
            status = SolveStatus::Solved;
            iterations = it + 1;
            break;
        }

        if settings.adaptive_rho && it % 200 == 199 {
            let scale_p = eps_p.max(T::default_epsilon());
            let scale_d = eps_d.max(T::default_epsilon());
            let ratio = crate::scalar::to_f64(
                (r_prim / scale_p) / (r_dual / scale_d).max(T::default_epsilon()),
            );
            if ratio > 10.0 || ratio < 0.1 {
                beta = (beta * convert(ratio.sqrt().clamp(0.2, 5.0)))
                    .max(convert(1e-6))
                    .min(convert(1e6));
                let rebuilt = build(beta)?;
                factor1 = rebuilt.0;
                m2_lu = rebuilt.1;
                setup_flops += factor1.factor_flops() + (m_tail as u64).pow(3) * 2 / 3;
            }
        }
    }

    let mut z = DVector::zeros(n);
    for i in 0..n_stage {
        z[i] = z1[i];
    }
    for i in 0..m_tail {
        z[tail.start + i] = a_var[i];
    }
    let mut dual = DVector::zeros(me + prog.num_ineq());
    for i in 0..me {
        dual[i] = nu[i];
    }
    for (k, &r) in in_split.stage_rows.iter().enumerate() {
        dual[me + r] = mu_s[k];
    }
    for (k, &r) in in_split.tail_rows.iter().enumerate() {
        dual[me + r] = mu_t[k];
    }
    let per_iter = factor1.solve_flops() + (m_tail as u64).pow(2) * 2;
    Ok(SolveResult {
        objective: prog.objective(&z),
        z,
        dual,
        status,
        iterations,
        primal_residual: r_prim,
        dual_residual: r_dual,
        work: WorkStats {
            setup_flops,
            per_iter_solve_flops: per_iter,
            iterations,
        },
        path: LinearPath::Banded,
        history,
    })
}

//! Acceptance suite: one test per claim, each printing a pass line with the
//! measured quantity. Run serially for faithful timing:
//! `cargo test --test acceptance -- --test-threads=1`

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::RngExt;

use mpct::design::{DesignWeights, TrackingDesign};
use mpct::formulations::{
    build_equ_mpct, economic_setpoint, optimal_periodic_reference,
    optimal_reachable_reference, ControllerSpec, EconomicCost,
    OffsetCost, ProgramKind, StructuredProgram, VarLayout, Variant,
};
use mpct::model::{LinearSystem, Polytope, ReferenceSchedule, Zonotope};
use mpct::sampling;
use mpct::setops::{invariant_set_for_tracking, rpi_outer_approx, terminal_set_for_target, tighten};
use mpct::sim::{
    convergence_report, doa_scan, run_closed_loop, ConvergenceTarget, GridSpec, SolveBackend,
};
use mpct::solver::{
    admm_qp, admm_qp_extended, banded::BandedFactor, dense_reference_solve,
    woodbury::semibanded_solve, SolveStatus, SolverSettings,
};
use mpct::sparse::SparseMatrix;

fn example_system() -> LinearSystem<f64> {
    LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.5, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::from_row_slice(1, 1, &[0.0]),
    )
    .unwrap()
}

fn example_constraints() -> Polytope<f64> {
    Polytope::box_set(&[10.0, 2.0, 0.5])
}

fn example_design(n: usize) -> TrackingDesign<f64> {
    let sys = example_system();
    let mut weights = DesignWeights::quadratic(
        DMatrix::identity(2, 2) * 100.0,
        DMatrix::from_row_slice(1, 1, &[1.0]),
    );
    weights.s = Some(DMatrix::from_row_slice(1, 1, &[1000.0]));
    TrackingDesign::synthesize(&sys, weights, n, 0.99).unwrap()
}

fn lin_mpct_spec() -> ControllerSpec<f64> {
    let sys = example_system();
    let design = example_design(5);
    let z = example_constraints();
    let xt = invariant_set_for_tracking(&sys, &design.k, &z, 0.99, 50)
        .unwrap()
        .set;
    ControllerSpec {
        sys,
        design,
        z,
        variant: Variant::LinMpct { xt },
    }
}

fn tight_settings() -> SolverSettings<f64> {
    SolverSettings {
        eps_abs: 1e-10,
        eps_rel: 1e-10,
        ..Default::default()
    }
}

#[test]
fn criterion_01_domain_of_attraction_superset() {
    let start = Instant::now();
    let sys = example_system();
    let design = example_design(5);
    let z = example_constraints();
    let schedule = ReferenceSchedule::constant(DVector::from_vec(vec![0.0]));

    let (xr, ur) = mpct::formulations::steady_state_for_ref(
        &sys,
        &z,
        design.sigma,
        &DVector::from_vec(vec![0.0]),
    )
    .unwrap();
    let xf = terminal_set_for_target(&sys, &design.k, &z, &xr, &ur, 50)
        .unwrap()
        .set;
    let stan = ControllerSpec {
        sys: sys.clone(),
        design: design.clone(),
        z: z.clone(),
        variant: Variant::Stan { xf },
    };
    let lin = lin_mpct_spec();
    let grid = GridSpec {
        dims: vec![(-10.0, 10.0, 0.25), (-2.0, 2.0, 0.25)],
    };
    let stan_map = doa_scan(&stan, &schedule, &grid, 1).unwrap();
    let lin_map = doa_scan(&lin, &schedule, &grid, 1).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    assert!(
        lin_map.covers(&stan_map),
        "a classical-MPC-feasible grid point was tracking-infeasible"
    );
    assert!(
        lin_map.feasible_count() > stan_map.feasible_count(),
        "tracking count {} not strictly larger than classical {}",
        lin_map.feasible_count(),
        stan_map.feasible_count()
    );
    assert!(elapsed < 180.0, "scan took {elapsed:.1}s, budget is 180s");
    println!(
        "criterion 1 PASS: tracking DoA {} ⊋ classical DoA {} over {} grid points ({elapsed:.1}s single-threaded)",
        lin_map.feasible_count(),
        stan_map.feasible_count(),
        lin_map.points.len()
    );
}

#[test]
fn criterion_02_reachable_convergence() {
    let spec = lin_mpct_spec();
    let schedule = ReferenceSchedule::constant(DVector::from_vec(vec![5.0]));
    let trace = run_closed_loop(
        &spec,
        &DVector::zeros(2),
        &schedule,
        100,
        None,
        &tight_settings(),
        SolveBackend::Admm,
    )
    .unwrap();
    assert!(trace.infeasible_at.is_none());
    let target = ConvergenceTarget::Point(DVector::from_vec(vec![5.0]));
    let report = convergence_report(&trace, &spec.z, &target, 1e-3);
    let settled = report.settling_time.expect("never settled");
    assert!(settled < 100, "settled only at step {settled}");
    assert!(report.terminal_offset <= 1e-3);
    assert_eq!(report.violation_count, 0);
    println!(
        "criterion 2 PASS: |y - 5| ≤ 1e-3 from step {settled}, terminal offset {:.2e}",
        report.terminal_offset
    );
}

#[test]
fn criterion_03_unreachable_convergence_to_the_oracle() {
    let spec = lin_mpct_spec();
    let yr = DVector::from_vec(vec![12.0]);
    // independent oracle: offset-cost minimizer over the reachable outputs
    let ya = optimal_reachable_reference(
        &spec.sys,
        &spec.z,
        spec.design.sigma,
        &yr,
        &OffsetCost::Quadratic(spec.design.s.clone()),
    )
    .unwrap();
    assert!(
        (ya[0] - 9.9).abs() <= 1e-6,
        "oracle expected 9.9, got {}",
        ya[0]
    );
    let schedule = ReferenceSchedule::constant(yr);
    let trace = run_closed_loop(
        &spec,
        &DVector::zeros(2),
        &schedule,
        200,
        None,
        &tight_settings(),
        SolveBackend::Admm,
    )
    .unwrap();
    let report = convergence_report(
        &trace,
        &spec.z,
        &ConvergenceTarget::Point(ya.clone()),
        1e-3,
    );
    assert!(trace.infeasible_at.is_none());
    assert!(
        report.terminal_offset <= 1e-3,
        "terminal offset {} vs oracle {}",
        report.terminal_offset,
        ya[0]
    );
    println!(
        "criterion 3 PASS: unreachable yr = 12 converges to oracle y° = {:.4} (offset {:.2e})",
        ya[0], report.terminal_offset
    );
}

fn random_switch_schedule(switches: usize, every: usize, seed: u64) -> ReferenceSchedule<f64> {
    let mut rng = sampling::rng(seed);
    let mut steps = Vec::new();
    for k in 0..switches {
        let y = rng.random_range(-15.0..15.0);
        steps.push((k * every, DVector::from_vec(vec![y])));
    }
    ReferenceSchedule::PiecewiseConstant(steps)
}

#[test]
fn criterion_04_recursive_feasibility_stress() {
    let schedule = random_switch_schedule(50, 10, 2024);
    let lin = lin_mpct_spec();
    let trace = run_closed_loop(
        &lin,
        &DVector::from_vec(vec![-5.0, 1.0]),
        &schedule,
        500,
        None,
        &tight_settings(),
        SolveBackend::Admm,
    )
    .unwrap();
    assert!(
        trace.infeasible_at.is_none(),
        "tracking MPC infeasible at {:?}",
        trace.infeasible_at
    );
    let equ = ControllerSpec {
        sys: lin.sys.clone(),
        design: lin.design.clone(),
        z: lin.z.clone(),
        variant: Variant::EquMpct,
    };
    let trace_equ = run_closed_loop(
        &equ,
        &DVector::from_vec(vec![-5.0, 1.0]),
        &schedule,
        500,
        None,
        &tight_settings(),
        SolveBackend::Admm,
    )
    .unwrap();
    assert!(
        trace_equ.infeasible_at.is_none(),
        "terminal-equality variant infeasible at {:?}",
        trace_equ.infeasible_at
    );
    println!(
        "criterion 4 PASS: 50 random reference switches, 500 steps, zero infeasible solves (both variants)"
    );
}

fn robust_spec() -> (ControllerSpec<f64>, Zonotope<f64>) {
    let sys = example_system();
    let design = example_design(5);
    let z = example_constraints();
    let w = Zonotope::box_set(DVector::zeros(2), &[0.02, 0.02]);
    let a_k = sys.a() + sys.b() * &design.k_tube;
    let phi = rpi_outer_approx(&a_k, &w, 0.1, 200).unwrap();
    let z_tight = tighten(&z, &phi.set, &design.k_tube).unwrap();
    let xt_tight = invariant_set_for_tracking(&sys, &design.k, &z_tight, 0.99, 50)
        .unwrap()
        .set;
    (
        ControllerSpec {
            sys,
            design,
            z,
            variant: Variant::RobustMpct {
                phi: phi.set,
                z_tight,
                xt_tight,
            },
        },
        w,
    )
}

#[test]
fn criterion_05_robust_tube_guarantees() {
    let (spec, w) = robust_spec();
    let (phi, z_tight) = match &spec.variant {
        Variant::RobustMpct { phi, z_tight, .. } => (phi.clone(), z_tight.clone()),
        _ => unreachable!(),
    };
    let yr = DVector::from_vec(vec![5.0]);
    let ya = optimal_reachable_reference(
        &spec.sys,
        &z_tight,
        spec.design.sigma,
        &yr,
        &OffsetCost::Quadratic(spec.design.s.clone()),
    )
    .unwrap();
    let out_map = spec.sys.c() + spec.sys.d() * &spec.design.k_tube;
    let target = ConvergenceTarget::Set {
        center: ya.clone(),
        tube: phi.linear_map(&out_map),
    };
    let schedule = ReferenceSchedule::constant(yr);
    let settings = tight_settings();
    let mut worst_margin: f64 = 0.0;
    for seed in 0..200u64 {
        let trace = run_closed_loop(
            &spec,
            &DVector::zeros(2),
            &schedule,
            100,
            Some((&w, seed)),
            &settings,
            SolveBackend::Admm,
        )
        .unwrap();
        assert!(
            trace.infeasible_at.is_none(),
            "seed {seed}: infeasible at {:?}",
            trace.infeasible_at
        );
        assert_eq!(
            trace.violation_count(&spec.z, 1e-9),
            0,
            "seed {seed}: constraint violated"
        );
        let report = convergence_report(&trace, &spec.z, &target, 1e-3);
        assert!(
            report.terminal_offset <= 1e-6,
            "seed {seed}: set-distance margin {}",
            report.terminal_offset
        );
        worst_margin = worst_margin.max(report.terminal_offset);
    }
    println!(
        "criterion 5 PASS: 200 disturbance sequences × 100 steps, zero violations, worst terminal set margin {worst_margin:.2e}"
    );
}

#[test]
fn criterion_06_periodic_tracking() {
    let sys = example_system();
    let design = example_design(5);
    let z = example_constraints();
    let tau = 20usize;
    // a reachable periodic target: project a raw sine onto the reachable
    // trajectory set with the independent periodic oracle
    let raw: Vec<DVector<f64>> = (0..tau)
        .map(|k| {
            DVector::from_vec(vec![
                1.9 * (2.0 * std::f64::consts::PI * k as f64 / tau as f64).sin(),
            ])
        })
        .collect();
    let reachable =
        optimal_periodic_reference(&sys, &z, design.sigma, tau, &raw, &design.s).unwrap();
    let spec = ControllerSpec {
        sys: sys.clone(),
        design: design.clone(),
        z: z.clone(),
        variant: Variant::PeriodicMpct { period: tau },
    };
    let schedule = ReferenceSchedule::Periodic {
        period: tau,
        samples: reachable.clone(),
    };
    let steps = 5 * tau;
    let trace = run_closed_loop(
        &spec,
        &DVector::zeros(2),
        &schedule,
        steps,
        None,
        &tight_settings(),
        SolveBackend::Admm,
    )
    .unwrap();
    assert!(trace.infeasible_at.is_none());
    let mut worst: f64 = 0.0;
    for (t, s) in trace.steps.iter().enumerate().skip(3 * tau) {
        worst = worst.max((&s.y - &reachable[t % tau]).norm());
    }
    assert!(worst <= 1e-3, "tracking error {worst} after 3 periods");

    // unreachable square wave: converge to the periodic-oracle minimizer
    let square: Vec<DVector<f64>> = (0..tau)
        .map(|k| DVector::from_vec(vec![if k < tau / 2 { 8.0 } else { -8.0 }]))
        .collect();
    let oracle =
        optimal_periodic_reference(&sys, &z, design.sigma, tau, &square, &design.s).unwrap();
    let schedule2 = ReferenceSchedule::Periodic {
        period: tau,
        samples: square,
    };
    let trace2 = run_closed_loop(
        &spec,
        &DVector::zeros(2),
        &schedule2,
        8 * tau,
        None,
        &tight_settings(),
        SolveBackend::Admm,
    )
    .unwrap();
    assert!(trace2.infeasible_at.is_none());
    let mut worst2: f64 = 0.0;
    for (t, s) in trace2.steps.iter().enumerate().skip(7 * tau) {
        worst2 = worst2.max((&s.y - &oracle[t % tau]).norm());
    }
    assert!(worst2 <= 1e-3, "distance to periodic oracle {worst2}");
    println!(
        "criterion 6 PASS: reachable τ=20 target tracked to {worst:.2e}; unreachable target converges to the oracle within {worst2:.2e}"
    );
}

/// Harmonic-consistency system: constraint outputs (x₁, x₂, u).
fn hmpc_system() -> LinearSystem<f64> {
    LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.5, 1.0]),
        DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]),
    )
    .unwrap()
}

#[test]
fn criterion_07_hmpc_consistency() {
    let sys = hmpc_system();
    let omega = 0.3f64;
    // feasible harmonic parameter sets: null space of the harmonic equalities
    let nx = 2;
    let nu = 1;
    let dim = 3 * (nx + nu);
    let mut eqs = DMatrix::<f64>::zeros(3 * nx, dim);
    // blocks: (xe, xs, xc, ue, us, uc)
    let a = sys.a().clone();
    let b = sys.b().clone();
    let eye = DMatrix::<f64>::identity(nx, nx);
    let (sw, cw) = (omega.sin(), omega.cos());
    eqs.view_mut((0, 0), (nx, nx)).copy_from(&(&a - &eye));
    eqs.view_mut((0, 3 * nx), (nx, nu)).copy_from(&b);
    eqs.view_mut((nx, nx), (nx, nx))
        .copy_from(&(&a - &eye * cw));
    eqs.view_mut((nx, 2 * nx), (nx, nx)).copy_from(&(&eye * sw));
    eqs.view_mut((nx, 3 * nx + nu), (nx, nu)).copy_from(&b);
    eqs.view_mut((2 * nx, nx), (nx, nx))
        .copy_from(&(-&eye * sw));
    eqs.view_mut((2 * nx, 2 * nx), (nx, nx))
        .copy_from(&(&a - &eye * cw));
    eqs.view_mut((2 * nx, 3 * nx + 2 * nu), (nx, nu)).copy_from(&b);
    // null-space basis through the SVD of the projector
    let pinv = eqs.clone().pseudo_inverse(1e-12).unwrap();
    let projector = DMatrix::<f64>::identity(dim, dim) - &pinv * &eqs;
    let svd = projector.clone().svd(true, false);
    let u = svd.u.as_ref().unwrap();
    let basis: Vec<DVector<f64>> = (0..dim)
        .filter(|&i| svd.singular_values[i] > 0.5)
        .map(|i| u.column(i).clone_owned())
        .collect();
    assert!(!basis.is_empty());

    let horizon_check = 3 * (2.0 * std::f64::consts::PI / omega).ceil() as usize;
    let mut rng = sampling::rng(31);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut p = DVector::zeros(dim);
        for base in &basis {
            p += base * rng.random_range(-2.0..2.0);
        }
        let xe = p.rows(0, nx).clone_owned();
        let xs = p.rows(nx, nx).clone_owned();
        let xc = p.rows(2 * nx, nx).clone_owned();
        let ue = p.rows(3 * nx, nu).clone_owned();
        let us = p.rows(3 * nx + nu, nu).clone_owned();
        let uc = p.rows(3 * nx + 2 * nu, nu).clone_owned();
        let harmonic_x = |k: usize| {
            &xe + &xs * (omega * k as f64).sin() + &xc * (omega * k as f64).cos()
        };
        let harmonic_u = |k: usize| {
            &ue + &us * (omega * k as f64).sin() + &uc * (omega * k as f64).cos()
        };
        for k in 0..horizon_check {
            let expect = sys.a() * harmonic_x(k) + sys.b() * harmonic_u(k);
            worst = worst.max((harmonic_x(k + 1) - expect).amax());
        }
    }
    assert!(worst <= 1e-10, "harmonic dynamics identity residual {worst}");

    // HMPC and the terminal-equality variant converge to the same steady state
    let mut weights = DesignWeights::quadratic(
        DMatrix::identity(2, 2) * 100.0,
        DMatrix::from_row_slice(1, 1, &[1.0]),
    );
    weights.s = Some(DMatrix::identity(3, 3));
    weights.t_offset = Some(DMatrix::identity(2, 2) * 1000.0);
    weights.su_offset = Some(DMatrix::from_row_slice(1, 1, &[1000.0]));
    weights.t_h = Some(DMatrix::identity(2, 2) * 100.0);
    weights.s_h = Some(DMatrix::from_row_slice(1, 1, &[100.0]));
    let design = TrackingDesign::synthesize(&sys, weights, 5, 0.99)
        .unwrap()
        .with_omega(omega);
    let z = example_constraints();
    let hmpc = ControllerSpec {
        sys: sys.clone(),
        design: design.clone(),
        z: z.clone(),
        variant: Variant::Hmpc {
            y_low: DVector::from_vec(vec![-10.0, -2.0, -0.5]),
            y_high: DVector::from_vec(vec![10.0, 2.0, 0.5]),
        },
    };
    let equ = ControllerSpec {
        sys: sys.clone(),
        design,
        z,
        variant: Variant::EquMpct,
    };
    let yr = DVector::from_vec(vec![5.0, 0.0, 0.0]);
    let schedule = ReferenceSchedule::constant(yr);
    let run = |spec: &ControllerSpec<f64>| {
        run_closed_loop(
            spec,
            &DVector::zeros(2),
            &schedule,
            250,
            None,
            &tight_settings(),
            SolveBackend::Admm,
        )
        .unwrap()
    };
    let t_h = run(&hmpc);
    let t_e = run(&equ);
    assert!(t_h.infeasible_at.is_none() && t_e.infeasible_at.is_none());
    let gap = (&t_h.x_final - &t_e.x_final).amax();
    assert!(gap <= 1e-3, "steady-state gap {gap}");
    println!(
        "criterion 7 PASS: harmonic identity residual {worst:.2e} over 100 samples; HMPC/terminal-equality steady-state gap {gap:.2e}"
    );
}

fn random_strictly_convex_qp(dim: usize, seed: u64) -> StructuredProgram<f64> {
    let mut rng = sampling::rng(seed);
    let m_eq = dim / 4;
    let m_in = dim;
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let h = &a * a.transpose() / dim as f64
        + DMatrix::identity(dim, dim) * (0.5 + rng.random_range(0.0..1.0));
    let q = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
    let aeq = DMatrix::from_fn(m_eq, dim, |_, _| rng.random_range(-1.0..1.0));
    let x_feas = DVector::from_fn(dim, |_, _| rng.random_range(-0.5..0.5));
    let beq = &aeq * &x_feas;
    let fmat = DMatrix::from_fn(m_in, dim, |_, _| rng.random_range(-1.0..1.0));
    let slack = DVector::from_fn(m_in, |_, _| rng.random_range(0.1..1.0));
    let g = &fmat * &x_feas + slack;
    let mut layout = VarLayout::new();
    layout.push("z", dim);
    StructuredProgram {
        kind: ProgramKind::Qp,
        h: SparseMatrix::from_dense(&h),
        q,
        c: 0.0,
        a_eq: SparseMatrix::from_dense(&aeq),
        b_eq: beq,
        f: SparseMatrix::from_dense(&fmat),
        g,
        cones: Vec::new(),
        structure: None,
        layout,
    }
}

fn equ_instance(n_horizon: usize, seed: u64) -> StructuredProgram<f64> {
    let sys = example_system();
    let design = example_design(n_horizon);
    let z = example_constraints();
    let mut rng = sampling::rng(seed);
    let x0 = DVector::from_vec(vec![
        rng.random_range(-4.0..4.0),
        rng.random_range(-1.0..1.0),
    ]);
    let xr = DVector::from_vec(vec![rng.random_range(-8.0..8.0), 0.0]);
    build_equ_mpct(&sys, &design, &z, &x0, &xr, &DVector::zeros(1)).unwrap()
}

#[test]
fn criterion_08_solver_equivalence() {
    // 100 random strictly convex QPs against the independent backend
    let mut worst_obj: f64 = 0.0;
    let mut worst_sol: f64 = 0.0;
    for seed in 0..100u64 {
        let dim = 20 + (seed as usize * 7) % 181; // 20..=200
        let prog = random_strictly_convex_qp(dim, 500 + seed);
        let admm = admm_qp(&prog, &SolverSettings::default(), None).unwrap();
        let refr = dense_reference_solve(&prog).unwrap();
        assert_eq!(admm.status, SolveStatus::Solved, "seed {seed} dim {dim}");
        let obj_gap = (admm.objective - refr.objective).abs();
        let sol_gap = (&admm.z - &refr.z).amax();
        assert!(obj_gap <= 1e-5, "seed {seed}: objective gap {obj_gap}");
        assert!(sol_gap <= 1e-4, "seed {seed}: solution gap {sol_gap}");
        worst_obj = worst_obj.max(obj_gap);
        worst_sol = worst_sol.max(sol_gap);
    }

    // Woodbury linear solves: relative residual ≤ 1e-9
    let mut rng = sampling::rng(99);
    let mut worst_res: f64 = 0.0;
    for _ in 0..20 {
        let n = 60;
        let bw = 5usize;
        let r = 1 + (rng.random_range(0.0..1.0) * 19.0) as usize; // ≤ 20
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        for i in 0..n {
            trips.push((i, i, 8.0 + rng.random_range(0.0..1.0)));
            for j in i.saturating_sub(bw)..i {
                let v = rng.random_range(-0.5..0.5);
                trips.push((i, j, v));
                trips.push((j, i, v));
            }
        }
        let factor = BandedFactor::factor(n, &trips, None).unwrap();
        let u = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
        let v = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let x = semibanded_solve(&factor, &u, &v, &b).unwrap();
        let mut dense = DMatrix::zeros(n, n);
        for (i, j, val) in &trips {
            dense[(*i, *j)] += val;
        }
        dense += &u * v.transpose();
        let res = (&dense * &x - &b).amax() / b.amax().max(1.0);
        assert!(res <= 1e-9, "woodbury residual {res}");
        worst_res = worst_res.max(res);
    }

    // extended backend agrees with the standard backend on 50 instances
    let tight = SolverSettings {
        eps_abs: 1e-10,
        eps_rel: 1e-10,
        max_iter: 200_000,
        ..Default::default()
    };
    let mut worst_gap: f64 = 0.0;
    for seed in 0..50u64 {
        let prog = equ_instance(6 + (seed as usize % 7), 900 + seed);
        let standard = admm_qp(&prog, &tight, None).unwrap();
        let extended = admm_qp_extended(&prog, &tight, None).unwrap();
        assert_eq!(standard.status, SolveStatus::Solved, "seed {seed}");
        assert_eq!(extended.status, SolveStatus::Solved, "seed {seed}");
        let gap = (&standard.z - &extended.z).amax();
        assert!(gap <= 1e-7, "seed {seed}: backend gap {gap}");
        worst_gap = worst_gap.max(gap);
    }
    println!(
        "criterion 8 PASS: 100 QPs obj gap ≤ {worst_obj:.2e}, sol gap ≤ {worst_sol:.2e}; woodbury residual ≤ {worst_res:.2e}; backend gap ≤ {worst_gap:.2e} on 50 instances"
    );
}

#[test]
fn criterion_09_structure_scaling() {
    let horizons = [10usize, 20, 40, 80, 160];
    let bench = SolverSettings {
        max_iter: 30,
        eps_abs: 1e-14,
        eps_rel: 1e-14,
        adaptive_rho: false,
        ..Default::default()
    };
    let mut rows = Vec::new();
    for &n in &horizons {
        let prog = equ_instance(n, 1);
        let structured = admm_qp(&prog, &bench, None).unwrap();
        let dense = admm_qp(
            &prog,
            &SolverSettings {
                force_dense: true,
                ..bench
            },
            None,
        )
        .unwrap();
        let kkt_dim = (prog.num_vars() + prog.num_eq() + prog.num_ineq()) as u64;
        // dense back-substitution is quadratic in the KKT dimension by
        // construction; assert it exactly so the fit below is interpretable
        assert_eq!(dense.work.per_iter_solve_flops, 2 * kkt_dim * kkt_dim);
        rows.push((
            n as f64,
            structured.work.per_iter_solve_flops as f64,
            dense.work.per_iter_solve_flops as f64,
        ));
    }
    let fit = |sel: fn(&(f64, f64, f64)) -> f64| {
        // least-squares slope of log(flops) against log(N)
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.0.ln(), sel(r).ln())).collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    };
    let structured_exp = fit(|r| r.1);
    let dense_exp = fit(|r| r.2);
    assert!(
        (structured_exp - 1.0).abs() <= 0.15,
        "structured exponent {structured_exp}"
    );
    // the dense exponent approaches 2 from below on finite horizons because
    // the KKT dimension carries an additive constant
    assert!(dense_exp >= 1.8, "dense exponent {dense_exp}");
    assert!(dense_exp > structured_exp + 0.5);
    println!(
        "criterion 9 PASS: per-iteration work exponents — structured {structured_exp:.3}, dense {dense_exp:.3} (exactly quadratic in the KKT dimension)"
    );
}

#[test]
fn criterion_10_design_certificates() {
    let sys = example_system();
    let design = example_design(5);
    let z = example_constraints();
    let xt = invariant_set_for_tracking(&sys, &design.k, &z, 0.99, 50).unwrap();
    assert!(xt.converged);
    let report = mpct::design::validate_assumption1(&sys, &design, Some(&xt));
    assert!(report.certified, "checks: {:?}", report.checks);

    // one-step invariance on 10^4 sampled points
    let samples = xt.set.sample(10_000, 2718).unwrap();
    let a_k = sys.a() + sys.b() * &design.k;
    for p in &samples {
        let x = p.rows(0, 2).clone_owned();
        let xa = p.rows(2, 2).clone_owned();
        let ua = p.rows(4, 1).clone_owned();
        let xp = &a_k * &x - sys.b() * &design.k * &xa + sys.b() * &ua;
        let mut zp = p.clone();
        zp.rows_mut(0, 2).copy_from(&xp);
        assert!(xt.set.contains(&zp, 1e-7), "invariance violated");
    }

    // RPI containment at all generator extreme points
    let w = Zonotope::box_set(DVector::zeros(2), &[0.02, 0.02]);
    let rpi = rpi_outer_approx(&a_k, &w, 0.1, 200).unwrap();
    for e in rpi.set.extreme_points(1 << 14) {
        for wv in w.extreme_points(16) {
            let next = &a_k * &e + &wv;
            assert!(rpi.set.contains(&next, 1e-7).unwrap(), "RPI violated");
        }
    }
    println!(
        "criterion 10 PASS: validator certified; one-step invariance on 10^4 samples; RPI holds at {} extreme-point pairs",
        rpi.set.extreme_points(1 << 14).len() * 16
    );
}

#[test]
fn criterion_11_economic_convergence() {
    let sys = example_system();
    let design = example_design(5)
        .with_gamma(10.0)
        .with_terminal_offsets(DMatrix::identity(2, 2) * 10.0, DMatrix::from_row_slice(1, 1, &[10.0]));
    let z = example_constraints();
    // quadratic economic cost (x₁ − θ)² with interior minimizer θ = 7
    let mut h = DMatrix::zeros(3, 3);
    h[(0, 0)] = 2.0;
    let econ = EconomicCost {
        hessian: h,
        theta_map: DMatrix::from_row_slice(3, 1, &[-2.0, 0.0, 0.0]),
        linear: DVector::zeros(3),
    };
    let theta = DVector::from_vec(vec![7.0]);
    let setpoint = economic_setpoint(&sys, &z, design.sigma, &econ, &theta).unwrap();
    assert!((setpoint.0[0] - 7.0).abs() <= 1e-6);
    let mut spec = ControllerSpec {
        sys: sys.clone(),
        design,
        z: z.clone(),
        variant: Variant::EconMpct {
            econ,
            theta,
            setpoint: setpoint.clone(),
        },
    };
    let schedule = ReferenceSchedule::constant(DVector::zeros(1));
    let trace = run_closed_loop(
        &spec,
        &DVector::zeros(2),
        &schedule,
        150,
        None,
        &tight_settings(),
        SolveBackend::Admm,
    )
    .unwrap();
    assert!(trace.infeasible_at.is_none());
    let x_gap = (&trace.x_final - &setpoint.0).amax();
    assert!(x_gap <= 1e-3, "distance to the economic setpoint {x_gap}");

    // online θ change: re-solve the setpoint, continue from the final state
    spec.update_theta(DVector::from_vec(vec![3.0])).unwrap();
    let new_setpoint = match &spec.variant {
        Variant::EconMpct { setpoint, .. } => setpoint.clone(),
        _ => unreachable!(),
    };
    assert!((new_setpoint.0[0] - 3.0).abs() <= 1e-6);
    let trace2 = run_closed_loop(
        &spec,
        &trace.x_final,
        &schedule,
        150,
        None,
        &tight_settings(),
        SolveBackend::Admm,
    )
    .unwrap();
    assert!(
        trace2.infeasible_at.is_none(),
        "infeasible after the parameter change at {:?}",
        trace2.infeasible_at
    );
    let x_gap2 = (&trace2.x_final - &new_setpoint.0).amax();
    assert!(x_gap2 <= 1e-3, "post-change setpoint distance {x_gap2}");
    println!(
        "criterion 11 PASS: converges to the economic setpoint within {x_gap:.2e}; θ change keeps all solves feasible (post-change gap {x_gap2:.2e})"
    );
}

// helper used by criterion 11
trait WithOffsets {
    fn with_terminal_offsets(self, t: DMatrix<f64>, s_u: DMatrix<f64>) -> Self;
}

impl WithOffsets for TrackingDesign<f64> {
    fn with_terminal_offsets(mut self, t: DMatrix<f64>, s_u: DMatrix<f64>) -> Self {
        self.t_offset = t;
        self.su_offset = s_u;
        self
    }
}

//! `mpct` — batch front door for the tracking-MPC library.
//!
//! Subcommands: `design` (synthesis + validation artifacts), `simulate`
//! (closed-loop trace CSV + convergence report), `doa` (domain-of-attraction
//! scans), `solve` (one program, optionally dumped as JSON) and `bench`
//! (structured-vs-dense per-iteration work scaling).

mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use nalgebra::DVector;

use mpct::formulations::{
    economic_setpoint, optimal_periodic_reference, optimal_reachable_reference, EconomicCost,
    FormulationTag, OffsetCost, Variant,
};
use mpct::model::ReferenceSchedule;
use mpct::schema::{vector_from_json, ProgramJson};
use mpct::sim::{
    convergence_report, doa_scan, run_closed_loop, ConvergenceTarget, GridSpec, SolveBackend,
};
use mpct::solver::{admm_qp, admm_qp_extended, SolveStatus};

use pipeline::{write_atomic, Pipeline};

#[derive(Parser)]
#[command(name = "mpct", version, about = "MPC-for-tracking toolbox")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize design ingredients, compute invariant sets, run the
    /// validator. Exit code 2 flags an uncertified design.
    Design {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the closed loop for every listed formulation; writes one trace
    /// CSV and one convergence JSON per controller.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Also dump each step-0 program as JSON.
        #[arg(long)]
        dump_qp: bool,
    },
    /// Domain-of-attraction scan over the configured grid for every listed
    /// formulation, plus a summary with counts and the subset check.
    Doa {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build and solve a single program at the configured initial state.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dump_qp: bool,
    },
    /// Per-iteration work of the structured vs dense solver paths over a
    /// range of horizons.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated horizon list.
        #[arg(long, default_value = "10,20,40,80,160")]
        horizons: String,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Design { config } => cmd_design(&config),
        Cmd::Simulate { config, dump_qp } => cmd_simulate(&config, dump_qp),
        Cmd::Doa { config } => cmd_doa(&config),
        Cmd::Solve { config, dump_qp } => cmd_solve(&config, dump_qp),
        Cmd::Bench { config, horizons } => cmd_bench(&config, &horizons),
    }
}

fn cmd_design(config: &PathBuf) -> Result<ExitCode> {
    let p = Pipeline::load(config)?;
    let (report, _xt) = p.validate();
    write_atomic(
        &p.out_dir.join("design.json"),
        &serde_json::to_string_pretty(&p.design_json())?,
    )?;
    write_atomic(
        &p.out_dir.join("validation.json"),
        &serde_json::to_string_pretty(&Pipeline::validation_json(&report))?,
    )?;
    let mut uncertified = !report.certified;
    for tag in p.tags() {
        match p.build_spec(tag) {
            Ok(artifacts) => {
                for (stem, value) in artifacts.files {
                    write_atomic(
                        &p.out_dir.join(format!("{stem}.json")),
                        &serde_json::to_string_pretty(&value)?,
                    )?;
                }
            }
            Err(e) => {
                // unreachable references and empty tightened sets are design
                // findings, not crashes
                eprintln!("design for {tag}: {e:#}");
                uncertified = true;
            }
        }
    }
    for check in &report.checks {
        println!(
            "{}: {} (margin {:.3e})",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.margin
        );
    }
    Ok(if uncertified {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn convergence_target(
    p: &Pipeline,
    spec_variant: &Variant<f64>,
) -> Result<Option<ConvergenceTarget<f64>>> {
    let last_t = p.cfg.run.steps.saturating_sub(1);
    let yr = p.schedule.at(last_t);
    let target = match spec_variant {
        Variant::Stan { .. } | Variant::LinMpct { .. } | Variant::EquMpct => {
            Some(ConvergenceTarget::Point(optimal_reachable_reference(
                &p.sys,
                &p.z,
                p.design.sigma,
                &yr,
                &OffsetCost::Quadratic(p.design.s.clone()),
            )?))
        }
        Variant::RobustMpct { phi, z_tight, .. } => {
            let center = optimal_reachable_reference(
                &p.sys,
                z_tight,
                p.design.sigma,
                &yr,
                &OffsetCost::Quadratic(p.design.s.clone()),
            )?;
            let map = p.sys.c() + p.sys.d() * &p.design.k_tube;
            Some(ConvergenceTarget::Set {
                center,
                tube: phi.linear_map(&map),
            })
        }
        Variant::Hmpc { .. } => {
            // HMPC converges to the σZ steady state minimizing the T/S_u offset
            let (xr, ur) = mpct::formulations::steady_state_target(&p.sys, &yr);
            let econ = offset_as_economic(&p.design.t_offset, &p.design.su_offset, &xr, &ur);
            let (xs, us) =
                economic_setpoint(&p.sys, &p.z, p.design.sigma, &econ, &DVector::zeros(0))?;
            Some(ConvergenceTarget::Point(p.sys.output(&xs, &us)))
        }
        Variant::EconMpct { setpoint, .. } => Some(ConvergenceTarget::Point(
            p.sys.output(&setpoint.0, &setpoint.1),
        )),
        Variant::PeriodicMpct { .. } => None,
    };
    Ok(target)
}

/// Quadratic offset `‖x − x_r‖²_T + ‖u − u_r‖²_{S_u}` in economic-cost form.
fn offset_as_economic(
    t: &nalgebra::DMatrix<f64>,
    s_u: &nalgebra::DMatrix<f64>,
    xr: &DVector<f64>,
    ur: &DVector<f64>,
) -> EconomicCost<f64> {
    let nx = t.nrows();
    let nu = s_u.nrows();
    let mut h = nalgebra::DMatrix::zeros(nx + nu, nx + nu);
    h.view_mut((0, 0), (nx, nx)).copy_from(&(t * 2.0));
    h.view_mut((nx, nx), (nu, nu)).copy_from(&(s_u * 2.0));
    let mut lin = DVector::zeros(nx + nu);
    lin.rows_mut(0, nx).copy_from(&(-(t * 2.0) * xr));
    lin.rows_mut(nx, nu).copy_from(&(-(s_u * 2.0) * ur));
    EconomicCost {
        hessian: h,
        theta_map: nalgebra::DMatrix::zeros(nx + nu, 0),
        linear: lin,
    }
}

fn cmd_simulate(config: &PathBuf, dump_qp: bool) -> Result<ExitCode> {
    let p = Pipeline::load(config)?;
    let (validation, _) = p.validate();
    let x0 = vector_from_json::<f64>(&p.cfg.run.x0);
    let disturbance = p.cfg.extras.disturbance.as_ref().map(|d| d.to_zonotope::<f64>());
    let mut infeasible_on_certified = false;
    for tag in p.tags() {
        let artifacts = p.build_spec(tag)?;
        let spec = artifacts.spec;
        if dump_qp {
            let prog = spec.build(&x0, 0, &p.schedule)?;
            write_atomic(
                &p.out_dir.join(format!("program_{tag}.json")),
                &serde_json::to_string_pretty(&ProgramJson::from_program(&prog))?,
            )?;
        }
        let dist = disturbance
            .as_ref()
            .map(|z| (z, p.cfg.run.seed))
            .filter(|_| matches!(tag, FormulationTag::RobustMpct));
        let trace = run_closed_loop(
            &spec,
            &x0,
            &p.schedule,
            p.cfg.run.steps,
            dist,
            &p.settings,
            p.backend,
        )?;
        write_atomic(&p.out_dir.join(format!("trace_{tag}.csv")), &trace.to_csv())?;

        let mut report = serde_json::json!({
            "controller": tag.as_str(),
            "steps": trace.len(),
            "infeasible_at": trace.infeasible_at,
            "dynamics_residual": mpct::to_f64(trace.dynamics_residual(&spec)),
        });
        if let Some(target) = convergence_target(&p, &spec.variant)? {
            let conv = convergence_report(&trace, &spec.z, &target, 1e-3);
            report["settling_time"] = serde_json::json!(conv.settling_time);
            report["terminal_offset"] = serde_json::json!(conv.terminal_offset);
            report["violations"] = serde_json::json!(conv.violation_count);
        } else if let ReferenceSchedule::Periodic { period, samples } = &p.schedule {
            // periodic: compare the tail of the run against the periodic oracle
            let oracle = optimal_periodic_reference(
                &p.sys,
                &p.z,
                p.design.sigma,
                *period,
                samples,
                &p.design.s,
            )?;
            let tail = trace.steps.len().saturating_sub(*period);
            let mut worst: f64 = 0.0;
            for (t, s) in trace.steps.iter().enumerate().skip(tail) {
                let err = (&s.y - &oracle[t % period]).norm();
                worst = worst.max(err);
            }
            report["terminal_periodic_error"] = serde_json::json!(worst);
            report["violations"] = serde_json::json!(trace.violation_count(&spec.z, 1e-9));
        }
        write_atomic(
            &p.out_dir.join(format!("convergence_{tag}.json")),
            &serde_json::to_string_pretty(&report)?,
        )?;
        if trace.infeasible_at.is_some() && validation.certified {
            infeasible_on_certified = true;
        }
    }
    Ok(if infeasible_on_certified {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_doa(config: &PathBuf) -> Result<ExitCode> {
    let p = Pipeline::load(config)?;
    let grid_cfg = p
        .cfg
        .run
        .grid
        .as_ref()
        .ok_or_else(|| anyhow!("doa needs run.grid"))?;
    let grid = GridSpec {
        dims: grid_cfg.iter().map(|d| (d.lo, d.hi, d.step)).collect(),
    };
    let mut maps = Vec::new();
    let mut unreachable = false;
    for tag in p.tags() {
        match p.build_spec(tag) {
            Ok(artifacts) => {
                let map = doa_scan(&artifacts.spec, &p.schedule, &grid, p.cfg.run.workers)?;
                write_atomic(&p.out_dir.join(format!("doa_{tag}.csv")), &map.to_csv())?;
                maps.push((tag, map));
            }
            Err(e) => {
                eprintln!("doa for {tag}: {e:#}");
                unreachable = true;
            }
        }
    }
    let mut summary = serde_json::Map::new();
    for (tag, map) in &maps {
        summary.insert(
            format!("count_{tag}"),
            serde_json::json!(map.feasible_count()),
        );
    }
    let stan = maps.iter().find(|(t, _)| *t == FormulationTag::Stan);
    let lin = maps.iter().find(|(t, _)| *t == FormulationTag::LinMpct);
    if let (Some((_, stan)), Some((_, lin))) = (stan, lin) {
        summary.insert("superset".into(), serde_json::json!(lin.covers(stan)));
        summary.insert(
            "strictly_larger".into(),
            serde_json::json!(lin.feasible_count() > stan.feasible_count()),
        );
    }
    write_atomic(
        &p.out_dir.join("doa_summary.json"),
        &serde_json::to_string_pretty(&serde_json::Value::Object(summary))?,
    )?;
    Ok(if unreachable {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_solve(config: &PathBuf, dump_qp: bool) -> Result<ExitCode> {
    let p = Pipeline::load(config)?;
    let tag = p.tags()[0];
    let artifacts = p.build_spec(tag)?;
    let x0 = vector_from_json::<f64>(&p.cfg.run.x0);
    let prog = artifacts.spec.build(&x0, 0, &p.schedule)?;
    if dump_qp {
        write_atomic(
            &p.out_dir.join(format!("program_{tag}.json")),
            &serde_json::to_string_pretty(&ProgramJson::from_program(&prog))?,
        )?;
    }
    let result = match p.backend {
        SolveBackend::Admm => mpct::solver::solve(&prog, &p.settings, None)?,
        SolveBackend::AdmmExtended => admm_qp_extended(&prog, &p.settings, None)?,
        SolveBackend::Reference => mpct::solver::dense_reference_solve(&prog)?,
    };
    if p.settings.record_history && !result.history.is_empty() {
        let mut csv = String::from("iteration,r_prim,r_dual,objective\n");
        for (it, rp, rd, obj) in &result.history {
            csv.push_str(&format!("{it},{rp},{rd},{obj}\n"));
        }
        write_atomic(&p.out_dir.join(format!("iterations_{tag}.csv")), &csv)?;
    }
    let solution = serde_json::json!({
        "controller": tag.as_str(),
        "status": format!("{:?}", result.status),
        "objective": result.objective,
        "iterations": result.iterations,
        "primal_residual": result.primal_residual,
        "dual_residual": result.dual_residual,
        "z": result.z.as_slice(),
    });
    write_atomic(
        &p.out_dir.join(format!("solution_{tag}.json")),
        &serde_json::to_string_pretty(&solution)?,
    )?;
    println!(
        "{tag}: {:?} in {} iterations, objective {}",
        result.status, result.iterations, result.objective
    );
    Ok(match result.status {
        SolveStatus::Solved => ExitCode::SUCCESS,
        _ => ExitCode::from(2),
    })
}

fn cmd_bench(config: &PathBuf, horizons: &str) -> Result<ExitCode> {
    let p = Pipeline::load(config)?;
    let x0 = vector_from_json::<f64>(&p.cfg.run.x0);
    let yr = p.schedule.at(0);
    let (xr, ur) = mpct::formulations::steady_state_target(&p.sys, &yr);
    let mut csv = String::from(
        "horizon,vars,structured_per_iter_flops,dense_per_iter_flops,bandwidth_path\n",
    );
    for part in horizons.split(',') {
        let n: usize = part.trim().parse().context("parsing horizon list")?;
        let design = p.design.clone().with_horizon(n);
        let prog =
            mpct::formulations::build_equ_mpct(&p.sys, &design, &p.z, &x0, &xr, &ur)?;
        let bench_settings = mpct::solver::SolverSettings {
            max_iter: 30,
            eps_abs: 1e-14,
            eps_rel: 1e-14,
            adaptive_rho: false,
            ..Default::default()
        };
        let structured = admm_qp(&prog, &bench_settings, None)?;
        let dense = admm_qp(
            &prog,
            &mpct::solver::SolverSettings {
                force_dense: true,
                ..bench_settings
            },
            None,
        )?;
        csv.push_str(&format!(
            "{n},{},{},{},{:?}\n",
            prog.num_vars(),
            structured.work.per_iter_solve_flops,
            dense.work.per_iter_solve_flops,
            structured.path,
        ));
    }
    write_atomic(&p.out_dir.join("bench.csv"), &csv)?;
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}

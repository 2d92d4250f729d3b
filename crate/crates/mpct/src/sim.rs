//! Closed-loop simulation, disturbance sampling, convergence metrics and
//! domain-of-attraction grid scans.

use nalgebra::DVector;
use thiserror::Error;

use crate::formulations::{
    feasibility_only, ControllerSpec, FormulationError, FormulationTag, StructuredProgram,
};
use crate::model::{ModelError, Polytope, ReferenceSchedule, Zonotope};
use crate::scalar::{convert, to_f64, Scalar};
use crate::solver::{
    admm_qp_extended, dense_reference_solve, solve, SolveResult, SolveStatus, SolverError,
    SolverSettings,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which solver runs the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveBackend {
    #[default]
    Admm,
    AdmmExtended,
    /// Interior-point reference backend.
    Reference,
}

fn dispatch<T: Scalar>(
    backend: SolveBackend,
    prog: &StructuredProgram<T>,
    settings: &SolverSettings<T>,
    warm: Option<&SolveResult<T>>,
) -> Result<SolveResult<T>, SolverError> {
    match backend {
        SolveBackend::Admm => solve(prog, settings, warm),
        SolveBackend::AdmmExtended => admm_qp_extended(prog, settings, warm),
        SolveBackend::Reference => dense_reference_solve(prog),
    }
}

/// One simulation step: state, applied input, output, artificial reference
/// output, realized disturbance and solver statistics.
#[derive(Debug, Clone)]
pub struct StepRecord<T> {
    pub x: DVector<T>,
    pub u: DVector<T>,
    pub y: DVector<T>,
    pub y_art: Option<DVector<T>>,
    pub w: Option<DVector<T>>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: T,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopTrace<T> {
    pub steps: Vec<StepRecord<T>>,
    /// Set when an infeasible solve aborted the run at the given step.
    pub infeasible_at: Option<usize>,
    pub controller: FormulationTag,
    pub seed: Option<u64>,
    /// Final state after the last recorded step.
    pub x_final: DVector<T>,
}

impl<T: Scalar> ClosedLoopTrace<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Worst reconstruction error of `x(t+1) = A x(t) + B u(t) (+ w(t))`
    /// over the recorded steps.
    pub fn dynamics_residual(&self, spec: &ControllerSpec<T>) -> T {
        let mut worst = T::zero();
        for k in 0..self.steps.len() {
            let rec = &self.steps[k];
            let mut pred = spec.sys.step(&rec.x, &rec.u);
            if let Some(w) = &rec.w {
                pred += w;
            }
            let next = if k + 1 < self.steps.len() {
                &self.steps[k + 1].x
            } else {
                &self.x_final
            };
            worst = worst.max((next - pred).amax());
        }
        worst
    }

    /// Number of steps whose `(x, u)` pair violates the constraint set by
    /// more than `tol`.
    pub fn violation_count(&self, z: &Polytope<T>, tol: T) -> usize {
        let nx = self.steps.first().map(|s| s.x.len()).unwrap_or(0);
        let nu = self.steps.first().map(|s| s.u.len()).unwrap_or(0);
        self.steps
            .iter()
            .filter(|s| {
                let mut xu = DVector::zeros(nx + nu);
                xu.rows_mut(0, nx).copy_from(&s.x);
                xu.rows_mut(nx, nu).copy_from(&s.u);
                !z.contains(&xu, tol)
            })
            .count()
    }

    /// Trace CSV: `t, x[..], u[..], y[..], ya[..], status, iters, objective`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.steps.is_empty() {
            return out;
        }
        let nx = self.steps[0].x.len();
        let nu = self.steps[0].u.len();
        let ny = self.steps[0].y.len();
        out.push('t');
        for i in 0..nx {
            out.push_str(&format!(",x{i}"));
        }
        for i in 0..nu {
            out.push_str(&format!(",u{i}"));
        }
        for i in 0..ny {
            out.push_str(&format!(",y{i}"));
        }
        for i in 0..ny {
            out.push_str(&format!(",ya{i}"));
        }
        out.push_str(",status,iters,objective\n");
        for (t, s) in self.steps.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in s.x.iter() {
                out.push_str(&format!(",{}", to_f64(*v)));
            }
            for v in s.u.iter() {
                out.push_str(&format!(",{}", to_f64(*v)));
            }
            for v in s.y.iter() {
                out.push_str(&format!(",{}", to_f64(*v)));
            }
            match &s.y_art {
                Some(ya) => {
                    for v in ya.iter() {
                        out.push_str(&format!(",{}", to_f64(*v)));
                    }
                }
                None => {
                    for _ in 0..ny {
                        out.push(',');
                    }
                }
            }
            out.push_str(&format!(
                ",{:?},{},{}\n",
                s.status,
                s.iterations,
                to_f64(s.objective)
            ));
        }
        out
    }
}

/// Runs a closed loop for `steps` steps: build the program for the current
/// state/reference, solve (warm-started from the shifted previous solution),
/// apply the formulation's control law, advance the plant. An infeasible
/// solve aborts with the partial trace flagged.
pub fn run_closed_loop<T: Scalar>(
    spec: &ControllerSpec<T>,
    x0: &DVector<T>,
    schedule: &ReferenceSchedule<T>,
    steps: usize,
    disturbance: Option<(&Zonotope<T>, u64)>,
    settings: &SolverSettings<T>,
    backend: SolveBackend,
) -> Result<ClosedLoopTrace<T>, SimError> {
    assert!(steps >= 1, "need at least one step");
    let mut trace = ClosedLoopTrace {
        steps: Vec::with_capacity(steps),
        infeasible_at: None,
        controller: spec.tag(),
        seed: disturbance.as_ref().map(|(_, s)| *s),
        x_final: x0.clone(),
    };
    let mut rng = disturbance.as_ref().map(|(_, s)| crate::sampling::rng(*s));
    let mut x = x0.clone();
    let mut prev: Option<SolveResult<T>> = None;
    for t in 0..steps {
        let prog = spec.build(&x, t, schedule)?;
        let warm = prev.as_ref().map(|p| shift_warm(p, &prog));
        let result = dispatch(backend, &prog, settings, warm.as_ref())?;
        match result.status {
            SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible => {
                trace.infeasible_at = Some(t);
                trace.x_final = x;
                return Ok(trace);
            }
            _ => {}
        }
        let u = spec.control(&result.z, &prog, &x);
        let y = spec.sys.output(&x, &u);
        let y_art = spec.artificial_output(&result.z, &prog);
        let w = rng.as_mut().map(|r| {
            let (zon, _) = disturbance.as_ref().unwrap();
            zon.sample(r)
        });
        let mut x_next = spec.sys.step(&x, &u);
        if let Some(wv) = &w {
            x_next += wv;
        }
        trace.steps.push(StepRecord {
            x: x.clone(),
            u,
            y,
            y_art,
            w,
            status: result.status,
            iterations: result.iterations,
            objective: result.objective,
        });
        prev = Some(result);
        x = x_next;
    }
    trace.x_final = x;
    Ok(trace)
}

/// Warm start for the next step: stage blocks shifted by one, tail blocks
/// kept; the constraint layout is reference-independent, so the dual carries
/// over unchanged.
fn shift_warm<T: Scalar>(prev: &SolveResult<T>, prog: &StructuredProgram<T>) -> SolveResult<T> {
    let mut z = prev.z.clone();
    if z.len() != prog.num_vars() {
        return prev.clone();
    }
    let mut k = 0usize;
    while let (Some(cur), Some(next)) = (
        prog.layout.range(&format!("x{k}")),
        prog.layout.range(&format!("x{}", k + 1)),
    ) {
        for i in 0..cur.len() {
            z[cur.start + i] = prev.z[next.start + i];
        }
        k += 1;
    }
    let mut k = 0usize;
    while let (Some(cur), Some(next)) = (
        prog.layout.range(&format!("u{k}")),
        prog.layout.range(&format!("u{}", k + 1)),
    ) {
        for i in 0..cur.len() {
            z[cur.start + i] = prev.z[next.start + i];
        }
        k += 1;
    }
    SolveResult {
        z,
        ..prev.clone()
    }
}

/// Per-dimension grid: `(low, high, step)`.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub dims: Vec<(f64, f64, f64)>,
}

impl GridSpec {
    pub fn points(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .dims
            .iter()
            .map(|&(lo, hi, step)| {
                let mut v = Vec::new();
                let count = ((hi - lo) / step).round() as usize;
                for i in 0..=count {
                    v.push(lo + step * i as f64);
                }
                v
            })
            .collect();
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for p in &out {
                for &v in axis {
                    let mut q = p.clone();
                    q.push(v);
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }
}

/// Feasibility map over a state-space grid.
#[derive(Debug, Clone)]
pub struct DoAMap {
    pub grid: GridSpec,
    pub points: Vec<Vec<f64>>,
    pub feasible: Vec<bool>,
    pub controller: String,
}

impl DoAMap {
    pub fn feasible_count(&self) -> usize {
        self.feasible.iter().filter(|f| **f).count()
    }

    /// `x0,…,x{d-1},feasible` rows.
    pub fn to_csv(&self) -> String {
        let d = self.grid.dims.len();
        let mut out = String::new();
        for i in 0..d {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("x{i}"));
        }
        out.push_str(",feasible\n");
        for (p, f) in self.points.iter().zip(&self.feasible) {
            for (i, v) in p.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&v.to_string());
            }
            out.push_str(if *f { ",1\n" } else { ",0\n" });
        }
        out
    }

    /// True when every feasible point of `other` is feasible here too.
    pub fn covers(&self, other: &DoAMap) -> bool {
        self.points == other.points
            && other
                .feasible
                .iter()
                .zip(&self.feasible)
                .all(|(o, s)| !*o || *s)
    }
}

/// Scans the grid in feasibility-only mode (zero cost, interior-point
/// backend) and records a boolean per point. `workers` > 1 fans out across
/// threads; the map is merged by index so the result is deterministic.
pub fn doa_scan<T: Scalar + Send + Sync>(
    spec: &ControllerSpec<T>,
    schedule: &ReferenceSchedule<T>,
    grid: &GridSpec,
    workers: usize,
) -> Result<DoAMap, SimError>
where
    T: 'static,
{
    let points = grid.points();
    let nx = spec.sys.nx();
    assert_eq!(grid.dims.len(), nx, "grid dimension must match the state");
    let feasible = if workers <= 1 {
        points
            .iter()
            .map(|p| point_feasible(spec, schedule, p))
            .collect::<Result<Vec<bool>, SimError>>()?
    } else {
        let chunks: Vec<&[Vec<f64>]> = points.chunks(points.len().div_ceil(workers)).collect();
        let results: Vec<Result<Vec<bool>, SimError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        chunk
                            .iter()
                            .map(|p| point_feasible(spec, schedule, p))
                            .collect::<Result<Vec<bool>, SimError>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut merged = Vec::with_capacity(points.len());
        for r in results {
            merged.extend(r?);
        }
        merged
    };
    Ok(DoAMap {
        grid: grid.clone(),
        points,
        feasible,
        controller: spec.tag().as_str().to_string(),
    })
}

fn point_feasible<T: Scalar>(
    spec: &ControllerSpec<T>,
    schedule: &ReferenceSchedule<T>,
    point: &[f64],
) -> Result<bool, SimError> {
    let x0 = DVector::from_iterator(point.len(), point.iter().map(|v| convert::<T>(*v)));
    let prog = match spec.build(&x0, 0, schedule) {
        Ok(p) => p,
        Err(FormulationError::UnreachableReference) => return Ok(false),
        Err(e) => return Err(e.into()),
    };
    let feas = feasibility_only(&prog);
    let result = dense_reference_solve(&feas)?;
    Ok(matches!(
        result.status,
        SolveStatus::Solved | SolveStatus::MaxIter
    ))
}

/// Convergence target for [`convergence_report`].
#[derive(Debug, Clone)]
pub enum ConvergenceTarget<T> {
    Point(DVector<T>),
    /// `center ⊕ tube` in output space (robust case).
    Set {
        center: DVector<T>,
        tube: Zonotope<T>,
    },
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// First step from which the output stays within `tol` of the target.
    pub settling_time: Option<usize>,
    /// Distance of the final output to the target (support margin for sets).
    pub terminal_offset: f64,
    /// Steps violating the constraint set (must be zero).
    pub violation_count: usize,
}

/// Distance of `y` to the target: Euclidean for points, worst support-margin
/// over the coordinate and diagonal directions for sets.
fn target_distance<T: Scalar>(y: &DVector<T>, target: &ConvergenceTarget<T>) -> f64 {
    match target {
        ConvergenceTarget::Point(p) => to_f64((y - p).norm()),
        ConvergenceTarget::Set { center, tube } => {
            let d = y.len();
            let mut dirs: Vec<DVector<T>> = Vec::new();
            for i in 0..d {
                let mut e = DVector::zeros(d);
                e[i] = T::one();
                dirs.push(e.clone());
                dirs.push(-e);
            }
            dirs.extend(crate::sampling::unit_directions::<T>(d, 64, 2024));
            let mut worst = f64::NEG_INFINITY;
            for q in dirs {
                let margin = to_f64(q.dot(&(y - center)) - tube.support(&q));
                worst = worst.max(margin);
            }
            worst.max(0.0)
        }
    }
}

pub fn convergence_report<T: Scalar>(
    trace: &ClosedLoopTrace<T>,
    z: &Polytope<T>,
    target: &ConvergenceTarget<T>,
    tol: f64,
) -> ConvergenceReport {
    let distances: Vec<f64> = trace
        .steps
        .iter()
        .map(|s| target_distance(&s.y, target))
        .collect();
    let mut settling_time = None;
    for t in 0..distances.len() {
        if distances[t..].iter().all(|d| *d <= tol) {
            settling_time = Some(t);
            break;
        }
    }
    ConvergenceReport {
        settling_time,
        terminal_offset: distances.last().copied().unwrap_or(f64::INFINITY),
        violation_count: trace.violation_count(z, convert(1e-9)),
    }
}

//! JSON schemas for systems, sets, designs, programs and experiment configs.
//!
//! Matrices serialize as row-major nested arrays; polytopes as
//! `{"F": [[…]], "g": […], "Feq": …, "geq": …}`. All schemas carry values as
//! `f64` regardless of the working scalar type and are versioned through the
//! experiment config's `"schema": 1` field.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{CheckOutcome, TrackingDesign, ValidationReport};
use crate::model::{LinearSystem, ModelError, Polytope, ReferenceSchedule, Zonotope};
use crate::scalar::{convert, to_f64, Scalar};
use crate::setops::{InvariantSetReport, RpiApproximation};
use crate::solver::SolverSettings;

pub type MatrixJson = Vec<Vec<f64>>;

pub fn matrix_to_json<T: Scalar>(m: &DMatrix<T>) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| to_f64(m[(i, j)])).collect())
        .collect()
}

pub fn matrix_from_json<T: Scalar>(rows: &MatrixJson) -> Result<DMatrix<T>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix".into());
    }
    let mut m = DMatrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = convert(*v);
        }
    }
    Ok(m)
}

pub fn vector_to_json<T: Scalar>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| to_f64(*x)).collect()
}

pub fn vector_from_json<T: Scalar>(v: &[f64]) -> DVector<T> {
    DVector::from_iterator(v.len(), v.iter().map(|x| convert(*x)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    pub a: MatrixJson,
    pub b: MatrixJson,
    pub c: MatrixJson,
    pub d: MatrixJson,
}

impl SystemJson {
    pub fn from_system<T: Scalar>(sys: &LinearSystem<T>) -> Self {
        Self {
            a: matrix_to_json(sys.a()),
            b: matrix_to_json(sys.b()),
            c: matrix_to_json(sys.c()),
            d: matrix_to_json(sys.d()),
        }
    }

    pub fn to_system<T: Scalar>(&self) -> Result<LinearSystem<T>, ModelError> {
        LinearSystem::new(
            matrix_from_json(&self.a).map_err(ModelError::Dimension)?,
            matrix_from_json(&self.b).map_err(ModelError::Dimension)?,
            matrix_from_json(&self.c).map_err(ModelError::Dimension)?,
            matrix_from_json(&self.d).map_err(ModelError::Dimension)?,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeJson {
    #[serde(rename = "F")]
    pub f: MatrixJson,
    pub g: Vec<f64>,
    #[serde(rename = "Feq", default, skip_serializing_if = "Option::is_none")]
    pub feq: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geq: Option<Vec<f64>>,
}

impl PolytopeJson {
    pub fn from_polytope<T: Scalar>(p: &Polytope<T>) -> Self {
        Self {
            f: matrix_to_json(p.f()),
            g: vector_to_json(p.g()),
            feq: (p.num_eq_rows() > 0).then(|| matrix_to_json(p.feq())),
            geq: (p.num_eq_rows() > 0).then(|| vector_to_json(p.geq())),
        }
    }

    pub fn to_polytope<T: Scalar>(&self) -> Result<Polytope<T>, ModelError> {
        let eq = match (&self.feq, &self.geq) {
            (Some(f), Some(g)) => Some((
                matrix_from_json(f).map_err(ModelError::Dimension)?,
                vector_from_json(g),
            )),
            (None, None) => None,
            _ => {
                return Err(ModelError::Dimension(
                    "Feq and geq must be given together".into(),
                ))
            }
        };
        Polytope::with_equalities(
            matrix_from_json(&self.f).map_err(ModelError::Dimension)?,
            vector_from_json(&self.g),
            eq,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZonotopeJson {
    pub center: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
}

impl ZonotopeJson {
    pub fn from_zonotope<T: Scalar>(z: &Zonotope<T>) -> Self {
        Self {
            center: vector_to_json(z.center()),
            generators: z.generators().iter().map(|g| vector_to_json(g)).collect(),
        }
    }

    pub fn to_zonotope<T: Scalar>(&self) -> Zonotope<T> {
        Zonotope::new(
            vector_from_json(&self.center),
            self.generators
                .iter()
                .map(|g| vector_from_json(g))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignJson {
    pub q: MatrixJson,
    pub r: MatrixJson,
    pub s: MatrixJson,
    pub t: MatrixJson,
    pub s_u: MatrixJson,
    pub t_h: MatrixJson,
    pub s_h: MatrixJson,
    pub p: MatrixJson,
    pub k: MatrixJson,
    pub k_tube: MatrixJson,
    pub n: usize,
    pub sigma: f64,
    pub omega: f64,
    pub gamma: f64,
}

impl DesignJson {
    pub fn from_design<T: Scalar>(d: &TrackingDesign<T>) -> Self {
        Self {
            q: matrix_to_json(&d.q),
            r: matrix_to_json(&d.r),
            s: matrix_to_json(&d.s),
            t: matrix_to_json(&d.t_offset),
            s_u: matrix_to_json(&d.su_offset),
            t_h: matrix_to_json(&d.t_h),
            s_h: matrix_to_json(&d.s_h),
            p: matrix_to_json(&d.p),
            k: matrix_to_json(&d.k),
            k_tube: matrix_to_json(&d.k_tube),
            n: d.n,
            sigma: to_f64(d.sigma),
            omega: to_f64(d.omega),
            gamma: to_f64(d.gamma),
        }
    }

    pub fn to_design<T: Scalar>(&self) -> Result<TrackingDesign<T>, String> {
        Ok(TrackingDesign {
            q: matrix_from_json(&self.q)?,
            r: matrix_from_json(&self.r)?,
            s: matrix_from_json(&self.s)?,
            t_offset: matrix_from_json(&self.t)?,
            su_offset: matrix_from_json(&self.s_u)?,
            t_h: matrix_from_json(&self.t_h)?,
            s_h: matrix_from_json(&self.s_h)?,
            p: matrix_from_json(&self.p)?,
            k: matrix_from_json(&self.k)?,
            k_tube: matrix_from_json(&self.k_tube)?,
            n: self.n,
            sigma: convert(self.sigma),
            omega: convert(self.omega),
            gamma: convert(self.gamma),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckJson {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationJson {
    pub certified: bool,
    pub checks: Vec<CheckJson>,
}

impl ValidationJson {
    pub fn from_report(r: &ValidationReport) -> Self {
        Self {
            certified: r.certified,
            checks: r
                .checks
                .iter()
                .map(|c: &CheckOutcome| CheckJson {
                    name: c.name.clone(),
                    passed: c.passed,
                    margin: c.margin,
                    detail: c.detail.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantSetJson {
    pub set: PolytopeJson,
    pub iterations: usize,
    pub converged: bool,
    pub removed_redundant: usize,
}

impl InvariantSetJson {
    pub fn from_report<T: Scalar>(r: &InvariantSetReport<T>) -> Self {
        Self {
            set: PolytopeJson::from_polytope(&r.set),
            iterations: r.iterations,
            converged: r.converged,
            removed_redundant: r.removed_redundant,
        }
    }

    pub fn to_report<T: Scalar>(&self) -> Result<InvariantSetReport<T>, ModelError> {
        Ok(InvariantSetReport {
            set: self.set.to_polytope()?,
            iterations: self.iterations,
            converged: self.converged,
            removed_redundant: self.removed_redundant,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpiJson {
    pub set: ZonotopeJson,
    pub s: usize,
    pub alpha: f64,
    pub scaling: f64,
}

impl RpiJson {
    pub fn from_rpi<T: Scalar>(r: &RpiApproximation<T>) -> Self {
        Self {
            set: ZonotopeJson::from_zonotope(&r.set),
            s: r.s,
            alpha: to_f64(r.alpha),
            scaling: to_f64(r.scaling),
        }
    }
}

/// Serialized structured program for offline inspection (`--dump-qp`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramJson {
    pub kind: String,
    /// Hessian as (row, col, value) triplets.
    pub h: Vec<(usize, usize, f64)>,
    pub q: Vec<f64>,
    pub c: f64,
    pub a_eq: Vec<(usize, usize, f64)>,
    pub b_eq: Vec<f64>,
    pub f: Vec<(usize, usize, f64)>,
    pub g: Vec<f64>,
    pub cones: Vec<ConeJson>,
    pub layout: Vec<(String, usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_banded: Option<StructureJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeJson {
    pub s_map: Vec<(usize, usize, f64)>,
    pub s_offset: Vec<f64>,
    pub t_map: Vec<(usize, usize, f64)>,
    pub t_offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureJson {
    pub h_banded: Vec<(usize, usize, f64)>,
    pub u: MatrixJson,
    pub v: MatrixJson,
    pub tail: (usize, usize),
}

impl ProgramJson {
    pub fn from_program<T: Scalar>(p: &crate::formulations::StructuredProgram<T>) -> Self {
        let trips = |m: &crate::sparse::SparseMatrix<T>| {
            m.iter().map(|(i, j, v)| (i, j, to_f64(v))).collect::<Vec<_>>()
        };
        Self {
            kind: match p.kind {
                crate::formulations::ProgramKind::Qp => "QP".into(),
                crate::formulations::ProgramKind::Socp => "SOCP".into(),
            },
            h: trips(&p.h),
            q: vector_to_json(&p.q),
            c: to_f64(p.c),
            a_eq: trips(&p.a_eq),
            b_eq: vector_to_json(&p.b_eq),
            f: trips(&p.f),
            g: vector_to_json(&p.g),
            cones: p
                .cones
                .iter()
                .map(|c| ConeJson {
                    s_map: trips(&c.s_map),
                    s_offset: vector_to_json(&c.s_offset),
                    t_map: trips(&c.t_map),
                    t_offset: to_f64(c.t_offset),
                })
                .collect(),
            layout: p
                .layout
                .blocks()
                .map(|(n, r)| (n.to_string(), r.start, r.end))
                .collect(),
            semi_banded: p.structure.as_ref().map(|st| StructureJson {
                h_banded: trips(&st.h_banded),
                u: matrix_to_json(&st.u),
                v: matrix_to_json(&st.v),
                tail: (st.tail.start, st.tail.end),
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverJson {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_eps")]
    pub eps_abs: f64,
    #[serde(default = "default_eps")]
    pub eps_rel: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_true")]
    pub adaptive_rho: bool,
    #[serde(default)]
    pub force_dense: bool,
    #[serde(default)]
    pub record_history: bool,
    /// `admm`, `admm_extended` or `reference`.
    #[serde(default = "default_backend")]
    pub backend: String,
}

fn default_rho() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    20_000
}
fn default_true() -> bool {
    true
}
fn default_backend() -> String {
    "admm".into()
}

impl Default for SolverJson {
    fn default() -> Self {
        Self {
            rho: default_rho(),
            eps_abs: default_eps(),
            eps_rel: default_eps(),
            max_iter: default_max_iter(),
            adaptive_rho: true,
            force_dense: false,
            record_history: false,
            backend: default_backend(),
        }
    }
}

impl SolverJson {
    pub fn to_settings<T: Scalar>(&self) -> SolverSettings<T> {
        SolverSettings {
            rho: convert(self.rho),
            eps_abs: convert(self.eps_abs),
            eps_rel: convert(self.eps_rel),
            max_iter: self.max_iter,
            adaptive_rho: self.adaptive_rho,
            alpha: convert(1.6),
            force_dense: self.force_dense,
            record_history: self.record_history,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleJson {
    /// Piecewise-constant: list of `[switch_time, y...]` entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setpoints: Option<Vec<SetpointJson>>,
    /// Periodic: period and one output sample per period step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodic: Option<PeriodicJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointJson {
    pub at: usize,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicJson {
    pub period: usize,
    pub samples: Vec<Vec<f64>>,
}

impl ScheduleJson {
    pub fn to_schedule<T: Scalar>(&self) -> Result<ReferenceSchedule<T>, ModelError> {
        let schedule = match (&self.setpoints, &self.periodic) {
            (Some(points), None) => ReferenceSchedule::PiecewiseConstant(
                points
                    .iter()
                    .map(|p| (p.at, vector_from_json(&p.y)))
                    .collect(),
            ),
            (None, Some(p)) => ReferenceSchedule::Periodic {
                period: p.period,
                samples: p.samples.iter().map(|s| vector_from_json(s)).collect(),
            },
            _ => {
                return Err(ModelError::Dimension(
                    "schedule must set exactly one of `setpoints` or `periodic`".into(),
                ))
            }
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Extras for the formulations that need them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrasJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// Disturbance zonotope for the robust variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<ZonotopeJson>,
    /// Output bounds for the harmonic variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_low: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_high: Option<Vec<f64>>,
    /// Economic cost pieces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub economic_hessian: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub economic_theta_map: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub economic_linear: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsJson {
    pub q: MatrixJson,
    pub r: MatrixJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_u: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_h: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_h: Option<MatrixJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunJson {
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<GridDimJson>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_steps() -> usize {
    100
}
fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDimJson {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

/// Top-level experiment configuration; validated before any computation and
/// rejecting unknown keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub system: SystemJson,
    pub constraints: PolytopeJson,
    pub weights: WeightsJson,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub horizon: usize,
    /// One of STAN, LIN_MPCT, EQU_MPCT, ROBUST_MPCT, PERIODIC_MPCT, HMPC,
    /// ECON_MPCT — or a list for comparison scans.
    pub formulations: Vec<String>,
    #[serde(default)]
    pub extras: ExtrasJson,
    #[serde(default)]
    pub solver: SolverJson,
    pub schedule: ScheduleJson,
    pub run: RunJson,
    #[serde(default = "default_output")]
    pub output_dir: String,
}

fn default_sigma() -> f64 {
    0.99
}
fn default_output() -> String {
    "out".into()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.schema != 1 {
            return Err(format!("unsupported schema version {}", self.schema));
        }
        if self.formulations.is_empty() {
            return Err("at least one formulation required".into());
        }
        for f in &self.formulations {
            if crate::formulations::FormulationTag::parse(f).is_none() {
                return Err(format!("unknown formulation tag {f}"));
            }
        }
        Ok(())
    }
}

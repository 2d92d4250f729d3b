//! Controller specifications: formulation tag, ingredient references and the
//! rule mapping a solution back to the applied input.

use nalgebra::{DMatrix, DVector};

use crate::design::TrackingDesign;
use crate::model::{LinearSystem, Polytope, ReferenceSchedule, Zonotope};
use crate::scalar::Scalar;

use super::builders::{self, EconomicCost, FormulationError};
use super::oracles;
use super::program::StructuredProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulationTag {
    Stan,
    LinMpct,
    EquMpct,
    RobustMpct,
    PeriodicMpct,
    Hmpc,
    EconMpct,
}

impl FormulationTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Stan => "STAN",
            Self::LinMpct => "LIN_MPCT",
            Self::EquMpct => "EQU_MPCT",
            Self::RobustMpct => "ROBUST_MPCT",
            Self::PeriodicMpct => "PERIODIC_MPCT",
            Self::Hmpc => "HMPC",
            Self::EconMpct => "ECON_MPCT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "STAN" => Some(Self::Stan),
            "LIN_MPCT" => Some(Self::LinMpct),
            "EQU_MPCT" => Some(Self::EquMpct),
            "ROBUST_MPCT" => Some(Self::RobustMpct),
            "PERIODIC_MPCT" => Some(Self::PeriodicMpct),
            "HMPC" => Some(Self::Hmpc),
            "ECON_MPCT" => Some(Self::EconMpct),
            _ => None,
        }
    }
}

impl std::fmt::Display for FormulationTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the applied input is read from the optimal solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlLaw {
    /// `u(t) = u_0*`.
    FirstInput,
    /// `u(t) = K(x(t) − x_0*) + u_0*` (tube-based robust law).
    TubeFeedback,
}

/// Per-formulation ingredients beyond the shared system/design/constraints.
#[derive(Debug, Clone)]
pub enum Variant<T> {
    Stan { xf: Polytope<T> },
    LinMpct { xt: Polytope<T> },
    EquMpct,
    RobustMpct {
        phi: Zonotope<T>,
        z_tight: Polytope<T>,
        xt_tight: Polytope<T>,
    },
    PeriodicMpct { period: usize },
    Hmpc {
        y_low: DVector<T>,
        y_high: DVector<T>,
    },
    EconMpct {
        econ: EconomicCost<T>,
        theta: DVector<T>,
        setpoint: (DVector<T>, DVector<T>),
    },
}

/// A fully specified controller: build a program for the current state and
/// reference, then extract the applied input from its solution.
#[derive(Debug, Clone)]
pub struct ControllerSpec<T> {
    pub sys: LinearSystem<T>,
    pub design: TrackingDesign<T>,
    /// The physical constraint set (used for violation accounting even when
    /// the program itself runs on tightened constraints).
    pub z: Polytope<T>,
    pub variant: Variant<T>,
}

impl<T: Scalar> ControllerSpec<T> {
    pub fn tag(&self) -> FormulationTag {
        match &self.variant {
            Variant::Stan { .. } => FormulationTag::Stan,
            Variant::LinMpct { .. } => FormulationTag::LinMpct,
            Variant::EquMpct => FormulationTag::EquMpct,
            Variant::RobustMpct { .. } => FormulationTag::RobustMpct,
            Variant::PeriodicMpct { .. } => FormulationTag::PeriodicMpct,
            Variant::Hmpc { .. } => FormulationTag::Hmpc,
            Variant::EconMpct { .. } => FormulationTag::EconMpct,
        }
    }

    pub fn law(&self) -> ControlLaw {
        match &self.variant {
            Variant::RobustMpct { .. } => ControlLaw::TubeFeedback,
            _ => ControlLaw::FirstInput,
        }
    }

    /// Builds the optimization program for state `x_now` at time `t` under
    /// the given reference schedule.
    pub fn build(
        &self,
        x_now: &DVector<T>,
        t: usize,
        schedule: &ReferenceSchedule<T>,
    ) -> Result<StructuredProgram<T>, FormulationError> {
        match &self.variant {
            Variant::Stan { xf } => {
                let yr = schedule.at(t);
                builders::build_stan_mpc(&self.sys, &self.design, &self.z, xf, x_now, &yr)
            }
            Variant::LinMpct { xt } => {
                let yr = schedule.at(t);
                builders::build_lin_mpct(&self.sys, &self.design, &self.z, xt, x_now, &yr)
            }
            Variant::EquMpct => {
                let yr = schedule.at(t);
                let (xr, ur) = builders::steady_state_target(&self.sys, &yr);
                builders::build_equ_mpct(&self.sys, &self.design, &self.z, x_now, &xr, &ur)
            }
            Variant::RobustMpct {
                phi,
                z_tight,
                xt_tight,
            } => {
                let yr = schedule.at(t);
                builders::build_robust_mpct(
                    &self.sys,
                    &self.design,
                    phi,
                    z_tight,
                    xt_tight,
                    x_now,
                    &yr,
                )
            }
            Variant::PeriodicMpct { period } => {
                let window = schedule.window(t).ok_or_else(|| {
                    FormulationError::Dimension(
                        "periodic controller requires a periodic schedule".into(),
                    )
                })?;
                builders::build_periodic_mpct(
                    &self.sys,
                    &self.design,
                    &self.z,
                    *period,
                    x_now,
                    &window,
                )
            }
            Variant::Hmpc { y_low, y_high } => {
                let yr = schedule.at(t);
                let (xr, ur) = builders::steady_state_target(&self.sys, &yr);
                builders::build_hmpc(&self.sys, &self.design, y_low, y_high, x_now, &xr, &ur)
            }
            Variant::EconMpct {
                econ,
                theta,
                setpoint,
            } => builders::build_econ_mpct(
                &self.sys,
                &self.design,
                &self.z,
                econ,
                theta,
                (&setpoint.0, &setpoint.1),
                x_now,
            ),
        }
    }

    /// Applied input for an optimal solution vector.
    pub fn control(&self, solution: &DVector<T>, prog: &StructuredProgram<T>, x_now: &DVector<T>) -> DVector<T> {
        let u0 = prog.layout.range("u0").expect("u0 block");
        let u_star = solution.rows(u0.start, u0.len()).clone_owned();
        match self.law() {
            ControlLaw::FirstInput => u_star,
            ControlLaw::TubeFeedback => {
                let x0 = prog.layout.range("x0").expect("x0 block");
                let x_star = solution.rows(x0.start, x0.len()).clone_owned();
                &self.design.k_tube * (x_now - x_star) + u_star
            }
        }
    }

    /// Output of the artificial reference at the current prediction time.
    pub fn artificial_output(
        &self,
        solution: &DVector<T>,
        prog: &StructuredProgram<T>,
    ) -> Option<DVector<T>> {
        let read = |name: &str| {
            prog.layout
                .range(name)
                .map(|r| solution.rows(r.start, r.len()).clone_owned())
        };
        match &self.variant {
            Variant::Stan { .. } => None,
            Variant::LinMpct { .. } | Variant::RobustMpct { .. } | Variant::EquMpct => {
                let xa = read("xa")?;
                let ua = read("ua")?;
                Some(self.sys.output(&xa, &ua))
            }
            Variant::EconMpct { .. } => {
                let xa = read("xa")?;
                let ua = read("ua")?;
                Some(self.sys.output(&xa, &ua))
            }
            Variant::PeriodicMpct { .. } => {
                let xa = read("xa0")?;
                let ua = read("ua0")?;
                Some(self.sys.output(&xa, &ua))
            }
            Variant::Hmpc { .. } => {
                // harmonic value at prediction time 0: x_e + x_c, u_e + u_c
                let xe = read("xe")?;
                let xc = read("xc")?;
                let ue = read("ue")?;
                let uc = read("uc")?;
                Some(self.sys.output(&(xe + xc), &(ue + uc)))
            }
        }
    }

    /// Re-solves the economic setpoint after a parameter change. No-op for
    /// the other formulations.
    pub fn update_theta(&mut self, theta: DVector<T>) -> Result<(), FormulationError> {
        let (sigma, sys, z) = (self.design.sigma, self.sys.clone(), self.z.clone());
        if let Variant::EconMpct {
            econ,
            theta: stored,
            setpoint,
        } = &mut self.variant
        {
            let (x_star, u_star) = oracles::economic_setpoint(&sys, &z, sigma, econ, &theta)?;
            *stored = theta;
            *setpoint = (x_star, u_star);
            Ok(())
        } else {
            Err(FormulationError::Dimension(
                "theta updates only apply to the economic formulation".into(),
            ))
        }
    }

    /// The gain used to map tube errors to inputs (robust law).
    pub fn tube_gain(&self) -> Option<&DMatrix<T>> {
        match &self.variant {
            Variant::RobustMpct { .. } => Some(&self.design.k_tube),
            _ => None,
        }
    }
}

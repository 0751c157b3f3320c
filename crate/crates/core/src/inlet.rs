//! Variable-cowl inlet and isolator.
//!
//! Isolator-exit quantities are expressed relative to freestream: captured
//! mass flow scales with the capture area, total pressure with a recovery
//! factor, and the exit Mach number is a fitted function of the normalized
//! capture radius. Both fits are quadratics in
//! `x = (r0 - r0_min) / (r0_max - r0_min)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::atmosphere::{total_pressure_ratio, total_temperature_ratio, FreestreamConditions, GAMMA_AIR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InletModel {
    /// m
    pub r0_min: f64,
    /// m
    pub r0_max: f64,
    /// Pt2/Pt0 = c0 + c1 x + c2 x^2
    pub recovery_coeffs: [f64; 3],
    /// M2 = c0 + c1 x + c2 x^2
    pub mach2_coeffs: [f64; 3],
    pub spillage_factor: f64,
}

impl Default for InletModel {
    /// Recovery 0.55 at `r0_min`, 0.70 at the 53.58 mm design radius and
    /// 0.60 at `r0_max`; constant M2 = 0.3; full capture.
    fn default() -> Self {
        InletModel {
            r0_min: 47.88e-3,
            r0_max: 59.28e-3,
            recovery_coeffs: [0.55, 0.55, -0.5],
            mach2_coeffs: [0.30, 0.0, 0.0],
            spillage_factor: 1.0,
        }
    }
}

/// Thermodynamic state at a station, air with gamma = 1.4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationConditions {
    /// kg/s
    pub mdot: f64,
    pub total_pressure: f64,
    pub total_temperature: f64,
    pub mach: f64,
    pub static_temperature: f64,
    pub static_pressure: f64,
    /// m^2
    pub area: f64,
}

fn quadratic(c: &[f64; 3], x: f64) -> f64 {
    c[0] + x * (c[1] + x * c[2])
}

impl InletModel {
    pub fn normalized_radius(&self, r0: f64) -> f64 {
        (r0 - self.r0_min) / (self.r0_max - self.r0_min)
    }

    pub fn recovery(&self, r0: f64) -> f64 {
        quadratic(&self.recovery_coeffs, self.normalized_radius(r0))
    }

    pub fn mach2(&self, r0: f64) -> f64 {
        quadratic(&self.mach2_coeffs, self.normalized_radius(r0))
    }

    pub fn clamp(&self, r0: f64) -> f64 {
        r0.clamp(self.r0_min, self.r0_max)
    }

    /// Checks the radius ordering and that recovery and M2 stay physical
    /// over the whole actuator range.
    pub fn validate(&self) -> Result<()> {
        if !(self.r0_min > 0.0 && self.r0_min < self.r0_max) {
            return Err(Error::Config(format!(
                "inlet radii must satisfy 0 < r0_min < r0_max (got {}, {})",
                self.r0_min, self.r0_max
            )));
        }
        if !(self.spillage_factor > 0.0 && self.spillage_factor <= 1.0) {
            return Err(Error::Config(format!(
                "spillage_factor {} not in (0, 1]",
                self.spillage_factor
            )));
        }
        for i in 0..=200 {
            let r0 = self.r0_min + (self.r0_max - self.r0_min) * i as f64 / 200.0;
            let rec = self.recovery(r0);
            let m2 = self.mach2(r0);
            if !(rec > 0.0 && rec <= 1.0) {
                return Err(Error::Config(format!(
                    "inlet recovery {rec} outside (0, 1] at r0 = {r0}"
                )));
            }
            if !(m2 > 0.05 && m2 < 0.9) {
                return Err(Error::Config(format!(
                    "isolator Mach {m2} outside (0.05, 0.9) at r0 = {r0}"
                )));
            }
        }
        Ok(())
    }
}

/// Station-2 conditions for capture radius `r0` and isolator exit area `a2`.
pub fn isolator_exit(model: &InletModel, free: &FreestreamConditions, r0: f64, a2: f64) -> Result<StationConditions> {
    if !(model.r0_min..=model.r0_max).contains(&r0) {
        return Err(Error::Saturation {
            r0,
            min: model.r0_min,
            max: model.r0_max,
        });
    }
    let mach = model.mach2(r0);
    let total_pressure = model.recovery(r0) * free.total_pressure;
    let total_temperature = free.total_temperature;
    Ok(StationConditions {
        mdot: model.spillage_factor * free.density * free.velocity * PI * r0 * r0,
        total_pressure,
        total_temperature,
        mach,
        static_temperature: total_temperature / total_temperature_ratio(mach, GAMMA_AIR),
        static_pressure: total_pressure / total_pressure_ratio(mach, GAMMA_AIR),
        area: a2,
    })
}

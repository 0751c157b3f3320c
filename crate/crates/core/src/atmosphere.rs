//! US Standard Atmosphere 1976 and isentropic freestream totals.
//!
//! Altitudes are geometric; the layer table is indexed by geopotential
//! altitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Specific gas constant of air, J/(kg K).
pub const R_AIR: f64 = 287.053;
/// Ratio of specific heats of air.
pub const GAMMA_AIR: f64 = 1.4;
/// Highest supported geometric altitude, m.
pub const MAX_ALTITUDE: f64 = 47_000.0;
pub const MAX_MACH: f64 = 6.0;

const G0: f64 = 9.80665;
const EARTH_RADIUS: f64 = 6_356_766.0;
const SEA_LEVEL_T: f64 = 288.15;
const SEA_LEVEL_P: f64 = 101_325.0;

/// (base geopotential altitude m, lapse rate K/m)
const LAYERS: [(f64, f64); 7] = [
    (0.0, -0.0065),
    (11_000.0, 0.0),
    (20_000.0, 0.001),
    (32_000.0, 0.0028),
    (47_000.0, 0.0),
    (51_000.0, -0.0028),
    (71_000.0, -0.002),
];

/// Static conditions at one altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atmosphere {
    pub temperature: f64,
    pub pressure: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreestreamConditions {
    pub mach: f64,
    pub altitude: f64,
    pub static_temperature: f64,
    pub static_pressure: f64,
    pub total_temperature: f64,
    pub total_pressure: f64,
    pub velocity: f64,
    pub density: f64,
}

fn geopotential(z: f64) -> f64 {
    EARTH_RADIUS * z / (EARTH_RADIUS + z)
}

/// Layer base temperatures and pressures, integrated upward from sea level.
fn layer_bases() -> [(f64, f64); 7] {
    let mut bases = [(SEA_LEVEL_T, SEA_LEVEL_P); 7];
    for i in 1..LAYERS.len() {
        let (h0, lapse) = LAYERS[i - 1];
        let (t0, p0) = bases[i - 1];
        let dh = LAYERS[i].0 - h0;
        bases[i] = layer_state(t0, p0, lapse, dh);
    }
    bases
}

fn layer_state(t_base: f64, p_base: f64, lapse: f64, dh: f64) -> (f64, f64) {
    let k = G0 / R_AIR;
    if lapse == 0.0 {
        (t_base, p_base * (-k * dh / t_base).exp())
    } else {
        let t = t_base + lapse * dh;
        (t, p_base * (t / t_base).powf(-k / lapse))
    }
}

/// Static temperature, pressure and density at geometric `altitude` (m).
pub fn standard_atmosphere(altitude: f64) -> Result<Atmosphere> {
    if !(0.0..=MAX_ALTITUDE).contains(&altitude) {
        return Err(Error::Range {
            what: "altitude",
            value: altitude,
            min: 0.0,
            max: MAX_ALTITUDE,
        });
    }
    let h = geopotential(altitude);
    let bases = layer_bases();
    let i = LAYERS.iter().rposition(|&(hb, _)| h >= hb).unwrap_or(0);
    let (t_base, p_base) = bases[i];
    let (temperature, pressure) = layer_state(t_base, p_base, LAYERS[i].1, h - LAYERS[i].0);
    Ok(Atmosphere {
        temperature,
        pressure,
        density: pressure / (R_AIR * temperature),
    })
}

/// Freestream static and total conditions for flight at `mach` and `altitude`.
pub fn freestream_totals(mach: f64, altitude: f64) -> Result<FreestreamConditions> {
    if !(0.0..=MAX_MACH).contains(&mach) {
        return Err(Error::Range {
            what: "mach",
            value: mach,
            min: 0.0,
            max: MAX_MACH,
        });
    }
    let atm = standard_atmosphere(altitude)?;
    Ok(FreestreamConditions::from_static(
        mach,
        altitude,
        atm.temperature,
        atm.pressure,
    ))
}

impl FreestreamConditions {
    /// Isentropic totals for air at the given static state.
    pub fn from_static(mach: f64, altitude: f64, temperature: f64, pressure: f64) -> Self {
        let ratio = total_temperature_ratio(mach, GAMMA_AIR);
        FreestreamConditions {
            mach,
            altitude,
            static_temperature: temperature,
            static_pressure: pressure,
            total_temperature: temperature * ratio,
            total_pressure: pressure * ratio.powf(GAMMA_AIR / (GAMMA_AIR - 1.0)),
            velocity: mach * (GAMMA_AIR * R_AIR * temperature).sqrt(),
            density: pressure / (R_AIR * temperature),
        }
    }
}

/// Tt/T for an isentropic flow.
pub fn total_temperature_ratio(mach: f64, gamma: f64) -> f64 {
    1.0 + 0.5 * (gamma - 1.0) * mach * mach
}

/// Pt/P for an isentropic flow.
pub fn total_pressure_ratio(mach: f64, gamma: f64) -> f64 {
    total_temperature_ratio(mach, gamma).powf(gamma / (gamma - 1.0))
}

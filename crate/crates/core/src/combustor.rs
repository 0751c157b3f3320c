//! Quasi-one-dimensional combustor, nozzle and thrust model with fuel-grain
//! regression.
//!
//! The chain for one evaluation is: inlet → port flow state → regression
//! rate → fuel flow and equivalence ratio → adiabatic equilibrium at the aft
//! pressure → efficiency-corrected temperature → ideal expansion to ambient →
//! net thrust. Pressure feeding the regression law is lagged by one step so
//! no inner fixed-point iteration is needed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::atmosphere::{total_pressure_ratio, total_temperature_ratio, FreestreamConditions, GAMMA_AIR, R_AIR};
use crate::equilibrium::{fuel, EquilibriumSolver};
use crate::error::{Error, Result};
use crate::inlet::{isolator_exit, InletModel, StationConditions};
use crate::thermo::ThermoDb;

/// `rdot = alpha * G^a * P4^b * Tt2^c`, SI units throughout (m/s out).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionParams {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for RegressionParams {
    /// Calibrated to about 0.05 mm/s at the cruise design point with a
    /// mid-grain port, which puts the design point near phi = 0.7 and the
    /// net thrust near 100 N.
    fn default() -> Self {
        RegressionParams {
            alpha: 5.2e-9,
            a: 0.6,
            b: 0.4,
            c: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelGrain {
    /// kg/m^3
    pub rho_f: f64,
    /// m
    pub l_f: f64,
    /// current port radius, m
    pub r3: f64,
    /// m
    pub r3_max: f64,
    pub regression: RegressionParams,
}

/// Flow in the fuel port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortState {
    pub rho3: f64,
    pub u3: f64,
    /// Mass flux driving regression, kg/(m^2 s).
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombustorOutputs {
    /// N
    pub thrust: f64,
    pub pt4: f64,
    /// Pressure used for the equilibrium solve and carried to the next step.
    pub p4: f64,
    /// Efficiency-corrected aft static temperature, K.
    pub t4: f64,
    pub t4_eq: f64,
    pub tt4: f64,
    pub x_co: f64,
    pub phi_g: f64,
    pub fuel_air_ratio: f64,
    pub mdot_air: f64,
    pub mdot_f: f64,
    pub rdot: f64,
    pub u_e: f64,
    pub u_e_th: f64,
    pub gamma4: f64,
    pub r4: f64,
}

/// Mutable plant state advanced each time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub r3: f64,
    /// Combustor pressure from the previous step; `None` before the first
    /// step, in which case the isolator total pressure stands in.
    pub p4_lag: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NozzleEfficiency {
    /// `u_e = eta_n * u_e_th`
    #[default]
    Velocity,
    /// `u_e = sqrt(eta_n) * u_e_th`
    KineticEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MassFluxArea {
    /// Air flow over the fuel port area.
    #[default]
    Port,
    /// Air flow over the isolator exit area.
    Isolator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AftPressure {
    /// Aft static pressure taken equal to Pt4 (low aft Mach number).
    #[default]
    Total,
    /// Isentropic static pressure at M4 = M2.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub mach: f64,
    /// m
    pub altitude: f64,
    pub inlet: InletModel,
    /// Isolator exit radius, m.
    pub r2: f64,
    /// Nozzle throat radius, m. Geometry metadata only; the nozzle is
    /// ideally expanded.
    pub throat_radius: f64,
    pub r3_initial: f64,
    pub r3_max: f64,
    pub grain_length: f64,
    pub fuel_density: f64,
    pub regression: RegressionParams,
    /// Darcy friction factor for the port loss.
    pub friction_factor: f64,
    pub combustion_efficiency: f64,
    pub nozzle_efficiency: f64,
    pub nozzle_efficiency_mode: NozzleEfficiency,
    pub mass_flux_area: MassFluxArea,
    pub aft_pressure: AftPressure,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            mach: 3.25,
            altitude: 30_000.0,
            inlet: InletModel::default(),
            r2: 46.7e-3,
            throat_radius: 50.4e-3,
            r3_initial: 59.2e-3,
            r3_max: 68.6e-3,
            grain_length: 0.5,
            fuel_density: 900.0,
            regression: RegressionParams::default(),
            friction_factor: 0.02,
            combustion_efficiency: 0.75,
            nozzle_efficiency: 0.95,
            nozzle_efficiency_mode: NozzleEfficiency::Velocity,
            mass_flux_area: MassFluxArea::Port,
            aft_pressure: AftPressure::Total,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        self.inlet.validate()?;
        let positive = [
            ("r2", self.r2),
            ("throat_radius", self.throat_radius),
            ("r3_initial", self.r3_initial),
            ("grain_length", self.grain_length),
            ("fuel_density", self.fuel_density),
            ("regression.alpha", self.regression.alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.r3_initial >= self.r3_max {
            return Err(Error::Config(format!(
                "r3_initial {} must be below r3_max {}",
                self.r3_initial, self.r3_max
            )));
        }
        if self.regression.a < 0.0 || self.regression.c < 0.0 {
            return Err(Error::Config("regression exponents a and c must be nonnegative".into()));
        }
        if !(self.friction_factor >= 0.0) {
            return Err(Error::Config("friction_factor must be nonnegative".into()));
        }
        for (name, v) in [
            ("combustion_efficiency", self.combustion_efficiency),
            ("nozzle_efficiency", self.nozzle_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn isolator_area(&self) -> f64 {
        PI * self.r2 * self.r2
    }

    pub fn initial_state(&self) -> PlantState {
        PlantState {
            r3: self.r3_initial,
            p4_lag: None,
        }
    }

    pub fn grain(&self, r3: f64) -> FuelGrain {
        FuelGrain {
            rho_f: self.fuel_density,
            l_f: self.grain_length,
            r3,
            r3_max: self.r3_max,
            regression: self.regression,
        }
    }
}

fn require_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be positive, got {v}")))
    }
}

pub fn regression_rate(g: f64, p4: f64, tt2: f64, params: &RegressionParams) -> Result<f64> {
    require_positive("mass flux", g)?;
    require_positive("P4", p4)?;
    require_positive("Tt2", tt2)?;
    if params.alpha < 0.0 {
        return Err(Error::Domain(format!("regression alpha {} is negative", params.alpha)));
    }
    Ok(params.alpha * g.powf(params.a) * p4.powf(params.b) * tt2.powf(params.c))
}

/// Darcy–Weisbach total-pressure loss along the grain.
pub fn friction_total_pressure_loss(port: &PortState, l_f: f64, d: f64, f_d: f64) -> Result<f64> {
    require_positive("grain length", l_f)?;
    require_positive("hydraulic diameter", d)?;
    if f_d < 0.0 {
        return Err(Error::Domain(format!("friction factor {f_d} is negative")));
    }
    Ok(f_d / 4.0 * (l_f / d) * (0.5 * port.rho3 * port.u3 * port.u3))
}

pub fn fuel_mass_flow(grain: &FuelGrain, rdot: f64) -> Result<f64> {
    if !(rdot >= 0.0) {
        return Err(Error::Domain(format!("regression rate {rdot} is negative")));
    }
    Ok(2.0 * PI * grain.r3 * grain.l_f * grain.rho_f * rdot)
}

pub fn equivalence_ratio(mdot_f: f64, mdot_air: f64, f_stoich: f64) -> Result<f64> {
    require_positive("air mass flow", mdot_air)?;
    require_positive("stoichiometric ratio", f_stoich)?;
    Ok(mdot_f / mdot_air / f_stoich)
}

pub fn aft_temperature(t4_eq: f64, t2: f64, eta_c: f64) -> f64 {
    eta_c * (t4_eq - t2) + t2
}

/// Ideal exhaust velocity for full expansion from `pt4` to `p0`.
pub fn theoretical_exhaust_velocity(tt4: f64, pt4: f64, p0: f64, gamma4: f64, r4: f64) -> Result<f64> {
    if !(pt4 > p0) {
        return Err(Error::NoExpansion { pt4, p0 });
    }
    if !(gamma4 > 1.0) {
        return Err(Error::Domain(format!("gamma4 = {gamma4} must exceed 1")));
    }
    let expansion = 1.0 - (p0 / pt4).powf((gamma4 - 1.0) / gamma4);
    Ok((2.0 * gamma4 * r4 * tt4 / (gamma4 - 1.0) * expansion).sqrt())
}

/// Nozzle exit velocity with the nozzle efficiency applied to velocity.
pub fn exhaust_velocity(tt4: f64, pt4: f64, p0: f64, gamma4: f64, r4: f64, eta_n: f64) -> Result<f64> {
    Ok(eta_n * theoretical_exhaust_velocity(tt4, pt4, p0, gamma4, r4)?)
}

pub fn thrust(mdot_air: f64, f: f64, u_e: f64, u0: f64) -> f64 {
    mdot_air * (1.0 + f) * u_e - mdot_air * u0
}

/// Corrected mass-flow function `mdot sqrt(R Tt) / (A Pt)` at Mach `m`.
fn flow_function(m: f64, gamma: f64) -> f64 {
    let e = (gamma + 1.0) / (2.0 * (gamma - 1.0));
    gamma.sqrt() * m * (1.0 + 0.5 * (gamma - 1.0) * m * m).powf(-e)
}

/// Subsonic Mach number passing `mdot` through `area` at the given totals.
pub fn subsonic_mach(mdot: f64, area: f64, pt: f64, tt: f64, gamma: f64, r: f64) -> Result<f64> {
    let target = mdot * (r * tt).sqrt() / (area * pt);
    if target >= flow_function(1.0, gamma) {
        return Err(Error::Domain(format!(
            "mass flow {mdot} kg/s exceeds the choking limit of area {area} m^2"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if flow_function(mid, gamma) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Port flow state from station-2 totals expanded to the port area.
pub fn port_state(station: &StationConditions, r3: f64, flux_area: f64) -> Result<PortState> {
    let area = PI * r3 * r3;
    let m3 = subsonic_mach(
        station.mdot,
        area,
        station.total_pressure,
        station.total_temperature,
        GAMMA_AIR,
        R_AIR,
    )?;
    let t3 = station.total_temperature / total_temperature_ratio(m3, GAMMA_AIR);
    let p3 = station.total_pressure / total_pressure_ratio(m3, GAMMA_AIR);
    Ok(PortState {
        rho3: p3 / (R_AIR * t3),
        u3: m3 * (GAMMA_AIR * R_AIR * t3).sqrt(),
        g: station.mdot / flux_area,
    })
}

/// Result of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantStep {
    pub outputs: CombustorOutputs,
    pub state: PlantState,
    /// Set once the port radius has reached `r3_max`.
    pub burnout: bool,
}

/// The SFRJ plant: configuration plus cached thermochemistry.
#[derive(Debug, Clone)]
pub struct Plant {
    config: PlantConfig,
    solver: EquilibriumSolver<'static>,
    f_stoich: f64,
}

impl Plant {
    pub fn new(config: PlantConfig) -> Result<Self> {
        config.validate()?;
        let db = ThermoDb::standard();
        Ok(Plant {
            f_stoich: fuel::f_stoich(db)?,
            solver: EquilibriumSolver::new(db),
            config,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn f_stoich(&self) -> f64 {
        self.f_stoich
    }

    /// Static evaluation of the full chain at `state` without advancing it.
    pub fn evaluate(&self, state: &PlantState, r0: f64, free: &FreestreamConditions) -> Result<CombustorOutputs> {
        let cfg = &self.config;
        let st2 = isolator_exit(&cfg.inlet, free, r0, cfg.isolator_area())?;
        let flux_area = match cfg.mass_flux_area {
            MassFluxArea::Port => PI * state.r3 * state.r3,
            MassFluxArea::Isolator => st2.area,
        };
        let port = port_state(&st2, state.r3, flux_area)?;
        let p4_regression = state.p4_lag.unwrap_or(st2.total_pressure);
        let rdot = regression_rate(port.g, p4_regression, st2.total_temperature, &cfg.regression)?;
        let mdot_f = fuel_mass_flow(&cfg.grain(state.r3), rdot)?;
        let phi_g = equivalence_ratio(mdot_f, st2.mdot, self.f_stoich)?;

        let loss = friction_total_pressure_loss(&port, cfg.grain_length, 2.0 * state.r3, cfg.friction_factor)?;
        let pt4 = st2.total_pressure - loss;
        let p4 = match cfg.aft_pressure {
            AftPressure::Total => pt4,
            AftPressure::Static => pt4 / total_pressure_ratio(st2.mach, GAMMA_AIR),
        };

        let db = ThermoDb::standard();
        let problem = fuel::hp_problem(db, phi_g, st2.static_temperature, p4)?;
        let eq = self.solver.equilibrate_hp(&problem)?;
        let t4 = aft_temperature(eq.temperature, st2.static_temperature, cfg.combustion_efficiency);
        let tt4 = t4 * total_temperature_ratio(st2.mach, eq.gamma);

        let u_e_th = theoretical_exhaust_velocity(tt4, pt4, free.static_pressure, eq.gamma, eq.r)?;
        let u_e = match cfg.nozzle_efficiency_mode {
            NozzleEfficiency::Velocity => cfg.nozzle_efficiency * u_e_th,
            NozzleEfficiency::KineticEnergy => cfg.nozzle_efficiency.sqrt() * u_e_th,
        };
        let f = mdot_f / st2.mdot;
        Ok(CombustorOutputs {
            thrust: thrust(st2.mdot, f, u_e, free.velocity),
            pt4,
            p4,
            t4,
            t4_eq: eq.temperature,
            tt4,
            x_co: eq.composition.mole_fraction("CO"),
            phi_g,
            fuel_air_ratio: f,
            mdot_air: st2.mdot,
            mdot_f,
            rdot,
            u_e,
            u_e_th,
            gamma4: eq.gamma,
            r4: eq.r,
        })
    }

    /// Evaluates the plant and advances the port radius by `rdot * dt`.
    pub fn step(&self, state: &PlantState, r0: f64, free: &FreestreamConditions, dt: f64) -> Result<PlantStep> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step {dt} must be positive")));
        }
        if state.r3 >= self.config.r3_max {
            return Err(Error::Burnout {
                r3: state.r3,
                r3_max: self.config.r3_max,
            });
        }
        let outputs = self.evaluate(state, r0, free)?;
        let r3 = state.r3 + outputs.rdot * dt;
        Ok(PlantStep {
            outputs,
            state: PlantState {
                r3,
                p4_lag: Some(outputs.p4),
            },
            burnout: r3 >= self.config.r3_max,
        })
    }
}

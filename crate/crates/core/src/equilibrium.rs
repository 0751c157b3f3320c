//! Ideal-gas chemical equilibrium by Gibbs free-energy minimization.
//!
//! The fixed-temperature problem is solved with the element-potential
//! iteration of Gordon and McBride: one Lagrange multiplier per element plus
//! a correction to the total mole number are found from a small linear
//! system each Newton step, and species amounts follow from them. The
//! fixed-enthalpy problem wraps that in a bracketed root solve on T.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermo::{molar_to_mass, MixtureState, ThermoDb, P_STANDARD};

/// ln(1e8): species below this mole fraction are "trace" for step control.
const TRACE_LOG: f64 = 18.420_681;
/// ln(1e-12): species below this mole fraction only need to stay there.
const TRACE_SETTLED_LOG: f64 = -27.631_021;
/// ln(1e4): cap on how far a trace species may grow in one step.
const TRACE_STEP_LOG: f64 = 9.210_340_4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumMode {
    /// Temperature, K.
    FixedT(f64),
    /// Enthalpy per kilogram of reactants, J/kg.
    FixedH(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumProblem {
    pub reactant_moles: BTreeMap<String, f64>,
    /// Pa
    pub pressure: f64,
    pub mode: EquilibriumMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub temperature: f64,
    pub composition: MixtureState,
    /// Species amounts for the given reactant amounts, mol.
    pub moles: BTreeMap<String, f64>,
    /// Frozen cp/cv of the product mixture.
    pub gamma: f64,
    /// J/(kg K)
    pub r: f64,
    /// J/(kg K), frozen
    pub cp: f64,
    /// J/kg
    pub enthalpy: f64,
    /// Newton iterations summed over all inner solves.
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Lower clamp on mole fractions during iteration.
    pub trace_floor: f64,
    /// Relative enthalpy tolerance of the HP outer solve.
    pub enthalpy_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 200,
            tolerance: 1e-10,
            trace_floor: 1e-30,
            enthalpy_tolerance: 1e-10,
        }
    }
}

/// Reactant set reduced to the species and elements that can take part.
#[derive(Debug, Clone)]
struct System {
    species: Vec<usize>,
    elements: Vec<String>,
    /// a[i][j]: atoms of element i in active species j
    a: Vec<Vec<f64>>,
    b0: Vec<f64>,
    mass: f64,
    t_min: f64,
    t_max: f64,
}

#[derive(Debug, Clone)]
pub struct EquilibriumSolver<'a> {
    db: &'a ThermoDb,
    pub options: SolverOptions,
}

impl<'a> EquilibriumSolver<'a> {
    pub fn new(db: &'a ThermoDb) -> Self {
        EquilibriumSolver {
            db,
            options: SolverOptions::default(),
        }
    }

    pub fn with_options(db: &'a ThermoDb, options: SolverOptions) -> Self {
        EquilibriumSolver { db, options }
    }

    pub fn solve(&self, problem: &EquilibriumProblem) -> Result<EquilibriumResult> {
        match problem.mode {
            EquilibriumMode::FixedT(_) => self.equilibrate_tp(problem),
            EquilibriumMode::FixedH(_) => self.equilibrate_hp(problem),
        }
    }

    pub fn equilibrate_tp(&self, problem: &EquilibriumProblem) -> Result<EquilibriumResult> {
        let EquilibriumMode::FixedT(t) = problem.mode else {
            return Err(Error::Domain("equilibrate_tp needs a fixed-temperature problem".into()));
        };
        let sys = self.system(problem)?;
        if !(sys.t_min..=sys.t_max).contains(&t) {
            return Err(Error::Range {
                what: "temperature",
                value: t,
                min: sys.t_min,
                max: sys.t_max,
            });
        }
        let init = self.initial_guess(&sys);
        let (moles, iterations) = self.solve_tp(&sys, t, problem.pressure, &init)?;
        self.finish(&sys, t, problem.pressure, &moles, iterations)
    }

    pub fn equilibrate_hp(&self, problem: &EquilibriumProblem) -> Result<EquilibriumResult> {
        let EquilibriumMode::FixedH(target) = problem.mode else {
            return Err(Error::Domain("equilibrate_hp needs a fixed-enthalpy problem".into()));
        };
        let sys = self.system(problem)?;
        let p = problem.pressure;
        let cold = self.initial_guess(&sys);
        let mut iterations = 0;

        let mut eval = |t: f64, init: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (n, it) = self.solve_tp(&sys, t, p, init)?;
            iterations += it;
            Ok((self.specific_enthalpy(&sys, t, &n) - target, n))
        };

        let (mut t_lo, mut t_hi) = (sys.t_min, sys.t_max);
        let (mut f_lo, n_lo) = eval(t_lo, &cold)?;
        let (mut f_hi, n_hi) = eval(t_hi, &cold)?;
        if f_lo > 0.0 || f_hi < 0.0 {
            return Err(Error::Bracket {
                target,
                t_low: t_lo,
                t_high: t_hi,
                h_low: f_lo + target,
                h_high: f_hi + target,
            });
        }
        let tol = self.options.enthalpy_tolerance * target.abs().max(1e3);
        if f_lo.abs() <= tol {
            return self.finish(&sys, t_lo, p, &n_lo, iterations);
        }
        if f_hi.abs() <= tol {
            return self.finish(&sys, t_hi, p, &n_hi, iterations);
        }

        // regula falsi start, then secant steps kept inside the bracket
        let mut t = t_lo - f_lo * (t_hi - t_lo) / (f_hi - f_lo);
        let mut guess = if t - t_lo < t_hi - t { n_lo } else { n_hi };
        let mut prev: Option<(f64, f64)> = None;
        for _ in 0..self.options.max_iterations {
            let (f, n) = eval(t, &guess)?;
            if f.abs() <= tol || (t_hi - t_lo) <= 1e-12 * t {
                return self.finish(&sys, t, p, &n, iterations);
            }
            if f < 0.0 {
                t_lo = t;
                f_lo = f;
            } else {
                t_hi = t;
                f_hi = f;
            }
            let mut next = match prev {
                Some((tp, fp)) if fp != f => t - f * (t - tp) / (f - fp),
                _ => {
                    let cp = self.frozen_cp(&sys, t, &n);
                    t - f / cp
                }
            };
            if !(next > t_lo && next < t_hi) {
                next = t_lo - f_lo * (t_hi - t_lo) / (f_hi - f_lo);
                if !(next > t_lo && next < t_hi) {
                    next = 0.5 * (t_lo + t_hi);
                }
            }
            prev = Some((t, f));
            guess = n;
            t = next;
        }
        Err(Error::NonConvergence {
            iterations,
            stationarity: f64::NAN,
            elements: f64::NAN,
        })
    }

    fn system(&self, problem: &EquilibriumProblem) -> Result<System> {
        if !(problem.pressure > 0.0) || !problem.pressure.is_finite() {
            return Err(Error::Domain(format!(
                "pressure must be positive, got {}",
                problem.pressure
            )));
        }
        let mut b: BTreeMap<&str, f64> = BTreeMap::new();
        let mut mass = 0.0;
        for (name, &n) in &problem.reactant_moles {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(Error::Domain(format!("reactant {name} has invalid amount {n}")));
            }
            let sp = self.db.get(name)?;
            mass += n * sp.molar_mass;
            for (el, &count) in &sp.elements {
                *b.entry(el.as_str()).or_insert(0.0) += n * count as f64;
            }
        }
        b.retain(|_, v| *v > 0.0);
        if b.is_empty() {
            return Err(Error::Domain("no reactant with positive amount".into()));
        }
        let elements: Vec<String> = b.keys().map(|s| s.to_string()).collect();
        let species: Vec<usize> = self
            .db
            .species()
            .iter()
            .enumerate()
            .filter(|(_, sp)| sp.elements.keys().all(|e| b.contains_key(e.as_str())))
            .map(|(i, _)| i)
            .collect();
        let a = elements
            .iter()
            .map(|el| {
                species
                    .iter()
                    .map(|&j| self.db.species()[j].elements.get(el).copied().unwrap_or(0) as f64)
                    .collect()
            })
            .collect();
        let active = species.iter().map(|&j| &self.db.species()[j]);
        let t_min = active.clone().map(|s| s.t_min).fold(f64::MIN, f64::max);
        let t_max = active.map(|s| s.t_max).fold(f64::MAX, f64::min);
        Ok(System {
            species,
            b0: elements.iter().map(|e| b[e.as_str()]).collect(),
            elements,
            a,
            mass,
            t_min,
            t_max,
        })
    }

    fn name(&self, sys: &System, j: usize) -> &str {
        &self.db.species()[sys.species[j]].name
    }

    /// Complete-combustion estimate: C to CO, H to H2O, remaining CO to CO2,
    /// leftover O as O2 and leftover H as H2. Every other species is seeded
    /// at a small fraction so the Newton matrix is well formed.
    fn initial_guess(&self, sys: &System) -> Vec<f64> {
        let total_b: f64 = sys.b0.iter().sum();
        let el = |name: &str| {
            sys.elements
                .iter()
                .position(|e| e == name)
                .map(|i| sys.b0[i])
                .unwrap_or(0.0)
        };
        let (c, h, mut o, n) = (el("C"), el("H"), el("O"), el("N"));
        let mut amounts: BTreeMap<&str, f64> = BTreeMap::new();
        let co = c.min(o);
        o -= co;
        let h2o = (h / 2.0).min(o);
        o -= h2o;
        let co2 = co.min(o);
        o -= co2;
        amounts.insert("CO", co - co2);
        amounts.insert("CO2", co2);
        amounts.insert("H2O", h2o);
        amounts.insert("H2", (h - 2.0 * h2o) / 2.0);
        amounts.insert("O2", o / 2.0);
        amounts.insert("N2", n / 2.0);
        amounts.insert("C4H6", (c - co) / 4.0);

        let seed = 1e-6 * total_b / sys.species.len() as f64;
        let mut guess: Vec<f64> = (0..sys.species.len())
            .map(|j| amounts.get(self.name(sys, j)).copied().unwrap_or(0.0).max(seed))
            .collect();
        if guess.iter().all(|&x| x <= seed) {
            guess
                .iter_mut()
                .for_each(|x| *x = 0.1 * total_b / sys.species.len() as f64);
        }
        guess
    }

    fn solve_tp(&self, sys: &System, t: f64, p: f64, init: &[f64]) -> Result<(Vec<f64>, usize)> {
        let ns = sys.species.len();
        let m = sys.elements.len();
        let db = self.db.species();
        let g0: Vec<f64> = sys.species.iter().map(|&j| db[j].g_rt(t)).collect();
        let ln_p = (p / P_STANDARD).ln();
        let floor = self.options.trace_floor.ln();

        let mut ln_nj: Vec<f64> = init.iter().map(|&n| n.max(f64::MIN_POSITIVE).ln()).collect();
        let mut ln_n = init.iter().sum::<f64>().ln();
        let mut nj = vec![0.0; ns];
        let mut mu = vec![0.0; ns];
        let mut dln_nj = vec![0.0; ns];
        let mut matrix = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut rhs = DVector::<f64>::zeros(m + 1);
        let (mut stationarity, mut element_residual) = (f64::INFINITY, f64::INFINITY);

        for iter in 1..=self.options.max_iterations {
            for j in 0..ns {
                ln_nj[j] = ln_nj[j].max(ln_n + floor);
                nj[j] = ln_nj[j].exp();
                mu[j] = g0[j] + ln_nj[j] - ln_n + ln_p;
            }
            let sum_n: f64 = nj.iter().sum();

            matrix.fill(0.0);
            rhs.fill(0.0);
            element_residual = 0.0;
            for k in 0..m {
                let ak = &sys.a[k];
                let bk: f64 = (0..ns).map(|j| ak[j] * nj[j]).sum();
                element_residual = f64::max(element_residual, (sys.b0[k] - bk).abs() / sys.b0[k]);
                for i in 0..m {
                    let ai = &sys.a[i];
                    matrix[(k, i)] = (0..ns).map(|j| ak[j] * ai[j] * nj[j]).sum();
                }
                matrix[(k, m)] = bk;
                matrix[(m, k)] = bk;
                rhs[k] = sys.b0[k] - bk + (0..ns).map(|j| ak[j] * nj[j] * mu[j]).sum::<f64>();
            }
            let ln_n_now = ln_n.exp();
            matrix[(m, m)] = sum_n - ln_n_now;
            rhs[m] = ln_n_now - sum_n + (0..ns).map(|j| nj[j] * mu[j]).sum::<f64>();

            let sol = matrix.clone().lu().solve(&rhs).ok_or(Error::NonConvergence {
                iterations: iter,
                stationarity,
                elements: element_residual,
            })?;
            let dln_n = sol[m];
            for j in 0..ns {
                let pi: f64 = (0..m).map(|i| sys.a[i][j] * sol[i]).sum();
                dln_nj[j] = -mu[j] + pi + dln_n;
            }

            // Every species must satisfy its chemical-potential condition
            // unless it is below the trace level and stays there after a
            // full step; such species carry < 1e-12 of the mixture.
            stationarity = dln_n.abs();
            for j in 0..ns {
                let ln_x = ln_nj[j] - ln_n;
                let settled_trace = ln_x < TRACE_SETTLED_LOG && ln_x + dln_nj[j] < TRACE_SETTLED_LOG;
                if !settled_trace {
                    stationarity = stationarity.max(dln_nj[j].abs());
                }
            }
            if !stationarity.is_finite() {
                break;
            }
            if stationarity <= self.options.tolerance && element_residual <= self.options.tolerance {
                return Ok((nj, iter));
            }

            // step control
            let mut largest = 5.0 * dln_n.abs();
            let mut lambda: f64 = 1.0;
            for j in 0..ns {
                let ln_x = ln_nj[j] - ln_n;
                if ln_x > -TRACE_LOG {
                    largest = largest.max(dln_nj[j].abs());
                } else if dln_nj[j] >= 0.0 {
                    let d = dln_nj[j] - dln_n;
                    if d > 0.0 {
                        lambda = lambda.min(((-ln_x - TRACE_STEP_LOG) / d).abs());
                    }
                }
            }
            if largest > 2.0 {
                lambda = lambda.min(2.0 / largest);
            }
            for j in 0..ns {
                ln_nj[j] += lambda * dln_nj[j];
            }
            ln_n += lambda * dln_n;
        }
        Err(Error::NonConvergence {
            iterations: self.options.max_iterations,
            stationarity,
            elements: element_residual,
        })
    }

    fn specific_enthalpy(&self, sys: &System, t: f64, n: &[f64]) -> f64 {
        let db = self.db.species();
        let h: f64 = sys.species.iter().zip(n).map(|(&j, &nj)| nj * db[j].reduced(t).1).sum();
        h * crate::thermo::R_UNIVERSAL * t / sys.mass
    }

    fn frozen_cp(&self, sys: &System, t: f64, n: &[f64]) -> f64 {
        let db = self.db.species();
        let cp: f64 = sys.species.iter().zip(n).map(|(&j, &nj)| nj * db[j].reduced(t).0).sum();
        cp * crate::thermo::R_UNIVERSAL / sys.mass
    }

    fn finish(&self, sys: &System, t: f64, p: f64, n: &[f64], iterations: usize) -> Result<EquilibriumResult> {
        let db = self.db.species();
        let total: f64 = n.iter().sum();
        let (mut h, mut cp, mut mw) = (0.0, 0.0, 0.0);
        let mut moles = BTreeMap::new();
        let mut fractions = BTreeMap::new();
        for (&j, &nj) in sys.species.iter().zip(n) {
            let x = nj / total;
            let (cpr, hrt, _) = db[j].reduced(t);
            h += x * hrt * crate::thermo::R_UNIVERSAL * t;
            cp += x * cpr * crate::thermo::R_UNIVERSAL;
            mw += x * db[j].molar_mass;
            moles.insert(db[j].name.clone(), nj);
            fractions.insert(db[j].name.clone(), x);
        }
        let props = molar_to_mass(h, cp, mw);
        Ok(EquilibriumResult {
            temperature: t,
            composition: MixtureState {
                temperature: t,
                pressure: p,
                mole_fractions: fractions,
            },
            moles,
            gamma: props.gamma,
            r: props.r,
            cp: props.cp,
            enthalpy: self.specific_enthalpy(sys, t, n),
            iterations,
            converged: true,
        })
    }
}

/// Total Gibbs energy (J) of an ideal-gas mixture with the given amounts.
pub fn gibbs_energy(db: &ThermoDb, t: f64, p: f64, moles: &BTreeMap<String, f64>) -> Result<f64> {
    let total: f64 = moles.values().sum();
    let ln_p = (p / P_STANDARD).ln();
    let mut g = 0.0;
    for (name, &n) in moles {
        if n > 0.0 {
            let sp = db.get(name)?;
            g += n * (sp.g_rt(t) + (n / total).ln() + ln_p);
        }
    }
    Ok(g * crate::thermo::R_UNIVERSAL * t)
}

/// Element totals (mol of atoms) of a set of species amounts.
pub fn element_totals(db: &ThermoDb, moles: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (name, &n) in moles {
        for (el, &c) in &db.get(name)?.elements {
            *out.entry(el.clone()).or_insert(0.0) += n * c as f64;
        }
    }
    Ok(out)
}

/// Specific enthalpy (J/kg) of a frozen mixture with the given amounts.
pub fn frozen_enthalpy(db: &ThermoDb, t: f64, moles: &BTreeMap<String, f64>) -> Result<f64> {
    let (mut h, mut mass) = (0.0, 0.0);
    for (name, &n) in moles {
        let sp = db.get(name)?;
        h += n * sp.cp_h_s(t)?.h;
        mass += n * sp.molar_mass;
    }
    Ok(h / mass)
}

/// Fuel and air mixture helpers for the 1,3-butadiene grain.
pub mod fuel {
    use super::*;

    pub const FUEL: &str = "C4H6";
    /// Mole fractions of the two-component air model.
    pub const AIR_O2: f64 = 0.21;
    pub const AIR_N2: f64 = 0.79;

    /// Mean molar mass of the two-component air model, kg/mol.
    pub fn air_molar_mass(db: &ThermoDb) -> Result<f64> {
        Ok(AIR_O2 * db.get("O2")?.molar_mass + AIR_N2 * db.get("N2")?.molar_mass)
    }

    /// Stoichiometric fuel/air mass ratio for C4H6 + 5.5 O2 -> 4 CO2 + 3 H2O.
    pub fn f_stoich(db: &ThermoDb) -> Result<f64> {
        let air_moles = 5.5 / AIR_O2;
        Ok(db.get(FUEL)?.molar_mass / (air_moles * air_molar_mass(db)?))
    }

    /// Reactant amounts for 1 kg of air carrying `fuel_air_ratio` kg of fuel.
    pub fn reactants(db: &ThermoDb, fuel_air_ratio: f64) -> Result<BTreeMap<String, f64>> {
        let air = 1.0 / air_molar_mass(db)?;
        let mut r = BTreeMap::new();
        r.insert("O2".to_string(), AIR_O2 * air);
        r.insert("N2".to_string(), AIR_N2 * air);
        if fuel_air_ratio > 0.0 {
            r.insert(FUEL.to_string(), fuel_air_ratio / db.get(FUEL)?.molar_mass);
        }
        Ok(r)
    }

    /// Adiabatic constant-pressure problem for reactants entering at `t_in`.
    pub fn hp_problem(db: &ThermoDb, phi: f64, t_in: f64, pressure: f64) -> Result<EquilibriumProblem> {
        let reactant_moles = reactants(db, phi * f_stoich(db)?)?;
        let h = frozen_enthalpy(db, t_in, &reactant_moles)?;
        Ok(EquilibriumProblem {
            reactant_moles,
            pressure,
            mode: EquilibriumMode::FixedH(h),
        })
    }
}

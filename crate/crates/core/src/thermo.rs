//! Ideal-gas species and mixture properties from NASA 7-coefficient fits.
//!
//! The bundled database (`data/thermo.dat`) covers the reduced
//! 1,3-butadiene/air product set. See that file for the record format.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Universal gas constant, J/(mol K).
pub const R_UNIVERSAL: f64 = 8.314_462_618;
/// Standard-state pressure of the fits, Pa.
pub const P_STANDARD: f64 = 1.0e5;

const EMBEDDED: &str = include_str!("../data/thermo.dat");

/// Standard atomic weights, kg/mol. Species masses are rebuilt from these so
/// that reactants and products balance exactly; the tabulated value in the
/// data file is only checked against the formula (it is rounded there).
const ATOMIC_WEIGHTS: [(&str, f64); 4] = [
    ("C", 0.012_010_7),
    ("H", 0.001_007_94),
    ("N", 0.014_006_7),
    ("O", 0.015_999_4),
];
const MOLAR_MASS_TOLERANCE: f64 = 1e-5;

fn formula_mass(elements: &BTreeMap<String, u32>) -> Option<f64> {
    elements.iter().try_fold(0.0, |acc, (el, &n)| {
        let w = ATOMIC_WEIGHTS.iter().find(|(sym, _)| sym == el)?.1;
        Some(acc + n as f64 * w)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesThermo {
    pub name: String,
    /// kg/mol
    pub molar_mass: f64,
    pub elements: BTreeMap<String, u32>,
    pub low: [f64; 7],
    pub high: [f64; 7],
    pub t_min: f64,
    pub t_common: f64,
    pub t_max: f64,
}

/// Molar properties at one temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MolarProps {
    /// J/(mol K)
    pub cp: f64,
    /// J/mol, including heat of formation
    pub h: f64,
    /// J/(mol K) at the standard-state pressure
    pub s: f64,
}

impl SpeciesThermo {
    fn coeffs(&self, t: f64) -> &[f64; 7] {
        if t < self.t_common {
            &self.low
        } else {
            &self.high
        }
    }

    pub fn check_range(&self, t: f64) -> Result<()> {
        if t.is_nan() || t < self.t_min || t > self.t_max {
            return Err(Error::Range {
                what: "temperature",
                value: t,
                min: self.t_min,
                max: self.t_max,
            });
        }
        Ok(())
    }

    /// Dimensionless cp/R, h/(RT), s/R with no range check.
    pub(crate) fn reduced(&self, t: f64) -> (f64, f64, f64) {
        let a = self.coeffs(t);
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let cp = a[0] + a[1] * t + a[2] * t2 + a[3] * t3 + a[4] * t4;
        let h = a[0] + a[1] * t / 2.0 + a[2] * t2 / 3.0 + a[3] * t3 / 4.0 + a[4] * t4 / 5.0 + a[5] / t;
        let s = a[0] * t.ln() + a[1] * t + a[2] * t2 / 2.0 + a[3] * t3 / 3.0 + a[4] * t4 / 4.0 + a[6];
        (cp, h, s)
    }

    /// cp, h and s per mole at temperature `t`.
    pub fn cp_h_s(&self, t: f64) -> Result<MolarProps> {
        self.check_range(t)?;
        let (cp, h, s) = self.reduced(t);
        Ok(MolarProps {
            cp: cp * R_UNIVERSAL,
            h: h * R_UNIVERSAL * t,
            s: s * R_UNIVERSAL,
        })
    }

    /// Standard-state g/(RT).
    pub(crate) fn g_rt(&self, t: f64) -> f64 {
        let (_, h, s) = self.reduced(t);
        h - s
    }
}

/// Free-function form of [`SpeciesThermo::cp_h_s`].
pub fn species_cp_h_s(species: &SpeciesThermo, t: f64) -> Result<MolarProps> {
    species.cp_h_s(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermoDb {
    species: Vec<SpeciesThermo>,
}

impl ThermoDb {
    /// The bundled species set, parsed once.
    pub fn standard() -> &'static ThermoDb {
        static DB: OnceLock<ThermoDb> = OnceLock::new();
        DB.get_or_init(|| ThermoDb::parse(EMBEDDED).expect("bundled thermo data is well formed"))
    }

    pub fn parse(text: &str) -> Result<ThermoDb> {
        let mut species: Vec<SpeciesThermo> = Vec::new();
        let mut pending: Option<(SpeciesThermo, bool, bool)> = None;

        let finish = |p: Option<(SpeciesThermo, bool, bool)>, line: usize, out: &mut Vec<SpeciesThermo>| {
            if let Some((sp, low, high)) = p {
                if !(low && high) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("species {} is missing a coefficient row", sp.name),
                    });
                }
                out.push(sp);
            }
            Ok(())
        };

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            match tokens[0] {
                "species" => {
                    finish(pending.take(), line_no, &mut species)?;
                    if tokens.len() != 7 {
                        return Err(perr(format!("expected 7 fields, found {}", tokens.len())));
                    }
                    let num = |s: &str| s.parse::<f64>().map_err(|e| perr(format!("{s}: {e}")));
                    let mut elements = BTreeMap::new();
                    for part in tokens[3].split(',') {
                        let (el, count) = part
                            .split_once(':')
                            .ok_or_else(|| perr(format!("bad element entry `{part}`")))?;
                        let count: u32 = count.parse().map_err(|e| perr(format!("{part}: {e}")))?;
                        elements.insert(el.to_string(), count);
                    }
                    let sp = SpeciesThermo {
                        name: tokens[1].to_string(),
                        molar_mass: num(tokens[2])?,
                        elements,
                        low: [0.0; 7],
                        high: [0.0; 7],
                        t_min: num(tokens[4])?,
                        t_common: num(tokens[5])?,
                        t_max: num(tokens[6])?,
                    };
                    if !(sp.t_min < sp.t_common && sp.t_common < sp.t_max) {
                        return Err(perr(format!("{}: temperatures not ordered", sp.name)));
                    }
                    if sp.molar_mass <= 0.0 {
                        return Err(perr(format!("{}: nonpositive molar mass", sp.name)));
                    }
                    let mut sp = sp;
                    if let Some(m) = formula_mass(&sp.elements) {
                        if ((sp.molar_mass - m) / m).abs() > MOLAR_MASS_TOLERANCE {
                            return Err(perr(format!(
                                "{}: molar mass {} does not match formula mass {m}",
                                sp.name, sp.molar_mass
                            )));
                        }
                        sp.molar_mass = m;
                    }
                    if species.iter().any(|s| s.name == sp.name) {
                        return Err(perr(format!("duplicate species {}", sp.name)));
                    }
                    pending = Some((sp, false, false));
                }
                kind @ ("low" | "high") => {
                    let Some((sp, low, high)) = pending.as_mut() else {
                        return Err(perr("coefficient row before any species".into()));
                    };
                    if tokens.len() != 8 {
                        return Err(perr(format!("expected 7 coefficients, found {}", tokens.len() - 1)));
                    }
                    let mut a = [0.0; 7];
                    for (slot, tok) in a.iter_mut().zip(&tokens[1..]) {
                        *slot = tok.parse().map_err(|e| perr(format!("{tok}: {e}")))?;
                    }
                    if kind == "low" {
                        sp.low = a;
                        *low = true;
                    } else {
                        sp.high = a;
                        *high = true;
                    }
                }
                other => return Err(perr(format!("unexpected record `{other}`"))),
            }
        }
        finish(pending.take(), text.lines().count(), &mut species)?;
        Ok(ThermoDb { species })
    }

    pub fn species(&self) -> &[SpeciesThermo] {
        &self.species
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.species
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownSpecies(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&SpeciesThermo> {
        self.index_of(name).map(|i| &self.species[i])
    }
}

/// Temperature, pressure and composition of an ideal-gas mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    pub temperature: f64,
    pub pressure: f64,
    pub mole_fractions: BTreeMap<String, f64>,
}

impl MixtureState {
    /// Builds a state from unnormalized amounts; fractions are normalized.
    pub fn from_moles<'a>(
        temperature: f64,
        pressure: f64,
        moles: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<MixtureState> {
        let moles: Vec<(&str, f64)> = moles.into_iter().collect();
        if moles.iter().any(|&(_, n)| !(n >= 0.0) || !n.is_finite()) {
            return Err(Error::Domain("mole amounts must be finite and nonnegative".into()));
        }
        let total: f64 = moles.iter().map(|&(_, n)| n).sum();
        if total <= 0.0 {
            return Err(Error::Domain("mixture has no moles".into()));
        }
        let mut mole_fractions = BTreeMap::new();
        for (name, n) in moles {
            *mole_fractions.entry(name.to_string()).or_insert(0.0) += n / total;
        }
        Ok(MixtureState {
            temperature,
            pressure,
            mole_fractions,
        })
    }

    pub fn mole_fraction(&self, name: &str) -> f64 {
        self.mole_fractions.get(name).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.mole_fractions.values().sum();
        if self.mole_fractions.values().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "mole fractions must be nonnegative and sum to 1 (sum {sum})"
            )));
        }
        if !(self.temperature > 0.0) || !(self.pressure > 0.0) {
            return Err(Error::Domain("temperature and pressure must be positive".into()));
        }
        Ok(())
    }
}

/// Mass-specific mixture properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureProperties {
    /// J/kg
    pub h: f64,
    /// J/(kg K)
    pub cp: f64,
    pub gamma: f64,
    /// J/(kg K)
    pub r: f64,
    /// kg/mol
    pub molar_mass: f64,
}

pub fn mixture_properties(db: &ThermoDb, state: &MixtureState) -> Result<MixtureProperties> {
    state.validate()?;
    let (mut h, mut cp, mut mw) = (0.0, 0.0, 0.0);
    for (name, &x) in &state.mole_fractions {
        let sp = db.get(name)?;
        let p = sp.cp_h_s(state.temperature)?;
        h += x * p.h;
        cp += x * p.cp;
        mw += x * sp.molar_mass;
    }
    Ok(molar_to_mass(h, cp, mw))
}

pub(crate) fn molar_to_mass(h_molar: f64, cp_molar: f64, molar_mass: f64) -> MixtureProperties {
    let r = R_UNIVERSAL / molar_mass;
    let cp = cp_molar / molar_mass;
    MixtureProperties {
        h: h_molar / molar_mass,
        cp,
        gamma: cp / (cp - r),
        r,
        molar_mass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn db() -> &'static ThermoDb {
        ThermoDb::standard()
    }

    #[test]
    fn bundled_set() {
        let names: Vec<&str> = db().species().iter().map(|s| s.name.as_str()).collect();
        for n in ["C4H6", "O2", "N2", "CO2", "CO", "H2O", "H2", "OH", "H", "O", "NO"] {
            assert!(names.contains(&n), "missing {n}");
        }
        assert_eq!(names.len(), 11);
    }

    #[test]
    fn molar_mass_must_match_formula() {
        for sp in db().species() {
            assert_eq!(sp.molar_mass, formula_mass(&sp.elements).unwrap());
        }
        let bad = "species X 0.0325 O:2 200 1000 3500\nlow 1 0 0 0 0 0 0\nhigh 1 0 0 0 0 0 0\n";
        assert!(matches!(ThermoDb::parse(bad), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn nitrogen_reference_state() {
        let n2 = db().get("N2").unwrap();
        assert!(n2.cp_h_s(298.15).unwrap().h.abs() < 50.0);
        assert_relative_eq!(n2.cp_h_s(300.0).unwrap().cp, 29.1, max_relative = 0.01);
    }

    #[test]
    fn formation_enthalpies() {
        // JANAF / ATcT values, kJ/mol; the C4H6 fit starts at 300 K
        for &(name, hf) in &[("CO2", -393.51), ("H2O", -241.83), ("CO", -110.53), ("C4H6", 110.2)] {
            let sp = db().get(name).unwrap();
            let h = sp.cp_h_s(sp.t_min.max(298.15)).unwrap().h / 1000.0;
            assert!((h - hf).abs() < 0.5, "{name}: {h} vs {hf}");
        }
    }

    #[test]
    fn fit_joint_continuity() {
        for sp in db().species() {
            let lo = sp.cp_h_s(sp.t_common - 1e-9).unwrap();
            let hi = sp.cp_h_s(sp.t_common + 1e-9).unwrap();
            assert!(((hi.cp - lo.cp) / lo.cp).abs() < 0.005, "{}", sp.name);
        }
    }

    #[test]
    fn enthalpy_monotone() {
        for sp in db().species() {
            let mut t = sp.t_min;
            let mut prev = sp.cp_h_s(t).unwrap();
            while t < sp.t_max {
                t = (t + 10.0).min(sp.t_max);
                let p = sp.cp_h_s(t).unwrap();
                assert!(p.cp > 0.0 && p.h > prev.h, "{} at {t}", sp.name);
                prev = p;
            }
        }
    }

    #[test]
    fn range_errors() {
        let n2 = db().get("N2").unwrap();
        assert!(matches!(n2.cp_h_s(150.0), Err(Error::Range { .. })));
        assert!(matches!(species_cp_h_s(n2, 7000.0), Err(Error::Range { .. })));
    }

    #[test]
    fn air_gamma() {
        let air = MixtureState::from_moles(300.0, 101_325.0, [("N2", 0.79), ("O2", 0.21)]).unwrap();
        let p = mixture_properties(db(), &air).unwrap();
        assert!((p.gamma - 1.40).abs() < 0.005, "{}", p.gamma);
        // no argon in the two-component model
        let mw = 0.79 * 0.0280134 + 0.21 * 0.0319988;
        assert_relative_eq!(p.r, R_UNIVERSAL / mw, max_relative = 1e-12);
    }

    #[test]
    fn single_component_reduction() {
        let co2 = db().get("CO2").unwrap();
        let s = MixtureState::from_moles(1500.0, 1e5, [("CO2", 2.0)]).unwrap();
        let p = mixture_properties(db(), &s).unwrap();
        let m = co2.cp_h_s(1500.0).unwrap();
        assert_relative_eq!(p.h, m.h / co2.molar_mass, max_relative = 1e-14);
        assert_relative_eq!(p.cp, m.cp / co2.molar_mass, max_relative = 1e-14);
        assert_relative_eq!(p.r, R_UNIVERSAL / co2.molar_mass, max_relative = 1e-14);
    }

    #[test]
    fn unknown_species() {
        let s = MixtureState::from_moles(1000.0, 1e5, [("Ar", 1.0)]).unwrap();
        assert!(matches!(mixture_properties(db(), &s), Err(Error::UnknownSpecies(_))));
    }

    #[test]
    fn molar_linearity() {
        // molar enthalpy of a blend is the mole-weighted mean at fixed T
        let t = 1800.0;
        let mix = |a: f64| {
            let s = MixtureState::from_moles(t, 1e5, [("H2O", a), ("CO", 1.0 - a)]).unwrap();
            let p = mixture_properties(db(), &s).unwrap();
            p.h * p.molar_mass
        };
        let (h0, h1) = (mix(0.0), mix(1.0));
        for &a in &[0.1, 0.35, 0.8] {
            assert_relative_eq!(mix(a), a * h1 + (1.0 - a) * h0, max_relative = 1e-12);
        }
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(ThermoDb::parse("species X 0.1 X:1 300 1000 3000\nlow 1 2 3 4 5 6 7\n").is_err());
        assert!(ThermoDb::parse("low 1 2 3 4 5 6 7\n").is_err());
        assert!(ThermoDb::parse("species X 0.1 X:1 3000 1000 300\n").is_err());
        let ok = "species X 0.1 X:1 300 1000 3000\nlow 1 0 0 0 0 0 0\nhigh 1 0 0 0 0 0 0\n";
        assert_eq!(ThermoDb::parse(ok).unwrap().species().len(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn positivity(t in 300.0f64..3000.0, x in proptest::collection::vec(0.0f64..1.0, 11)) {
                prop_assume!(x.iter().sum::<f64>() > 1e-3);
                let names = db().species().iter().map(|s| s.name.as_str());
                let s = MixtureState::from_moles(t, 1e5, names.zip(x.iter().copied())).unwrap();
                let p = mixture_properties(db(), &s).unwrap();
                prop_assert!(p.gamma > 1.0 && p.r > 0.0);
            }
        }
    }
}

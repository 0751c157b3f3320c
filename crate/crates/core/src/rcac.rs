//! Retrospective cost adaptive control (RCAC) specialised to a SISO PID law.
//!
//! The controller is written in regressor form `u_k = Φ_k θ`, where
//! `Φ_k = [z_k, γ_k, z_k − z_{k−1}]` and `θ = [K_P, K_I, K_D]`. Gains are
//! updated by recursive least squares on the retrospective performance
//! `ẑ(θ) = z_k + Φ_f,k θ − u_f,k`, where `Φ_f` and `u_f` are past regressors
//! and inputs passed through the FIR filter `G_f(q) = Σ N_i q^{-i}`.
//!
//! Sign convention: the filter coefficients model how the performance
//! variable responds to the control input. The default performance variable
//! is `z = y − r`, for which `N_1 = +1` matches a plant whose output grows
//! with the input.

use std::collections::VecDeque;

use nalgebra::{Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorConvention {
    /// `z = y − r`
    #[default]
    MeasuredMinusCommand,
    /// `z = r − y`
    CommandMinusMeasured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RcacConfig {
    /// `P_0 = p I_3`
    pub p: f64,
    pub rz: f64,
    /// Control weight. Accepted for completeness; the retrospective cost
    /// used here has no control-penalty term, so it has no effect.
    pub ru: f64,
    /// `N_1 .. N_nf`
    pub filter: Vec<f64>,
    pub theta0: [f64; 3],
    pub error_convention: ErrorConvention,
}

impl Default for RcacConfig {
    fn default() -> Self {
        RcacConfig {
            p: 1e-5,
            rz: 1.0,
            ru: 0.0,
            filter: vec![1.0],
            theta0: [0.0; 3],
            error_convention: ErrorConvention::MeasuredMinusCommand,
        }
    }
}

impl RcacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("rcac.p must be positive, got {}", self.p)));
        }
        if !(self.rz > 0.0 && self.rz.is_finite()) {
            return Err(Error::Config(format!("rcac.rz must be positive, got {}", self.rz)));
        }
        if self.filter.is_empty() || self.filter.iter().any(|n| !n.is_finite()) {
            return Err(Error::Config(
                "rcac.filter needs at least one finite coefficient".into(),
            ));
        }
        if self.theta0.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("rcac.theta0 must be finite".into()));
        }
        Ok(())
    }

    pub fn performance(&self, command: f64, measurement: f64) -> f64 {
        match self.error_convention {
            ErrorConvention::MeasuredMinusCommand => measurement - command,
            ErrorConvention::CommandMinusMeasured => command - measurement,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcacState {
    pub theta: Vector3<f64>,
    pub p: Matrix3<f64>,
    /// Running sum of every performance value seen.
    pub gamma_accum: f64,
    pub z_prev: f64,
    /// Most recent first: `(Φ_{k−1}, u_{k−1}), (Φ_{k−2}, u_{k−2}), ...`
    history: VecDeque<(RowVector3<f64>, f64)>,
}

impl RcacState {
    pub fn new(cfg: &RcacConfig) -> Self {
        RcacState {
            theta: Vector3::from(cfg.theta0),
            p: Matrix3::identity() * cfg.p,
            gamma_accum: 0.0,
            z_prev: 0.0,
            history: VecDeque::with_capacity(cfg.filter.len() + 1),
        }
    }

    /// Appends the regressor and input of the current step, keeping only as
    /// many entries as the filter needs.
    pub fn record(&mut self, phi: RowVector3<f64>, u: f64, filter_len: usize) {
        self.history.push_front((phi, u));
        self.history.truncate(filter_len);
    }

    /// `(Φ_f, u_f)` from the stored history, zero-padded at start-up.
    pub fn filtered(&self, filter: &[f64]) -> (RowVector3<f64>, f64) {
        filter
            .iter()
            .zip(self.history.iter())
            .fold((RowVector3::zeros(), 0.0), |(phi_f, u_f), (n, (phi, u))| {
                (phi_f + phi * *n, u_f + n * u)
            })
    }

    pub fn gains(&self) -> [f64; 3] {
        [self.theta[0], self.theta[1], self.theta[2]]
    }
}

pub fn build_regressor(z: f64, gamma: f64, z_prev: f64) -> RowVector3<f64> {
    RowVector3::new(z, gamma, z - z_prev)
}

pub fn control_output(phi: &RowVector3<f64>, theta: &Vector3<f64>) -> f64 {
    (phi * theta)[(0, 0)]
}

/// One recursive-least-squares gain update driven by performance `z_k`.
pub fn rcac_update(state: &mut RcacState, cfg: &RcacConfig, z: f64) {
    let (phi_f, u_f) = state.filtered(&cfg.filter);
    // P Φ_fᵀ; the downdate v vᵀ/den keeps P exactly symmetric
    let v = state.p * phi_f.transpose();
    let den = 1.0 / cfg.rz + (phi_f * v)[(0, 0)];
    state.p -= v * v.transpose() / den;
    let residual = z + control_output(&phi_f, &state.theta) - u_f;
    state.theta -= state.p * phi_f.transpose() * (cfg.rz * residual);
}

/// Output of one controller step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcacStep {
    pub z: f64,
    pub u: f64,
    pub phi: RowVector3<f64>,
}

/// Forms the performance variable, updates the gains and returns the
/// control to apply over the next interval.
pub fn rcac_pid_step(state: &mut RcacState, cfg: &RcacConfig, command: f64, measurement: f64) -> RcacStep {
    let z = cfg.performance(command, measurement);
    state.gamma_accum += z;
    let phi = build_regressor(z, state.gamma_accum, state.z_prev);
    rcac_update(state, cfg, z);
    let u = control_output(&phi, &state.theta);
    state.record(phi, u, cfg.filter.len());
    state.z_prev = z;
    RcacStep { z, u, phi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Sample {
        z: f64,
        phi: RowVector3<f64>,
        u: f64,
    }

    fn random_sequence(rng: &mut ChaCha8Rng, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|_| Sample {
                z: rng.gen_range(-1.0..1.0),
                phi: RowVector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                u: rng.gen_range(-1.0..1.0),
            })
            .collect()
    }

    /// Gains after each sample, via the recursion.
    fn recursive_thetas(cfg: &RcacConfig, data: &[Sample]) -> Vec<Vector3<f64>> {
        let mut s = RcacState::new(cfg);
        data.iter()
            .map(|d| {
                rcac_update(&mut s, cfg, d.z);
                s.record(d.phi, d.u, cfg.filter.len());
                s.theta
            })
            .collect()
    }

    /// Direct minimiser of the accumulated retrospective cost over the first
    /// `len` samples via the normal equations.
    fn batch_theta(cfg: &RcacConfig, data: &[Sample], len: usize) -> Vector3<f64> {
        let p0_inv = Matrix3::identity() / cfg.p;
        let theta0 = Vector3::from(cfg.theta0);
        let mut lhs = p0_inv;
        let mut rhs = p0_inv * theta0;
        for k in 0..len {
            let mut phi_f = RowVector3::zeros();
            let mut u_f = 0.0;
            for (i, n) in cfg.filter.iter().enumerate() {
                if k > i {
                    phi_f += data[k - i - 1].phi * *n;
                    u_f += n * data[k - i - 1].u;
                }
            }
            lhs += phi_f.transpose() * phi_f * cfg.rz;
            rhs -= phi_f.transpose() * (cfg.rz * (data[k].z - u_f));
        }
        lhs.lu().solve(&rhs).unwrap()
    }

    #[test]
    fn regressor_and_output_examples() {
        assert_eq!(build_regressor(0.0, 0.0, 0.0), RowVector3::zeros());
        let phi = build_regressor(1.0, 2.0, 0.5);
        assert_eq!(phi, RowVector3::new(1.0, 2.0, 0.5));
        assert_eq!(control_output(&phi, &Vector3::zeros()), 0.0);
        assert_eq!(control_output(&phi, &Vector3::new(1.0, 0.0, 0.0)), 1.0);
        assert_relative_eq!(
            control_output(&phi, &Vector3::new(0.1, 0.2, 0.3)),
            0.65,
            max_relative = 1e-15
        );
    }

    #[test]
    fn first_step_is_fixed_point() {
        let cfg = RcacConfig {
            theta0: [0.3, -0.1, 0.2],
            ..RcacConfig::default()
        };
        let mut s = RcacState::new(&cfg);
        rcac_update(&mut s, &cfg, 5.0);
        assert_eq!(s.theta, Vector3::from(cfg.theta0));
        assert_eq!(s.p, Matrix3::identity() * cfg.p);
    }

    #[test]
    fn recursion_matches_batch_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for filter in [vec![1.0], vec![0.7, -0.3], vec![1.0, 0.5, 0.25]] {
            let cfg = RcacConfig {
                p: 0.5,
                rz: 2.0,
                filter,
                theta0: [0.1, -0.2, 0.05],
                ..RcacConfig::default()
            };
            let data = random_sequence(&mut rng, 50);
            let rec = recursive_thetas(&cfg, &data);
            for len in 1..=50 {
                let b = batch_theta(&cfg, &data, len);
                let err = (rec[len - 1] - b).norm() / b.norm().max(1e-300);
                assert!(err < 1e-8, "len {len}: {err}");
            }
        }
    }

    #[test]
    fn covariance_stays_symmetric_definite_and_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = RcacConfig {
            p: 1.0,
            filter: vec![1.0, -0.4],
            ..RcacConfig::default()
        };
        let mut s = RcacState::new(&cfg);
        let mut trace = s.p.trace();
        for d in random_sequence(&mut rng, 200) {
            rcac_update(&mut s, &cfg, d.z);
            s.record(d.phi, d.u, cfg.filter.len());
            assert!((s.p - s.p.transpose()).abs().max() <= 1e-12);
            let eig = SymmetricEigen::new(s.p).eigenvalues;
            assert!(eig.min() > 0.0);
            assert!(s.p.trace() <= trace);
            trace = s.p.trace();
        }
    }

    #[test]
    fn zero_filter_freezes_gains() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = RcacConfig {
            filter: vec![0.0],
            theta0: [1.0, 2.0, 3.0],
            ..RcacConfig::default()
        };
        let rec = recursive_thetas(&cfg, &random_sequence(&mut rng, 40));
        assert!(rec.iter().all(|t| *t == Vector3::new(1.0, 2.0, 3.0)));
    }

    #[test]
    fn perfect_tracking_gives_zero_control() {
        let cfg = RcacConfig::default();
        let mut s = RcacState::new(&cfg);
        for k in 0..100 {
            let r = (k as f64).sin();
            let step = rcac_pid_step(&mut s, &cfg, r, r);
            assert_eq!(step.z, 0.0);
            assert_eq!(step.u, 0.0);
        }
        assert_eq!(s.theta, Vector3::zeros());
    }

    #[test]
    fn cost_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = random_sequence(&mut rng, 60);
        let a = RcacConfig {
            p: 0.3,
            rz: 1.0,
            ..RcacConfig::default()
        };
        let b = RcacConfig {
            p: 0.3 / 7.0,
            rz: 7.0,
            ..a.clone()
        };
        for (ta, tb) in recursive_thetas(&a, &data).iter().zip(recursive_thetas(&b, &data)) {
            assert!((ta - tb).norm() <= 1e-10 * ta.norm().max(1e-12));
        }
    }

    fn integrator_run(cfg: &RcacConfig, steps: usize) -> Vec<f64> {
        let mut s = RcacState::new(cfg);
        let (mut y, mut u) = (0.0, 0.0);
        let mut zs = Vec::with_capacity(steps);
        for _ in 0..steps {
            y += 0.1 * u;
            let step = rcac_pid_step(&mut s, cfg, 1.0, y);
            u = step.u;
            zs.push(step.z);
        }
        zs
    }

    #[test]
    fn integrator_plant_step_converges() {
        let cfg = RcacConfig {
            p: 1e-2,
            ..RcacConfig::default()
        };
        let zs = integrator_run(&cfg, 500);
        assert!(zs[450..].iter().all(|z| z.abs() < 1e-3), "{:?}", &zs[450..]);
    }

    #[test]
    fn opposite_convention_needs_opposite_filter() {
        let cfg = RcacConfig {
            p: 1e-2,
            filter: vec![-1.0],
            error_convention: ErrorConvention::CommandMinusMeasured,
            ..RcacConfig::default()
        };
        let zs = integrator_run(&cfg, 500);
        assert!(zs[450..].iter().all(|z| z.abs() < 1e-3));
    }

    #[test]
    fn deterministic() {
        let cfg = RcacConfig {
            p: 1e-2,
            ..RcacConfig::default()
        };
        let a = integrator_run(&cfg, 300);
        let b = integrator_run(&cfg, 300);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn validation() {
        assert!(RcacConfig::default().validate().is_ok());
        for bad in [
            RcacConfig {
                p: 0.0,
                ..RcacConfig::default()
            },
            RcacConfig {
                rz: -1.0,
                ..RcacConfig::default()
            },
            RcacConfig {
                filter: vec![],
                ..RcacConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}

//! Coupled constant-stepsize two-timescale SGD.
//!
//! ```text
//! x(n+1) = x(n) − a·(∂f/∂x(x(n), εy(n)) − M₁(n+1))
//! y(n+1) = y(n) − b·(∂f/∂u(x(n), εy(n)) − M₂(n+1)),   b = εa
//! ```
//!
//! Both blocks read the same pre-step state. Noise draws are keyed by
//! `(seed, replica, n, block)` so any step of any replica can be replayed alone.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inner::{solve_lambda_from, InnerError, InnerSolveConfig};
use crate::io::{fmt_f64, hash_hex, Csv};
use crate::model::{LossModel, StateVector};
use crate::rng::{Block, CounterRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SgdError {
    #[error("invalid timescale configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: model is d = {model_d}, s = {model_s}; state is d = {d}, s = {s}")]
    Dimension {
        model_d: usize,
        model_s: usize,
        d: usize,
        s: usize,
    },
    #[error("non-finite gradient or state at the step from n = {n}")]
    NonFinite { n: u64 },
    #[error("inner solver failed at n = {n}: {source}")]
    Inner { n: u64, source: InnerError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    None,
    GaussianIid,
    BoundedUniform,
    StateScaledGaussian,
}

/// Martingale-difference gradient noise.
///
/// `sigma` is the per-coordinate standard deviation (half-width for the
/// uniform kind). The slow block uses `sigma_slow` when set, else `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub sigma_slow: Option<f64>,
    /// For `state-scaled-gaussian`: std = sigma·(1 + ‖gradient of the block‖).
    pub scale_with_gradient: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma: 0.0,
            sigma_slow: None,
            scale_with_gradient: true,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::GaussianIid,
            sigma,
            ..Self::default()
        }
    }

    pub fn slow_sigma(&self) -> f64 {
        self.sigma_slow.unwrap_or(self.sigma)
    }

    fn validate(&self) -> Result<(), SgdError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.sigma) || !ok(self.slow_sigma()) {
            return Err(SgdError::Config("noise sigma must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Draw `(M₁, M₂)` for step `n` of `replica`, given the block gradient norms.
    pub fn draw(
        &self,
        rng: &CounterRng,
        replica: u64,
        n: u64,
        grad_norms: (f64, f64),
        m1: &mut DVector<f64>,
        m2: &mut DVector<f64>,
    ) {
        let blocks = [
            (Block::Fast, self.sigma, grad_norms.0, m1),
            (Block::Slow, self.slow_sigma(), grad_norms.1, m2),
        ];
        for (block, sigma, gnorm, out) in blocks {
            if self.kind == NoiseKind::None || sigma == 0.0 {
                out.fill(0.0);
                continue;
            }
            let scale = match self.kind {
                NoiseKind::StateScaledGaussian if self.scale_with_gradient => sigma * (1.0 + gnorm),
                _ => sigma,
            };
            let buf = out.as_mut_slice();
            match self.kind {
                NoiseKind::BoundedUniform => rng.fill_symmetric_uniform(replica, n, block, buf),
                _ => rng.fill_normal(replica, n, block, buf),
            }
            *out *= scale;
        }
    }
}

/// Stepsizes, horizon, seed and noise. `b = εa` is derived, never set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimescaleConfig {
    pub a: f64,
    pub epsilon: f64,
    /// Number of recorded iterates `n = 0, …, horizon − 1`.
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Recording stride; defaults to 1 up to 10⁵ iterates, else `⌈horizon/10⁵⌉`.
    #[serde(default)]
    pub stride: Option<u64>,
}

impl TimescaleConfig {
    pub fn new(a: f64, epsilon: f64, horizon: u64) -> Self {
        Self {
            a,
            epsilon,
            horizon,
            seed: 0,
            noise: NoiseSpec::none(),
            stride: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.stride = Some(stride);
        self
    }

    pub fn b(&self) -> f64 {
        self.epsilon * self.a
    }

    pub fn effective_stride(&self) -> u64 {
        self.stride.unwrap_or_else(|| {
            if self.horizon <= 100_000 {
                1
            } else {
                self.horizon.div_ceil(100_000)
            }
        })
    }

    pub fn validate(&self) -> Result<(), SgdError> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(SgdError::Config(format!("a = {} violates 0 < a < 1", self.a)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(SgdError::Config(format!(
                "epsilon = {} violates 0 < ε < 1",
                self.epsilon
            )));
        }
        if self.horizon < 1 {
            return Err(SgdError::Config("horizon must be >= 1".into()));
        }
        if self.stride == Some(0) {
            return Err(SgdError::Config("stride must be >= 1".into()));
        }
        self.noise.validate()
    }
}

/// One Jacobi step of the coupled iteration with externally supplied noise.
pub fn sgd_step(
    model: &dyn LossModel,
    state: &StateVector,
    cfg: &TimescaleConfig,
    noise: (&DVector<f64>, &DVector<f64>),
) -> Result<StateVector, SgdError> {
    check_dims(model, state)?;
    let u = state.u(cfg.epsilon);
    let gx = model.grad_x(&state.x, &u);
    let gu = model.grad_u(&state.x, &u);
    if !gx.iter().chain(gu.iter()).all(|v| v.is_finite()) {
        return Err(SgdError::NonFinite { n: 0 });
    }
    Ok(StateVector {
        x: &state.x - (gx - noise.0) * cfg.a,
        y: &state.y - (gu - noise.1) * cfg.b(),
    })
}

fn check_dims(model: &dyn LossModel, state: &StateVector) -> Result<(), SgdError> {
    if model.dim_x() != state.dim_x() || model.dim_y() != state.dim_y() {
        return Err(SgdError::Dimension {
            model_d: model.dim_x(),
            model_s: model.dim_y(),
            d: state.dim_x(),
            s: state.dim_y(),
        });
    }
    Ok(())
}

/// Where tracking errors `‖x − λ(y)‖` come from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LambdaSource {
    /// The model's analytic oracle if it has one, else no tracking error.
    #[default]
    Auto,
    Oracle,
    /// Numerical inner solves, warm-started along the trajectory.
    Inner(InnerSolveConfig),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub replica: u64,
    pub lambda: LambdaSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub n: u64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub loss: f64,
    pub grad_x_norm: f64,
    pub grad_u_norm: f64,
    pub tracking_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub stride: u64,
    pub a: f64,
    pub epsilon: f64,
    pub config_hash: String,
    /// Step whose gradients or successor state were non-finite.
    pub diverged_at: Option<u64>,
}

impl Trajectory {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn grad_x_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.grad_x_norm).collect()
    }

    pub fn grad_u_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.grad_u_norm).collect()
    }

    pub fn tracking_errors(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.tracking_error).collect()
    }

    pub fn steps(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.n).collect()
    }

    pub fn to_csv(&self) -> String {
        let (d, s) = self.records.first().map_or((0, 0), |r| (r.x.len(), r.y.len()));
        let mut header: Vec<String> = ["n", "loss", "grad_x_norm", "grad_u_norm", "tracking_error"]
            .iter()
            .map(|c| c.to_string())
            .collect();
        header.extend((0..d).map(|i| format!("x_{i}")));
        header.extend((0..s).map(|i| format!("y_{i}")));
        let mut csv = Csv::new(&self.config_hash, &header);
        for r in &self.records {
            let mut row = vec![
                r.n.to_string(),
                fmt_f64(r.loss),
                fmt_f64(r.grad_x_norm),
                fmt_f64(r.grad_u_norm),
                r.tracking_error.map(fmt_f64).unwrap_or_default(),
            ];
            row.extend(r.x.iter().chain(r.y.iter()).map(|v| fmt_f64(*v)));
            csv.row(&row);
        }
        csv.finish()
    }
}

/// Digest of everything that determines a trajectory.
pub fn config_hash(model: &dyn LossModel, init: &StateVector, cfg: &TimescaleConfig, opts: &RunOptions) -> String {
    hash_hex(&format!(
        "sgd|{cfg:?}|{}|x0={:?}|y0={:?}|{:?}",
        model.fingerprint(),
        init.x.as_slice(),
        init.y.as_slice(),
        opts.lambda
    ))
}

/// Scalars observed at a recorded step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub loss: f64,
    pub grad_x_norm: f64,
    pub grad_u_norm: f64,
    pub tracking_error: Option<f64>,
}

/// Core recursion. Calls `visit` at every recorded `n`; returns the
/// divergence step, if any.
pub fn simulate(
    model: &dyn LossModel,
    init: &StateVector,
    cfg: &TimescaleConfig,
    opts: &RunOptions,
    mut visit: impl FnMut(u64, &StateVector, Observation),
) -> Result<Option<u64>, SgdError> {
    cfg.validate()?;
    check_dims(model, init)?;
    let lambda = match opts.lambda {
        LambdaSource::Auto if model.oracle_lambda(&init.u(cfg.epsilon)).is_some() => LambdaSource::Oracle,
        LambdaSource::Auto => LambdaSource::None,
        LambdaSource::Oracle if model.oracle_lambda(&init.u(cfg.epsilon)).is_none() => {
            return Err(SgdError::Config(format!(
                "model `{}` has no analytic λ oracle",
                model.name()
            )))
        }
        other => other,
    };
    let stride = cfg.effective_stride();
    let rng = CounterRng::new(cfg.seed);
    let (a, b) = (cfg.a, cfg.b());
    let mut state = init.clone();
    let mut m1 = DVector::zeros(model.dim_x());
    let mut m2 = DVector::zeros(model.dim_y());
    let mut warm: Option<DVector<f64>> = None;
    for n in 0..cfg.horizon {
        let u = state.u(cfg.epsilon);
        let gx = model.grad_x(&state.x, &u);
        let gu = model.grad_u(&state.x, &u);
        let loss = model.eval(&state.x, &u);
        let (gxn, gun) = (gx.norm(), gu.norm());
        if !(loss.is_finite() && gxn.is_finite() && gun.is_finite()) {
            return Ok(Some(n));
        }
        if n % stride == 0 {
            let tracking_error = match &lambda {
                LambdaSource::Oracle => model.oracle_lambda(&u).map(|l| (&state.x - l).norm()),
                LambdaSource::Inner(icfg) => {
                    let sol = solve_lambda_from(model, &state.y, cfg.epsilon, icfg, warm.as_ref())
                        .map_err(|source| SgdError::Inner { n, source })?;
                    let err = (&state.x - &sol.x).norm();
                    warm = Some(sol.x);
                    Some(err)
                }
                _ => None,
            };
            visit(
                n,
                &state,
                Observation {
                    loss,
                    grad_x_norm: gxn,
                    grad_u_norm: gun,
                    tracking_error,
                },
            );
        }
        if n + 1 == cfg.horizon {
            break;
        }
        cfg.noise.draw(&rng, opts.replica, n, (gxn, gun), &mut m1, &mut m2);
        state.x -= (gx - &m1) * a;
        state.y -= (gu - &m2) * b;
        if !state.is_finite() {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Run one replica (replica 0 unless `opts` says otherwise).
pub fn run(model: &dyn LossModel, init: &StateVector, cfg: &TimescaleConfig) -> Result<Trajectory, SgdError> {
    run_with(model, init, cfg, &RunOptions::default())
}

pub fn run_with(
    model: &dyn LossModel,
    init: &StateVector,
    cfg: &TimescaleConfig,
    opts: &RunOptions,
) -> Result<Trajectory, SgdError> {
    let mut records = Vec::new();
    let diverged_at = simulate(model, init, cfg, opts, |n, st, obs| {
        records.push(Record {
            n,
            x: st.x.clone(),
            y: st.y.clone(),
            loss: obs.loss,
            grad_x_norm: obs.grad_x_norm,
            grad_u_norm: obs.grad_u_norm,
            tracking_error: obs.tracking_error,
        })
    })?;
    Ok(Trajectory {
        records,
        stride: cfg.effective_stride(),
        a: cfg.a,
        epsilon: cfg.epsilon,
        config_hash: config_hash(model, init, cfg, opts),
        diverged_at,
    })
}

/// Per-`n` sample moments across replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub n: Vec<u64>,
    pub mean_loss: Vec<f64>,
    pub var_loss: Vec<f64>,
    /// `NaN` when no tracking error is available.
    pub mean_track_sq: Vec<f64>,
    pub var_track_sq: Vec<f64>,
    pub replicas_alive: Vec<usize>,
    pub replicas: usize,
    pub diverged: usize,
    pub config_hash: String,
}

impl EnsembleSummary {
    pub fn to_csv(&self) -> String {
        let mut csv = Csv::with_header(
            &self.config_hash,
            &[
                "n",
                "mean_loss",
                "var_loss",
                "mean_track_sq",
                "var_track_sq",
                "replicas_alive",
            ],
        );
        for i in 0..self.n.len() {
            csv.row(&[
                self.n[i].to_string(),
                fmt_f64(self.mean_loss[i]),
                fmt_f64(self.var_loss[i]),
                fmt_f64(self.mean_track_sq[i]),
                fmt_f64(self.var_track_sq[i]),
                self.replicas_alive[i].to_string(),
            ]);
        }
        csv.finish()
    }

    /// Standard error of the mean loss at record `i`.
    pub fn loss_standard_error(&self, i: usize) -> f64 {
        (self.var_loss[i] / self.replicas_alive[i] as f64).sqrt()
    }

    /// Average of `mean_track_sq` over records with `n ≥ n_from`.
    pub fn stationary_track_sq(&self, n_from: u64) -> f64 {
        let vals: Vec<f64> = self
            .n
            .iter()
            .zip(&self.mean_track_sq)
            .filter(|(n, _)| **n >= n_from)
            .map(|(_, v)| *v)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    fn mean_or_nan(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }
}

/// Replicas simulated concurrently per batch; merging is always in replica order.
const ENSEMBLE_BATCH: usize = 64;

/// Per-record `(loss, squared tracking error)` of one replica, and whether it diverged.
type ReplicaSeries = (Vec<(f64, Option<f64>)>, bool);

pub fn run_ensemble(
    model: &dyn LossModel,
    init: &StateVector,
    cfg: &TimescaleConfig,
    replicas: usize,
) -> Result<EnsembleSummary, SgdError> {
    run_ensemble_with(model, init, cfg, replicas, LambdaSource::Auto)
}

pub fn run_ensemble_with(
    model: &dyn LossModel,
    init: &StateVector,
    cfg: &TimescaleConfig,
    replicas: usize,
    lambda: LambdaSource,
) -> Result<EnsembleSummary, SgdError> {
    if replicas == 0 {
        return Err(SgdError::Config("replicas must be >= 1".into()));
    }
    cfg.validate()?;
    let stride = cfg.effective_stride();
    let n: Vec<u64> = (0..cfg.horizon).step_by(stride as usize).collect();
    let mut loss = vec![Welford::default(); n.len()];
    let mut track = vec![Welford::default(); n.len()];
    let mut diverged = 0;
    let replica_ids: Vec<u64> = (0..replicas as u64).collect();
    for batch in replica_ids.chunks(ENSEMBLE_BATCH) {
        let results: Vec<Result<ReplicaSeries, SgdError>> = batch
            .par_iter()
            .map(|&replica| {
                let opts = RunOptions { replica, lambda };
                let mut obs = Vec::with_capacity(n.len());
                let div = simulate(model, init, cfg, &opts, |_, _, o| {
                    obs.push((o.loss, o.tracking_error.map(|t| t * t)))
                })?;
                Ok((obs, div.is_some()))
            })
            .collect();
        for res in results {
            let (obs, div) = res?;
            diverged += usize::from(div);
            for (i, (l, t)) in obs.into_iter().enumerate() {
                loss[i].push(l);
                if let Some(t) = t {
                    track[i].push(t);
                }
            }
        }
    }
    let opts = RunOptions { replica: 0, lambda };
    Ok(EnsembleSummary {
        mean_loss: loss.iter().map(Welford::mean_or_nan).collect(),
        var_loss: loss.iter().map(Welford::variance).collect(),
        mean_track_sq: track.iter().map(Welford::mean_or_nan).collect(),
        var_track_sq: track.iter().map(Welford::variance).collect(),
        replicas_alive: loss.iter().map(|w| w.count).collect(),
        n,
        replicas,
        diverged,
        config_hash: hash_hex(&format!("ensemble|{replicas}|{}", config_hash(model, init, cfg, &opts))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelSpec};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn scalar_coupled_one_step() {
        let m = build_model(&ModelSpec::new("scalar-coupled")).unwrap();
        let cfg = TimescaleConfig::new(0.1, 0.1, 2);
        let s = StateVector::from_slices(&[1.0], &[0.0]).unwrap();
        let next = sgd_step(m.as_ref(), &s, &cfg, (&v(&[0.0]), &v(&[0.0]))).unwrap();
        assert!((next.x[0] - 0.9).abs() < 1e-15);
        assert!((next.y[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn stride_defaults() {
        assert_eq!(TimescaleConfig::new(0.1, 0.1, 100_000).effective_stride(), 1);
        assert_eq!(TimescaleConfig::new(0.1, 0.1, 100_001).effective_stride(), 2);
        assert_eq!(TimescaleConfig::new(0.1, 0.1, 1_000_000).effective_stride(), 10);
    }

    #[test]
    fn validation_names_the_violated_constraint() {
        let err = TimescaleConfig::new(0.1, 1.5, 10).validate().unwrap_err();
        assert!(err.to_string().contains("0 < ε < 1"), "{err}");
        assert!(TimescaleConfig::new(1.0, 0.5, 10).validate().is_err());
        assert!(TimescaleConfig::new(0.1, 0.5, 0).validate().is_err());
    }

    #[test]
    fn divergence_is_flagged_not_clipped() {
        let spec = ModelSpec::new("quadratic").scalar("a", 100.0).scalar("b", 0.0);
        let m = build_model(&spec).unwrap();
        let cfg = TimescaleConfig::new(0.5, 0.1, 10_000);
        let init = StateVector::from_slices(&[1.0], &[0.0]).unwrap();
        let traj = run(m.as_ref(), &init, &cfg).unwrap();
        let n = traj.diverged_at.expect("a·curvature = 50 must diverge");
        assert!(n < 1000);
        assert!(traj.records.iter().all(|r| r.loss.is_finite()));
        assert!(traj.records.last().unwrap().n <= n);
    }

    #[test]
    fn welford_matches_two_pass() {
        let data = [1.0, 4.0, 2.5, -3.0, 7.25];
        let mut w = Welford::default();
        data.iter().for_each(|v| w.push(*v));
        let mean = data.iter().sum::<f64>() / 5.0;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((w.mean - mean).abs() < 1e-14 && (w.variance() - var).abs() < 1e-13);
    }
}

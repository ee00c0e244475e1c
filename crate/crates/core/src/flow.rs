//! Limiting ODEs, small-noise SDEs and SGD-vs-ODE comparison.
//!
//! Everything runs on the fast clock `t = n·a`:
//!
//! * fast flow with frozen `y`: `ẋ = −∂f/∂x(x, εy)`
//! * slow flow on the fast minimizer: `ẏ = −ε·∂f/∂u(λ(y), εy)`
//! * joint flow: `ẋ = −∂f/∂x(x, εy)`, `ẏ = −ε·∂f/∂u(x, εy)`
//! * SDE: the joint flow plus `s·dW` on `x` and `ε^{1+α}·dB` on `y`

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inner::{solve_lambda_from, InnerError, InnerSolveConfig};
use crate::io::{fmt_f64, hash_hex, Csv};
use crate::model::{spectral_norm, LossModel, StateVector};
use crate::rng::{Block, CounterRng};
use crate::sgd::{LambdaSource, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    Config(String),
    #[error("slow flow needs an analytic λ oracle or an inner solver")]
    MissingLambda,
    #[error("inner solve failed at t = {t}: {source}")]
    Inner { t: f64, source: InnerError },
    #[error("trajectory must be recorded at stride 1 (got {0})")]
    Stride(u64),
    #[error("window [{t0}, {t1}] exceeds the available data (up to {available})")]
    Window { t0: f64, t1: f64, available: f64 },
    #[error("step h = {h} is too large for local Lipschitz bound {lipschitz} (need h·L < 1)")]
    StepTooLarge { h: f64, lipschitz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OdeKind {
    FastFrozenY,
    SlowOnLambda,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    ExplicitEuler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSpec {
    pub kind: OdeKind,
    #[serde(default)]
    pub integrator: Integrator,
    pub h: f64,
    pub t_end: f64,
}

impl OdeSpec {
    pub fn new(kind: OdeKind, integrator: Integrator, h: f64, t_end: f64) -> Self {
        Self {
            kind,
            integrator,
            h,
            t_end,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(FlowError::Config("h must be > 0".into()));
        }
        if !(self.t_end >= self.h) || !self.t_end.is_finite() {
            return Err(FlowError::Config("t_end must be >= h".into()));
        }
        Ok(())
    }

    /// Number of integrator steps, `round(t_end / h)`.
    pub fn steps(&self) -> u64 {
        (self.t_end / self.h).round() as u64
    }
}

/// States on a uniform time grid `t_k = k·h`, with `t_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub loss: Vec<f64>,
    pub h: f64,
    pub config_hash: String,
    /// Time of the first non-finite state, if the run blew up.
    pub diverged_at: Option<f64>,
}

impl TimeSeries {
    fn new(h: f64, config_hash: String) -> Self {
        Self {
            t: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            loss: Vec::new(),
            h,
            config_hash,
            diverged_at: None,
        }
    }

    fn push(&mut self, t: f64, x: DVector<f64>, y: DVector<f64>, loss: f64) {
        self.t.push(t);
        self.x.push(x);
        self.y.push(y);
        self.loss.push(loss);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last_state(&self) -> Option<StateVector> {
        Some(StateVector {
            x: self.x.last()?.clone(),
            y: self.y.last()?.clone(),
        })
    }

    pub fn to_csv(&self) -> String {
        let (d, s) = self
            .x
            .first()
            .zip(self.y.first())
            .map_or((0, 0), |(x, y)| (x.len(), y.len()));
        let mut header = vec!["t".to_string(), "loss".to_string()];
        header.extend((0..d).map(|i| format!("x_{i}")));
        header.extend((0..s).map(|i| format!("y_{i}")));
        let mut csv = Csv::new(&self.config_hash, &header);
        for k in 0..self.len() {
            let mut row = vec![fmt_f64(self.t[k]), fmt_f64(self.loss[k])];
            row.extend(self.x[k].iter().chain(self.y[k].iter()).map(|v| fmt_f64(*v)));
            csv.row(&row);
        }
        csv.finish()
    }
}

/// Resolves `λ(y)` for the slow flow, warm-starting inner solves.
struct LambdaEval<'m> {
    model: &'m dyn LossModel,
    eps: f64,
    inner: Option<InnerSolveConfig>,
    warm: Option<DVector<f64>>,
}

impl<'m> LambdaEval<'m> {
    fn new(model: &'m dyn LossModel, eps: f64, source: LambdaSource, probe: &DVector<f64>) -> Result<Self, FlowError> {
        let has_oracle = model.oracle_lambda(&(probe * eps)).is_some();
        let inner = match source {
            LambdaSource::Auto if has_oracle => None,
            LambdaSource::Auto => Some(InnerSolveConfig::default()),
            LambdaSource::Oracle if has_oracle => None,
            LambdaSource::Inner(cfg) => Some(cfg),
            LambdaSource::Oracle | LambdaSource::None => return Err(FlowError::MissingLambda),
        };
        Ok(Self {
            model,
            eps,
            inner,
            warm: None,
        })
    }

    fn at(&mut self, y: &DVector<f64>, t: f64) -> Result<DVector<f64>, FlowError> {
        match &self.inner {
            None => Ok(self
                .model
                .oracle_lambda(&(y * self.eps))
                .expect("oracle checked at construction")),
            Some(cfg) => {
                let sol = solve_lambda_from(self.model, y, self.eps, cfg, self.warm.as_ref())
                    .map_err(|source| FlowError::Inner { t, source })?;
                if !sol.converged {
                    return Err(FlowError::Inner {
                        t,
                        source: InnerError::NotConverged {
                            grad_norm: sol.grad_norm,
                            iterations: sol.iterations,
                        },
                    });
                }
                self.warm = Some(sol.x.clone());
                Ok(sol.x)
            }
        }
    }
}

fn rk_combine(z: &DVector<f64>, h: f64, k: [&DVector<f64>; 4]) -> DVector<f64> {
    z + (k[0] + k[1] * 2.0 + k[2] * 2.0 + k[3]) * (h / 6.0)
}

/// Integrate one of the limiting ODEs from `init` with weak-coupling scale `eps`.
///
/// For the fast flow `init.y` is the frozen slow coordinate; for the slow
/// flow `init.x` is ignored and `x` is reported as `λ(y)`.
pub fn integrate_ode(
    model: &dyn LossModel,
    spec: &OdeSpec,
    init: &StateVector,
    eps: f64,
    lambda: LambdaSource,
) -> Result<TimeSeries, FlowError> {
    spec.validate()?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(FlowError::Config("0 < ε ≤ 1 required".into()));
    }
    let h = spec.h;
    let hash = hash_hex(&format!(
        "ode|{spec:?}|eps={eps:?}|{}|x0={:?}|y0={:?}|{lambda:?}",
        model.fingerprint(),
        init.x.as_slice(),
        init.y.as_slice()
    ));
    let mut out = TimeSeries::new(h, hash);
    let steps = spec.steps();
    match spec.kind {
        OdeKind::FastFrozenY => {
            let u = init.u(eps);
            let rhs = |x: &DVector<f64>| -model.grad_x(x, &u);
            let mut x = init.x.clone();
            out.push(0.0, x.clone(), init.y.clone(), model.eval(&x, &u));
            for k in 1..=steps {
                x = match spec.integrator {
                    Integrator::ExplicitEuler => &x + rhs(&x) * h,
                    Integrator::Rk4 => {
                        let k1 = rhs(&x);
                        let k2 = rhs(&(&x + &k1 * (h / 2.0)));
                        let k3 = rhs(&(&x + &k2 * (h / 2.0)));
                        let k4 = rhs(&(&x + &k3 * h));
                        rk_combine(&x, h, [&k1, &k2, &k3, &k4])
                    }
                };
                let t = k as f64 * h;
                if !x.iter().all(|v| v.is_finite()) {
                    out.diverged_at = Some(t);
                    break;
                }
                out.push(t, x.clone(), init.y.clone(), model.eval(&x, &u));
            }
        }
        OdeKind::SlowOnLambda => {
            let mut lam = LambdaEval::new(model, eps, lambda, &init.y)?;
            let mut rhs = |y: &DVector<f64>, t: f64| -> Result<(DVector<f64>, DVector<f64>), FlowError> {
                let u = y * eps;
                let x = lam.at(y, t)?;
                Ok((-model.grad_u(&x, &u) * eps, x))
            };
            let mut y = init.y.clone();
            let (mut k1, x0) = rhs(&y, 0.0)?;
            out.push(0.0, x0.clone(), y.clone(), model.eval(&x0, &y.scale(eps)));
            for k in 1..=steps {
                let t = k as f64 * h;
                y = match spec.integrator {
                    Integrator::ExplicitEuler => &y + &k1 * h,
                    Integrator::Rk4 => {
                        let k2 = rhs(&(&y + &k1 * (h / 2.0)), t)?.0;
                        let k3 = rhs(&(&y + &k2 * (h / 2.0)), t)?.0;
                        let k4 = rhs(&(&y + &k3 * h), t)?.0;
                        rk_combine(&y, h, [&k1, &k2, &k3, &k4])
                    }
                };
                if !y.iter().all(|v| v.is_finite()) {
                    out.diverged_at = Some(t);
                    break;
                }
                let (next_k1, x) = rhs(&y, t)?;
                k1 = next_k1;
                let loss = model.eval(&x, &y.scale(eps));
                out.push(t, x, y.clone(), loss);
            }
        }
        OdeKind::Joint => {
            let d = model.dim_x();
            let rhs = |z: &DVector<f64>| {
                let x = z.rows(0, d).into_owned();
                let u = z.rows(d, z.len() - d).into_owned() * eps;
                let mut dz = DVector::zeros(z.len());
                dz.rows_mut(0, d).copy_from(&-model.grad_x(&x, &u));
                dz.rows_mut(d, z.len() - d).copy_from(&-(model.grad_u(&x, &u) * eps));
                dz
            };
            let split = |z: &DVector<f64>| (z.rows(0, d).into_owned(), z.rows(d, z.len() - d).into_owned());
            let mut z = init.concat();
            out.push(0.0, init.x.clone(), init.y.clone(), model.eval(&init.x, &init.u(eps)));
            for k in 1..=steps {
                z = match spec.integrator {
                    Integrator::ExplicitEuler => &z + rhs(&z) * h,
                    Integrator::Rk4 => {
                        let k1 = rhs(&z);
                        let k2 = rhs(&(&z + &k1 * (h / 2.0)));
                        let k3 = rhs(&(&z + &k2 * (h / 2.0)));
                        let k4 = rhs(&(&z + &k3 * h));
                        rk_combine(&z, h, [&k1, &k2, &k3, &k4])
                    }
                };
                let t = k as f64 * h;
                if !z.iter().all(|v| v.is_finite()) {
                    out.diverged_at = Some(t);
                    break;
                }
                let (x, y) = split(&z);
                let loss = model.eval(&x, &(&y * eps));
                out.push(t, x, y, loss);
            }
        }
    }
    Ok(out)
}

/// Piecewise-linear interpolation of SGD iterates with breakpoints `t(n) = n·a`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedPath {
    pub a: f64,
    pub n0: u64,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

pub fn interpolate(traj: &Trajectory, a: f64) -> Result<InterpolatedPath, FlowError> {
    if traj.stride != 1 {
        return Err(FlowError::Stride(traj.stride));
    }
    if !(a > 0.0) {
        return Err(FlowError::Config("a must be > 0".into()));
    }
    Ok(InterpolatedPath {
        a,
        n0: traj.records.first().map_or(0, |r| r.n),
        x: traj.records.iter().map(|r| r.x.clone()).collect(),
        y: traj.records.iter().map(|r| r.y.clone()).collect(),
    })
}

impl InterpolatedPath {
    pub fn t_start(&self) -> f64 {
        self.n0 as f64 * self.a
    }

    pub fn t_end(&self) -> f64 {
        (self.n0 as f64 + self.x.len().saturating_sub(1) as f64) * self.a
    }

    /// Breakpoint values as a time series (time measured from `t_start`).
    pub fn as_series(&self) -> TimeSeries {
        let mut ts = TimeSeries::new(self.a, String::new());
        for (k, (x, y)) in self.x.iter().zip(&self.y).enumerate() {
            ts.push(k as f64 * self.a, x.clone(), y.clone(), f64::NAN);
        }
        ts
    }

    /// `(x̄(t), ȳ(t))`, or `None` outside the recorded range.
    pub fn query(&self, t: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let s = t / self.a - self.n0 as f64;
        let last = self.x.len().checked_sub(1)?;
        if !(s >= -1e-9 && s <= last as f64 + 1e-9) {
            return None;
        }
        let s = s.clamp(0.0, last as f64);
        let i = (s.floor() as usize).min(last);
        let w = s - i as f64;
        if i == last || w == 0.0 {
            return Some((self.x[i].clone(), self.y[i].clone()));
        }
        let lerp = |v: &[DVector<f64>]| &v[i] * (1.0 - w) + &v[i + 1] * w;
        Some((lerp(&self.x), lerp(&self.y)))
    }
}

/// Which coordinates enter the deviation norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockSel {
    Fast,
    Slow,
    Joint,
}

fn lerp_series(ts: &TimeSeries, tau: f64) -> Option<(DVector<f64>, DVector<f64>)> {
    let s = tau / ts.h;
    let last = ts.len().checked_sub(1)?;
    if !(s >= -1e-9 && s <= last as f64 + 1e-9) {
        return None;
    }
    let s = s.clamp(0.0, last as f64);
    let i = (s.floor() as usize).min(last);
    let w = s - i as f64;
    if i == last || w == 0.0 {
        return Some((ts.x[i].clone(), ts.y[i].clone()));
    }
    Some((
        &ts.x[i] * (1.0 - w) + &ts.x[i + 1] * w,
        &ts.y[i] * (1.0 - w) + &ts.y[i + 1] * w,
    ))
}

/// Sup-norm deviation over `[t0, t0 + T]` between the path and an ODE
/// solution launched from the path's state at `t0` (ODE time `τ` maps to `t0 + τ`).
///
/// The sup is taken over a grid with ten points per ODE step.
pub fn tracking_error_window(
    path: &InterpolatedPath,
    ode: &TimeSeries,
    t0: f64,
    span: f64,
    block: BlockSel,
) -> Result<f64, FlowError> {
    let t1 = t0 + span;
    let available = path.t_end().min(t0 + ode.t.last().copied().unwrap_or(0.0));
    if t0 < path.t_start() - 1e-12 || t1 > available + 1e-9 || !(span >= 0.0) {
        return Err(FlowError::Window { t0, t1, available });
    }
    let points = ((span / ode.h) * 10.0).ceil().max(1.0) as usize;
    let mut worst: f64 = 0.0;
    for k in 0..=points {
        let tau = span * k as f64 / points as f64;
        let (px, py) = path.query(t0 + tau).ok_or(FlowError::Window { t0, t1, available })?;
        let (ox, oy) = lerp_series(ode, tau).ok_or(FlowError::Window { t0, t1, available })?;
        let dev = match block {
            BlockSel::Fast => (px - ox).norm(),
            BlockSel::Slow => (py - oy).norm(),
            BlockSel::Joint => ((px - ox).norm_squared() + (py - oy).norm_squared()).sqrt(),
        };
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// Small-noise SDE settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSpec {
    pub eps: f64,
    /// Slow-noise exponent `α ∈ (0, 1)`.
    pub alpha: f64,
    /// Noise-floor constant `K` (default 1).
    #[serde(default = "default_k")]
    pub k_floor: f64,
    /// Fast-noise scale; defaults to `√(K / ln(1 + 1/ε))`.
    #[serde(default)]
    pub s_eps: Option<f64>,
    /// Slow diffusion coefficient; defaults to `ε^{1+α}`.
    #[serde(default)]
    pub slow_diffusion: Option<f64>,
    pub h: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    /// Keep every `record_every`-th state (default 1).
    #[serde(default = "default_record_every")]
    pub record_every: u64,
}

fn default_k() -> f64 {
    1.0
}

fn default_record_every() -> u64 {
    1
}

/// `√(K / ln(1 + 1/ε))`.
pub fn default_noise_scale(eps: f64, k: f64) -> f64 {
    (k / (1.0 + 1.0 / eps).ln()).sqrt()
}

impl SdeSpec {
    pub fn new(eps: f64, alpha: f64, h: f64, t_end: f64) -> Self {
        Self {
            eps,
            alpha,
            k_floor: 1.0,
            s_eps: None,
            slow_diffusion: None,
            h,
            t_end,
            seed: 0,
            record_every: 1,
        }
    }

    pub fn noise_scale(&self) -> f64 {
        self.s_eps
            .unwrap_or_else(|| default_noise_scale(self.eps, self.k_floor))
    }

    pub fn slow_scale(&self) -> f64 {
        self.slow_diffusion.unwrap_or_else(|| self.eps.powf(1.0 + self.alpha))
    }

    /// Whether `s_eps` sits under the `√(K / ln(1 + 1/ε))` floor.
    pub fn below_floor(&self) -> bool {
        self.noise_scale() < default_noise_scale(self.eps, self.k_floor)
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::Config(m.into()));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad("0 < ε < 1 required");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("0 < α < 1 required");
        }
        if !(self.k_floor > 0.0) {
            return bad("K must be > 0");
        }
        if !(self.noise_scale() >= 0.0) || !(self.slow_scale() >= 0.0) {
            return bad("noise scales must be >= 0");
        }
        if !(self.h > 0.0) || !(self.t_end >= self.h) {
            return bad("need h > 0 and t_end >= h");
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1");
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.h).round() as u64
    }
}

/// Euler–Maruyama stepper for one SDE replica.
pub struct SdeStepper<'m> {
    model: &'m dyn LossModel,
    spec: SdeSpec,
    rng: CounterRng,
    replica: u64,
    pub state: StateVector,
    pub step: u64,
    xi: DVector<f64>,
    eta: DVector<f64>,
    sx: f64,
    sy: f64,
}

impl<'m> SdeStepper<'m> {
    pub fn new(model: &'m dyn LossModel, spec: &SdeSpec, init: &StateVector, replica: u64) -> Result<Self, FlowError> {
        spec.validate()?;
        if let Some(hxx) = model.hess_xx(&init.x, &init.u(spec.eps)) {
            let lipschitz = spectral_norm(&hxx);
            if spec.h * lipschitz >= 1.0 {
                return Err(FlowError::StepTooLarge { h: spec.h, lipschitz });
            }
        }
        let sqrt_h = spec.h.sqrt();
        Ok(Self {
            model,
            spec: *spec,
            rng: CounterRng::new(spec.seed),
            replica,
            state: init.clone(),
            step: 0,
            xi: DVector::zeros(model.dim_x()),
            eta: DVector::zeros(model.dim_y()),
            sx: spec.noise_scale() * sqrt_h,
            sy: spec.slow_scale() * sqrt_h,
        })
    }

    pub fn t(&self) -> f64 {
        self.step as f64 * self.spec.h
    }

    /// Advance one step; returns `false` if the new state is non-finite.
    pub fn advance(&mut self) -> bool {
        let (h, eps) = (self.spec.h, self.spec.eps);
        let u = self.state.u(eps);
        let gx = self.model.grad_x(&self.state.x, &u);
        let drift_y = self.model.grad_u(&self.state.x, &u) * eps;
        self.state.x -= gx * h;
        self.state.y -= drift_y * h;
        if self.sx != 0.0 {
            self.rng
                .fill_normal(self.replica, self.step, Block::Fast, self.xi.as_mut_slice());
            self.state.x += &self.xi * self.sx;
        }
        if self.sy != 0.0 {
            self.rng
                .fill_normal(self.replica, self.step, Block::Slow, self.eta.as_mut_slice());
            self.state.y += &self.eta * self.sy;
        }
        self.step += 1;
        self.state.is_finite()
    }
}

/// Euler–Maruyama integration of the small-noise SDE.
pub fn integrate_sde(
    model: &dyn LossModel,
    spec: &SdeSpec,
    init: &StateVector,
    replica: u64,
) -> Result<TimeSeries, FlowError> {
    let mut stepper = SdeStepper::new(model, spec, init, replica)?;
    let hash = hash_hex(&format!(
        "sde|{spec:?}|replica={replica}|{}|x0={:?}|y0={:?}",
        model.fingerprint(),
        init.x.as_slice(),
        init.y.as_slice()
    ));
    let mut out = TimeSeries::new(spec.h * spec.record_every as f64, hash);
    let loss = |s: &StateVector| model.eval(&s.x, &s.u(spec.eps));
    out.push(0.0, init.x.clone(), init.y.clone(), loss(init));
    for _ in 0..spec.steps() {
        if !stepper.advance() {
            out.diverged_at = Some(stepper.t());
            break;
        }
        if stepper.step % spec.record_every == 0 {
            let s = &stepper.state;
            out.push(stepper.t(), s.x.clone(), s.y.clone(), loss(s));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelSpec};

    #[test]
    fn default_noise_scale_value() {
        let s = default_noise_scale(0.01, 1.0);
        // Independent evaluation: 1/sqrt(ln 101) = 0.46548798624189...
        assert!((s - 0.465_487_986_241_89).abs() < 1e-13, "{s}");
        assert!((s - (1.0 / 101.0_f64.ln()).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        assert!(OdeSpec::new(OdeKind::Joint, Integrator::Rk4, 0.0, 1.0)
            .validate()
            .is_err());
        assert!(OdeSpec::new(OdeKind::Joint, Integrator::Rk4, 0.5, 0.1)
            .validate()
            .is_err());
        assert!(SdeSpec::new(0.1, 1.5, 0.01, 1.0).validate().is_err());
        assert!(SdeSpec::new(1.0, 0.5, 0.01, 1.0).validate().is_err());
    }

    #[test]
    fn sde_step_size_is_checked_against_curvature() {
        let m = build_model(&ModelSpec::new("quadratic").scalar("a", 50.0)).unwrap();
        let init = StateVector::from_slices(&[0.0], &[0.0]).unwrap();
        let err = SdeStepper::new(m.as_ref(), &SdeSpec::new(0.1, 0.5, 0.05, 1.0), &init, 0);
        assert!(matches!(err, Err(FlowError::StepTooLarge { .. })));
    }

    #[test]
    fn slow_flow_needs_lambda() {
        let m = build_model(&ModelSpec::new("scalar-coupled")).unwrap();
        let init = StateVector::from_slices(&[0.0], &[1.0]).unwrap();
        let spec = OdeSpec::new(OdeKind::SlowOnLambda, Integrator::Rk4, 0.1, 1.0);
        assert_eq!(
            integrate_ode(m.as_ref(), &spec, &init, 0.1, LambdaSource::None),
            Err(FlowError::MissingLambda)
        );
    }
}

//! Numerical fast minimizer `λ(y) = argmin_x f(x, εy)` and envelope checks.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{spectral_norm, LossModel};
use crate::rng::{Block, CounterRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InnerError {
    #[error("inner iteration produced a non-finite value after {iterations} iterations")]
    Divergence { iterations: usize },
    #[error("inner solve did not converge (gradient norm {grad_norm:e} after {iterations} iterations)")]
    NotConverged { grad_norm: f64, iterations: usize },
    #[error("invalid inner solver configuration: {0}")]
    Config(String),
    #[error("need at least two distinct samples")]
    DegenerateSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMethod {
    /// Newton when the model provides `hess_xx`, gradient descent otherwise.
    #[default]
    Auto,
    GradientDescent,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitStrategy {
    /// Start from the previous solution along a trajectory.
    WarmStart,
    /// Start from the supplied point (the origin if none).
    #[default]
    Fixed,
    /// The supplied point plus `k − 1` uniform draws in `[−radius, radius]^d`.
    RandomRestarts { k: usize, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerSolveConfig {
    pub method: InnerMethod,
    pub tol: f64,
    pub max_iters: usize,
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for InnerSolveConfig {
    fn default() -> Self {
        Self {
            method: InnerMethod::Auto,
            tol: 1e-10,
            max_iters: 1000,
            init: InitStrategy::Fixed,
            seed: 0,
        }
    }
}

impl InnerSolveConfig {
    pub fn validate(&self) -> Result<(), InnerError> {
        if !(self.tol > 0.0) {
            return Err(InnerError::Config("tol must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(InnerError::Config("max_iters must be >= 1".into()));
        }
        if let InitStrategy::RandomRestarts { k, radius } = self.init {
            if k == 0 {
                return Err(InnerError::Config("random-restarts needs k >= 1".into()));
            }
            if !(radius > 0.0) {
                return Err(InnerError::Config("random-restarts radius must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub x: DVector<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Solve for `λ(y)` from the origin (or from random restarts).
pub fn solve_lambda(
    model: &dyn LossModel,
    y: &DVector<f64>,
    eps: f64,
    cfg: &InnerSolveConfig,
) -> Result<InnerSolution, InnerError> {
    solve_lambda_from(model, y, eps, cfg, None)
}

/// Solve for `λ(y)` starting from `start` (used for warm starts).
pub fn solve_lambda_from(
    model: &dyn LossModel,
    y: &DVector<f64>,
    eps: f64,
    cfg: &InnerSolveConfig,
    start: Option<&DVector<f64>>,
) -> Result<InnerSolution, InnerError> {
    cfg.validate()?;
    let u = y * eps;
    let x0 = start.cloned().unwrap_or_else(|| DVector::zeros(model.dim_x()));
    let InitStrategy::RandomRestarts { k, radius } = cfg.init else {
        return descend(model, &u, x0, cfg);
    };
    let rng = CounterRng::new(cfg.seed);
    let mut best: Option<(f64, InnerSolution)> = None;
    for r in 0..k {
        let init = if r == 0 {
            x0.clone()
        } else {
            let mut draw = vec![0.0; model.dim_x()];
            rng.fill_symmetric_uniform(0, r as u64, Block::Aux, &mut draw);
            DVector::from_vec(draw) * radius
        };
        let sol = match descend(model, &u, init, cfg) {
            Ok(sol) => sol,
            Err(InnerError::Divergence { .. }) => continue,
            Err(e) => return Err(e),
        };
        let f = model.eval(&sol.x, &u);
        let better = match &best {
            None => true,
            Some((fb, b)) => prefer(f, &sol, *fb, b),
        };
        if better {
            best = Some((f, sol));
        }
    }
    best.map(|(_, s)| s).ok_or(InnerError::Divergence {
        iterations: cfg.max_iters,
    })
}

/// Converged first, then lowest `f`, then lowest norm, then lexicographic.
fn prefer(f: f64, cand: &InnerSolution, f_best: f64, best: &InnerSolution) -> bool {
    if cand.converged != best.converged {
        return cand.converged;
    }
    let tie = 1e-12 * f.abs().max(f_best.abs()).max(1.0);
    if (f - f_best).abs() > tie {
        return f < f_best;
    }
    let (nc, nb) = (cand.x.norm(), best.x.norm());
    if (nc - nb).abs() > 1e-9 * nb.max(1.0) {
        return nc < nb;
    }
    for (a, b) in cand.x.iter().zip(best.x.iter()) {
        if (a - b).abs() > 1e-9 * b.abs().max(1.0) {
            return a < b;
        }
    }
    false
}

fn descend(
    model: &dyn LossModel,
    u: &DVector<f64>,
    mut x: DVector<f64>,
    cfg: &InnerSolveConfig,
) -> Result<InnerSolution, InnerError> {
    let use_newton = match cfg.method {
        InnerMethod::GradientDescent => false,
        InnerMethod::Newton | InnerMethod::Auto => model.hess_xx(&x, u).is_some(),
    };
    let mut f = model.eval(&x, u);
    let mut g = model.grad_x(&x, u);
    // Initial trial step for gradient steps: Barzilai–Borwein `sᵀs / sᵀΔg`
    // from the previous move, then halving until sufficient decrease.
    let mut step = 1.0;
    for it in 0..cfg.max_iters {
        let gn = g.norm();
        if !gn.is_finite() || !f.is_finite() {
            return Err(InnerError::Divergence { iterations: it });
        }
        if gn <= cfg.tol {
            return Ok(InnerSolution {
                x,
                grad_norm: gn,
                iterations: it,
                converged: true,
            });
        }
        let newton_dir = if use_newton {
            model
                .hess_xx(&x, u)
                .and_then(|h| h.cholesky())
                .map(|ch| -ch.solve(&g))
                .filter(|p| p.dot(&g) < 0.0)
        } else {
            None
        };
        let is_newton = newton_dir.is_some();
        let (dir, mut t) = match newton_dir {
            Some(p) => (p, 1.0),
            None => (-&g, step),
        };
        let slope = g.dot(&dir);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = &x + &dir * t;
            let fc = model.eval(&cand, u);
            // Near the minimum, changes in f drop below rounding; there the
            // sufficient-decrease test is replaced by a smaller gradient.
            let ok = if !fc.is_finite() {
                false
            } else if (fc - f).abs() <= 1e-13 * f.abs().max(1.0) {
                model.grad_x(&cand, u).norm() < gn
            } else {
                fc <= f + ARMIJO_C * t * slope
            };
            if ok {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // No decrease is representable at this scale: stationary to rounding.
            return Ok(InnerSolution {
                x,
                grad_norm: gn,
                iterations: it,
                converged: false,
            });
        };
        let g_new = model.grad_x(&cand, u);
        if !is_newton {
            let s_k = &cand - &x;
            let curv = s_k.dot(&(&g_new - &g));
            step = if curv > 0.0 {
                (s_k.norm_squared() / curv).min(1e6)
            } else {
                (2.0 * t).min(1e6)
            };
        }
        x = cand;
        f = fc;
        g = g_new;
    }
    let gn = g.norm();
    if !gn.is_finite() {
        return Err(InnerError::Divergence {
            iterations: cfg.max_iters,
        });
    }
    Ok(InnerSolution {
        x,
        grad_norm: gn,
        iterations: cfg.max_iters,
        converged: gn <= cfg.tol,
    })
}

/// Largest relative deviation between the finite-difference gradient of
/// `y ↦ min_x f(x, εy)` and `ε·∂f/∂u(λ(y), εy)`.
pub fn danskin_residual(
    model: &dyn LossModel,
    y: &DVector<f64>,
    eps: f64,
    cfg: &InnerSolveConfig,
) -> Result<f64, InnerError> {
    let converged = |sol: InnerSolution| {
        if sol.converged {
            Ok(sol)
        } else {
            Err(InnerError::NotConverged {
                grad_norm: sol.grad_norm,
                iterations: sol.iterations,
            })
        }
    };
    let center = converged(solve_lambda(model, y, eps, cfg)?)?;
    let analytic = model.grad_u(&center.x, &(y * eps)) * eps;
    let h = 1e-5 * (1.0 + y.norm());
    let warm = InnerSolveConfig {
        init: InitStrategy::WarmStart,
        ..*cfg
    };
    let value = |yy: &DVector<f64>| -> Result<f64, InnerError> {
        let sol = converged(solve_lambda_from(model, yy, eps, &warm, Some(&center.x))?)?;
        Ok(model.eval(&sol.x, &(yy * eps)))
    };
    let mut worst: f64 = 0.0;
    for k in 0..y.len() {
        let (mut yp, mut ym) = (y.clone(), y.clone());
        yp[k] += h;
        ym[k] -= h;
        let fd = (value(&yp)? - value(&ym)?) / (2.0 * h);
        worst = worst.max((fd - analytic[k]).abs() / analytic[k].abs().max(1.0));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    /// Max pairwise ratio `‖λ(y_i) − λ(y_j)‖ / ‖y_i − y_j‖`.
    pub pairwise: f64,
    /// Max over samples of `‖ε·(∂²f/∂x²)⁻¹ ∂²f/∂x∂u‖`, when Hessians exist.
    pub hessian: Option<f64>,
}

pub fn lambda_lipschitz_estimate(
    model: &dyn LossModel,
    ys: &[DVector<f64>],
    eps: f64,
    cfg: &InnerSolveConfig,
) -> Result<LipschitzEstimate, InnerError> {
    let mut lams = Vec::with_capacity(ys.len());
    for y in ys {
        let sol = solve_lambda(model, y, eps, cfg)?;
        if !sol.converged {
            return Err(InnerError::NotConverged {
                grad_norm: sol.grad_norm,
                iterations: sol.iterations,
            });
        }
        lams.push(sol.x);
    }
    let mut pairwise: Option<f64> = None;
    for i in 0..ys.len() {
        for j in i + 1..ys.len() {
            let dy = (&ys[i] - &ys[j]).norm();
            if dy == 0.0 {
                continue;
            }
            let r = (&lams[i] - &lams[j]).norm() / dy;
            pairwise = Some(pairwise.map_or(r, |p: f64| p.max(r)));
        }
    }
    let pairwise = pairwise.ok_or(InnerError::DegenerateSamples)?;
    let mut hessian: Option<f64> = Some(0.0);
    for (y, lam) in ys.iter().zip(&lams) {
        let u = y * eps;
        let jac = match (model.hess_xx(lam, &u), model.hess_ux(lam, &u)) {
            (Some(hxx), Some(hux)) => hxx.try_inverse().map(|inv| inv * hux * eps),
            _ => None,
        };
        hessian = match (hessian, jac) {
            (Some(h), Some(j)) => Some(h.max(spectral_norm(&j))),
            _ => None,
        };
    }
    Ok(LipschitzEstimate { pairwise, hessian })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelSpec};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn scalar_coupled_lambda() {
        let m = build_model(&ModelSpec::new("scalar-coupled")).unwrap();
        let sol = solve_lambda(m.as_ref(), &v(&[2.0]), 0.1, &InnerSolveConfig::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 0.2).abs() < 1e-10);
    }

    #[test]
    fn gradient_descent_path_converges() {
        let m = build_model(&ModelSpec::new("scalar-coupled")).unwrap();
        let cfg = InnerSolveConfig {
            method: InnerMethod::GradientDescent,
            ..Default::default()
        };
        let sol = solve_lambda(m.as_ref(), &v(&[2.0]), 0.1, &cfg).unwrap();
        assert!(sol.converged && (sol.x[0] - 0.2).abs() < 1e-10);
    }

    #[test]
    fn scalar_coupled_danskin_is_exact() {
        let m = build_model(&ModelSpec::new("scalar-coupled")).unwrap();
        let r = danskin_residual(m.as_ref(), &v(&[1.0]), 0.1, &InnerSolveConfig::default()).unwrap();
        assert!(r < 1e-9, "{r}");
    }

    #[test]
    fn duplicate_samples_are_rejected() {
        let m = build_model(&ModelSpec::new("scalar-coupled")).unwrap();
        let err = lambda_lipschitz_estimate(m.as_ref(), &[v(&[1.0]), v(&[1.0])], 0.1, &InnerSolveConfig::default());
        assert_eq!(err, Err(InnerError::DegenerateSamples));
    }

    #[test]
    fn config_validation() {
        let bad = InnerSolveConfig {
            tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = InnerSolveConfig {
            init: InitStrategy::RandomRestarts { k: 0, radius: 1.0 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

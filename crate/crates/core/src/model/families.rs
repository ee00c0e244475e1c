use nalgebra::{DMatrix, DVector};

use super::{check_spd, check_symmetric, min_eigenvalue, LossModel, ModelError, Params, SlowMinimum, SPD_TOL};

/// `f(x, u) = ½(x − Bu)ᵀA(x − Bu) + ½uᵀCu`, `A` SPD, `C` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl Quadratic {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, ModelError> {
        check_spd("a", &a)?;
        if b.nrows() != a.nrows() {
            return Err(ModelError::Dimension(format!(
                "`b` has {} rows but `a` is {}x{}",
                b.nrows(),
                a.nrows(),
                a.ncols()
            )));
        }
        if c.nrows() != b.ncols() || c.ncols() != b.ncols() {
            return Err(ModelError::Dimension(format!(
                "`c` must be {0}x{0} to match `b`",
                b.ncols()
            )));
        }
        check_symmetric("c", &c)?;
        Ok(Self { a, b, c })
    }

    pub(super) fn from_params(p: &Params) -> Result<Self, ModelError> {
        p.allow(&["a", "b", "c", "dim_x", "dim_y"])?;
        let d = p.dim("dim_x", 1)?;
        let s = p.dim("dim_y", 1)?;
        let a = if p.is_scalar("a") {
            p.matrix("a", Some(d), Some(d))?
        } else {
            p.matrix("a", None, None)?
        }
        .unwrap_or_else(|| DMatrix::identity(d, d));
        let d = a.nrows();
        let b_cols = p.is_scalar("b").then_some(s);
        let b = p
            .matrix("b", Some(d), b_cols)?
            .unwrap_or_else(|| DMatrix::identity(d, s));
        let s = b.ncols();
        let c = p
            .matrix("c", Some(s), Some(s))?
            .unwrap_or_else(|| DMatrix::identity(s, s));
        Self::new(a, b, c)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    fn residual(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        x - &self.b * u
    }
}

impl LossModel for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn dim_x(&self) -> usize {
        self.a.nrows()
    }
    fn dim_y(&self) -> usize {
        self.b.ncols()
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let r = self.residual(x, u);
        0.5 * r.dot(&(&self.a * &r)) + 0.5 * u.dot(&(&self.c * u))
    }
    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * self.residual(x, u)
    }
    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let ar = &self.a * self.residual(x, u);
        &self.c * u - self.b.transpose() * ar
    }
    fn hess_xx(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }
    fn hess_ux(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(-(&self.a * &self.b))
    }
    fn oracle_lambda(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        Some(&self.b * u)
    }
    fn slow_minima(&self) -> Option<Vec<SlowMinimum>> {
        (min_eigenvalue(&self.c) > SPD_TOL).then(|| {
            vec![SlowMinimum {
                u: DVector::zeros(self.dim_y()),
                value: 0.0,
                global: true,
            }]
        })
    }
    fn fingerprint(&self) -> String {
        format!("{self:?}")
    }
}

/// `f(x, u) = ½(x − u)² + ½u²` with `d = s = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarCoupled;

impl LossModel for ScalarCoupled {
    fn name(&self) -> &str {
        "scalar-coupled"
    }
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let r = x[0] - u[0];
        0.5 * r * r + 0.5 * u[0] * u[0]
    }
    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0] - u[0])
    }
    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, -(x[0] - u[0]) + u[0])
    }
    fn hess_xx(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 1.0))
    }
    fn hess_ux(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, -1.0))
    }
    fn oracle_lambda(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        Some(u.clone())
    }
    fn slow_minima(&self) -> Option<Vec<SlowMinimum>> {
        Some(vec![SlowMinimum {
            u: DVector::zeros(1),
            value: 0.0,
            global: true,
        }])
    }
    fn fingerprint(&self) -> String {
        "ScalarCoupled".into()
    }
}

/// Pinched valley `f(x, u) = ½κ(u)‖x − m(u)‖² + ½c‖u‖²`.
///
/// * `κ(u) = κ₀(1 + q‖u‖²) ≥ κ₀ > 0`
/// * `m(u) = Mu + β·tanh((ū − μ)/w)·e₀`, where `ū` is the mean of `u`
///
/// The bend term makes the valley floor `λ(u) = m(u)` swing quickly in the
/// `x₀` direction while `ū` crosses `μ`; there the fast minimizer is most
/// sensitive to the slow coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PinchedValley {
    pub kappa: f64,
    pub kappa_quad: f64,
    pub coupling: DMatrix<f64>,
    pub bend_height: f64,
    pub bend_center: f64,
    pub bend_width: f64,
    pub slow_curvature: f64,
}

impl PinchedValley {
    pub(super) fn from_params(p: &Params) -> Result<Self, ModelError> {
        p.allow(&[
            "dim_x",
            "dim_y",
            "kappa",
            "kappa_quad",
            "coupling",
            "bend_height",
            "bend_center",
            "bend_width",
            "slow_curvature",
        ])?;
        let d = p.dim("dim_x", 1)?;
        let s = p.dim("dim_y", 1)?;
        let coupling = p
            .matrix("coupling", Some(d), Some(s))?
            .unwrap_or_else(|| DMatrix::zeros(d, s));
        let model = Self {
            kappa: p.scalar("kappa", 1.0)?,
            kappa_quad: p.scalar("kappa_quad", 0.0)?,
            coupling,
            bend_height: p.scalar("bend_height", 0.0)?,
            bend_center: p.scalar("bend_center", 0.0)?,
            bend_width: p.scalar("bend_width", 1.0)?,
            slow_curvature: p.scalar("slow_curvature", 1.0)?,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |name: &str, reason: &str| {
            Err(ModelError::InvalidParam {
                name: name.into(),
                reason: reason.into(),
            })
        };
        if !(self.kappa > 0.0) {
            return bad("kappa", "curvature floor must be > 0");
        }
        if self.kappa_quad < 0.0 {
            return bad("kappa_quad", "must be >= 0 so that kappa(u) >= kappa");
        }
        if !(self.bend_width > 0.0) {
            return bad("bend_width", "must be > 0");
        }
        Ok(())
    }

    pub fn curvature(&self, u: &DVector<f64>) -> f64 {
        self.kappa * (1.0 + self.kappa_quad * u.norm_squared())
    }

    fn bend_arg(&self, u: &DVector<f64>) -> f64 {
        (u.mean() - self.bend_center) / self.bend_width
    }

    /// Valley floor `m(u)`.
    pub fn floor(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut m = &self.coupling * u;
        m[0] += self.bend_height * self.bend_arg(u).tanh();
        m
    }

    /// Jacobian of `m`, `d × s`.
    fn floor_jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.coupling.clone();
        let t = self.bend_arg(u).tanh();
        let slope = self.bend_height * (1.0 - t * t) / (self.bend_width * u.len() as f64);
        for k in 0..u.len() {
            j[(0, k)] += slope;
        }
        j
    }
}

impl LossModel for PinchedValley {
    fn name(&self) -> &str {
        "pinched-valley"
    }
    fn dim_x(&self) -> usize {
        self.coupling.nrows()
    }
    fn dim_y(&self) -> usize {
        self.coupling.ncols()
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let e = x - self.floor(u);
        0.5 * self.curvature(u) * e.norm_squared() + 0.5 * self.slow_curvature * u.norm_squared()
    }
    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (x - self.floor(u)) * self.curvature(u)
    }
    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let e = x - self.floor(u);
        let k = self.curvature(u);
        let dk = u * (2.0 * self.kappa * self.kappa_quad);
        dk * (0.5 * e.norm_squared()) - self.floor_jacobian(u).transpose() * (e * k) + u * self.slow_curvature
    }
    fn hess_xx(&self, _x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let d = self.dim_x();
        Some(DMatrix::identity(d, d) * self.curvature(u))
    }
    fn hess_ux(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let e = x - self.floor(u);
        let dk = u * (2.0 * self.kappa * self.kappa_quad);
        Some(&e * dk.transpose() - self.floor_jacobian(u) * self.curvature(u))
    }
    fn oracle_lambda(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.floor(u))
    }
    fn slow_minima(&self) -> Option<Vec<SlowMinimum>> {
        (self.slow_curvature > 0.0).then(|| {
            vec![SlowMinimum {
                u: DVector::zeros(self.dim_y()),
                value: 0.0,
                global: true,
            }]
        })
    }
    fn fingerprint(&self) -> String {
        format!("{self:?}")
    }
}

/// Two slow valleys: `f(x, u) = ½‖x − u𝟙‖² + c(u² − 1)² + h·u` with scalar `u`.
///
/// `c = ¼` is the plain double well; a tilt `h > 0` makes the left valley
/// the global one.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleWellSlow {
    pub dim_x: usize,
    pub barrier: f64,
    pub tilt: f64,
}

impl DoubleWellSlow {
    pub fn new(dim_x: usize, barrier: f64, tilt: f64) -> Result<Self, ModelError> {
        if dim_x == 0 {
            return Err(ModelError::Dimension("dim_x must be >= 1".into()));
        }
        if !(barrier > 0.0) {
            return Err(ModelError::InvalidParam {
                name: "barrier".into(),
                reason: "must be > 0".into(),
            });
        }
        Ok(Self { dim_x, barrier, tilt })
    }

    pub(super) fn from_params(p: &Params) -> Result<Self, ModelError> {
        p.allow(&["dim_x", "dim_y", "barrier", "tilt"])?;
        if p.dim("dim_y", 1)? != 1 {
            return Err(ModelError::Dimension(
                "double-well-slow has a scalar slow coordinate (dim_y = 1)".into(),
            ));
        }
        Self::new(p.dim("dim_x", 1)?, p.scalar("barrier", 0.25)?, p.scalar("tilt", 0.0)?)
    }

    /// Slow potential `g(u) = c(u² − 1)² + h·u`.
    pub fn slow_potential(&self, u: f64) -> f64 {
        self.barrier * (u * u - 1.0).powi(2) + self.tilt * u
    }

    fn slow_potential_grad(&self, u: f64) -> f64 {
        4.0 * self.barrier * u * (u * u - 1.0) + self.tilt
    }
}

impl LossModel for DoubleWellSlow {
    fn name(&self) -> &str {
        "double-well-slow"
    }
    fn dim_x(&self) -> usize {
        self.dim_x
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let u0 = u[0];
        0.5 * x.iter().map(|xi| (xi - u0).powi(2)).sum::<f64>() + self.slow_potential(u0)
    }
    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        x.map(|xi| xi - u[0])
    }
    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let u0 = u[0];
        let pull: f64 = x.iter().map(|xi| xi - u0).sum();
        DVector::from_element(1, -pull + self.slow_potential_grad(u0))
    }
    fn hess_xx(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.dim_x, self.dim_x))
    }
    fn hess_ux(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(self.dim_x, 1, -1.0))
    }
    fn oracle_lambda(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_element(self.dim_x, u[0]))
    }
    fn slow_minima(&self) -> Option<Vec<SlowMinimum>> {
        let c = self.barrier;
        let roots = real_cubic_roots(4.0 * c, 0.0, -4.0 * c, self.tilt);
        let mut minima: Vec<SlowMinimum> = roots
            .into_iter()
            .filter(|&u| 12.0 * c * u * u - 4.0 * c > 0.0)
            .map(|u| SlowMinimum {
                u: DVector::from_element(1, u),
                value: self.slow_potential(u),
                global: false,
            })
            .collect();
        flag_global(&mut minima);
        Some(minima)
    }
    fn fingerprint(&self) -> String {
        format!("{self:?}")
    }
}

/// Two isolated fast minima for fixed `u`:
/// `f(x, u) = ¼(x₀² − 1)² + ½Σ_{i≥1} x_i² − γ·x₀·Σ_j u_j + ½c‖u‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiMinFast {
    pub dim_x: usize,
    pub dim_y: usize,
    pub coupling: f64,
    pub slow_curvature: f64,
}

impl MultiMinFast {
    pub(super) fn from_params(p: &Params) -> Result<Self, ModelError> {
        p.allow(&["dim_x", "dim_y", "coupling", "slow_curvature"])?;
        let slow_curvature = p.scalar("slow_curvature", 1.0)?;
        if !(slow_curvature > 0.0) {
            return Err(ModelError::InvalidParam {
                name: "slow_curvature".into(),
                reason: "must be > 0".into(),
            });
        }
        Ok(Self {
            dim_x: p.dim("dim_x", 1)?,
            dim_y: p.dim("dim_y", 1)?,
            coupling: p.scalar("coupling", 0.1)?,
            slow_curvature,
        })
    }

    fn tilt(&self, u: &DVector<f64>) -> f64 {
        self.coupling * u.sum()
    }

    /// Fast minima in the `x₀` coordinate for tilt `t`: roots of `x³ − x − t`
    /// with positive curvature, ascending.
    pub fn branch_minima(t: f64) -> Vec<f64> {
        real_cubic_roots(1.0, 0.0, -1.0, -t)
            .into_iter()
            .filter(|x| 3.0 * x * x - 1.0 > 0.0)
            .collect()
    }
}

impl LossModel for MultiMinFast {
    fn name(&self) -> &str {
        "multi-min-fast"
    }
    fn dim_x(&self) -> usize {
        self.dim_x
    }
    fn dim_y(&self) -> usize {
        self.dim_y
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let x0 = x[0];
        0.25 * (x0 * x0 - 1.0).powi(2) + 0.5 * x.rows(1, self.dim_x - 1).norm_squared() - self.tilt(u) * x0
            + 0.5 * self.slow_curvature * u.norm_squared()
    }
    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut g = x.clone();
        g[0] = x[0] * x[0] * x[0] - x[0] - self.tilt(u);
        g
    }
    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        u * self.slow_curvature - DVector::from_element(self.dim_y, self.coupling * x[0])
    }
    fn hess_xx(&self, x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut h = DMatrix::identity(self.dim_x, self.dim_x);
        h[(0, 0)] = 3.0 * x[0] * x[0] - 1.0;
        Some(h)
    }
    fn hess_ux(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.dim_x, self.dim_y);
        h.row_mut(0).fill(-self.coupling);
        Some(h)
    }
    fn oracle_lambda(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        let t = self.tilt(u);
        let value = |x0: f64| 0.25 * (x0 * x0 - 1.0).powi(2) - t * x0;
        // Lowest value, then smallest |x₀|, then lexicographic (ascending order).
        let best = Self::branch_minima(t).into_iter().reduce(|best, cand| {
            let (vb, vc) = (value(best), value(cand));
            if vc < vb || (vc == vb && cand.abs() < best.abs()) {
                cand
            } else {
                best
            }
        })?;
        let mut x = DVector::zeros(self.dim_x);
        x[0] = best;
        Some(x)
    }
    fn slow_minima(&self) -> Option<Vec<SlowMinimum>> {
        let (g, c, s) = (self.coupling, self.slow_curvature, self.dim_y as f64);
        if g == 0.0 {
            return Some(vec![SlowMinimum {
                u: DVector::zeros(self.dim_y),
                value: self.eval(
                    &self.oracle_lambda(&DVector::zeros(self.dim_y))?,
                    &DVector::zeros(self.dim_y),
                ),
                global: true,
            }]);
        }
        // Stationarity of the reduced objective: u = (γx*/c)𝟙 with x*² = 1 + sγ²/c.
        let x_star = (1.0 + s * g * g / c).sqrt();
        let mut minima: Vec<SlowMinimum> = [-1.0, 1.0]
            .iter()
            .map(|sign| {
                let u = DVector::from_element(self.dim_y, sign * g * x_star / c);
                let lam = self.oracle_lambda(&u).expect("cubic always has a real minimum");
                SlowMinimum {
                    value: self.eval(&lam, &u),
                    u,
                    global: false,
                }
            })
            .collect();
        flag_global(&mut minima);
        Some(minima)
    }
    fn fingerprint(&self) -> String {
        format!("{self:?}")
    }
}

fn flag_global(minima: &mut [SlowMinimum]) {
    let best = minima.iter().map(|m| m.value).fold(f64::INFINITY, f64::min);
    for m in minima.iter_mut() {
        m.global = m.value <= best + 1e-12 * best.abs().max(1.0);
    }
}

/// Real roots of `a·t³ + b·t² + c·t + d` (`a ≠ 0`), ascending, Newton-polished.
pub(crate) fn real_cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let (b, c, d) = (b / a, c / a, d / a);
    // Depressed cubic t = z − b/3: z³ + pz + q = 0.
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let mut roots = if disc < 0.0 {
        let r = (-p / 3.0).sqrt();
        let phi = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|k| 2.0 * r * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift)
            .collect::<Vec<_>>()
    } else {
        let sq = disc.sqrt();
        vec![(-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt() + shift]
    };
    for t in roots.iter_mut() {
        for _ in 0..4 {
            let f = ((*t + b) * *t + c) * *t + d;
            let df = (3.0 * *t + 2.0 * b) * *t + c;
            if df != 0.0 {
                *t -= f / df;
            }
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn cubic_roots_three_real() {
        let r = real_cubic_roots(1.0, 0.0, -1.0, 0.0);
        assert_eq!(r.len(), 3);
        assert!((r[0] + 1.0).abs() < 1e-14 && r[1].abs() < 1e-14 && (r[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cubic_roots_single_real() {
        let r = real_cubic_roots(1.0, 0.0, 1.0, -2.0);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn double_well_minima_and_global_flag() {
        let m = DoubleWellSlow::new(1, 0.25, 0.05).unwrap();
        let mins = m.slow_minima().unwrap();
        assert_eq!(mins.len(), 2);
        assert!(mins[0].u[0] < 0.0 && mins[1].u[0] > 0.0);
        assert!(mins[0].global && !mins[1].global);
        for mn in &mins {
            assert!(m.slow_potential_grad(mn.u[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_min_fast_picks_lower_branch() {
        let m = MultiMinFast {
            dim_x: 2,
            dim_y: 1,
            coupling: 0.1,
            slow_curvature: 1.0,
        };
        let lam = m.oracle_lambda(&v(&[1.0])).unwrap();
        assert!(lam[0] > 1.0 && lam[1] == 0.0);
        let lam = m.oracle_lambda(&v(&[-1.0])).unwrap();
        assert!(lam[0] < -1.0);
        // Tie at u = 0 resolves lexicographically to the negative branch.
        let lam = m.oracle_lambda(&v(&[0.0])).unwrap();
        assert_eq!(lam[0], -1.0);
        assert_eq!(MultiMinFast::branch_minima(0.1).len(), 2);
        assert_eq!(MultiMinFast::branch_minima(1.0).len(), 1);
    }

    #[test]
    fn multi_min_fast_slow_minima_are_stationary() {
        let m = MultiMinFast {
            dim_x: 1,
            dim_y: 2,
            coupling: 0.3,
            slow_curvature: 2.0,
        };
        for mn in m.slow_minima().unwrap() {
            let lam = m.oracle_lambda(&mn.u).unwrap();
            assert!(m.grad_x(&lam, &mn.u).norm() < 1e-12);
            assert!(m.grad_u(&lam, &mn.u).norm() < 1e-12);
            assert!(mn.global);
        }
    }

    #[test]
    fn pinched_valley_floor_is_the_argmin() {
        let spec = crate::model::ModelSpec::new("pinched-valley")
            .scalar("dim_x", 2.0)
            .scalar("bend_height", 3.0)
            .scalar("bend_center", 0.5)
            .scalar("bend_width", 0.1);
        let m = crate::model::build_model(&spec).unwrap();
        let u = v(&[0.45]);
        let lam = m.oracle_lambda(&u).unwrap();
        assert!(m.grad_x(&lam, &u).norm() == 0.0);
        assert!(lam[0] < 0.0 && lam[1] == 0.0);
    }

    #[test]
    fn pinched_valley_rejects_bad_curvature() {
        let spec = crate::model::ModelSpec::new("pinched-valley").scalar("kappa", 0.0);
        assert!(crate::model::build_model(&spec).is_err());
    }

    #[test]
    fn double_well_needs_scalar_slow_block() {
        let spec = crate::model::ModelSpec::new("double-well-slow").scalar("dim_y", 2.0);
        assert!(matches!(
            crate::model::build_model(&spec),
            Err(ModelError::Dimension(_))
        ));
    }
}

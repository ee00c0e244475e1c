//! Experiment configuration: strict TOML parsing, defaults and validation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize};
use ttslab::dominance::{McBudget, ProductSpace};
use ttslab::flow::{BlockSel, Integrator, OdeSpec, SdeSpec};
use ttslab::io::hash_hex;
use ttslab::model::{build_model, LossModel, ModelSpec};
use ttslab::regime::{DetectorConfig, SegmentThresholds};
use ttslab::rng::derive_seed;
use ttslab::sgd::{NoiseSpec, TimescaleConfig};

use crate::functions::FunctionSpec;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Sgd,
    Ode,
    Sde,
    Compare,
    Sweep,
    Dominance,
    ExitTimes,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sgd => "sgd",
            Mode::Ode => "ode",
            Mode::Sde => "sde",
            Mode::Compare => "compare",
            Mode::Sweep => "sweep",
            Mode::Dominance => "dominance",
            Mode::ExitTimes => "exit-times",
        }
    }
}

/// Stepsizes and noise. `a` and `horizon` are only needed by SGD-based modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimescaleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<u64>,
}

/// Initial state. `y` and `u = εy` are alternatives; `x` defaults to `λ(y)`
/// when the model has an analytic minimizer, else to zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    /// Added to `x` after the default is resolved.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_offset: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_k_floor")]
    pub k_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slow_diffusion: Option<f64>,
    pub h: f64,
    pub t_end: f64,
    #[serde(default = "default_one")]
    pub record_every: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Window length `T` on the fast clock.
    pub window: f64,
    #[serde(default = "default_block")]
    pub block: BlockSel,
    #[serde(default)]
    pub integrator: Integrator,
    /// ODE step; defaults to `a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Mandatory upper bound on the last window's deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub cell_mode: Mode,
    /// Named scalars to vary; cells are the Cartesian product in key order.
    pub grid: BTreeMap<String, Vec<f64>>,
    /// Share of trailing records treated as stationary.
    #[serde(default = "default_half")]
    pub stationary_fraction: f64,
    /// Mandatory range for the fitted jitter exponent (needs `a` as the only swept key).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_jitter_slope: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitTimesSection {
    pub s_eps: Vec<f64>,
    /// One horizon for all levels, or one per level.
    pub t_end: OneOrMany,
    pub h: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slow_diffusion: Option<f64>,
    /// Time the process must stay in a new valley; defaults to `5/ε`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell: Option<f64>,
    #[serde(default = "default_min_r2")]
    pub min_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancySection {
    pub epsilons: Vec<f64>,
    pub s_eps: f64,
    pub h: f64,
    /// Horizon `t_end = t_end_scale / ε²`.
    pub t_end_scale: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slow_diffusion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    /// Start state; `u` is converted to `y = u/ε` per level.
    #[serde(default)]
    pub init: InitSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominanceSection {
    pub space: ProductSpace,
    pub function: FunctionSpec,
    pub p_max: usize,
    pub eps_target: f64,
    #[serde(default)]
    pub budget: McBudget,
    /// Also run the exhaustive search and require it to agree.
    #[serde(default)]
    pub exhaustive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Detectors {
    pub enabled: bool,
    pub segment: SegmentThresholds,
    pub phenomena: DetectorConfig,
}

impl Default for Detectors {
    fn default() -> Self {
        Self {
            enabled: true,
            segment: SegmentThresholds::default(),
            phenomena: DetectorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, deserialize_with = "model_field", skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timescale: Option<TimescaleSection>,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub detectors: Detectors,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde: Option<SdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_times: Option<ExitTimesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<OccupancySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominance: Option<DominanceSection>,
}

fn default_alpha() -> f64 {
    0.5
}
fn default_k_floor() -> f64 {
    1.0
}
fn default_one() -> u64 {
    1
}
fn default_half() -> f64 {
    0.5
}
fn default_min_r2() -> f64 {
    0.9
}
fn default_replicas() -> usize {
    1
}
fn default_block() -> BlockSel {
    BlockSel::Slow
}

/// `model = "name"` or a `[model]` table.
fn model_field<'de, D: Deserializer<'de>>(d: D) -> Result<Option<ModelSpec>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Field {
        Name(String),
        Spec(ModelSpec),
    }
    Ok(Some(match Field::deserialize(d)? {
        Field::Name(name) => ModelSpec::new(&name),
        Field::Spec(spec) => spec,
    }))
}

/// Parameters a sweep grid may vary, besides `model.<param>`.
pub const SWEEP_KEYS: [&str; 7] = ["a", "epsilon", "sigma", "sigma_slow", "s_eps", "alpha", "horizon"];

/// One sweep cell: its index, overrides and derived seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub values: Vec<(String, f64)>,
    pub seed: u64,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.replicas == 0 {
            return Err(config_err("replicas must be ≥ 1"));
        }
        if self.mode == Mode::Dominance {
            let d = self
                .dominance
                .as_ref()
                .ok_or_else(|| config_err("mode = dominance needs a [dominance] table"))?;
            d.space.validate().map_err(|e| config_err(e.to_string()))?;
            d.budget.validate().map_err(|e| config_err(e.to_string()))?;
            if d.p_max == 0 {
                return Err(config_err("dominance.p_max must be ≥ 1"));
            }
            if !(d.eps_target >= 0.0) {
                return Err(config_err("dominance.eps_target must be ≥ 0"));
            }
            if d.exhaustive && d.space.n > ttslab::dominance::EXHAUSTIVE_MAX_N {
                return Err(config_err(format!(
                    "dominance.exhaustive needs N ≤ {} (got {})",
                    ttslab::dominance::EXHAUSTIVE_MAX_N,
                    d.space.n
                )));
            }
            return d.function.validate(&d.space);
        }
        let model = self.build_model()?;
        let ts = self.timescale.ok_or_else(|| config_err("missing [timescale] table"))?;
        if !(ts.epsilon > 0.0 && ts.epsilon < 1.0) {
            return Err(config_err(format!(
                "timescale.epsilon = {} violates 0 < ε < 1",
                ts.epsilon
            )));
        }
        self.init_state(model.as_ref(), ts.epsilon, &self.init)?;
        match self.mode {
            Mode::Sgd | Mode::Compare => {
                self.timescale_config(None)?;
            }
            Mode::Sweep => {
                let sweep = self
                    .sweep
                    .as_ref()
                    .ok_or_else(|| config_err("mode = sweep needs a [sweep] table"))?;
                if !matches!(sweep.cell_mode, Mode::Sgd | Mode::Sde) {
                    return Err(config_err("sweep.cell_mode must be sgd or sde"));
                }
                if sweep.grid.is_empty() || sweep.grid.values().any(Vec::is_empty) {
                    return Err(config_err("sweep grid must be non-empty with non-empty value lists"));
                }
                if !(sweep.stationary_fraction > 0.0 && sweep.stationary_fraction <= 1.0) {
                    return Err(config_err("sweep.stationary_fraction must lie in (0, 1]"));
                }
                for key in sweep.grid.keys() {
                    let known = SWEEP_KEYS.contains(&key.as_str())
                        || key
                            .strip_prefix("model.")
                            .is_some_and(|p| self.model.as_ref().is_some_and(|m| m.params.contains_key(p)));
                    if !known {
                        return Err(config_err(format!(
                            "sweep grid key `{key}` is not a sweepable parameter (use one of {} or an existing model.<param>)",
                            SWEEP_KEYS.join(", ")
                        )));
                    }
                }
                if sweep.cell_mode == Mode::Sde && self.sde.is_none() {
                    return Err(config_err("sweep.cell_mode = sde needs an [sde] table"));
                }
                for cell in self.sweep_plan() {
                    let c = self.for_cell(&cell);
                    c.build_model()?;
                    match sweep.cell_mode {
                        Mode::Sgd => {
                            c.timescale_config(None)?;
                        }
                        _ => {
                            c.sde_spec()?;
                        }
                    }
                }
            }
            Mode::Ode => {
                let ode = self.ode.ok_or_else(|| config_err("mode = ode needs an [ode] table"))?;
                ode.validate().map_err(|e| config_err(e.to_string()))?;
            }
            Mode::Sde => {
                self.sde_spec()?;
            }
            Mode::ExitTimes => {
                let et = self
                    .exit_times
                    .as_ref()
                    .ok_or_else(|| config_err("mode = exit-times needs an [exit_times] table"))?;
                if et.s_eps.is_empty() {
                    return Err(config_err("exit_times.s_eps must list at least one level"));
                }
                if let OneOrMany::Many(v) = &et.t_end {
                    if v.len() != et.s_eps.len() {
                        return Err(config_err(
                            "exit_times.t_end list must match exit_times.s_eps in length",
                        ));
                    }
                }
                for spec in self.exit_specs()? {
                    spec.validate().map_err(|e| config_err(format!("exit_times: {e}")))?;
                }
                if model.slow_minima().is_none_or(|m| m.len() < 2) {
                    return Err(config_err(format!(
                        "model `{}` does not declare two slow valleys",
                        model.name()
                    )));
                }
                if let Some(occ) = &self.occupancy {
                    if occ.epsilons.is_empty() || occ.replicas == Some(0) {
                        return Err(config_err("occupancy needs epsilons and replicas ≥ 1"));
                    }
                    for (eps, spec) in occ.epsilons.iter().zip(self.occupancy_specs()?) {
                        spec.validate().map_err(|e| config_err(format!("occupancy: {e}")))?;
                        self.init_state(model.as_ref(), *eps, &occ.init)?;
                    }
                }
            }
            Mode::Dominance => unreachable!(),
        }
        if self.mode == Mode::Compare {
            let c = self
                .compare
                .ok_or_else(|| config_err("mode = compare needs a [compare] table"))?;
            if !(c.window > 0.0) || c.h.is_some_and(|h| !(h > 0.0)) {
                return Err(config_err("compare.window and compare.h must be > 0"));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<Box<dyn LossModel>, CliError> {
        let spec = self.model.as_ref().ok_or_else(|| config_err("missing model"))?;
        build_model(spec).map_err(|e| config_err(format!("model: {e}")))
    }

    pub fn epsilon(&self) -> f64 {
        self.timescale.map_or(f64::NAN, |t| t.epsilon)
    }

    /// Core SGD configuration; `seed` overrides the global seed.
    pub fn timescale_config(&self, seed: Option<u64>) -> Result<TimescaleConfig, CliError> {
        let ts = self.timescale.ok_or_else(|| config_err("missing [timescale] table"))?;
        let a =
            ts.a.ok_or_else(|| config_err(format!("mode = {} needs timescale.a", self.mode.as_str())))?;
        let horizon = ts
            .horizon
            .ok_or_else(|| config_err(format!("mode = {} needs timescale.horizon", self.mode.as_str())))?;
        let cfg = TimescaleConfig {
            a,
            epsilon: ts.epsilon,
            horizon,
            seed: seed.unwrap_or(self.seed),
            noise: ts.noise,
            stride: ts.stride,
        };
        cfg.validate().map_err(|e| config_err(format!("timescale: {e}")))?;
        Ok(cfg)
    }

    pub fn sde_spec(&self) -> Result<SdeSpec, CliError> {
        let s = self.sde.ok_or_else(|| config_err("missing [sde] table"))?;
        let spec = SdeSpec {
            eps: self.epsilon(),
            alpha: s.alpha,
            k_floor: s.k_floor,
            s_eps: s.s_eps,
            slow_diffusion: s.slow_diffusion,
            h: s.h,
            t_end: s.t_end,
            seed: self.seed,
            record_every: s.record_every,
        };
        spec.validate().map_err(|e| config_err(format!("sde: {e}")))?;
        Ok(spec)
    }

    pub fn exit_specs(&self) -> Result<Vec<SdeSpec>, CliError> {
        let et = self
            .exit_times
            .as_ref()
            .ok_or_else(|| config_err("missing [exit_times] table"))?;
        Ok(et
            .s_eps
            .iter()
            .enumerate()
            .map(|(i, &s)| SdeSpec {
                s_eps: Some(s),
                slow_diffusion: et.slow_diffusion,
                seed: self.seed,
                ..SdeSpec::new(
                    self.epsilon(),
                    et.alpha,
                    et.h,
                    match &et.t_end {
                        OneOrMany::One(t) => *t,
                        OneOrMany::Many(v) => v[i],
                    },
                )
            })
            .collect())
    }

    pub fn occupancy_specs(&self) -> Result<Vec<SdeSpec>, CliError> {
        let occ = self
            .occupancy
            .as_ref()
            .ok_or_else(|| config_err("missing [occupancy] table"))?;
        Ok(occ
            .epsilons
            .iter()
            .map(|&eps| SdeSpec {
                s_eps: Some(occ.s_eps),
                slow_diffusion: occ.slow_diffusion,
                seed: self.seed,
                ..SdeSpec::new(eps, occ.alpha, occ.h, occ.t_end_scale / (eps * eps))
            })
            .collect())
    }

    /// Resolve an initial state against `model` at scale `eps`.
    pub fn init_state(
        &self,
        model: &dyn LossModel,
        eps: f64,
        init: &InitSpec,
    ) -> Result<ttslab::model::StateVector, CliError> {
        use nalgebra::DVector;
        let (d, s) = (model.dim_x(), model.dim_y());
        let check = |name: &str, v: &[f64], len: usize| {
            if v.len() != len {
                Err(config_err(format!(
                    "init.{name} has length {}, model needs {len}",
                    v.len()
                )))
            } else {
                Ok(DVector::from_column_slice(v))
            }
        };
        let y = match (&init.y, &init.u) {
            (Some(_), Some(_)) => return Err(config_err("init.y and init.u are alternatives; set one")),
            (Some(y), None) => check("y", y, s)?,
            (None, Some(u)) => check("u", u, s)? / eps,
            (None, None) => DVector::zeros(s),
        };
        let mut x = match &init.x {
            Some(x) => check("x", x, d)?,
            None => model.oracle_lambda(&(&y * eps)).unwrap_or_else(|| DVector::zeros(d)),
        };
        if let Some(off) = &init.x_offset {
            x += check("x_offset", off, d)?;
        }
        ttslab::model::StateVector::new(x, y).map_err(|e| config_err(format!("init: {e}")))
    }

    /// Sweep cells in row-major order over the sorted grid keys.
    pub fn sweep_plan(&self) -> Vec<SweepCell> {
        let Some(sweep) = &self.sweep else {
            return Vec::new();
        };
        let keys: Vec<&String> = sweep.grid.keys().collect();
        let mut cells = vec![Vec::new()];
        for key in &keys {
            let mut next = Vec::new();
            for prefix in &cells {
                for v in &sweep.grid[*key] {
                    let mut c: Vec<(String, f64)> = prefix.clone();
                    c.push(((*key).clone(), *v));
                    next.push(c);
                }
            }
            cells = next;
        }
        cells
            .into_iter()
            .enumerate()
            .map(|(index, values)| SweepCell {
                index,
                values,
                seed: derive_seed(self.seed, index as u64),
            })
            .collect()
    }

    /// Copy of the configuration with one cell's overrides applied.
    pub fn for_cell(&self, cell: &SweepCell) -> ExperimentConfig {
        let mut c = self.clone();
        c.seed = cell.seed;
        for (key, v) in &cell.values {
            let v = *v;
            if let Some(p) = key.strip_prefix("model.") {
                if let Some(m) = c.model.as_mut() {
                    m.params.insert(p.to_string(), ttslab::model::ParamValue::Scalar(v));
                }
                continue;
            }
            if let Some(ts) = c.timescale.as_mut() {
                match key.as_str() {
                    "a" => ts.a = Some(v),
                    "epsilon" => ts.epsilon = v,
                    "sigma" => ts.noise.sigma = v,
                    "sigma_slow" => ts.noise.sigma_slow = Some(v),
                    "horizon" => ts.horizon = Some(v as u64),
                    _ => {}
                }
            }
            if let Some(sde) = c.sde.as_mut() {
                match key.as_str() {
                    "s_eps" => sde.s_eps = Some(v),
                    "alpha" => sde.alpha = v,
                    _ => {}
                }
            }
        }
        c
    }

    /// Digest of the effective configuration, excluding the output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        hash_hex(&toml::to_string(&c).expect("configuration serializes"))
    }

    /// Effective configuration with derived quantities, as echoed before a run.
    pub fn echo(&self) -> String {
        let mut out = String::from("# effective configuration\n");
        out.push_str(&toml::to_string(self).expect("configuration serializes"));
        out.push_str("\n[derived]\n");
        writeln!(out, "config_hash = \"{}\"", self.hash()).unwrap();
        if let Ok(cfg) = self.timescale_config(None) {
            writeln!(out, "b = {}", echo_float(cfg.b())).unwrap();
            writeln!(out, "stride = {}", cfg.effective_stride()).unwrap();
        }
        if let Ok(spec) = self.sde_spec() {
            writeln!(out, "s_eps = {}", echo_float(spec.noise_scale())).unwrap();
            writeln!(out, "slow_diffusion = {}", echo_float(spec.slow_scale())).unwrap();
            writeln!(out, "s_eps_below_floor = {}", spec.below_floor()).unwrap();
        }
        let plan = self.sweep_plan();
        if self.mode == Mode::Sweep {
            writeln!(out, "\n# plan: {} runs", plan.len()).unwrap();
            for cell in &plan {
                let vals: Vec<String> = cell
                    .values
                    .iter()
                    .map(|(k, v)| format!("{k}={}", echo_float(*v)))
                    .collect();
                writeln!(
                    out,
                    "# cell {}: {} seed={} replicas={}",
                    cell.index,
                    vals.join(" "),
                    cell.seed,
                    self.replicas
                )
                .unwrap();
            }
        }
        out
    }
}

/// Render a derived float with 12 significant digits, so `0.1 × 0.1` echoes as `0.01`.
pub fn echo_float(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    format!("{rounded:?}")
}

/// Parse and echo a configuration without running it.
pub fn validate_text(text: &str) -> Result<String, CliError> {
    Ok(parse_config(text)?.echo())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_float_rounds_products() {
        assert_eq!(echo_float(0.1 * 0.1), "0.01");
        assert_eq!(echo_float(0.005 * 0.08), "0.0004");
        assert_eq!(echo_float(1.0 / 3.0), "0.333333333333");
    }

    #[test]
    fn sweep_plan_is_row_major_over_sorted_keys() {
        let cfg = parse_config(
            r#"
            mode = "sweep"
            model = "quadratic"
            [timescale]
            a = 0.1
            epsilon = 0.1
            horizon = 10
            [sweep.grid]
            sigma = [0.1, 0.2]
            a = [0.01, 0.02, 0.04]
            "#,
        )
        .unwrap();
        let plan = cfg.sweep_plan();
        assert_eq!(plan.len(), 6);
        assert_eq!(
            plan[1].values,
            vec![("a".to_string(), 0.01), ("sigma".to_string(), 0.2)]
        );
        assert_eq!(plan[5].seed, derive_seed(0, 5));
        let cell = cfg.for_cell(&plan[5]);
        assert_eq!(cell.timescale.unwrap().a, Some(0.04));
        assert_eq!(cell.timescale.unwrap().noise.sigma, 0.2);
    }
}

//! Coordinate dominance on product spaces.
//!
//! For `f` on `S^N` with i.i.d. coordinates, a small set `B` of coordinates
//! often carries almost all of `f`: `‖f − E[f | X_B]‖₁` is small. This module
//! estimates that residual by nested Monte Carlo and searches for `B` greedily
//! or, for small `N`, exhaustively.
//!
//! Coordinates are 0-based. All candidate sets within one search share the same
//! outer and inner draws (common random numbers), so differences between
//! candidates are not swamped by sampling noise.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{fmt_f64, Csv};
use crate::rng::{Block, CounterRng};

/// Largest `N` accepted by [`exhaustive_select`].
pub const EXHAUSTIVE_MAX_N: usize = 15;

const Z95: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DominanceError {
    #[error("invalid dominance configuration: {0}")]
    Config(String),
    #[error("coordinate {index} out of range for N = {n}")]
    Coordinate { index: usize, n: usize },
    #[error("f returned a non-finite value ({value}) on outer sample {outer}")]
    NonFinite { outer: usize, value: f64 },
    #[error("exhaustive search is limited to N ≤ {EXHAUSTIVE_MAX_N} (got {0})")]
    TooLarge(usize),
}

/// Distribution of a single coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Base {
    /// Uniform on `[0, 1]` with metric `|s − t|`.
    UnitInterval,
    /// Uniform on `{0, …, k−1}` (stored as `f64`) with the discrete metric.
    Alphabet { k: u32 },
}

/// `S^N` under the product measure, with the normalized average metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSpace {
    pub base: Base,
    pub n: usize,
}

impl ProductSpace {
    pub fn new(base: Base, n: usize) -> Result<Self, DominanceError> {
        let space = Self { base, n };
        space.validate()?;
        Ok(space)
    }

    pub fn unit_interval(n: usize) -> Result<Self, DominanceError> {
        Self::new(Base::UnitInterval, n)
    }

    pub fn alphabet(k: u32, n: usize) -> Result<Self, DominanceError> {
        Self::new(Base::Alphabet { k }, n)
    }

    pub fn validate(&self) -> Result<(), DominanceError> {
        if self.n == 0 {
            return Err(DominanceError::Config("N must be at least 1".into()));
        }
        if let Base::Alphabet { k } = self.base {
            if k < 2 {
                return Err(DominanceError::Config(format!("alphabet size must be ≥ 2 (got {k})")));
            }
        }
        Ok(())
    }

    /// Fill `out` (length `N`) with one draw.
    pub fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match self.base {
            Base::UnitInterval => out.iter_mut().for_each(|v| *v = rng.random::<f64>()),
            Base::Alphabet { k } => out.iter_mut().for_each(|v| *v = rng.random_range(0..k) as f64),
        }
    }

    /// `d_N(s, t) = (1/N) Σ d(s_i, t_i)`.
    pub fn distance(&self, s: &[f64], t: &[f64]) -> f64 {
        let sum: f64 = s
            .iter()
            .zip(t)
            .map(|(a, b)| match self.base {
                Base::UnitInterval => (a - b).abs(),
                Base::Alphabet { .. } => f64::from(u8::from(a != b)),
            })
            .sum();
        sum / self.n as f64
    }
}

/// Nested Monte-Carlo sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McBudget {
    pub n_outer: usize,
    pub n_inner: usize,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            n_outer: 4096,
            n_inner: 256,
        }
    }
}

impl McBudget {
    pub fn new(n_outer: usize, n_inner: usize) -> Self {
        Self { n_outer, n_inner }
    }

    pub fn validate(&self) -> Result<(), DominanceError> {
        if self.n_outer == 0 || self.n_inner == 0 {
            return Err(DominanceError::Config(format!(
                "n_outer and n_inner must be ≥ 1 (got {} and {})",
                self.n_outer, self.n_inner
            )));
        }
        Ok(())
    }
}

/// Estimate of `‖f − E[f | X_B]‖₁` with a 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualEstimate {
    pub residual: f64,
    pub ci: f64,
    /// Number of `f` evaluations spent on this estimate.
    pub samples: u64,
}

/// One row of a greedy search.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStep {
    pub step: usize,
    /// `None` for the initial empty set.
    pub coord_added: Option<usize>,
    pub residual: f64,
    pub ci: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceResult {
    /// Selected coordinates in order of selection (sorted for exhaustive search).
    pub set: Vec<usize>,
    pub residual_l1: f64,
    pub ci_halfwidth: f64,
    pub samples_used: u64,
    pub steps: Vec<SelectionStep>,
}

impl DominanceResult {
    pub fn sorted_set(&self) -> Vec<usize> {
        let mut s = self.set.clone();
        s.sort_unstable();
        s
    }

    /// `step,coord_added,residual,ci`; the empty-set row leaves `coord_added` blank.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut csv = Csv::with_header(config_hash, &["step", "coord_added", "residual", "ci"]);
        for s in &self.steps {
            csv.row(&[
                s.step.to_string(),
                s.coord_added.map(|c| c.to_string()).unwrap_or_default(),
                fmt_f64(s.residual),
                fmt_f64(s.ci),
            ]);
        }
        csv.finish()
    }
}

/// Per-outer-sample terms `|f(ω) − mean_j f(ω_B, Z_j)|` for several sets.
///
/// Returns one row per outer sample, one column per set. The same `ω` and
/// `Z_j` are used for every set.
fn outer_terms<F>(
    f: &F,
    space: &ProductSpace,
    sets: &[Vec<usize>],
    budget: McBudget,
    seed: u64,
) -> Result<Vec<Vec<f64>>, DominanceError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    space.validate()?;
    budget.validate()?;
    for set in sets {
        if let Some(&index) = set.iter().find(|&&c| c >= space.n) {
            return Err(DominanceError::Coordinate { index, n: space.n });
        }
    }
    let n = space.n;
    let streams = CounterRng::new(seed);
    (0..budget.n_outer)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.slot(i as u64, 0, Block::Aux);
            let mut omega = vec![0.0; n];
            space.sample_into(&mut rng, &mut omega);
            let mut inner = vec![0.0; n * budget.n_inner];
            for row in inner.chunks_mut(n) {
                space.sample_into(&mut rng, row);
            }
            let check = |v: f64| {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(DominanceError::NonFinite { outer: i, value: v })
                }
            };
            let f_omega = check(f(&omega))?;
            let mut saved = Vec::new();
            let mut terms = Vec::with_capacity(sets.len());
            for set in sets {
                let mut sum = 0.0;
                for row in inner.chunks_mut(n) {
                    saved.clear();
                    for &c in set {
                        saved.push(row[c]);
                        row[c] = omega[c];
                    }
                    sum += check(f(row))?;
                    for (&c, &v) in set.iter().zip(&saved) {
                        row[c] = v;
                    }
                }
                terms.push((f_omega - sum / budget.n_inner as f64).abs());
            }
            Ok(terms)
        })
        .collect()
}

fn column_estimate(terms: &[Vec<f64>], col: usize, n_inner: usize) -> ResidualEstimate {
    let k = terms.len() as f64;
    let mean = terms.iter().map(|r| r[col]).sum::<f64>() / k;
    let var = if terms.len() > 1 {
        terms.iter().map(|r| (r[col] - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    ResidualEstimate {
        residual: mean,
        ci: Z95 * (var / k).sqrt(),
        samples: terms.len() as u64 * (n_inner as u64 + 1),
    }
}

/// Index of the winning column among `cols`.
///
/// A column is tied with the minimum when the paired 95% interval of its
/// difference to the minimum contains zero; the first tied column wins.
fn pick(terms: &[Vec<f64>], cols: &[usize]) -> usize {
    let k = terms.len() as f64;
    let means: Vec<f64> = cols
        .iter()
        .map(|&c| terms.iter().map(|r| r[c]).sum::<f64>() / k)
        .collect();
    let best = (0..cols.len()).fold(0, |b, j| if means[j] < means[b] { j } else { b });
    for j in 0..cols.len() {
        if j == best {
            return j;
        }
        let d = means[j] - means[best];
        let var = if terms.len() > 1 {
            terms
                .iter()
                .map(|r| (r[cols[j]] - r[cols[best]] - d).powi(2))
                .sum::<f64>()
                / (k - 1.0)
        } else {
            0.0
        };
        if d <= Z95 * (var / k).sqrt() {
            return j;
        }
    }
    best
}

/// Nested Monte-Carlo estimate of `‖f − E[f | X_B]‖₁`.
///
/// For each outer draw `ω`, `E[f | X_B = ω_B]` is estimated from `n_inner`
/// draws that resample every coordinate outside `B`. The interval is
/// `1.96 ×` the outer standard error. The estimate carries an upward bias of
/// order `sd(f)/√n_inner` from the inner averages.
pub fn conditional_residual<F>(
    f: &F,
    set: &[usize],
    space: &ProductSpace,
    budget: McBudget,
    seed: u64,
) -> Result<ResidualEstimate, DominanceError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let terms = outer_terms(f, space, &[set.to_vec()], budget, seed)?;
    Ok(column_estimate(&terms, 0, budget.n_inner))
}

/// Greedy forward selection.
///
/// Starts from the empty set and repeatedly adds the coordinate with the
/// smallest estimated residual, stopping once the residual drops below
/// `eps_target` or `p_max` coordinates are selected.
pub fn greedy_select<F>(
    f: &F,
    space: &ProductSpace,
    p_max: usize,
    eps_target: f64,
    budget: McBudget,
    seed: u64,
) -> Result<DominanceResult, DominanceError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if p_max == 0 {
        return Err(DominanceError::Config("p_max must be at least 1".into()));
    }
    if !(eps_target >= 0.0) {
        return Err(DominanceError::Config(format!(
            "eps_target must be ≥ 0 (got {eps_target})"
        )));
    }
    let p_max = p_max.min(space.n);
    let mut set: Vec<usize> = Vec::new();
    let mut samples = 0;
    let terms = outer_terms(f, space, &[Vec::new()], budget, seed)?;
    let mut current = column_estimate(&terms, 0, budget.n_inner);
    samples += current.samples;
    let mut steps = vec![SelectionStep {
        step: 0,
        coord_added: None,
        residual: current.residual,
        ci: current.ci,
    }];
    while current.residual >= eps_target && set.len() < p_max {
        let candidates: Vec<usize> = (0..space.n).filter(|c| !set.contains(c)).collect();
        let sets: Vec<Vec<usize>> = candidates
            .iter()
            .map(|&c| {
                let mut s = set.clone();
                s.push(c);
                s
            })
            .collect();
        let terms = outer_terms(f, space, &sets, budget, seed)?;
        samples += (terms.len() * (budget.n_inner * sets.len() + 1)) as u64;
        let cols: Vec<usize> = (0..sets.len()).collect();
        let j = pick(&terms, &cols);
        current = column_estimate(&terms, j, budget.n_inner);
        set.push(candidates[j]);
        steps.push(SelectionStep {
            step: set.len(),
            coord_added: Some(candidates[j]),
            residual: current.residual,
            ci: current.ci,
        });
    }
    Ok(DominanceResult {
        set,
        residual_l1: current.residual,
        ci_halfwidth: current.ci,
        samples_used: samples,
        steps,
    })
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in start..n {
            if n - c < k - cur.len() {
                break;
            }
            cur.push(c);
            rec(c + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive search over subsets, smallest size first.
///
/// Returns the best set of the smallest size whose residual is below
/// `eps_target`, or the best set of size `p_max` if none is. Ties follow the
/// same paired rule as [`greedy_select`], resolved lexicographically.
pub fn exhaustive_select<F>(
    f: &F,
    space: &ProductSpace,
    p_max: usize,
    eps_target: f64,
    budget: McBudget,
    seed: u64,
) -> Result<DominanceResult, DominanceError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if space.n > EXHAUSTIVE_MAX_N {
        return Err(DominanceError::TooLarge(space.n));
    }
    if p_max == 0 {
        return Err(DominanceError::Config("p_max must be at least 1".into()));
    }
    let p_max = p_max.min(space.n);
    let mut samples = 0;
    let mut steps = Vec::new();
    for k in 0..=p_max {
        let sets = subsets(space.n, k);
        let terms = outer_terms(f, space, &sets, budget, seed)?;
        samples += (terms.len() * (budget.n_inner * sets.len() + 1)) as u64;
        let cols: Vec<usize> = (0..sets.len()).collect();
        let j = pick(&terms, &cols);
        let est = column_estimate(&terms, j, budget.n_inner);
        steps.push(SelectionStep {
            step: k,
            coord_added: sets[j].last().copied(),
            residual: est.residual,
            ci: est.ci,
        });
        if est.residual < eps_target || k == p_max {
            return Ok(DominanceResult {
                set: sets[j].clone(),
                residual_l1: est.residual,
                ci_halfwidth: est.ci,
                samples_used: samples,
                steps,
            });
        }
    }
    unreachable!("loop returns at k = p_max")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_are_lexicographic() {
        assert_eq!(
            subsets(4, 2),
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(subsets(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(subsets(5, 3).len(), 10);
    }

    #[test]
    fn distance_is_normalized() {
        let s = ProductSpace::unit_interval(4).unwrap();
        assert!((s.distance(&[0.0, 0.0, 0.0, 0.0], &[1.0, 0.5, 0.0, 0.5]) - 0.5).abs() < 1e-15);
        let a = ProductSpace::alphabet(3, 4).unwrap();
        assert_eq!(a.distance(&[0.0, 1.0, 2.0, 0.0], &[0.0, 2.0, 2.0, 1.0]), 0.5);
    }

    #[test]
    fn alphabet_draws_stay_in_range() {
        let s = ProductSpace::alphabet(3, 1000).unwrap();
        let mut rng = CounterRng::new(1).slot(0, 0, Block::Aux);
        let mut v = vec![0.0; 1000];
        s.sample_into(&mut rng, &mut v);
        assert!(v.iter().all(|x| [0.0, 1.0, 2.0].contains(x)));
        assert!([0.0, 1.0, 2.0].iter().all(|c| v.contains(c)));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(ProductSpace::unit_interval(0).is_err());
        assert!(ProductSpace::alphabet(1, 3).is_err());
        let s = ProductSpace::unit_interval(3).unwrap();
        let f = |w: &[f64]| w[0];
        assert!(conditional_residual(&f, &[0], &s, McBudget::new(0, 4), 1).is_err());
        assert_eq!(
            conditional_residual(&f, &[3], &s, McBudget::new(4, 4), 1),
            Err(DominanceError::Coordinate { index: 3, n: 3 })
        );
        assert!(greedy_select(&f, &s, 0, 0.1, McBudget::new(4, 4), 1).is_err());
        let g = |w: &[f64]| if w[1] > 0.5 { f64::NAN } else { 0.0 };
        assert!(matches!(
            conditional_residual(&g, &[], &s, McBudget::new(64, 4), 1),
            Err(DominanceError::NonFinite { .. })
        ));
        let big = ProductSpace::unit_interval(16).unwrap();
        assert_eq!(
            exhaustive_select(&f, &big, 1, 0.1, McBudget::new(4, 4), 1),
            Err(DominanceError::TooLarge(16))
        );
    }

    #[test]
    fn csv_rows_follow_steps() {
        let s = ProductSpace::unit_interval(3).unwrap();
        let f = |w: &[f64]| w[2];
        let r = greedy_select(&f, &s, 2, 0.01, McBudget::new(64, 16), 3).unwrap();
        let csv = r.to_csv("h");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "step,coord_added,residual,ci");
        assert!(lines[2].starts_with("0,,"));
        let row: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(&row[..2], &["1", "2"]);
        assert!(row[2].parse::<f64>().unwrap() < 1e-12);
        assert_eq!(lines.len(), 4);
    }
}

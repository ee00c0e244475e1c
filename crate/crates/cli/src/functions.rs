//! Built-in functions on product spaces for the dominance mode.

use serde::{Deserialize, Serialize};
use ttslab::dominance::{Base, ProductSpace};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant {
        value: f64,
    },
    /// `Σ wᵢ·ω_{cᵢ} + mean_weight · mean(ω)`.
    Linear {
        coords: Vec<usize>,
        weights: Vec<f64>,
        #[serde(default)]
        mean_weight: f64,
    },
    Product {
        coords: Vec<usize>,
    },
    Max {
        coords: Vec<usize>,
    },
    /// 1 when an odd number of the listed coordinates are non-zero, else 0.
    Parity {
        coords: Vec<usize>,
    },
}

impl FunctionSpec {
    pub fn validate(&self, space: &ProductSpace) -> Result<(), CliError> {
        let coords: &[usize] = match self {
            FunctionSpec::Constant { value } => {
                return if value.is_finite() {
                    Ok(())
                } else {
                    Err(CliError::Config("dominance.function.value must be finite".into()))
                };
            }
            FunctionSpec::Linear {
                coords,
                weights,
                mean_weight,
            } => {
                if coords.len() != weights.len() {
                    return Err(CliError::Config(
                        "dominance.function: coords and weights differ in length".into(),
                    ));
                }
                if !weights.iter().chain([mean_weight]).all(|w| w.is_finite()) {
                    return Err(CliError::Config("dominance.function weights must be finite".into()));
                }
                coords
            }
            FunctionSpec::Product { coords } | FunctionSpec::Max { coords } => coords,
            FunctionSpec::Parity { coords } => {
                if space.base == Base::UnitInterval {
                    return Err(CliError::Config("parity needs a finite alphabet".into()));
                }
                coords
            }
        };
        if coords.is_empty() {
            return Err(CliError::Config("dominance.function.coords must not be empty".into()));
        }
        if let Some(c) = coords.iter().find(|&&c| c >= space.n) {
            return Err(CliError::Config(format!(
                "dominance.function coordinate {c} is out of range for N = {}",
                space.n
            )));
        }
        Ok(())
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        match self {
            FunctionSpec::Constant { value } => *value,
            FunctionSpec::Linear {
                coords,
                weights,
                mean_weight,
            } => {
                let lin: f64 = coords.iter().zip(weights).map(|(&c, wt)| wt * w[c]).sum();
                if *mean_weight == 0.0 {
                    lin
                } else {
                    lin + mean_weight * w.iter().sum::<f64>() / w.len() as f64
                }
            }
            FunctionSpec::Product { coords } => coords.iter().map(|&c| w[c]).product(),
            FunctionSpec::Max { coords } => coords.iter().map(|&c| w[c]).fold(f64::NEG_INFINITY, f64::max),
            FunctionSpec::Parity { coords } => f64::from(coords.iter().filter(|&&c| w[c] != 0.0).count() as u8 % 2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluations() {
        let w = [0.5, 1.0, 0.0, 0.25];
        let lin = FunctionSpec::Linear {
            coords: vec![0, 3],
            weights: vec![2.0, 4.0],
            mean_weight: 0.0,
        };
        assert_eq!(lin.eval(&w), 2.0);
        assert_eq!(FunctionSpec::Product { coords: vec![0, 1] }.eval(&w), 0.5);
        assert_eq!(FunctionSpec::Max { coords: vec![2, 3] }.eval(&w), 0.25);
        assert_eq!(FunctionSpec::Parity { coords: vec![1, 2] }.eval(&w), 1.0);
        assert_eq!(FunctionSpec::Parity { coords: vec![0, 1] }.eval(&w), 0.0);
    }
}

//! Closed-form test models on reduced coordinates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter indices (`i`, `j`, positions in `a`) are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnalyticModel {
    /// `b + sum(a_i x_i)`
    Linear {
        a: Vec<f64>,
        #[serde(default)]
        b: f64,
    },
    /// `c x_i x_j`
    Bilinear { c: f64, i: usize, j: usize },
    /// `scale * exp(sum(a_i x_i))`
    ProductExp {
        a: Vec<f64>,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
    /// Ishigami function with `x` mapped from `[0, 1]` to `[-π, π]` on the
    /// first three inputs: `sin u1 + a sin² u2 + b u3⁴ sin u1`.
    IshigamiLike { a: f64, b: f64 },
}

fn unit_scale() -> f64 {
    1.0
}

impl AnalyticModel {
    pub fn check_dimension(&self, k: usize) -> Result<()> {
        let ok = match self {
            AnalyticModel::Linear { a, .. } | AnalyticModel::ProductExp { a, .. } => a.len() == k,
            AnalyticModel::Bilinear { i, j, .. } => i != j && *i < k && *j < k,
            AnalyticModel::IshigamiLike { .. } => k >= 3,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDesign(format!("analytic model {self:?} does not fit {k} parameters")))
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            AnalyticModel::Linear { a, b } => b + dot(a, x),
            AnalyticModel::Bilinear { c, i, j } => c * x[*i] * x[*j],
            AnalyticModel::ProductExp { a, scale } => scale * dot(a, x).exp(),
            AnalyticModel::IshigamiLike { a, b } => {
                let u: Vec<f64> = x[..3].iter().map(|v| PI * (2.0 * v - 1.0)).collect();
                u[0].sin() + a * u[1].sin().powi(2) + b * u[2].powi(4) * u[0].sin()
            }
        }
    }
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(a, x)| a * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        let lin = AnalyticModel::Linear { a: vec![1.0, 2.0], b: 0.5 };
        assert_eq!(lin.eval(&[1.0, 0.5]), 2.5);
        let bil = AnalyticModel::Bilinear { c: 3.0, i: 0, j: 2 };
        assert_eq!(bil.eval(&[0.5, 9.0, 2.0 / 3.0]), 1.0);
        let pe = AnalyticModel::ProductExp { a: vec![2.0, 1.0], scale: 1.0 };
        assert!((pe.eval(&[0.5, 1.0]) - 2f64.exp()).abs() < 1e-12);
        let ish = AnalyticModel::IshigamiLike { a: 7.0, b: 0.1 };
        // u = (π/2, π/2, 0)
        assert!((ish.eval(&[0.75, 0.75, 0.5]) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_checks() {
        assert!(AnalyticModel::Linear { a: vec![1.0], b: 0.0 }.check_dimension(2).is_err());
        assert!(AnalyticModel::Bilinear { c: 1.0, i: 1, j: 1 }.check_dimension(3).is_err());
        assert!(AnalyticModel::IshigamiLike { a: 7.0, b: 0.1 }.check_dimension(2).is_err());
        assert!(AnalyticModel::Bilinear { c: 1.0, i: 0, j: 2 }.check_dimension(3).is_ok());
    }
}

//! Weakly nonlinear polynomial toy problem.
//!
//! The data-generating process is `c0 + c1 x + 0.1 (x² + x³)` on `[0, 2]`.
//! Two candidate models are calibrated against noisy observations of it: an
//! inadequate linear model `c0 + c1 x`, and an enriched model
//! `c0 + c1 x + c2 x^α` whose extra term is a model-form uncertainty (MFU)
//! representation with hierarchical priors on `log c2` and `log(α - 1)`.

use crate::rng::row_rng;
use crate::sampling::{ConditionalFamily, Density};
use crate::{Error, Result};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Lower end of the study interval.
pub const X_MIN: f64 = 0.0;
/// Upper end of the study interval.
pub const X_MAX: f64 = 2.0;

/// Which polynomial model to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyModel {
    /// `c0 + c1 x + 0.1 (x² + x³)`.
    Truth,
    /// `c0 + c1 x`.
    Linear,
    /// `c0 + c1 x + c2 x^α`.
    Enriched,
}

/// MFU parameters of the enriched model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfuBlock {
    pub c2: f64,
    pub alpha: f64,
}

/// Hyperparameters of the hierarchical MFU prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBlock {
    pub mu_c2: f64,
    pub sigma_c2: f64,
    pub mu_alpha: f64,
    pub sigma_alpha: f64,
}

/// Polynomial parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyParams {
    pub c0: f64,
    pub c1: f64,
    pub mfu: Option<MfuBlock>,
    pub hyper: Option<HyperBlock>,
}

impl PolyParams {
    /// Parameters without an MFU block.
    pub fn linear(c0: f64, c1: f64) -> Self {
        Self {
            c0,
            c1,
            mfu: None,
            hyper: None,
        }
    }

    /// Parameters with an MFU block.
    pub fn enriched(c0: f64, c1: f64, c2: f64, alpha: f64) -> Self {
        Self {
            c0,
            c1,
            mfu: Some(MfuBlock { c2, alpha }),
            hyper: None,
        }
    }

    /// The coefficients of the data-generating process, `c0 = c1 = 1`.
    pub fn truth() -> Self {
        Self::linear(1.0, 1.0)
    }
}

/// Evaluates a model at a single location.
pub fn evaluate_at(model: PolyModel, params: &PolyParams, x: f64) -> Result<f64> {
    let base = params.c0 + params.c1 * x;
    Ok(match model {
        PolyModel::Truth => base + 0.1 * (x * x + x * x * x),
        PolyModel::Linear => base,
        PolyModel::Enriched => {
            let mfu = params.mfu.ok_or_else(|| {
                Error::Configuration("enriched model requires c2 and alpha".into())
            })?;
            base + mfu.c2 * x.powf(mfu.alpha)
        }
    })
}

/// Evaluates a model at each location; locations outside `[0, 2]` are
/// extrapolations and are logged.
pub fn evaluate(model: PolyModel, params: &PolyParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !(X_MIN..=X_MAX).contains(v)) {
        log::debug!("polynomial model evaluated outside the study interval [0, 2]");
    }
    x.iter().map(|&v| evaluate_at(model, params, v)).collect()
}

/// Observation locations and values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub d: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// `n` equally spaced points on `[a, b]`, endpoints included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Noisy observations of the truth at `n` equally spaced points on `[0, 2]`.
pub fn generate_data(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    if !(noise_sd.is_finite() && noise_sd > 0.0) {
        return Err(Error::Argument(format!(
            "noise sd must be positive, got {noise_sd}"
        )));
    }
    let x = linspace(X_MIN, X_MAX, n);
    let truth = PolyParams::truth();
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let eps: f64 = StandardNormal.sample(&mut row_rng(seed, i as u64));
            evaluate_at(PolyModel::Truth, &truth, xi).map(|f| f + noise_sd * eps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { x, d })
}

/// Priors of the inadequate linear model: `c0 ~ U[0,2]`, `c1 ~ U[0,5]`.
pub fn linear_priors() -> Vec<(&'static str, Density)> {
    vec![
        ("c0", Density::Uniform { lo: 0.0, hi: 2.0 }),
        ("c1", Density::Uniform { lo: 0.0, hi: 5.0 }),
    ]
}

/// Hierarchical MFU priors of the enriched model: `log c2 ~ N(μ_c2, σ_c2²)`
/// with `μ_c2 ~ N(-1, 0.5²)`, `σ_c2 ~ U[0, 0.1]`, and
/// `log(α - 1) ~ N(μ_α, σ_α²)` with `μ_α ~ N(0, 0.5²)`, `σ_α ~ U[0, 0.1]`.
///
/// Each density's columns are ordered hyperparameters first, then the MFU
/// parameter, matching the names returned alongside.
pub fn hierarchical_mfu_priors() -> Vec<(Vec<&'static str>, Density)> {
    vec![
        (
            vec!["mu_c2", "sigma_c2", "c2"],
            Density::Hierarchical {
                family: ConditionalFamily::LogNormal,
                hyper: vec![
                    Density::Normal {
                        mean: -1.0,
                        sd: 0.5,
                    },
                    Density::Uniform { lo: 0.0, hi: 0.1 },
                ],
            },
        ),
        (
            vec!["mu_alpha", "sigma_alpha", "alpha"],
            Density::Hierarchical {
                family: ConditionalFamily::ShiftedLogNormal { shift: 1.0 },
                hyper: vec![
                    Density::Normal { mean: 0.0, sd: 0.5 },
                    Density::Uniform { lo: 0.0, hi: 0.1 },
                ],
            },
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_values() {
        let p = PolyParams::truth();
        assert_eq!(evaluate_at(PolyModel::Truth, &p, 0.0).unwrap(), 1.0);
        assert!((evaluate_at(PolyModel::Truth, &p, 2.0).unwrap() - 4.2).abs() < 1e-14);
    }

    #[test]
    fn enriched_reduces_to_linear_when_c2_vanishes() {
        let xs = linspace(0.0, 2.0, 11);
        let lin = evaluate(PolyModel::Linear, &PolyParams::linear(0.7, 1.3), &xs).unwrap();
        let enr = evaluate(
            PolyModel::Enriched,
            &PolyParams::enriched(0.7, 1.3, 0.0, 2.5),
            &xs,
        )
        .unwrap();
        assert_eq!(lin, enr);
    }

    #[test]
    fn enriched_requires_mfu_block() {
        let r = evaluate(PolyModel::Enriched, &PolyParams::linear(1.0, 1.0), &[1.0]);
        assert!(matches!(r, Err(Error::Configuration(_))));
    }

    #[test]
    fn enriched_is_monotone_in_c2() {
        for &x in &[0.1, 1.0, 1.9] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..10 {
                let v = evaluate_at(
                    PolyModel::Enriched,
                    &PolyParams::enriched(1.0, 1.0, i as f64 * 0.1, 2.2),
                    x,
                )
                .unwrap();
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn data_generation() {
        let a = generate_data(100, 0.05, 7).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a.x[0], 0.0);
        assert_eq!(a.x[99], 2.0);
        assert_eq!(a, generate_data(100, 0.05, 7).unwrap());
        let quiet = generate_data(50, 1e-12, 3).unwrap();
        for (x, d) in quiet.x.iter().zip(&quiet.d) {
            assert!(
                (d - evaluate_at(PolyModel::Truth, &PolyParams::truth(), *x).unwrap()).abs()
                    < 1e-10
            );
        }
        assert!(generate_data(1, 0.05, 0).is_err());
        assert!(generate_data(10, 0.0, 0).is_err());
    }

    #[test]
    fn linear_model_has_structural_misfit() {
        // Least-squares line through the noiseless truth on a fine grid.
        let xs = linspace(0.0, 2.0, 201);
        let ys = evaluate(PolyModel::Truth, &PolyParams::truth(), &xs).unwrap();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let b = sxy / sxx;
        let a = my - b * mx;
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - a - b * x).powi(2))
            .sum();
        assert!(rss > 1e-3);
    }
}

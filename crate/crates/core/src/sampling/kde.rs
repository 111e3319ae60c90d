//! One-dimensional Gaussian kernel density estimation.

use super::Density;
use crate::error::{Error, Result};
use crate::stats;
use std::f64::consts::PI;

/// Silverman's rule of thumb, `1.06 sd n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    1.06 * stats::std_dev(samples) * (samples.len() as f64).powf(-0.2)
}

/// A fitted 1-D Gaussian KDE.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    samples: Vec<f64>,
    bandwidth: f64,
}

impl Kde {
    /// Fits with Silverman's bandwidth.
    pub fn fit(samples: &[f64]) -> Result<Self> {
        Self::check(samples)?;
        Self::with_bandwidth(samples, silverman_bandwidth(samples))
    }

    pub fn with_bandwidth(samples: &[f64], bandwidth: f64) -> Result<Self> {
        Self::check(samples)?;
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::DegenerateBandwidth(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self {
            samples: samples.to_vec(),
            bandwidth,
        })
    }

    fn check(samples: &[f64]) -> Result<()> {
        if samples.len() < 2 {
            return Err(Error::Argument("kde needs at least two samples".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("kde samples must be finite".into()));
        }
        let first = samples[0];
        if samples.iter().all(|&x| x == first) {
            return Err(Error::DegenerateBandwidth(
                "all samples are identical".into(),
            ));
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn eval(&self, x: f64) -> f64 {
        kde_density(&self.samples, self.bandwidth, x)
    }

    pub fn to_density(&self) -> Density {
        Density::Kde {
            samples: self.samples.clone(),
            bandwidth: self.bandwidth,
        }
    }
}

pub(crate) fn kde_density(samples: &[f64], bandwidth: f64, x: f64) -> f64 {
    let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * PI).sqrt());
    let s: f64 = samples
        .iter()
        .map(|xi| {
            let z = (x - xi) / bandwidth;
            (-0.5 * z * z).exp()
        })
        .sum();
    s * norm
}

/// Fits a Gaussian KDE with Silverman's bandwidth and returns it as a density.
pub fn kde_fit(samples: &[f64]) -> Result<Density> {
    Ok(Kde::fit(samples)?.to_density())
}

/// Evaluates a [`Density::Kde`] at `x`.
pub fn kde_eval(kde: &Density, x: f64) -> Result<f64> {
    match kde {
        Density::Kde { samples, bandwidth } => Ok(kde_density(samples, *bandwidth, x)),
        other => Err(Error::Argument(format!(
            "expected a kde density, got {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use crate::sampling::sample;

    #[test]
    fn standard_normal_peak() {
        let s = sample(&Density::Normal { mean: 0.0, sd: 1.0 }, 1000, 21).unwrap();
        let kde = kde_fit(&s.column(0)).unwrap();
        let peak = 1.0 / (2.0 * PI).sqrt();
        assert!((kde_eval(&kde, 0.0).unwrap() - peak).abs() < 0.1 * peak);
    }

    #[test]
    fn integrates_to_one() {
        let s = sample(
            &Density::LogNormal {
                mu: 0.0,
                sigma: 0.5,
            },
            500,
            2,
        )
        .unwrap();
        let kde = Kde::fit(&s.column(0)).unwrap();
        let lo = s.column(0).iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * kde.bandwidth();
        let hi = s
            .column(0)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            + 10.0 * kde.bandwidth();
        let (nodes, weights) = gauss_legendre(64);
        let pieces = 200;
        let width = (hi - lo) / pieces as f64;
        let mut total = 0.0;
        for p in 0..pieces {
            let a = lo + p as f64 * width;
            for (t, w) in nodes.iter().zip(&weights) {
                total += 0.5 * width * w * kde.eval(a + 0.5 * width * (t + 1.0));
            }
        }
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn constant_samples_are_degenerate() {
        assert!(matches!(
            kde_fit(&[2.0; 10]),
            Err(Error::DegenerateBandwidth(_))
        ));
    }

    #[test]
    fn symmetric_pair() {
        let kde = kde_fit(&[-1.0, 1.0]).unwrap();
        for x in [0.1, 0.7, 1.3, 4.0] {
            assert_eq!(kde_eval(&kde, -x).unwrap(), kde_eval(&kde, x).unwrap());
        }
    }
}

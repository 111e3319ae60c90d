//! Probability densities and seeded sampling.
//!
//! A [`Density`] describes one block of (possibly correlated) parameters.
//! Hierarchical densities draw their hyperparameters first and then the
//! conditional parameter, and lay out their columns in that order:
//! `[hyper_0, .., hyper_{m-1}, parameter]`.

mod elicit;
mod kde;
mod normal;

pub use elicit::{elicit_lognormal_from_mode, elicit_lognormal_from_quantiles, lognormal_quantile};
pub use kde::{kde_eval, kde_fit, silverman_bandwidth, Kde};
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile};

use crate::error::{Error, Result};
use crate::rng::row_rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Family of the conditional parameter in a hierarchical density, with the
/// meaning of its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionalFamily {
    /// Hyperparameters `(mean, sd)`.
    Normal,
    /// Hyperparameters `(mu, sigma)` of the log.
    LogNormal,
    /// `x = shift + exp(z)`, `z ~ N(mu, sigma^2)`; hyperparameters `(mu, sigma)`.
    ShiftedLogNormal { shift: f64 },
    /// Triangular on `[lo, hi]`; hyperparameter `(mode)`.
    Triangular { lo: f64, hi: f64 },
}

impl ConditionalFamily {
    pub fn hyper_count(&self) -> usize {
        match self {
            Self::Normal | Self::LogNormal | Self::ShiftedLogNormal { .. } => 2,
            Self::Triangular { .. } => 1,
        }
    }

    /// The conditional density for fixed hyperparameter values.
    pub fn conditional(&self, hyper: &[f64]) -> Result<Density> {
        let d = match self {
            Self::Normal => Density::Normal {
                mean: hyper[0],
                sd: hyper[1],
            },
            Self::LogNormal | Self::ShiftedLogNormal { .. } => {
                if !(hyper[1] >= 0.0) {
                    return Err(Error::Parameter(format!(
                        "log-normal sigma must be non-negative, got {}",
                        hyper[1]
                    )));
                }
                return Ok(Density::LogNormal {
                    mu: hyper[0],
                    sigma: hyper[1],
                });
            }
            Self::Triangular { lo, hi } => Density::Triangular {
                lo: *lo,
                hi: *hi,
                mode: hyper[0],
            },
        };
        d.validate()?;
        Ok(d)
    }

    fn shift(&self) -> f64 {
        match self {
            Self::ShiftedLogNormal { shift } => *shift,
            _ => 0.0,
        }
    }

    /// Draws the conditional parameter for fixed hyperparameter values.
    pub fn draw(&self, hyper: &[f64], rng: &mut impl Rng) -> Result<f64> {
        let d = self.conditional(hyper)?;
        let x = match d {
            // sigma == 0 is allowed here: a degenerate hyper draw collapses
            // the conditional to a point.
            Density::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
            other => other.draw_univariate(rng),
        };
        Ok(self.shift() + x)
    }

    /// Conditional log density of `x` given the hyperparameters.
    pub fn ln_pdf(&self, hyper: &[f64], x: f64) -> f64 {
        match self {
            Self::LogNormal | Self::ShiftedLogNormal { .. } => {
                let (mu, sigma) = (hyper[0], hyper[1]);
                if !(sigma > 0.0) {
                    return f64::NEG_INFINITY;
                }
                lognormal_ln_pdf(mu, sigma, x - self.shift())
            }
            _ => match self.conditional(hyper) {
                Ok(d) => d.ln_pdf(&[x]),
                Err(_) => f64::NEG_INFINITY,
            },
        }
    }
}

/// A probability density over one block of parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "density", rename_all = "snake_case")]
pub enum Density {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// `sd == 0` is a point mass at `mean`.
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Parameters of the underlying normal of `ln x`.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Triangular {
        lo: f64,
        hi: f64,
        mode: f64,
    },
    MultivariateNormal {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    Hierarchical {
        family: ConditionalFamily,
        hyper: Vec<Density>,
    },
    /// Rows of a joint sample; sampling resamples rows with replacement.
    Empirical {
        samples: Vec<Vec<f64>>,
    },
    Kde {
        samples: Vec<f64>,
        bandwidth: f64,
    },
}

fn lognormal_ln_pdf(mu: f64, sigma: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = (x.ln() - mu) / sigma;
    -0.5 * z * z - x.ln() - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

impl Density {
    /// Number of columns the density occupies.
    pub fn dim(&self) -> usize {
        match self {
            Self::MultivariateNormal { mean, .. } => mean.len(),
            Self::Hierarchical { hyper, .. } => hyper.len() + 1,
            Self::Empirical { samples } => samples.first().map_or(0, Vec::len),
            _ => 1,
        }
    }

    pub fn is_univariate(&self) -> bool {
        matches!(
            self,
            Self::Uniform { .. }
                | Self::Normal { .. }
                | Self::LogNormal { .. }
                | Self::Triangular { .. }
                | Self::Kde { .. }
        )
    }

    /// Checks the family invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        match self {
            Self::Uniform { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return bad(format!("uniform requires lo < hi, got [{lo}, {hi}]"));
                }
            }
            Self::Normal { mean, sd } => {
                if !mean.is_finite() || !(*sd >= 0.0) || !sd.is_finite() {
                    return bad(format!(
                        "normal requires finite mean and sd >= 0, got ({mean}, {sd})"
                    ));
                }
            }
            Self::LogNormal { mu, sigma } => {
                if !mu.is_finite() || !(*sigma > 0.0) || !sigma.is_finite() {
                    return bad(format!(
                        "log-normal requires sigma > 0, got ({mu}, {sigma})"
                    ));
                }
            }
            Self::Triangular { lo, hi, mode } => {
                if !(lo < hi) || !(lo <= mode && mode <= hi) {
                    return bad(format!(
                        "triangular requires lo <= mode <= hi, lo < hi; got ({lo}, {hi}, {mode})"
                    ));
                }
            }
            Self::MultivariateNormal { mean, covariance } => {
                let n = mean.len();
                if n == 0 || covariance.len() != n || covariance.iter().any(|r| r.len() != n) {
                    return bad(
                        "multivariate normal covariance must be square and match the mean".into(),
                    );
                }
                let cov = DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
                let scale = cov
                    .diagonal()
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()))
                    .max(1e-300);
                for i in 0..n {
                    for j in 0..i {
                        if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                            return bad("multivariate normal covariance must be symmetric".into());
                        }
                    }
                }
                let eig = cov.symmetric_eigen();
                if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
                    return bad(
                        "multivariate normal covariance must be positive semidefinite".into(),
                    );
                }
            }
            Self::Hierarchical { family, hyper } => {
                if hyper.len() != family.hyper_count() {
                    return bad(format!(
                        "hierarchical {:?} needs {} hyper densities, got {}",
                        family,
                        family.hyper_count(),
                        hyper.len()
                    ));
                }
                for h in hyper {
                    if !h.is_univariate() {
                        return bad("hyper densities must be univariate".into());
                    }
                    h.validate()?;
                }
                if let ConditionalFamily::Triangular { lo, hi } = family {
                    if !(lo < hi) {
                        return bad("triangular conditional requires lo < hi".into());
                    }
                }
            }
            Self::Empirical { samples } => {
                let d = self.dim();
                if samples.is_empty() || d == 0 || samples.iter().any(|r| r.len() != d) {
                    return bad("empirical density needs a non-empty rectangular sample".into());
                }
            }
            Self::Kde { samples, bandwidth } => {
                if samples.is_empty() || !(*bandwidth > 0.0) {
                    return bad("kde requires samples and bandwidth > 0".into());
                }
            }
        }
        Ok(())
    }

    fn draw_univariate(&self, rng: &mut impl Rng) -> f64 {
        match self {
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            Self::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
            Self::Triangular { lo, hi, mode } => {
                triangular_inverse_cdf(*lo, *hi, *mode, rng.random())
            }
            Self::Kde { samples, bandwidth } => {
                let i = rng.random_range(0..samples.len());
                let z: f64 = rng.sample(StandardNormal);
                samples[i] + bandwidth * z
            }
            _ => unreachable!("not a univariate density"),
        }
    }

    /// Log density at `x` (length [`Density::dim`]); `-inf` outside the
    /// support. Empirical densities have no density and return NaN.
    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        match self {
            Self::Uniform { lo, hi } => {
                if x[0] >= *lo && x[0] <= *hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::Normal { mean, sd } => {
                if *sd == 0.0 {
                    return if x[0] == *mean {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                let z = (x[0] - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
            }
            Self::LogNormal { mu, sigma } => lognormal_ln_pdf(*mu, *sigma, x[0]),
            Self::Triangular { lo, hi, mode } => triangular_pdf(*lo, *hi, *mode, x[0]).ln(),
            Self::MultivariateNormal { mean, covariance } => {
                let n = mean.len();
                let cov = DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
                let Some(chol) = cov.cholesky() else {
                    return f64::NAN;
                };
                let diff = DVector::from_fn(n, |i, _| x[i] - mean[i]);
                let sol = chol
                    .l()
                    .solve_lower_triangular(&diff)
                    .expect("triangular solve");
                let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
                -0.5 * sol.norm_squared() - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln()
            }
            Self::Hierarchical { family, hyper } => {
                let m = hyper.len();
                let mut lp: f64 = hyper.iter().zip(x).map(|(h, v)| h.ln_pdf(&[*v])).sum();
                if lp.is_finite() {
                    lp += family.ln_pdf(&x[..m], x[m]);
                }
                lp
            }
            Self::Empirical { .. } => f64::NAN,
            Self::Kde { samples, bandwidth } => kde::kde_density(samples, *bandwidth, x[0]).ln(),
        }
    }

    /// Prepares the density for repeated draws (factorises covariances once).
    pub fn sampler(&self) -> Result<DensitySampler<'_>> {
        self.validate()?;
        let chol = match self {
            Self::MultivariateNormal { covariance, .. } => {
                Some(cholesky_with_jitter(covariance)?.0)
            }
            _ => None,
        };
        Ok(DensitySampler {
            density: self,
            chol,
        })
    }
}

/// A validated density ready for repeated draws.
#[derive(Debug, Clone)]
pub struct DensitySampler<'a> {
    density: &'a Density,
    chol: Option<DMatrix<f64>>,
}

impl DensitySampler<'_> {
    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    /// Writes one draw into `out` (length `dim`).
    pub fn draw_into(&self, rng: &mut impl Rng, out: &mut [f64]) -> Result<()> {
        match self.density {
            Density::MultivariateNormal { mean, .. } => {
                let l = self.chol.as_ref().expect("factorised in sampler()");
                let n = mean.len();
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..n {
                    let mut acc = mean[i];
                    for (j, zj) in z.iter().enumerate().take(i + 1) {
                        acc += l[(i, j)] * zj;
                    }
                    out[i] = acc;
                }
            }
            Density::Hierarchical { family, hyper } => {
                for (slot, h) in out.iter_mut().zip(hyper) {
                    *slot = h.draw_univariate(rng);
                }
                let m = hyper.len();
                out[m] = family.draw(&out[..m], rng)?;
            }
            Density::Empirical { samples } => {
                let i = rng.random_range(0..samples.len());
                out.copy_from_slice(&samples[i]);
            }
            d => out[0] = d.draw_univariate(rng),
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.draw_into(rng, &mut out)?;
        Ok(out)
    }
}

/// Lower Cholesky factor, adding diagonal jitter (starting at 1e-10 times
/// the largest diagonal entry) when the matrix is singular. Returns the
/// factor and the jitter that was applied (0 if none).
pub fn cholesky_with_jitter(covariance: &[Vec<f64>]) -> Result<(DMatrix<f64>, f64)> {
    let n = covariance.len();
    let cov = DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
    if let Some(c) = cov.clone().cholesky() {
        return Ok((c.l(), 0.0));
    }
    let scale = cov
        .diagonal()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let mut jitter = 1e-10 * scale;
    for _ in 0..8 {
        let mut m = cov.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c.l(), jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Parameter(
        "covariance is not positive semidefinite".into(),
    ))
}

pub(crate) fn triangular_inverse_cdf(lo: f64, hi: f64, mode: f64, u: f64) -> f64 {
    let width = hi - lo;
    let f_mode = (mode - lo) / width;
    if u < f_mode {
        lo + (u * width * (mode - lo)).sqrt()
    } else {
        hi - ((1.0 - u) * width * (hi - mode)).sqrt()
    }
}

pub(crate) fn triangular_pdf(lo: f64, hi: f64, mode: f64, x: f64) -> f64 {
    if x < lo || x > hi {
        0.0
    } else if x < mode {
        2.0 * (x - lo) / ((hi - lo) * (mode - lo))
    } else if x > mode {
        2.0 * (hi - x) / ((hi - lo) * (hi - mode))
    } else {
        2.0 / (hi - lo)
    }
}

/// Draws stored row-major with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    values: Vec<f64>,
    nrows: usize,
    names: Vec<String>,
    pub seed: u64,
}

impl SampleMatrix {
    pub fn new(names: Vec<String>, nrows: usize, values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.len() != nrows * names.len() {
            return Err(Error::Argument(format!(
                "sample matrix of {nrows} x {} needs {} values, got {}",
                names.len(),
                nrows * names.len(),
                values.len()
            )));
        }
        Ok(Self {
            values,
            nrows,
            names,
            seed,
        })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        let ncols = names.len();
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Argument(
                "rows must match the number of column names".into(),
            ));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(names, rows.len(), values, seed)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.ncols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.ncols();
        &mut self.values[i * c..(i + 1) * c]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values
            .chunks_exact(self.ncols().max(1))
            .take(self.nrows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ncols() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let c = self.ncols();
        Self {
            values: self.values[start * c..end * c].to_vec(),
            nrows: end - start,
            names: self.names.clone(),
            seed: self.seed,
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let values = idx
            .iter()
            .flat_map(|&i| self.row(i).iter().copied())
            .collect();
        Self {
            values,
            nrows: idx.len(),
            names: self.names.clone(),
            seed: self.seed,
        }
    }

    /// Keeps only the named columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let values = self
            .rows()
            .flat_map(|r| cols.iter().map(move |&j| r[j]))
            .collect();
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        Self {
            values,
            nrows: self.nrows,
            names,
            seed: self.seed,
        }
    }

    /// Every `stride`-th row starting from the first.
    pub fn thin(&self, stride: usize) -> Self {
        let idx: Vec<usize> = (0..self.nrows).step_by(stride.max(1)).collect();
        self.select_rows(&idx)
    }
}

fn default_names(dim: usize) -> Vec<String> {
    (0..dim).map(|j| format!("x{j}")).collect()
}

/// Draws `n` rows from `density`. Row `i` uses its own stream derived from
/// `(seed, i)`, so the result does not depend on evaluation order.
pub fn sample(density: &Density, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    let sampler = density.sampler()?;
    let dim = sampler.dim();
    let mut values = vec![0.0; n * dim];
    for (i, row) in values.chunks_exact_mut(dim).enumerate() {
        let mut rng = row_rng(seed, i as u64);
        sampler.draw_into(&mut rng, row)?;
    }
    SampleMatrix::new(default_names(dim), n, values, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        (crate::stats::mean(xs), crate::stats::variance(xs))
    }

    #[test]
    fn uniform_draws_stay_in_support() {
        let s = sample(&Density::Uniform { lo: 0.05, hi: 0.15 }, 1000, 3).unwrap();
        assert!(s.column(0).iter().all(|&x| (0.05..=0.15).contains(&x)));
    }

    #[test]
    fn bounded_families_stay_in_support_for_1e5_draws() {
        let t = sample(
            &Density::Triangular {
                lo: 1.0,
                hi: 2.0,
                mode: 1.5,
            },
            100_000,
            11,
        )
        .unwrap();
        assert!(t.column(0).iter().all(|&x| (1.0..=2.0).contains(&x)));
        let u = sample(&Density::Uniform { lo: -3.0, hi: -1.0 }, 100_000, 12).unwrap();
        assert!(u.column(0).iter().all(|&x| (-3.0..=-1.0).contains(&x)));
        let l = sample(
            &Density::LogNormal {
                mu: 0.3,
                sigma: 0.8,
            },
            100_000,
            13,
        )
        .unwrap();
        assert!(l.column(0).iter().all(|&x| x > 0.0));
    }

    #[test]
    fn triangular_mean() {
        let s = sample(
            &Density::Triangular {
                lo: 1.0,
                hi: 2.0,
                mode: 1.5,
            },
            100_000,
            5,
        )
        .unwrap();
        let (m, v) = moments(&s.column(0));
        // var = (a^2 + b^2 + c^2 - ab - ac - bc) / 18
        let var = (1.0f64 + 4.0 + 2.25 - 2.0 - 1.5 - 3.0) / 18.0;
        let se = (var / 1e5).sqrt();
        assert!((m - 1.5).abs() < 5.0 * se);
        assert!((v - var).abs() < 0.02 * var);
    }

    #[test]
    fn moments_match_within_five_standard_errors() {
        let n = 100_000;
        let cases: Vec<(Density, f64, f64)> = vec![
            (Density::Uniform { lo: 0.0, hi: 2.0 }, 1.0, 4.0 / 12.0),
            (
                Density::Normal {
                    mean: -1.0,
                    sd: 0.5,
                },
                -1.0,
                0.25,
            ),
            (
                Density::LogNormal {
                    mu: 0.1,
                    sigma: 0.3,
                },
                (0.1f64 + 0.045).exp(),
                ((0.09f64).exp() - 1.0) * (0.2f64 + 0.09).exp(),
            ),
            (
                Density::Triangular {
                    lo: 0.0,
                    hi: 3.0,
                    mode: 0.5,
                },
                3.5 / 3.0,
                (9.0 + 0.25 - 1.5) / 18.0,
            ),
        ];
        for (k, (d, mu, var)) in cases.into_iter().enumerate() {
            let s = sample(&d, n, 100 + k as u64).unwrap();
            let (m, _) = moments(&s.column(0));
            assert!(
                (m - mu).abs() < 5.0 * (var / n as f64).sqrt(),
                "{d:?}: mean {m} vs {mu}"
            );
        }
    }

    #[test]
    fn degenerate_hierarchical_lognormal_reduces_to_point() {
        let d = Density::Hierarchical {
            family: ConditionalFamily::LogNormal,
            hyper: vec![
                Density::Normal { mean: 0.0, sd: 0.0 },
                Density::Normal { mean: 0.0, sd: 0.0 },
            ],
        };
        let s = sample(&d, 500, 1).unwrap();
        assert_eq!(s.ncols(), 3);
        assert!(s.column(2).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn degenerate_hierarchical_normal_reduces_to_conditional_family() {
        let h = Density::Hierarchical {
            family: ConditionalFamily::Normal,
            hyper: vec![
                Density::Normal { mean: 2.0, sd: 0.0 },
                Density::Normal { mean: 0.5, sd: 0.0 },
            ],
        };
        let s = sample(&h, 50_000, 9).unwrap();
        let (m, v) = moments(&s.column(2));
        assert!((m - 2.0).abs() < 5.0 * (0.25f64 / 5e4).sqrt());
        assert!((v - 0.25).abs() < 0.01);
    }

    #[test]
    fn hierarchical_ln_pdf_factorises() {
        let h = Density::Hierarchical {
            family: ConditionalFamily::ShiftedLogNormal { shift: 1.0 },
            hyper: vec![
                Density::Normal { mean: 0.0, sd: 0.5 },
                Density::Uniform { lo: 0.0, hi: 0.1 },
            ],
        };
        let x = [0.2, 0.05, 2.3];
        let expected = Density::Normal { mean: 0.0, sd: 0.5 }.ln_pdf(&[0.2])
            + Density::Uniform { lo: 0.0, hi: 0.1 }.ln_pdf(&[0.05])
            + Density::LogNormal {
                mu: 0.2,
                sigma: 0.05,
            }
            .ln_pdf(&[1.3]);
        assert!((h.ln_pdf(&x) - expected).abs() < 1e-12);
    }

    #[test]
    fn mvn_sample_covariance() {
        let d = Density::MultivariateNormal {
            mean: vec![1.0, -1.0],
            covariance: vec![vec![1.0, 0.8], vec![0.8, 1.0]],
        };
        let s = sample(&d, 50_000, 4).unwrap();
        let r = crate::stats::pearson(&s.column(0), &s.column(1)).unwrap();
        assert!((r - 0.8).abs() < 0.01);
    }

    #[test]
    fn identical_seeds_are_bitwise_identical() {
        let d = Density::Hierarchical {
            family: ConditionalFamily::Triangular { lo: 1.0, hi: 2.0 },
            hyper: vec![Density::Uniform { lo: 1.0, hi: 2.0 }],
        };
        assert_eq!(sample(&d, 1000, 77).unwrap(), sample(&d, 1000, 77).unwrap());
        assert_ne!(sample(&d, 1000, 77).unwrap(), sample(&d, 1000, 78).unwrap());
    }

    #[test]
    fn invalid_inputs_error() {
        assert!(matches!(
            sample(&Density::Uniform { lo: 1.0, hi: 1.0 }, 10, 0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            sample(&Density::Normal { mean: 0.0, sd: 1.0 }, 0, 0),
            Err(Error::Argument(_))
        ));
        assert!(Density::Triangular {
            lo: 0.0,
            hi: 1.0,
            mode: 2.0
        }
        .validate()
        .is_err());
        assert!(Density::LogNormal {
            mu: 0.0,
            sigma: 0.0
        }
        .validate()
        .is_err());
        assert!(Density::MultivariateNormal {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn densities_round_trip_through_json() {
        let d = Density::Hierarchical {
            family: ConditionalFamily::Triangular { lo: 1.0, hi: 2.0 },
            hyper: vec![Density::Uniform { lo: 1.0, hi: 2.0 }],
        };
        let text = serde_json::to_string(&d).unwrap();
        assert!(text.contains("\"density\":\"hierarchical\""));
        assert_eq!(serde_json::from_str::<Density>(&text).unwrap(), d);
    }
}

//! Data-consistent inversion (DCI) by density-ratio rejection sampling.
//!
//! Given proposals drawn from an initial density `π_0` with pushforward
//! (predicted) QoI density `π_predict`, the updated density
//! `π_update(x) = π_0(x) π_target(q(x)) / π_predict(q(x))` is sampled by
//! accepting each proposal with probability `r(x) / M`, where
//! `r = π_target / π_predict` (both estimated by KDE) and `M` bounds `r`.
//!
//! The module also provides the multivariate-normal initial density over
//! transformed dispersion eigenvalues: for `k ≥ 1`, the coordinates
//! `R_k = ln(-Re λ_k)` and `I_k = ln(-Im λ_k)` are modelled jointly as
//! Gaussian, and a draw maps back to `λ_k = -exp(R_k) - i exp(I_k)`.

use crate::rng::row_rng;
use crate::sampling::{cholesky_with_jitter, Density, Kde, SampleMatrix};
use crate::stats;
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default safety factor applied to the largest observed ratio.
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.1;

/// Multivariate normal over transformed eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialMvn {
    /// `MultivariateNormal` over `[R_1..R_Nk, I_1..I_Nk]`.
    pub density: Density,
    /// Diagonal jitter that was needed to factorise the covariance (0 if
    /// none).
    pub jitter: f64,
    /// Number of eigenvalues `Nk` (modes `k ≥ 1`).
    pub modes: usize,
}

/// Maps eigenvalues `λ_1..λ_Nk` to `[R_1..R_Nk, I_1..I_Nk]`.
pub fn transform_eigenvalues(lambda: &[Complex64]) -> Result<Vec<f64>> {
    let mut re = Vec::with_capacity(lambda.len());
    let mut im = Vec::with_capacity(lambda.len());
    for (k, l) in lambda.iter().enumerate() {
        if !(l.re < 0.0 && l.im < 0.0) {
            return Err(Error::Domain(format!(
                "eigenvalue {} = {l} has a non-negative real or imaginary part",
                k + 1
            )));
        }
        re.push((-l.re).ln());
        im.push((-l.im).ln());
    }
    re.extend(im);
    Ok(re)
}

/// Inverse of [`transform_eigenvalues`]; the result includes `λ_0 = 0`.
pub fn eigenvalues_from_transformed(z: &[f64]) -> Vec<Complex64> {
    let nk = z.len() / 2;
    let mut out = Vec::with_capacity(nk + 1);
    out.push(Complex64::new(0.0, 0.0));
    for k in 0..nk {
        out.push(Complex64::new(-z[k].exp(), -z[nk + k].exp()));
    }
    out
}

/// Fits the Gaussian initial density to eigenvalue samples. Each sample
/// holds `λ_1..λ_Nk` (without `λ_0`).
pub fn fit_initial_mvn(samples: &[Vec<Complex64>]) -> Result<InitialMvn> {
    let Some(first) = samples.first() else {
        return Err(Error::Argument("no eigenvalue samples".into()));
    };
    let modes = first.len();
    if modes == 0 || samples.iter().any(|s| s.len() != modes) {
        return Err(Error::Argument(
            "eigenvalue samples must share a positive length".into(),
        ));
    }
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| transform_eigenvalues(s))
        .collect::<Result<_>>()?;
    let d = 2 * modes;
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let denom = if rows.len() > 1 { n - 1.0 } else { 1.0 };
    let mut cov = vec![vec![0.0; d]; d];
    for r in &rows {
        let c: Vec<f64> = r.iter().zip(&mean).map(|(a, b)| a - b).collect();
        for i in 0..d {
            let ci = c[i];
            let row = &mut cov[i];
            for j in 0..=i {
                row[j] += ci * c[j];
            }
        }
    }
    #[allow(clippy::needless_range_loop)] // symmetric fill needs both indices
    for i in 0..d {
        for j in 0..=i {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    let (_, jitter) = cholesky_with_jitter(&cov)?;
    if jitter > 0.0 {
        log::info!("eigenvalue covariance is singular; added diagonal jitter {jitter:e}");
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] += jitter;
        }
    }
    Ok(InitialMvn {
        density: Density::MultivariateNormal {
            mean,
            covariance: cov,
        },
        jitter,
        modes,
    })
}

/// Scale on which the target and predict densities are estimated.
///
/// The density ratio is invariant under a monotone change of variable, so
/// the scale only affects the kernel estimates. `Log` suits positive,
/// right-skewed quantities, whose heavy tails otherwise inflate the
/// bandwidth and blur the bulk of the distribution. On the log scale,
/// proposals with a non-positive QoI lie outside the target's support and
/// receive a zero ratio.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QoiScale {
    #[default]
    Linear,
    Log,
}

/// Target and predicted QoI samples of a DCI problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DciProblem {
    /// Samples of the QoI distribution to be matched.
    pub target_samples: Vec<f64>,
    /// Pushforward samples of the initial density.
    pub predict_samples: Vec<f64>,
    /// `M = safety_factor × max ratio`.
    pub safety_factor: f64,
    /// Optional bandwidth overrides (Silverman's rule otherwise).
    pub target_bandwidth: Option<f64>,
    pub predict_bandwidth: Option<f64>,
    /// Scale of the kernel estimates; bandwidths apply on this scale.
    #[serde(default)]
    pub qoi_scale: QoiScale,
}

impl DciProblem {
    pub fn new(target_samples: Vec<f64>, predict_samples: Vec<f64>) -> Self {
        Self {
            target_samples,
            predict_samples,
            safety_factor: DEFAULT_SAFETY_FACTOR,
            target_bandwidth: None,
            predict_bandwidth: None,
            qoi_scale: QoiScale::Linear,
        }
    }
}

/// Result of a DCI update.
#[derive(Debug, Clone, PartialEq)]
pub struct DciUpdate {
    /// Indices of accepted proposals.
    pub accepted: Vec<usize>,
    /// Accepted proposal rows.
    pub samples: SampleMatrix,
    pub acceptance_rate: f64,
    /// Mean of the density ratio over proposals (≈ 1 when well posed).
    pub mean_ratio: f64,
    pub max_ratio: f64,
    /// Rejection constant.
    pub m: f64,
    pub target_bandwidth: f64,
    pub predict_bandwidth: f64,
}

/// Diagnostics as JSON-friendly values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DciDiagnostics {
    pub proposals: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub m: f64,
    pub target_bandwidth: f64,
    pub predict_bandwidth: f64,
}

impl DciUpdate {
    pub fn diagnostics(&self, proposals: usize) -> DciDiagnostics {
        DciDiagnostics {
            proposals,
            accepted: self.accepted.len(),
            acceptance_rate: self.acceptance_rate,
            mean_ratio: self.mean_ratio,
            max_ratio: self.max_ratio,
            m: self.m,
            target_bandwidth: self.target_bandwidth,
            predict_bandwidth: self.predict_bandwidth,
        }
    }
}

/// Minimum number of samples for each KDE.
pub const MIN_KDE_SAMPLES: usize = 100;

/// Rejection-samples the updated density from `proposals`, whose QoI values
/// are `proposal_qoi`. Acceptance draws use one generator per proposal.
pub fn dci_update(
    problem: &DciProblem,
    proposals: &SampleMatrix,
    proposal_qoi: &[f64],
    seed: u64,
) -> Result<DciUpdate> {
    if proposal_qoi.len() != proposals.nrows() {
        return Err(Error::Argument(format!(
            "{} QoI values for {} proposals",
            proposal_qoi.len(),
            proposals.nrows()
        )));
    }
    if proposals.nrows() == 0 {
        return Err(Error::Argument("no proposals".into()));
    }
    if problem.target_samples.len() < MIN_KDE_SAMPLES
        || problem.predict_samples.len() < MIN_KDE_SAMPLES
    {
        return Err(Error::Argument(format!(
            "target and predict KDEs need at least {MIN_KDE_SAMPLES} samples each"
        )));
    }
    if !(problem.safety_factor.is_finite() && problem.safety_factor >= 1.0) {
        return Err(Error::Argument("safety factor must be >= 1".into()));
    }
    let fit = |s: &[f64], h: Option<f64>| match h {
        Some(h) => Kde::with_bandwidth(s, h),
        None => Kde::fit(s),
    };
    let (target_samples, predict_samples) = match problem.qoi_scale {
        QoiScale::Linear => (
            problem.target_samples.clone(),
            problem.predict_samples.clone(),
        ),
        QoiScale::Log => {
            if let Some(v) = problem.target_samples.iter().find(|v| !(**v > 0.0)) {
                return Err(Error::Domain(format!(
                    "log-scale estimation needs positive target samples, got {v:e}"
                )));
            }
            let predict: Vec<f64> = problem
                .predict_samples
                .iter()
                .filter(|v| **v > 0.0)
                .map(|v| v.ln())
                .collect();
            if predict.len() < MIN_KDE_SAMPLES {
                return Err(Error::Argument(format!(
                    "only {} positive predict samples; the log-scale KDE needs {MIN_KDE_SAMPLES}",
                    predict.len()
                )));
            }
            (
                problem.target_samples.iter().map(|v| v.ln()).collect(),
                predict,
            )
        }
    };
    let target = fit(&target_samples, problem.target_bandwidth)?;
    let predict = fit(&predict_samples, problem.predict_bandwidth)?;
    if (target.bandwidth() / predict.bandwidth() - 1.0).abs() > 0.5 {
        log::info!(
            "target and predict KDE bandwidths differ: {:e} vs {:e}",
            target.bandwidth(),
            predict.bandwidth()
        );
    }

    let ratios: Vec<f64> = proposal_qoi
        .par_iter()
        .map(|&q| {
            let q = match problem.qoi_scale {
                QoiScale::Linear => q,
                QoiScale::Log if q > 0.0 => q.ln(),
                QoiScale::Log => return 0.0,
            };
            let t = target.eval(q);
            let p = predict.eval(q);
            if t == 0.0 {
                0.0
            } else {
                t / p
            }
        })
        .collect();
    let (imax, max_ratio) =
        ratios
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if !(v <= bv) {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
    if !max_ratio.is_finite() || max_ratio <= 0.0 {
        return Err(Error::Underflow {
            proposal: imax,
            qoi: proposal_qoi[imax],
        });
    }
    let m = problem.safety_factor * max_ratio;
    let accepted: Vec<usize> = ratios
        .par_iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let u: f64 = row_rng(seed, i as u64).random();
            (u < r / m).then_some(i)
        })
        .collect();
    let acceptance_rate = accepted.len() as f64 / proposals.nrows() as f64;
    if acceptance_rate < 0.01 {
        log::warn!("DCI acceptance rate is only {acceptance_rate:.4}");
    }
    Ok(DciUpdate {
        samples: proposals.select_rows(&accepted),
        accepted,
        acceptance_rate,
        mean_ratio: stats::mean(&ratios),
        max_ratio,
        m,
        target_bandwidth: target.bandwidth(),
        predict_bandwidth: predict.bandwidth(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sample;
    use crate::transport::{DispersionOperator, TransportConfig};

    fn fractional_eigs(n: usize) -> Vec<Vec<Complex64>> {
        let cfg = TransportConfig {
            nx: 32,
            ..TransportConfig::default()
        };
        (0..n)
            .map(|i| {
                let nu = 0.05 + 0.1 * (i as f64 + 0.5) / n as f64;
                let alpha = 1.1 + 0.8 * ((i * 7) % n) as f64 / n as f64;
                let l = DispersionOperator::Fractional { nu_m: nu, alpha }
                    .eigenvalues(cfg.n_modes(), cfg.lx)
                    .unwrap();
                l[1..].to_vec()
            })
            .collect()
    }

    #[test]
    fn mvn_maps_back_to_valid_operators() {
        let eigs = fractional_eigs(200);
        let mvn = fit_initial_mvn(&eigs).unwrap();
        assert_eq!(mvn.modes, 15);
        // Rank-deficient: the fractional family has two parameters.
        assert!(mvn.jitter > 0.0);
        let s = sample(&mvn.density, 50, 1).unwrap();
        for row in s.rows() {
            let l = eigenvalues_from_transformed(row);
            assert_eq!(l[0], Complex64::new(0.0, 0.0));
            assert!(l[1..].iter().all(|v| v.re < 0.0 && v.im < 0.0));
        }
        let Density::MultivariateNormal { mean, .. } = &mvn.density else {
            panic!()
        };
        let l = eigenvalues_from_transformed(mean);
        assert!(l[1..].iter().all(|v| v.re < 0.0 && v.im < 0.0));
    }

    #[test]
    fn transform_round_trip_and_domain_errors() {
        let eigs = fractional_eigs(3);
        let z = transform_eigenvalues(&eigs[0]).unwrap();
        let back = eigenvalues_from_transformed(&z);
        for (a, b) in back[1..].iter().zip(&eigs[0]) {
            assert!((a - b).norm() <= 1e-12 * b.norm());
        }
        assert!(matches!(
            transform_eigenvalues(&[Complex64::new(-1.0, 0.0)]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn repeated_sample_takes_singular_path() {
        let eigs = vec![fractional_eigs(1)[0].clone(); 5];
        let mvn = fit_initial_mvn(&eigs).unwrap();
        assert!(mvn.jitter > 0.0);
    }

    fn normal_draws(n: usize, mean: f64, seed: u64) -> Vec<f64> {
        sample(&Density::Normal { mean, sd: 1.0 }, n, seed)
            .unwrap()
            .column(0)
    }

    #[test]
    fn identical_densities_accept_at_inverse_safety_factor() {
        let q = normal_draws(10_000, 0.0, 3);
        let proposals = SampleMatrix::from_rows(
            vec!["q".into()],
            &q.iter().map(|v| vec![*v]).collect::<Vec<_>>(),
            3,
        )
        .unwrap();
        let problem = DciProblem::new(q.clone(), q.clone());
        let up = dci_update(&problem, &proposals, &q, 8).unwrap();
        assert!((up.max_ratio - 1.0).abs() < 1e-12);
        assert!(
            up.acceptance_rate >= 0.88 && up.acceptance_rate <= 0.95,
            "{}",
            up.acceptance_rate
        );
        // Accepted rows are rows of the proposals.
        for (k, &i) in up.accepted.iter().enumerate() {
            assert_eq!(up.samples.row(k), proposals.row(i));
        }
        assert_eq!(up, dci_update(&problem, &proposals, &q, 8).unwrap());
    }

    #[test]
    fn shifted_target_is_matched() {
        let q = normal_draws(20_000, 0.0, 5);
        let proposals = SampleMatrix::from_rows(
            vec!["q".into()],
            &q.iter().map(|v| vec![*v]).collect::<Vec<_>>(),
            5,
        )
        .unwrap();
        let target = sample(&Density::Normal { mean: 0.5, sd: 0.7 }, 1000, 6)
            .unwrap()
            .column(0);
        let held_out = sample(&Density::Normal { mean: 0.5, sd: 0.7 }, 1000, 7)
            .unwrap()
            .column(0);
        let up = dci_update(&DciProblem::new(target, q.clone()), &proposals, &q, 9).unwrap();
        let acc = up.samples.column(0);
        assert!(stats::ks_statistic(&acc, &held_out) < 0.06);
        assert!(up.mean_ratio > 0.8 && up.mean_ratio < 1.2);
    }

    #[test]
    fn log_scale_matches_skewed_target_and_rejects_nonpositive_proposals() {
        // Proposals `exp(z) - 0.05` include non-positive values.
        let q: Vec<f64> = normal_draws(20_000, 0.0, 11)
            .iter()
            .map(|z| z.exp() - 0.05)
            .collect();
        let proposals = SampleMatrix::from_rows(
            vec!["q".into()],
            &q.iter().map(|v| vec![*v]).collect::<Vec<_>>(),
            11,
        )
        .unwrap();
        let lognormal = Density::LogNormal { mu: 0.3, sigma: 0.5 };
        let target = sample(&lognormal, 1000, 12).unwrap().column(0);
        let held_out = sample(&lognormal, 1000, 13).unwrap().column(0);
        let problem = DciProblem {
            qoi_scale: QoiScale::Log,
            ..DciProblem::new(target.clone(), q.clone())
        };
        let up = dci_update(&problem, &proposals, &q, 14).unwrap();
        let acc = up.samples.column(0);
        assert!(acc.iter().all(|v| *v > 0.0));
        assert!(stats::ks_statistic(&acc, &held_out) < 0.06);

        let mut bad = target;
        bad[0] = 0.0;
        let problem = DciProblem {
            qoi_scale: QoiScale::Log,
            ..DciProblem::new(bad, q.clone())
        };
        assert!(matches!(
            dci_update(&problem, &proposals, &q, 14),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn disjoint_support_underflows() {
        let q = normal_draws(500, 0.0, 1);
        let proposals = SampleMatrix::from_rows(
            vec!["q".into()],
            &q.iter().map(|v| vec![*v]).collect::<Vec<_>>(),
            1,
        )
        .unwrap();
        let target = normal_draws(500, 1e3, 2);
        assert!(matches!(
            dci_update(&DciProblem::new(target, q.clone()), &proposals, &q, 0),
            Err(Error::Underflow { .. })
        ));
    }
}

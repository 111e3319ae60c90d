//! Experiment configuration: a single JSON document with a declared schema
//! version, an explicit seed and one tagged experiment record.
//!
//! Every experiment section is fully defaulted, so `{"kind": "dci"}` is a
//! valid experiment; unknown fields are rejected so that typos surface as
//! field-level diagnostics instead of silently falling back to defaults.

use crate::error::{CliError, Result};
use mfugsa_core::bayes::AmOptions;
use mfugsa_core::dci::QoiScale;
use mfugsa_core::gsa::ParamSpec;
use mfugsa_core::polyexample::{hierarchical_mfu_priors, linear_priors, linspace};
use mfugsa_core::sampling::{
    elicit_lognormal_from_mode, elicit_lognormal_from_quantiles, ConditionalFamily, Density,
};
use mfugsa_core::transport::{PhysicalParams, SyntheticTruth, TransportConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Top-level configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed; every random stream of the run derives from it.
    pub seed: u64,
    /// Artifact directory used when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub experiment: Experiment,
}

/// The experiment to run, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    PolyInadequate(PolyInadequateConfig),
    PolyHierarchical(PolyHierarchicalConfig),
    TransportForward(TransportForwardConfig),
    TransportCalibrate(TransportCalibrateConfig),
    TransportRobustness(TransportRobustnessConfig),
    GsaGeneric(GsaGenericConfig),
    Dci(DciConfig),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::PolyInadequate(_) => "poly_inadequate",
            Experiment::PolyHierarchical(_) => "poly_hierarchical",
            Experiment::TransportForward(_) => "transport_forward",
            Experiment::TransportCalibrate(_) => "transport_calibrate",
            Experiment::TransportRobustness(_) => "transport_robustness",
            Experiment::GsaGeneric(_) => "gsa_generic",
            Experiment::Dci(_) => "dci",
        }
    }
}

/// Linear model calibrated against data from the weakly nonlinear truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolyInadequateConfig {
    pub n_data: usize,
    pub noise_sd: f64,
    /// Priors on `c0` and `c1`.
    pub priors: Vec<ParamSpec>,
    pub steps: usize,
    pub sampler: AmOptions,
    /// Lower and upper probability of the predictive band.
    pub band_probs: [f64; 2],
    /// Prior draws used for the prior predictive band.
    pub prior_draws: usize,
    pub histogram_bins: usize,
}

fn linear_prior_specs() -> Vec<ParamSpec> {
    linear_priors()
        .into_iter()
        .map(|(n, d)| ParamSpec::scalar(n, d))
        .collect()
}

impl Default for PolyInadequateConfig {
    fn default() -> Self {
        Self {
            n_data: 100,
            noise_sd: 0.05,
            priors: linear_prior_specs(),
            steps: 20_000,
            sampler: AmOptions::default(),
            band_probs: [0.025, 0.975],
            prior_draws: 4_000,
            histogram_bins: 40,
        }
    }
}

/// Enriched model with a hierarchical MFU term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolyHierarchicalConfig {
    pub n_data: usize,
    pub noise_sd: f64,
    /// Priors on `c0` and `c1`.
    pub model_priors: Vec<ParamSpec>,
    /// Hierarchical blocks `(mu_c2, sigma_c2, c2)` and
    /// `(mu_alpha, sigma_alpha, alpha)`.
    pub mfu_priors: Vec<ParamSpec>,
    pub steps: usize,
    pub sampler: AmOptions,
    pub band_probs: [f64; 2],
    pub prior_draws: usize,
    /// Locations at which total-effect numerators are computed.
    pub gsa_x: Vec<f64>,
    /// Pick-freeze size of the prior (independent) analysis.
    pub prior_gsa_n: usize,
    /// Pick-freeze size of the posterior (dependent) analysis; at most half
    /// the retained chain.
    pub posterior_gsa_n: usize,
    pub gsa_replicates: usize,
    pub histogram_bins: usize,
}

impl Default for PolyHierarchicalConfig {
    fn default() -> Self {
        Self {
            n_data: 100,
            noise_sd: 0.05,
            model_priors: linear_prior_specs(),
            mfu_priors: hierarchical_mfu_priors()
                .into_iter()
                .map(|(names, d)| ParamSpec::new(&names, d))
                .collect(),
            steps: 200_000,
            sampler: AmOptions::default(),
            band_probs: [0.025, 0.975],
            prior_draws: 4_000,
            gsa_x: linspace(0.2, 2.0, 10),
            prior_gsa_n: 10_000,
            posterior_gsa_n: 5_000,
            gsa_replicates: 10,
            histogram_bins: 40,
        }
    }
}

/// Default priors of `u_mean`, `nu_p` and `s` for forward propagation:
/// ±10 % and ±20 % uniform uncertainty about 1 and 0.01, and `s ~ U[0.2, 1.5]`.
pub fn forward_physical_priors() -> Vec<ParamSpec> {
    vec![
        ParamSpec::scalar("u_mean", Density::Uniform { lo: 0.9, hi: 1.1 }),
        ParamSpec::scalar(
            "nu_p",
            Density::Uniform {
                lo: 0.008,
                hi: 0.012,
            },
        ),
        ParamSpec::scalar("s", Density::Uniform { lo: 0.2, hi: 1.5 }),
    ]
}

/// Default priors of the fractional operator: `nu_m ~ U[0.05, 0.15]`,
/// `alpha ~ Triangular[1, 2, 1.5]`.
pub fn fractional_mfu_priors() -> Vec<ParamSpec> {
    vec![
        ParamSpec::scalar("nu_m", Density::Uniform { lo: 0.05, hi: 0.15 }),
        ParamSpec::scalar(
            "alpha",
            Density::Triangular {
                lo: 1.0,
                hi: 2.0,
                mode: 1.5,
            },
        ),
    ]
}

/// Forward propagation with the fractional dispersion operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportForwardConfig {
    pub transport: TransportConfig,
    /// Priors named `u_mean`, `nu_p`, `s`.
    pub physical_priors: Vec<ParamSpec>,
    /// Priors named `nu_m`, `alpha`.
    pub mfu_priors: Vec<ParamSpec>,
    pub n_samples: usize,
    /// Number of concentration profiles dumped for plotting.
    pub snapshot_samples: usize,
    pub snapshot_time: f64,
    pub histogram_bins: usize,
}

impl Default for TransportForwardConfig {
    fn default() -> Self {
        Self {
            transport: TransportConfig::default(),
            physical_priors: forward_physical_priors(),
            mfu_priors: fractional_mfu_priors(),
            n_samples: 1_000,
            snapshot_samples: 10,
            snapshot_time: 1.0,
            histogram_bins: 30,
        }
    }
}

/// Data-consistent inversion settings shared by the `dci` and
/// `transport_robustness` experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DciSettings {
    /// Fractional-operator draws used to fit the initial Gaussian density.
    pub fit_samples: usize,
    /// Proposals drawn from the initial density.
    pub proposals: usize,
    /// Target QoI draws (fractional operator, physical parameters at their
    /// prior means).
    pub target_samples: usize,
    pub safety_factor: f64,
    /// Bandwidth overrides, on the scale given by `qoi_scale`.
    pub target_bandwidth: Option<f64>,
    pub predict_bandwidth: Option<f64>,
    /// Scale of the kernel density estimates. The outflow concentration is
    /// positive and right-skewed, so the default is `log`.
    pub qoi_scale: QoiScale,
}

impl Default for DciSettings {
    fn default() -> Self {
        Self {
            fit_samples: 10_000,
            proposals: 10_000,
            target_samples: 1_000,
            safety_factor: mfugsa_core::dci::DEFAULT_SAFETY_FACTOR,
            target_bandwidth: None,
            predict_bandwidth: None,
            qoi_scale: QoiScale::Log,
        }
    }
}

/// Data-consistent inversion of general-linear-operator eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DciConfig {
    pub transport: TransportConfig,
    pub physical_priors: Vec<ParamSpec>,
    pub mfu_priors: Vec<ParamSpec>,
    pub dci: DciSettings,
    /// Independent target draws used to judge the update.
    pub holdout_samples: usize,
    /// Number of leading modes written to the accepted-sample table.
    pub export_modes: usize,
    pub histogram_bins: usize,
}

impl Default for DciConfig {
    fn default() -> Self {
        Self {
            transport: TransportConfig::default(),
            physical_priors: forward_physical_priors(),
            mfu_priors: fractional_mfu_priors(),
            dci: DciSettings::default(),
            holdout_samples: 10_000,
            export_modes: 8,
            histogram_bins: 30,
        }
    }
}

/// Robustness of the MFU-group indices to the dispersion representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportRobustnessConfig {
    pub transport: TransportConfig,
    pub physical_priors: Vec<ParamSpec>,
    pub mfu_priors: Vec<ParamSpec>,
    pub dci: DciSettings,
    /// Pick-freeze size per replicate.
    pub n: usize,
    pub replicates: usize,
    /// Outer draws of the physical parameters for the discrepancy estimate.
    pub outer_n: usize,
    /// Inner Monte Carlo draws when quadrature does not apply.
    pub inner_n: usize,
    pub quadrature_order: usize,
}

impl Default for TransportRobustnessConfig {
    fn default() -> Self {
        Self {
            transport: TransportConfig::default(),
            physical_priors: forward_physical_priors(),
            mfu_priors: fractional_mfu_priors(),
            dci: DciSettings::default(),
            n: 5_000,
            replicates: 20,
            outer_n: 1_000,
            inner_n: 1_000,
            quadrature_order: mfugsa_core::robustness::DEFAULT_QUADRATURE_ORDER,
        }
    }
}

/// Log-normal priors on `u_mean`, `nu_p`, `s` with the mode at the nominal
/// value and 95 % of the mass below 120 % of it.
pub fn calibration_model_priors() -> Vec<ParamSpec> {
    [("u_mean", 1.0), ("nu_p", 0.01), ("s", 1.0)]
        .into_iter()
        .map(|(name, nominal)| {
            let (mu, sigma) = elicit_lognormal_from_mode(nominal, 0.95, 1.2 * nominal)
                .expect("nominal values are positive");
            ParamSpec::scalar(name, Density::LogNormal { mu, sigma })
        })
        .collect()
}

/// Hierarchical priors of the complex fractional operator. For each of the
/// real (`_r`) and imaginary (`_i`) parts: `nu ~ LogNormal(mu, sigma)` with
/// `mu ~ N(mu_n, (|mu_n|/2)²)` and `sigma` log-normal with mode `sigma_n`
/// and 99 % of the mass below `1.5 sigma_n`, where `(mu_n, sigma_n)` put
/// the 0.1 and 0.99 quantiles of `nu` at 0.1 and 0.5; and
/// `alpha ~ Triangular[1, 2, mode]` with `mode ~ U[1, 2]`.
pub fn calibration_mfu_priors() -> Vec<ParamSpec> {
    let (mu_n, sigma_n) =
        elicit_lognormal_from_quantiles(0.1, 0.1, 0.99, 0.5).expect("ordered quantiles");
    let (s_mu, s_sigma) =
        elicit_lognormal_from_mode(sigma_n, 0.99, 1.5 * sigma_n).expect("positive mode");
    let mut out = Vec::new();
    for part in ["r", "i"] {
        out.push(ParamSpec {
            names: vec![
                format!("mu_nu_{part}"),
                format!("sigma_nu_{part}"),
                format!("nu_m_{part}"),
            ],
            density: Density::Hierarchical {
                family: ConditionalFamily::LogNormal,
                hyper: vec![
                    Density::Normal {
                        mean: mu_n,
                        sd: 0.5 * mu_n.abs(),
                    },
                    Density::LogNormal {
                        mu: s_mu,
                        sigma: s_sigma,
                    },
                ],
            },
        });
        out.push(ParamSpec {
            names: vec![format!("mode_alpha_{part}"), format!("alpha_{part}")],
            density: Density::Hierarchical {
                family: ConditionalFamily::Triangular { lo: 1.0, hi: 2.0 },
                hyper: vec![Density::Uniform { lo: 1.0, hi: 2.0 }],
            },
        });
    }
    out
}

/// Hierarchical calibration of the complex fractional operator against
/// synthetic upstream well data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportCalibrateConfig {
    pub transport: TransportConfig,
    /// Data-generating dispersion operator.
    pub truth: SyntheticTruth,
    /// Data-generating physical parameters.
    pub truth_params: PhysicalParams,
    pub observation_x: f64,
    pub observation_times: Vec<f64>,
    /// Standard deviation of the log of the multiplicative error.
    pub noise_sd: f64,
    /// Priors named `u_mean`, `nu_p`, `s`.
    pub model_priors: Vec<ParamSpec>,
    /// Blocks naming `nu_m_r`, `alpha_r`, `nu_m_i`, `alpha_i` (plus any
    /// hyperparameters).
    pub mfu_priors: Vec<ParamSpec>,
    pub steps: usize,
    pub sampler: AmOptions,
    /// Prior draws for the prior pushforward and prior sensitivity analysis.
    pub prior_draws: usize,
    pub prior_gsa_n: usize,
    pub posterior_gsa_n: usize,
    pub gsa_replicates: usize,
    pub histogram_bins: usize,
}

impl Default for TransportCalibrateConfig {
    fn default() -> Self {
        Self {
            transport: TransportConfig::default(),
            truth: SyntheticTruth::default(),
            truth_params: PhysicalParams::new(1.05, 0.0095, 0.9),
            observation_x: 1.4,
            observation_times: (1..=20).map(|i| i as f64 * 0.01).collect(),
            noise_sd: 0.01,
            model_priors: calibration_model_priors(),
            mfu_priors: calibration_mfu_priors(),
            steps: 50_000,
            sampler: AmOptions::default(),
            prior_draws: 10_000,
            prior_gsa_n: 10_000,
            posterior_gsa_n: 4_000,
            gsa_replicates: 10,
            histogram_bins: 40,
        }
    }
}

/// One monomial `coefficient · Π x_name^power` of a polynomial model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coefficient: f64,
    #[serde(default)]
    pub powers: BTreeMap<String, i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    pub members: Vec<String>,
}

/// Expected indices of one group, checked within `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedIndices {
    pub group: String,
    pub s_main: Option<f64>,
    pub t_total: Option<f64>,
    pub tolerance: f64,
}

/// Grouped Sobol' analysis of a polynomial over independent parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsaGenericConfig {
    pub params: Vec<ParamSpec>,
    pub groups: Vec<GroupSpec>,
    pub terms: Vec<Term>,
    pub n: usize,
    pub replicates: usize,
    pub expected: Vec<ExpectedIndices>,
}

impl Default for GsaGenericConfig {
    /// `x1 + x2 + x1 x3` over iid standard normals, groups `{x1}`, `{x2, x3}`.
    fn default() -> Self {
        let normal = Density::Normal { mean: 0.0, sd: 1.0 };
        let term = |c: f64, p: &[(&str, i32)]| Term {
            coefficient: c,
            powers: p.iter().map(|(n, e)| (n.to_string(), *e)).collect(),
        };
        Self {
            params: ["x1", "x2", "x3"]
                .iter()
                .map(|n| ParamSpec::scalar(n, normal.clone()))
                .collect(),
            groups: vec![
                GroupSpec {
                    name: "g1".into(),
                    members: vec!["x1".into()],
                },
                GroupSpec {
                    name: "g23".into(),
                    members: vec!["x2".into(), "x3".into()],
                },
            ],
            terms: vec![
                term(1.0, &[("x1", 1)]),
                term(1.0, &[("x2", 1)]),
                term(1.0, &[("x1", 1), ("x3", 1)]),
            ],
            n: 50_000,
            replicates: 20,
            expected: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses and validates a configuration document. Errors name the
    /// offending field path.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<root>".into() } else { path };
            CliError::config(field, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(
                "schema_version",
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        let f = |name: &str| format!("experiment.{name}");
        match &self.experiment {
            Experiment::PolyInadequate(c) => {
                check_data(c.n_data, c.noise_sd, &f)?;
                check_priors(&c.priors, &["c0", "c1"], &f("priors"))?;
                check_sampler(c.steps, &c.sampler, &f)?;
                check_band(c.band_probs, &f("band_probs"))?;
                check_min(c.prior_draws, 1, &f("prior_draws"))?;
                check_min(c.histogram_bins, 1, &f("histogram_bins"))?;
            }
            Experiment::PolyHierarchical(c) => {
                check_data(c.n_data, c.noise_sd, &f)?;
                check_priors(&c.model_priors, &["c0", "c1"], &f("model_priors"))?;
                check_priors(&c.mfu_priors, &["c2", "alpha"], &f("mfu_priors"))?;
                check_sampler(c.steps, &c.sampler, &f)?;
                check_band(c.band_probs, &f("band_probs"))?;
                check_min(c.prior_draws, 1, &f("prior_draws"))?;
                if c.gsa_x.is_empty() || c.gsa_x.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(CliError::config(
                        f("gsa_x"),
                        "need at least one finite, non-negative location",
                    ));
                }
                check_min(c.prior_gsa_n, 2, &f("prior_gsa_n"))?;
                check_min(c.posterior_gsa_n, 2, &f("posterior_gsa_n"))?;
                let retained = retained_samples(c.steps, &c.sampler);
                if 2 * c.posterior_gsa_n > retained {
                    return Err(CliError::config(
                        f("posterior_gsa_n"),
                        format!(
                            "needs {} posterior samples but the chain retains at most {retained}",
                            2 * c.posterior_gsa_n
                        ),
                    ));
                }
                check_min(c.gsa_replicates, 2, &f("gsa_replicates"))?;
                check_min(c.histogram_bins, 1, &f("histogram_bins"))?;
            }
            Experiment::TransportForward(c) => {
                check_transport(&c.transport, &f)?;
                check_priors(&c.physical_priors, &["u_mean", "nu_p", "s"], &f("physical_priors"))?;
                check_priors(&c.mfu_priors, &["nu_m", "alpha"], &f("mfu_priors"))?;
                check_min(c.n_samples, 2, &f("n_samples"))?;
                if c.snapshot_samples > c.n_samples {
                    return Err(CliError::config(
                        f("snapshot_samples"),
                        "cannot exceed n_samples",
                    ));
                }
                if !(c.snapshot_time.is_finite() && c.snapshot_time >= 0.0) {
                    return Err(CliError::config(f("snapshot_time"), "must be >= 0"));
                }
                check_min(c.histogram_bins, 1, &f("histogram_bins"))?;
            }
            Experiment::Dci(c) => {
                check_transport(&c.transport, &f)?;
                check_priors(&c.physical_priors, &["u_mean", "nu_p", "s"], &f("physical_priors"))?;
                check_priors(&c.mfu_priors, &["nu_m", "alpha"], &f("mfu_priors"))?;
                check_dci(&c.dci, c.transport.nx / 2 - 1, &f)?;
                check_min(c.holdout_samples, 2, &f("holdout_samples"))?;
                check_min(c.histogram_bins, 1, &f("histogram_bins"))?;
            }
            Experiment::TransportRobustness(c) => {
                check_transport(&c.transport, &f)?;
                check_priors(&c.physical_priors, &["u_mean", "nu_p", "s"], &f("physical_priors"))?;
                check_priors(&c.mfu_priors, &["nu_m", "alpha"], &f("mfu_priors"))?;
                check_dci(&c.dci, c.transport.nx / 2 - 1, &f)?;
                check_min(c.n, 2, &f("n"))?;
                check_min(c.replicates, 2, &f("replicates"))?;
                check_min(c.outer_n, 2, &f("outer_n"))?;
                check_min(c.inner_n, 2, &f("inner_n"))?;
                check_min(c.quadrature_order, 1, &f("quadrature_order"))?;
            }
            Experiment::TransportCalibrate(c) => {
                check_transport(&c.transport, &f)?;
                if !(0.0..=c.transport.lx).contains(&c.observation_x) {
                    return Err(CliError::config(
                        f("observation_x"),
                        "must lie in [0, lx]",
                    ));
                }
                if c.observation_times.is_empty()
                    || c.observation_times.iter().any(|t| !(t.is_finite() && *t >= 0.0))
                {
                    return Err(CliError::config(
                        f("observation_times"),
                        "need at least one finite, non-negative time",
                    ));
                }
                if !(c.noise_sd.is_finite() && c.noise_sd > 0.0) {
                    return Err(CliError::config(f("noise_sd"), "must be positive"));
                }
                c.truth_params
                    .validate()
                    .map_err(|e| CliError::config(f("truth_params"), e.to_string()))?;
                check_priors(&c.model_priors, &["u_mean", "nu_p", "s"], &f("model_priors"))?;
                check_priors(
                    &c.mfu_priors,
                    &["nu_m_r", "alpha_r", "nu_m_i", "alpha_i"],
                    &f("mfu_priors"),
                )?;
                check_sampler(c.steps, &c.sampler, &f)?;
                check_min(c.prior_draws, 2, &f("prior_draws"))?;
                check_min(c.prior_gsa_n, 2, &f("prior_gsa_n"))?;
                check_min(c.posterior_gsa_n, 2, &f("posterior_gsa_n"))?;
                let retained = retained_samples(c.steps, &c.sampler);
                if 2 * c.posterior_gsa_n > retained {
                    return Err(CliError::config(
                        f("posterior_gsa_n"),
                        format!(
                            "needs {} posterior samples but the chain retains at most {retained}",
                            2 * c.posterior_gsa_n
                        ),
                    ));
                }
                check_min(c.gsa_replicates, 2, &f("gsa_replicates"))?;
                check_min(c.histogram_bins, 1, &f("histogram_bins"))?;
            }
            Experiment::GsaGeneric(c) => {
                let names: Vec<&str> = c
                    .params
                    .iter()
                    .flat_map(|p| p.names.iter().map(String::as_str))
                    .collect();
                check_priors(&c.params, &[], &f("params"))?;
                if c.groups.is_empty() {
                    return Err(CliError::config(f("groups"), "need at least one group"));
                }
                for (i, g) in c.groups.iter().enumerate() {
                    for m in &g.members {
                        if !names.contains(&m.as_str()) {
                            return Err(CliError::config(
                                format!("experiment.groups[{i}].members"),
                                format!("unknown parameter {m}"),
                            ));
                        }
                    }
                }
                if c.terms.is_empty() {
                    return Err(CliError::config(f("terms"), "need at least one term"));
                }
                for (i, t) in c.terms.iter().enumerate() {
                    for p in t.powers.keys() {
                        if !names.contains(&p.as_str()) {
                            return Err(CliError::config(
                                format!("experiment.terms[{i}].powers"),
                                format!("unknown parameter {p}"),
                            ));
                        }
                    }
                }
                for (i, e) in c.expected.iter().enumerate() {
                    if !c.groups.iter().any(|g| g.name == e.group) {
                        return Err(CliError::config(
                            format!("experiment.expected[{i}].group"),
                            format!("unknown group {}", e.group),
                        ));
                    }
                }
                check_min(c.n, 2, &f("n"))?;
                check_min(c.replicates, 2, &f("replicates"))?;
            }
        }
        Ok(())
    }
}

/// Number of samples an adaptive Metropolis run retains.
pub fn retained_samples(steps: usize, opts: &AmOptions) -> usize {
    let burn = (steps as f64 * opts.burn_in_fraction).floor() as usize;
    let post = steps - burn.min(steps);
    let thin = post.div_ceil(opts.max_retained.max(1)).max(1);
    post.div_ceil(thin)
}

fn check_min(v: usize, min: usize, field: &str) -> Result<()> {
    if v < min {
        return Err(CliError::config(field, format!("must be at least {min}, got {v}")));
    }
    Ok(())
}

fn check_data(n: usize, sd: f64, f: &dyn Fn(&str) -> String) -> Result<()> {
    check_min(n, 2, &f("n_data"))?;
    if !(sd.is_finite() && sd > 0.0) {
        return Err(CliError::config(f("noise_sd"), "must be positive"));
    }
    Ok(())
}

fn check_sampler(steps: usize, opts: &AmOptions, f: &dyn Fn(&str) -> String) -> Result<()> {
    check_min(steps, 1000, &f("steps"))?;
    if !(0.0..1.0).contains(&opts.burn_in_fraction) {
        return Err(CliError::config(
            f("sampler.burn_in_fraction"),
            "must lie in [0, 1)",
        ));
    }
    check_min(opts.max_retained, 1, &f("sampler.max_retained"))?;
    if opts.initial_sd.is_empty() || opts.initial_sd.iter().any(|s| !(*s > 0.0)) {
        return Err(CliError::config(
            f("sampler.initial_sd"),
            "must hold positive values",
        ));
    }
    Ok(())
}

fn check_band(p: [f64; 2], field: &str) -> Result<()> {
    if !(0.0 <= p[0] && p[0] < p[1] && p[1] <= 1.0) {
        return Err(CliError::config(
            field,
            "need 0 <= lower < upper <= 1",
        ));
    }
    Ok(())
}

fn check_transport(t: &TransportConfig, f: &dyn Fn(&str) -> String) -> Result<()> {
    t.validate()
        .map_err(|e| CliError::config(f("transport"), e.to_string()))
}

fn check_dci(d: &DciSettings, modes: usize, f: &dyn Fn(&str) -> String) -> Result<()> {
    let min = mfugsa_core::dci::MIN_KDE_SAMPLES;
    check_min(d.fit_samples, 2 * modes + 1, &f("dci.fit_samples"))?;
    check_min(d.proposals, min, &f("dci.proposals"))?;
    check_min(d.target_samples, min, &f("dci.target_samples"))?;
    if !(d.safety_factor.is_finite() && d.safety_factor >= 1.0) {
        return Err(CliError::config(f("dci.safety_factor"), "must be >= 1"));
    }
    for (name, h) in [
        ("dci.target_bandwidth", d.target_bandwidth),
        ("dci.predict_bandwidth", d.predict_bandwidth),
    ] {
        if let Some(h) = h {
            if !(h.is_finite() && h > 0.0) {
                return Err(CliError::config(f(name), "must be positive"));
            }
        }
    }
    Ok(())
}

/// Validates each block's density and that `required` names are present
/// exactly once.
fn check_priors(priors: &[ParamSpec], required: &[&str], field: &str) -> Result<()> {
    let mut seen: Vec<&str> = Vec::new();
    for (i, p) in priors.iter().enumerate() {
        let at = format!("{field}[{i}]");
        p.density
            .validate()
            .map_err(|e| CliError::config(format!("{at}.density"), e.to_string()))?;
        if p.names.len() != p.density.dim() {
            return Err(CliError::config(
                format!("{at}.names"),
                format!(
                    "{} names for a density of dimension {}",
                    p.names.len(),
                    p.density.dim()
                ),
            ));
        }
        for n in &p.names {
            if seen.contains(&n.as_str()) {
                return Err(CliError::config(
                    format!("{at}.names"),
                    format!("duplicate parameter {n}"),
                ));
            }
            seen.push(n);
        }
    }
    for r in required {
        if !seen.contains(r) {
            return Err(CliError::config(field, format!("missing parameter {r}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_documents_use_defaults() {
        for kind in [
            "poly_inadequate",
            "poly_hierarchical",
            "transport_forward",
            "transport_calibrate",
            "transport_robustness",
            "gsa_generic",
            "dci",
        ] {
            let text = format!(
                r#"{{"schema_version": 1, "seed": 3, "experiment": {{"kind": "{kind}"}}}}"#
            );
            let cfg = ExperimentConfig::parse(&text).unwrap();
            assert_eq!(cfg.experiment.kind(), kind);
        }
    }

    #[test]
    fn round_trip_through_json() {
        let cfg = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 11,
            output_dir: None,
            experiment: Experiment::TransportCalibrate(TransportCalibrateConfig::default()),
        };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_fields_are_named() {
        let text = r#"{"schema_version": 1, "seed": 3,
            "experiment": {"kind": "poly_inadequate", "n_dta": 10}}"#;
        match ExperimentConfig::parse(text) {
            Err(CliError::Config { field, message }) => {
                assert!(field.starts_with("experiment"), "{field}");
                assert!(message.contains("n_dta"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_values_are_named() {
        let text = r#"{"schema_version": 1, "seed": 3,
            "experiment": {"kind": "poly_inadequate", "noise_sd": -1.0}}"#;
        match ExperimentConfig::parse(text) {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "experiment.noise_sd"),
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{"schema_version": 2, "seed": 3, "experiment": {"kind": "dci"}}"#;
        assert!(matches!(
            ExperimentConfig::parse(text),
            Err(CliError::Config { ref field, .. }) if field == "schema_version"
        ));
        let text = r#"{"schema_version": 1, "experiment": {"kind": "dci"}}"#;
        assert!(matches!(
            ExperimentConfig::parse(text),
            Err(CliError::Config { .. })
        ));
        let text = r#"{"schema_version": 1, "seed": 1, "experiment": {"kind": "gsa_generic",
            "groups": [{"name": "a", "members": ["x9"]}]}}"#;
        assert!(matches!(
            ExperimentConfig::parse(text),
            Err(CliError::Config { ref field, .. }) if field == "experiment.groups[0].members"
        ));
    }

    #[test]
    fn calibration_prior_constants() {
        let priors = calibration_model_priors();
        let Density::LogNormal { mu, sigma } = priors[0].density else {
            panic!()
        };
        assert!((sigma - 0.1042378617535551).abs() < 1e-12);
        assert!((mu - sigma * sigma).abs() < 1e-15);
        let mfu = calibration_mfu_priors();
        let Density::Hierarchical { hyper, .. } = &mfu[0].density else {
            panic!()
        };
        let Density::Normal { mean, sd } = hyper[0] else {
            panic!()
        };
        assert!((mean - -1.7309012889233446).abs() < 1e-12);
        assert!((sd - 0.5 * 1.7309012889233446).abs() < 1e-12);
        let Density::LogNormal { mu, sigma } = hyper[1] else {
            panic!()
        };
        assert!((mu - -0.780708424203157).abs() < 1e-12);
        assert!((sigma - 0.16288741746954027).abs() < 1e-12);
    }
}

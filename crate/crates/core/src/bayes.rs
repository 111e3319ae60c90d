//! Bayesian calibration: likelihoods, (hierarchical) priors, adaptive
//! Metropolis sampling, posterior predictive bands and pushforwards.
//!
//! Parameters are sampled in unconstrained coordinates obtained by
//! per-column transforms (log for positive parameters, logit for bounded
//! ones); the Jacobian of the map is included so the chain targets the
//! posterior in the original coordinates.

use crate::gsa::ParamSpec;
use crate::rng::{derive_named, row_rng, serial_rng};
use crate::sampling::{cholesky_with_jitter, ConditionalFamily, Density, SampleMatrix};
use crate::stats;
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Map between a parameter `x` and the unconstrained sampling coordinate `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// `x = z`.
    Identity,
    /// `x = exp(z)`.
    Log,
    /// `x = shift + exp(z)`.
    LogShifted { shift: f64 },
    /// `x = lo + (hi - lo) / (1 + exp(-z))`.
    Logit { lo: f64, hi: f64 },
}

impl Transform {
    /// Unconstrained coordinate of `x`; non-finite outside the domain.
    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::LogShifted { shift } => (x - shift).ln(),
            Transform::Logit { lo, hi } => {
                let p = (x - lo) / (hi - lo);
                (p / (1.0 - p)).ln()
            }
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        match *self {
            Transform::Identity => z,
            Transform::Log => z.exp(),
            Transform::LogShifted { shift } => shift + z.exp(),
            Transform::Logit { lo, hi } => lo + (hi - lo) * logistic(z),
        }
    }

    /// `ln |dx/dz|` at `z`.
    pub fn ln_jacobian(&self, z: f64) -> f64 {
        match *self {
            Transform::Identity => 0.0,
            Transform::Log | Transform::LogShifted { .. } => z,
            // ln σ(z) + ln(1 - σ(z)) = -|z| - 2 ln(1 + exp(-|z|))
            Transform::Logit { lo, hi } => {
                (hi - lo).ln() - z.abs() - 2.0 * (-z.abs()).exp().ln_1p()
            }
        }
    }

    /// Natural transform for a univariate density's support.
    pub fn for_density(d: &Density) -> Transform {
        match *d {
            Density::Uniform { lo, hi } | Density::Triangular { lo, hi, .. } => {
                Transform::Logit { lo, hi }
            }
            Density::LogNormal { .. } => Transform::Log,
            _ => Transform::Identity,
        }
    }

    /// Natural transform for the conditional parameter of a hierarchy.
    pub fn for_family(f: &ConditionalFamily) -> Transform {
        match *f {
            ConditionalFamily::Normal => Transform::Identity,
            ConditionalFamily::LogNormal => Transform::Log,
            ConditionalFamily::ShiftedLogNormal { shift } => Transform::LogShifted { shift },
            ConditionalFamily::Triangular { lo, hi } => Transform::Logit { lo, hi },
        }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Default per-column transforms for a list of prior blocks.
pub fn default_transforms(priors: &[ParamSpec]) -> Vec<Transform> {
    let mut out = Vec::new();
    for p in priors {
        match &p.density {
            Density::Hierarchical { family, hyper } => {
                out.extend(hyper.iter().map(Transform::for_density));
                out.push(Transform::for_family(family));
            }
            d if d.is_univariate() => out.push(Transform::for_density(d)),
            d => out.extend(std::iter::repeat_n(Transform::Identity, d.dim())),
        }
    }
    out
}

/// Measurement-error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// `d = m + ε`, `ε ~ N(0, sd²)`.
    GaussianAdditive { sd: f64 },
    /// `ln d = ln m + ε`, `ε ~ N(0, sd²)`; the untransformed error has median 1.
    LognormalMultiplicative { sd: f64 },
}

impl NoiseModel {
    pub fn sd(&self) -> f64 {
        match *self {
            NoiseModel::GaussianAdditive { sd } | NoiseModel::LognormalMultiplicative { sd } => sd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sd = self.sd();
        if !(sd.is_finite() && sd > 0.0) {
            return Err(Error::Parameter(format!(
                "noise sd must be positive, got {sd}"
            )));
        }
        Ok(())
    }

    /// Residual part `-Σ r_i² / (2 sd²)` of the log-likelihood, or `None`
    /// when a multiplicative model meets a non-positive prediction or datum.
    pub fn residual_term(&self, data: &[f64], model: &[f64]) -> Option<f64> {
        let sd = self.sd();
        let mut ss = 0.0;
        for (d, m) in data.iter().zip(model) {
            let r = match self {
                NoiseModel::GaussianAdditive { .. } => d - m,
                NoiseModel::LognormalMultiplicative { .. } => {
                    if !(*m > 0.0 && *d > 0.0) {
                        return None;
                    }
                    d.ln() - m.ln()
                }
            };
            ss += r * r;
        }
        Some(-ss / (2.0 * sd * sd))
    }

    /// Normalising constant of the likelihood for `n` observations (in the
    /// log-data coordinates for the multiplicative model).
    pub fn log_normaliser(&self, n: usize) -> f64 {
        -(n as f64) * (self.sd().ln() + 0.5 * (2.0 * PI).ln())
    }

    /// Perturbs a model prediction with a noise draw given a standard normal
    /// variate `z`.
    pub fn perturb(&self, m: f64, z: f64) -> f64 {
        match *self {
            NoiseModel::GaussianAdditive { sd } => m + sd * z,
            NoiseModel::LognormalMultiplicative { sd } => m * (sd * z).exp(),
        }
    }
}

/// Forward model used in a likelihood: maps a full parameter vector (in
/// original coordinates) to predictions at the observation points, or
/// `None` when the parameters violate a physical constraint.
pub type ForwardFn<'a> = Box<dyn Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync + 'a>;

/// Unnormalised log posterior over named parameters.
pub struct LogPosterior<'a> {
    names: Vec<String>,
    priors: Vec<ParamSpec>,
    transforms: Vec<Transform>,
    data: Vec<f64>,
    noise: NoiseModel,
    model: ForwardFn<'a>,
    rejected_constraint: AtomicUsize,
    rejected_nonpositive: AtomicUsize,
}

impl std::fmt::Debug for LogPosterior<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogPosterior")
            .field("names", &self.names)
            .field("noise", &self.noise)
            .finish_non_exhaustive()
    }
}

/// Builds a log posterior from prior blocks, data, a noise model and a
/// forward model. Transforms default to [`default_transforms`].
pub fn make_log_posterior<'a>(
    priors: Vec<ParamSpec>,
    data: Vec<f64>,
    noise: NoiseModel,
    model: ForwardFn<'a>,
) -> Result<LogPosterior<'a>> {
    if data.is_empty() {
        return Err(Error::Argument("dataset is empty".into()));
    }
    noise.validate()?;
    for p in &priors {
        p.density.validate()?;
        if matches!(p.density, Density::Empirical { .. }) {
            return Err(Error::Configuration(
                "empirical densities cannot serve as priors".into(),
            ));
        }
        if p.names.len() != p.density.dim() {
            return Err(Error::Configuration(format!(
                "prior block {:?} names {} columns but its density has {}",
                p.names,
                p.names.len(),
                p.density.dim()
            )));
        }
    }
    let names = priors
        .iter()
        .flat_map(|p| p.names.iter().cloned())
        .collect();
    let transforms = default_transforms(&priors);
    Ok(LogPosterior {
        names,
        priors,
        transforms,
        data,
        noise,
        model,
        rejected_constraint: AtomicUsize::new(0),
        rejected_nonpositive: AtomicUsize::new(0),
    })
}

impl LogPosterior<'_> {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn priors(&self) -> &[ParamSpec] {
        &self.priors
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    /// Overrides the per-column transforms.
    pub fn with_transforms(mut self, transforms: Vec<Transform>) -> Result<Self> {
        if transforms.len() != self.dim() {
            return Err(Error::Configuration(
                "one transform per parameter required".into(),
            ));
        }
        self.transforms = transforms;
        Ok(self)
    }

    /// Log prior density; hierarchical blocks factor as `π(γ|φ) π(φ)`.
    pub fn log_prior(&self, x: &[f64]) -> f64 {
        let mut lp = 0.0;
        let mut offset = 0;
        for p in &self.priors {
            let w = p.names.len();
            lp += p.density.ln_pdf(&x[offset..offset + w]);
            if !lp.is_finite() {
                return f64::NEG_INFINITY;
            }
            offset += w;
        }
        lp
    }

    /// Log likelihood; `-inf` when the forward model reports a constraint
    /// violation or a multiplicative model meets a non-positive output.
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let Some(pred) = (self.model)(x) else {
            self.rejected_constraint.fetch_add(1, Ordering::Relaxed);
            return f64::NEG_INFINITY;
        };
        match self.noise.residual_term(&self.data, &pred) {
            Some(r) => r + self.noise.log_normaliser(self.data.len()),
            None => {
                self.rejected_nonpositive.fetch_add(1, Ordering::Relaxed);
                f64::NEG_INFINITY
            }
        }
    }

    /// Log posterior (unnormalised) in original coordinates.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let lp = self.log_prior(x);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let ll = self.log_likelihood(x);
        if ll.is_nan() {
            return f64::NEG_INFINITY;
        }
        lp + ll
    }

    /// Hierarchical prior blocks as `(block, first column, hyperparameter
    /// count)`. Hyperparameters precede the conditional column.
    fn hyper_blocks(&self) -> impl Iterator<Item = (&ParamSpec, usize, usize)> {
        let mut offset = 0;
        self.priors.iter().filter_map(move |p| {
            let start = offset;
            offset += p.names.len();
            match &p.density {
                Density::Hierarchical { hyper, .. } => Some((p, start, hyper.len())),
                _ => None,
            }
        })
    }

    /// Number of evaluations rejected by the forward model's constraint.
    pub fn constraint_rejections(&self) -> usize {
        self.rejected_constraint.load(Ordering::Relaxed)
    }

    /// Number of evaluations with a non-positive output under a
    /// multiplicative noise model.
    pub fn nonpositive_rejections(&self) -> usize {
        self.rejected_nonpositive.load(Ordering::Relaxed)
    }
}

/// A log density in unconstrained sampling coordinates.
pub trait Target: Sync {
    fn dim(&self) -> usize;
    /// Log density (including the Jacobian) at sampling coordinate `z`.
    fn ln_density(&self, z: &[f64]) -> f64;
    /// Maps sampling coordinates to original coordinates.
    fn to_natural(&self, z: &[f64]) -> Vec<f64>;
    /// Maps original coordinates to sampling coordinates.
    fn to_sampling(&self, x: &[f64]) -> Vec<f64>;
    fn names(&self) -> Vec<String>;

    /// Groups of coordinates that enter only a prior factor (the
    /// hyperparameters of hierarchical blocks). The sampler refreshes them
    /// with cheap Metropolis-within-Gibbs moves rather than through the
    /// joint proposal.
    fn conditional_blocks(&self) -> Vec<Vec<usize>> {
        Vec::new()
    }

    /// Log of the factor of the density that involves block `b` of
    /// [`Target::conditional_blocks`], at sampling coordinate `z` (Jacobian
    /// of the block's coordinates included). Differences of this value are
    /// differences of the full log density when only block `b` changes.
    fn ln_block_density(&self, _b: usize, z: &[f64]) -> f64 {
        self.ln_density(z)
    }
}

impl Target for LogPosterior<'_> {
    fn dim(&self) -> usize {
        self.names.len()
    }

    fn ln_density(&self, z: &[f64]) -> f64 {
        let x = self.to_natural(z);
        if x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let jac: f64 = self
            .transforms
            .iter()
            .zip(z)
            .map(|(t, v)| t.ln_jacobian(*v))
            .sum();
        self.log_density(&x) + jac
    }

    fn to_natural(&self, z: &[f64]) -> Vec<f64> {
        self.transforms
            .iter()
            .zip(z)
            .map(|(t, v)| t.inverse(*v))
            .collect()
    }

    fn to_sampling(&self, x: &[f64]) -> Vec<f64> {
        self.transforms
            .iter()
            .zip(x)
            .map(|(t, v)| t.forward(*v))
            .collect()
    }

    fn names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn conditional_blocks(&self) -> Vec<Vec<usize>> {
        self.hyper_blocks()
            .map(|(_, offset, hyper)| (offset..offset + hyper).collect())
            .collect()
    }

    fn ln_block_density(&self, b: usize, z: &[f64]) -> f64 {
        let Some((p, offset, hyper)) = self.hyper_blocks().nth(b) else {
            return f64::NEG_INFINITY;
        };
        let w = p.names.len();
        let x: Vec<f64> = (offset..offset + w)
            .map(|j| self.transforms[j].inverse(z[j]))
            .collect();
        if x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let jac: f64 = (offset..offset + hyper)
            .map(|j| self.transforms[j].ln_jacobian(z[j]))
            .sum();
        p.density.ln_pdf(&x) + jac
    }
}

/// An unconstrained log density given by a closure (identity transforms).
pub struct FnTarget<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Target for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn ln_density(&self, z: &[f64]) -> f64 {
        (self.f)(z)
    }

    fn to_natural(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }

    fn to_sampling(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn names(&self) -> Vec<String> {
        (0..self.dim).map(|i| format!("x{i}")).collect()
    }
}

/// Options of the adaptive Metropolis sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmOptions {
    /// Fraction of steps discarded as burn-in; adaptation happens only there.
    pub burn_in_fraction: f64,
    /// Upper bound on retained post-burn-in samples (thinning stride chosen
    /// accordingly).
    pub max_retained: usize,
    /// Initial proposal standard deviation in sampling coordinates, per
    /// dimension (a single value is broadcast).
    pub initial_sd: Vec<f64>,
    /// Steps before the first covariance adaptation.
    pub adapt_start: usize,
    /// Steps between covariance adaptations.
    pub adapt_interval: usize,
    /// Acceptance rate targeted by the global scale adaptation.
    pub target_acceptance: f64,
    /// Metropolis-within-Gibbs sweeps over the target's conditional blocks
    /// (hierarchical hyperparameters) per iteration.
    pub conditional_sweeps: usize,
}

impl Default for AmOptions {
    fn default() -> Self {
        Self {
            burn_in_fraction: 0.5,
            max_retained: 10_000,
            initial_sd: vec![0.1],
            adapt_start: 500,
            adapt_interval: 100,
            target_acceptance: 0.3,
            conditional_sweeps: 5,
        }
    }
}

/// Retained posterior samples and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Post-burn-in, thinned samples in original coordinates.
    pub samples: SampleMatrix,
    /// Log density (sampling coordinates) of each retained sample.
    pub log_posterior: Vec<f64>,
    /// Acceptance rate of the frozen post-burn-in kernel.
    pub acceptance_rate: f64,
    /// Acceptance rate during burn-in.
    pub burn_in_acceptance_rate: f64,
    pub burn_in: usize,
    pub thin: usize,
    pub steps: usize,
}

impl Chain {
    /// CSV dump: one row per retained sample plus a log-posterior column.
    pub fn to_csv(&self) -> String {
        let mut out = self.samples.names().join(",");
        out.push_str(",log_posterior\n");
        for (row, lp) in self.samples.rows().zip(&self.log_posterior) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&cells.join(","));
            out.push_str(&format!(",{lp:e}\n"));
        }
        out
    }
}

/// Running mean and covariance (Welford).
struct RunningMoments {
    n: usize,
    mean: Vec<f64>,
    m2: DMatrix<f64>,
}

impl RunningMoments {
    fn new(d: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; d],
            m2: DMatrix::zeros(d, d),
        }
    }

    #[allow(clippy::needless_range_loop)] // index form mirrors the update formula
    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let d = x.len();
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        for i in 0..d {
            self.mean[i] += delta[i] / self.n as f64;
        }
        for i in 0..d {
            let di2 = x[i] - self.mean[i];
            for j in 0..d {
                self.m2[(j, i)] += delta[j] * di2;
            }
        }
    }

    fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.mean.len();
        let denom = (self.n.max(2) - 1) as f64;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| 0.5 * (self.m2[(i, j)] + self.m2[(j, i)]) / denom)
                    .collect()
            })
            .collect()
    }
}

/// Acceptance rate targeted by the one-dimensional conditional moves.
const CONDITIONAL_ACCEPTANCE: f64 = 0.44;

/// Haario-style adaptive random-walk Metropolis.
///
/// The proposal is `z + λ L ξ` with `L L^T` the running covariance of the
/// chain (plus a small regulariser) and `λ` a global scale tuned towards the
/// target acceptance rate. Both are adapted during burn-in only and then
/// frozen, so retained samples come from a fixed Metropolis kernel.
///
/// Coordinates in the target's conditional blocks (hierarchical
/// hyperparameters) are excluded from the joint proposal. After every joint
/// step they are refreshed by `conditional_sweeps` sweeps of one-dimensional
/// random-walk moves scored by the block's prior factor alone, with
/// per-coordinate step sizes adapted during burn-in. The likelihood does not
/// depend on these coordinates, so the moves are cheap; they also keep the
/// hyperparameters mixing when the likelihood makes the joint covariance
/// very anisotropic.
pub fn adaptive_metropolis<T: Target + ?Sized>(
    target: &T,
    init: &[f64],
    steps: usize,
    seed: u64,
    opts: &AmOptions,
) -> Result<Chain> {
    let d = target.dim();
    if init.len() != d {
        return Err(Error::Argument(format!(
            "initial point has {} entries, expected {d}",
            init.len()
        )));
    }
    if steps < 1000 {
        return Err(Error::Argument(format!(
            "need at least 1000 steps, got {steps}"
        )));
    }
    if !(opts.burn_in_fraction >= 0.0 && opts.burn_in_fraction < 1.0) {
        return Err(Error::Argument(
            "burn-in fraction must lie in [0, 1)".into(),
        ));
    }
    let sd: Vec<f64> = match opts.initial_sd.len() {
        1 => vec![opts.initial_sd[0]; d],
        n if n == d => opts.initial_sd.clone(),
        n => {
            return Err(Error::Argument(format!(
                "initial_sd has {n} entries, expected 1 or {d}"
            )));
        }
    };
    if sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Adaptation(
            "initial proposal covariance must be positive".into(),
        ));
    }

    let blocks: Vec<Vec<usize>> = if opts.conditional_sweeps > 0 {
        target.conditional_blocks()
    } else {
        Vec::new()
    };
    let mut in_block = vec![false; d];
    for &c in blocks.iter().flatten() {
        if c >= d || in_block[c] {
            return Err(Error::Configuration(format!(
                "conditional block coordinate {c} is out of range or repeated"
            )));
        }
        in_block[c] = true;
    }
    let sweeps = if blocks.is_empty() { 0 } else { opts.conditional_sweeps };
    let joint: Vec<usize> = (0..d).filter(|&c| !in_block[c]).collect();
    let dj = joint.len();
    if dj == 0 {
        return Err(Error::Configuration(
            "every coordinate lies in a conditional block".into(),
        ));
    }

    let mut z = target.to_sampling(init);
    let mut lp = target.ln_density(&z);
    if !lp.is_finite() {
        return Err(Error::InvalidStart);
    }

    let burn_in = (steps as f64 * opts.burn_in_fraction).floor() as usize;
    let post = steps - burn_in;
    let thin = post.div_ceil(opts.max_retained.max(1)).max(1);

    let mut chol = DMatrix::from_fn(dj, dj, |i, j| if i == j { sd[joint[i]] } else { 0.0 });
    let base_scale = 2.38 / (dj as f64).sqrt();
    // The initial covariance is user-supplied, so start with unit scale.
    let mut log_scale = 0.0f64;
    let mut moments = RunningMoments::new(dj);

    let mut rng = serial_rng(seed);
    let mut xi = vec![0.0; dj];
    let mut zj = vec![0.0; dj];
    let mut prop = z.clone();
    let mut accepted_window = 0usize;
    let mut window = 0usize;
    let mut accepted_burn = 0usize;
    let mut accepted_post = 0usize;
    let mut n_adapt = 0usize;
    let mut covariance_adapted = false;

    // Conditional moves: own stream, per-coordinate log step sizes.
    let mut cond_rng = serial_rng(derive_named(seed, "conditional"));
    let mut cond_log_step: Vec<f64> = (0..d).map(|c| sd[c].ln()).collect();
    let mut cond_accepted = vec![0usize; d];
    let mut cond_tried = vec![0usize; d];

    let names = target.names();
    let mut kept_values = Vec::with_capacity(post / thin * d + d);
    let mut kept_lp = Vec::with_capacity(post / thin + 1);

    for step in 0..steps {
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let scale = log_scale.exp();
        prop.copy_from_slice(&z);
        for i in 0..dj {
            let mut acc = 0.0;
            for (j, x) in xi.iter().enumerate().take(i + 1) {
                acc += chol[(i, j)] * x;
            }
            prop[joint[i]] = z[joint[i]] + scale * acc;
        }
        let lp_prop = target.ln_density(&prop);
        let u: f64 = rng.random();
        let accept = lp_prop.is_finite() && u.ln() < lp_prop - lp;
        if accept {
            z.copy_from_slice(&prop);
            lp = lp_prop;
        }

        for _ in 0..sweeps {
            for (b, block) in blocks.iter().enumerate() {
                for &c in block {
                    let old = z[c];
                    let before = target.ln_block_density(b, &z);
                    let step_sd = cond_log_step[c].exp();
                    let e: f64 = cond_rng.sample(StandardNormal);
                    z[c] = old + step_sd * e;
                    let after = target.ln_block_density(b, &z);
                    let u: f64 = cond_rng.random();
                    cond_tried[c] += 1;
                    if after.is_finite() && u.ln() < after - before {
                        lp += after - before;
                        cond_accepted[c] += 1;
                    } else {
                        z[c] = old;
                    }
                }
            }
        }

        if step < burn_in {
            accepted_burn += accept as usize;
            accepted_window += accept as usize;
            window += 1;
            for (i, &c) in joint.iter().enumerate() {
                zj[i] = z[c];
            }
            moments.push(&zj);
            if step + 1 >= opts.adapt_start && window >= opts.adapt_interval {
                n_adapt += 1;
                let rate = accepted_window as f64 / window as f64;
                let gain = 1.0 / (n_adapt as f64).sqrt().max(1.0);
                let mut new_log_scale = log_scale + 3.0 * gain * (rate - opts.target_acceptance);
                let cov = moments.covariance();
                let trace: f64 = (0..dj).map(|i| cov[i][i]).sum();
                if trace > 0.0 && trace.is_finite() {
                    let reg = 1e-10 * trace / dj as f64;
                    let cov_reg: Vec<Vec<f64>> = cov
                        .iter()
                        .enumerate()
                        .map(|(i, r)| {
                            r.iter()
                                .enumerate()
                                .map(|(j, v)| if i == j { v + reg } else { *v })
                                .collect()
                        })
                        .collect();
                    if let Ok((l, _)) = cholesky_with_jitter(&cov_reg) {
                        chol = l;
                        if !covariance_adapted {
                            // Switch from the user scale to the optimal
                            // random-walk scale for the learned covariance.
                            new_log_scale += base_scale.ln();
                            covariance_adapted = true;
                        }
                    }
                }
                log_scale = new_log_scale.clamp(-30.0, 10.0);
                accepted_window = 0;
                window = 0;
                for &c in blocks.iter().flatten() {
                    if cond_tried[c] > 0 {
                        let rate = cond_accepted[c] as f64 / cond_tried[c] as f64;
                        cond_log_step[c] = (cond_log_step[c]
                            + 3.0 * gain * (rate - CONDITIONAL_ACCEPTANCE))
                            .clamp(-30.0, 10.0);
                    }
                    cond_accepted[c] = 0;
                    cond_tried[c] = 0;
                }
            }
        } else {
            accepted_post += accept as usize;
            if (step - burn_in).is_multiple_of(thin) {
                kept_values.extend(target.to_natural(&z));
                kept_lp.push(lp);
            }
        }
    }

    let nkept = kept_lp.len();
    let samples = SampleMatrix::new(names, nkept, kept_values, seed)?;
    Ok(Chain {
        samples,
        log_posterior: kept_lp,
        acceptance_rate: if post > 0 {
            accepted_post as f64 / post as f64
        } else {
            0.0
        },
        burn_in_acceptance_rate: if burn_in > 0 {
            accepted_burn as f64 / burn_in as f64
        } else {
            0.0
        },
        burn_in,
        thin,
        steps,
    })
}

/// Replaces the conditional (last) column of every hierarchical block by a
/// fresh draw from `π(γ | φ)` at that row's hyperparameters. This turns a
/// sample of hyperparameters into a pushforward sample of MFU parameters.
pub fn redraw_conditionals(
    samples: &SampleMatrix,
    priors: &[ParamSpec],
    seed: u64,
) -> Result<SampleMatrix> {
    let mut out = samples.clone();
    let d = out.ncols();
    let mut offset = 0;
    let mut blocks = Vec::new();
    for p in priors {
        let w = p.names.len();
        if let Density::Hierarchical { family, .. } = &p.density {
            blocks.push((
                offset,
                w,
                family.clone(),
                derive_named(seed, &p.names.join(",")),
            ));
        }
        offset += w;
    }
    if offset != d {
        return Err(Error::Configuration(format!(
            "prior blocks cover {offset} columns but the sample has {d}"
        )));
    }
    let n = out.nrows();
    let mut values = out.values().to_vec();
    values
        .par_chunks_exact_mut(d)
        .enumerate()
        .try_for_each(|(i, row)| {
            for (off, w, family, bseed) in &blocks {
                let mut rng = row_rng(*bseed, i as u64);
                row[off + w - 1] = family.draw(&row[*off..off + w - 1], &mut rng)?;
            }
            Ok::<(), Error>(())
        })?;
    out = SampleMatrix::new(out.names().to_vec(), n, values, seed)?;
    Ok(out)
}

/// Per-location predictive band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveBands {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub draws: usize,
}

impl PredictiveBands {
    /// Fraction of `data` lying inside the band at the same locations.
    pub fn coverage(&self, data: &[f64]) -> f64 {
        let inside = data
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .filter(|(d, (lo, hi))| *d >= lo && *d <= hi)
            .count();
        inside as f64 / data.len() as f64
    }
}

/// Minimum number of predictive draws per location.
pub const MIN_PREDICTIVE_DRAWS: usize = 1000;

/// Posterior (or prior) predictive bands.
///
/// Each draw evaluates `model` at a parameter row (rows are cycled when there
/// are fewer than [`MIN_PREDICTIVE_DRAWS`]) and perturbs every output with an
/// independent noise draw; the band is the pair of empirical quantiles
/// `(p_lo, p_hi)` at each location.
pub fn predictive_bands<F>(
    source: &SampleMatrix,
    model: F,
    noise: Option<NoiseModel>,
    probs: (f64, f64),
    seed: u64,
) -> Result<PredictiveBands>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if source.nrows() == 0 {
        return Err(Error::Argument("empty sample source".into()));
    }
    if let Some(nm) = noise {
        nm.validate()?;
    }
    let draws = source.nrows().max(MIN_PREDICTIVE_DRAWS);
    let outputs: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut m = model(source.row(i % source.nrows()))?;
            if let Some(nm) = noise {
                let mut rng = row_rng(seed, i as u64);
                for v in m.iter_mut() {
                    *v = nm.perturb(*v, rng.sample(StandardNormal));
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let nx = outputs[0].len();
    if outputs.iter().any(|o| o.len() != nx) {
        return Err(Error::Argument(
            "model returned outputs of varying length".into(),
        ));
    }
    let mut lower = Vec::with_capacity(nx);
    let mut upper = Vec::with_capacity(nx);
    let mut mean = Vec::with_capacity(nx);
    let mut variance = Vec::with_capacity(nx);
    for j in 0..nx {
        let mut col: Vec<f64> = outputs.iter().map(|o| o[j]).collect();
        mean.push(stats::mean(&col));
        variance.push(stats::variance(&col));
        col.sort_by(f64::total_cmp);
        lower.push(stats::quantile_sorted(&col, probs.0));
        upper.push(stats::quantile_sorted(&col, probs.1));
    }
    Ok(PredictiveBands {
        lower,
        upper,
        mean,
        variance,
        draws,
    })
}

/// Summary of a pushforward sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushforwardSummary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    /// `(probability, quantile)` pairs.
    pub quantiles: Vec<(f64, f64)>,
    /// Fraction of strictly negative values.
    pub negative_fraction: f64,
}

impl PushforwardSummary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("empty pushforward sample".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantiles = [0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975]
            .iter()
            .map(|&p| (p, stats::quantile_sorted(&sorted, p)))
            .collect();
        Ok(Self {
            n: values.len(),
            mean: stats::mean(values),
            variance: if values.len() > 1 {
                stats::variance(values)
            } else {
                0.0
            },
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            quantiles,
            negative_fraction: values.iter().filter(|v| **v < 0.0).count() as f64
                / values.len() as f64,
        })
    }
}

/// Evaluates `qoi` on every row (in parallel, order preserved).
pub fn pushforward<F>(source: &SampleMatrix, qoi: F) -> Result<(Vec<f64>, PushforwardSummary)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if source.nrows() == 0 {
        return Err(Error::Argument("empty sample source".into()));
    }
    let values: Vec<f64> = (0..source.nrows())
        .into_par_iter()
        .map(|i| qoi(source.row(i)))
        .collect::<Result<_>>()?;
    let summary = PushforwardSummary::of(&values)?;
    Ok((values, summary))
}

/// Marginal equal-tailed credible interval of one column.
pub fn credible_interval(samples: &SampleMatrix, column: usize, mass: f64) -> (f64, f64) {
    let mut col = samples.column(column);
    col.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - mass);
    (
        stats::quantile_sorted(&col, tail),
        stats::quantile_sorted(&col, 1.0 - tail),
    )
}

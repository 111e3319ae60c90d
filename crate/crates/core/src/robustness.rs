//! Robustness of grouped Sobol' indices to the choice of MFU representation.
//!
//! Two models `f(X_v, X_u)` and `q(X_v, X̃_ũ)` share the non-MFU parameters
//! `X_v` but use different MFU representations. After rescaling both by the
//! standard deviation of `f`, the index differences of the MFU group obey
//!
//! ```text
//! |S_u - S_ũ| ≤ ε₁ + 2ε₂,     |T_u - T_ũ| ≤ ε₁ + ε₂,
//! ε₁ = E_{X_v} |Var_{X_u}(f | X_v) - Var_{X̃_ũ}(q | X_v)|,
//! ε₂ = |Var(f) - Var(q)|.
//! ```
//!
//! This module estimates `ε₁` and `ε₂` with an outer Monte Carlo loop over
//! `X_v` and inner conditional moments computed by tensor Gauss quadrature
//! (MFU dimension ≤ 2) or Monte Carlo, and checks the bounds replicate by
//! replicate.

use crate::gsa::{ParamSpec, SobolEstimate};
use crate::quadrature::{rule_for_density, tensor_rule};
use crate::rng::derive_named;
use crate::sampling::{sample, SampleMatrix};
use crate::stats;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default Gauss order per MFU dimension.
pub const DEFAULT_QUADRATURE_ORDER: usize = 32;
/// Largest MFU dimension integrated by tensor quadrature.
pub const MAX_QUADRATURE_DIM: usize = 2;

/// Nodes and weights used for inner conditional moments.
#[derive(Debug, Clone, PartialEq)]
pub enum InnerRule {
    /// Tensor Gauss rule with probability weights.
    Quadrature {
        nodes: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    /// Equally weighted Monte Carlo draws.
    MonteCarlo { draws: Vec<Vec<f64>> },
}

impl InnerRule {
    /// Quadrature when the MFU block is at most two independent univariate
    /// densities with known rules; Monte Carlo with `inner_n` draws otherwise.
    pub fn for_params(
        params: &[ParamSpec],
        order: usize,
        inner_n: usize,
        seed: u64,
    ) -> Result<Self> {
        let dim: usize = params.iter().map(|p| p.density.dim()).sum();
        if dim == 0 {
            return Err(Error::Argument("empty MFU block".into()));
        }
        if dim <= MAX_QUADRATURE_DIM && params.iter().all(|p| p.density.is_univariate()) {
            let rules: Option<Vec<_>> = params
                .iter()
                .map(|p| rule_for_density(&p.density, order))
                .collect();
            if let Some(rules) = rules {
                let (nodes, weights) = tensor_rule(&rules);
                return Ok(InnerRule::Quadrature { nodes, weights });
            }
        }
        Self::monte_carlo(params, inner_n, seed)
    }

    /// Monte Carlo rule with `inner_n` joint draws of the blocks.
    pub fn monte_carlo(params: &[ParamSpec], inner_n: usize, seed: u64) -> Result<Self> {
        if inner_n < 2 {
            return Err(Error::Argument(
                "inner Monte Carlo needs at least 2 draws".into(),
            ));
        }
        let blocks: Vec<SampleMatrix> = params
            .iter()
            .map(|p| sample(&p.density, inner_n, derive_named(seed, &p.names.join(","))))
            .collect::<Result<_>>()?;
        let draws = (0..inner_n)
            .map(|i| {
                blocks
                    .iter()
                    .flat_map(|b| b.row(i).iter().copied())
                    .collect()
            })
            .collect();
        Ok(InnerRule::MonteCarlo { draws })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        match self {
            InnerRule::Quadrature { nodes, .. } => nodes,
            InnerRule::MonteCarlo { draws } => draws,
        }
    }

    pub fn len(&self) -> usize {
        self.points().len()
    }

    pub fn is_empty(&self) -> bool {
        self.points().is_empty()
    }

    /// Mean and variance of `values` (one per point) under the rule.
    pub fn moments(&self, values: &[f64]) -> (f64, f64) {
        match self {
            InnerRule::Quadrature { weights, .. } => {
                let m: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
                let v: f64 = values
                    .iter()
                    .zip(weights)
                    .map(|(v, w)| w * (v - m) * (v - m))
                    .sum();
                (m, v.max(0.0))
            }
            InnerRule::MonteCarlo { .. } => (stats::mean(values), stats::variance(values)),
        }
    }
}

/// A model whose output can be averaged over its MFU block for fixed shared
/// parameters.
pub trait ConditionalMoments: Sync {
    /// Mean and variance of the output over the MFU block given `x_v`.
    fn conditional_moments(&self, x_v: &[f64]) -> Result<(f64, f64)>;
}

/// Pointwise model `g(x_v, x_u)` integrated with an [`InnerRule`].
pub struct RuleModel<F> {
    pub rule: InnerRule,
    pub model: F,
}

impl<F> ConditionalMoments for RuleModel<F>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    fn conditional_moments(&self, x_v: &[f64]) -> Result<(f64, f64)> {
        let values: Vec<f64> = self
            .rule
            .points()
            .iter()
            .map(|xu| (self.model)(x_v, xu))
            .collect::<Result<_>>()?;
        Ok(self.rule.moments(&values))
    }
}

/// Estimated discrepancies, in units where `Var(f) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsEstimate {
    pub eps1: f64,
    pub eps2: f64,
    /// Unscaled variance of `f` (law of total variance).
    pub var_f: f64,
    /// Unscaled variance of `q`.
    pub var_q: f64,
    /// Variance of the rescaled `q`, i.e. `var_q / var_f`.
    pub var_q_rescaled: f64,
    pub outer_n: usize,
}

/// Relative variance below which `f` cannot be rescaled.
const RESCALE_REL_TOL: f64 = 1e-14;

/// Estimates `ε₁` and `ε₂` from conditional moments of both models at the
/// same outer draws of `X_v`. Both models are rescaled by the standard
/// deviation of `f` so that `Var(f) = 1`.
pub fn estimate_eps<F, Q>(outer: &SampleMatrix, f: &F, q: &Q) -> Result<EpsEstimate>
where
    F: ConditionalMoments + ?Sized,
    Q: ConditionalMoments + ?Sized,
{
    let n = outer.nrows();
    if n < 2 {
        return Err(Error::Argument("need at least 2 outer draws".into()));
    }
    // ((mean_f, var_f), (mean_q, var_q)) per outer point.
    type MomentPair = ((f64, f64), (f64, f64));
    let moments: Vec<MomentPair> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xv = outer.row(i);
            Ok((f.conditional_moments(xv)?, q.conditional_moments(xv)?))
        })
        .collect::<Result<_>>()?;
    let total = |pick: &dyn Fn(&MomentPair) -> (f64, f64)| {
        let means: Vec<f64> = moments.iter().map(|m| pick(m).0).collect();
        let vars: Vec<f64> = moments.iter().map(|m| pick(m).1).collect();
        stats::mean(&vars) + stats::variance(&means)
    };
    let var_f = total(&|m| m.0);
    let var_q = total(&|m| m.1);
    let scale2 = var_f;
    let second_moment: f64 = moments
        .iter()
        .map(|m| m.0 .0 * m.0 .0 + m.0 .1)
        .sum::<f64>()
        / n as f64;
    if !(var_f > RESCALE_REL_TOL * second_moment.max(f64::MIN_POSITIVE)) {
        return Err(Error::Rescaling(format!(
            "variance of f is degenerate ({var_f:e})"
        )));
    }
    let eps1 = moments.iter().map(|m| (m.0 .1 - m.1 .1).abs()).sum::<f64>() / n as f64 / scale2;
    let var_q_rescaled = var_q / scale2;
    Ok(EpsEstimate {
        eps1,
        eps2: (1.0 - var_q_rescaled).abs(),
        var_f,
        var_q,
        var_q_rescaled,
        outer_n: n,
    })
}

/// Bound check for one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateCheck {
    pub replicate: usize,
    pub s_f: f64,
    pub s_q: f64,
    pub t_f: f64,
    pub t_q: f64,
    pub delta_s: f64,
    pub delta_t: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// `ε₁ + 2ε₂`.
    pub bound_main: f64,
    /// `ε₁ + ε₂`.
    pub bound_total: f64,
    pub tol_main: f64,
    pub tol_total: f64,
    /// Variance of `q` divided by the variance of `f` in this replicate.
    pub var_q_rescaled: f64,
    pub main_ok: bool,
    pub total_ok: bool,
}

/// Summary of the bound verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub group: String,
    pub replicates: Vec<ReplicateCheck>,
    pub mean_eps1: f64,
    pub sd_eps1: f64,
    pub mean_eps2: f64,
    pub mean_bound_main: f64,
    pub mean_bound_total: f64,
    pub mean_delta_s: f64,
    pub mean_delta_t: f64,
    pub mean_var_q_rescaled: f64,
    pub sd_var_q_rescaled: f64,
    pub all_ok: bool,
    /// Replicates violating a bound beyond tolerance.
    pub violations: Vec<usize>,
}

impl RobustnessReport {
    /// Per-replicate CSV of bounds and observed differences.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "replicate,S_f,S_q,T_f,T_q,delta_S,delta_T,eps1,eps2,bound_main,bound_total,tol_main,tol_total,var_q_rescaled,main_ok,total_ok\n",
        );
        for r in &self.replicates {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}\n",
                r.replicate,
                r.s_f,
                r.s_q,
                r.t_f,
                r.t_q,
                r.delta_s,
                r.delta_t,
                r.eps1,
                r.eps2,
                r.bound_main,
                r.bound_total,
                r.tol_main,
                r.tol_total,
                r.var_q_rescaled,
                r.main_ok,
                r.total_ok
            ));
        }
        out
    }
}

/// Tolerance multiplier on the replicate standard deviation.
pub const TOLERANCE_SDS: f64 = 3.0;

/// Checks `|ΔS| < ε₁ + 2ε₂ + tol` and `|ΔT| < ε₁ + ε₂ + tol` for every
/// replicate of `group`, where `tol` is three times the larger replicate
/// standard deviation of the relevant index across the two models.
///
/// `f_reps[r]` / `q_reps[r]` are the per-group estimates of replicate `r`,
/// `eps[r]` its discrepancy estimate (a single entry is broadcast).
pub fn verify_bounds(
    group: &str,
    f_reps: &[Vec<SobolEstimate>],
    q_reps: &[Vec<SobolEstimate>],
    eps: &[EpsEstimate],
) -> Result<RobustnessReport> {
    let r = f_reps.len();
    if r == 0 || q_reps.len() != r {
        return Err(Error::Argument(
            "need matching, non-empty replicate lists".into(),
        ));
    }
    if eps.len() != 1 && eps.len() != r {
        return Err(Error::Argument(
            "need one eps estimate or one per replicate".into(),
        ));
    }
    let pick = |reps: &[Vec<SobolEstimate>]| -> Result<Vec<SobolEstimate>> {
        reps.iter()
            .map(|ests| {
                ests.iter()
                    .find(|e| e.group == group)
                    .cloned()
                    .ok_or_else(|| {
                        Error::Argument(format!("group {group:?} missing from estimates"))
                    })
            })
            .collect()
    };
    let f = pick(f_reps)?;
    let q = pick(q_reps)?;
    let sd = |v: Vec<f64>| if v.len() > 1 { stats::std_dev(&v) } else { 0.0 };
    let tol_main = TOLERANCE_SDS
        * sd(f.iter().map(|e| e.s_main).collect()).max(sd(q.iter().map(|e| e.s_main).collect()));
    let tol_total = TOLERANCE_SDS
        * sd(f.iter().map(|e| e.t_total).collect()).max(sd(q.iter().map(|e| e.t_total).collect()));
    let mut checks = Vec::with_capacity(r);
    for i in 0..r {
        let e = if eps.len() == 1 { &eps[0] } else { &eps[i] };
        let delta_s = (f[i].s_main - q[i].s_main).abs();
        let delta_t = (f[i].t_total - q[i].t_total).abs();
        let bound_main = e.eps1 + 2.0 * e.eps2;
        let bound_total = e.eps1 + e.eps2;
        checks.push(ReplicateCheck {
            replicate: i,
            s_f: f[i].s_main,
            s_q: q[i].s_main,
            t_f: f[i].t_total,
            t_q: q[i].t_total,
            delta_s,
            delta_t,
            eps1: e.eps1,
            eps2: e.eps2,
            bound_main,
            bound_total,
            tol_main,
            tol_total,
            var_q_rescaled: q[i].total_variance / f[i].total_variance,
            main_ok: delta_s <= bound_main + tol_main,
            total_ok: delta_t <= bound_total + tol_total,
        });
    }
    let col = |g: &dyn Fn(&ReplicateCheck) -> f64| checks.iter().map(g).collect::<Vec<f64>>();
    let violations: Vec<usize> = checks
        .iter()
        .filter(|c| !(c.main_ok && c.total_ok))
        .map(|c| c.replicate)
        .collect();
    let eps1s = col(&|c| c.eps1);
    let vq = col(&|c| c.var_q_rescaled);
    Ok(RobustnessReport {
        group: group.to_string(),
        mean_eps1: stats::mean(&eps1s),
        sd_eps1: sd(eps1s),
        mean_eps2: stats::mean(&col(&|c| c.eps2)),
        mean_bound_main: stats::mean(&col(&|c| c.bound_main)),
        mean_bound_total: stats::mean(&col(&|c| c.bound_total)),
        mean_delta_s: stats::mean(&col(&|c| c.delta_s)),
        mean_delta_t: stats::mean(&col(&|c| c.delta_t)),
        mean_var_q_rescaled: stats::mean(&vq),
        sd_var_q_rescaled: sd(vq),
        all_ok: violations.is_empty(),
        violations,
        replicates: checks,
    })
}

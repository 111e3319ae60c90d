//! Helpers shared by the experiment pipelines.

use crate::error::{CliError, Result};
use crate::plot::{columns_csv, histogram, histogram_bars, histogram_csv, Element, Figure};
use mfugsa_core::bayes::{adaptive_metropolis, AmOptions, Chain, Target};
use mfugsa_core::gsa::{GroupedParameterSpace, ParamSpec, SobolEstimate};
use mfugsa_core::rng::derive_named;
use mfugsa_core::sampling::{ConditionalFamily, Density, SampleMatrix};
use serde::Serialize;
use std::fmt::Write as _;

/// Flattened parameter names of a list of blocks.
pub fn names_of(priors: &[ParamSpec]) -> Vec<String> {
    priors.iter().flat_map(|p| p.names.iter().cloned()).collect()
}

/// Column of `name` in `names`.
pub fn column(names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| CliError::config("experiment", format!("missing parameter {name}")))
}

/// Columns of several names.
pub fn columns(names: &[String], wanted: &[&str]) -> Result<Vec<usize>> {
    wanted.iter().map(|w| column(names, w)).collect()
}

/// A representative point of a density: the mean where it is cheap and
/// well defined, the median of log-normals, the mode of triangulars.
fn center(d: &Density) -> Vec<f64> {
    match d {
        Density::Uniform { lo, hi } => vec![0.5 * (lo + hi)],
        Density::Normal { mean, .. } => vec![*mean],
        Density::LogNormal { mu, .. } => vec![mu.exp()],
        Density::Triangular { mode, .. } => vec![*mode],
        Density::MultivariateNormal { mean, .. } => mean.clone(),
        Density::Hierarchical { family, hyper } => {
            let mut h: Vec<f64> = hyper.iter().flat_map(center).collect();
            let g = match family {
                ConditionalFamily::Normal => h[0],
                ConditionalFamily::LogNormal => h[0].exp(),
                ConditionalFamily::ShiftedLogNormal { shift } => shift + h[0].exp(),
                ConditionalFamily::Triangular { .. } => h[0],
            };
            h.push(g);
            h
        }
        Density::Empirical { samples } => {
            let n = samples.len().max(1) as f64;
            let d = samples.first().map_or(0, Vec::len);
            (0..d)
                .map(|j| samples.iter().map(|r| r[j]).sum::<f64>() / n)
                .collect()
        }
        Density::Kde { samples, .. } => {
            vec![samples.iter().sum::<f64>() / samples.len().max(1) as f64]
        }
    }
}

/// Representative starting point of a list of prior blocks.
pub fn prior_center(priors: &[ParamSpec]) -> Vec<f64> {
    priors.iter().flat_map(|p| center(&p.density)).collect()
}

/// Mean of a univariate density (used for "physical parameters at their
/// mean values").
pub fn density_mean(d: &Density) -> Result<f64> {
    Ok(match d {
        Density::Uniform { lo, hi } => 0.5 * (lo + hi),
        Density::Normal { mean, .. } => *mean,
        Density::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
        Density::Triangular { lo, hi, mode } => (lo + hi + mode) / 3.0,
        Density::Kde { samples, .. } => samples.iter().sum::<f64>() / samples.len().max(1) as f64,
        other => {
            return Err(CliError::config(
                "experiment",
                format!("the mean of a {other:?} density is not supported here"),
            ))
        }
    })
}

/// Means of named scalar parameters.
pub fn means_of(priors: &[ParamSpec], wanted: &[&str]) -> Result<Vec<f64>> {
    wanted
        .iter()
        .map(|w| {
            let p = priors
                .iter()
                .find(|p| p.names.len() == 1 && p.names[0] == *w)
                .ok_or_else(|| {
                    CliError::config("experiment", format!("{w} must be a scalar parameter"))
                })?;
            density_mean(&p.density)
        })
        .collect()
}

/// `n` joint draws of all blocks.
pub fn sample_priors(priors: &[ParamSpec], n: usize, seed: u64) -> Result<SampleMatrix> {
    let names = names_of(priors);
    let all: Vec<&str> = names.iter().map(String::as_str).collect();
    let space = GroupedParameterSpace::independent(priors.to_vec(), &[("all", all)])?;
    Ok(space.sample(n, seed)?)
}

/// Runs the sampler from the prior center, or — if the posterior vanishes
/// there — from the first of up to 10⁴ seeded prior draws where it does not.
pub fn run_chain<T: Target + ?Sized>(
    target: &T,
    priors: &[ParamSpec],
    steps: usize,
    opts: &AmOptions,
    seed: u64,
) -> Result<(Chain, Vec<f64>)> {
    let mut init = prior_center(priors);
    let finite = |x: &[f64]| target.ln_density(&target.to_sampling(x)).is_finite();
    if !finite(&init) {
        let draws = sample_priors(priors, 10_000, derive_named(seed, "initial-point"))?;
        init = draws
            .rows()
            .find(|r| finite(r))
            .map(<[f64]>::to_vec)
            .ok_or(mfugsa_core::Error::InvalidStart)?;
    }
    let chain = adaptive_metropolis(target, &init, steps, derive_named(seed, "chain"), opts)?;
    Ok((chain, init))
}

/// Histogram plot of one or more samples on shared bins, with optional
/// vertical markers. Returns `(csv, figure)`.
pub fn histogram_plot(
    title: &str,
    x_label: &str,
    series: &[(&str, &[f64])],
    bins: usize,
    markers: &[(&str, f64)],
) -> (String, Figure) {
    let pooled: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let (edges, _) = histogram(&pooled, bins);
    let lo = edges[0];
    let hi = edges[edges.len() - 1];
    let width = (hi - lo) / bins.max(1) as f64;
    let mut fig = Figure::new(title, x_label, "density");
    let mut csv = String::from("series,bin_lo,bin_hi,count,density\n");
    for (name, values) in series {
        let mut counts = vec![0usize; edges.len() - 1];
        for v in values.iter().filter(|v| v.is_finite()) {
            let b = (((v - lo) / width).floor().max(0.0) as usize).min(counts.len() - 1);
            counts[b] += 1;
        }
        for line in histogram_csv(&edges, &counts).lines().skip(1) {
            let _ = writeln!(csv, "{name},{line}");
        }
        fig = fig.with(histogram_bars(name, &edges, &counts));
    }
    for (label, x) in markers {
        let _ = writeln!(csv, "marker:{label},{x:e},{x:e},0,0");
        fig = fig.with(Element::VLine {
            label: (*label).into(),
            x: *x,
        });
    }
    (csv, fig)
}

/// Row-major matrix CSV with row and column labels; missing cells empty.
pub fn matrix_csv(rows: &[String], cols: &[String], m: &[Vec<Option<f64>>]) -> String {
    let mut out = String::from("row");
    for c in cols {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (r, vals) in rows.iter().zip(m) {
        out.push_str(r);
        for v in vals {
            out.push(',');
            if let Some(v) = v {
                let _ = write!(out, "{v:e}");
            }
        }
        out.push('\n');
    }
    out
}

/// Grouped bar chart of Sobol' estimates (main and total, with 2-sd error
/// bars) for one or more labelled analyses.
pub fn sobol_bars(title: &str, analyses: &[(&str, &[SobolEstimate])]) -> (String, Figure) {
    let mut csv = String::from("analysis,group,index,value,sd\n");
    let groups: Vec<String> = analyses
        .first()
        .map(|(_, e)| e.iter().map(|e| e.group.clone()).collect())
        .unwrap_or_default();
    let mut fig = Figure::new(title, "group", "index");
    fig.x_categories = Some(groups.clone());
    let slots = 2 * analyses.len();
    let w = 0.8 / slots as f64;
    for (a, (label, ests)) in analyses.iter().enumerate() {
        for (which, pick) in [("S", 0usize), ("T", 1usize)] {
            let slot = 2 * a + pick;
            let mut left = Vec::new();
            let mut right = Vec::new();
            let mut height = Vec::new();
            let mut xs = Vec::new();
            let mut errs = Vec::new();
            for (g, e) in ests.iter().enumerate() {
                let (v, sd) = if pick == 0 {
                    (e.s_main, e.s_main_sd())
                } else {
                    (e.t_total, e.t_total_sd())
                };
                let x0 = g as f64 - 0.4 + w * slot as f64;
                left.push(x0);
                right.push(x0 + w);
                height.push(v);
                xs.push(x0 + 0.5 * w);
                errs.push(2.0 * sd);
                let _ = writeln!(csv, "{label},{},{which},{v:e},{sd:e}", e.group);
            }
            fig = fig
                .with(Element::Bars {
                    label: format!("{which} ({label})"),
                    left,
                    right,
                    height: height.clone(),
                })
                .with(Element::ErrorBars {
                    x: xs,
                    y: height,
                    err: errs,
                });
        }
    }
    (csv, fig)
}

/// Bar chart of total-effect numerators for labelled analyses.
pub fn numerator_bars(title: &str, analyses: &[(&str, &[SobolEstimate])]) -> (String, Figure) {
    let mut csv = String::from("analysis,group,total_numerator,total_numerator_sd,main_numerator\n");
    let groups: Vec<String> = analyses
        .first()
        .map(|(_, e)| e.iter().map(|e| e.group.clone()).collect())
        .unwrap_or_default();
    let mut fig = Figure::new(title, "group", "total-effect numerator");
    fig.x_categories = Some(groups);
    let w = 0.8 / analyses.len().max(1) as f64;
    for (a, (label, ests)) in analyses.iter().enumerate() {
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut height = Vec::new();
        for (g, e) in ests.iter().enumerate() {
            let x0 = g as f64 - 0.4 + w * a as f64;
            left.push(x0);
            right.push(x0 + w);
            height.push(e.total_numerator);
            let sd = e.replicates.map_or(0.0, |r| r.total_numerator.sd);
            let _ = writeln!(
                csv,
                "{label},{},{:e},{sd:e},{:e}",
                e.group, e.total_numerator, e.main_numerator
            );
        }
        fig = fig.with(Element::Bars {
            label: (*label).into(),
            left,
            right,
            height,
        });
    }
    (csv, fig)
}

/// Serializable digest of a Sobol' estimate.
#[derive(Debug, Clone, Serialize)]
pub struct IndexDigest {
    pub group: String,
    pub s_main: f64,
    pub s_main_sd: f64,
    pub t_total: f64,
    pub t_total_sd: f64,
    pub main_numerator: f64,
    pub total_numerator: f64,
    pub total_variance: f64,
}

pub fn digest(ests: &[SobolEstimate]) -> Vec<IndexDigest> {
    ests.iter()
        .map(|e| IndexDigest {
            group: e.group.clone(),
            s_main: e.s_main,
            s_main_sd: e.s_main_sd(),
            t_total: e.t_total,
            t_total_sd: e.t_total_sd(),
            main_numerator: e.main_numerator,
            total_numerator: e.total_numerator,
            total_variance: e.total_variance,
        })
        .collect()
}

/// Groups sorted by decreasing total index.
pub fn ranking(ests: &[SobolEstimate]) -> Vec<IndexDigest> {
    let mut d = digest(ests);
    d.sort_by(|a, b| b.t_total.total_cmp(&a.t_total).then(a.group.cmp(&b.group)));
    d
}

/// Columns of a sample matrix as CSV.
pub fn samples_csv(samples: &SampleMatrix) -> String {
    let cols: Vec<Vec<f64>> = (0..samples.ncols()).map(|j| samples.column(j)).collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    let header: Vec<&str> = samples.names().iter().map(String::as_str).collect();
    columns_csv(&header, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_of_hierarchical_blocks() {
        let d = Density::Hierarchical {
            family: ConditionalFamily::ShiftedLogNormal { shift: 1.0 },
            hyper: vec![
                Density::Normal { mean: 0.0, sd: 0.5 },
                Density::Uniform { lo: 0.0, hi: 0.1 },
            ],
        };
        assert_eq!(center(&d), vec![0.0, 0.05, 2.0]);
        assert_eq!(
            density_mean(&Density::Triangular {
                lo: 1.0,
                hi: 2.0,
                mode: 1.5
            })
            .unwrap(),
            1.5
        );
    }

    #[test]
    fn histogram_plot_shares_bins() {
        let a = [0.0, 1.0, 2.0];
        let b = [1.0, 3.0];
        let (csv, fig) = histogram_plot("h", "x", &[("a", &a), ("b", &b)], 3, &[("m", 1.5)]);
        assert_eq!(csv.lines().count(), 1 + 3 + 3 + 1);
        assert_eq!(fig.elements.len(), 3);
    }
}

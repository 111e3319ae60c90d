//! Polynomial toy problem: the inadequate linear model and the
//! hierarchical enriched model, with prior and posterior sensitivity
//! analyses of the enriched model across the study interval.

use super::common::{
    column, digest, histogram_plot, matrix_csv, names_of, numerator_bars, run_chain,
    sample_priors,
};
use crate::config::{PolyHierarchicalConfig, PolyInadequateConfig};
use crate::error::Result;
use crate::output::RunOutput;
use crate::plot::{columns_csv, Element, Figure};
use mfugsa_core::bayes::{
    credible_interval, make_log_posterior, predictive_bands, redraw_conditionals, NoiseModel,
    PredictiveBands,
};
use mfugsa_core::gsa::{
    correlation_matrix, replicate_indices, GroupedParameterSpace, ParamSpec, SobolEstimate,
};
use mfugsa_core::polyexample::{evaluate_at, generate_data, linspace, PolyModel, PolyParams};
use mfugsa_core::rng::derive_named;
use mfugsa_core::sampling::SampleMatrix;
use mfugsa_core::stats;
use serde_json::json;

/// Value of the data-generating polynomial at `x = 2`.
pub const TRUTH_AT_2: f64 = 4.2;

/// Points at which bands are drawn.
const BAND_POINTS: usize = 101;

/// Evaluates a polynomial model at a parameter row given the columns of
/// `c0`, `c1` and (for the enriched model) `c2`, `alpha`.
#[derive(Debug, Clone, Copy)]
struct PolyEval {
    c0: usize,
    c1: usize,
    mfu: Option<(usize, usize)>,
}

impl PolyEval {
    fn new(names: &[String]) -> Result<Self> {
        let mfu = if names.iter().any(|n| n == "c2") {
            Some((column(names, "c2")?, column(names, "alpha")?))
        } else {
            None
        };
        Ok(Self {
            c0: column(names, "c0")?,
            c1: column(names, "c1")?,
            mfu,
        })
    }

    fn params(&self, row: &[f64]) -> (PolyModel, PolyParams) {
        match self.mfu {
            Some((c2, a)) => (
                PolyModel::Enriched,
                PolyParams::enriched(row[self.c0], row[self.c1], row[c2], row[a]),
            ),
            None => (PolyModel::Linear, PolyParams::linear(row[self.c0], row[self.c1])),
        }
    }

    fn at(&self, row: &[f64], x: f64) -> mfugsa_core::Result<f64> {
        let (m, p) = self.params(row);
        evaluate_at(m, &p, x)
    }

    fn on(&self, row: &[f64], xs: &[f64]) -> mfugsa_core::Result<Vec<f64>> {
        xs.iter().map(|&x| self.at(row, x)).collect()
    }
}

fn band_figure(
    title: &str,
    x: &[f64],
    bands: &[(&str, &PredictiveBands)],
    data: (&[f64], &[f64]),
) -> (String, Figure) {
    let mut csv = String::from("series,x,value\n");
    let mut push = |name: &str, xs: &[f64], ys: &[f64]| {
        for (a, b) in xs.iter().zip(ys) {
            csv.push_str(&format!("{name},{a:e},{b:e}\n"));
        }
    };
    let mut fig = Figure::new(title, "x", "y");
    for (label, b) in bands {
        push(&format!("{label}_lower"), x, &b.lower);
        push(&format!("{label}_upper"), x, &b.upper);
        push(&format!("{label}_mean"), x, &b.mean);
        fig = fig
            .with(Element::Band {
                label: format!("{label} 95% band"),
                x: x.to_vec(),
                lo: b.lower.clone(),
                hi: b.upper.clone(),
            })
            .with(Element::Line {
                label: format!("{label} mean"),
                x: x.to_vec(),
                y: b.mean.clone(),
            });
    }
    push("data", data.0, data.1);
    fig = fig.with(Element::Points {
        label: "data".into(),
        x: data.0.to_vec(),
        y: data.1.to_vec(),
    });
    (csv, fig)
}

/// Noisy predictive samples of a model at one location.
fn predictive_at(
    eval: &PolyEval,
    source: &SampleMatrix,
    x: f64,
    noise: NoiseModel,
    seed: u64,
) -> Result<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    source
        .rows()
        .enumerate()
        .map(|(i, row)| {
            let z: f64 = StandardNormal.sample(&mut mfugsa_core::rng::row_rng(seed, i as u64));
            Ok(noise.perturb(eval.at(row, x)?, z))
        })
        .collect()
}

/// Calibration of the inadequate linear model.
pub fn poly_inadequate(cfg: &PolyInadequateConfig, seed: u64) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let data = generate_data(cfg.n_data, cfg.noise_sd, derive_named(seed, "data"))?;
    let names = names_of(&cfg.priors);
    let eval = PolyEval::new(&names)?;
    let noise = NoiseModel::GaussianAdditive { sd: cfg.noise_sd };
    let xs = data.x.clone();
    let post = make_log_posterior(
        cfg.priors.clone(),
        data.d.clone(),
        noise,
        Box::new(move |row: &[f64]| eval.on(row, &xs).ok()),
    )?;
    let (chain, _) = run_chain(&post, &cfg.priors, cfg.steps, &cfg.sampler, seed)?;
    let probs = (cfg.band_probs[0], cfg.band_probs[1]);
    let prior = sample_priors(&cfg.priors, cfg.prior_draws, derive_named(seed, "prior"))?;

    let on_data = predictive_bands(
        &chain.samples,
        |r| eval.on(r, &data.x),
        Some(noise),
        probs,
        derive_named(seed, "band-data"),
    )?;
    let coverage = on_data.coverage(&data.d);
    let grid = linspace(0.0, 2.0, BAND_POINTS);
    let post_band = predictive_bands(
        &chain.samples,
        |r| eval.on(r, &grid),
        Some(noise),
        probs,
        derive_named(seed, "band-post"),
    )?;
    let prior_band = predictive_bands(
        &prior,
        |r| eval.on(r, &grid),
        Some(noise),
        probs,
        derive_named(seed, "band-prior"),
    )?;
    let last = BAND_POINTS - 1;
    let (lo2, hi2) = (post_band.lower[last], post_band.upper[last]);

    let (csv, fig) = band_figure(
        "Linear model: predictive bands",
        &grid,
        &[("prior", &prior_band), ("posterior", &post_band)],
        (&data.x, &data.d),
    );
    out.plot("predictive_bands", csv, &fig);

    let x2_post = predictive_at(&eval, &chain.samples, 2.0, noise, derive_named(seed, "x2"))?;
    let (csv, fig) = histogram_plot(
        "Linear model: posterior predictive at x = 2",
        "y(2)",
        &[("posterior predictive", &x2_post)],
        cfg.histogram_bins,
        &[("truth", TRUTH_AT_2), ("band lower", lo2), ("band upper", hi2)],
    );
    out.plot("x2_predictive", csv, &fig);
    posterior_histograms(&mut out, &chain.samples, &prior, &names, cfg.histogram_bins);
    out.file(
        "data.csv",
        columns_csv(&["x", "d"], &[&data.x, &data.d]),
    );
    out.file("chain.csv", chain.to_csv());

    out.set("acceptance_rate", chain.acceptance_rate);
    out.set("retained_samples", chain.samples.nrows());
    out.set("coverage", coverage);
    out.set("band_at_2", [lo2, hi2]);
    out.set("posterior_means", column_means(&chain.samples));
    out.check(
        "coverage_below_half",
        coverage < 0.5,
        coverage,
        "95% posterior predictive band covers < 50% of the calibration data",
    );
    out.check(
        "band_at_2_excludes_truth",
        !(lo2..=hi2).contains(&TRUTH_AT_2),
        TRUTH_AT_2 - hi2,
        "the 95% band at x = 2 excludes 4.2 (observed: 4.2 minus upper limit)",
    );
    Ok(out)
}

fn column_means(samples: &SampleMatrix) -> serde_json::Map<String, serde_json::Value> {
    samples
        .names()
        .iter()
        .enumerate()
        .map(|(j, n)| (n.clone(), json!(stats::mean(&samples.column(j)))))
        .collect()
}

fn posterior_histograms(
    out: &mut RunOutput,
    post: &SampleMatrix,
    prior: &SampleMatrix,
    names: &[String],
    bins: usize,
) {
    for (j, name) in names.iter().enumerate() {
        let p = post.column(j);
        let q = prior.column(j);
        let (csv, fig) = histogram_plot(
            &format!("{name}: prior and posterior"),
            name,
            &[("posterior", &p), ("prior", &q)],
            bins,
            &[],
        );
        out.plot(&format!("hist_{name}"), csv, &fig);
    }
}

/// Total-effect numerators of the model and MFU groups at each location,
/// for one sample source (independent prior or dependent posterior).
fn numerators_across_x(
    space: &GroupedParameterSpace,
    eval: &PolyEval,
    xs: &[f64],
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<SobolEstimate>>> {
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let model = |row: &[f64]| eval.at(row, x).unwrap_or(f64::NAN);
            Ok(replicate_indices(space, &model, n, replicates, mfugsa_core::rng::derive(seed, i as u64))?
                .summary)
        })
        .collect()
}

/// Calibration and sensitivity analysis of the hierarchical enriched model.
pub fn poly_hierarchical(cfg: &PolyHierarchicalConfig, seed: u64) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let data = generate_data(cfg.n_data, cfg.noise_sd, derive_named(seed, "data"))?;
    let priors: Vec<ParamSpec> = cfg
        .model_priors
        .iter()
        .chain(&cfg.mfu_priors)
        .cloned()
        .collect();
    let names = names_of(&priors);
    let model_names = names_of(&cfg.model_priors);
    let mfu_names = names_of(&cfg.mfu_priors);
    let eval = PolyEval::new(&names)?;
    let noise = NoiseModel::GaussianAdditive { sd: cfg.noise_sd };
    let xs = data.x.clone();
    let post = make_log_posterior(
        priors.clone(),
        data.d.clone(),
        noise,
        Box::new(move |row: &[f64]| eval.on(row, &xs).ok()),
    )?;
    let (chain, _) = run_chain(&post, &priors, cfg.steps, &cfg.sampler, seed)?;
    // Pushforward: hyperparameters from the posterior, MFU parameters
    // redrawn from their conditional priors.
    let pushed = redraw_conditionals(&chain.samples, &priors, derive_named(seed, "redraw"))?;
    let prior = sample_priors(&priors, cfg.prior_draws, derive_named(seed, "prior"))?;
    let probs = (cfg.band_probs[0], cfg.band_probs[1]);

    let on_data = predictive_bands(
        &pushed,
        |r| eval.on(r, &data.x),
        Some(noise),
        probs,
        derive_named(seed, "band-data"),
    )?;
    let coverage = on_data.coverage(&data.d);
    let grid = linspace(0.0, 2.0, BAND_POINTS);
    let post_band = predictive_bands(
        &pushed,
        |r| eval.on(r, &grid),
        Some(noise),
        probs,
        derive_named(seed, "band-post"),
    )?;
    let prior_band = predictive_bands(
        &prior,
        |r| eval.on(r, &grid),
        Some(noise),
        probs,
        derive_named(seed, "band-prior"),
    )?;
    let (csv, fig) = band_figure(
        "Enriched model: predictive bands",
        &grid,
        &[("prior", &prior_band), ("posterior", &post_band)],
        (&data.x, &data.d),
    );
    out.plot("predictive_bands", csv, &fig);
    let last = BAND_POINTS - 1;
    let var_post_2 = post_band.variance[last];
    let var_prior_2 = prior_band.variance[last];

    posterior_histograms(&mut out, &pushed, &prior, &names, cfg.histogram_bins);
    let ci: Vec<(String, (f64, f64))> = ["c0", "c1"]
        .iter()
        .map(|n| Ok((n.to_string(), credible_interval(&pushed, column(&names, n)?, 0.95))))
        .collect::<Result<_>>()?;

    // Posterior correlations: model parameters against MFU parameters.
    let all: Vec<usize> = (0..names.len()).collect();
    let corr = correlation_matrix(&chain.samples, &all, &all)?;
    out.file("posterior_correlation.csv", matrix_csv(&names, &names, &corr));

    // Sensitivity analyses across x.
    let model_refs: Vec<&str> = model_names.iter().map(String::as_str).collect();
    let mfu_refs: Vec<&str> = mfu_names.iter().map(String::as_str).collect();
    let groups = [("model", model_refs), ("mfu", mfu_refs)];
    let prior_space = GroupedParameterSpace::independent(priors.clone(), &groups)?;
    let post_space = GroupedParameterSpace::dependent(pushed.clone(), &groups)?;
    let mut gsa_x = cfg.gsa_x.clone();
    if !gsa_x.contains(&2.0) {
        gsa_x.push(2.0);
    }
    let prior_gsa = numerators_across_x(
        &prior_space,
        &eval,
        &gsa_x,
        cfg.prior_gsa_n,
        cfg.gsa_replicates,
        derive_named(seed, "prior-gsa"),
    )?;
    let post_gsa = numerators_across_x(
        &post_space,
        &eval,
        &gsa_x,
        cfg.posterior_gsa_n,
        cfg.gsa_replicates,
        derive_named(seed, "posterior-gsa"),
    )?;
    numerator_table(&mut out, &gsa_x, &prior_gsa, &post_gsa);
    let at2 = gsa_x.iter().position(|&x| x == 2.0).unwrap_or(gsa_x.len() - 1);
    let (csv, fig) = numerator_bars(
        "Enriched model: total-effect numerators at x = 2",
        &[("prior", &prior_gsa[at2]), ("posterior", &post_gsa[at2])],
    );
    out.plot("numerators_at_2", csv, &fig);
    let post_model = &post_gsa[at2][0];
    let post_mfu = &post_gsa[at2][1];

    let x2_post = predictive_at(&eval, &pushed, 2.0, noise, derive_named(seed, "x2"))?;
    let x2_prior = predictive_at(&eval, &prior, 2.0, noise, derive_named(seed, "x2-prior"))?;
    let (csv, fig) = histogram_plot(
        "Enriched model: predictive at x = 2",
        "y(2)",
        &[("posterior", &x2_post), ("prior", &x2_prior)],
        cfg.histogram_bins,
        &[("truth", TRUTH_AT_2)],
    );
    out.plot("x2_predictive", csv, &fig);
    out.file("data.csv", columns_csv(&["x", "d"], &[&data.x, &data.d]));
    out.file("chain.csv", chain.to_csv());

    out.set("acceptance_rate", chain.acceptance_rate);
    out.set("retained_samples", chain.samples.nrows());
    out.set("coverage", coverage);
    out.set("credible_intervals", &ci);
    out.set("posterior_means", column_means(&pushed));
    out.set("predictive_variance_at_2", json!({"prior": var_prior_2, "posterior": var_post_2}));
    out.set("posterior_indices_at_2", digest(&post_gsa[at2]));
    out.set("prior_indices_at_2", digest(&prior_gsa[at2]));

    out.check(
        "coverage_at_least_90pct",
        coverage >= 0.9,
        coverage,
        "95% posterior predictive band covers >= 90% of the calibration data",
    );
    for (name, (lo, hi)) in &ci {
        out.check(
            &format!("{name}_interval_contains_1"),
            (*lo..=*hi).contains(&1.0),
            if 1.0 < *lo { lo - 1.0 } else if 1.0 > *hi { 1.0 - hi } else { 0.0 },
            format!("95% credible interval of {name} contains 1 (observed: distance outside)"),
        );
    }
    out.check(
        "mfu_numerator_dominates_at_2",
        post_mfu.total_numerator >= post_model.total_numerator,
        post_mfu.total_numerator - post_model.total_numerator,
        "posterior MFU-group total numerator at x = 2 >= model-group numerator",
    );
    out.check(
        "variance_reduced_at_2",
        var_post_2 < var_prior_2,
        var_post_2 / var_prior_2,
        "posterior predictive variance at x = 2 < prior predictive variance (observed: ratio)",
    );
    Ok(out)
}

fn numerator_table(
    out: &mut RunOutput,
    xs: &[f64],
    prior: &[Vec<SobolEstimate>],
    post: &[Vec<SobolEstimate>],
) {
    let pick = |src: &[Vec<SobolEstimate>], g: usize| -> Vec<f64> {
        src.iter().map(|e| e[g].total_numerator).collect()
    };
    let sd = |src: &[Vec<SobolEstimate>], g: usize| -> Vec<f64> {
        src.iter()
            .map(|e| e[g].replicates.map_or(0.0, |r| r.total_numerator.sd))
            .collect()
    };
    let cols = [
        pick(prior, 0),
        sd(prior, 0),
        pick(prior, 1),
        sd(prior, 1),
        pick(post, 0),
        sd(post, 0),
        pick(post, 1),
        sd(post, 1),
    ];
    let mut refs: Vec<&[f64]> = vec![xs];
    refs.extend(cols.iter().map(Vec::as_slice));
    let csv = columns_csv(
        &[
            "x",
            "prior_model",
            "prior_model_sd",
            "prior_mfu",
            "prior_mfu_sd",
            "posterior_model",
            "posterior_model_sd",
            "posterior_mfu",
            "posterior_mfu_sd",
        ],
        &refs,
    );
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let sorted = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let x = sorted(xs);
    let fig = Figure::new("Total-effect numerators across x", "x", "total-effect numerator")
        .with(Element::Line { label: "prior: model".into(), x: x.clone(), y: sorted(&cols[0]) })
        .with(Element::Line { label: "prior: MFU".into(), x: x.clone(), y: sorted(&cols[2]) })
        .with(Element::Line { label: "posterior: model".into(), x: x.clone(), y: sorted(&cols[4]) })
        .with(Element::Line { label: "posterior: MFU".into(), x, y: sorted(&cols[6]) });
    out.plot("numerators_across_x", csv, &fig);
}

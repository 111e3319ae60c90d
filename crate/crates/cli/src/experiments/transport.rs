//! Transport experiments: forward propagation under the fractional
//! dispersion representation, data-consistent inversion for a general
//! linear operator, robustness of the MFU indices to the choice between the
//! two, and hierarchical calibration of a complex fractional operator.

use super::common::{
    columns, digest, histogram_plot, means_of, names_of, numerator_bars, run_chain,
    sample_priors, sobol_bars,
};
use crate::config::{
    DciConfig, DciSettings, TransportCalibrateConfig, TransportForwardConfig,
    TransportRobustnessConfig,
};
use crate::error::{CliError, Result};
use crate::output::RunOutput;
use crate::plot::{columns_csv, Element, Figure};
use mfugsa_core::bayes::{
    make_log_posterior, pushforward, redraw_conditionals, NoiseModel, PushforwardSummary,
};
use mfugsa_core::dci::{dci_update, QoiScale, eigenvalues_from_transformed, fit_initial_mvn, DciProblem};
use mfugsa_core::gsa::{
    build_pick_freeze, evaluate_plan, indices_from_outputs, replicate_indices, replicate_seed,
    summarize_replicates, GroupedParameterSpace, ParamSpec, SobolEstimate,
};
use mfugsa_core::rng::{derive_named, row_rng};
use mfugsa_core::robustness::{
    estimate_eps, verify_bounds, ConditionalMoments, EpsEstimate, InnerRule,
};
use mfugsa_core::sampling::{sample, Density, SampleMatrix};
use mfugsa_core::stats;
use mfugsa_core::transport::{DispersionOperator, PhysicalParams, PointBasis, Transport};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde_json::json;

const PHYSICAL: [&str; 3] = ["u_mean", "nu_p", "s"];
const FRACTIONAL: [&str; 2] = ["nu_m", "alpha"];
const COMPLEX_FRACTIONAL: [&str; 4] = ["nu_m_r", "alpha_r", "nu_m_i", "alpha_i"];

fn joined(a: &[ParamSpec], b: &[ParamSpec]) -> Vec<ParamSpec> {
    a.iter().chain(b).cloned().collect()
}

fn physical(row: &[f64], cols: &[usize]) -> PhysicalParams {
    PhysicalParams::new(row[cols[0]], row[cols[1]], row[cols[2]])
}

fn fractional(row: &[f64], cols: &[usize]) -> DispersionOperator {
    DispersionOperator::Fractional {
        nu_m: row[cols[0]],
        alpha: row[cols[1]],
    }
}

fn complex_fractional(row: &[f64], cols: &[usize]) -> DispersionOperator {
    DispersionOperator::ComplexFractional {
        nu_m_r: row[cols[0]],
        alpha_r: row[cols[1]],
        nu_m_i: row[cols[2]],
        alpha_i: row[cols[3]],
    }
}

fn pushforward_json(s: &PushforwardSummary) -> serde_json::Value {
    serde_json::to_value(s).unwrap_or_default()
}

/// Forward propagation of physical and fractional-operator uncertainty to
/// the outflow concentration.
pub fn transport_forward(cfg: &TransportForwardConfig, seed: u64) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let transport = Transport::new(cfg.transport.clone())?;
    let priors = joined(&cfg.physical_priors, &cfg.mfu_priors);
    let names = names_of(&priors);
    let pc = columns(&names, &PHYSICAL)?;
    let mc = columns(&names, &FRACTIONAL)?;
    let draws = sample_priors(&priors, cfg.n_samples, derive_named(seed, "forward"))?;
    let (qoi, summary) = pushforward(&draws, |r| {
        transport.qoi(&physical(r, &pc), &fractional(r, &mc))
    })?;
    let p95 = summary
        .quantiles
        .iter()
        .find(|(p, _)| *p == 0.95)
        .map_or(f64::NAN, |q| q.1);
    let (csv, fig) = histogram_plot(
        "Outflow concentration under the fractional representation",
        "c(Lx, t)",
        &[("QoI samples", &qoi)],
        cfg.histogram_bins,
        &[
            ("lower bound", summary.min),
            ("mean", summary.mean),
            ("95th percentile", p95),
            ("maximum", summary.max),
        ],
    );
    out.plot("qoi_histogram", csv, &fig);
    out.file("qoi_samples.csv", columns_csv(&["qoi"], &[&qoi]));

    // Concentration profiles of the first few samples.
    let grid = cfg.transport.grid();
    let m = cfg.snapshot_samples.min(draws.nrows());
    let profiles: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let r = draws.row(i);
            let lambda = transport.eigenvalues(&fractional(r, &mc))?;
            Ok(transport
                .solve_with_eigenvalues(&physical(r, &pc), &lambda, cfg.snapshot_time)?
                .grid_values())
        })
        .collect::<Result<_>>()?;
    let header: Vec<String> = std::iter::once("x".to_string())
        .chain((0..m).map(|i| format!("sample_{i}")))
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut cols: Vec<&[f64]> = vec![&grid];
    cols.extend(profiles.iter().map(Vec::as_slice));
    let mut fig = Figure::new(
        &format!("Concentration profiles at t = {}", cfg.snapshot_time),
        "x",
        "c",
    );
    for (i, p) in profiles.iter().enumerate() {
        fig = fig.with(Element::Line {
            label: format!("sample {i}"),
            x: grid.clone(),
            y: p.clone(),
        });
    }
    out.plot("snapshots", columns_csv(&h, &cols), &fig);

    out.set("qoi", pushforward_json(&summary));
    out.check(
        "all_qoi_positive",
        summary.min > 0.0,
        summary.min,
        "every QoI sample is strictly positive (observed: minimum)",
    );
    Ok(out)
}

/// Products of the data-consistent inversion shared by the `dci` and
/// `transport_robustness` experiments.
pub struct DciOutcome {
    pub params: PhysicalParams,
    pub basis: PointBasis,
    /// Eigenvalues (`λ_0..=λ_Nk`) of the accepted general linear operators.
    pub accepted: Vec<Vec<Complex64>>,
    pub accepted_qoi: Vec<f64>,
    pub target_qoi: Vec<f64>,
    pub proposal_qoi: Vec<f64>,
    pub diagnostics: mfugsa_core::dci::DciDiagnostics,
    pub mvn_jitter: f64,
}

fn fractional_eigs(
    transport: &Transport,
    draws: &SampleMatrix,
    cols: &[usize],
) -> Result<Vec<Vec<Complex64>>> {
    (0..draws.nrows())
        .into_par_iter()
        .map(|i| Ok(transport.eigenvalues(&fractional(draws.row(i), cols))?))
        .collect()
}

/// Runs the inversion with the physical parameters at their prior means.
pub fn run_dci(
    transport: &Transport,
    physical_priors: &[ParamSpec],
    mfu_priors: &[ParamSpec],
    settings: &DciSettings,
    seed: u64,
) -> Result<DciOutcome> {
    let means = means_of(physical_priors, &PHYSICAL)?;
    let params = PhysicalParams::from_slice(&means);
    let basis = transport.qoi_basis(&params)?;
    let mnames = names_of(mfu_priors);
    let mc = columns(&mnames, &FRACTIONAL)?;
    let qoi_of = |lambda: &[Complex64]| basis.eval(&basis.factors(lambda));

    let fit_draws = sample_priors(mfu_priors, settings.fit_samples, derive_named(seed, "dci-fit"))?;
    let fit: Vec<Vec<Complex64>> = fractional_eigs(transport, &fit_draws, &mc)?
        .into_iter()
        .map(|l| l[1..].to_vec())
        .collect();
    let mvn = fit_initial_mvn(&fit)?;

    let target_draws = sample_priors(
        mfu_priors,
        settings.target_samples,
        derive_named(seed, "dci-target"),
    )?;
    let target_qoi: Vec<f64> = fractional_eigs(transport, &target_draws, &mc)?
        .iter()
        .map(|l| qoi_of(l))
        .collect();

    let proposals = sample(&mvn.density, settings.proposals, derive_named(seed, "dci-proposals"))?;
    let proposal_qoi: Vec<f64> = (0..proposals.nrows())
        .into_par_iter()
        .map(|i| qoi_of(&eigenvalues_from_transformed(proposals.row(i))))
        .collect();
    let problem = DciProblem {
        target_samples: target_qoi.clone(),
        predict_samples: proposal_qoi.clone(),
        safety_factor: settings.safety_factor,
        target_bandwidth: settings.target_bandwidth,
        predict_bandwidth: settings.predict_bandwidth,
        qoi_scale: settings.qoi_scale,
    };
    let update = dci_update(&problem, &proposals, &proposal_qoi, derive_named(seed, "dci-accept"))?;
    if update.accepted.is_empty() {
        return Err(mfugsa_core::Error::Configuration(
            "the inversion accepted no proposals".into(),
        )
        .into());
    }
    let accepted: Vec<Vec<Complex64>> = update
        .samples
        .rows()
        .map(eigenvalues_from_transformed)
        .collect();
    let accepted_qoi = update.accepted.iter().map(|&i| proposal_qoi[i]).collect();
    Ok(DciOutcome {
        params,
        basis,
        accepted,
        accepted_qoi,
        target_qoi,
        proposal_qoi,
        diagnostics: update.diagnostics(proposals.nrows()),
        mvn_jitter: mvn.jitter,
    })
}

/// Quantiles of `-Re λ_k` and `-Im λ_k` per mode, for plotting spectra.
fn spectrum_bands(eigs: &[Vec<Complex64>], modes: usize) -> Vec<[f64; 6]> {
    (1..=modes)
        .map(|k| {
            let re: Vec<f64> = eigs.iter().map(|l| -l[k].re).collect();
            let im: Vec<f64> = eigs.iter().map(|l| -l[k].im).collect();
            [
                stats::quantile(&re, 0.05),
                stats::quantile(&re, 0.5),
                stats::quantile(&re, 0.95),
                stats::quantile(&im, 0.05),
                stats::quantile(&im, 0.5),
                stats::quantile(&im, 0.95),
            ]
        })
        .collect()
}

/// Data-consistent inversion for a general linear dispersion operator
/// whose outflow pushforward matches the fractional representation's.
pub fn dci(cfg: &DciConfig, seed: u64) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let transport = Transport::new(cfg.transport.clone())?;
    let res = run_dci(&transport, &cfg.physical_priors, &cfg.mfu_priors, &cfg.dci, seed)?;
    let mnames = names_of(&cfg.mfu_priors);
    let mc = columns(&mnames, &FRACTIONAL)?;

    // Held-out fractional pushforward samples.
    let holdout_draws =
        sample_priors(&cfg.mfu_priors, cfg.holdout_samples, derive_named(seed, "dci-holdout"))?;
    let holdout_eigs = fractional_eigs(&transport, &holdout_draws, &mc)?;
    let holdout: Vec<f64> = holdout_eigs
        .iter()
        .map(|l| res.basis.eval(&res.basis.factors(l)))
        .collect();
    let ks = stats::ks_statistic(&res.accepted_qoi, &holdout);

    // With target = predict every ratio is one and the rate is 1/safety.
    let proposals = SampleMatrix::new(
        vec!["qoi".into()],
        res.proposal_qoi.len(),
        res.proposal_qoi.clone(),
        0,
    )?;
    let identity = DciProblem {
        target_samples: res.proposal_qoi.clone(),
        predict_samples: res.proposal_qoi.clone(),
        safety_factor: cfg.dci.safety_factor,
        target_bandwidth: None,
        predict_bandwidth: None,
        qoi_scale: QoiScale::Linear,
    };
    let identity_rate = dci_update(
        &identity,
        &proposals,
        &res.proposal_qoi,
        derive_named(seed, "dci-identity"),
    )?
    .acceptance_rate;

    let (csv, fig) = histogram_plot(
        "Outflow pushforwards",
        "c(Lx, t)",
        &[
            ("updated", &res.accepted_qoi),
            ("held-out target", &holdout),
            ("initial", &res.proposal_qoi),
        ],
        cfg.histogram_bins,
        &[],
    );
    out.plot("qoi_pushforwards", csv, &fig);
    let mut samples = String::from("series,qoi\n");
    for (label, values) in [
        ("target", &res.target_qoi),
        ("proposal", &res.proposal_qoi),
        ("updated", &res.accepted_qoi),
        ("holdout", &holdout),
    ] {
        for v in values {
            samples.push_str(&format!("{label},{v:e}\n"));
        }
    }
    out.file("qoi_samples.csv", samples);

    let modes = cfg.export_modes.min(transport.n_modes());
    let mut header = Vec::new();
    for part in ["re", "im"] {
        for k in 1..=modes {
            header.push(format!("{part}_{k}"));
        }
    }
    let mut csv = header.join(",");
    csv.push('\n');
    for l in &res.accepted {
        let cells: Vec<String> = (1..=modes)
            .map(|k| format!("{:e}", l[k].re))
            .chain((1..=modes).map(|k| format!("{:e}", l[k].im)))
            .collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    out.file("accepted_eigenvalues.csv", csv);

    let upd = spectrum_bands(&res.accepted, modes);
    let ini = spectrum_bands(&holdout_eigs, modes);
    let ks_axis: Vec<f64> = (1..=modes).map(|k| k as f64).collect();
    let col = |b: &[[f64; 6]], j: usize| b.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let names = [
        "fractional_re_q05",
        "fractional_re_median",
        "fractional_re_q95",
        "fractional_im_q05",
        "fractional_im_median",
        "fractional_im_q95",
        "updated_re_q05",
        "updated_re_median",
        "updated_re_q95",
        "updated_im_q05",
        "updated_im_median",
        "updated_im_q95",
    ];
    let series: Vec<Vec<f64>> = (0..6)
        .map(|j| col(&ini, j))
        .chain((0..6).map(|j| col(&upd, j)))
        .collect();
    let mut h = vec!["mode"];
    h.extend(names);
    let mut refs: Vec<&[f64]> = vec![&ks_axis];
    refs.extend(series.iter().map(Vec::as_slice));
    let mut fig = Figure::new("Eigenvalue magnitudes by mode", "mode k", "-Re / -Im of lambda_k");
    for (label, lo, mid, hi) in [
        ("fractional Re", 0, 1, 2),
        ("fractional Im", 3, 4, 5),
        ("updated Re", 6, 7, 8),
        ("updated Im", 9, 10, 11),
    ] {
        fig = fig
            .with(Element::Band {
                label: format!("{label} 90%"),
                x: ks_axis.clone(),
                lo: series[lo].clone(),
                hi: series[hi].clone(),
            })
            .with(Element::Line {
                label: format!("{label} median"),
                x: ks_axis.clone(),
                y: series[mid].clone(),
            });
    }
    out.plot("eigenvalue_spectra", columns_csv(&h, &refs), &fig);

    out.set("physical_params", res.params);
    out.set("diagnostics", &res.diagnostics);
    out.set("mvn_jitter", res.mvn_jitter);
    out.set("ks_statistic", ks);
    out.set("identity_acceptance_rate", identity_rate);
    out.check(
        "pushforward_matches_holdout",
        ks <= 0.05,
        ks,
        "KS statistic between updated and held-out QoI samples <= 0.05",
    );
    out.check(
        "identity_acceptance_rate",
        (0.88..=0.95).contains(&identity_rate),
        identity_rate,
        "target = predict gives an acceptance rate in [0.88, 0.95]",
    );
    Ok(out)
}

/// Conditional moments of the outflow concentration over a discrete set of
/// operators, given the physical parameters. Operator factors are
/// precomputed, so each evaluation is one dot product per operator.
struct BasisMoments<'a> {
    transport: &'a Transport,
    factors: Vec<Vec<Complex64>>,
    rule: InnerRule,
}

impl ConditionalMoments for BasisMoments<'_> {
    fn conditional_moments(&self, x_v: &[f64]) -> mfugsa_core::Result<(f64, f64)> {
        let basis = self.transport.qoi_basis(&PhysicalParams::from_slice(x_v))?;
        let values: Vec<f64> = self.factors.iter().map(|f| basis.eval(f)).collect();
        Ok(self.rule.moments(&values))
    }
}

/// Compares the fractional representation `f` with the general linear
/// operators accepted by the inversion (`q`, chosen uniformly at random):
/// Sobol' indices of both with shared physical-parameter draws, the
/// discrepancies `ε₁`, `ε₂`, and the resulting index bounds.
pub fn transport_robustness(cfg: &TransportRobustnessConfig, seed: u64) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let transport = Transport::new(cfg.transport.clone())?;
    let res = run_dci(&transport, &cfg.physical_priors, &cfg.mfu_priors, &cfg.dci, seed)?;
    let n_ops = res.accepted.len();
    let qoi_time = cfg.transport.qoi_time;
    let op_factors: Vec<Vec<Complex64>> = res
        .accepted
        .iter()
        .map(|l| l[1..].iter().map(|v| (v * qoi_time).exp()).collect())
        .collect();

    // f: physical parameters and the fractional MFU block.
    let f_priors = joined(&cfg.physical_priors, &cfg.mfu_priors);
    let f_names = names_of(&f_priors);
    let pcf = columns(&f_names, &PHYSICAL)?;
    let mcf = columns(&f_names, &FRACTIONAL)?;
    let mfu_names = names_of(&cfg.mfu_priors);
    let model_refs: Vec<&str> = PHYSICAL.to_vec();
    let f_space = GroupedParameterSpace::independent(
        f_priors,
        &[("model", model_refs.clone()), ("mfu", mfu_names.iter().map(String::as_str).collect())],
    )?;
    let f_model = |r: &[f64]| {
        transport
            .qoi(&physical(r, &pcf), &fractional(r, &mcf))
            .unwrap_or(f64::NAN)
    };

    // q: physical parameters and the index of an accepted operator.
    let q_priors = joined(
        &cfg.physical_priors,
        &[ParamSpec::scalar(
            "operator_index",
            Density::Uniform { lo: 0.0, hi: n_ops as f64 },
        )],
    );
    let q_names = names_of(&q_priors);
    let pcq = columns(&q_names, &PHYSICAL)?;
    let oc = columns(&q_names, &["operator_index"])?[0];
    let q_space = GroupedParameterSpace::independent(
        q_priors,
        &[("model", model_refs), ("mfu", vec!["operator_index"])],
    )?;
    let q_model = |r: &[f64]| {
        let k = (r[oc].floor().max(0.0) as usize).min(n_ops - 1);
        match transport.qoi_basis(&physical(r, &pcq)) {
            Ok(b) => b.eval(&op_factors[k]),
            Err(_) => f64::NAN,
        }
    };

    // Inner rules: Gauss quadrature over the fractional block, and the
    // exact discrete average over the accepted operators.
    let mfu_rule = InnerRule::for_params(
        &cfg.mfu_priors,
        cfg.quadrature_order,
        cfg.inner_n,
        derive_named(seed, "inner"),
    )?;
    let mfu_cols: Vec<usize> = columns(&mfu_names, &FRACTIONAL)?;
    let f_factors: Vec<Vec<Complex64>> = mfu_rule
        .points()
        .par_iter()
        .map(|u| {
            let lambda = transport.eigenvalues(&fractional(u, &mfu_cols))?;
            Ok(lambda[1..].iter().map(|v| (v * qoi_time).exp()).collect())
        })
        .collect::<Result<_>>()?;
    let f_moments = BasisMoments {
        transport: &transport,
        factors: f_factors,
        rule: mfu_rule,
    };
    let q_moments = BasisMoments {
        transport: &transport,
        factors: op_factors.clone(),
        rule: InnerRule::Quadrature {
            nodes: (0..n_ops).map(|i| vec![i as f64]).collect(),
            weights: vec![1.0 / n_ops as f64; n_ops],
        },
    };
    let inner_kind = match &f_moments.rule {
        InnerRule::Quadrature { .. } => "quadrature",
        InnerRule::MonteCarlo { .. } => "monte_carlo",
    };

    let mut f_reps = Vec::with_capacity(cfg.replicates);
    let mut q_reps = Vec::with_capacity(cfg.replicates);
    let mut eps: Vec<EpsEstimate> = Vec::with_capacity(cfg.replicates);
    for r in 0..cfg.replicates {
        let rs = replicate_seed(derive_named(seed, "robustness"), r);
        let f_plan = build_pick_freeze(&f_space, cfg.n, rs)?;
        let q_plan = build_pick_freeze(&q_space, cfg.n, rs)?;
        f_reps.push(indices_from_outputs(f_plan.groups(), &evaluate_plan(&f_model, &f_plan))?);
        q_reps.push(indices_from_outputs(q_plan.groups(), &evaluate_plan(&q_model, &q_plan))?);
        let outer = sample_priors(&cfg.physical_priors, cfg.outer_n, derive_named(rs, "outer"))?;
        let pc = columns(outer.names(), &PHYSICAL)?;
        let outer = outer.select_columns(&pc);
        eps.push(estimate_eps(&outer, &f_moments, &q_moments)?);
        log::info!("robustness replicate {} of {} done", r + 1, cfg.replicates);
    }
    let report = verify_bounds("mfu", &f_reps, &q_reps, &eps)?;
    out.file("bounds.csv", report.to_csv());
    let f_sum = summarize_replicates(&f_reps);
    let q_sum = summarize_replicates(&q_reps);
    let (csv, fig) = sobol_bars(
        "Sobol' indices: fractional vs inferred general linear operator",
        &[("fractional", &f_sum), ("general linear", &q_sum)],
    );
    out.plot("indices", csv, &fig);

    let rep: Vec<f64> = report.replicates.iter().map(|c| c.replicate as f64).collect();
    let col = |g: &dyn Fn(&mfugsa_core::robustness::ReplicateCheck) -> f64| {
        report.replicates.iter().map(g).collect::<Vec<f64>>()
    };
    let ds = col(&|c| c.delta_s);
    let dt = col(&|c| c.delta_t);
    let bm = col(&|c| c.bound_main + c.tol_main);
    let bt = col(&|c| c.bound_total + c.tol_total);
    let fig = Figure::new("Observed index differences vs bounds", "replicate", "difference")
        .with(Element::Points { label: "|dS|".into(), x: rep.clone(), y: ds.clone() })
        .with(Element::Points { label: "|dT|".into(), x: rep.clone(), y: dt.clone() })
        .with(Element::Line { label: "bound S + tol".into(), x: rep.clone(), y: bm.clone() })
        .with(Element::Line { label: "bound T + tol".into(), x: rep.clone(), y: bt.clone() });
    out.plot(
        "bounds_plot",
        columns_csv(
            &["replicate", "delta_S", "delta_T", "bound_main_plus_tol", "bound_total_plus_tol"],
            &[&rep, &ds, &dt, &bm, &bt],
        ),
        &fig,
    );

    let eps_var: Vec<f64> = eps.iter().map(|e| e.var_q_rescaled).collect();
    let mean_eps_var = stats::mean(&eps_var);
    out.set("accepted_operators", n_ops);
    out.set("dci", &res.diagnostics);
    out.set("inner_rule_f", inner_kind);
    out.set("inner_nodes_f", f_moments.rule.len());
    out.set("indices_fractional", digest(&f_sum));
    out.set("indices_general_linear", digest(&q_sum));
    out.set("mean_eps1", report.mean_eps1);
    out.set("sd_eps1", report.sd_eps1);
    out.set("mean_eps2", report.mean_eps2);
    out.set("mean_bound_main", report.mean_bound_main);
    out.set("mean_bound_total", report.mean_bound_total);
    out.set("mean_delta_s", report.mean_delta_s);
    out.set("mean_delta_t", report.mean_delta_t);
    out.set("mean_var_q_rescaled", report.mean_var_q_rescaled);
    out.set("mean_var_q_rescaled_total_variance_law", mean_eps_var);
    out.set("violations", &report.violations);

    out.check(
        "rescaled_variance_near_one",
        (report.mean_var_q_rescaled - 1.0).abs() <= 0.05,
        report.mean_var_q_rescaled,
        "|mean Var(q_rescaled) - 1| <= 0.05 over replicates",
    );
    let slack_main = report
        .replicates
        .iter()
        .map(|c| c.bound_main + c.tol_main - c.delta_s)
        .fold(f64::INFINITY, f64::min);
    let slack_total = report
        .replicates
        .iter()
        .map(|c| c.bound_total + c.tol_total - c.delta_t)
        .fold(f64::INFINITY, f64::min);
    out.check(
        "main_index_bound",
        report.replicates.iter().all(|c| c.main_ok),
        slack_main,
        "every replicate has |dS| <= eps1 + 2 eps2 + 3 sd (observed: smallest slack)",
    );
    out.check(
        "total_index_bound",
        report.replicates.iter().all(|c| c.total_ok),
        slack_total,
        "every replicate has |dT| <= eps1 + eps2 + 3 sd (observed: smallest slack)",
    );
    out.check(
        "mean_delta_s_small",
        report.mean_delta_s <= 0.05,
        report.mean_delta_s,
        "mean |dS| over replicates <= 0.05",
    );
    out.check(
        "mean_delta_t_small",
        report.mean_delta_t <= 0.05,
        report.mean_delta_t,
        "mean |dT| over replicates <= 0.05",
    );
    Ok(out)
}

/// Outflow pushforward of a sample of calibration parameters, with the
/// fraction of operators that produce a negative concentration anywhere on
/// the positivity-check grid (a diagnostic beyond the QoI's own sign).
fn calibration_pushforward(
    transport: &Transport,
    samples: &SampleMatrix,
    pc: &[usize],
    mc: &[usize],
) -> Result<(Vec<f64>, PushforwardSummary, f64)> {
    let evals: Vec<(f64, bool)> = (0..samples.nrows())
        .into_par_iter()
        .map(|i| {
            let r = samples.row(i);
            let p = physical(r, pc);
            let lambda = transport.eigenvalues(&complex_fractional(r, mc))?;
            Ok((
                transport.qoi_with_eigenvalues(&p, &lambda)?,
                transport.positivity_check_with_eigenvalues(&p, &lambda)?,
            ))
        })
        .collect::<Result<_>>()?;
    let qoi: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let negative = evals.iter().filter(|e| !e.1).count() as f64 / evals.len() as f64;
    let summary = PushforwardSummary::of(&qoi)?;
    Ok((qoi, summary, negative))
}

/// Hierarchical calibration of the complex fractional operator against
/// synthetic concentration data at an upstream well.
pub fn transport_calibrate(cfg: &TransportCalibrateConfig, seed: u64) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let transport = Transport::new(cfg.transport.clone())?;
    let truth_op = cfg.truth.operator(&cfg.transport)?;
    let truth_lambda = transport.eigenvalues(&truth_op)?;
    let clean = transport.probe_with_eigenvalues(
        &cfg.truth_params,
        &truth_lambda,
        cfg.observation_x,
        &cfg.observation_times,
    )?;
    if let Some((i, v)) = clean.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(CliError::config(
            "experiment.observation_times",
            format!(
                "the synthetic concentration at t = {} is {v:e}; multiplicative noise needs \
                 positive values",
                cfg.observation_times[i]
            ),
        ));
    }
    let noise = NoiseModel::LognormalMultiplicative { sd: cfg.noise_sd };
    let data_seed = derive_named(seed, "data");
    let data: Vec<f64> = clean
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let z: f64 = StandardNormal.sample(&mut row_rng(data_seed, i as u64));
            noise.perturb(m, z)
        })
        .collect();

    let priors = joined(&cfg.model_priors, &cfg.mfu_priors);
    let names = names_of(&priors);
    let pc = columns(&names, &PHYSICAL)?;
    let mc = columns(&names, &COMPLEX_FRACTIONAL)?;
    let times = cfg.observation_times.clone();
    let x_obs = cfg.observation_x;
    let tr = &transport;
    let (pc2, mc2) = (pc.clone(), mc.clone());
    let post = make_log_posterior(
        priors.clone(),
        data.clone(),
        noise,
        Box::new(move |r: &[f64]| {
            let p = physical(r, &pc2);
            let lambda = tr.eigenvalues(&complex_fractional(r, &mc2)).ok()?;
            if !tr.positivity_check_with_eigenvalues(&p, &lambda).ok()? {
                return None;
            }
            tr.probe_with_eigenvalues(&p, &lambda, x_obs, &times).ok()
        }),
    )?;
    let (chain, init) = run_chain(&post, &priors, cfg.steps, &cfg.sampler, seed)?;
    let pushed = redraw_conditionals(&chain.samples, &priors, derive_named(seed, "redraw"))?;
    let prior = sample_priors(&priors, cfg.prior_draws, derive_named(seed, "prior"))?;

    let (prior_qoi, prior_sum, prior_neg) = calibration_pushforward(&transport, &prior, &pc, &mc)?;
    let (post_qoi, post_sum, post_neg) = calibration_pushforward(&transport, &pushed, &pc, &mc)?;
    let (csv, fig) = histogram_plot(
        "Outflow concentration: prior and posterior pushforwards",
        "c(Lx, t)",
        &[("posterior", &post_qoi), ("prior", &prior_qoi)],
        cfg.histogram_bins,
        &[],
    );
    out.plot("qoi_pushforwards", csv, &fig);

    for (j, name) in names.iter().enumerate() {
        let (csv, fig) = histogram_plot(
            &format!("{name}: prior and posterior"),
            name,
            &[("posterior", &pushed.column(j)), ("prior", &prior.column(j))],
            cfg.histogram_bins,
            &[],
        );
        out.plot(&format!("hist_{name}"), csv, &fig);
    }

    // Posterior predictive at the well, against the data.
    let post_curves: Vec<Vec<f64>> = (0..pushed.nrows())
        .into_par_iter()
        .map(|i| {
            let r = pushed.row(i);
            let lambda = transport.eigenvalues(&complex_fractional(r, &mc))?;
            Ok(transport.probe_with_eigenvalues(&physical(r, &pc), &lambda, x_obs, &cfg.observation_times)?)
        })
        .collect::<Result<_>>()?;
    let nt = cfg.observation_times.len();
    let mut lo = Vec::with_capacity(nt);
    let mut mid = Vec::with_capacity(nt);
    let mut hi = Vec::with_capacity(nt);
    for j in 0..nt {
        let col: Vec<f64> = post_curves.iter().map(|c| c[j]).collect();
        lo.push(stats::quantile(&col, 0.025));
        mid.push(stats::quantile(&col, 0.5));
        hi.push(stats::quantile(&col, 0.975));
    }
    let t = &cfg.observation_times;
    let fig = Figure::new("Concentration at the observation well", "t", "c")
        .with(Element::Band { label: "posterior 95%".into(), x: t.clone(), lo: lo.clone(), hi: hi.clone() })
        .with(Element::Line { label: "posterior median".into(), x: t.clone(), y: mid.clone() })
        .with(Element::Line { label: "truth".into(), x: t.clone(), y: clean.clone() })
        .with(Element::Points { label: "data".into(), x: t.clone(), y: data.clone() });
    out.plot(
        "well_fit",
        columns_csv(
            &["t", "posterior_lower", "posterior_median", "posterior_upper", "truth", "data"],
            &[t, &lo, &mid, &hi, &clean, &data],
        ),
        &fig,
    );

    // Sensitivity analyses: independent prior, dependent posterior.
    let model_names = names_of(&cfg.model_priors);
    let mfu_names = names_of(&cfg.mfu_priors);
    let groups = [
        ("model", model_names.iter().map(String::as_str).collect::<Vec<_>>()),
        ("mfu", mfu_names.iter().map(String::as_str).collect::<Vec<_>>()),
    ];
    let qoi_model = |r: &[f64]| {
        transport
            .qoi(&physical(r, &pc), &complex_fractional(r, &mc))
            .unwrap_or(f64::NAN)
    };
    let prior_space = GroupedParameterSpace::independent(priors.clone(), &groups)?;
    let prior_gsa = replicate_indices(
        &prior_space,
        &qoi_model,
        cfg.prior_gsa_n,
        cfg.gsa_replicates,
        derive_named(seed, "prior-gsa"),
    )?
    .summary;
    let post_space = GroupedParameterSpace::dependent(pushed.clone(), &groups)?;
    let post_gsa = replicate_indices(
        &post_space,
        &qoi_model,
        cfg.posterior_gsa_n,
        cfg.gsa_replicates,
        derive_named(seed, "posterior-gsa"),
    )?
    .summary;
    let (csv, fig) = numerator_bars(
        "Total-effect numerators of the outflow concentration",
        &[("prior", &prior_gsa), ("posterior", &post_gsa)],
    );
    out.plot("numerators", csv, &fig);
    let (csv, fig) = sobol_bars(
        "Sobol' indices of the outflow concentration",
        &[("prior", &prior_gsa), ("posterior", &post_gsa)],
    );
    out.plot("indices", csv, &fig);
    out.file("chain.csv", chain.to_csv());

    let find = |ests: &[SobolEstimate], g: &str| -> f64 {
        ests.iter().find(|e| e.group == g).map_or(f64::NAN, |e| e.total_numerator)
    };
    let post_model = find(&post_gsa, "model");
    let post_mfu = find(&post_gsa, "mfu");
    out.set("initial_point", &init);
    out.set("acceptance_rate", chain.acceptance_rate);
    out.set("retained_samples", chain.samples.nrows());
    out.set("constraint_rejections", post.constraint_rejections());
    out.set("prior_qoi", pushforward_json(&prior_sum));
    out.set("posterior_qoi", pushforward_json(&post_sum));
    out.set("prior_negative_fraction", prior_sum.negative_fraction);
    out.set("posterior_negative_fraction", post_sum.negative_fraction);
    out.set("prior_grid_negative_fraction", prior_neg);
    out.set("posterior_grid_negative_fraction", post_neg);
    out.set("prior_indices", digest(&prior_gsa));
    out.set("posterior_indices", digest(&post_gsa));
    out.set("data", json!({"times": cfg.observation_times, "values": data, "truth": clean}));

    let ratio = post_sum.variance / prior_sum.variance;
    out.check(
        "posterior_variance_halved",
        ratio <= 0.5,
        ratio,
        "posterior QoI variance <= 0.5 x prior QoI variance (observed: ratio)",
    );
    out.check(
        "negative_incidence_reduced",
        post_sum.negative_fraction < prior_sum.negative_fraction,
        post_sum.negative_fraction - prior_sum.negative_fraction,
        "fraction of negative outflow concentrations: posterior < prior (observed: difference)",
    );
    out.check(
        "mfu_numerator_dominates",
        post_mfu > post_model,
        post_mfu - post_model,
        "posterior MFU-group total numerator > model-group numerator",
    );
    Ok(out)
}

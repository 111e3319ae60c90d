//! Grouped variance-based sensitivity analysis with pick-freeze estimators.
//!
//! Notation: `A` holds draws `x`, `B` holds independent replicate draws
//! `x'`. For a group `u` the plan stores two mixed matrices:
//!
//! * `mixed(u)`: columns `u` from `B`, every other column from `A`, i.e.
//!   `(x_~u, x'_u)`, used by the total-effect numerator;
//! * `main_mixed(u)`: columns `u` from `A`, the rest from `B`, i.e.
//!   `(x'_~u, x_u)`, used by the main-effect numerator.
//!
//! With exactly two groups `main_mixed(u) == mixed(~u)`, and plan
//! evaluation reuses those outputs.
//!
//! Groups may be statistically dependent when the space is built from a
//! joint sample (for instance a thinned posterior chain). The sample is
//! shuffled and split into disjoint halves that play the roles of `A` and
//! `B`. Only two groups are allowed in that mode, and indices are reported
//! unclamped (totals above 1 are expected).

use crate::error::{Error, Result};
use crate::rng::{derive, derive_named, row_rng, serial_rng};
use crate::sampling::{Density, SampleMatrix};
use crate::stats::{self, MeanSd};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative threshold below which the output variance counts as zero.
pub const DEGENERATE_VARIANCE_REL: f64 = 1e-14;

/// A named block of columns with its (joint) density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub names: Vec<String>,
    pub density: Density,
}

impl ParamSpec {
    pub fn new(names: &[&str], density: Density) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            density,
        }
    }

    pub fn scalar(name: &str, density: Density) -> Self {
        Self::new(&[name], density)
    }

    /// Stable key used to derive this block's random streams.
    fn stream_key(&self) -> String {
        self.names.join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum SpaceKind {
    Independent(Vec<ParamSpec>),
    Dependent(SampleMatrix),
}

/// Named parameters partitioned into disjoint, exhaustive groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedParameterSpace {
    kind: SpaceKind,
    names: Vec<String>,
    groups: Vec<Group>,
}

fn resolve_groups(names: &[String], groups: &[(&str, Vec<&str>)]) -> Result<Vec<Group>> {
    let mut seen = vec![false; names.len()];
    let mut out = Vec::with_capacity(groups.len());
    for (gname, members) in groups {
        let mut columns = Vec::with_capacity(members.len());
        for m in members {
            let j = names.iter().position(|n| n == m).ok_or_else(|| {
                Error::Configuration(format!("group {gname}: unknown parameter {m}"))
            })?;
            if seen[j] {
                return Err(Error::Configuration(format!(
                    "parameter {m} belongs to more than one group"
                )));
            }
            seen[j] = true;
            columns.push(j);
        }
        if columns.is_empty() {
            return Err(Error::Configuration(format!("group {gname} is empty")));
        }
        out.push(Group {
            name: gname.to_string(),
            columns,
        });
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::Configuration(format!(
            "parameter {} is not in any group",
            names[j]
        )));
    }
    Ok(out)
}

impl GroupedParameterSpace {
    /// Independent groups. Each parameter block must lie within one group.
    pub fn independent(params: Vec<ParamSpec>, groups: &[(&str, Vec<&str>)]) -> Result<Self> {
        let mut names = Vec::new();
        for p in &params {
            p.density.validate()?;
            if p.names.len() != p.density.dim() {
                return Err(Error::Configuration(format!(
                    "parameter block {:?} names {} columns but its density has {}",
                    p.names,
                    p.names.len(),
                    p.density.dim()
                )));
            }
            names.extend(p.names.iter().cloned());
        }
        let groups = resolve_groups(&names, groups)?;
        let mut offset = 0;
        for p in &params {
            let cols: Vec<usize> = (offset..offset + p.names.len()).collect();
            offset += p.names.len();
            let owner = groups.iter().position(|g| g.columns.contains(&cols[0]));
            if cols
                .iter()
                .any(|c| groups.iter().position(|g| g.columns.contains(c)) != owner)
            {
                return Err(Error::Configuration(format!(
                    "parameter block {:?} spans several groups; groups must be independent",
                    p.names
                )));
            }
        }
        Ok(Self {
            kind: SpaceKind::Independent(params),
            names,
            groups,
        })
    }

    /// Dependent groups backed by a joint sample. Exactly two groups.
    pub fn dependent(samples: SampleMatrix, groups: &[(&str, Vec<&str>)]) -> Result<Self> {
        if groups.len() != 2 {
            return Err(Error::UnsupportedConfiguration(format!(
                "dependent-sample mode needs exactly two groups, got {}",
                groups.len()
            )));
        }
        let names = samples.names().to_vec();
        let groups = resolve_groups(&names, groups)?;
        Ok(Self {
            kind: SpaceKind::Dependent(samples),
            names,
            groups,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn is_dependent(&self) -> bool {
        matches!(self.kind, SpaceKind::Dependent(_))
    }

    /// Largest `n` supported by a dependent space (half the joint sample).
    pub fn max_plan_size(&self) -> Option<usize> {
        match &self.kind {
            SpaceKind::Dependent(s) => Some(s.nrows() / 2),
            SpaceKind::Independent(_) => None,
        }
    }

    /// `n` draws from the joint density. Each block uses streams keyed by
    /// its parameter names, so two spaces that share a block (same names,
    /// same density) produce identical values for it under the same seed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleMatrix> {
        let SpaceKind::Independent(params) = &self.kind else {
            return Err(Error::UnsupportedConfiguration(
                "a dependent space can only be split, not sampled".into(),
            ));
        };
        let d = self.dim();
        let mut values = vec![0.0; n * d];
        let mut offset = 0;
        for p in params {
            let sampler = p.density.sampler()?;
            let block_seed = derive_named(seed, &p.stream_key());
            let width = p.names.len();
            values
                .par_chunks_exact_mut(d)
                .enumerate()
                .try_for_each(|(i, row)| {
                    let mut rng = row_rng(block_seed, i as u64);
                    sampler.draw_into(&mut rng, &mut row[offset..offset + width])
                })?;
            offset += width;
        }
        SampleMatrix::new(self.names.clone(), n, values, seed)
    }
}

/// Replicate sample matrices and their per-group mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct PickFreezePlan {
    pub a: SampleMatrix,
    pub b: SampleMatrix,
    mixed: Vec<SampleMatrix>,
    main_mixed: Vec<SampleMatrix>,
    groups: Vec<Group>,
}

fn mix_columns(base: &SampleMatrix, donor: &SampleMatrix, columns: &[usize]) -> SampleMatrix {
    let mut out = base.clone();
    for i in 0..base.nrows() {
        let src = donor.row(i);
        let dst = out.row_mut(i);
        for &j in columns {
            dst[j] = src[j];
        }
    }
    out
}

impl PickFreezePlan {
    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// `(x_~u, x'_u)` for group `g`.
    pub fn mixed(&self, g: usize) -> &SampleMatrix {
        &self.mixed[g]
    }

    /// `(x'_~u, x_u)` for group `g`.
    pub fn main_mixed(&self, g: usize) -> &SampleMatrix {
        &self.main_mixed[g]
    }
}

/// Builds `A`, `B` and the mixed matrices for every group.
pub fn build_pick_freeze(
    space: &GroupedParameterSpace,
    n: usize,
    seed: u64,
) -> Result<PickFreezePlan> {
    if n < 2 {
        return Err(Error::Argument(format!(
            "pick-freeze needs n >= 2, got {n}"
        )));
    }
    let (a, b) = match &space.kind {
        SpaceKind::Independent(_) => (
            space.sample(n, derive_named(seed, "A"))?,
            space.sample(n, derive_named(seed, "B"))?,
        ),
        SpaceKind::Dependent(joint) => {
            if space.groups.len() != 2 {
                return Err(Error::UnsupportedConfiguration(
                    "dependent-sample mode needs exactly two groups".into(),
                ));
            }
            if joint.nrows() < 2 * n {
                return Err(Error::Argument(format!(
                    "joint sample has {} rows; {} are needed for n = {n}",
                    joint.nrows(),
                    2 * n
                )));
            }
            let mut idx: Vec<usize> = (0..joint.nrows()).collect();
            let mut rng = serial_rng(derive_named(seed, "shuffle"));
            for i in (1..idx.len()).rev() {
                let j = rng.random_range(0..=i);
                idx.swap(i, j);
            }
            (
                joint.select_rows(&idx[..n]),
                joint.select_rows(&idx[n..2 * n]),
            )
        }
    };
    let mixed = space
        .groups
        .iter()
        .map(|g| mix_columns(&a, &b, &g.columns))
        .collect();
    let main_mixed = space
        .groups
        .iter()
        .map(|g| mix_columns(&b, &a, &g.columns))
        .collect();
    Ok(PickFreezePlan {
        a,
        b,
        mixed,
        main_mixed,
        groups: space.groups.clone(),
    })
}

/// A scalar model `f(x)` over one row of a sample matrix.
pub trait Model: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Evaluates `model` on every row, in parallel, preserving row order.
pub fn evaluate_rows<M: Model + ?Sized>(model: &M, samples: &SampleMatrix) -> Vec<f64> {
    (0..samples.nrows())
        .into_par_iter()
        .map(|i| model.eval(samples.row(i)))
        .collect()
}

/// Model outputs on every matrix of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutputs {
    pub f_a: Vec<f64>,
    pub f_b: Vec<f64>,
    pub f_mixed: Vec<Vec<f64>>,
    pub f_main_mixed: Vec<Vec<f64>>,
}

pub fn evaluate_plan<M: Model + ?Sized>(model: &M, plan: &PickFreezePlan) -> PlanOutputs {
    let f_a = evaluate_rows(model, &plan.a);
    let f_b = evaluate_rows(model, &plan.b);
    let f_mixed: Vec<Vec<f64>> = plan.mixed.iter().map(|m| evaluate_rows(model, m)).collect();
    let f_main_mixed = if plan.groups.len() == 2 {
        vec![f_mixed[1].clone(), f_mixed[0].clone()]
    } else {
        plan.main_mixed
            .iter()
            .map(|m| evaluate_rows(model, m))
            .collect()
    };
    PlanOutputs {
        f_a,
        f_b,
        f_mixed,
        f_main_mixed,
    }
}

fn check_lengths(n: usize, others: &[&[f64]]) -> Result<()> {
    if others.iter().any(|o| o.len() != n) {
        return Err(Error::Argument(
            "output vectors must all have the same length".into(),
        ));
    }
    Ok(())
}

/// Pooled two-sample variance `(1/2N) sum[(f_A - mean_A)^2 + (f_B - mean_B)^2]`.
pub fn estimate_total_variance(f_a: &[f64], f_b: &[f64]) -> Result<f64> {
    let n = f_a.len();
    if n < 2 {
        return Err(Error::Argument(format!(
            "total variance needs n >= 2, got {n}"
        )));
    }
    check_lengths(n, &[f_b])?;
    let (ma, mb) = (stats::mean(f_a), stats::mean(f_b));
    let s: f64 = f_a
        .iter()
        .zip(f_b)
        .map(|(a, b)| (a - ma).powi(2) + (b - mb).powi(2))
        .sum();
    Ok(s / (2.0 * n as f64))
}

fn checked_total_variance(f_a: &[f64], f_b: &[f64]) -> Result<f64> {
    let v = estimate_total_variance(f_a, f_b)?;
    let mean_sq = f_a.iter().chain(f_b).map(|x| x * x).sum::<f64>() / (2 * f_a.len()) as f64;
    let threshold = DEGENERATE_VARIANCE_REL * mean_sq;
    if !(v > threshold) {
        return Err(Error::DegenerateOutput {
            variance: v,
            threshold,
        });
    }
    Ok(v)
}

/// A numerator and the corresponding normalised index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexEstimate {
    pub numerator: f64,
    pub total_variance: f64,
    pub index: f64,
}

/// Grouped first-order index. `f_main_mixed` holds `f(x'_~u, x_u)`.
///
/// The numerator is `(1/N) sum (f(x) - mean f(x)) (f(x'_~u, x_u) - f(x'))`.
/// Centring `f(x)` leaves the expectation unchanged and makes the estimate
/// invariant under output shifts.
pub fn estimate_grouped_main(
    f_a: &[f64],
    f_b: &[f64],
    f_main_mixed: &[f64],
) -> Result<IndexEstimate> {
    let n = f_a.len();
    check_lengths(n, &[f_b, f_main_mixed])?;
    let total_variance = checked_total_variance(f_a, f_b)?;
    let ma = stats::mean(f_a);
    let s: f64 = (0..n)
        .map(|i| (f_a[i] - ma) * (f_main_mixed[i] - f_b[i]))
        .sum();
    let numerator = s / n as f64;
    Ok(IndexEstimate {
        numerator,
        total_variance,
        index: numerator / total_variance,
    })
}

/// Grouped total index. `f_mixed` holds `f(x_~u, x'_u)`; the numerator is
/// `(1/2N) sum (f(x) - f(x_~u, x'_u))^2`.
pub fn estimate_grouped_total(f_a: &[f64], f_b: &[f64], f_mixed: &[f64]) -> Result<IndexEstimate> {
    let n = f_a.len();
    check_lengths(n, &[f_b, f_mixed])?;
    let total_variance = checked_total_variance(f_a, f_b)?;
    let s: f64 = f_a.iter().zip(f_mixed).map(|(a, m)| (a - m).powi(2)).sum();
    let numerator = s / (2.0 * n as f64);
    Ok(IndexEstimate {
        numerator,
        total_variance,
        index: numerator / total_variance,
    })
}

/// Replicate statistics for one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateStats {
    pub count: usize,
    pub s_main: MeanSd,
    pub t_total: MeanSd,
    pub main_numerator: MeanSd,
    pub total_numerator: MeanSd,
    pub total_variance: MeanSd,
}

/// Indices for one group. When `replicates` is present the scalar fields
/// hold replicate means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolEstimate {
    pub group: String,
    pub main_numerator: f64,
    pub total_numerator: f64,
    pub total_variance: f64,
    pub s_main: f64,
    pub t_total: f64,
    pub replicates: Option<ReplicateStats>,
}

impl SobolEstimate {
    pub fn s_main_sd(&self) -> f64 {
        self.replicates.map_or(0.0, |r| r.s_main.sd)
    }

    pub fn t_total_sd(&self) -> f64 {
        self.replicates.map_or(0.0, |r| r.t_total.sd)
    }
}

/// Indices for every group from already evaluated plan outputs.
pub fn indices_from_outputs(groups: &[Group], out: &PlanOutputs) -> Result<Vec<SobolEstimate>> {
    groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let main = estimate_grouped_main(&out.f_a, &out.f_b, &out.f_main_mixed[g])?;
            let total = estimate_grouped_total(&out.f_a, &out.f_b, &out.f_mixed[g])?;
            Ok(SobolEstimate {
                group: group.name.clone(),
                main_numerator: main.numerator,
                total_numerator: total.numerator,
                total_variance: total.total_variance,
                s_main: main.index,
                t_total: total.index,
                replicates: None,
            })
        })
        .collect()
}

/// One pick-freeze analysis of `model` over `space`.
pub fn estimate_indices<M: Model + ?Sized>(
    space: &GroupedParameterSpace,
    model: &M,
    n: usize,
    seed: u64,
) -> Result<Vec<SobolEstimate>> {
    let plan = build_pick_freeze(space, n, seed)?;
    indices_from_outputs(plan.groups(), &evaluate_plan(model, &plan))
}

/// Seed of replicate `r` under a master seed. Replicate draws of a
/// parameter block depend only on this seed and the block's names.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    derive(master, r as u64 + 1)
}

/// Per-replicate indices plus their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatedIndices {
    pub per_replicate: Vec<Vec<SobolEstimate>>,
    pub summary: Vec<SobolEstimate>,
}

/// Summarises replicate estimates group by group.
pub fn summarize_replicates(per_replicate: &[Vec<SobolEstimate>]) -> Vec<SobolEstimate> {
    let groups = per_replicate.first().map_or(0, Vec::len);
    (0..groups)
        .map(|g| {
            let pick = |f: fn(&SobolEstimate) -> f64| -> MeanSd {
                MeanSd::of(&per_replicate.iter().map(|r| f(&r[g])).collect::<Vec<_>>())
            };
            let stats = ReplicateStats {
                count: per_replicate.len(),
                s_main: pick(|e| e.s_main),
                t_total: pick(|e| e.t_total),
                main_numerator: pick(|e| e.main_numerator),
                total_numerator: pick(|e| e.total_numerator),
                total_variance: pick(|e| e.total_variance),
            };
            SobolEstimate {
                group: per_replicate[0][g].group.clone(),
                main_numerator: stats.main_numerator.mean,
                total_numerator: stats.total_numerator.mean,
                total_variance: stats.total_variance.mean,
                s_main: stats.s_main.mean,
                t_total: stats.t_total.mean,
                replicates: Some(stats),
            }
        })
        .collect()
}

/// Repeats the analysis with independent plans and reports replicate
/// means and standard deviations.
pub fn replicate_indices<M: Model + ?Sized>(
    space: &GroupedParameterSpace,
    model: &M,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<ReplicatedIndices> {
    if replicates < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 replicates, got {replicates}"
        )));
    }
    let per_replicate = (0..replicates)
        .map(|r| estimate_indices(space, model, n, replicate_seed(seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_replicates(&per_replicate);
    Ok(ReplicatedIndices {
        per_replicate,
        summary,
    })
}

/// Pearson coefficients between two column sets: rows follow
/// `row_columns`, columns follow `col_columns`. Zero-variance columns give
/// `None`.
pub fn correlation_matrix(
    samples: &SampleMatrix,
    row_columns: &[usize],
    col_columns: &[usize],
) -> Result<Vec<Vec<Option<f64>>>> {
    if samples.nrows() < 3 {
        return Err(Error::Argument("correlations need at least 3 rows".into()));
    }
    let cols: Vec<Vec<f64>> = (0..samples.ncols()).map(|j| samples.column(j)).collect();
    Ok(row_columns
        .iter()
        .map(|&i| {
            col_columns
                .iter()
                .map(|&j| stats::pearson(&cols[i], &cols[j]))
                .collect()
        })
        .collect())
}

/// CSV table with one row per group.
pub fn sobol_csv(estimates: &[SobolEstimate]) -> String {
    let mut out = String::from(
        "group,S_main,S_main_sd,T_total,T_total_sd,main_numerator,total_numerator,total_variance\n",
    );
    for e in estimates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            e.group,
            e.s_main,
            e.s_main_sd(),
            e.t_total,
            e.t_total_sd(),
            e.main_numerator,
            e.total_numerator,
            e.total_variance
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normals(names: &[&str]) -> Vec<ParamSpec> {
        names
            .iter()
            .map(|n| ParamSpec::scalar(n, Density::Normal { mean: 0.0, sd: 1.0 }))
            .collect()
    }

    #[test]
    fn freezing_nothing_reproduces_b() {
        let space =
            GroupedParameterSpace::independent(normals(&["a", "b"]), &[("all", vec!["a", "b"])])
                .unwrap();
        let plan = build_pick_freeze(&space, 8, 1).unwrap();
        assert_eq!(plan.mixed(0).values(), plan.b.values());
        assert_eq!(plan.main_mixed(0).values(), plan.a.values());
    }

    #[test]
    fn mixed_matrix_shapes_and_selection() {
        let names = ["p0", "p1", "p2", "p3", "p4"];
        let space = GroupedParameterSpace::independent(
            normals(&names),
            &[
                ("first", vec!["p0", "p1"]),
                ("rest", vec!["p2", "p3", "p4"]),
            ],
        )
        .unwrap();
        let plan = build_pick_freeze(&space, 4, 9).unwrap();
        let m = plan.mixed(1);
        assert_eq!((m.nrows(), m.ncols()), (4, 5));
        for i in 0..4 {
            for j in 0..5 {
                let expected = if j < 2 {
                    plan.a.get(i, j)
                } else {
                    plan.b.get(i, j)
                };
                assert_eq!(m.get(i, j), expected);
            }
        }
        assert_eq!(plan.main_mixed(0).values(), plan.mixed(1).values());
    }

    #[test]
    fn dependent_split_partitions_shuffled_rows() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, -(i as f64)]).collect();
        let joint = SampleMatrix::from_rows(vec!["u".into(), "v".into()], &rows, 0).unwrap();
        let space =
            GroupedParameterSpace::dependent(joint, &[("U", vec!["u"]), ("V", vec!["v"])]).unwrap();
        let plan = build_pick_freeze(&space, 10, 5).unwrap();
        let mut seen: Vec<f64> = plan
            .a
            .column(0)
            .into_iter()
            .chain(plan.b.column(0))
            .collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..20).map(|i| i as f64).collect::<Vec<_>>());
        assert_ne!(
            plan.a.column(0),
            (0..10).map(|i| i as f64).collect::<Vec<_>>()
        );
    }

    #[test]
    fn dependent_mode_rejects_three_groups() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64; 3]).collect();
        let joint =
            SampleMatrix::from_rows(vec!["a".into(), "b".into(), "c".into()], &rows, 0).unwrap();
        let err = GroupedParameterSpace::dependent(
            joint,
            &[("A", vec!["a"]), ("B", vec!["b"]), ("C", vec!["c"])],
        );
        assert!(matches!(err, Err(Error::UnsupportedConfiguration(_))));
    }

    #[test]
    fn groups_must_be_disjoint_and_exhaustive() {
        let overlap = GroupedParameterSpace::independent(
            normals(&["a", "b"]),
            &[("x", vec!["a"]), ("y", vec!["a", "b"])],
        );
        assert!(matches!(overlap, Err(Error::Configuration(_))));
        let missing = GroupedParameterSpace::independent(normals(&["a", "b"]), &[("x", vec!["a"])]);
        assert!(matches!(missing, Err(Error::Configuration(_))));
    }

    #[test]
    fn single_variable_function_has_unit_main_effect() {
        let space = GroupedParameterSpace::independent(
            vec![
                ParamSpec::scalar("x1", Density::Uniform { lo: 0.0, hi: 1.0 }),
                ParamSpec::scalar("x2", Density::Uniform { lo: 0.0, hi: 1.0 }),
            ],
            &[("g1", vec!["x1"]), ("g2", vec!["x2"])],
        )
        .unwrap();
        let est = estimate_indices(&space, &|x: &[f64]| x[0], 20_000, 3).unwrap();
        assert!((est[0].s_main - 1.0).abs() < 0.03);
        assert!((est[0].t_total - 1.0).abs() < 0.03);
        assert!(est[1].t_total.abs() < 1e-12);
    }

    #[test]
    fn product_function_is_pure_interaction() {
        let space = GroupedParameterSpace::independent(
            normals(&["x1", "x2", "x3"]),
            &[("g1", vec!["x1"]), ("g23", vec!["x2", "x3"])],
        )
        .unwrap();
        let f = |x: &[f64]| x[0] * x[1];
        let est = estimate_indices(&space, &f, 50_000, 8).unwrap();
        assert!(est[0].s_main.abs() < 0.03, "{}", est[0].s_main);
        let both = GroupedParameterSpace::independent(
            normals(&["x1", "x2", "x3"]),
            &[("g12", vec!["x1", "x2"]), ("g3", vec!["x3"])],
        )
        .unwrap();
        let est = estimate_indices(&both, &f, 50_000, 8).unwrap();
        assert!((est[0].s_main - 1.0).abs() < 0.03, "{}", est[0].s_main);
    }

    #[test]
    fn additive_function_halves() {
        let space = GroupedParameterSpace::independent(
            normals(&["x1", "x2"]),
            &[("g1", vec!["x1"]), ("g2", vec!["x2"])],
        )
        .unwrap();
        let est = estimate_indices(&space, &|x: &[f64]| x[0] + x[1], 50_000, 2).unwrap();
        assert!((est[0].s_main - 0.5).abs() < 0.02);
        assert!((est[0].t_total - 0.5).abs() < 0.02);
    }

    #[test]
    fn constant_output_is_degenerate() {
        let f = [3.0; 10];
        assert!(matches!(
            estimate_grouped_total(&f, &f, &f),
            Err(Error::DegenerateOutput { .. })
        ));
        assert!(matches!(
            estimate_grouped_main(&f, &f, &f),
            Err(Error::DegenerateOutput { .. })
        ));
        let z = [0.0; 10];
        assert!(matches!(
            estimate_grouped_total(&z, &z, &z),
            Err(Error::DegenerateOutput { .. })
        ));
    }

    #[test]
    fn total_variance_edge_cases() {
        assert_eq!(estimate_total_variance(&[2.0; 5], &[2.0; 5]).unwrap(), 0.0);
        assert!(matches!(
            estimate_total_variance(&[1.0], &[1.0]),
            Err(Error::Argument(_))
        ));
        let a = [0.3, -1.2, 2.5, 0.1];
        let b = [1.0, 0.4, -0.7, 2.2];
        let c = 3.0;
        let v = estimate_total_variance(&a, &b).unwrap();
        let ca: Vec<f64> = a.iter().map(|x| c * x).collect();
        let cb: Vec<f64> = b.iter().map(|x| c * x).collect();
        assert!((estimate_total_variance(&ca, &cb).unwrap() - c * c * v).abs() < 1e-13);
    }

    #[test]
    fn correlation_blocks() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64, (i * i) as f64, i as f64, -(i as f64)])
            .collect();
        let s =
            SampleMatrix::from_rows((0..4).map(|j| format!("c{j}")).collect(), &rows, 0).unwrap();
        let m = correlation_matrix(&s, &[0, 1], &[2, 3]).unwrap();
        assert!((m[0][0].unwrap() - 1.0).abs() < 1e-15);
        assert!((m[0][1].unwrap() + 1.0).abs() < 1e-15);
        let flat = SampleMatrix::from_rows(
            vec!["a".into(), "b".into()],
            &(0..5).map(|i| vec![1.0, i as f64]).collect::<Vec<_>>(),
            0,
        )
        .unwrap();
        assert_eq!(correlation_matrix(&flat, &[0], &[1]).unwrap()[0][0], None);
    }

    #[test]
    fn csv_header() {
        let csv = sobol_csv(&[]);
        assert_eq!(
            csv.trim(),
            "group,S_main,S_main_sd,T_total,T_total_sd,main_numerator,total_numerator,total_variance"
        );
    }
}

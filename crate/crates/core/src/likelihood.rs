//! Missing-data likelihood, pseudo-likelihoods, MLE fitting and BIC.
//!
//! All log-likelihoods use natural logs. A traversed edge with probability
//! zero yields `f64::NEG_INFINITY` rather than an error, so a search can rank
//! such models as strictly worst.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{group_counts, DataSet, EdgeCounts, GroupedCounts};
use crate::error::{Error, Result};
use crate::trees::{EventTree, StagedTreeModel, Staging, Theta, VertexId};

/// Which (pseudo-)likelihood a value or a search score refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LikKind {
    FullMissing,
    Complete,
    Omit,
    FirstMissing,
    StageAverage,
}

impl LikKind {
    pub const ALL: [LikKind; 5] = [
        LikKind::FullMissing,
        LikKind::Complete,
        LikKind::Omit,
        LikKind::FirstMissing,
        LikKind::StageAverage,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogLikValue {
    pub loglik: f64,
    pub n_effective: usize,
    pub dim: usize,
    pub kind: LikKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Relative-frequency estimate with additive smoothing; all-zero stages become uniform.
pub fn fit_mle(tree: &EventTree, staging: &Staging, counts: &EdgeCounts, smoothing: f64) -> Result<Theta> {
    if !(smoothing >= 0.0) || !smoothing.is_finite() {
        return Err(Error::InvalidArgument(format!("smoothing must be >= 0, got {smoothing}")));
    }
    if counts.counts.len() != staging.num_stages() {
        return Err(Error::InvalidArgument(format!(
            "{} count vectors for {} stages",
            counts.counts.len(),
            staging.num_stages()
        )));
    }
    let mut probs = Vec::with_capacity(staging.num_stages());
    for (s, c) in counts.counts.iter().enumerate() {
        let k = tree.labels_of(staging.representative(s)).len();
        if c.len() != k {
            return Err(Error::InvalidArgument(format!("stage {s} has {} counts, expected {k}", c.len())));
        }
        if c.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("stage {s} has a negative or non-finite count")));
        }
        let total: f64 = c.iter().map(|&x| x + smoothing).sum();
        if total > 0.0 {
            probs.push(c.iter().map(|&x| (x + smoothing) / total).collect());
        } else {
            probs.push(vec![1.0 / k as f64; k]);
        }
    }
    Ok(Theta::from_raw(probs))
}

/// Σ_s Σ_w n_{s,w} log θ_{s,w} for complete data.
pub fn loglik_complete(model: &StagedTreeModel, data: &DataSet) -> Result<LogLikValue> {
    let theta = model.theta()?;
    let counts = crate::data::complete_edge_counts_from_data(&model.tree, &model.staging, data)?;
    Ok(LogLikValue {
        loglik: loglik_from_counts(theta, &counts),
        n_effective: data.len(),
        dim: model.staging.dim(&model.tree),
        kind: LikKind::Complete,
        warning: None,
    })
}

pub(crate) fn loglik_from_counts(theta: &Theta, counts: &EdgeCounts) -> f64 {
    let mut ll = 0.0;
    for (s, c) in counts.counts.iter().enumerate() {
        for (w, &n) in c.iter().enumerate() {
            if n > 0.0 {
                ll += n * ln(theta.stage(s)[w]);
            }
        }
    }
    ll
}

/// Σ_λ∈Λ_i θ_λ for every group.
pub(crate) fn group_masses(model: &StagedTreeModel, grouped: &GroupedCounts) -> Result<Vec<f64>> {
    let paths = model.path_probabilities()?;
    Ok(grouped
        .groups
        .iter()
        .map(|g| g.paths.paths.iter().map(|&p| paths[p]).sum())
        .collect())
}

/// Σ_i n_i log Σ_{λ∈Λ_i} θ_λ (up to the dropped missingness factor).
pub fn loglik_full_missing(model: &StagedTreeModel, grouped: &GroupedCounts) -> Result<LogLikValue> {
    let masses = group_masses(model, grouped)?;
    let loglik = grouped
        .groups
        .iter()
        .zip(&masses)
        .map(|(g, &m)| g.count as f64 * ln(m))
        .sum();
    Ok(LogLikValue {
        loglik,
        n_effective: grouped.total,
        dim: model.staging.dim(&model.tree),
        kind: LikKind::FullMissing,
        warning: None,
    })
}

/// Likelihood restricted to rows with a single possible path.
pub fn loglik_omit(model: &StagedTreeModel, grouped: &GroupedCounts) -> Result<LogLikValue> {
    let paths = model.path_probabilities()?;
    let mut loglik = 0.0;
    for &g in &grouped.singleton {
        let group = &grouped.groups[g];
        loglik += group.count as f64 * ln(paths[group.paths.paths[0]]);
    }
    let n = grouped.singleton_total();
    Ok(LogLikValue {
        loglik,
        n_effective: n,
        dim: model.staging.dim(&model.tree),
        kind: LikKind::Omit,
        warning: (n == 0).then(|| "no complete rows".to_string()),
    })
}

/// Per group and per edge depth: the situations visited at the edge's tail and
/// the edge label if it is shared by every possible path.
#[derive(Clone, Debug)]
pub(crate) struct EdgeColumn {
    pub vertices: Vec<VertexId>,
    pub label: Option<String>,
}

pub(crate) fn edge_columns(tree: &EventTree, grouped: &GroupedCounts) -> Vec<Vec<EdgeColumn>> {
    grouped
        .groups
        .iter()
        .map(|g| {
            let len = tree.path(g.paths.paths[0]).len();
            (1..len)
                .map(|j| {
                    let mut vertices: Vec<VertexId> = g.paths.paths.iter().map(|&p| tree.path(p)[j - 1]).collect();
                    vertices.sort_unstable();
                    vertices.dedup();
                    let first = tree.edge_label(tree.path(g.paths.paths[0])[j]);
                    let common = g
                        .paths
                        .paths
                        .iter()
                        .all(|&p| tree.edge_label(tree.path(p)[j]) == first);
                    EdgeColumn { vertices, label: common.then(|| first.to_string()) }
                })
                .collect()
        })
        .collect()
}

fn in_one_stage(staging: &Staging, vertices: &[VertexId]) -> bool {
    let s = staging.stage_of(vertices[0]);
    vertices[1..].iter().all(|&v| staging.stage_of(v) == s)
}

/// Shared evaluator so first-missing and stage-average sum identical terms in identical order.
fn included_terms_loglik(
    model: &StagedTreeModel,
    grouped: &GroupedCounts,
    include: impl Fn(&EdgeColumn) -> bool,
) -> Result<f64> {
    let theta = model.theta()?;
    let tree = &model.tree;
    let mut loglik = 0.0;
    for (g, cols) in grouped.groups.iter().zip(edge_columns(tree, grouped)) {
        let mut term = 0.0;
        for col in &cols {
            let Some(label) = &col.label else { continue };
            if !include(col) {
                continue;
            }
            let v = col.vertices[0];
            let slot = tree.labels_of(v).iter().position(|l| l == label).unwrap();
            term += ln(theta.stage(model.staging.stage_of(v).unwrap())[slot]);
        }
        loglik += g.count as f64 * term;
    }
    Ok(loglik)
}

/// Each group contributes the edges shared by all its possible paths' common prefix.
pub fn loglik_first_missing(model: &StagedTreeModel, grouped: &GroupedCounts) -> Result<LogLikValue> {
    let loglik = included_terms_loglik(model, grouped, |col| col.vertices.len() == 1)?;
    Ok(LogLikValue {
        loglik,
        n_effective: grouped.total,
        dim: model.staging.dim(&model.tree),
        kind: LikKind::FirstMissing,
        warning: None,
    })
}

/// Each group contributes every edge whose tail situations all share one stage
/// and whose label is common to all possible paths.
pub fn loglik_stage_average(model: &StagedTreeModel, grouped: &GroupedCounts) -> Result<LogLikValue> {
    let staging = &model.staging;
    let loglik = included_terms_loglik(model, grouped, |col| in_one_stage(staging, &col.vertices))?;
    Ok(LogLikValue {
        loglik,
        n_effective: grouped.total,
        dim: model.staging.dim(&model.tree),
        kind: LikKind::StageAverage,
        warning: None,
    })
}

/// Dispatch on kind. `Complete` requires every group to be a single path.
pub fn loglik(kind: LikKind, model: &StagedTreeModel, grouped: &GroupedCounts) -> Result<LogLikValue> {
    match kind {
        LikKind::FullMissing => loglik_full_missing(model, grouped),
        LikKind::Omit => loglik_omit(model, grouped),
        LikKind::FirstMissing => loglik_first_missing(model, grouped),
        LikKind::StageAverage => loglik_stage_average(model, grouped),
        LikKind::Complete => {
            if !grouped.is_complete() {
                return Err(Error::MissingValues);
            }
            let theta = model.theta()?;
            let mut pc = vec![0.0; model.tree.num_paths()];
            for g in &grouped.groups {
                pc[g.paths.paths[0]] += g.count as f64;
            }
            let counts = crate::data::complete_edge_counts(&model.tree, &model.staging, &pc)?;
            Ok(LogLikValue {
                loglik: loglik_from_counts(theta, &counts),
                n_effective: grouped.total,
                dim: model.staging.dim(&model.tree),
                kind,
                warning: None,
            })
        }
    }
}

/// Convenience wrapper grouping `data` first.
pub fn loglik_data(kind: LikKind, model: &StagedTreeModel, data: &DataSet) -> Result<LogLikValue> {
    let grouped = group_counts(&model.tree, data)?;
    loglik(kind, model, &grouped)
}

/// BIC = loglik - 0.5 log(n) dim; higher is better.
pub fn bic_score(ll: &LogLikValue, n_for_penalty: usize) -> Result<f64> {
    if n_for_penalty == 0 {
        return Err(Error::InvalidArgument("BIC penalty needs n >= 1".into()));
    }
    if ll.loglik == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ll.loglik - 0.5 * (n_for_penalty as f64).ln() * ll.dim as f64)
}

/// Sample size used in the BIC penalty for each kind.
pub fn penalty_n(kind: LikKind, grouped: &GroupedCounts) -> usize {
    match kind {
        LikKind::Omit => grouped.singleton_total(),
        _ => grouped.total,
    }
}

#[derive(Clone, Debug)]
struct MultiRecord {
    vertices: Vec<VertexId>,
    slot: usize,
    weight: f64,
}

/// Observed edge counts attributable to situations, built once per data set.
///
/// Counts that pin down a single situation are stored per vertex. Stage-average
/// counts spanning several situations at one depth are kept as records and only
/// count towards a stage containing all of them.
#[derive(Clone, Debug)]
pub struct ObservationTable {
    kind: LikKind,
    vertex_counts: Vec<Vec<f64>>,
    multi: Vec<Vec<MultiRecord>>,
    penalty_n: usize,
}

impl ObservationTable {
    /// Table for `kind`. `FullMissing` uses stage-average counts as its plug-in estimator.
    pub fn new(tree: &EventTree, grouped: &GroupedCounts, kind: LikKind) -> Result<Self> {
        let mut vertex_counts: Vec<Vec<f64>> = (0..tree.num_vertices())
            .map(|v| if tree.is_situation(v) { vec![0.0; tree.labels_of(v).len()] } else { Vec::new() })
            .collect();
        let mut multi_map: BTreeMap<(usize, Vec<VertexId>, usize), f64> = BTreeMap::new();
        let add_path = |vc: &mut Vec<Vec<f64>>, path: usize, n: f64| {
            for &w in &tree.path(path)[1..] {
                vc[tree.parent(w).unwrap()][tree.slot(w)] += n;
            }
        };
        match kind {
            LikKind::Complete | LikKind::Omit => {
                if kind == LikKind::Complete && !grouped.is_complete() {
                    return Err(Error::MissingValues);
                }
                for &g in &grouped.singleton {
                    let group = &grouped.groups[g];
                    add_path(&mut vertex_counts, group.paths.paths[0], group.count as f64);
                }
            }
            LikKind::FirstMissing | LikKind::StageAverage | LikKind::FullMissing => {
                let columns = edge_columns(tree, grouped);
                for (g, cols) in grouped.groups.iter().zip(&columns) {
                    let n = g.count as f64;
                    for col in cols {
                        let Some(label) = &col.label else { continue };
                        let v0 = col.vertices[0];
                        let slot = tree.labels_of(v0).iter().position(|l| l == label).unwrap();
                        if col.vertices.len() == 1 {
                            vertex_counts[v0][slot] += n;
                        } else if kind != LikKind::FirstMissing {
                            // Records across situations with different label sets can never
                            // be in one stage.
                            let same_set = col.vertices.iter().all(|&v| tree.label_set_id(v) == tree.label_set_id(v0));
                            if same_set {
                                *multi_map.entry((tree.depth(v0), col.vertices.clone(), slot)).or_insert(0.0) += n;
                            }
                        }
                    }
                }
            }
        }
        let mut multi = vec![Vec::new(); tree.num_depths()];
        for ((d, vertices, slot), weight) in multi_map {
            multi[d].push(MultiRecord { vertices, slot, weight });
        }
        Ok(Self { kind, vertex_counts, multi, penalty_n: penalty_n(kind, grouped) })
    }

    pub fn kind(&self) -> LikKind {
        self.kind
    }

    pub fn penalty_n(&self) -> usize {
        self.penalty_n
    }

    /// Pooled counts for a set of same-depth situations (sorted ascending).
    pub fn stage_counts(&self, tree: &EventTree, members: &[VertexId]) -> Vec<f64> {
        let mut c = vec![0.0; tree.labels_of(members[0]).len()];
        for &v in members {
            for (x, y) in c.iter_mut().zip(&self.vertex_counts[v]) {
                *x += y;
            }
        }
        for r in &self.multi[tree.depth(members[0])] {
            if is_sorted_subset(&r.vertices, members) {
                c[r.slot] += r.weight;
            }
        }
        c
    }

    pub fn edge_counts(&self, tree: &EventTree, staging: &Staging) -> EdgeCounts {
        EdgeCounts { counts: staging.stages().iter().map(|m| self.stage_counts(tree, m)).collect() }
    }

    /// MLE of this table's pseudo-likelihood under `staging`.
    pub fn fit(&self, tree: &EventTree, staging: &Staging, smoothing: f64) -> Result<Theta> {
        fit_mle(tree, staging, &self.edge_counts(tree, staging), smoothing)
    }
}

/// Maximized log-likelihood contribution of one stage: Σ_w c_w log(c_w / c).
pub(crate) fn stage_max_loglik(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts.iter().filter(|&&c| c > 0.0).map(|&c| c * (c / total).ln()).sum()
}

fn is_sorted_subset(small: &[VertexId], big: &[VertexId]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.by_ref().any(|y| y == x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::trees::{build_event_tree, full_independence_staging, saturated_staging, VariableSpec, PROB_SUM_TOL};

    fn bin(k: usize) -> VariableSpec {
        let names = (0..k).map(|i| format!("X{i}")).collect();
        let levels = (0..k).map(|_| vec!["a".to_string(), "b".to_string()]).collect();
        VariableSpec::new(names, levels).unwrap()
    }

    fn one_stage_counts(c: &[f64]) -> (EventTree, Staging, EdgeCounts) {
        let spec = VariableSpec::new(
            vec!["X".into()],
            vec![(0..c.len()).map(|i| format!("l{i}")).collect()],
        )
        .unwrap();
        let t = build_event_tree(&spec).unwrap();
        let s = saturated_staging(&t);
        (t, s, EdgeCounts { counts: vec![c.to_vec()] })
    }

    #[test]
    fn mle_relative_frequencies() {
        let (t, s, c) = one_stage_counts(&[3.0, 1.0]);
        assert_eq!(fit_mle(&t, &s, &c, 0.0).unwrap().stage(0), &[0.75, 0.25]);
        let (t, s, c) = one_stage_counts(&[0.0, 0.0]);
        assert_eq!(fit_mle(&t, &s, &c, 1.0).unwrap().stage(0), &[0.5, 0.5]);
        assert_eq!(fit_mle(&t, &s, &c, 0.0).unwrap().stage(0), &[0.5, 0.5]);
        let (t, s, c) = one_stage_counts(&[2.0, 2.0, 4.0]);
        assert_eq!(fit_mle(&t, &s, &c, 0.0).unwrap().stage(0), &[0.25, 0.25, 0.5]);
        assert!(fit_mle(&t, &s, &c, -1.0).is_err());
    }

    fn uniform_model(k: usize) -> StagedTreeModel {
        let t = build_event_tree(&bin(k)).unwrap();
        let s = saturated_staging(&t);
        let th = Theta::uniform(&t, &s);
        StagedTreeModel::new(t, s, Some(th)).unwrap()
    }

    #[test]
    fn complete_single_row() {
        let m = uniform_model(3);
        let d = DataSet::new(bin(3), vec![Sample::complete(&[0, 1, 1])]).unwrap();
        let ll = loglik_complete(&m, &d).unwrap();
        assert!((ll.loglik - (1.0f64 / 8.0).ln()).abs() < 1e-15);
        assert_eq!(ll.n_effective, 1);
        assert_eq!(ll.dim, 7);
    }

    #[test]
    fn zero_probability_edge_is_negative_infinity() {
        let t = build_event_tree(&bin(1)).unwrap();
        let s = saturated_staging(&t);
        let th = Theta::new(&t, &s, vec![vec![1.0, 0.0]], PROB_SUM_TOL).unwrap();
        let m = StagedTreeModel::new(t, s, Some(th)).unwrap();
        let d = DataSet::new(bin(1), vec![Sample::complete(&[1])]).unwrap();
        let ll = loglik_complete(&m, &d).unwrap();
        assert_eq!(ll.loglik, f64::NEG_INFINITY);
        assert_eq!(bic_score(&ll, 1).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn missing_values_rejected_by_complete() {
        let m = uniform_model(2);
        let d = DataSet::new(bin(2), vec![Sample::new(vec![None, Some(0)])]).unwrap();
        assert!(matches!(loglik_complete(&m, &d), Err(Error::MissingValues)));
    }

    #[test]
    fn uniform_with_holes() {
        let m = uniform_model(4);
        let d = DataSet::new(bin(4), vec![Sample::new(vec![Some(0), None, Some(1), None])]).unwrap();
        let g = group_counts(&m.tree, &d).unwrap();
        let ll = loglik_full_missing(&m, &g).unwrap();
        assert!((ll.loglik - 2.0 * 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn empty_groups_give_zero() {
        let m = uniform_model(2);
        let g = GroupedCounts { groups: vec![], singleton: vec![], total: 0, row_group: vec![] };
        let ll = loglik_full_missing(&m, &g).unwrap();
        assert_eq!((ll.loglik, ll.n_effective), (0.0, 0));
    }

    #[test]
    fn omit_with_all_rows_incomplete() {
        let m = uniform_model(2);
        let d = DataSet::new(bin(2), vec![Sample::new(vec![None, Some(0)]); 3]).unwrap();
        let g = group_counts(&m.tree, &d).unwrap();
        let ll = loglik_omit(&m, &g).unwrap();
        assert_eq!(ll.n_effective, 0);
        assert_eq!(ll.loglik, 0.0);
        assert!(ll.warning.is_some());
    }

    fn skewed_model(k: usize, staging_full_indep: bool) -> StagedTreeModel {
        let t = build_event_tree(&bin(k)).unwrap();
        let s = if staging_full_indep { full_independence_staging(&t).unwrap() } else { saturated_staging(&t) };
        let probs = (0..s.num_stages()).map(|i| {
            let p = 0.15 + 0.7 * ((i * 37 % 11) as f64 / 10.0);
            vec![p, 1.0 - p]
        });
        let th = Theta::new(&t, &s, probs.collect(), PROB_SUM_TOL).unwrap();
        StagedTreeModel::new(t, s, Some(th)).unwrap()
    }

    #[test]
    fn first_missing_uses_prefix_only() {
        let m = skewed_model(3, false);
        let d = DataSet::new(bin(3), vec![Sample::new(vec![Some(0), None, Some(1)])]).unwrap();
        let g = group_counts(&m.tree, &d).unwrap();
        let fm = loglik_first_missing(&m, &g).unwrap();
        let root = m.theta.as_ref().unwrap().stage(0)[0];
        assert_eq!(fm.loglik, root.ln());

        // A complete row contributes its whole path, like omit.
        let d2 = DataSet::new(bin(3), vec![Sample::complete(&[1, 0, 1])]).unwrap();
        let g2 = group_counts(&m.tree, &d2).unwrap();
        let fm2 = loglik_first_missing(&m, &g2).unwrap();
        let om2 = loglik_omit(&m, &g2).unwrap();
        assert!((fm2.loglik - om2.loglik).abs() < 1e-14);

        // Mixed data adds up per row.
        let both = DataSet::new(bin(3), vec![d.rows()[0].clone(), d2.rows()[0].clone()]).unwrap();
        let gb = group_counts(&m.tree, &both).unwrap();
        let fmb = loglik_first_missing(&m, &gb).unwrap();
        assert!((fmb.loglik - (fm.loglik + fm2.loglik)).abs() < 1e-14);
    }

    #[test]
    fn first_missing_leading_hole_contributes_nothing() {
        let m = skewed_model(2, false);
        let d = DataSet::new(bin(2), vec![Sample::new(vec![None, Some(1)])]).unwrap();
        let g = group_counts(&m.tree, &d).unwrap();
        assert_eq!(loglik_first_missing(&m, &g).unwrap().loglik, 0.0);
    }

    #[test]
    fn stage_average_uses_pooled_depth() {
        // Three binary variables; depth-1 situations {1, 2} share a stage.
        let t = build_event_tree(&bin(3)).unwrap();
        let s = Staging::from_partition(&t, vec![vec![0], vec![1, 2], vec![3], vec![4], vec![5], vec![6]]).unwrap();
        let probs = vec![vec![0.3, 0.7], vec![0.4, 0.6], vec![0.1, 0.9], vec![0.2, 0.8], vec![0.35, 0.65], vec![0.45, 0.55]];
        let th = Theta::new(&t, &s, probs, PROB_SUM_TOL).unwrap();
        let m = StagedTreeModel::new(t, s, Some(th)).unwrap();
        // Row (a, MISSING, b): depth-2 edge missing; depth-3 tail situations {3, 4} are in
        // different stages, so only the depth-1 edge counts.
        let d = DataSet::new(bin(3), vec![Sample::new(vec![Some(0), None, Some(1)])]).unwrap();
        let g = group_counts(&m.tree, &d).unwrap();
        let sa = loglik_stage_average(&m, &g).unwrap();
        assert!((sa.loglik - 0.3f64.ln()).abs() < 1e-15);

        // Row (MISSING, b, a): depth-2 tails {1, 2} share a stage, so θ(b) of that stage
        // is included; depth-3 tails {4, 6} do not.
        let d = DataSet::new(bin(3), vec![Sample::new(vec![None, Some(1), Some(0)])]).unwrap();
        let g = group_counts(&m.tree, &d).unwrap();
        let sa = loglik_stage_average(&m, &g).unwrap();
        assert!((sa.loglik - 0.6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn stage_average_includes_later_edge_when_tails_pooled() {
        // Depth-2 situations 3..=6 in one stage, the rest saturated.
        let t = build_event_tree(&bin(3)).unwrap();
        let s = Staging::from_partition(&t, vec![vec![0], vec![1], vec![2], vec![3, 4, 5, 6]]).unwrap();
        let th = Theta::new(&t, &s, vec![vec![0.3, 0.7], vec![0.4, 0.6], vec![0.1, 0.9], vec![0.25, 0.75]], PROB_SUM_TOL).unwrap();
        let m = StagedTreeModel::new(t, s, Some(th)).unwrap();
        // (a, MISSING, b) → depth-1 edge a (0.3) and depth-3 edge b (0.75).
        let d = DataSet::new(bin(3), vec![Sample::new(vec![Some(0), None, Some(1)])]).unwrap();
        let g = group_counts(&m.tree, &d).unwrap();
        let sa = loglik_stage_average(&m, &g).unwrap();
        assert!((sa.loglik - (0.3f64.ln() + 0.75f64.ln())).abs() < 1e-15);
        let fm = loglik_first_missing(&m, &g).unwrap();
        assert!((fm.loglik - 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bic_examples() {
        let ll = LogLikValue { loglik: -100.0, n_effective: 100, dim: 4, kind: LikKind::Complete, warning: None };
        let b = bic_score(&ll, 100).unwrap();
        assert!((b - (-100.0 - 2.0 * 100f64.ln())).abs() < 1e-12);
        assert!((b + 109.210340371976).abs() < 1e-9);
        let zero = LogLikValue { dim: 0, ..ll.clone() };
        assert_eq!(bic_score(&zero, 100).unwrap(), -100.0);
        let small = LogLikValue { dim: 3, ..ll.clone() };
        let large = LogLikValue { dim: 5, ..ll.clone() };
        assert!(bic_score(&small, 100).unwrap() > bic_score(&large, 100).unwrap());
        assert!(bic_score(&ll, 0).is_err());
    }

    #[test]
    fn observation_tables_on_complete_data_agree() {
        let spec = bin(3);
        let t = build_event_tree(&spec).unwrap();
        let rows = (0..40).map(|i| Sample::complete(&[i % 2, (i / 2) % 2, (i / 3) % 2])).collect();
        let d = DataSet::new(spec, rows).unwrap();
        let g = group_counts(&t, &d).unwrap();
        let s = saturated_staging(&t);
        let reference = ObservationTable::new(&t, &g, LikKind::Complete).unwrap().edge_counts(&t, &s);
        for kind in LikKind::ALL {
            let table = ObservationTable::new(&t, &g, kind).unwrap();
            assert_eq!(table.edge_counts(&t, &s), reference, "{kind:?}");
        }
    }

    #[test]
    fn stage_max_loglik_matches_direct() {
        let c = [3.0, 1.0, 0.0];
        let direct = 3.0 * 0.75f64.ln() + 0.25f64.ln();
        assert!((stage_max_loglik(&c) - direct).abs() < 1e-15);
        assert_eq!(stage_max_loglik(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn sorted_subset() {
        assert!(is_sorted_subset(&[2, 5], &[1, 2, 3, 5]));
        assert!(!is_sorted_subset(&[2, 6], &[1, 2, 3, 5]));
    }
}

//! Greedy staging search (hill-climbing and backward hill-climbing) and
//! variable-order search over X-compatible event trees.
//!
//! Scores are BIC values (higher is better). Every kind except `FullMissing`
//! decomposes over stages, so a candidate move is scored from the two or three
//! stage terms it touches; stage terms are memoized on their member sets.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{group_counts, DataSet, GroupedCounts};
use crate::error::{Error, Result};
use crate::likelihood::{stage_max_loglik, LikKind, ObservationTable};
use crate::trees::{build_event_tree, saturated_staging, EventTree, StagedTreeModel, Staging, StageId, VertexId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Hc,
    Bhc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub score_kind: LikKind,
    pub strategy: Strategy,
    /// HC: total accepted moves. BHC: accepted merges per depth.
    pub max_iter: usize,
    pub seed: u64,
    pub score_epsilon: f64,
    /// Additive smoothing for the final θ only; scoring always uses the MLE.
    pub smoothing: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            score_kind: LikKind::FullMissing,
            strategy: Strategy::Hc,
            max_iter: 100_000,
            seed: 0,
            score_epsilon: 1e-9,
            smoothing: 0.0,
        }
    }
}

impl SearchConfig {
    pub fn new(score_kind: LikKind, strategy: Strategy) -> Self {
        Self { score_kind, strategy, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        if !(self.score_epsilon >= 0.0) {
            return Err(Error::InvalidArgument("score_epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub description: String,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub model: StagedTreeModel,
    pub score: f64,
    pub trace: Vec<TraceStep>,
    pub elapsed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Move {
    Merge(StageId, StageId),
    Split(StageId, VertexId),
}

/// Canonical partition: members sorted, stages ordered by smallest member.
type Partition = Vec<Vec<VertexId>>;

fn canonical(mut p: Partition) -> Partition {
    for m in &mut p {
        m.sort_unstable();
    }
    p.sort_unstable_by_key(|m| m[0]);
    p
}

fn apply(p: &Partition, mv: Move) -> Partition {
    let mut next = p.clone();
    match mv {
        Move::Merge(a, b) => {
            let moved = std::mem::take(&mut next[b]);
            next[a].extend(moved);
            next.remove(b);
        }
        Move::Split(s, v) => {
            next[s].retain(|&u| u != v);
            next.push(vec![v]);
        }
    }
    canonical(next)
}

/// BIC scorer for stagings of one tree on one data set.
pub struct StagingScorer<'a> {
    tree: &'a EventTree,
    grouped: GroupedCounts,
    table: ObservationTable,
    half_log_n: f64,
    cache: HashMap<Vec<VertexId>, f64>,
}

impl<'a> StagingScorer<'a> {
    pub fn new(tree: &'a EventTree, data: &DataSet, kind: LikKind) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let grouped = group_counts(tree, data)?;
        Self::from_grouped(tree, grouped, kind)
    }

    pub fn from_grouped(tree: &'a EventTree, grouped: GroupedCounts, kind: LikKind) -> Result<Self> {
        if grouped.total == 0 {
            return Err(Error::EmptyData);
        }
        let table = ObservationTable::new(tree, &grouped, kind)?;
        let n = table.penalty_n();
        if n == 0 {
            return Err(Error::InvalidArgument(format!("{kind:?} score has no usable rows")));
        }
        Ok(Self { tree, grouped, table, half_log_n: 0.5 * (n as f64).ln(), cache: HashMap::new() })
    }

    pub fn kind(&self) -> LikKind {
        self.table.kind()
    }

    fn decomposable(&self) -> bool {
        self.table.kind() != LikKind::FullMissing
    }

    /// Maximized pseudo-log-likelihood of one stage minus its BIC penalty.
    fn stage_term(&mut self, members: &[VertexId]) -> f64 {
        if let Some(&t) = self.cache.get(members) {
            return t;
        }
        let counts = self.table.stage_counts(self.tree, members);
        let t = stage_max_loglik(&counts) - self.half_log_n * (counts.len() - 1) as f64;
        self.cache.insert(members.to_vec(), t);
        t
    }

    fn partition_score(&mut self, p: &Partition) -> f64 {
        if self.decomposable() {
            p.iter().map(|m| self.stage_term(m)).sum()
        } else {
            self.full_missing_score(p)
        }
    }

    fn full_missing_score(&self, p: &Partition) -> f64 {
        let tree = self.tree;
        let mut edge = vec![1.0; tree.num_vertices()];
        let mut dim = 0usize;
        for m in p {
            let c = self.table.stage_counts(tree, m);
            dim += c.len() - 1;
            let total: f64 = c.iter().sum();
            let k = c.len() as f64;
            for &v in m {
                for &w in tree.children(v) {
                    edge[w] = if total > 0.0 { c[tree.slot(w)] / total } else { 1.0 / k };
                }
            }
        }
        let path_prob: Vec<f64> = (0..tree.num_paths())
            .map(|q| tree.path(q)[1..].iter().map(|&v| edge[v]).product())
            .collect();
        let mut ll = 0.0;
        for g in &self.grouped.groups {
            let mass: f64 = g.paths.paths.iter().map(|&q| path_prob[q]).sum();
            if mass <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += g.count as f64 * mass.ln();
        }
        ll - self.half_log_n * dim as f64
    }

    /// BIC of a staging.
    pub fn score(&mut self, staging: &Staging) -> f64 {
        self.partition_score(&staging.stages().to_vec())
    }

    fn delta(&mut self, p: &Partition, current: f64, mv: Move) -> f64 {
        if !self.decomposable() {
            let s = self.full_missing_score(&apply(p, mv));
            return improvement(s, current);
        }
        match mv {
            Move::Merge(a, b) => {
                let mut joined = p[a].clone();
                joined.extend_from_slice(&p[b]);
                joined.sort_unstable();
                self.stage_term(&joined) - self.stage_term(&p[a]) - self.stage_term(&p[b])
            }
            Move::Split(s, v) => {
                let rest: Vec<VertexId> = p[s].iter().copied().filter(|&u| u != v).collect();
                self.stage_term(&rest) + self.stage_term(&[v]) - self.stage_term(&p[s])
            }
        }
    }

    /// Model on `staging` with θ fitted to this scorer's observation table.
    pub fn fitted_model(&self, staging: Staging, smoothing: f64) -> Result<StagedTreeModel> {
        let theta = self.table.fit(self.tree, &staging, smoothing)?;
        StagedTreeModel::new(self.tree.clone(), staging, Some(theta))
    }
}

fn improvement(new: f64, current: f64) -> f64 {
    let d = new - current;
    if d.is_nan() {
        f64::NEG_INFINITY
    } else {
        d
    }
}

fn compatible(tree: &EventTree, a: &[VertexId], b: &[VertexId]) -> bool {
    tree.depth(a[0]) == tree.depth(b[0]) && tree.label_set_id(a[0]) == tree.label_set_id(b[0])
}

fn describe(tree: &EventTree, p: &Partition, mv: Move) -> String {
    match mv {
        Move::Merge(a, b) => format!("merge stages {a} and {b} at depth {}", tree.depth(p[a][0])),
        Move::Split(s, v) => format!("split situation {v} out of stage {s}"),
    }
}

struct Outcome {
    partition: Partition,
    score: f64,
    trace: Vec<TraceStep>,
}

/// Greedy loop: take the best move with gain above epsilon; ties go to the first
/// candidate in enumeration order.
fn climb(
    scorer: &mut StagingScorer,
    mut p: Partition,
    max_iter: usize,
    epsilon: f64,
    mut candidates: impl FnMut(&EventTree, &Partition) -> Vec<Move>,
) -> Outcome {
    let tree = scorer.tree;
    let mut score = scorer.partition_score(&p);
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let mut best: Option<(Move, f64)> = None;
        for mv in candidates(tree, &p) {
            let d = scorer.delta(&p, score, mv);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((mv, d));
            }
        }
        match best {
            Some((mv, d)) if d > epsilon => {
                let description = describe(tree, &p, mv);
                p = apply(&p, mv);
                score = scorer.partition_score(&p);
                trace.push(TraceStep { description, score });
            }
            _ => break,
        }
    }
    Outcome { partition: p, score, trace }
}

fn merges_at(tree: &EventTree, p: &Partition, depth: Option<usize>) -> Vec<Move> {
    let mut out = Vec::new();
    for a in 0..p.len() {
        if depth.is_some_and(|d| tree.depth(p[a][0]) != d) {
            continue;
        }
        for b in a + 1..p.len() {
            if compatible(tree, &p[a], &p[b]) {
                out.push(Move::Merge(a, b));
            }
        }
    }
    out
}

fn splits(p: &Partition) -> Vec<Move> {
    let mut out = Vec::new();
    for (s, m) in p.iter().enumerate() {
        if m.len() > 1 {
            out.extend(m.iter().map(|&v| Move::Split(s, v)));
        }
    }
    out
}

fn finish(scorer: &StagingScorer, outcome: Outcome, config: &SearchConfig, started: Instant) -> Result<SearchResult> {
    let staging = Staging::from_partition(scorer.tree, outcome.partition)?;
    let model = scorer.fitted_model(staging, config.smoothing)?;
    Ok(SearchResult {
        model,
        score: outcome.score,
        trace: outcome.trace,
        elapsed: started.elapsed().as_secs_f64(),
    })
}

/// Merge-only search from the saturated staging, one depth at a time root to leaves.
pub fn bhc_stage_search(tree: &EventTree, data: &DataSet, config: &SearchConfig) -> Result<SearchResult> {
    config.validate()?;
    if config.strategy != Strategy::Bhc {
        return Err(Error::InvalidArgument("bhc_stage_search needs strategy BHC".into()));
    }
    let started = Instant::now();
    let mut scorer = StagingScorer::new(tree, data, config.score_kind)?;
    bhc_with_scorer(&mut scorer, config, started)
}

fn bhc_with_scorer(scorer: &mut StagingScorer, config: &SearchConfig, started: Instant) -> Result<SearchResult> {
    let tree = scorer.tree;
    let mut p: Partition = saturated_staging(tree).stages().to_vec();
    let mut trace = Vec::new();
    let mut score = scorer.partition_score(&p);
    for d in 0..tree.num_depths() {
        let out = climb(scorer, p, config.max_iter, config.score_epsilon, |t, p| merges_at(t, p, Some(d)));
        p = out.partition;
        score = out.score;
        trace.extend(out.trace);
    }
    finish(scorer, Outcome { partition: p, score, trace }, config, started)
}

/// Merge-and-split search from `start` (saturated when `None`).
pub fn hc_stage_search(
    tree: &EventTree,
    data: &DataSet,
    config: &SearchConfig,
    start: Option<&Staging>,
) -> Result<SearchResult> {
    config.validate()?;
    if config.strategy != Strategy::Hc {
        return Err(Error::InvalidArgument("hc_stage_search needs strategy HC".into()));
    }
    let started = Instant::now();
    let mut scorer = StagingScorer::new(tree, data, config.score_kind)?;
    hc_with_scorer(&mut scorer, config, start, started)
}

fn hc_with_scorer(
    scorer: &mut StagingScorer,
    config: &SearchConfig,
    start: Option<&Staging>,
    started: Instant,
) -> Result<SearchResult> {
    let tree = scorer.tree;
    let p: Partition = match start {
        Some(s) => {
            if s.num_situations() != tree.num_situations() {
                return Err(Error::InvalidStaging("start staging belongs to a different tree".into()));
            }
            s.stages().to_vec()
        }
        None => saturated_staging(tree).stages().to_vec(),
    };
    let out = climb(scorer, p, config.max_iter, config.score_epsilon, |t, p| {
        let mut c = merges_at(t, p, None);
        c.extend(splits(p));
        c
    });
    finish(scorer, out, config, started)
}

/// Runs the configured strategy (HC from saturated, or BHC).
pub fn stage_search(tree: &EventTree, data: &DataSet, config: &SearchConfig) -> Result<SearchResult> {
    match config.strategy {
        Strategy::Hc => hc_stage_search(tree, data, config, None),
        Strategy::Bhc => bhc_stage_search(tree, data, config),
    }
}

/// Exhaustive enumeration limit without sampling.
pub const MAX_EXHAUSTIVE_VARIABLES: usize = 8;

/// Best ordering found by [`order_search_with`].
#[derive(Clone, Debug)]
pub struct OrderSearch<T> {
    /// New variable `i` is original variable `ordering[i]`.
    pub ordering: Vec<usize>,
    pub best: T,
    pub score: f64,
    pub evaluated: usize,
}

/// Orderings to evaluate, in lexicographic order.
pub fn candidate_orderings(k: usize, max_orders: Option<usize>, seed: u64) -> Result<Vec<Vec<usize>>> {
    let total: Option<usize> = (1..=k).try_fold(1usize, |acc, i| acc.checked_mul(i));
    match max_orders {
        None if k > MAX_EXHAUSTIVE_VARIABLES => Err(Error::InvalidArgument(format!(
            "{k} variables is too many for exhaustive order search; request sampling with max_orders"
        ))),
        Some(0) => Err(Error::InvalidArgument("max_orders must be >= 1".into())),
        Some(m) if total.is_none_or(|t| m < t) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seen: HashSet<Vec<usize>> = HashSet::new();
            let mut base: Vec<usize> = (0..k).collect();
            while seen.len() < m {
                base.shuffle(&mut rng);
                seen.insert(base.clone());
            }
            let mut out: Vec<Vec<usize>> = seen.into_iter().collect();
            out.sort();
            Ok(out)
        }
        _ => Ok((0..k).permutations(k).collect()),
    }
}

/// Evaluates `learner` on the event tree of every candidate ordering and keeps
/// the highest score; ties go to the lexicographically first ordering.
pub fn order_search_with<T>(
    data: &DataSet,
    max_orders: Option<usize>,
    seed: u64,
    mut learner: impl FnMut(&EventTree, &DataSet) -> Result<(T, f64)>,
) -> Result<OrderSearch<T>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let orders = candidate_orderings(data.spec().len(), max_orders, seed)?;
    let mut best: Option<OrderSearch<T>> = None;
    let evaluated = orders.len();
    for order in orders {
        let reordered = data.reordered(&order)?;
        let tree = build_event_tree(reordered.spec())?;
        let (value, score) = learner(&tree, &reordered)?;
        let better = match &best {
            None => true,
            Some(b) => score > b.score || (b.score == f64::NEG_INFINITY && score > f64::NEG_INFINITY),
        };
        if better {
            best = Some(OrderSearch { ordering: order, best: value, score, evaluated });
        }
    }
    Ok(best.expect("at least one ordering"))
}

/// Variable-order search running the configured stage search on every ordering.
pub fn order_search(data: &DataSet, config: &SearchConfig, max_orders: Option<usize>) -> Result<(Vec<usize>, SearchResult)> {
    let started = Instant::now();
    let found = order_search_with(data, max_orders, config.seed, |tree, d| {
        let r = stage_search(tree, d, config)?;
        let s = r.score;
        Ok((r, s))
    })?;
    let mut result = found.best;
    result.elapsed = started.elapsed().as_secs_f64();
    Ok((found.ordering, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::trees::VariableSpec;

    fn bin(k: usize) -> VariableSpec {
        let names = (0..k).map(|i| format!("X{i}")).collect();
        let levels = (0..k).map(|_| vec!["a".to_string(), "b".to_string()]).collect();
        VariableSpec::new(names, levels).unwrap()
    }

    /// Rows in exact proportions: X1 | X0 = a has P(a) = pa, X1 | X0 = b has P(a) = pb.
    fn two_var_data(pa: f64, pb: f64, n_each: usize) -> DataSet {
        let mut rows = Vec::new();
        for (x0, p) in [(0, pa), (1, pb)] {
            let na = (p * n_each as f64).round() as usize;
            rows.extend(std::iter::repeat_n(Sample::complete(&[x0, 0]), na));
            rows.extend(std::iter::repeat_n(Sample::complete(&[x0, 1]), n_each - na));
        }
        DataSet::new(bin(2), rows).unwrap()
    }

    #[test]
    fn bhc_merges_identical_situations() {
        let data = two_var_data(0.3, 0.3, 500);
        let tree = build_event_tree(data.spec()).unwrap();
        let cfg = SearchConfig::new(LikKind::Complete, Strategy::Bhc);
        let r = bhc_stage_search(&tree, &data, &cfg).unwrap();
        assert_eq!(r.model.staging.num_stages(), 2);
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn bhc_keeps_distinct_situations() {
        let data = two_var_data(0.2, 0.8, 500);
        let tree = build_event_tree(data.spec()).unwrap();
        let cfg = SearchConfig::new(LikKind::Complete, Strategy::Bhc);
        let r = bhc_stage_search(&tree, &data, &cfg).unwrap();
        assert_eq!(r.model.staging, saturated_staging(&tree));
        assert!(r.trace.is_empty());
    }

    #[test]
    fn max_iter_caps_merges_per_depth() {
        // Four identical depth-2 situations would merge in three steps.
        let spec = bin(3);
        let tree = build_event_tree(&spec).unwrap();
        let mut rows = Vec::new();
        for x0 in 0..2 {
            for x1 in 0..2 {
                rows.extend(std::iter::repeat_n(Sample::complete(&[x0, x1, 0]), 30));
                rows.extend(std::iter::repeat_n(Sample::complete(&[x0, x1, 1]), 70));
            }
        }
        let data = DataSet::new(spec, rows).unwrap();
        let cfg = SearchConfig { max_iter: 1, ..SearchConfig::new(LikKind::Complete, Strategy::Bhc) };
        let r = bhc_stage_search(&tree, &data, &cfg).unwrap();
        let depth2 = r.model.staging.stages_at_depth(&tree, 2).len();
        assert_eq!(depth2, 3);
        assert!(r.trace.len() <= tree.num_depths());
    }

    #[test]
    fn hc_splits_over_merged_start() {
        let data = two_var_data(0.1, 0.9, 500);
        let tree = build_event_tree(data.spec()).unwrap();
        let start = crate::trees::full_independence_staging(&tree).unwrap();
        let cfg = SearchConfig::new(LikKind::Complete, Strategy::Hc);
        let r = hc_stage_search(&tree, &data, &cfg, Some(&start)).unwrap();
        assert!(r.trace.iter().any(|t| t.description.starts_with("split")));
        assert_eq!(r.model.staging.num_stages(), 3);
    }

    #[test]
    fn hc_with_no_improving_move_returns_start() {
        let data = two_var_data(0.2, 0.8, 500);
        let tree = build_event_tree(data.spec()).unwrap();
        let cfg = SearchConfig::new(LikKind::Complete, Strategy::Hc);
        let r = hc_stage_search(&tree, &data, &cfg, None).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(r.model.staging, saturated_staging(&tree));
    }

    #[test]
    fn strategy_mismatch_and_empty_data() {
        let data = two_var_data(0.2, 0.8, 10);
        let tree = build_event_tree(data.spec()).unwrap();
        let cfg = SearchConfig::new(LikKind::Complete, Strategy::Hc);
        assert!(bhc_stage_search(&tree, &data, &cfg).is_err());
        let empty = DataSet::new(bin(2), vec![]).unwrap();
        assert!(matches!(hc_stage_search(&tree, &empty, &cfg, None), Err(Error::EmptyData)));
    }

    #[test]
    fn two_variables_two_orderings() {
        let data = two_var_data(0.2, 0.8, 100);
        assert_eq!(candidate_orderings(2, None, 0).unwrap().len(), 2);
        let cfg = SearchConfig::new(LikKind::Complete, Strategy::Bhc);
        let mut seen = Vec::new();
        let found = order_search_with(&data, None, 0, |tree, d| {
            let r = stage_search(tree, d, &cfg)?;
            seen.push(r.score);
            Ok(((), r.score))
        })
        .unwrap();
        assert_eq!(found.evaluated, 2);
        assert!(seen.iter().all(|&s| found.score >= s));
    }

    #[test]
    fn too_many_variables_refused() {
        assert!(candidate_orderings(9, None, 0).is_err());
        let sampled = candidate_orderings(9, Some(5), 1).unwrap();
        assert_eq!(sampled.len(), 5);
        assert!(sampled.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(candidate_orderings(3, Some(100), 1).unwrap().len(), 6);
    }

    #[test]
    fn full_missing_score_matches_complete_on_complete_data() {
        let data = two_var_data(0.3, 0.6, 200);
        let tree = build_event_tree(data.spec()).unwrap();
        let s = saturated_staging(&tree);
        let mut full = StagingScorer::new(&tree, &data, LikKind::FullMissing).unwrap();
        let mut comp = StagingScorer::new(&tree, &data, LikKind::Complete).unwrap();
        let a = full.score(&s);
        let b = comp.score(&s);
        assert!((a - b).abs() < 1e-9 * b.abs());
    }
}

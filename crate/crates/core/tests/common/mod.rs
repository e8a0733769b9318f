#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stm_core::data::{DataSet, Sample};
use stm_core::trees::{build_event_tree, EventTree, StagedTreeModel, Staging, Theta, VariableSpec};

pub fn random_spec(rng: &mut ChaCha8Rng, max_vars: usize, max_levels: usize) -> VariableSpec {
    let k = rng.random_range(1..=max_vars);
    let names = (0..k).map(|i| format!("V{i}")).collect();
    let levels = (0..k)
        .map(|_| (0..rng.random_range(2..=max_levels)).map(|j| format!("l{j}")).collect())
        .collect();
    VariableSpec::new(names, levels).unwrap()
}

/// Random partition of each depth's situations.
pub fn random_staging(rng: &mut ChaCha8Rng, tree: &EventTree) -> Staging {
    let mut assign = vec![None; tree.num_vertices()];
    for d in 0..tree.num_depths() {
        let sits = tree.situations_at_depth(d);
        let groups = rng.random_range(1..=sits.len());
        for &v in sits {
            assign[v] = Some(d * 1000 + rng.random_range(0..groups));
        }
    }
    Staging::from_assignment(tree, &assign).unwrap()
}

pub fn random_theta(rng: &mut ChaCha8Rng, tree: &EventTree, staging: &Staging) -> Theta {
    let probs = staging
        .stages()
        .iter()
        .map(|m| {
            let w: Vec<f64> = (0..tree.labels_of(m[0]).len()).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
        .collect();
    Theta::new(tree, staging, probs, 1e-9).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, spec: &VariableSpec) -> StagedTreeModel {
    let tree = build_event_tree(spec).unwrap();
    let staging = random_staging(rng, &tree);
    let theta = random_theta(rng, &tree, &staging);
    StagedTreeModel::new(tree, staging, Some(theta)).unwrap()
}

/// Uniformly drawn rows with each cell independently missing with probability `hole`.
pub fn random_data(rng: &mut ChaCha8Rng, spec: &VariableSpec, n: usize, hole: f64) -> DataSet {
    let rows = (0..n)
        .map(|_| {
            Sample::new(
                (0..spec.len())
                    .map(|d| (!rng.random_bool(hole)).then(|| rng.random_range(0..spec.level_count(d))))
                    .collect(),
            )
        })
        .collect();
    DataSet::new(spec.clone(), rows).unwrap()
}

/// Probability of a full assignment, walking the tree edge by edge.
pub fn assignment_probability(model: &StagedTreeModel, levels: &[usize]) -> f64 {
    let tree = &model.tree;
    let spec = tree.variables().unwrap();
    let theta = model.theta().unwrap();
    let mut v = tree.root();
    let mut p = 1.0;
    for (d, &l) in levels.iter().enumerate() {
        let child = tree.child_with_label(v, &spec.levels(d)[l]).unwrap();
        p *= theta.stage(model.staging.stage_of(v).unwrap())[tree.slot(child)];
        v = child;
    }
    p
}

/// All completions of a row's missing cells.
pub fn completions(spec: &VariableSpec, row: &Sample) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for (d, v) in row.values.iter().enumerate() {
        let options: Vec<usize> = match v {
            Some(x) => vec![*x],
            None => (0..spec.level_count(d)).collect(),
        };
        out = out
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |&o| {
                    let mut next = prefix.clone();
                    next.push(o);
                    next
                })
            })
            .collect();
    }
    out
}

/// Σ_rows log Σ_completions P(completion), by brute force.
pub fn oracle_full_loglik(model: &StagedTreeModel, data: &DataSet) -> f64 {
    data.rows()
        .iter()
        .map(|row| {
            completions(data.spec(), row)
                .iter()
                .map(|c| assignment_probability(model, c))
                .sum::<f64>()
                .ln()
        })
        .sum()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

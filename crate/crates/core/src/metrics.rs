//! Distances between stagings, path distributions and variable orderings.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trees::{build_event_tree, check_permutation, EventTree, StagedTreeModel, Staging, Theta, VariableSpec};

/// Fraction of unordered same-depth situation pairs on which the two stagings
/// disagree about sharing a stage. Depths with one situation contribute no pairs.
pub fn hamming_staging(tree: &EventTree, a: &Staging, b: &Staging) -> Result<f64> {
    if a.num_situations() != tree.num_situations() || b.num_situations() != tree.num_situations() {
        return Err(Error::MismatchedTrees);
    }
    let mut pairs = 0usize;
    let mut differ = 0usize;
    for d in 0..tree.num_depths() {
        let sits = tree.situations_at_depth(d);
        for (i, &u) in sits.iter().enumerate() {
            for &v in &sits[i + 1..] {
                pairs += 1;
                if (a.stage_of(u) == a.stage_of(v)) != (b.stage_of(u) == b.stage_of(v)) {
                    differ += 1;
                }
            }
        }
    }
    Ok(if pairs == 0 { 0.0 } else { differ as f64 / pairs as f64 })
}

/// Σ p log(p / q) in nats; infinite when q misses mass that p has.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::MismatchedTrees);
    }
    let mut kl = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CdDistance {
    pub value: f64,
    pub zero_probability: bool,
}

/// log max(q/p) − log min(q/p) over all outcomes.
pub fn cd_distance(p: &[f64], q: &[f64]) -> Result<CdDistance> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::MismatchedTrees);
    }
    if p.iter().chain(q).any(|&x| x <= 0.0) {
        return Ok(CdDistance { value: f64::INFINITY, zero_probability: true });
    }
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (&a, &b) in p.iter().zip(q) {
        let r = b.ln() - a.ln();
        hi = hi.max(r);
        lo = lo.min(r);
    }
    Ok(CdDistance { value: (hi - lo).max(0.0), zero_probability: false })
}

fn same_tree(p: &StagedTreeModel, q: &StagedTreeModel) -> Result<()> {
    if p.tree == q.tree {
        Ok(())
    } else {
        Err(Error::MismatchedTrees)
    }
}

/// KL divergence from the generator `p` to the estimate `q` over root-to-leaf paths.
pub fn kl_paths(p: &StagedTreeModel, q: &StagedTreeModel) -> Result<f64> {
    same_tree(p, q)?;
    kl_divergence(&p.path_probabilities()?, &q.path_probabilities()?)
}

/// Chan-Darwiche distance between the path distributions of generator `p` and estimate `q`.
pub fn cd_paths(p: &StagedTreeModel, q: &StagedTreeModel) -> Result<CdDistance> {
    same_tree(p, q)?;
    cd_distance(&p.path_probabilities()?, &q.path_probabilities()?)
}

/// Discordant pairs between two orderings of the same items, divided by C(k, 2).
pub fn kendall_orderings(a: &[usize], b: &[usize]) -> Result<f64> {
    let k = a.len();
    if b.len() != k {
        return Err(Error::InvalidArgument("orderings have different lengths".into()));
    }
    check_permutation(a, k)?;
    check_permutation(b, k)?;
    if k < 2 {
        return Ok(0.0);
    }
    let mut pos_b = vec![0usize; k];
    for (i, &x) in b.iter().enumerate() {
        pos_b[x] = i;
    }
    let mut discordant = 0usize;
    for i in 0..k {
        for j in i + 1..k {
            if pos_b[a[i]] > pos_b[a[j]] {
                discordant += 1;
            }
        }
    }
    Ok(discordant as f64 / (k * (k - 1) / 2) as f64)
}

/// Kendall distance between two orderings given as variable names.
pub fn kendall_names(a: &[String], b: &[String]) -> Result<f64> {
    let index: HashMap<&str, usize> = a.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    if index.len() != a.len() || b.len() != a.len() {
        return Err(Error::InvalidArgument("orderings are over different variable sets".into()));
    }
    let mapped: Vec<usize> = b
        .iter()
        .map(|s| {
            index
                .get(s.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("variable `{s}` missing from one ordering")))
        })
        .collect::<Result<_>>()?;
    kendall_orderings(&(0..a.len()).collect::<Vec<_>>(), &mapped)
}

fn same_level_sets(a: &[String], b: &[String]) -> bool {
    a.len() == b.len() && a.iter().all(|l| b.contains(l))
}

/// Position in `own` of each variable of `target`, checking level sets match.
fn variable_map(own: &VariableSpec, target: &VariableSpec) -> Result<Vec<usize>> {
    if own.len() != target.len() {
        return Err(Error::MismatchedTrees);
    }
    let map: Vec<usize> = target
        .names()
        .iter()
        .map(|n| own.position(n).ok_or(Error::MismatchedTrees))
        .collect::<Result<_>>()?;
    for (t, &o) in map.iter().enumerate() {
        if !same_level_sets(own.levels(o), target.levels(t)) {
            return Err(Error::MismatchedTrees);
        }
    }
    Ok(map)
}

fn x_spec(model: &StagedTreeModel) -> Result<&VariableSpec> {
    model
        .tree
        .variables()
        .ok_or_else(|| Error::InvalidTree("alignment needs an X-compatible tree".into()))
}

/// Path probabilities of `model` listed in the path order of the X-compatible
/// tree over `target`. Both specs must hold the same variables and level
/// sets; variable order and level order may differ.
pub fn aligned_path_probabilities(model: &StagedTreeModel, target: &VariableSpec) -> Result<Vec<f64>> {
    let own = x_spec(model)?;
    let map = variable_map(own, target)?;
    let tree = &model.tree;
    let probs = model.path_probabilities()?;
    let mut by_labels: HashMap<Vec<&str>, f64> = HashMap::with_capacity(probs.len());
    for (p, &pr) in probs.iter().enumerate() {
        let labels = tree.path_labels(p);
        by_labels.insert(map.iter().map(|&o| labels[o]).collect(), pr);
    }
    let target_tree = build_event_tree(target)?;
    (0..target_tree.num_paths())
        .map(|p| by_labels.get(&target_tree.path_labels(p)).copied().ok_or(Error::MismatchedTrees))
        .collect()
}

/// The same model written on the X-compatible tree of `target`, which must
/// list the same variables in the same order; only level order may differ.
pub fn relabel_levels(model: &StagedTreeModel, target: &VariableSpec) -> Result<StagedTreeModel> {
    let own = x_spec(model)?;
    if own.names() != target.names() {
        return Err(Error::MismatchedTrees);
    }
    variable_map(own, target)?;
    let tree = &model.tree;
    let new_tree = build_event_tree(target)?;
    // Vertex ids are breadth-first, so parents are mapped before children.
    let mut image = vec![tree.root(); new_tree.num_vertices()];
    for v in 1..new_tree.num_vertices() {
        let parent = image[new_tree.parent(v).unwrap()];
        image[v] = tree.child_with_label(parent, new_tree.edge_label(v)).ok_or(Error::MismatchedTrees)?;
    }
    let assignment: Vec<Option<usize>> =
        (0..new_tree.num_vertices()).map(|v| model.staging.stage_of(image[v])).collect();
    let staging = Staging::from_assignment(&new_tree, &assignment)?;
    let theta = match &model.theta {
        None => None,
        Some(th) => {
            let probs = (0..staging.num_stages())
                .map(|s| {
                    let v = staging.representative(s);
                    let u = image[v];
                    let old = th.stage(model.staging.stage_of(u).unwrap());
                    new_tree
                        .labels_of(v)
                        .iter()
                        .map(|l| old[tree.slot(tree.child_with_label(u, l).unwrap())])
                        .collect()
                })
                .collect();
            Some(Theta::new(&new_tree, &staging, probs, 1e-9)?)
        }
    };
    StagedTreeModel::new(new_tree, staging, theta)
}

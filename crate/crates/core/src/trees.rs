//! Event trees, stagings and transition probabilities.
//!
//! Vertices are numbered breadth-first from the root (id 0), children in the
//! order their edges were given. Every situation (non-leaf vertex) belongs to
//! one label set; the canonical slot order of a label set is the child order
//! of the lowest-id situation carrying it. Counts and probabilities are always
//! stored slot-aligned, so two situations in one stage agree on what slot `i`
//! means even if their children were listed in different orders.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = usize;
pub type PathId = usize;
pub type StageId = usize;

/// Sum-to-one tolerance for estimated distributions.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Ordered categorical variables, each with an ordered level list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    names: Vec<String>,
    levels: Vec<Vec<String>>,
}

impl VariableSpec {
    pub fn new(names: Vec<String>, levels: Vec<Vec<String>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidSpec("no variables".into()));
        }
        if names.len() != levels.len() {
            return Err(Error::InvalidSpec(format!(
                "{} names but {} level lists",
                names.len(),
                levels.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::InvalidSpec(format!("duplicate variable name `{name}`")));
            }
        }
        for (name, lv) in names.iter().zip(&levels) {
            if lv.len() < 2 {
                return Err(Error::InvalidSpec(format!(
                    "variable `{name}` has {} level(s); at least 2 required",
                    lv.len()
                )));
            }
            for (j, l) in lv.iter().enumerate() {
                if lv[..j].contains(l) {
                    return Err(Error::InvalidSpec(format!(
                        "variable `{name}` has duplicate level `{l}`"
                    )));
                }
            }
        }
        Ok(Self { names, levels })
    }

    /// Convenience constructor from string slices.
    pub fn from_strs(vars: &[(&str, &[&str])]) -> Result<Self> {
        let names = vars.iter().map(|(n, _)| n.to_string()).collect();
        let levels = vars
            .iter()
            .map(|(_, l)| l.iter().map(|s| s.to_string()).collect())
            .collect();
        Self::new(names, levels)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, var: usize) -> &str {
        &self.names[var]
    }

    pub fn levels(&self, var: usize) -> &[String] {
        &self.levels[var]
    }

    pub fn level_count(&self, var: usize) -> usize {
        self.levels[var].len()
    }

    pub fn level_index(&self, var: usize, label: &str) -> Option<usize> {
        self.levels[var].iter().position(|l| l == label)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Spec with variables rearranged so that new variable `i` is old `order[i]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.len())?;
        Self::new(
            order.iter().map(|&i| self.names[i].clone()).collect(),
            order.iter().map(|&i| self.levels[i].clone()).collect(),
        )
    }
}

pub(crate) fn check_permutation(order: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    if order.len() != k {
        return Err(Error::InvalidArgument(format!(
            "ordering has {} entries, expected {k}",
            order.len()
        )));
    }
    for &i in order {
        if i >= k || seen[i] {
            return Err(Error::InvalidArgument(format!("{order:?} is not a permutation")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// A rooted, labelled, directed tree.
#[derive(Clone, Debug, PartialEq)]
pub struct EventTree {
    parent: Vec<Option<VertexId>>,
    children: Vec<Vec<VertexId>>,
    label: Vec<String>,
    depth: Vec<usize>,
    slot: Vec<usize>,
    label_set: Vec<Option<usize>>,
    label_sets: Vec<Vec<String>>,
    leaves: Vec<VertexId>,
    leaf_index: Vec<Option<PathId>>,
    paths: Vec<Vec<VertexId>>,
    situations_by_depth: Vec<Vec<VertexId>>,
    variables: Option<VariableSpec>,
}

impl EventTree {
    /// Builds a tree from `(parent, child, label)` edges over vertices
    /// `0..num_vertices`. Vertices are renumbered breadth-first.
    pub fn from_edges(num_vertices: usize, edges: &[(usize, usize, &str)]) -> Result<Self> {
        if num_vertices < 3 {
            return Err(Error::InvalidTree("a tree needs a root with at least two children".into()));
        }
        if edges.len() + 1 != num_vertices {
            return Err(Error::InvalidTree(format!(
                "{} edges for {num_vertices} vertices; a tree has |E| = |V| - 1",
                edges.len()
            )));
        }
        let mut parent = vec![None; num_vertices];
        let mut kids: Vec<Vec<(usize, String)>> = vec![Vec::new(); num_vertices];
        for &(p, c, lab) in edges {
            if p >= num_vertices || c >= num_vertices {
                return Err(Error::InvalidTree(format!("edge ({p}, {c}) out of range")));
            }
            if parent[c].is_some() {
                return Err(Error::InvalidTree(format!("vertex {c} has two incoming edges")));
            }
            parent[c] = Some(p);
            kids[p].push((c, lab.to_string()));
        }
        let roots: Vec<usize> = (0..num_vertices).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!("expected one root, found {}", roots.len())));
        }
        for (v, k) in kids.iter().enumerate() {
            if k.len() == 1 {
                return Err(Error::InvalidTree(format!("vertex {v} has a single outgoing edge")));
            }
            for (j, (_, l)) in k.iter().enumerate() {
                if k[..j].iter().any(|(_, o)| o == l) {
                    return Err(Error::InvalidTree(format!(
                        "vertex {v} has duplicate outgoing label `{l}`"
                    )));
                }
            }
        }
        // Breadth-first renumbering; also detects disconnected pieces (cycles).
        let mut order = Vec::with_capacity(num_vertices);
        let mut new_id = vec![usize::MAX; num_vertices];
        let mut queue = VecDeque::from([roots[0]]);
        while let Some(v) = queue.pop_front() {
            new_id[v] = order.len();
            order.push(v);
            for (c, _) in &kids[v] {
                queue.push_back(*c);
            }
        }
        if order.len() != num_vertices {
            return Err(Error::InvalidTree("graph is not connected".into()));
        }
        let children: Vec<Vec<VertexId>> = order
            .iter()
            .map(|&old| kids[old].iter().map(|(c, _)| new_id[*c]).collect())
            .collect();
        let mut label = vec![String::new(); num_vertices];
        for &old in &order {
            for (c, l) in &kids[old] {
                label[new_id[*c]] = l.clone();
            }
        }
        Ok(Self::assemble(children, label, None))
    }

    fn assemble(children: Vec<Vec<VertexId>>, label: Vec<String>, variables: Option<VariableSpec>) -> Self {
        let n = children.len();
        let mut parent = vec![None; n];
        let mut depth = vec![0; n];
        for v in 0..n {
            for &c in &children[v] {
                parent[c] = Some(v);
                depth[c] = depth[v] + 1;
            }
        }
        let mut label_sets: Vec<Vec<String>> = Vec::new();
        let mut set_index: HashMap<Vec<String>, usize> = HashMap::new();
        let mut label_set = vec![None; n];
        let mut slot = vec![0; n];
        for v in 0..n {
            if children[v].is_empty() {
                continue;
            }
            let labels: Vec<String> = children[v].iter().map(|&c| label[c].clone()).collect();
            let mut key = labels.clone();
            key.sort();
            let idx = *set_index.entry(key).or_insert_with(|| {
                label_sets.push(labels.clone());
                label_sets.len() - 1
            });
            label_set[v] = Some(idx);
            for &c in &children[v] {
                slot[c] = label_sets[idx].iter().position(|l| *l == label[c]).unwrap();
            }
        }
        let leaves: Vec<VertexId> = (0..n).filter(|&v| children[v].is_empty()).collect();
        let mut leaf_index = vec![None; n];
        let mut paths = Vec::with_capacity(leaves.len());
        for (i, &leaf) in leaves.iter().enumerate() {
            leaf_index[leaf] = Some(i);
            let mut p = vec![leaf];
            let mut v = leaf;
            while let Some(u) = parent[v] {
                p.push(u);
                v = u;
            }
            p.reverse();
            paths.push(p);
        }
        let max_depth = depth.iter().copied().max().unwrap_or(0);
        let mut situations_by_depth = vec![Vec::new(); max_depth];
        for v in 0..n {
            if !children[v].is_empty() {
                situations_by_depth[depth[v]].push(v);
            }
        }
        Self {
            parent,
            children,
            label,
            depth,
            slot,
            label_set,
            label_sets,
            leaves,
            leaf_index,
            paths,
            situations_by_depth,
            variables,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.children.len()
    }

    pub fn root(&self) -> VertexId {
        0
    }

    pub fn children(&self, v: VertexId) -> &[VertexId] {
        &self.children[v]
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        self.parent[v]
    }

    /// Label of the edge entering `v` (empty for the root).
    pub fn edge_label(&self, v: VertexId) -> &str {
        &self.label[v]
    }

    pub fn depth(&self, v: VertexId) -> usize {
        self.depth[v]
    }

    /// Canonical slot of the edge entering `v` within its parent's label set.
    pub fn slot(&self, v: VertexId) -> usize {
        self.slot[v]
    }

    pub fn is_situation(&self, v: VertexId) -> bool {
        !self.children[v].is_empty()
    }

    pub fn situations(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.num_vertices()).filter(|&v| self.is_situation(v))
    }

    pub fn num_situations(&self) -> usize {
        self.situations_by_depth.iter().map(Vec::len).sum()
    }

    pub fn situations_at_depth(&self, d: usize) -> &[VertexId] {
        &self.situations_by_depth[d]
    }

    /// Number of depths that contain situations.
    pub fn num_depths(&self) -> usize {
        self.situations_by_depth.len()
    }

    /// Canonical outgoing label list of situation `v`.
    pub fn labels_of(&self, v: VertexId) -> &[String] {
        &self.label_sets[self.label_set[v].expect("leaf has no label set")]
    }

    pub fn label_set_id(&self, v: VertexId) -> Option<usize> {
        self.label_set[v]
    }

    /// Child of `v` reached by the edge in canonical slot `slot`.
    pub fn child_at_slot(&self, v: VertexId, slot: usize) -> Option<VertexId> {
        self.children[v].iter().copied().find(|&c| self.slot[c] == slot)
    }

    pub fn child_with_label(&self, v: VertexId, label: &str) -> Option<VertexId> {
        self.children[v].iter().copied().find(|&c| self.label[c] == label)
    }

    pub fn num_paths(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> &[VertexId] {
        &self.leaves
    }

    pub fn path_of_leaf(&self, leaf: VertexId) -> Option<PathId> {
        self.leaf_index[leaf]
    }

    /// Vertices `(v_0, ..., v_k)` of root-to-leaf path `path`.
    pub fn path(&self, path: PathId) -> &[VertexId] {
        &self.paths[path]
    }

    /// Edge labels along the path.
    pub fn path_labels(&self, path: PathId) -> Vec<&str> {
        self.paths[path][1..].iter().map(|&v| self.label[v].as_str()).collect()
    }

    /// The variables this tree was built from, if it is X-compatible.
    pub fn variables(&self) -> Option<&VariableSpec> {
        self.variables.as_ref()
    }

    /// True when all situations at each depth share one label set.
    pub fn is_depth_homogeneous(&self) -> bool {
        self.situations_by_depth.iter().all(|sits| {
            sits.windows(2).all(|w| self.label_set[w[0]] == self.label_set[w[1]])
        })
    }
}

/// Symmetric event tree whose depth-`d` edges carry the levels of variable `d`.
pub fn build_event_tree(spec: &VariableSpec) -> Result<EventTree> {
    // Re-validate; a spec built through serde bypasses `new`.
    let spec = VariableSpec::new(spec.names.clone(), spec.levels.clone())?;
    let mut children: Vec<Vec<VertexId>> = vec![Vec::new()];
    let mut label = vec![String::new()];
    let mut frontier = vec![0usize];
    for d in 0..spec.len() {
        let mut next = Vec::with_capacity(frontier.len() * spec.level_count(d));
        for &v in &frontier {
            for l in spec.levels(d) {
                let c = children.len();
                children.push(Vec::new());
                label.push(l.clone());
                children[v].push(c);
                next.push(c);
            }
        }
        frontier = next;
    }
    Ok(EventTree::assemble(children, label, Some(spec)))
}

/// Partition of situations into stages, canonically numbered by smallest member.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Staging {
    stage_of: Vec<Option<StageId>>,
    members: Vec<Vec<VertexId>>,
}

impl Staging {
    /// Builds a staging from explicit groups of situations. Groups are
    /// validated against the tree and renumbered canonically.
    pub fn from_partition(tree: &EventTree, groups: Vec<Vec<VertexId>>) -> Result<Self> {
        let mut stage_of = vec![None; tree.num_vertices()];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidStaging(format!("stage {g} is empty")));
            }
            for &v in members {
                if v >= tree.num_vertices() || !tree.is_situation(v) {
                    return Err(Error::InvalidStaging(format!("vertex {v} is not a situation")));
                }
                if stage_of[v].replace(g).is_some() {
                    return Err(Error::InvalidStaging(format!("vertex {v} is in two stages")));
                }
            }
        }
        Self::from_assignment(tree, &stage_of)
    }

    /// Builds a staging from an arbitrary stage label per vertex (`None` for leaves).
    pub fn from_assignment(tree: &EventTree, assignment: &[Option<usize>]) -> Result<Self> {
        if assignment.len() != tree.num_vertices() {
            return Err(Error::InvalidStaging(format!(
                "{} assignments for {} vertices",
                assignment.len(),
                tree.num_vertices()
            )));
        }
        let mut remap: HashMap<usize, StageId> = HashMap::new();
        let mut members: Vec<Vec<VertexId>> = Vec::new();
        let mut stage_of = vec![None; tree.num_vertices()];
        for v in 0..tree.num_vertices() {
            match (tree.is_situation(v), assignment[v]) {
                (true, Some(raw)) => {
                    let s = *remap.entry(raw).or_insert_with(|| {
                        members.push(Vec::new());
                        members.len() - 1
                    });
                    members[s].push(v);
                    stage_of[v] = Some(s);
                }
                (true, None) => {
                    return Err(Error::InvalidStaging(format!("situation {v} has no stage")));
                }
                (false, Some(_)) => {
                    return Err(Error::InvalidStaging(format!("leaf {v} cannot be staged")));
                }
                (false, None) => {}
            }
        }
        let staging = Self { stage_of, members };
        staging.validate(tree)?;
        Ok(staging)
    }

    fn validate(&self, tree: &EventTree) -> Result<()> {
        for (s, m) in self.members.iter().enumerate() {
            let first = m[0];
            for &v in &m[1..] {
                if tree.depth(v) != tree.depth(first) {
                    return Err(Error::InvalidStaging(format!(
                        "stage {s} mixes depths {} and {}",
                        tree.depth(first),
                        tree.depth(v)
                    )));
                }
                if tree.label_set_id(v) != tree.label_set_id(first) {
                    return Err(Error::InvalidStaging(format!(
                        "stage {s} mixes situations {first} and {v} with different edge labels"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_stages(&self) -> usize {
        self.members.len()
    }

    pub fn stage_of(&self, v: VertexId) -> Option<StageId> {
        self.stage_of[v]
    }

    pub fn members(&self, s: StageId) -> &[VertexId] {
        &self.members[s]
    }

    pub fn stages(&self) -> &[Vec<VertexId>] {
        &self.members
    }

    /// Representative (smallest) situation of stage `s`.
    pub fn representative(&self, s: StageId) -> VertexId {
        self.members[s][0]
    }

    pub fn stages_at_depth(&self, tree: &EventTree, d: usize) -> Vec<StageId> {
        (0..self.num_stages())
            .filter(|&s| tree.depth(self.representative(s)) == d)
            .collect()
    }

    /// Free parameters: sum over stages of (label count - 1).
    pub fn dim(&self, tree: &EventTree) -> usize {
        (0..self.num_stages())
            .map(|s| tree.labels_of(self.representative(s)).len() - 1)
            .sum()
    }

    /// Merges stages `a` and `b` (which must be compatible).
    pub fn merge(&self, tree: &EventTree, a: StageId, b: StageId) -> Result<Self> {
        if a == b || a >= self.num_stages() || b >= self.num_stages() {
            return Err(Error::InvalidArgument(format!("cannot merge stages {a} and {b}")));
        }
        let target = a.min(b);
        let other = a.max(b);
        let assignment: Vec<Option<usize>> = self
            .stage_of
            .iter()
            .map(|s| s.map(|s| if s == other { target } else { s }))
            .collect();
        Self::from_assignment(tree, &assignment)
    }

    /// Moves situation `v` out of its stage into a singleton stage.
    pub fn split_out(&self, tree: &EventTree, v: VertexId) -> Result<Self> {
        let s = self
            .stage_of
            .get(v)
            .copied()
            .flatten()
            .ok_or_else(|| Error::InvalidArgument(format!("{v} is not a situation")))?;
        if self.members[s].len() < 2 {
            return Err(Error::InvalidArgument(format!("stage {s} is already a singleton")));
        }
        let mut assignment = self.stage_of.clone();
        assignment[v] = Some(self.num_stages());
        Self::from_assignment(tree, &assignment)
    }

    /// Number of situations this staging covers (used for shape checks).
    pub fn num_situations(&self) -> usize {
        self.stage_of.iter().filter(|s| s.is_some()).count()
    }
}

/// One stage per situation.
pub fn saturated_staging(tree: &EventTree) -> Staging {
    let assignment: Vec<Option<usize>> = (0..tree.num_vertices())
        .map(|v| tree.is_situation(v).then_some(v))
        .collect();
    Staging::from_assignment(tree, &assignment).expect("saturated staging is always valid")
}

/// One stage per depth.
pub fn full_independence_staging(tree: &EventTree) -> Result<Staging> {
    for d in 0..tree.num_depths() {
        let sits = tree.situations_at_depth(d);
        if sits.windows(2).any(|w| tree.label_set_id(w[0]) != tree.label_set_id(w[1])) {
            return Err(Error::NotStageable { depth: d });
        }
    }
    let assignment: Vec<Option<usize>> = (0..tree.num_vertices())
        .map(|v| tree.is_situation(v).then(|| tree.depth(v)))
        .collect();
    Staging::from_assignment(tree, &assignment)
}

/// Per-stage categorical distributions, slot-aligned with the stage's label set.
#[derive(Clone, Debug, PartialEq)]
pub struct Theta {
    probs: Vec<Vec<f64>>,
}

impl Theta {
    /// Wraps per-stage probability vectors; checks shape, sign and sum within `tol`.
    pub fn new(tree: &EventTree, staging: &Staging, probs: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        if probs.len() != staging.num_stages() {
            return Err(Error::InvalidTheta(format!(
                "{} distributions for {} stages",
                probs.len(),
                staging.num_stages()
            )));
        }
        for (s, p) in probs.iter().enumerate() {
            let k = tree.labels_of(staging.representative(s)).len();
            if p.len() != k {
                return Err(Error::InvalidTheta(format!("stage {s}: {} entries, expected {k}", p.len())));
            }
            if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::InvalidTheta(format!("stage {s}: entry outside [0, 1]")));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidTheta(format!("stage {s}: probabilities sum to {sum}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(tree: &EventTree, staging: &Staging) -> Self {
        let probs = (0..staging.num_stages())
            .map(|s| {
                let k = tree.labels_of(staging.representative(s)).len();
                vec![1.0 / k as f64; k]
            })
            .collect();
        Self { probs }
    }

    pub(crate) fn from_raw(probs: Vec<Vec<f64>>) -> Self {
        Self { probs }
    }

    pub fn stage(&self, s: StageId) -> &[f64] {
        &self.probs[s]
    }

    pub fn num_stages(&self) -> usize {
        self.probs.len()
    }

    pub fn as_slices(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// Largest absolute entry-wise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Theta) -> Option<f64> {
        if self.probs.len() != other.probs.len() {
            return None;
        }
        let mut m = 0.0f64;
        for (a, b) in self.probs.iter().zip(&other.probs) {
            if a.len() != b.len() {
                return None;
            }
            for (x, y) in a.iter().zip(b) {
                m = m.max((x - y).abs());
            }
        }
        Some(m)
    }
}

/// An event tree with a staging and (optionally) estimated parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct StagedTreeModel {
    pub tree: EventTree,
    pub staging: Staging,
    pub theta: Option<Theta>,
}

impl StagedTreeModel {
    pub fn new(tree: EventTree, staging: Staging, theta: Option<Theta>) -> Result<Self> {
        if staging.stage_of.len() != tree.num_vertices() {
            return Err(Error::InvalidStaging("staging refers to a different tree".into()));
        }
        staging.validate(&tree)?;
        for v in tree.situations() {
            if staging.stage_of(v).is_none() {
                return Err(Error::InvalidStaging(format!("situation {v} has no stage")));
            }
        }
        if let Some(t) = &theta {
            Theta::new(&tree, &staging, t.probs.clone(), f64::INFINITY)?;
        }
        Ok(Self { tree, staging, theta })
    }

    pub fn theta(&self) -> Result<&Theta> {
        self.theta.as_ref().ok_or(Error::MissingTheta)
    }

    /// θ of the edge entering `child`.
    pub fn edge_probability(&self, child: VertexId) -> Result<f64> {
        let theta = self.theta()?;
        let parent = self
            .tree
            .parent(child)
            .ok_or_else(|| Error::InvalidArgument("the root has no incoming edge".into()))?;
        let s = self.staging.stage_of(parent).expect("validated staging");
        Ok(theta.stage(s)[self.tree.slot(child)])
    }

    /// Per-vertex probability of the incoming edge, with the root set to 1.
    pub(crate) fn edge_probability_table(&self) -> Result<Vec<f64>> {
        let theta = self.theta()?;
        let tree = &self.tree;
        Ok((0..tree.num_vertices())
            .map(|v| match tree.parent(v) {
                None => 1.0,
                Some(p) => theta.stage(self.staging.stage_of(p).unwrap())[tree.slot(v)],
            })
            .collect())
    }

    pub fn path_probability(&self, path: PathId) -> Result<f64> {
        path_probability(self, path)
    }

    /// θ_λ for every root-to-leaf path, in path-id order.
    pub fn path_probabilities(&self) -> Result<Vec<f64>> {
        let edge = self.edge_probability_table()?;
        Ok((0..self.tree.num_paths())
            .map(|p| self.tree.path(p)[1..].iter().map(|&v| edge[v]).product())
            .collect())
    }
}

/// Product of transition probabilities along a root-to-leaf path.
pub fn path_probability(model: &StagedTreeModel, path: PathId) -> Result<f64> {
    if path >= model.tree.num_paths() {
        return Err(Error::InvalidArgument(format!("path {path} does not exist")));
    }
    let theta = model.theta()?;
    let tree = &model.tree;
    let mut prob = 1.0;
    for &v in &tree.path(path)[1..] {
        let p = tree.parent(v).unwrap();
        prob *= theta.stage(model.staging.stage_of(p).unwrap())[tree.slot(v)];
    }
    Ok(prob)
}

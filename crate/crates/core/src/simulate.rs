//! Forward sampling from staged trees and one-hole-per-row amputation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{path_to_levels, DataSet, Sample};
use crate::error::{Error, Result};
use crate::trees::StagedTreeModel;

/// Draws `n` i.i.d. rows by walking root to leaf through the stage distributions.
pub fn sample_data(model: &StagedTreeModel, n: usize, seed: u64) -> Result<DataSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }
    let tree = &model.tree;
    let spec = tree
        .variables()
        .ok_or_else(|| Error::InvalidTree("sampling needs an X-compatible tree".into()))?
        .clone();
    let theta = model.theta()?;
    let completions: Vec<Sample> = (0..tree.num_paths())
        .map(|p| Ok(Sample::complete(&path_to_levels(tree, &spec, p)?)))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = tree.root();
        while tree.is_situation(v) {
            let probs = theta.stage(model.staging.stage_of(v).unwrap());
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut slot = probs.len() - 1;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    slot = i;
                    break;
                }
            }
            // Guard against rounding leaving the last slot with zero mass selected.
            while probs[slot] == 0.0 && slot > 0 {
                slot -= 1;
            }
            v = tree.child_at_slot(v, slot).unwrap();
        }
        rows.push(completions[tree.path_of_leaf(v).unwrap()].clone());
    }
    DataSet::new(spec, rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mechanism {
    #[serde(alias = "mcar")]
    Mcar,
    #[serde(alias = "mar")]
    Mar,
    #[serde(alias = "mnar")]
    Mnar,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Mcar => "MCAR",
            Mechanism::Mar => "MAR",
            Mechanism::Mnar => "MNAR",
        })
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcar" => Ok(Mechanism::Mcar),
            "mar" => Ok(Mechanism::Mar),
            "mnar" => Ok(Mechanism::Mnar),
            _ => Err(Error::InvalidArgument(format!("unknown missingness mechanism `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmputeSpec {
    pub proportion: f64,
    pub mechanism: Mechanism,
    /// Per-variable score weights; all ones when absent.
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl AmputeSpec {
    pub fn new(proportion: f64, mechanism: Mechanism, seed: u64) -> Self {
        Self { proportion, mechanism, weights: None, seed }
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Number of rows that receive a hole so that a fraction `p` of all cells is missing.
pub fn amputed_row_count(n: usize, k: usize, p: f64) -> Result<usize> {
    let frac = p * k as f64;
    if frac > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "proportion {p} with {k} variables needs {frac} of rows amputed, impossible with one hole per row"
        )));
    }
    Ok(((frac * n as f64) + 1e-9).floor().min(n as f64) as usize)
}

/// Removes one value from each of ⌊p·k·N⌋ rows. Every row is assigned a
/// uniformly drawn target variable; rows are then chosen without replacement
/// with weights logistic in a score standardized within each target group.
pub fn ampute(data: &DataSet, spec: &AmputeSpec) -> Result<DataSet> {
    let p = spec.proportion;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("proportion must lie in (0, 1), got {p}")));
    }
    if !data.is_complete() {
        return Err(Error::InvalidArgument("ampute needs complete data".into()));
    }
    let k = data.spec().len();
    let weights = match &spec.weights {
        Some(w) if w.len() != k => {
            return Err(Error::InvalidArgument(format!("{} weights for {k} variables", w.len())));
        }
        Some(w) => w.clone(),
        None => vec![1.0; k],
    };
    let n = data.len();
    let m = amputed_row_count(n, k, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();

    let level = |i: usize, j: usize| data.rows()[i].values[j].unwrap() as f64;
    let raw: Vec<f64> = (0..n)
        .map(|i| match spec.mechanism {
            Mechanism::Mcar => 0.0,
            Mechanism::Mar => (0..k).filter(|&j| j != targets[i]).map(|j| weights[j] * level(i, j)).sum(),
            Mechanism::Mnar => weights[targets[i]] * level(i, targets[i]),
        })
        .collect();
    let mut z = vec![0.0; n];
    for t in 0..k {
        let idx: Vec<usize> = (0..n).filter(|&i| targets[i] == t).collect();
        if idx.is_empty() {
            continue;
        }
        let mean = idx.iter().map(|&i| raw[i]).sum::<f64>() / idx.len() as f64;
        let var = idx.iter().map(|&i| (raw[i] - mean).powi(2)).sum::<f64>() / idx.len() as f64;
        let sd = var.sqrt();
        for &i in &idx {
            z[i] = if sd > 0.0 { (raw[i] - mean) / sd } else { 0.0 };
        }
    }

    // Weighted sampling without replacement: keep the m largest ln(u) / w.
    let mut keys: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() / logistic(z[i]), i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut rows = data.rows().to_vec();
    for &(_, i) in keys.iter().take(m) {
        rows[i].values[targets[i]] = None;
    }
    DataSet::new(data.spec().clone(), rows)
}

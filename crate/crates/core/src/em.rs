//! EM estimation of transition probabilities (soft and hard) and structural EM
//! with hill-climbing, backward hill-climbing or warm-started hill-climbing
//! as the M-step.

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{complete_edge_counts, group_counts, path_to_levels, DataSet, GroupedCounts, Sample};
use crate::error::{Error, Result};
use crate::likelihood::{fit_mle, loglik_full_missing, LikKind};
use crate::search::{bhc_stage_search, hc_stage_search, SearchConfig, Strategy};
use crate::trees::{saturated_staging, EventTree, PathId, StagedTreeModel, Staging, Theta};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EmVariant {
    ParamSoft,
    ParamHard,
    StructEmHc,
    StructEmBhc,
    StructEmSimple,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EmInit {
    OmitMleSmoothed,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Imputation {
    Argmax,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmConfig {
    pub variant: EmVariant,
    /// Iteration cap for the parameter variants.
    pub max_iter: usize,
    pub tol: f64,
    pub init: EmInit,
    pub seed: u64,
    pub imputation: Imputation,
    /// Outer-iteration cap for structural EM.
    pub max_outer: usize,
    /// Settings for the M-step search; its score kind and strategy are set by the variant.
    pub search: SearchConfig,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            variant: EmVariant::ParamSoft,
            max_iter: 50,
            tol: 1e-6,
            init: EmInit::OmitMleSmoothed,
            seed: 0,
            imputation: Imputation::Argmax,
            max_outer: 20,
            search: SearchConfig::new(LikKind::Complete, Strategy::Hc),
        }
    }
}

impl EmConfig {
    pub fn new(variant: EmVariant) -> Self {
        Self { variant, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iter < 1 || self.max_outer < 1 {
            return Err(Error::InvalidArgument("EM iteration caps must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("EM tolerance must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EmResult {
    pub model: StagedTreeModel,
    pub iterations: usize,
    /// Full missing-data log-likelihood after each iteration.
    pub loglik_trace: Vec<f64>,
    /// Soft EM only: total expected path count produced by each E-step.
    pub count_mass_trace: Vec<f64>,
    pub converged: bool,
    pub imputed_data: Option<DataSet>,
    pub warnings: Vec<String>,
}

/// E-step: each row's unit weight spread over its possible paths in
/// proportion to their current probabilities.
pub fn expected_path_counts(model: &StagedTreeModel, grouped: &GroupedCounts) -> Result<Vec<f64>> {
    let probs = model.path_probabilities()?;
    expected_from_probs(&probs, grouped)
}

fn expected_from_probs(probs: &[f64], grouped: &GroupedCounts) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; probs.len()];
    for (i, g) in grouped.groups.iter().enumerate() {
        let mass: f64 = g.paths.paths.iter().map(|&p| probs[p]).sum();
        if !(mass > 0.0) {
            return Err(Error::DegenerateSupport { group: i });
        }
        let n = g.count as f64;
        for &p in &g.paths.paths {
            counts[p] += n * probs[p] / mass;
        }
    }
    Ok(counts)
}

fn smoothed(theta: &Theta, eps: f64) -> Theta {
    let probs = theta
        .as_slices()
        .iter()
        .map(|s| {
            let total: f64 = s.iter().map(|p| p + eps).sum();
            s.iter().map(|p| (p + eps) / total).collect()
        })
        .collect();
    Theta::from_raw(probs)
}

fn group_has_zero_mass(model: &StagedTreeModel, grouped: &GroupedCounts) -> Result<bool> {
    let probs = model.path_probabilities()?;
    Ok(grouped
        .groups
        .iter()
        .any(|g| !(g.paths.paths.iter().map(|&p| probs[p]).sum::<f64>() > 0.0)))
}

/// θ⁽⁰⁾: omit-MLE with add-one smoothing, or uniform.
fn initial_theta(
    tree: &EventTree,
    staging: &Staging,
    grouped: &GroupedCounts,
    init: EmInit,
    warnings: &mut Vec<String>,
) -> Result<Theta> {
    if init == EmInit::Uniform {
        return Ok(Theta::uniform(tree, staging));
    }
    if grouped.singleton_total() == 0 {
        let msg = "no complete rows; EM initialised uniformly".to_string();
        warn!("{msg}");
        warnings.push(msg);
        return Ok(Theta::uniform(tree, staging));
    }
    let mut counts = vec![0.0; tree.num_paths()];
    for &g in &grouped.singleton {
        let group = &grouped.groups[g];
        counts[group.paths.paths[0]] += group.count as f64;
    }
    let edge = complete_edge_counts(tree, staging, &counts)?;
    fit_mle(tree, staging, &edge, 1.0)
}

fn initial_model(
    tree: &EventTree,
    staging: &Staging,
    grouped: &GroupedCounts,
    init: EmInit,
    warnings: &mut Vec<String>,
) -> Result<StagedTreeModel> {
    let theta = initial_theta(tree, staging, grouped, init, warnings)?;
    let model = StagedTreeModel::new(tree.clone(), staging.clone(), Some(theta))?;
    if group_has_zero_mass(&model, grouped)? {
        let msg = "initial parameters give a row zero probability; falling back to uniform".to_string();
        warn!("{msg}");
        warnings.push(msg);
        return StagedTreeModel::new(tree.clone(), staging.clone(), Some(Theta::uniform(tree, staging)));
    }
    Ok(model)
}

fn nonempty(data: &DataSet) -> Result<()> {
    if data.is_empty() {
        Err(Error::EmptyData)
    } else {
        Ok(())
    }
}

/// Soft EM on a fixed staging, iterating until the log-likelihood changes by less than `tol`.
pub fn soft_em_params(tree: &EventTree, staging: &Staging, data: &DataSet, config: &EmConfig) -> Result<EmResult> {
    config.validate()?;
    nonempty(data)?;
    let grouped = group_counts(tree, data)?;
    let mut warnings = Vec::new();
    let mut model = initial_model(tree, staging, &grouped, config.init, &mut warnings)?;
    let mut previous = loglik_full_missing(&model, &grouped)?.loglik;
    let mut loglik_trace = Vec::new();
    let mut count_mass_trace = Vec::new();
    let mut converged = false;
    let mut resmoothed = false;
    for _ in 0..config.max_iter {
        let counts = match expected_path_counts(&model, &grouped) {
            Err(Error::DegenerateSupport { group }) => {
                if !resmoothed {
                    let msg = format!("group {group} lost all probability mass; re-smoothing parameters by 1e-6");
                    warn!("{msg}");
                    warnings.push(msg);
                    resmoothed = true;
                }
                let theta = smoothed(model.theta()?, 1e-6);
                model = StagedTreeModel::new(tree.clone(), staging.clone(), Some(theta))?;
                expected_path_counts(&model, &grouped)?
            }
            other => other?,
        };
        count_mass_trace.push(counts.iter().sum());
        let edge = complete_edge_counts(tree, staging, &counts)?;
        let theta = fit_mle(tree, staging, &edge, 0.0)?;
        model = StagedTreeModel::new(tree.clone(), staging.clone(), Some(theta))?;
        let ll = loglik_full_missing(&model, &grouped)?.loglik;
        loglik_trace.push(ll);
        // With no missing values the E-step does not depend on θ.
        let settled = (ll - previous).abs() < config.tol || (ll == previous);
        previous = ll;
        if settled || grouped.is_complete() {
            converged = true;
            break;
        }
    }
    Ok(EmResult {
        model,
        iterations: loglik_trace.len(),
        loglik_trace,
        count_mass_trace,
        converged,
        imputed_data: None,
        warnings,
    })
}

fn argmax_path(paths: &[PathId], probs: &[f64]) -> PathId {
    let mut best = paths[0];
    for &p in &paths[1..] {
        if probs[p] > probs[best] {
            best = p;
        }
    }
    best
}

/// Completes every incomplete row: the most probable possible path (lowest
/// path id on ties), or a seeded draw proportional to path probability.
pub fn hard_impute(model: &StagedTreeModel, data: &DataSet, imputation: Imputation, seed: u64) -> Result<DataSet> {
    let grouped = group_counts(&model.tree, data)?;
    hard_impute_grouped(model, data, &grouped, imputation, seed)
}

fn hard_impute_grouped(
    model: &StagedTreeModel,
    data: &DataSet,
    grouped: &GroupedCounts,
    imputation: Imputation,
    seed: u64,
) -> Result<DataSet> {
    let probs = model.path_probabilities()?;
    let spec = data.spec();
    let completion = |p: PathId| -> Result<Sample> { Ok(Sample::complete(&path_to_levels(&model.tree, spec, p)?)) };
    let rows = match imputation {
        Imputation::Argmax => {
            let mut filled: Vec<Option<Sample>> = vec![None; grouped.num_groups()];
            let mut rows = Vec::with_capacity(data.len());
            for (row, &g) in data.rows().iter().zip(&grouped.row_group) {
                if row.is_complete() {
                    rows.push(row.clone());
                    continue;
                }
                if filled[g].is_none() {
                    filled[g] = Some(completion(argmax_path(&grouped.groups[g].paths.paths, &probs))?);
                }
                rows.push(filled[g].clone().unwrap());
            }
            rows
        }
        Imputation::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = Vec::with_capacity(data.len());
            for (row, &g) in data.rows().iter().zip(&grouped.row_group) {
                if row.is_complete() {
                    rows.push(row.clone());
                    continue;
                }
                let paths = &grouped.groups[g].paths.paths;
                let weights: Vec<f64> = paths.iter().map(|&p| probs[p]).collect();
                let pick = match WeightedIndex::new(&weights) {
                    Ok(dist) => paths[dist.sample(&mut rng)],
                    Err(_) => paths[0],
                };
                rows.push(completion(pick)?);
            }
            rows
        }
    };
    DataSet::new(spec.clone(), rows)
}

fn complete_mle(tree: &EventTree, staging: &Staging, data: &DataSet, smoothing: f64) -> Result<StagedTreeModel> {
    let counts = crate::data::complete_edge_counts_from_data(tree, staging, data)?;
    let theta = fit_mle(tree, staging, &counts, smoothing)?;
    StagedTreeModel::new(tree.clone(), staging.clone(), Some(theta))
}

/// Hard EM on a fixed staging: impute, refit, until the imputation repeats.
pub fn hard_em_params(tree: &EventTree, staging: &Staging, data: &DataSet, config: &EmConfig) -> Result<EmResult> {
    config.validate()?;
    nonempty(data)?;
    let grouped = group_counts(tree, data)?;
    let mut warnings = Vec::new();
    let mut model = initial_model(tree, staging, &grouped, config.init, &mut warnings)?;
    let mut previous: Option<DataSet> = None;
    let mut loglik_trace = Vec::new();
    let mut converged = false;
    for it in 0..config.max_iter {
        let imputed = hard_impute_grouped(&model, data, &grouped, config.imputation, config.seed.wrapping_add(it as u64))?;
        model = complete_mle(tree, staging, &imputed, 0.0)?;
        loglik_trace.push(loglik_full_missing(&model, &grouped)?.loglik);
        let repeated = previous.as_ref() == Some(&imputed) || data.is_complete();
        previous = Some(imputed);
        if repeated {
            converged = true;
            break;
        }
    }
    Ok(EmResult {
        model,
        iterations: loglik_trace.len(),
        loglik_trace,
        count_mass_trace: Vec::new(),
        converged,
        imputed_data: previous,
        warnings,
    })
}

/// Structural EM: hard E-step, then a stage search on the completed data.
pub fn structural_em(tree: &EventTree, data: &DataSet, config: &EmConfig) -> Result<EmResult> {
    config.validate()?;
    nonempty(data)?;
    let strategy = match config.variant {
        EmVariant::StructEmHc | EmVariant::StructEmSimple => Strategy::Hc,
        EmVariant::StructEmBhc => Strategy::Bhc,
        v => return Err(Error::InvalidArgument(format!("{v:?} is not a structural EM variant"))),
    };
    let search = SearchConfig { score_kind: LikKind::Complete, strategy, ..config.search.clone() };
    let grouped = group_counts(tree, data)?;
    let mut warnings = Vec::new();
    let mut model = initial_model(tree, &saturated_staging(tree), &grouped, config.init, &mut warnings)?;
    let mut previous_data: Option<DataSet> = None;
    let mut loglik_trace = Vec::new();
    let mut converged = false;
    for it in 0..config.max_outer {
        let imputed = hard_impute_grouped(&model, data, &grouped, config.imputation, config.seed.wrapping_add(it as u64))?;
        let found = match config.variant {
            EmVariant::StructEmBhc => bhc_stage_search(tree, &imputed, &search)?,
            EmVariant::StructEmHc => hc_stage_search(tree, &imputed, &search, None)?,
            _ => hc_stage_search(tree, &imputed, &search, Some(&model.staging))?,
        };
        let same_structure = found.model.staging == model.staging;
        let same_data = previous_data.as_ref() == Some(&imputed) || data.is_complete();
        model = found.model;
        loglik_trace.push(loglik_full_missing(&model, &grouped)?.loglik);
        previous_data = Some(imputed);
        if same_structure || same_data {
            converged = true;
            break;
        }
    }
    if config.search.smoothing > 0.0 {
        if let Some(imputed) = &previous_data {
            model = complete_mle(tree, &model.staging, imputed, config.search.smoothing)?;
        }
    }
    Ok(EmResult {
        model,
        iterations: loglik_trace.len(),
        loglik_trace,
        count_mass_trace: Vec::new(),
        converged,
        imputed_data: previous_data,
        warnings,
    })
}

/// Runs whichever variant `config` names; `staging` is used by the parameter variants.
pub fn run_em(tree: &EventTree, staging: &Staging, data: &DataSet, config: &EmConfig) -> Result<EmResult> {
    match config.variant {
        EmVariant::ParamSoft => soft_em_params(tree, staging, data, config),
        EmVariant::ParamHard => hard_em_params(tree, staging, data, config),
        _ => structural_em(tree, data, config),
    }
}

//! Simulation benchmark: sample from generator models, ampute, learn with
//! each algorithm, and score the estimates against the generator.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::em::{structural_em, EmConfig, EmVariant};
use crate::error::{Error, Result};
use crate::likelihood::{loglik_data, LikKind};
use crate::metrics::{aligned_path_probabilities, cd_distance, hamming_staging, kendall_orderings, kl_divergence};
use crate::model_io::{load_model_ref, model_ref_name};
use crate::search::{order_search_with, stage_search, SearchConfig, Strategy};
use crate::simulate::{ampute, sample_data, AmputeSpec, Mechanism};
use crate::trees::{build_event_tree, EventTree, StagedTreeModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    FullHc,
    FullBhc,
    OmHc,
    OmBhc,
    FmHc,
    FmBhc,
    EmHc,
    EmBhc,
    EmSimple,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::FullHc,
        Algorithm::FullBhc,
        Algorithm::OmHc,
        Algorithm::OmBhc,
        Algorithm::FmHc,
        Algorithm::FmBhc,
        Algorithm::EmHc,
        Algorithm::EmBhc,
        Algorithm::EmSimple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FullHc => "full-hc",
            Algorithm::FullBhc => "full-bhc",
            Algorithm::OmHc => "om-hc",
            Algorithm::OmBhc => "om-bhc",
            Algorithm::FmHc => "fm-hc",
            Algorithm::FmBhc => "fm-bhc",
            Algorithm::EmHc => "em-hc",
            Algorithm::EmBhc => "em-bhc",
            Algorithm::EmSimple => "em-simple",
        }
    }

    /// Baselines that learn from the data before amputation.
    pub fn uses_complete_data(self) -> bool {
        matches!(self, Algorithm::FullHc | Algorithm::FullBhc)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    #[default]
    Fixed,
    Search,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkPlan {
    /// Model file paths or `builtin:<name>` references.
    pub models: Vec<String>,
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    pub mechanisms: Vec<Mechanism>,
    pub algorithms: Vec<Algorithm>,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub order: OrderMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_orders: Option<usize>,
}

impl BenchmarkPlan {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("models", self.models.is_empty()),
            ("n", self.n.is_empty()),
            ("p", self.p.is_empty()),
            ("mechanisms", self.mechanisms.is_empty()),
            ("algorithms", self.algorithms.is_empty()),
        ];
        if let Some((field, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Schema { field: field.to_string(), message: "must not be empty".into() });
        }
        if self.replicates < 1 {
            return Err(Error::Schema { field: "replicates".into(), message: "must be >= 1".into() });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn num_rows(&self) -> usize {
        self.models.len() * self.n.len() * self.p.len() * self.mechanisms.len() * self.replicates * self.algorithms.len()
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of integers into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Seeds of one replicate: complete-data sampling depends on (model, N,
/// replicate) only, so every missingness condition sees the same complete data.
pub fn replicate_seeds(base: u64, model: usize, n: usize, p: f64, mechanism: Mechanism, replicate: usize) -> (u64, u64) {
    let data = derive_seed(&[base, 1, model as u64, n as u64, replicate as u64]);
    let amp = derive_seed(&[base, 2, model as u64, n as u64, p.to_bits(), mechanism as u64, replicate as u64]);
    (data, amp)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub model: String,
    pub n: usize,
    pub p: f64,
    pub mechanism: Mechanism,
    pub replicate: usize,
    pub algorithm: Algorithm,
    /// Amputation seed of the replicate.
    pub seed: u64,
    pub status: String,
    pub hamming: Option<f64>,
    pub kl: Option<f64>,
    pub cd: Option<f64>,
    pub kendall: Option<f64>,
    pub n_stages: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub model: String,
    pub n: usize,
    pub p: f64,
    pub mechanism: Mechanism,
    pub replicate: usize,
    pub algorithm: Algorithm,
    pub learn_time_s: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BenchmarkResults {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl BenchmarkResults {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.rows, writer)
    }

    pub fn write_timings_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.timings, writer)
    }

    /// Writes the result table to `path` and the timings next to it as `<stem>.timing.csv`.
    pub fn write_files(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.write_csv(std::fs::File::create(path)?)?;
        self.write_timings_csv(std::fs::File::create(timing_path(path))?)
    }
}

pub fn timing_path(results: &Path) -> std::path::PathBuf {
    let stem = results.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    results.with_file_name(format!("{stem}.timing.csv"))
}

/// Estimated model in the variable order it was learned in.
#[derive(Clone, Debug)]
pub struct Learned {
    pub model: StagedTreeModel,
    /// Learned variable `i` is variable `ordering[i]` of the input data.
    pub ordering: Vec<usize>,
    pub learn_time_s: f64,
}

fn search_config(algorithm: Algorithm) -> Option<SearchConfig> {
    let (kind, strategy) = match algorithm {
        Algorithm::FullHc => (LikKind::Complete, Strategy::Hc),
        Algorithm::FullBhc => (LikKind::Complete, Strategy::Bhc),
        Algorithm::OmHc => (LikKind::Omit, Strategy::Hc),
        Algorithm::OmBhc => (LikKind::Omit, Strategy::Bhc),
        Algorithm::FmHc => (LikKind::FirstMissing, Strategy::Hc),
        Algorithm::FmBhc => (LikKind::FirstMissing, Strategy::Bhc),
        _ => return None,
    };
    Some(SearchConfig::new(kind, strategy))
}

fn em_variant(algorithm: Algorithm) -> EmVariant {
    match algorithm {
        Algorithm::EmBhc => EmVariant::StructEmBhc,
        Algorithm::EmSimple => EmVariant::StructEmSimple,
        _ => EmVariant::StructEmHc,
    }
}

/// One learning run on a fixed tree, returning the model and the score used to rank orderings.
fn learn_on_tree(algorithm: Algorithm, tree: &EventTree, data: &DataSet, seed: u64) -> Result<(StagedTreeModel, f64)> {
    match search_config(algorithm) {
        Some(cfg) => {
            let r = stage_search(tree, data, &SearchConfig { seed, ..cfg })?;
            Ok((r.model, r.score))
        }
        None => {
            let cfg = EmConfig { seed, ..EmConfig::new(em_variant(algorithm)) };
            let r = structural_em(tree, data, &cfg)?;
            let ll = loglik_data(LikKind::FullMissing, &r.model, data)?;
            let bic = ll.loglik - 0.5 * (data.len() as f64).ln() * ll.dim as f64;
            Ok((r.model, bic))
        }
    }
}

/// Learns a model with `algorithm`, on the given variable order or searching over orders.
pub fn learn(
    algorithm: Algorithm,
    data: &DataSet,
    order: OrderMode,
    max_orders: Option<usize>,
    seed: u64,
) -> Result<Learned> {
    let started = Instant::now();
    let (model, ordering) = match order {
        OrderMode::Fixed => {
            let tree = build_event_tree(data.spec())?;
            (learn_on_tree(algorithm, &tree, data, seed)?.0, (0..data.spec().len()).collect())
        }
        OrderMode::Search => {
            let found = order_search_with(data, max_orders, seed, |tree, d| learn_on_tree(algorithm, tree, d, seed))?;
            (found.best, found.ordering)
        }
    };
    Ok(Learned { model, ordering, learn_time_s: started.elapsed().as_secs_f64() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub hamming: Option<f64>,
    pub kl: f64,
    pub cd: f64,
    pub kendall: f64,
}

/// Compares an estimate against its generator. Hamming is only defined when
/// the estimate kept the generator's variable order.
pub fn evaluate_learned(generator: &StagedTreeModel, learned: &Learned) -> Result<Evaluation> {
    let spec = generator
        .tree
        .variables()
        .ok_or_else(|| Error::InvalidTree("generator must be X-compatible".into()))?;
    let identity: Vec<usize> = (0..spec.len()).collect();
    let p = generator.path_probabilities()?;
    let q = aligned_path_probabilities(&learned.model, spec)?;
    let hamming = if learned.ordering == identity {
        Some(hamming_staging(&generator.tree, &generator.staging, &learned.model.staging)?)
    } else {
        None
    };
    Ok(Evaluation {
        hamming,
        kl: kl_divergence(&p, &q)?,
        cd: cd_distance(&p, &q)?.value,
        kendall: kendall_orderings(&identity, &learned.ordering)?,
    })
}

struct Unit {
    model: usize,
    n: usize,
    p: f64,
    mechanism: Mechanism,
    replicate: usize,
}

fn run_unit(plan: &BenchmarkPlan, names: &[String], generators: &[StagedTreeModel], u: &Unit) -> (Vec<ResultRow>, Vec<TimingRow>) {
    let (data_seed, amp_seed) = replicate_seeds(plan.seed, u.model, u.n, u.p, u.mechanism, u.replicate);
    let generator = &generators[u.model];
    let row = |algorithm: Algorithm| ResultRow {
        model: names[u.model].clone(),
        n: u.n,
        p: u.p,
        mechanism: u.mechanism,
        replicate: u.replicate,
        algorithm,
        seed: amp_seed,
        status: "ok".into(),
        hamming: None,
        kl: None,
        cd: None,
        kendall: None,
        n_stages: None,
        error: None,
    };
    let failed = |algorithm: Algorithm, e: &Error| ResultRow { status: "error".into(), error: Some(e.to_string()), ..row(algorithm) };

    let prepared = sample_data(generator, u.n, data_seed).and_then(|complete| {
        let amputed = ampute(&complete, &AmputeSpec::new(u.p, u.mechanism, amp_seed))?;
        Ok((complete, amputed))
    });
    let (complete, amputed) = match prepared {
        Ok(x) => x,
        Err(e) => return (plan.algorithms.iter().map(|&a| failed(a, &e)).collect(), Vec::new()),
    };

    let mut rows = Vec::with_capacity(plan.algorithms.len());
    let mut timings = Vec::new();
    for (i, &algorithm) in plan.algorithms.iter().enumerate() {
        let data = if algorithm.uses_complete_data() { &complete } else { &amputed };
        let seed = derive_seed(&[amp_seed, i as u64]);
        let outcome = learn(algorithm, data, plan.order, plan.max_orders, seed)
            .and_then(|l| evaluate_learned(generator, &l).map(|e| (l, e)));
        match outcome {
            Ok((learned, eval)) => {
                timings.push(TimingRow {
                    model: names[u.model].clone(),
                    n: u.n,
                    p: u.p,
                    mechanism: u.mechanism,
                    replicate: u.replicate,
                    algorithm,
                    learn_time_s: learned.learn_time_s,
                });
                rows.push(ResultRow {
                    hamming: eval.hamming,
                    kl: Some(eval.kl),
                    cd: Some(eval.cd),
                    kendall: (plan.order == OrderMode::Search).then_some(eval.kendall),
                    n_stages: Some(learned.model.staging.num_stages()),
                    ..row(algorithm)
                });
            }
            Err(e) => rows.push(failed(algorithm, &e)),
        }
    }
    (rows, timings)
}

/// Runs every (model, N, p, mechanism, replicate) unit on a pool of `jobs`
/// threads. Rows come back in plan order whatever the completion order.
pub fn run_benchmark(plan: &BenchmarkPlan, jobs: usize) -> Result<BenchmarkResults> {
    plan.validate()?;
    let generators: Vec<StagedTreeModel> = plan.models.iter().map(|m| load_model_ref(m)).collect::<Result<_>>()?;
    for (g, r) in generators.iter().zip(&plan.models) {
        g.theta().map_err(|_| Error::InvalidArgument(format!("generator `{r}` has no transition probabilities")))?;
    }
    let names: Vec<String> = plan.models.iter().map(|m| model_ref_name(m)).collect();
    let mut units = Vec::new();
    for model in 0..plan.models.len() {
        for &n in &plan.n {
            for &p in &plan.p {
                for &mechanism in &plan.mechanisms {
                    for replicate in 0..plan.replicates {
                        units.push(Unit { model, n, p, mechanism, replicate });
                    }
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let parts: Vec<(Vec<ResultRow>, Vec<TimingRow>)> =
        pool.install(|| units.par_iter().map(|u| run_unit(plan, &names, &generators, u)).collect());
    let mut out = BenchmarkResults::default();
    for (rows, timings) in parts {
        out.rows.extend(rows);
        out.timings.extend(timings);
    }
    Ok(out)
}

/// Median of the finite-or-infinite values present; `None` when empty.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

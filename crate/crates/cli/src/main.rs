use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use stm_core::benchmark::{run_benchmark, timing_path, BenchmarkPlan};
use stm_core::data::{read_csv, CsvOptions, DataSet};
use stm_core::em::{run_em, EmConfig, EmResult, EmVariant, Imputation};
use stm_core::likelihood::LikKind;
use stm_core::metrics::{aligned_path_probabilities, cd_distance, hamming_staging, kendall_names, kl_divergence, relabel_levels};
use stm_core::model_io::{load_model_ref, model_to_json};
use stm_core::search::{order_search, stage_search, SearchConfig, SearchResult, Strategy};
use stm_core::simulate::{ampute, sample_data, AmputeSpec, Mechanism};
use stm_core::trees::{build_event_tree, saturated_staging, StagedTreeModel};

#[derive(Parser)]
#[command(name = "stm", version, about = "Learn staged trees from categorical data with missing values")]
struct Cli {
    /// Seed for all randomness (default 0; for `benchmark`, overrides the plan's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the benchmark.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample complete data from a model.
    Simulate(SimulateArgs),
    /// Remove values from complete data.
    Ampute(AmputeArgs),
    /// Learn a staged tree from a CSV file.
    Fit(FitArgs),
    /// Compare an estimated model against a reference model.
    Evaluate(EvaluateArgs),
    /// Run a simulation study described by a JSON plan.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model JSON file or `builtin:<name>`.
    #[arg(long)]
    model: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "NA")]
    na: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Mcar,
    Mar,
    Mnar,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Mcar => Mechanism::Mcar,
            MechanismArg::Mar => Mechanism::Mar,
            MechanismArg::Mnar => Mechanism::Mnar,
        }
    }
}

#[derive(Args)]
struct AmputeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Proportion of cells to remove.
    #[arg(long)]
    p: f64,
    #[arg(long, value_enum, default_value = "mcar")]
    mechanism: MechanismArg,
    /// Comma-separated per-variable score weights.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long, default_value = "NA")]
    na: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Hc,
    Bhc,
    EmHc,
    EmBhc,
    EmSimple,
    EmParams,
}

#[derive(Clone, Copy, ValueEnum)]
enum Score {
    Full,
    Complete,
    Omit,
    Fm,
    Sa,
}

impl From<Score> for LikKind {
    fn from(s: Score) -> Self {
        match s {
            Score::Full => LikKind::FullMissing,
            Score::Complete => LikKind::Complete,
            Score::Omit => LikKind::Omit,
            Score::Fm => LikKind::FirstMissing,
            Score::Sa => LikKind::StageAverage,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Order {
    Fixed,
    Search,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImputeArg {
    Argmax,
    Random,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "hc")]
    algo: Algo,
    /// Score for the hc and bhc searches.
    #[arg(long, value_enum, default_value = "full")]
    score: Score,
    #[arg(long, value_enum, default_value = "fixed")]
    order: Order,
    /// Sample this many orderings instead of enumerating all of them.
    #[arg(long)]
    max_orders: Option<usize>,
    /// Minimum score gain for a move to be accepted.
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    /// Search iteration cap (total for hc, per depth for bhc).
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Additive smoothing of the final transition probabilities.
    #[arg(long, default_value_t = 0.0)]
    smooth: f64,
    #[arg(long, default_value_t = 50)]
    em_max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    em_tol: f64,
    #[arg(long, value_enum, default_value = "argmax")]
    impute: ImputeArg,
    /// Fixed staging for em-params, taken from this model; saturated otherwise.
    #[arg(long)]
    staging: Option<String>,
    #[arg(long, default_value = "NA")]
    na: String,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Reference (generating) model.
    #[arg(long = "true")]
    truth: String,
    /// Estimated model.
    #[arg(long)]
    est: String,
    #[arg(long, value_delimiter = ',', default_value = "hamming,kl,cd,kendall")]
    metrics: Vec<String>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    plan: PathBuf,
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn csv_options(na: &str) -> CsvOptions {
    CsvOptions { na_token: na.to_string(), ..Default::default() }
}

fn load_data(path: &Path, na: &str) -> Result<DataSet> {
    read_csv(path, &csv_options(na)).with_context(|| format!("reading {}", path.display()))
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let model = load_model_ref(&args.model).with_context(|| format!("loading {}", args.model))?;
    let data = sample_data(&model, args.n, cli.seed.unwrap_or(0))?;
    data.write_csv(output(cli.out.as_deref())?, &args.na)?;
    Ok(())
}

fn ampute_cmd(cli: &Cli, args: &AmputeArgs) -> Result<()> {
    let data = load_data(&args.input, &args.na)?;
    let spec = AmputeSpec {
        proportion: args.p,
        mechanism: args.mechanism.into(),
        weights: args.weights.clone(),
        seed: cli.seed.unwrap_or(0),
    };
    ampute(&data, &spec)?.write_csv(output(cli.out.as_deref())?, &args.na)?;
    Ok(())
}

fn search_summary(r: &SearchResult) -> Value {
    json!({
        "score": r.score,
        "n_stages": r.model.staging.num_stages(),
        "trace": r.trace,
        "learn_time_s": r.elapsed,
    })
}

fn em_summary(r: &EmResult) -> Value {
    json!({
        "iterations": r.iterations,
        "converged": r.converged,
        "loglik_trace": r.loglik_trace,
        "n_stages": r.model.staging.num_stages(),
        "warnings": r.warnings,
    })
}

fn fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let data = load_data(&args.data, &args.na)?;
    let search = SearchConfig {
        score_kind: args.score.into(),
        strategy: if args.algo == Algo::Bhc { Strategy::Bhc } else { Strategy::Hc },
        max_iter: args.max_iter,
        seed: cli.seed.unwrap_or(0),
        score_epsilon: args.epsilon,
        smoothing: args.smooth,
    };
    let (model, mut summary, ordering): (StagedTreeModel, Value, Vec<usize>) = match args.algo {
        Algo::Hc | Algo::Bhc => match args.order {
            Order::Fixed => {
                let tree = build_event_tree(data.spec())?;
                let r = stage_search(&tree, &data, &search)?;
                (r.model.clone(), search_summary(&r), (0..data.spec().len()).collect())
            }
            Order::Search => {
                let (ordering, r) = order_search(&data, &search, args.max_orders)?;
                (r.model.clone(), search_summary(&r), ordering)
            }
        },
        _ => {
            if args.order == Order::Search {
                bail!("order search is only available with --algo hc or bhc");
            }
            let variant = match args.algo {
                Algo::EmHc => EmVariant::StructEmHc,
                Algo::EmBhc => EmVariant::StructEmBhc,
                Algo::EmSimple => EmVariant::StructEmSimple,
                _ => EmVariant::ParamSoft,
            };
            let config = EmConfig {
                variant,
                max_iter: args.em_max_iter,
                max_outer: args.em_max_iter,
                tol: args.em_tol,
                seed: cli.seed.unwrap_or(0),
                imputation: match args.impute {
                    ImputeArg::Argmax => Imputation::Argmax,
                    ImputeArg::Random => Imputation::Random,
                },
                search: SearchConfig { score_kind: LikKind::Complete, ..search },
                ..Default::default()
            };
            let tree = build_event_tree(data.spec())?;
            let staging = match &args.staging {
                Some(reference) => {
                    let m = load_model_ref(reference)?;
                    if m.tree != tree {
                        bail!("--staging model has a different event tree than the data");
                    }
                    m.staging
                }
                None => saturated_staging(&tree),
            };
            let r = run_em(&tree, &staging, &data, &config)?;
            (r.model.clone(), em_summary(&r), (0..data.spec().len()).collect())
        }
    };
    let names: Vec<&str> = model.tree.variables().map(|s| s.names().iter().map(String::as_str).collect()).unwrap_or_default();
    summary["ordering"] = json!(ordering);
    summary["variables"] = json!(names);
    let model_json = model_to_json(&model)?;
    match &cli.out {
        Some(path) => {
            std::fs::write(path, model_json).with_context(|| format!("writing {}", path.display()))?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        None => {
            summary["model"] = serde_json::from_str(&model_json)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let truth = load_model_ref(&args.truth).with_context(|| format!("loading {}", args.truth))?;
    let est = load_model_ref(&args.est).with_context(|| format!("loading {}", args.est))?;
    let spec = truth.tree.variables().context("reference model must be X-compatible")?;
    let est_spec = est.tree.variables().context("estimated model must be X-compatible")?;
    let mut report = serde_json::Map::new();
    for metric in &args.metrics {
        let value = match metric.trim() {
            "hamming" => {
                // Defined only when both models use the same variable order.
                if spec.names() == est_spec.names() {
                    let est = relabel_levels(&est, spec)?;
                    json!(hamming_staging(&truth.tree, &truth.staging, &est.staging)?)
                } else {
                    Value::Null
                }
            }
            "kl" => {
                let q = aligned_path_probabilities(&est, spec)?;
                finite_or_string(kl_divergence(&truth.path_probabilities()?, &q)?)
            }
            "cd" => {
                let q = aligned_path_probabilities(&est, spec)?;
                let cd = cd_distance(&truth.path_probabilities()?, &q)?;
                report.insert("cd_zero".into(), json!(cd.zero_probability));
                finite_or_string(cd.value)
            }
            "kendall" => json!(kendall_names(spec.names(), est_spec.names())?),
            other => bail!("unknown metric `{other}`"),
        };
        report.insert(metric.trim().to_string(), value);
    }
    let mut w = output(cli.out.as_deref())?;
    writeln!(w, "{}", serde_json::to_string_pretty(&Value::Object(report))?)?;
    Ok(())
}

/// JSON has no infinity; infinite distances are written as the string "inf".
fn finite_or_string(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

fn benchmark(cli: &Cli, args: &BenchmarkArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.plan).with_context(|| format!("reading {}", args.plan.display()))?;
    let mut plan = BenchmarkPlan::from_json(&text)?;
    if let Some(seed) = cli.seed {
        plan.seed = seed;
    }
    log::info!("running {} result rows on {} thread(s)", plan.num_rows(), cli.jobs);
    let results = run_benchmark(&plan, cli.jobs)?;
    match &cli.out {
        Some(path) => {
            results.write_files(path)?;
            log::info!("wrote {} and {}", path.display(), timing_path(path).display());
        }
        None => results.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STM_LOG", "warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(a) => simulate(&cli, a),
        Command::Ampute(a) => ampute_cmd(&cli, a),
        Command::Fit(a) => fit(&cli, a),
        Command::Evaluate(a) => evaluate(&cli, a),
        Command::Benchmark(a) => benchmark(&cli, a),
    }
}

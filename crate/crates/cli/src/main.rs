//! `nplm` command-line tool.
//!
//! Every failure prints one line `error[E_CODE]: message` to stderr and exits
//! with the status listed in [`exit_status`].

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use nplm::baselines::{lfs_only, nearest_class, HardLabels};
use nplm::bench::{run_bench, BenchConfig};
use nplm::endmodel::{fit_linear, EndConfig, FeatureMatrix, SoftLabels};
use nplm::identifiability::{
    check_identifiability, grouped_conditional_matrix, rank_diagnostic, IdentifiabilityReport, DEFAULT_PRODUCT_CAP,
};
use nplm::io::{self, SpecSet, Truth};
use nplm::metrics::evaluate;
use nplm::model::{posterior, uniform_balance, ModelParams};
use nplm::synthetic::{random_params, sample};
use nplm::training::{fit, Optimizer, TrainConfig};
use nplm::{Error, Result, VoteMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "nplm", version, about = "Label model for partial labeling functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the label model to a votes file and write the parameters.
    Train(TrainArgs),
    /// Write posteriors (nplm) or hard labels (nc, lfs-only) for a votes file.
    Infer(InferArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Test the PLF set against the sufficient identifiability condition.
    CheckIdentifiability(CheckArgs),
    /// Sample votes and true labels from known parameters.
    Synth(SynthArgs),
    /// Train the linear end model on features and soft labels.
    TrainEnd(TrainEndArgs),
    /// Time the naive and vectorized likelihoods and a training run.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Balance {
    Fixed,
    Learned,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Nplm,
    Nc,
    LfsOnly,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    votes: PathBuf,
    /// Where to write the fitted parameters.
    #[arg(long)]
    out: PathBuf,
    /// Initial parameters; defaults to accuracy 0.7, propensity 0.5.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, value_enum, default_value_t = Balance::Fixed)]
    balance: Balance,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    optimizer: OptimizerArg,
    /// Drop rows on which every PLF abstains before training.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    filter_uncovered: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    votes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Nplm)]
    method: Method,
    /// Fitted parameters; required for `nplm`, and used by `nc` for tie-breaking.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Gold labels file.
    #[arg(long)]
    gold: PathBuf,
    /// Posterior file; scored by its row-wise argmax.
    #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
    posterior: Option<PathBuf>,
    /// Hard labels file; `-` rows count as wrong.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Parameters at which to report the rank of the grouped matrices.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Votes file to write; the truth sidecar goes to `<out>.truth.json`.
    #[arg(long)]
    out: PathBuf,
    /// Generating parameters; drawn at random from `--seed` when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainEndArgs {
    #[arg(long)]
    features: PathBuf,
    /// Soft targets as a posterior file.
    #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
    posterior: Option<PathBuf>,
    /// Hard targets as a labels file (needs `--spec`); unlabeled rows are skipped.
    #[arg(long, requires = "spec")]
    labels: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    /// Full-batch when absent.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    /// Largest m at which the naive path is timed.
    #[arg(long, default_value_t = 20_000)]
    naive_cap: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status per error code. Usage errors exit with 2.
fn exit_status(code: &str) -> u8 {
    match code {
        "E_USAGE" => 2,
        "E_FILE_NOT_FOUND" => 3,
        "E_PARSE" => 4,
        "E_SHAPE_MISMATCH" => 5,
        "E_INVALID_SPEC" => 6,
        "E_INVALID_VOTE" => 7,
        "E_INVALID_PARAMS" => 8,
        "E_INVALID_CONFIG" => 9,
        "E_EMPTY_DATASET" => 10,
        "E_NON_FINITE" => 11,
        "E_TOO_FEW_PLFS" => 12,
        "E_PRODUCT_TOO_LARGE" => 13,
        _ => 14,
    }
}

fn fail(code: &str, message: &str) -> ExitCode {
    let message = message.replace(['\n', '\r'], " ");
    eprintln!("error[{code}]: {message}");
    ExitCode::from(exit_status(code))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let parts: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            return fail("E_USAGE", parts.join(" ").trim_start_matches("error: "));
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::CheckIdentifiability(a) => check(a),
        Command::Synth(a) => synth(a),
        Command::TrainEnd(a) => train_end(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.code(), &e.to_string()),
    }
}

fn read_votes(path: &Path, set: &SpecSet) -> Result<VoteMatrix> {
    io::parse_votes(&io::read_text(path)?, &set.specs)
}

fn read_params(path: &Path, set: &SpecSet) -> Result<ModelParams<f64>> {
    let params: ModelParams<f64> = io::parse_params(&io::read_text(path)?)?;
    if params.n() != set.specs.len() || params.k() != set.classes.len() {
        return Err(Error::ShapeMismatch(format!(
            "parameters are for {} PLFs x {} classes, spec file has {} x {}",
            params.n(),
            params.k(),
            set.specs.len(),
            set.classes.len()
        )));
    }
    Ok(params)
}

fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize") + "\n";
    print!("{text}");
    match out {
        Some(path) => io::write_text(path, &text),
        None => Ok(()),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let set = SpecSet::read(&a.spec)?;
    let votes = read_votes(&a.votes, &set)?;
    let init = a.params.as_deref().map(|p| read_params(p, &set)).transpose()?;
    let config = TrainConfig {
        batch_size: a.batch_size,
        epochs: a.epochs,
        optimizer: match a.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Adam => Optimizer::adam(),
        },
        initial_lr: a.lr,
        seed: a.seed,
        learn_balance: matches!(a.balance, Balance::Learned),
        filter_uncovered: a.filter_uncovered,
        ..TrainConfig::default()
    };
    let report = fit(&set.specs, &votes, &config, init)?;
    io::write_text(&a.out, &io::params_to_string(&report.params))?;
    let (alpha, beta) = (report.params.accuracies(), report.params.propensities());
    emit_json(
        &json!({
            "examples": report.examples,
            "epochs": report.trace.len(),
            "batches": report.batches,
            "seconds": report.seconds,
            "final_lr": report.final_lr,
            "loglik_trace": report.trace,
            "accuracies": alpha.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            "propensities": beta.to_vec(),
            "class_balance": report.params.class_balance().to_vec(),
        }),
        None,
    )
}

fn infer(a: InferArgs) -> Result<()> {
    let set = SpecSet::read(&a.spec)?;
    let votes = read_votes(&a.votes, &set)?;
    let params = a.params.as_deref().map(|p| read_params(p, &set)).transpose()?;
    let k = set.classes.len();
    let balance = params.as_ref().map_or_else(|| uniform_balance::<f64>(k), |p| p.class_balance().clone());
    let text = match a.method {
        Method::Nplm => {
            let params = params.ok_or_else(|| Error::InvalidConfig("infer --method nplm needs --params".into()))?;
            io::posterior_to_string(&set.classes, &posterior(&set.specs, &params, &votes)?)
        }
        Method::Nc => {
            let labels = nearest_class(&set.specs, &votes, balance.as_slice().expect("contiguous"));
            io::labels_to_string(&set.classes, &labels.labels)
        }
        Method::LfsOnly => {
            let reduced = lfs_only(&set.specs, &votes);
            if reduced.is_empty() {
                eprintln!("warning: no traditional labeling functions; every row is unlabeled");
            }
            let labels: HardLabels = nearest_class(&reduced.specs, &reduced.votes, balance.as_slice().expect("contiguous"));
            io::labels_to_string(&set.classes, &labels.labels)
        }
    };
    io::write_text(&a.out, &text)
}

fn eval(a: EvalArgs) -> Result<()> {
    let set = SpecSet::read(&a.spec)?;
    let gold = io::parse_labels(&io::read_text(&a.gold)?, &set.classes)?
        .into_iter()
        .enumerate()
        .map(|(row, g)| g.ok_or_else(|| Error::Parse(format!("gold label missing on data row {}", row + 1))))
        .collect::<Result<Vec<usize>>>()?;
    let pred: Vec<Option<usize>> = match (&a.posterior, &a.labels) {
        (Some(path), _) => {
            let (classes, post) = io::parse_posterior::<f64>(&io::read_text(path)?)?;
            if classes != set.classes {
                return Err(Error::ShapeMismatch("posterior classes differ from the spec file".into()));
            }
            post.argmax().into_iter().map(Some).collect()
        }
        (None, Some(path)) => io::parse_labels(&io::read_text(path)?, &set.classes)?,
        (None, None) => return Err(Error::InvalidConfig("eval needs --posterior or --labels".into())),
    };
    if pred.len() != gold.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions, {} gold labels", pred.len(), gold.len())));
    }
    let report = evaluate(&pred, &gold, set.classes.len());
    emit_json(&serde_json::to_value(&report).expect("report serializes"), a.out.as_deref())
}

fn check(a: CheckArgs) -> Result<()> {
    let set = SpecSet::read(&a.spec)?;
    let params = a.params.as_deref().map(|p| read_params(p, &set)).transpose()?;
    let report = check_identifiability(&set.specs, set.space())?;
    eprintln!("{}", report.summary(&set.specs));
    let mut value = serde_json::to_value(&report).expect("report serializes");
    if let (Some(params), IdentifiabilityReport::Satisfied { partition, .. }) = (&params, &report) {
        let mut ranks = Vec::new();
        for group in [&partition.s1, &partition.s2] {
            let matrix = grouped_conditional_matrix(&set.specs, group, params, DEFAULT_PRODUCT_CAP)?;
            ranks.push(json!({ "group": group, "rank": rank_diagnostic(&matrix) }));
        }
        value["rank_diagnostics"] = json!(ranks);
    }
    emit_json(&value, a.out.as_deref())
}

fn synth(a: SynthArgs) -> Result<()> {
    let set = SpecSet::read(&a.spec)?;
    let (n, k) = (set.specs.len(), set.classes.len());
    let params = match a.params.as_deref() {
        Some(p) => read_params(p, &set)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            random_params(n, k, (0.6, 0.95), (0.3, 0.9), uniform_balance(k), &mut rng)?
        }
    };
    let data = sample(&set.specs, &params, a.m, a.seed)?;
    io::write_text(&a.out, &io::votes_to_string(&set.specs, &data.votes))?;
    let truth = Truth { seed: a.seed, params, labels: data.true_labels };
    let mut sidecar = a.out.clone().into_os_string();
    sidecar.push(".truth.json");
    io::write_text(PathBuf::from(sidecar), &io::truth_to_string(&set.classes, &truth))
}

fn train_end(a: TrainEndArgs) -> Result<()> {
    let x = io::parse_features::<f64>(&io::read_text(&a.features)?)?;
    let (classes, x, soft) = match (&a.posterior, &a.labels, &a.spec) {
        (Some(path), _, _) => {
            let (classes, post) = io::parse_posterior::<f64>(&io::read_text(path)?)?;
            (classes, x, SoftLabels::from_posterior(&post))
        }
        (None, Some(path), Some(spec)) => {
            let set = SpecSet::read(spec)?;
            let labels = io::parse_labels(&io::read_text(path)?, &set.classes)?;
            if labels.len() != x.nrows() {
                return Err(Error::ShapeMismatch(format!("{} feature rows, {} labels", x.nrows(), labels.len())));
            }
            let rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r].is_some()).collect();
            let hard: Vec<usize> = rows.iter().filter_map(|&r| labels[r]).collect();
            let soft = SoftLabels::one_hot(&hard, set.classes.len())?;
            (set.classes, x.select(ndarray::Axis(0), &rows), soft)
        }
        _ => return Err(Error::InvalidConfig("train-end needs --posterior, or --labels with --spec".into())),
    };
    if soft.probs().nrows() != x.nrows() {
        return Err(Error::ShapeMismatch(format!("{} feature rows, {} target rows", x.nrows(), soft.probs().nrows())));
    }
    let features = FeatureMatrix::new(x)?;
    let config = EndConfig { epochs: a.epochs, lr: a.lr, batch_size: a.batch_size, seed: a.seed };
    let model = fit_linear(&features, &soft, &config)?;
    io::write_text(&a.out, &io::linear_model_to_string(&classes, &model))?;
    let pred = model.predict(features.view());
    let target = nplm::model::Posterior::from_probs(soft.probs().clone())?.argmax();
    emit_json(
        &json!({
            "examples": features.m(),
            "features": features.d(),
            "classes": classes,
            "agreement_with_target_argmax": nplm::endmodel::accuracy(&pred, &target),
        }),
        None,
    )
}

fn bench(a: BenchArgs) -> Result<()> {
    let config = BenchConfig {
        m: a.m,
        n: a.n,
        k: a.k,
        seed: a.seed,
        naive_cap: a.naive_cap,
        epochs: a.epochs,
        batch_size: a.batch_size,
        repeats: a.repeats,
    };
    if config.m == 0 || config.n == 0 || config.epochs == 0 || config.naive_cap == 0 {
        return Err(Error::InvalidConfig("bench needs positive --m, --n, --epochs and --naive-cap".into()));
    }
    let report = run_bench(&config)?;
    emit_json(&serde_json::to_value(&report).expect("report serializes"), a.out.as_deref())
}

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use genimpute::harness::{
    load_checkpoint, prepare, report_run, run_plan, save_checkpoint, Dataset, ExperimentPlan, Grid,
    ScalingScope, TrainedModel,
};
use genimpute::hyper::{HiddenLayout, HyperParams, Method};
use genimpute::metrics::rmse_missing;
use genimpute::rng::{self, purpose};
use genimpute::tabular::{
    harden_categoricals, infer_schema, read_matrix, write_matrix, AmputedDataset, DatasetSchema,
    MaskMatrix, RawTable,
};

#[derive(Parser)]
#[command(
    name = "genimpute",
    version,
    about = "Impute missing values in mixed tabular data with GAIN and VAE models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schema documents.
    Schema {
        #[command(subcommand)]
        command: SchemaCommand,
    },
    /// Split, scale and ampute a dataset into a working directory.
    Ampute(AmputeArgs),
    /// Train one model on the training partition of an amputed directory.
    Train(TrainArgs),
    /// Impute one partition of an amputed directory with a checkpoint.
    Impute(ImputeArgs),
    /// RMSE of an imputation over the missing cells.
    Evaluate(EvaluateArgs),
    /// Run a full experiment plan.
    Run(RunArgs),
    /// Aggregate a results store into a table and plot data.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum SchemaCommand {
    /// Infer variable types from a CSV file.
    Infer {
        csv: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Schema document; inferred from the CSV when omitted.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = ScalingScope::All)]
    scaling_scope: ScalingScope,
}

#[derive(Args)]
struct AmputeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.2)]
    missing_p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Model hyperparameters. List-valued flags take comma-separated values; in
/// `run` they form the search grid, elsewhere exactly one value is allowed.
#[derive(Args, Clone)]
struct HyperArgs {
    #[arg(long, value_delimiter = ',')]
    hidden: Vec<HiddenLayout>,
    #[arg(long = "latent-frac", value_delimiter = ',')]
    latent_frac: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    batch_size: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    lr: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    i_max: Option<usize>,
    #[arg(long)]
    e_min: Option<f64>,
    /// Discriminator loss over missing positions only.
    #[arg(long)]
    dloss_missing_only: bool,
}

impl HyperArgs {
    fn base(&self) -> HyperParams {
        let mut h = HyperParams::default();
        if let Some(v) = self.alpha {
            h.alpha = v;
        }
        if let Some(v) = self.epochs {
            h.epochs = v;
        }
        if let Some(v) = self.i_max {
            h.i_max = v;
        }
        if let Some(v) = self.e_min {
            h.e_min = v;
        }
        h.dloss_missing_only = self.dloss_missing_only;
        h
    }

    fn grid(&self) -> Grid {
        Grid {
            hidden: self.hidden.clone(),
            latent_fraction: self.latent_frac.clone(),
            batch_size: self.batch_size.clone(),
            lr: self.lr.clone(),
            tau: self.tau.clone(),
        }
    }

    fn single(&self, method: Method, seed: u64) -> Result<HyperParams> {
        fn one<T: Clone>(name: &str, values: &[T]) -> Result<Option<T>> {
            match values {
                [] => Ok(None),
                [v] => Ok(Some(v.clone())),
                _ => bail!("--{name} takes a single value here"),
            }
        }
        let mut h = HyperParams {
            method,
            seed,
            ..self.base()
        };
        h.hidden = one("hidden", &self.hidden)?;
        if let Some(v) = one("latent-frac", &self.latent_frac)? {
            h.latent_fraction = v;
        }
        if let Some(v) = one("batch-size", &self.batch_size)? {
            h.batch_size = v;
        }
        if let Some(v) = one("lr", &self.lr)? {
            h.lr = v;
        }
        if let Some(v) = one("tau", &self.tau)? {
            h.tau = v;
        }
        h.validate()?;
        Ok(h)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `ampute`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = Method::Vae)]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Checkpoint path.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Partition {
    Train,
    Test,
}

#[derive(Args)]
struct ImputeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Imputation procedure; defaults to the checkpoint's method.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, value_enum, default_value = "test")]
    partition: Partition,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    i_max: Option<usize>,
    #[arg(long)]
    e_min: Option<f64>,
    /// Output CSV of the encoded imputation.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    imputed: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    partition: Partition,
    #[arg(long)]
    harden_categoricals: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5, 0.8])]
    missing_p: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    /// Methods to run; all eight when omitted.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Search the full hyperparameter grid; list flags narrow individual axes.
    #[arg(long)]
    full_grid: bool,
    #[arg(long)]
    harden_categoricals: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    no_checkpoints: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding `results.jsonl`.
    run_dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct AmputeMeta {
    dataset: String,
    missing_p: f64,
    seed: u64,
    scaling_scope: ScalingScope,
    train_noise_seed: u64,
    test_noise_seed: u64,
}

const META: &str = "ampute.json";
const SCHEMA: &str = "schema.json";

fn partition_name(p: Partition) -> &'static str {
    match p {
        Partition::Train => "train",
        Partition::Test => "test",
    }
}

fn write_partition(
    dir: &Path,
    name: &str,
    truth: &genimpute::tabular::EncodedMatrix,
    data: &AmputedDataset,
) -> Result<()> {
    write_matrix(&dir.join(format!("{name}_truth.csv")), truth)?;
    write_matrix(&dir.join(format!("{name}_data.csv")), &data.data)?;
    write_matrix(
        &dir.join(format!("{name}_mask.csv")),
        &data.mask.to_matrix(),
    )?;
    Ok(())
}

struct Loaded {
    schema: DatasetSchema,
    truth: genimpute::tabular::EncodedMatrix,
    data: AmputedDataset,
}

fn read_partition(dir: &Path, part: Partition) -> Result<Loaded> {
    let meta: AmputeMeta = serde_json::from_str(
        &fs::read_to_string(dir.join(META))
            .with_context(|| format!("{} is not an amputed directory", dir.display()))?,
    )?;
    let schema = DatasetSchema::load(&dir.join(SCHEMA))?;
    let name = partition_name(part);
    let truth = read_matrix(&dir.join(format!("{name}_truth.csv")))?;
    let data = read_matrix(&dir.join(format!("{name}_data.csv")))?;
    let mask = MaskMatrix::from_matrix(&read_matrix(&dir.join(format!("{name}_mask.csv")))?)?;
    let noise_seed = match part {
        Partition::Train => meta.train_noise_seed,
        Partition::Test => meta.test_noise_seed,
    };
    Ok(Loaded {
        schema,
        truth,
        data: AmputedDataset {
            data,
            mask,
            noise_seed,
        },
    })
}

fn ampute_cmd(a: AmputeArgs) -> Result<()> {
    let dataset = Dataset::load(&a.data.data, a.data.schema.as_deref())?;
    let prepared = prepare(&dataset, a.missing_p, a.seed, a.data.scaling_scope)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    prepared.schema.save(&a.out_dir.join(SCHEMA))?;
    write_partition(&a.out_dir, "train", &prepared.train_truth, &prepared.train)?;
    write_partition(&a.out_dir, "test", &prepared.test_truth, &prepared.test)?;
    let meta = AmputeMeta {
        dataset: dataset.name,
        missing_p: a.missing_p,
        seed: a.seed,
        scaling_scope: a.data.scaling_scope,
        train_noise_seed: prepared.train.noise_seed,
        test_noise_seed: prepared.test.noise_seed,
    };
    fs::write(a.out_dir.join(META), serde_json::to_string_pretty(&meta)?)?;
    println!(
        "{} train rows, {} test rows, {} features",
        prepared.train.rows(),
        prepared.test.rows(),
        prepared.schema.total_features()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let part = read_partition(&a.input, Partition::Train)?;
    let hyper = a.hyper.single(a.method, a.seed)?;
    let model = TrainedModel::train(&part.data, &part.schema, &hyper)?;
    save_checkpoint(&model, &a.output)?;
    println!("saved {} model to {}", hyper.method, a.output.display());
    Ok(())
}

fn impute_cmd(a: ImputeArgs) -> Result<()> {
    let part = read_partition(&a.input, a.partition)?;
    let mut model = load_checkpoint(&a.checkpoint, Some(&part.schema))?;
    let method = a.method.unwrap_or(model.hyper().method);
    if a.i_max.is_some() || a.e_min.is_some() {
        let mut h = model.hyper().clone();
        h.i_max = a.i_max.unwrap_or(h.i_max);
        h.e_min = a.e_min.unwrap_or(h.e_min);
        h.validate()?;
        let params = model.params().clone();
        model = TrainedModel::initial(&part.schema, &h)?;
        model.set_params(&params)?;
    }
    let mut r = rng::stream(a.seed, purpose::IMPUTE);
    let out = model.impute(&part.data, method, &mut r)?;
    write_matrix(&a.output, &out.matrix)?;
    if let Some(n) = out.iterations_used {
        println!("{n} iterations");
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let part = read_partition(&a.input, a.partition)?;
    let mut imputed = read_matrix(&a.imputed)?;
    if a.harden_categoricals {
        imputed = harden_categoricals(&part.schema, &imputed);
    }
    let rmse = rmse_missing(&part.truth, &imputed, &part.data.mask)?;
    println!("{rmse}");
    Ok(())
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let mut plan = ExperimentPlan::new(&a.data.data, &a.out_dir);
    plan.schema = a.data.schema.clone();
    plan.options.scaling = a.data.scaling_scope;
    plan.options.harden_categoricals = a.harden_categoricals;
    plan.missing_p = a.missing_p;
    plan.seeds = a.seeds;
    plan.master_seed = a.master_seed;
    if !a.method.is_empty() {
        plan.methods = a.method;
    }
    plan.base = a.hyper.base();
    let narrowed = a.hyper.grid();
    plan.grid = if a.full_grid {
        let full = Grid::full();
        let pick =
            |given: &Vec<f64>, all: Vec<f64>| if given.is_empty() { all } else { given.clone() };
        Grid {
            hidden: if narrowed.hidden.is_empty() {
                full.hidden
            } else {
                narrowed.hidden
            },
            latent_fraction: pick(&narrowed.latent_fraction, full.latent_fraction),
            batch_size: if narrowed.batch_size.is_empty() {
                full.batch_size
            } else {
                narrowed.batch_size
            },
            lr: pick(&narrowed.lr, full.lr),
            tau: pick(&narrowed.tau, full.tau),
        }
    } else {
        narrowed
    };
    plan.jobs = a.jobs;
    plan.save_checkpoints = !a.no_checkpoints;
    let summary = run_plan(&plan)?;
    for f in &summary.failures {
        eprintln!(
            "failed: {} {} p={} seed={}: {}",
            f.dataset, f.method, f.missing_p, f.seed, f.error
        );
    }
    println!(
        "{} runs recorded, {} failed, results in {}",
        summary.results.len(),
        summary.failures.len(),
        a.out_dir.display()
    );
    if !summary.results.is_empty() {
        print!("{}", report_run(&a.out_dir)?.markdown());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Schema {
            command: SchemaCommand::Infer { csv, output },
        } => {
            let table = RawTable::read(&csv)?;
            let schema = infer_schema(&table)?;
            match output {
                Some(p) => schema.save(&p)?,
                None => println!("{}", schema.to_json()),
            }
        }
        Command::Ampute(a) => ampute_cmd(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Impute(a) => impute_cmd(a)?,
        Command::Evaluate(a) => evaluate_cmd(a)?,
        Command::Run(a) => run_cmd(a)?,
        Command::Report(a) => {
            let report = report_run(&a.run_dir)?;
            print!("{}", report.markdown());
        }
    }
    Ok(())
}

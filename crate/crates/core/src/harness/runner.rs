//! Full experiment plans and the append-only results store.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::protocol::{
    family_method, prepare, run_family, CellOptions, Dataset, Grid, SelectionRecord,
};
use crate::error::{Error, Result};
use crate::hyper::{HyperParams, Method};
use crate::metrics::RunResult;
use crate::rng;

pub const RESULTS_FILE: &str = "results.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const SELECTION_FILE: &str = "selection.jsonl";
pub const PLAN_FILE: &str = "plan.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Every (missing probability, seed, hyperparameter) combination to run on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub data: PathBuf,
    pub schema: Option<PathBuf>,
    pub missing_p: Vec<f64>,
    pub seeds: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    /// Values not searched by `grid`; its `method` and `seed` are overridden per run.
    pub base: HyperParams,
    pub grid: Grid,
    pub options: CellOptions,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub save_checkpoints: bool,
}

impl ExperimentPlan {
    pub fn new(data: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            data: data.into(),
            schema: None,
            missing_p: vec![0.2, 0.5, 0.8],
            seeds: 3,
            master_seed: 0,
            methods: Method::ALL.to_vec(),
            base: HyperParams::default(),
            grid: Grid::default(),
            options: CellOptions::default(),
            out_dir: out_dir.into(),
            jobs: 1,
            save_checkpoints: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.missing_p.is_empty() || self.missing_p.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::Invalid(format!(
                "missing probabilities {:?} must lie in (0, 1]",
                self.missing_p
            )));
        }
        if self.seeds == 0 {
            return Err(Error::Invalid("at least one seed is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Invalid("no methods selected".into()));
        }
        self.base.validate()
    }

    /// Seed of the `k`-th repetition. Every missing probability reuses it, so
    /// splits are shared across `p` and amputation masks are nested.
    pub fn seed(&self, k: usize) -> u64 {
        rng::run_seed(self.master_seed, k as u64)
    }
}

/// A run that could not produce a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub dataset: String,
    pub method: Method,
    pub missing_p: f64,
    pub seed: u64,
    pub error: String,
}

/// One line of the results store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum StoreRecord {
    Ok(RunResult),
    Failed(RunFailure),
}

#[derive(Serialize)]
struct Timing<'a> {
    dataset: &'a str,
    method: Method,
    missing_p: f64,
    seed: u64,
    wall_time: f64,
}

/// What a plan produced, in plan order.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub results: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

struct Task {
    missing_p: f64,
    seed_index: usize,
    seed: u64,
    methods: Vec<Method>,
}

struct TaskOutput {
    records: Vec<StoreRecord>,
    selection: Vec<SelectionRecord>,
}

/// Methods grouped by the model they share, in order of first appearance.
fn families(methods: &[Method]) -> Vec<Vec<Method>> {
    let mut out: Vec<Vec<Method>> = Vec::new();
    for &m in methods {
        match out
            .iter_mut()
            .find(|f| family_method(f[0]) == family_method(m))
        {
            Some(f) if !f.contains(&m) => f.push(m),
            Some(_) => {}
            None => out.push(vec![m]),
        }
    }
    out
}

fn checkpoint_name(dataset: &str, p: f64, k: usize, family: Method) -> String {
    format!(
        "{dataset}-p{p}-s{k}-{}.ckpt",
        family.as_str().replace('+', "_")
    )
}

fn append_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn run_task(plan: &ExperimentPlan, dataset: &Dataset, task: &Task) -> TaskOutput {
    let family = family_method(task.methods[0]);
    let base = HyperParams {
        method: family,
        seed: task.seed,
        ..plan.base.clone()
    };
    let outcome = (|| {
        let prepared = prepare(dataset, task.missing_p, task.seed, plan.options.scaling)?;
        let configs = plan.grid.configs(&base);
        let out = run_family(
            &dataset.name,
            &prepared,
            &task.methods,
            &configs,
            task.missing_p,
            task.seed,
            plan.options.harden_categoricals,
        )?;
        if plan.save_checkpoints {
            let dir = plan.out_dir.join(CHECKPOINT_DIR);
            let path = dir.join(checkpoint_name(
                &dataset.name,
                task.missing_p,
                task.seed_index,
                family,
            ));
            save_checkpoint(&out.model, &path)?;
        }
        Ok::<_, Error>(out)
    })();
    match outcome {
        Ok(out) => TaskOutput {
            records: out.results.into_iter().map(StoreRecord::Ok).collect(),
            selection: out.selection,
        },
        Err(e) => TaskOutput {
            records: task
                .methods
                .iter()
                .map(|&method| {
                    StoreRecord::Failed(RunFailure {
                        dataset: dataset.name.clone(),
                        method,
                        missing_p: task.missing_p,
                        seed: task.seed,
                        error: e.to_string(),
                    })
                })
                .collect(),
            selection: Vec::new(),
        },
    }
}

/// Runs every cell of `plan`, in parallel over `plan.jobs` workers, and
/// appends the outcomes to the stores under `plan.out_dir` in plan order.
/// A failing cell is recorded and the remaining cells still run.
pub fn run_plan(plan: &ExperimentPlan) -> Result<RunSummary> {
    plan.validate()?;
    let dataset = Dataset::load(&plan.data, plan.schema.as_deref())?;
    fs::create_dir_all(&plan.out_dir).map_err(|e| Error::io(&plan.out_dir, e))?;
    if plan.save_checkpoints {
        let dir = plan.out_dir.join(CHECKPOINT_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let plan_path = plan.out_dir.join(PLAN_FILE);
    fs::write(&plan_path, serde_json::to_string_pretty(plan)?)
        .map_err(|e| Error::io(&plan_path, e))?;

    let mut tasks = Vec::new();
    for &p in &plan.missing_p {
        for k in 0..plan.seeds {
            for methods in families(&plan.methods) {
                tasks.push(Task {
                    missing_p: p,
                    seed_index: k,
                    seed: plan.seed(k),
                    methods,
                });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let outputs: Vec<TaskOutput> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| run_task(plan, &dataset, t))
            .collect()
    });

    let mut summary = RunSummary::default();
    let mut records = Vec::new();
    let mut timings = Vec::new();
    let mut selection = Vec::new();
    for out in outputs {
        for rec in out.records {
            match &rec {
                StoreRecord::Ok(r) => summary.results.push(r.clone()),
                StoreRecord::Failed(f) => summary.failures.push(f.clone()),
            }
            records.push(rec);
        }
        selection.extend(out.selection);
    }
    for r in &summary.results {
        timings.push(Timing {
            dataset: &r.dataset,
            method: r.method,
            missing_p: r.missing_p,
            seed: r.seed,
            wall_time: r.wall_time,
        });
    }
    append_lines(&plan.out_dir.join(RESULTS_FILE), &records)?;
    append_lines(&plan.out_dir.join(TIMINGS_FILE), &timings)?;
    append_lines(&plan.out_dir.join(SELECTION_FILE), &selection)?;
    Ok(summary)
}

/// Every record of a results store, in file order.
pub fn read_store(path: &Path) -> Result<Vec<StoreRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Data {
            row: i,
            detail: format!("bad results record: {e}"),
        })?);
    }
    Ok(out)
}

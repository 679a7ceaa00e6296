//! Experiment plumbing: protocol cells, grid search, checkpoints, the
//! results store and reports.

mod checkpoint;
mod model;
mod protocol;
mod report;
mod runner;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC,
};
pub use model::{Imputation, TrainedModel};
pub use protocol::{
    config_label, family_method, prepare, run_family, select, CellOptions, CellOutcome, Dataset,
    Grid, Prepared, ScalingScope, SelectionRecord, TRAIN_RATIO, VALIDATION_RATIO,
};
pub use report::{report_run, Report, PLOT_FILE, SUMMARY_FILE};
pub use runner::{
    read_store, run_plan, ExperimentPlan, RunFailure, RunSummary, StoreRecord, CHECKPOINT_DIR,
    PLAN_FILE, RESULTS_FILE, SELECTION_FILE, TIMINGS_FILE,
};

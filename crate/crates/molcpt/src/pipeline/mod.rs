//! Dataset ingestion, scaffold splitting, metrics, training orchestration,
//! checkpoints, hyper-parameter sweeps, and synthetic benchmark data.

mod checkpoint;
mod dataset;
mod metrics;
mod model;
mod split;
mod sweep;
mod synthetic;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use dataset::{load_dataset, load_dataset_reader, DatasetError, SplitAssignment, TaskDataset, TaskRecord};
pub use metrics::{
    mean_std, multi_task_auc, roc_auc, roc_auc_pairwise, write_metrics, MetricsRow,
};
pub use model::{eval_threads, ModelVars, PromptModel, Trainability};
pub use split::{scaffold_graph, scaffold_key, scaffold_split};
pub use sweep::{sweep, sweep_tsv, SweepConfig, SweepRow};
pub use synthetic::{planted_corpus, planted_csv, PlantedSpec};
pub use train::{finetune_run, zeroshot_run, Regime, RunConfig, RunError, RunOutcome, SeedOutcome};

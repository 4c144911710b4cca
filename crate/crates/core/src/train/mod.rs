//! Training loop, optimizer, schedule, evaluation, ablation and output files.

mod ablation;
mod config;
mod eval;
mod optim;
mod report;
mod run;
mod schedule;

pub use ablation::{ablate, ablation_configs, AblationRow, ABLATION_VARIANTS};
pub use config::{DataConfig, DataSource, LossConfig, ModelConfig, OptimizerConfig, ScheduleConfig, TrainConfig};
pub use eval::{accuracy_of, evaluate, Evaluation};
pub use optim::{sgd_step, OptimizerState, SgdParams};
pub use report::{write_ablation_csv, write_embeddings_csv, MetricsWriter, RunHeader};
pub use run::{derived_seeds, train_on, train_run, MetricsRecord, RunOutput};
pub use schedule::{omega, Ramp};

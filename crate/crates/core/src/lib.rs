//! Multi-task random forests with jackknife uncertainty estimates and
//! composable transfer-learning architectures.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: feature matrix plus sparse multi-task labels, delimited-text
//!   ingestion and the cleaning operations (duplicate averaging, class
//!   collapsing, conflict removal, filtering, subsampling).
//! - [`forest`]: full-depth CART trees whose split criterion sums
//!   label-count-weighted impurities across tasks, bagged into forests that
//!   keep their bootstrap membership counts.
//! - [`uncertainty`]: jackknife-after-bootstrap and infinitesimal-jackknife
//!   variance estimates for regression predictions.
//! - [`transfer`]: single-task, multi-task, difference and explicit latent
//!   variable architectures compiled into trained pipelines.
//! - [`composite`]: classification tasks derived from several regression
//!   predictions (argmin / argmax).
//! - [`eval`]: fixed fold plans, holdouts, learning curves, repeated trials
//!   and the RMSE / weighted-F1 metrics.
//! - [`synth`]: seeded synthetic generators used as test oracles.

pub mod composite;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod forest;
mod persist;
pub mod seed;
pub mod synth;
pub mod transfer;
pub mod uncertainty;
pub use composite::{classify_composite, composite_ground_truth, CompositeRule, CompositeTaskSpec};
pub use dataset::{Dataset, GroupKey, Label, TaskKind, TaskSpec};
pub use error::{Error, Result};
pub use eval::{
    cross_validate, evaluate, holdout, learning_curve, make_fold_plan, rmse, weighted_f1, EvalMode, EvalReport, FoldPlan,
    MetricSpec, NamedArchitecture, Protocol,
};
pub use forest::{predict_class, predict_real, train_forest, Forest, ForestParams};
pub use transfer::{
    predict_architecture, train_architecture, ArchitectureSpec, PretrainedStore, TaskPrediction,
    TrainedArchitecture, TrainingParams,
};
pub use uncertainty::{jackknife_variance, PredictionWithUncertainty};

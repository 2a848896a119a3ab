//! Open-world classification: features, extreme value machine, FINCH
//! clustering of rejected samples and open-world evaluation.

mod evm;
mod features;
mod finch;
mod metrics;
mod pipeline;
mod weibull;

pub use evm::{EvmModel, EvmParams, ExtremeVector, Prediction, UnknownQueue};
pub use features::{extract_features, FeatureVector};
pub use finch::{finch_cluster, select_partition, Cluster, Partition};
pub use metrics::{b_cubed, OwConfusion};
pub use pipeline::{
    blob_centers, features_csv, increments_csv, run_open_world, sample_blob, IncrementResult,
    OpenWorldRun, OpenWorldSpec, LEARNED_LABEL_BASE,
};
pub use weibull::{fit_weibull, FitMethod, Weibull, WeibullFit};

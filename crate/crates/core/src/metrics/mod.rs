//! Evaluation metrics, bootstrap intervals and permutation importance.

pub mod bootstrap;
pub mod cindex;
pub mod importance;
pub mod ipcw;

pub use bootstrap::{bootstrap_ci, bootstrap_many, BootstrapConfig, Interval};
pub use cindex::{c_index, pair_counts, PairCounts};
pub use importance::{permutation_importance, rank_by_mean, FeatureImportance};
pub use ipcw::{brier, brier_curve, integrated_brier, nbll, CensoringKm, TimeGrid, NBLL_EPS};

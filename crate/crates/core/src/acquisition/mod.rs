//! Budgeted training-set construction: diversity clusters, acquisition scores,
//! constrained batch selection and the active-learning loop.

mod active;
mod kmeans;
mod scores;
mod select;

pub use active::{active_learning_run, ActiveConfig, ActiveOutcome, Policy, RoundRecord};
pub use kmeans::{kmeans, ClusterModel};
pub use scores::{compute_scores, min_max_normalize, AcquisitionScores, ScoreWeights};
pub use select::{
    audit_selection, greedy_select, rank_greedy_select, treated_cap, SelectionProblem, SelectionResult, Slack,
};

//! Dual active learning for linear preference rewards.
//!
//! The crate covers the full loop of reward learning from pairwise
//! comparisons supplied by teachers of differing rationality:
//!
//! - [`preference`]: the linear reward model, the logistic preference model
//!   with per-category teacher rationality, and a numerically stable
//!   log-likelihood.
//! - [`mle`]: constrained maximum-likelihood estimation, Fisher information
//!   matrices with incremental rank-one updates, and the confidence radius
//!   used for pessimism.
//! - [`selector`]: sequential D-optimal selection of (conversation, teacher)
//!   pairs, its batch variant and four baseline selectors.
//! - [`policy`]: pessimistic and greedy policy extraction and sub-optimality.
//! - [`sim`]: synthetic environments used by the experiments.
//! - [`harness`]: experiment orchestration, metrics, CSV/JSON persistence and
//!   reporting.
//!
//! Vectors and matrices are `nalgebra` dynamic types; dimensions are small
//! (d ≤ a few dozen) so everything is dense.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod mle;
pub mod policy;
pub mod preference;
pub mod selector;
pub mod selftest;
pub mod sim;


pub use error::{Error, Result};
pub use mle::{confidence_radius, fit_mle, info_matrix, score, ConfidenceSpec, InfoMatrix, MleFit, MleOptions};
pub use policy::{
    greedy_policy, pessimistic_value, solve_pessimistic, suboptimality, trajectory_feature_diff, PessimismMode,
    PolicyAssignment, PolicyContext, PolicyProblem,
};
pub use preference::{
    log_likelihood, preference_prob, sample_preference, sigmoid, sigmoid_deriv, FeatureDiff, PreferenceRecord,
    RewardParams, TeacherPool,
};
pub use selector::{DesignConfig, DesignState, LabelOracle, SelectorKind, SelectorPolicy, TraceRecord};

/// Dense column vector used for parameters and features.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for information matrices and teacher pools.
pub type Matrix = nalgebra::DMatrix<f64>;

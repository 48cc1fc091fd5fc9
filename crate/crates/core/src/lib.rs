//! Dual optimization proxies for parametric bounded linear programs.
//!
//! A neural network predicts the equality multipliers `y` of
//! `min cᵀx s.t. Ax = b, l ≤ x ≤ u`; the bound multipliers are then completed
//! in closed form so every prediction is dual feasible and yields a valid
//! lower bound on the optimal value.
//!
//! - [`lp`]: instances, dual points, residuals
//! - [`completion`]: closed-form dual completion, unregularized and log-barrier
//! - [`loss`]: smoothed self-supervised loss and its closed-form gradient
//! - [`dcopf`]: DC optimal power flow instances from MATPOWER cases
//! - [`mlp`]: the network, its training loop and checkpoints
//! - [`baselines`]: Penalty and DC3 comparison methods
//! - [`metrics`]: violation and gap metrics, model evaluation
//! - [`oracle`]: interior-point LP solver and numerical completion oracles

pub mod baselines;
pub mod completion;
pub mod dcopf;
pub mod error;
pub mod loss;
pub mod lp;
pub mod metrics;
pub mod mlp;
pub mod oracle;

pub use completion::{CompletionOutput, Regularizer};
pub use error::{Error, Result};
pub use loss::LossValue;
pub use lp::{DualPoint, LpInstance, ResidualReport};
pub use metrics::MetricsRecord;
pub use mlp::{Method, MlpModel, Proxy, TrainConfig};

//! Comparison methods that predict bound multipliers directly.
//!
//! - [`penalty`]: predict `(y, zˡ, zᵘ)` and penalize dual infeasibility.
//! - [`dc3`]: predict `(y, zˡ)`, solve the dual equality for `zᵘ`, then run
//!   unrolled gradient steps on the remaining sign violations.

pub mod dc3;
pub mod penalty;

pub use dc3::{dc3_complete, dc3_correct, dc3_loss_and_grad, Dc3Config, Dc3Trace};
pub use penalty::{penalty_loss, penalty_loss_and_grad, PenaltyGrad, PenaltyLossValue};

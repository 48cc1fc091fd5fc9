//! Independent ground truth for the closed forms and for evaluation: a
//! primal-dual interior-point LP solver, a numerical completion solver and a
//! smoothed-dual maximizer.

mod inner;
mod ipm;
mod smoothed;

pub use inner::{solve_inner, solve_inner_1d, InnerSolution};
pub use ipm::{solve_lp, SolveResult, SolveStatus, MAX_ITER, TOL};
pub use smoothed::{solve_smoothed_dual, SmoothedDualResult};

//! Damped Newton ascent on `bᵀy + Ξ_μ(y)`.
//!
//! The Hessian is `−A·diag(μ / (zˡ² + zᵘ²))·Aᵀ`, obtained by differentiating
//! the barrier stationarity conditions. Small μ is reached by continuation
//! from μ = 1, dividing by 10 per stage and warm starting each stage.

use nalgebra::{Cholesky, DVector};

use crate::completion::Regularizer;
use crate::error::{Error, Result};
use crate::lp::{norm_inf, LpInstance};
use crate::loss::s3l_loss_and_grad;

const MAX_NEWTON: usize = 200;
const STAGE_TOL: f64 = 1e-6;
const FINAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedDualResult {
    pub y: DVector<f64>,
    /// `‖∇_y L_μ‖∞` at the returned point.
    pub grad_norm: f64,
    pub iterations: usize,
}

fn newton_stage(
    inst: &LpInstance,
    mut y: DVector<f64>,
    mu: f64,
    tol: f64,
    iterations: &mut usize,
) -> Result<DVector<f64>> {
    let reg = Regularizer::LogBarrier { mu };
    let a = inst.a();
    let (mut loss, mut g, mut out) = s3l_loss_and_grad(inst, &y, reg)?;
    for _ in 0..MAX_NEWTON {
        let gnorm = norm_inf(&g);
        if gnorm <= tol {
            return Ok(y);
        }
        *iterations += 1;
        let w = DVector::from_fn(inst.n(), |j, _| {
            mu / (out.zl[j] * out.zl[j] + out.zu[j] * out.zu[j])
        });
        let mut aw = a.clone();
        for (j, mut col) in aw.column_iter_mut().enumerate() {
            col *= w[j];
        }
        let mut h = &aw * a.transpose();
        let ridge = 1e-14 * h.diagonal().amax().max(f64::MIN_POSITIVE);
        for i in 0..h.nrows() {
            h[(i, i)] += ridge;
        }
        let chol = Cholesky::new(h)
            .ok_or_else(|| Error::Singular("smoothed dual Hessian not definite".into()))?;
        let dy = chol.solve(&g);
        let slope = g.dot(&dy);

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &y + step * &dy;
            let (tl, tg, tout) = s3l_loss_and_grad(inst, &trial, reg)?;
            let sufficient = tl.total >= loss.total + 1e-4 * step * slope;
            // Near the optimum the objective is flat to rounding; then a
            // smaller gradient is the only usable progress signal.
            let flat = (tl.total - loss.total).abs() <= 1e-13 * (1.0 + loss.total.abs());
            if tl.total.is_finite() && (sufficient || (flat && norm_inf(&tg) < gnorm)) {
                y = trial;
                loss = tl;
                g = tg;
                out = tout;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm_inf(&g) <= tol {
        Ok(y)
    } else {
        Err(Error::NoConvergence(format!(
            "smoothed dual at mu = {mu:e}: gradient {:e} above {tol:e}",
            norm_inf(&g)
        )))
    }
}

/// Maximizes the smoothed dual `bᵀy + Ξ_μ(y)` for `μ > 0`.
pub fn solve_smoothed_dual(inst: &LpInstance, mu: f64) -> Result<SmoothedDualResult> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Contract(format!("mu must be > 0, got {mu}")));
    }
    let scale = 1.0 + norm_inf(inst.b());
    let mut y = DVector::zeros(inst.m());
    let mut iterations = 0;
    let mut stage_mu = mu.max(1.0);
    while stage_mu > mu {
        y = newton_stage(inst, y, stage_mu, STAGE_TOL * scale, &mut iterations)?;
        stage_mu = (stage_mu / 10.0).max(mu);
    }
    y = newton_stage(inst, y, mu, FINAL_TOL * scale, &mut iterations)?;
    let (_, g, _) = s3l_loss_and_grad(inst, &y, Regularizer::LogBarrier { mu })?;
    Ok(SmoothedDualResult {
        grad_norm: norm_inf(&g),
        y,
        iterations,
    })
}

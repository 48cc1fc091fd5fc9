use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lp::{dual_objective, neg_part, DualPoint, LpInstance};

/// Smoothing of `|t|` as `√(t² + ε²) − ε`.
pub const ABS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyLossValue {
    pub dual_obj: f64,
    /// Mean over coordinates of the smoothed `|Aᵀy + zˡ − zᵘ − c|` plus the
    /// means of `|zˡ|⁻` and `|zᵘ|⁻`.
    pub violation: f64,
    /// `dual_obj − weight·violation`
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyGrad {
    pub y: DVector<f64>,
    pub zl: DVector<f64>,
    pub zu: DVector<f64>,
}

fn smooth_abs(t: f64) -> f64 {
    t.hypot(ABS_EPS) - ABS_EPS
}

fn check(inst: &LpInstance, dp: &DualPoint, weight: f64) -> Result<DVector<f64>> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::Contract(format!("penalty weight must be >= 0, got {weight}")));
    }
    let mut r = &dp.zl - &dp.zu - inst.c();
    r.gemv_tr(1.0, inst.a(), &dp.y, 1.0);
    if dp.zl.len() != inst.n() || dp.zu.len() != inst.n() {
        return Err(Error::dims("bound multipliers", inst.n(), dp.zl.len()));
    }
    Ok(r)
}

pub fn penalty_loss(inst: &LpInstance, dp: &DualPoint, weight: f64) -> Result<PenaltyLossValue> {
    let r = check(inst, dp, weight)?;
    let n = inst.n() as f64;
    let violation = (r.iter().map(|&t| smooth_abs(t)).sum::<f64>()
        + dp.zl.iter().map(|&t| neg_part(t)).sum::<f64>()
        + dp.zu.iter().map(|&t| neg_part(t)).sum::<f64>())
        / n;
    let dual_obj = dual_objective(inst, dp)?;
    Ok(PenaltyLossValue {
        dual_obj,
        violation,
        total: dual_obj - weight * violation,
    })
}

/// Gradients of the dual objective and of the violation, separately.
pub fn penalty_part_grads(inst: &LpInstance, dp: &DualPoint) -> Result<(PenaltyGrad, PenaltyGrad)> {
    let r = check(inst, dp, 0.0)?;
    let n = inst.n() as f64;
    let obj = PenaltyGrad {
        y: inst.b().clone(),
        zl: inst.l().clone(),
        zu: -inst.u(),
    };
    let q = r.map(|t| t / t.hypot(ABS_EPS) / n);
    let step = |t: f64| if t < 0.0 { -1.0 / n } else { 0.0 };
    let viol = PenaltyGrad {
        y: inst.a() * &q,
        zl: &q + dp.zl.map(step),
        zu: -&q + dp.zu.map(step),
    };
    Ok((obj, viol))
}

/// Loss and its gradient with respect to `(y, zˡ, zᵘ)`.
pub fn penalty_loss_and_grad(
    inst: &LpInstance,
    dp: &DualPoint,
    weight: f64,
) -> Result<(PenaltyLossValue, PenaltyGrad)> {
    let value = penalty_loss(inst, dp, weight)?;
    let (obj, viol) = penalty_part_grads(inst, dp)?;
    let grad = PenaltyGrad {
        y: obj.y - weight * viol.y,
        zl: obj.zl - weight * viol.zl,
        zu: obj.zu - weight * viol.zu,
    };
    Ok((value, grad))
}

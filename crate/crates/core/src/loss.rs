//! Smoothed self-supervised loss `L_μ(y) = bᵀy + Ξ_μ(y)` and its closed-form
//! gradient `b − A·x_μ(y)`.
//!
//! Losses are reported in maximization form; the trainer negates once.

use nalgebra::{DMatrix, DVector};

use crate::completion::{complete, complete_rows, reduced_costs_batch, CompletionOutput, Regularizer};
use crate::error::{Error, Result};
use crate::lp::{reduced_costs, LpInstance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// `L_μ`
    pub total: f64,
    /// `bᵀy + lᵀzˡ − uᵀzᵘ` at the completed point.
    pub dual_obj: f64,
    /// `μ·Φ(zˡ, zᵘ)`, zero when unregularized.
    pub barrier: f64,
}

fn loss_from_completion(
    inst: &LpInstance,
    y: &DVector<f64>,
    reg: Regularizer,
    out: &CompletionOutput,
) -> LossValue {
    loss_with_rhs(inst, inst.b().as_slice(), y.as_slice(), reg, out)
}

fn loss_with_rhs(
    inst: &LpInstance,
    b: &[f64],
    y: &[f64],
    reg: Regularizer,
    out: &CompletionOutput,
) -> LossValue {
    let by: f64 = b.iter().zip(y).map(|(p, q)| p * q).sum();
    let dual_obj = by + inst.l().dot(&out.zl) - inst.u().dot(&out.zu);
    let barrier = match reg {
        Regularizer::None => 0.0,
        Regularizer::LogBarrier { mu } => {
            mu * out
                .zl
                .iter()
                .zip(out.zu.iter())
                .map(|(a, b)| a.ln() + b.ln())
                .sum::<f64>()
        }
    };
    LossValue {
        total: dual_obj + barrier,
        dual_obj,
        barrier,
    }
}

fn grad_from_completion(inst: &LpInstance, out: &CompletionOutput) -> DVector<f64> {
    let mut g = inst.b().clone();
    g.gemv(-1.0, inst.a(), &out.x, 1.0);
    g
}

pub fn s3l_loss(inst: &LpInstance, y: &DVector<f64>, reg: Regularizer) -> Result<LossValue> {
    let out = complete(inst, y, reg)?;
    Ok(loss_from_completion(inst, y, reg, &out))
}

/// (Super)gradient of `L_μ` with respect to `y`.
///
/// For `μ = 0` at a kink (`z_j = 0`) the midpoint tie-break of the completion
/// selects the returned supergradient.
pub fn s3l_grad_y(inst: &LpInstance, y: &DVector<f64>, reg: Regularizer) -> Result<DVector<f64>> {
    let out = complete(inst, y, reg)?;
    Ok(grad_from_completion(inst, &out))
}

/// Loss and gradient from a single completion.
pub fn s3l_loss_and_grad(
    inst: &LpInstance,
    y: &DVector<f64>,
    reg: Regularizer,
) -> Result<(LossValue, DVector<f64>, CompletionOutput)> {
    let out = complete(inst, y, reg)?;
    let loss = loss_from_completion(inst, y, reg, &out);
    let grad = grad_from_completion(inst, &out);
    Ok((loss, grad, out))
}

/// Losses and gradients for a batch of instances that share `(A, c, l, u)`
/// with `template` and differ in their right-hand sides.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub values: Vec<LossValue>,
    /// One gradient `bᵢ − A·xᵢ` per row.
    pub grads: DMatrix<f64>,
    /// `max |c − Aᵀyᵢ|` over the batch.
    pub max_abs_z: f64,
}

impl BatchLoss {
    pub fn mean_total(&self) -> f64 {
        self.values.iter().map(|v| v.total).sum::<f64>() / self.values.len().max(1) as f64
    }
}

/// `rhs` and `ys` hold one sample per row (batch × m).
pub fn s3l_batch(
    template: &LpInstance,
    rhs: &DMatrix<f64>,
    ys: &DMatrix<f64>,
    reg: Regularizer,
) -> Result<BatchLoss> {
    if rhs.shape() != ys.shape() {
        return Err(Error::dims("rhs batch rows", ys.nrows(), rhs.nrows()));
    }
    let zs = reduced_costs_batch(template, ys)?;
    let max_abs_z = zs.iter().fold(0.0_f64, |acc, z| acc.max(z.abs()));
    let outs = complete_rows(template, &zs, reg)?;
    let mut xs = DMatrix::zeros(ys.nrows(), template.n());
    let mut values = Vec::with_capacity(outs.len());
    for (i, out) in outs.iter().enumerate() {
        xs.row_mut(i).tr_copy_from(&out.x);
        let b: Vec<f64> = rhs.row(i).iter().copied().collect();
        let y: Vec<f64> = ys.row(i).iter().copied().collect();
        values.push(loss_with_rhs(template, &b, &y, reg, out));
    }
    let mut grads = rhs.clone();
    grads.gemm(-1.0, &xs, &template.a().transpose(), 1.0);
    Ok(BatchLoss {
        values,
        grads,
        max_abs_z,
    })
}

/// Largest componentwise error `|fd − g| / (1 + max(|fd|, |g|))` between the
/// closed-form gradient and central differences of the loss.
///
/// The step for coordinate `i` is `h·(1 + |yᵢ|)`. For `μ = 0`, coordinates
/// whose perturbation touches a reduced cost within `10·step·‖A‖∞` of a kink
/// are skipped; returns `None` when every coordinate was skipped.
pub fn finite_difference_check(
    inst: &LpInstance,
    y: &DVector<f64>,
    reg: Regularizer,
    h: f64,
) -> Result<Option<f64>> {
    if !(h > 0.0) {
        return Err(Error::Contract(format!("step must be > 0, got {h}")));
    }
    let g = s3l_grad_y(inst, y, reg)?;
    let z = reduced_costs(inst, y)?;
    let a = inst.a();
    let a_inf = a.amax();
    let mut worst: Option<f64> = None;
    let mut yp = y.clone();
    for i in 0..inst.m() {
        let step = h * (1.0 + y[i].abs());
        if reg == Regularizer::None {
            let near_kink = (0..inst.n())
                .any(|j| a[(i, j)] != 0.0 && z[j].abs() < 10.0 * step * a_inf);
            if near_kink {
                continue;
            }
        }
        yp[i] = y[i] + step;
        let up = s3l_loss(inst, &yp, reg)?.total;
        yp[i] = y[i] - step;
        let down = s3l_loss(inst, &yp, reg)?.total;
        yp[i] = y[i];
        let fd = (up - down) / (2.0 * step);
        let err = (fd - g[i]).abs() / (1.0 + fd.abs().max(g[i].abs()));
        worst = Some(worst.map_or(err, |w: f64| w.max(err)));
    }
    Ok(worst)
}

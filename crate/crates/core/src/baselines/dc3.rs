use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{dual_objective, neg_part, DualPoint, LpInstance};

use super::penalty::PenaltyLossValue;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dc3Config {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for Dc3Config {
    fn default() -> Self {
        Self {
            steps: 10,
            lr: 1e-2,
            momentum: 0.5,
        }
    }
}

/// The unique `zᵘ = Aᵀy + zˡ − c` satisfying the dual equality.
pub fn dc3_complete(inst: &LpInstance, y: &DVector<f64>, zl: &DVector<f64>) -> Result<DVector<f64>> {
    if zl.len() != inst.n() {
        return Err(Error::dims("zl", inst.n(), zl.len()));
    }
    if y.len() != inst.m() {
        return Err(Error::dims("y", inst.m(), y.len()));
    }
    let mut zu = zl - inst.c();
    zu.gemv_tr(1.0, inst.a(), y, 1.0);
    Ok(zu)
}

/// `½‖|zᵘ|⁻‖² + ½‖|zˡ|⁻‖²`
pub fn squared_violation(zl: &DVector<f64>, zu: &DVector<f64>) -> f64 {
    0.5 * zl.iter().chain(zu.iter()).map(|&t| t.min(0.0).powi(2)).sum::<f64>()
}

/// Iterates of the correction, kept for the unrolled backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Dc3Trace {
    /// `(y, zˡ)` before each step and after the last one.
    pub ys: Vec<DVector<f64>>,
    pub zls: Vec<DVector<f64>>,
    /// `zᵘ` matching each entry of `ys`.
    pub zus: Vec<DVector<f64>>,
    pub cfg: Dc3Config,
}

impl Dc3Trace {
    pub fn steps(&self) -> usize {
        self.ys.len() - 1
    }

    pub fn final_point(&self) -> DualPoint {
        DualPoint::new(
            self.ys.last().unwrap().clone(),
            self.zls.last().unwrap().clone(),
            self.zus.last().unwrap().clone(),
        )
    }

    pub fn violations(&self) -> Vec<f64> {
        self.zls.iter().zip(&self.zus).map(|(l, u)| squared_violation(l, u)).collect()
    }
}

/// Momentum gradient descent on [`squared_violation`] over `(y, zˡ)`, with
/// `zᵘ` re-derived by [`dc3_complete`] after every step.
pub fn dc3_correct(
    inst: &LpInstance,
    y: &DVector<f64>,
    zl: &DVector<f64>,
    cfg: &Dc3Config,
) -> Result<Dc3Trace> {
    let mut y = y.clone();
    let mut zl = zl.clone();
    let mut zu = dc3_complete(inst, &y, &zl)?;
    let mut vy = DVector::zeros(inst.m());
    let mut vz = DVector::zeros(inst.n());
    let mut trace = Dc3Trace {
        ys: vec![y.clone()],
        zls: vec![zl.clone()],
        zus: vec![zu.clone()],
        cfg: *cfg,
    };
    for _ in 0..cfg.steps {
        let r = zu.map(|t| t.min(0.0));
        let gy = inst.a() * &r;
        let gz = &r + zl.map(|t| t.min(0.0));
        vy = cfg.momentum * vy + gy;
        vz = cfg.momentum * vz + gz;
        y.axpy(-cfg.lr, &vy, 1.0);
        zl.axpy(-cfg.lr, &vz, 1.0);
        zu = dc3_complete(inst, &y, &zl)?;
        trace.ys.push(y.clone());
        trace.zls.push(zl.clone());
        trace.zus.push(zu.clone());
    }
    Ok(trace)
}

/// Pulls `(ȳ, z̄ˡ)` at the corrected point back to the initial `(y, zˡ)`.
pub fn dc3_backward(
    inst: &LpInstance,
    trace: &Dc3Trace,
    gy: DVector<f64>,
    gzl: DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let Dc3Config { lr, momentum, .. } = trace.cfg;
    let (mut py, mut pz) = (gy, gzl);
    let mut vy = DVector::zeros(inst.m());
    let mut vz = DVector::zeros(inst.n());
    for k in (0..trace.steps()).rev() {
        // p_{k+1} = p_k − lr·v_{k+1},  v_{k+1} = momentum·v_k + ∇V(p_k)
        vy.axpy(-lr, &py, 1.0);
        vz.axpy(-lr, &pz, 1.0);
        // Hessian of V at p_k applied to v̄_{k+1}.
        let du = trace.zus[k].map(|t| if t < 0.0 { 1.0 } else { 0.0 });
        let dl = trace.zls[k].map(|t| if t < 0.0 { 1.0 } else { 0.0 });
        let mut t = vz.clone();
        t.gemv_tr(1.0, inst.a(), &vy, 1.0);
        t.component_mul_assign(&du);
        py += inst.a() * &t;
        pz += t + dl.component_mul(&vz);
        vy *= momentum;
        vz *= momentum;
    }
    (py, pz)
}

/// Corrected-point loss `dual_obj − weight·V` with `V` the mean of the sign
/// violations, and its gradient with respect to the uncorrected `(y, zˡ)`.
pub fn dc3_loss_and_grad(
    inst: &LpInstance,
    y: &DVector<f64>,
    zl: &DVector<f64>,
    cfg: &Dc3Config,
    weight: f64,
) -> Result<(PenaltyLossValue, DVector<f64>, DVector<f64>, DualPoint)> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::Contract(format!("penalty weight must be >= 0, got {weight}")));
    }
    let trace = dc3_correct(inst, y, zl, cfg)?;
    let dp = trace.final_point();
    let n = inst.n() as f64;
    let violation =
        dp.zl.iter().chain(dp.zu.iter()).map(|&t| neg_part(t)).sum::<f64>() / n;
    let dual_obj = dual_objective(inst, &dp)?;
    // With zᵘ eliminated: ∂/∂y = b − A·u − w·A·∂V/∂zᵘ, ∂/∂zˡ = l − u − w·(∂V/∂zˡ + ∂V/∂zᵘ).
    let su = dp.zu.map(|t| if t < 0.0 { -1.0 / n } else { 0.0 });
    let sl = dp.zl.map(|t| if t < 0.0 { -1.0 / n } else { 0.0 });
    let gu = -inst.u() - weight * &su;
    let gy = inst.b() + inst.a() * &gu;
    let gz = inst.l() + &gu - weight * &sl;
    let (gy0, gz0) = dc3_backward(inst, &trace, gy, gz);
    let value = PenaltyLossValue {
        dual_obj,
        violation,
        total: dual_obj - weight * violation,
    };
    Ok((value, gy0, gz0, dp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn inst() -> LpInstance {
        LpInstance::new(
            dmatrix![1.0, -1.0, 0.5; 0.2, 1.0, 1.0],
            dvector![1.0, -0.5],
            dvector![2.0, -2.0, 0.5],
            dvector![0.0, -1.0, 0.0],
            dvector![1.0, 1.0, 3.0],
        )
        .unwrap()
    }

    #[test]
    fn completion_examples() {
        let inst = inst();
        let y = DVector::zeros(2);
        let zl = inst.c().map(|t| t.max(0.0));
        let zu = dc3_complete(&inst, &y, &zl).unwrap();
        assert_eq!(zu, inst.c().map(|t| (-t).max(0.0)));

        let one = LpInstance::new(
            dmatrix![1.0, 1.0],
            dvector![0.0],
            dvector![1.0, -1.0],
            dvector![0.0, 0.0],
            dvector![1.0, 1.0],
        )
        .unwrap();
        let zu = dc3_complete(&one, &dvector![0.0], &dvector![0.0, 0.0]).unwrap();
        assert_eq!(zu, dvector![-1.0, 1.0]);

        let y = dvector![0.3, -1.2];
        let zl = dvector![0.1, 0.0, 2.0];
        let zu = dc3_complete(&inst, &y, &zl).unwrap();
        let z = inst.c() - inst.a().transpose() * &y;
        assert!((&zl - &zu - z).amax() < 1e-12);
    }

    #[test]
    fn feasible_input_and_zero_steps_are_fixed_points() {
        let inst = inst();
        let y = dvector![0.3, -1.2];
        let z = inst.c() - inst.a().transpose() * &y;
        let zl = z.map(|t| t.max(0.0));
        let tr = dc3_correct(&inst, &y, &zl, &Dc3Config::default()).unwrap();
        assert_eq!(tr.final_point().y, y);
        assert_eq!(tr.final_point().zl, zl);

        let bad = dvector![0.0, 0.0, 0.0];
        let cfg = Dc3Config { steps: 0, ..Default::default() };
        let tr = dc3_correct(&inst, &y, &bad, &cfg).unwrap();
        assert_eq!(tr.final_point().zl, bad);
        assert_eq!(tr.final_point().y, y);
    }

    #[test]
    fn violation_decreases_monotonically() {
        let inst = LpInstance::new(dmatrix![1.0], dvector![0.0], dvector![1.0], dvector![0.0], dvector![1.0])
            .unwrap();
        let tr = dc3_correct(&inst, &dvector![0.0], &dvector![0.0], &Dc3Config::default()).unwrap();
        assert_eq!(tr.zus[0], dvector![-1.0]);
        let v = tr.violations();
        assert_eq!(v.len(), 11);
        for w in v.windows(2) {
            assert!(w[1] < w[0], "{v:?}");
        }
        // Equality completion is exact at every iterate.
        for ((y, zl), zu) in tr.ys.iter().zip(&tr.zls).zip(&tr.zus) {
            let r = zl - zu - (inst.c() - inst.a().transpose() * y);
            assert!(r.amax() <= 1e-10);
        }
    }

    #[test]
    fn unrolled_gradient_matches_finite_differences() {
        let inst = inst();
        let cfg = Dc3Config { steps: 5, lr: 0.1, momentum: 0.5 };
        let w = 2.0;
        let y = dvector![0.4, 1.1];
        let zl = dvector![0.5, 0.35, 0.2];
        let (_, gy, gz, _) = dc3_loss_and_grad(&inst, &y, &zl, &cfg, w).unwrap();
        let f = |y: &DVector<f64>, zl: &DVector<f64>| {
            dc3_loss_and_grad(&inst, y, zl, &cfg, w).unwrap().0.total
        };
        let h = 1e-7;
        for i in 0..2 {
            let mut p = y.clone();
            p[i] += h;
            let mut q = y.clone();
            q[i] -= h;
            let fd = (f(&p, &zl) - f(&q, &zl)) / (2.0 * h);
            assert!((fd - gy[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "y{i}: {fd} vs {}", gy[i]);
        }
        for j in 0..3 {
            let mut p = zl.clone();
            p[j] += h;
            let mut q = zl.clone();
            q[j] -= h;
            let fd = (f(&y, &p) - f(&y, &q)) / (2.0 * h);
            assert!((fd - gz[j]).abs() <= 1e-5 * (1.0 + fd.abs()), "zl{j}: {fd} vs {}", gz[j]);
        }
    }
}

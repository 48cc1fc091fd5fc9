//! Mehrotra predictor-corrector for `min cᵀx s.t. Ax = b, l ≤ x ≤ u`.
//!
//! The iterate keeps `l < x < u` strictly and the bound slacks are implicit
//! (`x − l`, `u − x`), so only `Ax = b` and dual stationarity carry
//! residuals. Each Newton system is reduced to the normal equations
//! `A·D·Aᵀ Δy = r` and solved by dense Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::lp::{norm_inf, LpInstance};

pub const MAX_ITER: usize = 200;
/// Relative stopping tolerance on primal/dual residuals and the duality gap.
pub const TOL: f64 = 1e-9;
const STEP_DAMPING: f64 = 0.995;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub zl: DVector<f64>,
    pub zu: DVector<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    /// Max of relative primal residual, relative dual residual and relative gap.
    pub kkt_residual: f64,
    pub iterations: usize,
}

struct Newton<'a> {
    a: &'a DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    d: DVector<f64>,
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dzl: DVector<f64>,
    dzu: DVector<f64>,
}

impl<'a> Newton<'a> {
    fn factor(a: &'a DMatrix<f64>, d: DVector<f64>) -> Option<Self> {
        let mut ad = a.clone();
        for (j, mut col) in ad.column_iter_mut().enumerate() {
            col *= d[j];
        }
        let mut normal = &ad * a.transpose();
        if let Some(chol) = Cholesky::new(normal.clone()) {
            return Some(Self { a, chol, d });
        }
        let ridge = 1e-12 * normal.diagonal().amax().max(1.0);
        for i in 0..normal.nrows() {
            normal[(i, i)] += ridge;
        }
        Cholesky::new(normal).map(|chol| Self { a, chol, d })
    }

    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        rp: &DVector<f64>,
        rd: &DVector<f64>,
        rl: &DVector<f64>,
        ru: &DVector<f64>,
        xl: &DVector<f64>,
        xu: &DVector<f64>,
        zl: &DVector<f64>,
        zu: &DVector<f64>,
    ) -> Direction {
        let n = xl.len();
        let rt = DVector::from_fn(n, |j, _| rd[j] - rl[j] / xl[j] + ru[j] / xu[j]);
        let drt = self.d.component_mul(&rt);
        let mut rhs = rp.clone();
        rhs.gemv(1.0, self.a, &drt, 1.0);
        let dy = self.chol.solve(&rhs);
        let mut aty = DVector::zeros(n);
        aty.gemv_tr(1.0, self.a, &dy, 0.0);
        let dx = DVector::from_fn(n, |j, _| self.d[j] * (aty[j] - rt[j]));
        let dzl = DVector::from_fn(n, |j, _| (rl[j] - zl[j] * dx[j]) / xl[j]);
        let dzu = DVector::from_fn(n, |j, _| (ru[j] + zu[j] * dx[j]) / xu[j]);
        Direction { dx, dy, dzl, dzu }
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

pub fn solve_lp(inst: &LpInstance) -> SolveResult {
    let (m, n) = (inst.m(), inst.n());
    let (a, b, c, l, u) = (inst.a(), inst.b(), inst.c(), inst.l(), inst.u());
    let b_scale = 1.0 + norm_inf(b);
    let c_scale = 1.0 + norm_inf(c);

    let mut x = DVector::from_fn(n, |j, _| 0.5 * (l[j] + u[j]));
    let mut y = DVector::<f64>::zeros(m);
    let shift = 0.1 * c_scale;
    let mut zl = c.map(|t| t.max(0.0) + shift);
    let mut zu = c.map(|t| (-t).max(0.0) + shift);

    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut kkt = f64::INFINITY;

    for it in 0..=MAX_ITER {
        iterations = it;
        let xl = &x - l;
        let xu = u - &x;
        let mut rp = b.clone();
        rp.gemv(-1.0, a, &x, 1.0);
        let mut rd = c - &zl + &zu;
        rd.gemv_tr(-1.0, a, &y, 1.0);
        let pobj = c.dot(&x);
        let dobj = b.dot(&y) + l.dot(&zl) - u.dot(&zu);
        let parts = [
            norm_inf(&rp) / b_scale,
            norm_inf(&rd) / c_scale,
            (pobj - dobj).abs() / (1.0 + pobj.abs()),
        ];
        // f64::max drops NaN, so check every part before combining.
        kkt = parts.iter().fold(0.0, |acc: f64, &p| if p.is_nan() { f64::NAN } else { acc.max(p) });
        if !kkt.is_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        if kkt <= TOL {
            status = SolveStatus::Optimal;
            break;
        }
        if it == MAX_ITER {
            break;
        }
        let mu = (xl.dot(&zl) + xu.dot(&zu)) / (2 * n) as f64;

        let d = DVector::from_fn(n, |j, _| 1.0 / (zl[j] / xl[j] + zu[j] / xu[j]));
        let Some(newton) = Newton::factor(a, d) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        // Predictor.
        let rl = -xl.component_mul(&zl);
        let ru = -xu.component_mul(&zu);
        let aff = newton.solve(&rp, &rd, &rl, &ru, &xl, &xu, &zl, &zu);
        let ap = 1f64
            .min(max_step(&xl, &aff.dx))
            .min(max_step(&xu, &(-&aff.dx)));
        let ad = 1f64
            .min(max_step(&zl, &aff.dzl))
            .min(max_step(&zu, &aff.dzu));
        let mu_aff = ((&xl + ap * &aff.dx).dot(&(&zl + ad * &aff.dzl))
            + (&xu - ap * &aff.dx).dot(&(&zu + ad * &aff.dzu)))
            / (2 * n) as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let rl = DVector::from_fn(n, |j, _| {
            sigma * mu - xl[j] * zl[j] - aff.dx[j] * aff.dzl[j]
        });
        let ru = DVector::from_fn(n, |j, _| {
            sigma * mu - xu[j] * zu[j] + aff.dx[j] * aff.dzu[j]
        });
        let dir = newton.solve(&rp, &rd, &rl, &ru, &xl, &xu, &zl, &zu);
        let ap = 1f64.min(
            STEP_DAMPING
                * max_step(&xl, &dir.dx).min(max_step(&xu, &(-&dir.dx))),
        );
        let ad = 1f64.min(
            STEP_DAMPING * max_step(&zl, &dir.dzl).min(max_step(&zu, &dir.dzu)),
        );
        x.axpy(ap, &dir.dx, 1.0);
        y.axpy(ad, &dir.dy, 1.0);
        zl.axpy(ad, &dir.dzl, 1.0);
        zu.axpy(ad, &dir.dzu, 1.0);
        if !(ap > 0.0 || ad > 0.0) {
            status = SolveStatus::NumericalFailure;
            break;
        }
    }

    let primal_obj = c.dot(&x);
    let dual_obj = b.dot(&y) + l.dot(&zl) - u.dot(&zu);
    SolveResult {
        status,
        x,
        y,
        zl,
        zu,
        primal_obj,
        dual_obj,
        kkt_residual: kkt,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn pinned_single_variable() {
        let inst = LpInstance::new(
            dmatrix![1.0],
            dvector![0.5],
            dvector![1.0],
            dvector![0.0],
            dvector![1.0],
        )
        .unwrap();
        let res = solve_lp(&inst);
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.x[0] - 0.5).abs() < 1e-8);
        assert!((res.primal_obj - 0.5).abs() < 1e-8);
        assert!((res.y[0] - 1.0).abs() < 1e-6);
        assert!(res.zl[0].abs() < 1e-6 && res.zu[0].abs() < 1e-6);
    }

    #[test]
    fn negative_cost_single_variable() {
        let inst = LpInstance::new(
            dmatrix![1.0],
            dvector![0.3],
            dvector![-1.0],
            dvector![0.0],
            dvector![1.0],
        )
        .unwrap();
        let res = solve_lp(&inst);
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.x[0] - 0.3).abs() < 1e-8);
        assert!((res.primal_obj + 0.3).abs() < 1e-8);
    }

    #[test]
    fn infeasible_problem_is_not_optimal() {
        // x₁ + x₂ = 5 cannot hold inside the unit box.
        let inst = LpInstance::new(
            dmatrix![1.0, 1.0],
            dvector![5.0],
            dvector![1.0, 1.0],
            dvector![0.0, 0.0],
            dvector![1.0, 1.0],
        )
        .unwrap();
        assert_ne!(solve_lp(&inst).status, SolveStatus::Optimal);
    }

    #[test]
    fn box_binding_solution() {
        // min −x₁ − 2x₂  s.t. x₁ + x₂ = 1.5, 0 ≤ x ≤ 1  →  x = (0.5, 1), obj = −2.5
        let inst = LpInstance::new(
            dmatrix![1.0, 1.0],
            dvector![1.5],
            dvector![-1.0, -2.0],
            dvector![0.0, 0.0],
            dvector![1.0, 1.0],
        )
        .unwrap();
        let res = solve_lp(&inst);
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.primal_obj + 2.5).abs() < 1e-8);
        assert!((res.primal_obj - res.dual_obj).abs() <= 1e-8 * (1.0 + res.primal_obj.abs()));
    }
}

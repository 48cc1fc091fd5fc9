//! Evaluation metrics: dual violation `V`, objective gap `ΔG`, and the gap
//! `G★` of the valid bound obtained by re-completing the predicted `y`.
//!
//! All gaps are percentages relative to `|L★|`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::complete_batch;
use crate::completion::Regularizer;
use crate::error::{Error, Result};
use crate::lp::{dual_objective, dual_residuals, DualPoint, LpInstance};
use crate::mlp::{GapSummary, Proxy};

/// Below `GAP_ZERO_TOL·(1 + ‖c‖∞)` an optimal value counts as zero and gaps
/// relative to it are undefined.
pub const GAP_ZERO_TOL: f64 = 1e-9;

/// Mean, sum and max over coordinates of `|zˡ|⁻ + |zᵘ|⁻ + |Aᵀy + zˡ − zᵘ − c|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub mean: f64,
    pub sum: f64,
    pub linf: f64,
}

pub fn violation(inst: &LpInstance, dp: &DualPoint) -> Result<Violation> {
    let rep = dual_residuals(inst, dp)?;
    let per: Vec<f64> = (0..inst.n())
        .map(|j| rep.zl_neg[j] + rep.zu_neg[j] + rep.eq_residual[j].abs())
        .collect();
    let sum: f64 = per.iter().sum();
    Ok(Violation {
        mean: sum / inst.n() as f64,
        sum,
        linf: per.iter().fold(0.0, |a: f64, &b| nan_max(a, b)),
    })
}

pub fn violation_metric(inst: &LpInstance, dp: &DualPoint) -> Result<f64> {
    Ok(violation(inst, dp)?.mean)
}

fn gap(inst: &LpInstance, value: f64, lstar: f64) -> Option<f64> {
    if lstar.abs() < GAP_ZERO_TOL * inst.cost_scale() {
        None
    } else {
        Some(100.0 * (lstar - value).abs() / lstar.abs())
    }
}

/// `ΔG`, or `None` when `L★` is numerically zero.
pub fn objective_gap(inst: &LpInstance, dp: &DualPoint, lstar: f64) -> Result<Option<f64>> {
    Ok(gap(inst, dual_objective(inst, dp)?, lstar))
}

/// `bᵀy + Ξ₀(y)`: a valid lower bound on the optimal value for any `y`.
pub fn dual_bound(inst: &LpInstance, y: &nalgebra::DVector<f64>) -> Result<f64> {
    let out = crate::completion::complete_unregularized(inst, y)?;
    Ok(inst.b().dot(y) + out.xi)
}

/// `G★`, or `None` when `L★` is numerically zero.
pub fn dual_gap_star(inst: &LpInstance, y: &nalgebra::DVector<f64>, lstar: f64) -> Result<Option<f64>> {
    Ok(gap(inst, dual_bound(inst, y)?, lstar))
}

/// Mean and max of defined gaps, plus how many were undefined.
/// Maximum that keeps NaN instead of skipping it like `f64::max`.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn summarize(gaps: &[Option<f64>]) -> (f64, f64, usize) {
    let defined: Vec<f64> = gaps.iter().flatten().copied().collect();
    let excluded = gaps.len() - defined.len();
    if defined.is_empty() {
        return (f64::NAN, f64::NAN, excluded);
    }
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    let max = defined.iter().fold(f64::NEG_INFINITY, |a, &b| nan_max(a, b));
    (mean, max, excluded)
}

/// Samples to evaluate: a family sharing `template`'s matrix, costs and
/// bounds, one row per sample.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub template: LpInstance,
    pub ids: Vec<u64>,
    pub features: DMatrix<f64>,
    pub rhs: DMatrix<f64>,
    pub lstar: Vec<Option<f64>>,
}

impl EvalSet {
    fn check(&self) -> Result<Vec<f64>> {
        let k = self.features.nrows();
        if self.rhs.nrows() != k || self.ids.len() != k || self.lstar.len() != k {
            return Err(Error::dims("evaluation rows", k, self.rhs.nrows()));
        }
        self.lstar
            .iter()
            .zip(&self.ids)
            .map(|(l, id)| {
                l.ok_or_else(|| Error::Contract(format!("sample {id} has no optimal value")))
            })
            .collect()
    }

    pub fn instance(&self, i: usize) -> Result<LpInstance> {
        self.template.with_rhs(self.rhs.row(i).transpose())
    }
}

/// `G★` statistics of raw `y` predictions (one row per sample).
pub fn gstar_summary(set: &EvalSet, ys: &DMatrix<f64>) -> Result<GapSummary> {
    let lstar = set.check()?;
    let comps = complete_batch(&set.template, ys, Regularizer::None)?;
    let gaps: Vec<Option<f64>> = comps
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let by: f64 = set.rhs.row(i).iter().zip(ys.row(i).iter()).map(|(b, y)| b * y).sum();
            gap(&set.template, by + c.xi, lstar[i])
        })
        .collect();
    let (mean, max, _) = summarize(&gaps);
    Ok(GapSummary { mean, max })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: u64,
    pub lstar: f64,
    /// `bᵀy + Ξ₀(y)`
    pub bound: f64,
    /// Dual objective of the prediction as returned by the proxy.
    pub dual_obj: f64,
    pub v: f64,
    pub v_sum: f64,
    pub v_linf: f64,
    pub dgap: Option<f64>,
    pub gstar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub v_mean: f64,
    pub dgap_mean: f64,
    pub gstar_mean: f64,
    pub gstar_max: f64,
    /// Samples whose optimal value is numerically zero.
    pub excluded: usize,
    pub per_sample: Vec<SampleMetrics>,
}

/// Anything that maps features to dual points.
pub trait DualPredictor {
    fn predict_dual(&self, template: &LpInstance, features: &DMatrix<f64>) -> Result<Vec<DualPoint>>;
}

impl DualPredictor for Proxy {
    fn predict_dual(&self, template: &LpInstance, features: &DMatrix<f64>) -> Result<Vec<DualPoint>> {
        self.predict(template, features)
    }
}

pub fn evaluate_model<P: DualPredictor + ?Sized>(model: &P, set: &EvalSet) -> Result<MetricsRecord> {
    let lstar = set.check()?;
    let points = model.predict_dual(&set.template, &set.features)?;
    if points.len() != lstar.len() {
        return Err(Error::dims("predictions", lstar.len(), points.len()));
    }
    let per_sample: Vec<SampleMetrics> = points
        .par_iter()
        .enumerate()
        .map(|(i, dp)| {
            let inst = set.instance(i)?;
            let v = violation(&inst, dp)?;
            let dual_obj = dual_objective(&inst, dp)?;
            let bound = dual_bound(&inst, &dp.y)?;
            Ok(SampleMetrics {
                id: set.ids[i],
                lstar: lstar[i],
                bound,
                dual_obj,
                v: v.mean,
                v_sum: v.sum,
                v_linf: v.linf,
                dgap: gap(&inst, dual_obj, lstar[i]),
                gstar: gap(&inst, bound, lstar[i]),
            })
        })
        .collect::<Result<_>>()?;
    let v_mean = per_sample.iter().map(|s| s.v).sum::<f64>() / per_sample.len().max(1) as f64;
    let dg: Vec<_> = per_sample.iter().map(|s| s.dgap).collect();
    let gs: Vec<_> = per_sample.iter().map(|s| s.gstar).collect();
    let (dgap_mean, _, _) = summarize(&dg);
    let (gstar_mean, gstar_max, excluded) = summarize(&gs);
    Ok(MetricsRecord {
        v_mean,
        dgap_mean,
        gstar_mean,
        gstar_max,
        excluded,
        per_sample,
    })
}

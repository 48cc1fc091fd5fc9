//! Dual completion: given `y`, recover `(zˡ, zᵘ)` maximizing
//! `lᵀzˡ − uᵀzᵘ + μ·Σ(ln zˡⱼ + ln zᵘⱼ)` subject to `zˡ − zᵘ = c − Aᵀy`.
//!
//! Both supported regularizers admit elementwise closed forms, along with
//! the multiplier `x_μ(y)` of the equality constraint, which doubles as the
//! recovered primal and drives the loss gradient `b − A·x_μ(y)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::{neg_part, pos_part, reduced_costs, DualPoint, LpInstance};

/// Relative threshold below which a reduced cost counts as zero for the
/// unregularized tie-break.
pub const TIE_REL_TOL: f64 = 1e-12;

/// Concave regularizer applied to `(zˡ, zᵘ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    LogBarrier { mu: f64 },
}

impl Regularizer {
    /// `mu = 0` selects [`Regularizer::None`], `mu > 0` the log barrier.
    pub fn from_mu(mu: f64) -> Result<Self> {
        if mu == 0.0 {
            Ok(Regularizer::None)
        } else if mu > 0.0 && mu.is_finite() {
            Ok(Regularizer::LogBarrier { mu })
        } else {
            Err(Error::Contract(format!("mu must be finite and >= 0, got {mu}")))
        }
    }

    pub fn mu(&self) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::LogBarrier { mu } => mu,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionOutput {
    pub zl: DVector<f64>,
    pub zu: DVector<f64>,
    /// Multiplier of the equality constraint, `x_μ(y)`.
    pub x: DVector<f64>,
    /// Inner value `Ξ_μ(y)`.
    pub xi: f64,
}

impl CompletionOutput {
    pub fn into_dual_point(self, y: DVector<f64>) -> DualPoint {
        DualPoint::new(y, self.zl, self.zu)
    }
}

/// One coordinate of the unregularized completion: `(zˡ, zᵘ, x)`.
#[inline]
pub fn unregularized_coord(l: f64, u: f64, z: f64, tie_tol: f64) -> (f64, f64, f64) {
    let x = if z > tie_tol {
        l
    } else if z < -tie_tol {
        u
    } else {
        0.5 * (l + u)
    };
    (pos_part(z), neg_part(z), x)
}

/// One coordinate of the log-barrier completion: `(zˡ, zᵘ, x)`.
///
/// `zˡ` and `zᵘ` use cancellation-free rearrangements of the closed forms.
/// The multiplier is recovered from the complementarity identities,
/// `x = l + μ/zˡ` when `z ≥ 0` and `x = u − μ/zᵘ` otherwise, which equals the
/// direct formula in exact arithmetic, stays strictly inside `(l, u)` and
/// needs no special case at `z = 0`.
#[inline]
pub fn log_barrier_coord(l: f64, u: f64, mu: f64, z: f64) -> (f64, f64, f64) {
    let v = mu / (u - l);
    let w = 0.5 * z;
    // Plain sqrt is much cheaper than hypot and exact enough while the
    // squares neither overflow nor underflow.
    let big = v.abs().max(w.abs());
    let h = if big > 1e-150 && big < 1e150 {
        (v * v + w * w).sqrt()
    } else {
        v.hypot(w)
    };
    let zl = if w >= 0.0 { v + w + h } else { v + v * v / (h - w) };
    let zu = if w <= 0.0 { v - w + h } else { v + v * v / (h + w) };
    let x = if z >= 0.0 { l + mu / zl } else { u - mu / zu };
    (zl, zu, x)
}

fn complete_from_z(inst: &LpInstance, z: &DVector<f64>, reg: Regularizer) -> CompletionOutput {
    let n = inst.n();
    let (l, u) = (inst.l().as_slice(), inst.u().as_slice());
    let mut zl = DVector::zeros(n);
    let mut zu = DVector::zeros(n);
    let mut x = DVector::zeros(n);
    let mut xi = 0.0;
    let outs = zl
        .as_mut_slice()
        .iter_mut()
        .zip(zu.as_mut_slice().iter_mut())
        .zip(x.as_mut_slice().iter_mut());
    let coords = l.iter().zip(u).zip(z.as_slice());
    match reg {
        Regularizer::None => {
            let tol = TIE_REL_TOL * inst.cost_scale();
            for (((zl, zu), x), ((&l, &u), &z)) in outs.zip(coords) {
                let (a, b, xj) = unregularized_coord(l, u, z, tol);
                (*zl, *zu, *x) = (a, b, xj);
                xi += l * a - u * b;
            }
        }
        Regularizer::LogBarrier { mu } => {
            let mut barrier = 0.0;
            for (((zl, zu), x), ((&l, &u), &z)) in outs.zip(coords) {
                let (a, b, xj) = log_barrier_coord(l, u, mu, z);
                (*zl, *zu, *x) = (a, b, xj);
                xi += l * a - u * b;
                let p = a * b;
                barrier += if p.is_normal() { p.ln() } else { a.ln() + b.ln() };
            }
            xi += mu * barrier;
        }
    }
    CompletionOutput { zl, zu, x, xi }
}

pub fn complete_unregularized(inst: &LpInstance, y: &DVector<f64>) -> Result<CompletionOutput> {
    let z = reduced_costs(inst, y)?;
    Ok(complete_from_z(inst, &z, Regularizer::None))
}

pub fn complete_log_barrier(
    inst: &LpInstance,
    y: &DVector<f64>,
    mu: f64,
) -> Result<CompletionOutput> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Contract(format!(
            "log-barrier completion requires mu > 0, got {mu}"
        )));
    }
    let z = reduced_costs(inst, y)?;
    Ok(complete_from_z(inst, &z, Regularizer::LogBarrier { mu }))
}

pub fn complete(inst: &LpInstance, y: &DVector<f64>, reg: Regularizer) -> Result<CompletionOutput> {
    match reg {
        Regularizer::None => complete_unregularized(inst, y),
        Regularizer::LogBarrier { mu } => complete_log_barrier(inst, y, mu),
    }
}

/// `Ξ_μ(y)`.
pub fn inner_value(inst: &LpInstance, y: &DVector<f64>, reg: Regularizer) -> Result<f64> {
    Ok(complete(inst, y, reg)?.xi)
}

/// `Z = 1·cᵀ − Y·A`: reduced costs of every row of `ys` (batch × m).
pub fn reduced_costs_batch(inst: &LpInstance, ys: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if ys.ncols() != inst.m() {
        return Err(Error::dims("y batch columns", inst.m(), ys.ncols()));
    }
    let mut zs = DMatrix::from_fn(ys.nrows(), inst.n(), |_, j| inst.c()[j]);
    zs.gemm(-1.0, ys, inst.a(), 1.0);
    Ok(zs)
}

/// Completes every row of a reduced-cost matrix.
pub fn complete_rows(
    inst: &LpInstance,
    zs: &DMatrix<f64>,
    reg: Regularizer,
) -> Result<Vec<CompletionOutput>> {
    if zs.ncols() != inst.n() {
        return Err(Error::dims("z batch columns", inst.n(), zs.ncols()));
    }
    Regularizer::from_mu(reg.mu())?;
    Ok((0..zs.nrows())
        .into_par_iter()
        .map(|i| complete_from_z(inst, &zs.row(i).transpose(), reg))
        .collect())
}

/// Completes every row of `ys` (batch × m) against the shared `(A, c, l, u)`
/// of `inst`. Rows are independent, so the result does not depend on how the
/// work is split across threads.
pub fn complete_batch(
    inst: &LpInstance,
    ys: &DMatrix<f64>,
    reg: Regularizer,
) -> Result<Vec<CompletionOutput>> {
    complete_rows(inst, &reduced_costs_batch(inst, ys)?, reg)
}

/// Result of [`limit_consistency_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct LimitReport {
    pub mus: Vec<f64>,
    /// Per μ: max of `|zˡ_μ − zˡ_0|∞`, `|zᵘ_μ − zᵘ_0|∞` and `|Ξ_μ − μΦ − Ξ_0|`.
    pub deviations: Vec<f64>,
    /// Deviations never grew by more than 10% from one μ to the next.
    pub monotone: bool,
    /// `1 + ‖z‖∞`
    pub z_scale: f64,
}

impl LimitReport {
    pub fn final_deviation(&self) -> f64 {
        *self.deviations.last().unwrap_or(&0.0)
    }
}

/// Measures how the log-barrier completion approaches the unregularized one
/// along a decreasing sequence of μ.
pub fn limit_consistency_check(
    inst: &LpInstance,
    y: &DVector<f64>,
    mu_sequence: &[f64],
) -> Result<LimitReport> {
    if mu_sequence.is_empty() || mu_sequence.iter().any(|&mu| !(mu > 0.0)) {
        return Err(Error::Contract("mu sequence must be non-empty and positive".into()));
    }
    if mu_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Contract("mu sequence must be strictly decreasing".into()));
    }
    if *mu_sequence.last().unwrap() > 1e-8 {
        return Err(Error::Contract("mu sequence must end at or below 1e-8".into()));
    }
    let z = reduced_costs(inst, y)?;
    let base = complete_from_z(inst, &z, Regularizer::None);
    let mut deviations = Vec::with_capacity(mu_sequence.len());
    for &mu in mu_sequence {
        let out = complete_from_z(inst, &z, Regularizer::LogBarrier { mu });
        let dz = (&out.zl - &base.zl)
            .amax()
            .max((&out.zu - &base.zu).amax());
        let linear = inst.l().dot(&out.zl) - inst.u().dot(&out.zu);
        deviations.push(dz.max((linear - base.xi).abs()));
    }
    let monotone = deviations.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    Ok(LimitReport {
        mus: mu_sequence.to_vec(),
        deviations,
        monotone,
        z_scale: 1.0 + z.amax(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn single(l: f64, u: f64, c: f64) -> LpInstance {
        LpInstance::new(dmatrix![1.0], dvector![0.0], dvector![c], dvector![l], dvector![u])
            .unwrap()
    }

    #[test]
    fn unregularized_hand_example() {
        let inst = LpInstance::new(
            DMatrix::identity(1, 3),
            dvector![0.0],
            dvector![1.5, -2.0, 0.0],
            DVector::zeros(3),
            DVector::from_element(3, 1.0),
        )
        .unwrap();
        let out = complete_unregularized(&inst, &dvector![0.0]).unwrap();
        assert_eq!(out.zl, dvector![1.5, 0.0, 0.0]);
        assert_eq!(out.zu, dvector![0.0, 2.0, 0.0]);
        assert_eq!(out.x, dvector![0.0, 1.0, 0.5]);
        assert_eq!(out.xi, -2.0);
    }

    #[test]
    fn unregularized_zero_dual_nonnegative_costs() {
        let inst = LpInstance::new(
            dmatrix![1.0, 1.0],
            dvector![1.0],
            dvector![2.0, 0.5],
            dvector![-1.0, 0.0],
            dvector![1.0, 3.0],
        )
        .unwrap();
        let out = complete_unregularized(&inst, &dvector![0.0]).unwrap();
        assert_eq!(out.zl, *inst.c());
        assert_eq!(out.zu, DVector::zeros(2));
        assert_eq!(out.x, *inst.l());
    }

    #[test]
    fn log_barrier_symmetric_case() {
        let inst = single(0.0, 2.0, 0.0);
        let out = complete_log_barrier(&inst, &dvector![0.0], 1.0).unwrap();
        assert_eq!(out.zl[0], 1.0);
        assert_eq!(out.zu[0], 1.0);
        assert_eq!(out.x[0], 1.0);
        assert_eq!((out.x[0] - 0.0) * out.zl[0], 1.0);
    }

    #[test]
    fn log_barrier_positive_and_negative_z() {
        let s2 = 2f64.sqrt();
        // z = c − y = 2
        let out = complete_log_barrier(&single(0.0, 1.0, 2.0), &dvector![0.0], 1.0).unwrap();
        assert!((out.zl[0] - (2.0 + s2)).abs() < 1e-12);
        assert!((out.zu[0] - s2).abs() < 1e-12);
        assert!((out.x[0] - (1.0 - s2 / 2.0)).abs() < 1e-12);
        assert!((out.x[0] * out.zl[0] - 1.0).abs() < 1e-9);
        assert!(((1.0 - out.x[0]) * out.zu[0] - 1.0).abs() < 1e-9);

        let out = complete_log_barrier(&single(0.0, 1.0, -2.0), &dvector![0.0], 1.0).unwrap();
        assert!((out.zl[0] - s2).abs() < 1e-12);
        assert!((out.zu[0] - (2.0 + s2)).abs() < 1e-12);
        assert!((out.x[0] - s2 / 2.0).abs() < 1e-12);
        assert!((out.zl[0] - out.zu[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_barrier_rejects_nonpositive_mu() {
        let inst = single(0.0, 1.0, 0.0);
        assert!(complete_log_barrier(&inst, &dvector![0.0], 0.0).is_err());
        assert!(complete_log_barrier(&inst, &dvector![0.0], -1.0).is_err());
        assert!(Regularizer::from_mu(-1e-3).is_err());
        assert_eq!(Regularizer::from_mu(0.0).unwrap(), Regularizer::None);
    }

    #[test]
    fn stable_forms_stay_positive_for_large_z() {
        for z in [1e8, -1e8, 1e12, -1e12, 1e200] {
            let (zl, zu, x) = log_barrier_coord(0.0, 1.0, 1e-6, z);
            assert!(zl > 0.0 && zu > 0.0);
            assert!((zl - zu - z).abs() <= 1e-15 * z.abs());
            // Strictly interior as long as μ/|z| is resolvable next to the bound.
            if z.abs() <= 1e8 {
                assert!(x > 0.0 && x < 1.0);
            }
        }
    }

    #[test]
    fn inner_value_unregularized_nonnegative_z() {
        let inst = LpInstance::new(
            dmatrix![1.0, 2.0],
            dvector![0.0],
            dvector![3.0, 5.0],
            dvector![-1.0, 0.5],
            dvector![1.0, 2.0],
        )
        .unwrap();
        let y = dvector![1.0];
        let z = reduced_costs(&inst, &y).unwrap();
        assert!(z.iter().all(|&t| t >= 0.0));
        let xi = inner_value(&inst, &y, Regularizer::None).unwrap();
        assert_eq!(xi, inst.l().dot(&z));
    }

    #[test]
    fn batch_matches_single() {
        let inst = LpInstance::new(
            dmatrix![1.0, -2.0, 0.5; 0.0, 1.0, 1.0],
            dvector![0.0, 0.0],
            dvector![1.0, 0.0, -1.0],
            dvector![0.0, -1.0, 0.0],
            dvector![2.0, 1.0, 4.0],
        )
        .unwrap();
        let ys = dmatrix![0.3, -1.0; 2.0, 0.5; 0.0, 0.0];
        for reg in [Regularizer::None, Regularizer::LogBarrier { mu: 0.1 }] {
            let batch = complete_batch(&inst, &ys, reg).unwrap();
            for (i, out) in batch.iter().enumerate() {
                let single = complete(&inst, &ys.row(i).transpose(), reg).unwrap();
                assert!((&out.zl - &single.zl).amax() < 1e-14);
                assert!((&out.x - &single.x).amax() < 1e-14);
                assert!((out.xi - single.xi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn limit_check_single_coordinate() {
        let inst = single(0.0, 1.0, 2.0);
        let mus = [1.0, 0.1, 0.01, 1e-4, 1e-8];
        let rep = limit_consistency_check(&inst, &dvector![0.0], &mus).unwrap();
        assert!(rep.monotone);
        assert!(rep.final_deviation() <= 1e-6 * rep.z_scale);
        // zᵘ_μ = v − w + √(v² + w²) with v = μ, w = 1 decreases towards 0.
        for w in rep.deviations.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(limit_consistency_check(&inst, &dvector![0.0], &[1.0, 2.0, 1e-9]).is_err());
        assert!(limit_consistency_check(&inst, &dvector![0.0], &[1.0, 1e-3]).is_err());
    }
}

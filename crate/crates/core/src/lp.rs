//! Bounded linear programs in standard form and their dual evaluations.
//!
//! The primal is `min cᵀx  s.t. Ax = b, l ≤ x ≤ u` and the dual is
//! `max bᵀy + lᵀzˡ − uᵀzᵘ  s.t. Aᵀy + zˡ − zᵘ = c, zˡ, zᵘ ≥ 0`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Positive part `max(0, t)`.
#[inline]
pub fn pos_part(t: f64) -> f64 {
    t.max(0.0)
}

/// Negative part `max(0, −t)`.
#[inline]
pub fn neg_part(t: f64) -> f64 {
    (-t).max(0.0)
}

pub(crate) fn norm_inf(v: &DVector<f64>) -> f64 {
    // NaN must survive: f64::max would silently drop it.
    v.iter().fold(0.0_f64, |acc, x| if x.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(x.abs()) })
}

/// A bounded LP `(A, b, c, l, u)`.
///
/// The constraint matrix is reference counted so that parametric families
/// which only vary `b` (as in DCOPF) share a single copy.
#[derive(Debug, Clone, PartialEq)]
pub struct LpInstance {
    a: Arc<DMatrix<f64>>,
    b: DVector<f64>,
    c: DVector<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
}

impl LpInstance {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        l: DVector<f64>,
        u: DVector<f64>,
    ) -> Result<Self> {
        Self::with_shared_matrix(Arc::new(a), b, c, l, u)
    }

    pub fn with_shared_matrix(
        a: Arc<DMatrix<f64>>,
        b: DVector<f64>,
        c: DVector<f64>,
        l: DVector<f64>,
        u: DVector<f64>,
    ) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(Error::InvalidInstance(format!(
                "constraint matrix must be non-empty, got {m}x{n}"
            )));
        }
        if b.len() != m {
            return Err(Error::dims("b", m, b.len()));
        }
        for (name, v) in [("c", &c), ("l", &l), ("u", &u)] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    what: name,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        let all_finite = a.iter().chain(b.iter()).chain(c.iter()).all(|x| x.is_finite())
            && l.iter().chain(u.iter()).all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::InvalidInstance("all data must be finite".into()));
        }
        if let Some(j) = (0..n).find(|&j| l[j] >= u[j]) {
            return Err(Error::InvalidInstance(format!(
                "bounds must satisfy l < u, violated at column {j} ({} >= {})",
                l[j], u[j]
            )));
        }
        if let Some(i) = (0..m).find(|&i| a.row(i).iter().all(|&x| x == 0.0)) {
            return Err(Error::InvalidInstance(format!("row {i} of A is all zero")));
        }
        Ok(Self { a, b, c, l, u })
    }

    /// Same matrix, costs and bounds with a different right-hand side.
    pub fn with_rhs(&self, b: DVector<f64>) -> Result<Self> {
        if b.len() != self.m() {
            return Err(Error::dims("b", self.m(), b.len()));
        }
        if !b.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInstance("all data must be finite".into()));
        }
        Ok(Self {
            a: Arc::clone(&self.a),
            b,
            c: self.c.clone(),
            l: self.l.clone(),
            u: self.u.clone(),
        })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn shared_a(&self) -> &Arc<DMatrix<f64>> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn l(&self) -> &DVector<f64> {
        &self.l
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    /// `1 + ‖c‖∞`, the scale used for reduced-cost tolerances.
    pub fn cost_scale(&self) -> f64 {
        1.0 + norm_inf(&self.c)
    }

    pub(crate) fn check_m(&self, what: &'static str, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.m() {
            return Err(Error::dims(what, self.m(), v.len()));
        }
        Ok(())
    }

    pub(crate) fn check_n(&self, what: &'static str, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::dims(what, self.n(), v.len()));
        }
        Ok(())
    }
}

/// A candidate dual solution `(y, zˡ, zᵘ)`. Need not be feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub y: DVector<f64>,
    pub zl: DVector<f64>,
    pub zu: DVector<f64>,
}

impl DualPoint {
    pub fn new(y: DVector<f64>, zl: DVector<f64>, zu: DVector<f64>) -> Self {
        Self { y, zl, zu }
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            y: DVector::zeros(m),
            zl: DVector::zeros(n),
            zu: DVector::zeros(n),
        }
    }

    fn check(&self, inst: &LpInstance) -> Result<()> {
        inst.check_m("y", &self.y)?;
        inst.check_n("zl", &self.zl)?;
        inst.check_n("zu", &self.zu)
    }
}

/// Violations of the dual constraints at a [`DualPoint`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `Aᵀy + zˡ − zᵘ − c`
    pub eq_residual: DVector<f64>,
    /// `|zˡ|⁻`
    pub zl_neg: DVector<f64>,
    /// `|zᵘ|⁻`
    pub zu_neg: DVector<f64>,
    pub linf: f64,
}

/// `z = c − Aᵀy`.
pub fn reduced_costs(inst: &LpInstance, y: &DVector<f64>) -> Result<DVector<f64>> {
    inst.check_m("y", y)?;
    let mut z = inst.c.clone();
    z.gemv_tr(-1.0, &inst.a, y, 1.0);
    Ok(z)
}

pub fn dual_objective(inst: &LpInstance, dp: &DualPoint) -> Result<f64> {
    dp.check(inst)?;
    Ok(inst.b.dot(&dp.y) + inst.l.dot(&dp.zl) - inst.u.dot(&dp.zu))
}

pub fn primal_objective(inst: &LpInstance, x: &DVector<f64>) -> Result<f64> {
    inst.check_n("x", x)?;
    Ok(inst.c.dot(x))
}

pub fn dual_residuals(inst: &LpInstance, dp: &DualPoint) -> Result<ResidualReport> {
    dp.check(inst)?;
    let mut eq = &dp.zl - &dp.zu - &inst.c;
    eq.gemv_tr(1.0, &inst.a, &dp.y, 1.0);
    let zl_neg = dp.zl.map(neg_part);
    let zu_neg = dp.zu.map(neg_part);
    let linf = norm_inf(&eq).max(norm_inf(&zl_neg)).max(norm_inf(&zu_neg));
    Ok(ResidualReport {
        eq_residual: eq,
        zl_neg,
        zu_neg,
        linf,
    })
}

/// Membership in the dual feasible set, up to an absolute tolerance on the
/// residual report's ∞-norm.
pub fn is_dual_feasible(inst: &LpInstance, dp: &DualPoint, tol: f64) -> Result<bool> {
    if !(tol >= 0.0) {
        return Err(Error::Contract(format!("tolerance must be >= 0, got {tol}")));
    }
    Ok(dual_residuals(inst, dp)?.linf <= tol)
}

//! Numerical solution of the completion subproblem, coordinate by
//! coordinate, without using the closed forms.

use nalgebra::DVector;

use crate::completion::Regularizer;
use crate::error::Result;
use crate::lp::{reduced_costs, LpInstance};

const MAX_BISECTIONS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub zl: DVector<f64>,
    pub zu: DVector<f64>,
    pub xi: f64,
}

/// Maximizes `l·t − u·(t − z) + μ(ln t + ln(t − z))` over `t > max(0, z)`.
/// Returns `(zˡ, zᵘ) = (t, t − z)`.
///
/// The stationarity residual `μ/zˡ + μ/zᵘ − (u − l)` is monotone in the
/// smaller of the two multipliers, which is bracketed by `(0, 2μ/(u − l)]`
/// and bisected until the bracket stops shrinking in floating point.
pub fn solve_inner_1d(l: f64, u: f64, mu: f64, z: f64) -> (f64, f64) {
    debug_assert!(l < u && mu > 0.0);
    let width = u - l;
    let gap = z.abs();
    let residual = |s: f64| mu / s + mu / (s + gap) - width;
    let mut lo = 0.0_f64;
    let mut hi = 2.0 * mu / width;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick the endpoint with the smaller residual.
    let s = if residual(lo).abs() <= residual(hi).abs() && lo > 0.0 {
        lo
    } else {
        hi
    };
    if z >= 0.0 {
        (s + gap, s)
    } else {
        (s, s + gap)
    }
}

/// Best of the two vertices `(zˡ, zᵘ) ∈ {(z, 0), (0, −z)}` of the
/// unregularized subproblem that are feasible.
fn vertex_1d(l: f64, u: f64, z: f64) -> (f64, f64) {
    let candidates = [(z, 0.0), (0.0, -z)];
    candidates
        .into_iter()
        .filter(|&(t, s)| t >= 0.0 && s >= 0.0)
        .max_by(|a, b| {
            let fa = l * a.0 - u * a.1;
            let fb = l * b.0 - u * b.1;
            fa.total_cmp(&fb)
        })
        .expect("one vertex is always feasible")
}

/// Sum with terms ordered by increasing magnitude.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    terms.into_iter().sum()
}

pub fn solve_inner(inst: &LpInstance, y: &DVector<f64>, reg: Regularizer) -> Result<InnerSolution> {
    let z = reduced_costs(inst, y)?;
    let n = inst.n();
    let (l, u) = (inst.l(), inst.u());
    let mut zl = DVector::zeros(n);
    let mut zu = DVector::zeros(n);
    let mut terms = Vec::with_capacity(3 * n);
    for j in 0..n {
        let (a, b) = match reg {
            Regularizer::None => vertex_1d(l[j], u[j], z[j]),
            Regularizer::LogBarrier { mu } => solve_inner_1d(l[j], u[j], mu, z[j]),
        };
        zl[j] = a;
        zu[j] = b;
        terms.push(l[j] * a);
        terms.push(-u[j] * b);
        if let Regularizer::LogBarrier { mu } = reg {
            terms.push(mu * a.ln());
            terms.push(mu * b.ln());
        }
    }
    Ok(InnerSolution {
        zl,
        zu,
        xi: sorted_sum(terms),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_examples() {
        let s2 = 2f64.sqrt();
        let (t, s) = solve_inner_1d(0.0, 1.0, 1.0, 2.0);
        assert!((t - (2.0 + s2)).abs() < 1e-12 && (s - s2).abs() < 1e-12);
        let (t, s) = solve_inner_1d(0.0, 2.0, 1.0, 0.0);
        assert!((t - 1.0).abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
        let (t, s) = solve_inner_1d(0.0, 1.0, 1.0, -2.0);
        assert!((t - s2).abs() < 1e-12 && (s - (2.0 + s2)).abs() < 1e-12);
    }

    #[test]
    fn vertex_enumeration() {
        assert_eq!(vertex_1d(0.0, 1.0, 1.5), (1.5, 0.0));
        assert_eq!(vertex_1d(0.0, 1.0, -2.0), (0.0, 2.0));
        // z = 0: both vertices coincide at the origin.
        let (t, s) = vertex_1d(-1.0, 1.0, 0.0);
        assert_eq!((t, s), (0.0, 0.0));
    }

    #[test]
    fn tiny_multiplier_resolved() {
        let (mu, l, u, z) = (1e-4, -3.0, 997.0, 1e4);
        let (t, s) = solve_inner_1d(l, u, mu, z);
        let res = mu / t + mu / s - (u - l);
        assert!(res.abs() <= 1e-9 * (u - l), "residual {res}");
        assert!((t - s - z).abs() <= 1e-12 * z);
    }
}

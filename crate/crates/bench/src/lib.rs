//! Shared fixtures for the benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualprox_core::dcopf::{parse_matpower_case, sample_demands, DcopfModel, SamplerConfig};
use dualprox_core::LpInstance;

pub const CASE14: &str = include_str!("../../core/cases/case14.m");
pub const CASE118: &str = include_str!("../../core/cases/case118.m");

/// Random bounded instance (`m × n`) and `batch` dual vectors.
pub fn random_instance(m: usize, n: usize, batch: usize, seed: u64) -> (LpInstance, Vec<DVector<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let a = DMatrix::from_fn(m, n, |_, _| u(-1.0, 1.0));
    let b = DVector::from_fn(m, |_, _| u(-1.0, 1.0));
    let c = DVector::from_fn(n, |_, _| u(-5.0, 5.0));
    let l = DVector::from_fn(n, |_, _| u(-5.0, 0.0));
    let w = DVector::from_fn(n, |_, _| u(0.1, 10.0));
    let inst = LpInstance::new(a, b, c, l.clone(), l + w).expect("valid instance");
    let ys = (0..batch).map(|_| DVector::from_fn(m, |_, _| u(-3.0, 3.0))).collect();
    (inst, ys)
}

/// DCOPF model of a bundled case with `k` sampled demand vectors stacked
/// as rows.
pub fn dcopf_fixture(case: &str, k: usize) -> (DcopfModel, DMatrix<f64>) {
    let model = DcopfModel::new(parse_matpower_case(case).expect("bundled case parses"))
        .expect("bundled case is valid");
    let samples = sample_demands(model.network(), 0, 0..k as u64, &SamplerConfig::default())
        .expect("sampling succeeds");
    let nb = model.n_bus();
    let features = DMatrix::from_fn(k, nb, |i, j| samples[i].beta[j]);
    (model, features)
}

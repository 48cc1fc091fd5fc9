//! `bench`: relative timings. Each measurement runs once to warm up and
//! then reports the median of `runs` timed repetitions.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dualprox_core::completion::{complete_log_barrier, Regularizer};
use dualprox_core::mlp::load_checkpoint;
use dualprox_core::oracle::{solve_inner, solve_lp, SolveStatus};
use dualprox_core::LpInstance;

use crate::dataset::Dataset;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub batch: usize,
    pub runs: usize,
    /// Variables of the synthetic completion instance.
    pub completion_n: usize,
    /// Equality rows of the synthetic completion instance.
    pub completion_m: usize,
    pub mu: f64,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            batch: 1000,
            runs: 5,
            completion_n: 500,
            completion_m: 1,
            mu: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub batch: usize,
    pub runs: usize,
    /// Median seconds for network inference plus completion of the batch.
    pub inference_seconds: f64,
    /// Median seconds for solving the batch with the interior point method.
    pub oracle_seconds: f64,
    pub inference_speedup: f64,
    pub completion_n: usize,
    pub closed_form_seconds: f64,
    pub inner_oracle_seconds: f64,
    pub completion_speedup: f64,
}

/// Median wall time of `runs` calls after one warm-up call.
pub fn median_seconds(runs: usize, mut f: impl FnMut()) -> f64 {
    f();
    let mut times: Vec<f64> = (0..runs.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let k = times.len();
    if k % 2 == 1 {
        times[k / 2]
    } else {
        0.5 * (times[k / 2 - 1] + times[k / 2])
    }
}

/// Random bounded instance with `m` dense rows and `n` columns, plus
/// `batch` dual vectors.
pub fn completion_fixture(m: usize, n: usize, batch: usize, seed: u64) -> (LpInstance, Vec<DVector<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let a = DMatrix::from_fn(m, n, |_, _| u(-1.0, 1.0));
    let b = DVector::from_fn(m, |_, _| u(-1.0, 1.0));
    let c = DVector::from_fn(n, |_, _| u(-5.0, 5.0));
    let l = DVector::from_fn(n, |_, _| u(-5.0, 0.0));
    let w = DVector::from_fn(n, |_, _| u(0.1, 10.0));
    let inst = LpInstance::new(a, b, c, l.clone(), l + w).expect("valid fixture");
    let ys = (0..batch).map(|_| DVector::from_fn(m, |_, _| u(-3.0, 3.0))).collect();
    (inst, ys)
}

/// Closed-form log-barrier completion against the numerical per-coordinate
/// oracle on the same dual vectors, both single threaded.
pub fn bench_completion(opts: &BenchOptions) -> Result<(f64, f64)> {
    let (inst, ys) = completion_fixture(opts.completion_m, opts.completion_n, opts.batch, opts.seed);
    let reg = Regularizer::from_mu(opts.mu)?;
    let mut sink = 0.0;
    let closed = median_seconds(opts.runs, || {
        for y in &ys {
            sink += complete_log_barrier(&inst, y, opts.mu).expect("fixture dims").xi;
        }
    });
    let inner = median_seconds(opts.runs, || {
        for y in &ys {
            sink += solve_inner(&inst, y, reg).expect("fixture dims").xi;
        }
    });
    std::hint::black_box(sink);
    Ok((closed, inner))
}

/// Full proxy inference against interior point solves on `batch` test
/// instances (the test split is cycled when it is smaller).
pub fn run_bench(checkpoint: &Path, dataset_path: &Path, opts: &BenchOptions) -> Result<BenchReport> {
    if opts.batch == 0 {
        return Err(CliError::Invalid("batch must be positive".into()));
    }
    let proxy = load_checkpoint(checkpoint)?;
    let dataset = Dataset::load(dataset_path)?;
    let model = dataset.model()?;
    let template = model.template()?;
    let pool = if dataset.header.test.is_empty() {
        &dataset.header.train
    } else {
        &dataset.header.test
    };
    let nb = dataset.header.n_bus;
    let picks: Vec<&[f64]> = (0..opts.batch)
        .map(|k| dataset.samples[pool[k % pool.len()]].beta.as_slice())
        .collect();
    let features = DMatrix::from_fn(opts.batch, nb, |i, j| picks[i][j]);
    let instances: Vec<LpInstance> = picks
        .iter()
        .map(|beta| model.instance(&DVector::from_column_slice(beta)))
        .collect::<dualprox_core::Result<_>>()?;

    let inference = median_seconds(opts.runs, || {
        std::hint::black_box(proxy.predict(&template, &features).expect("checkpoint matches dataset"));
    });
    let mut failed = 0;
    let oracle = median_seconds(opts.runs, || {
        let res: Vec<_> = instances.par_iter().map(solve_lp).collect();
        failed = res.iter().filter(|r| r.status != SolveStatus::Optimal).count();
    });
    if failed > 0 {
        eprintln!("warning: oracle did not reach optimality on {failed} instances");
    }
    let (closed, inner) = bench_completion(opts)?;
    Ok(BenchReport {
        batch: opts.batch,
        runs: opts.runs,
        inference_seconds: inference,
        oracle_seconds: oracle,
        inference_speedup: oracle / inference,
        completion_n: opts.completion_n,
        closed_form_seconds: closed,
        inner_oracle_seconds: inner,
        completion_speedup: inner / closed,
    })
}

pub fn format_report(r: &BenchReport) -> String {
    format!(
        "batch {} (median of {} runs)\n\
         proxy inference   {:>12.6} s\n\
         interior point    {:>12.6} s\n\
         speedup           {:>12.1}x\n\
         completion n={}\n\
         closed form       {:>12.6} s\n\
         numerical oracle  {:>12.6} s\n\
         speedup           {:>12.1}x\n",
        r.batch,
        r.runs,
        r.inference_seconds,
        r.oracle_seconds,
        r.inference_speedup,
        r.completion_n,
        r.closed_form_seconds,
        r.inner_oracle_seconds,
        r.completion_speedup
    )
}

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::PowerNetwork;

/// Demand sampler: `pᵈᵢ = pᵈ_base,ᵢ · α · ηᵢ` with a global factor
/// `α ~ U(alpha_range)` and per-bus noise `ηᵢ ~ U(1 − local_noise, 1 + local_noise)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub alpha_range: (f64, f64),
    pub local_noise: f64,
    /// Total demand must stay within this fraction of total capacity.
    pub capacity_margin: f64,
    pub max_tries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            alpha_range: (0.8, 1.2),
            local_noise: 0.05,
            capacity_margin: 0.95,
            max_tries: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandSample {
    pub id: u64,
    pub seed: u64,
    pub alpha: f64,
    /// Per-bus demand in MW.
    pub beta: DVector<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws one demand vector from a ChaCha8 stream seeded with `seed`.
///
/// `α` is redrawn until the total fits the capacity margin.
pub fn sample_demand(net: &PowerNetwork, seed: u64, cfg: &SamplerConfig) -> Result<DemandSample> {
    let (lo, hi) = cfg.alpha_range;
    if !(lo <= hi && lo >= 0.0 && cfg.local_noise >= 0.0 && cfg.local_noise <= 1.0) {
        return Err(Error::Contract(format!("invalid sampler configuration {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = net.base_demand();
    let eta = DVector::from_fn(base.len(), |_, _| {
        uniform(&mut rng, 1.0 - cfg.local_noise, 1.0 + cfg.local_noise)
    });
    let noisy = base.component_mul(&eta);
    let limit = cfg.capacity_margin * net.capacity();
    for _ in 0..cfg.max_tries.max(1) {
        let alpha = uniform(&mut rng, lo, hi);
        let beta = alpha * &noisy;
        if beta.sum() <= limit {
            return Ok(DemandSample {
                id: 0,
                seed,
                alpha,
                beta,
            });
        }
    }
    Err(Error::Validation(format!(
        "no demand sample within {:.0}% of capacity {:.3} after {} tries",
        100.0 * cfg.capacity_margin,
        net.capacity(),
        cfg.max_tries
    )))
}

/// SplitMix64 finalizer of `base ⊕ index`, giving each sample its own stream.
pub fn sub_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples `ids`, each from `sub_seed(seed, id)`, in parallel.
pub fn sample_demands(
    net: &PowerNetwork,
    seed: u64,
    ids: std::ops::Range<u64>,
    cfg: &SamplerConfig,
) -> Result<Vec<DemandSample>> {
    ids.into_par_iter()
        .map(|id| {
            let mut s = sample_demand(net, sub_seed(seed, id), cfg)?;
            s.id = id;
            Ok(s)
        })
        .collect()
}

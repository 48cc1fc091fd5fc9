//! `train`: fits one proxy per seed and writes a run directory per seed.
//!
//! Each run directory holds `checkpoint.dpx`, `manifest.json` and
//! `timings.json`. Wall-clock times live in the sidecar so that the manifest
//! of a rerun is byte-identical.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use dualprox_core::metrics::gstar_summary;
use dualprox_core::mlp::{save_checkpoint, train_into, EpochRecord, MlpModel, TrainSet, Validator};
use dualprox_core::{Method, Proxy, TrainConfig};

use crate::dataset::{read_demands, sha256_hex, validation_split, Dataset};
use crate::error::{read_file, write_file, CliError, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.dpx";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const MANIFEST_VERSION: u32 = 1;
/// Training samples whose oracle duals set the optional output scale.
pub const OUTPUT_SCALE_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    pub config: TrainConfig,
    /// Fraction of the training split held out for per-epoch curves.
    pub validation_fraction: f64,
    /// Scale the `y` head by the std of oracle duals on training samples.
    pub output_scale: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            config: TrainConfig::default(),
            validation_fraction: 0.1,
            output_scale: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "state", content = "message")]
pub enum RunStatus {
    Completed,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub method: Method,
    pub seed: u64,
    pub options: TrainOptions,
    pub dataset_sha256: String,
    pub network_fingerprint: String,
    pub n_fit: usize,
    pub n_val: usize,
    /// Empty when the run failed.
    pub checkpoint_sha256: String,
    pub status: RunStatus,
    pub history: Vec<EpochRecord>,
}

impl RunManifest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("manifest serializes");
        v.push(b'\n');
        v
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_slice(&read_file(path)?)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub train_seconds: f64,
    pub seconds_per_epoch: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub timings: Timings,
}

pub fn run_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn output_scale(dataset: &Dataset, fit: &[usize], m: usize) -> Result<Vec<f64>> {
    let ys: Vec<&[f64]> = fit
        .iter()
        .take(OUTPUT_SCALE_SAMPLES)
        .map(|&i| {
            dataset.samples[i]
                .oracle
                .as_ref()
                .map(|o| o.y.as_slice())
                .ok_or_else(|| CliError::Invalid("output scaling needs oracle duals".into()))
        })
        .collect::<Result<_>>()?;
    let k = ys.len() as f64;
    Ok((0..m)
        .map(|j| {
            let mean = ys.iter().map(|y| y[j]).sum::<f64>() / k;
            let var = ys.iter().map(|y| (y[j] - mean).powi(2)).sum::<f64>() / k;
            let sd = var.sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect())
}

/// Trains one run per seed on the dataset at `dataset_path`, writing
/// `out/seed-<s>/`. A failing seed still leaves its manifest behind.
pub fn run_training(
    dataset_path: &Path,
    opts: &TrainOptions,
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<RunOutcome>> {
    opts.config.validate()?;
    if !(0.0..1.0).contains(&opts.validation_fraction) {
        return Err(CliError::Invalid("validation_fraction must lie in [0, 1)".into()));
    }
    let t0 = Instant::now();
    let bytes = read_file(dataset_path)?;
    let dataset_sha256 = sha256_hex(&bytes);
    let full = Dataset::from_bytes(&bytes)?;
    let model = full.model()?;
    let template = model.template()?;
    let (fit_idx, val_idx) = validation_split(&full.header.train, opts.validation_fraction);

    // Training only ever sees demands.
    let (_, fit) = read_demands(&bytes, &fit_idx)?;
    let nb = full.header.n_bus;
    let mut features = DMatrix::zeros(fit.len(), nb);
    let mut rhs = DMatrix::zeros(fit.len(), template.m());
    for (row, s) in fit.iter().enumerate() {
        let beta = DVector::from_column_slice(&s.beta);
        features.row_mut(row).tr_copy_from(&beta);
        rhs.row_mut(row).tr_copy_from(&model.rhs(&beta)?);
    }
    let data = TrainSet::new(template.clone(), features, rhs)?;

    let has_oracle = val_idx.iter().all(|&i| full.samples[i].oracle.is_some());
    let val = if has_oracle && !val_idx.is_empty() {
        Some(full.eval_set(&model, &val_idx)?)
    } else {
        None
    };
    let scale = if opts.output_scale {
        Some(output_scale(&full, &fit_idx, template.m())?)
    } else {
        None
    };
    let load_seconds = t0.elapsed().as_secs_f64();

    let mut outcomes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig {
            seed,
            ..opts.config.clone()
        };
        let dir = run_dir(out, seed);
        let mut net = data.new_model(&cfg);
        if let Some(s) = &scale {
            net.set_y_scale(s.clone())?;
        }
        let validator = val.as_ref().map(|set| {
            move |m: &MlpModel| -> dualprox_core::Result<_> { gstar_summary(set, &m.predict(&set.features)?.y) }
        });
        let mut history = Vec::with_capacity(cfg.epochs);
        let t = Instant::now();
        let res = match &validator {
            Some(v) => train_into(&mut net, &data, &cfg, Some(v as &Validator), &mut history),
            None => train_into(&mut net, &data, &cfg, None, &mut history),
        };
        let train_seconds = t.elapsed().as_secs_f64();

        let mut manifest = RunManifest {
            manifest_version: MANIFEST_VERSION,
            method: cfg.method,
            seed,
            options: TrainOptions {
                config: cfg.clone(),
                ..opts.clone()
            },
            dataset_sha256: dataset_sha256.clone(),
            network_fingerprint: full.header.network_fingerprint.clone(),
            n_fit: fit_idx.len(),
            n_val: val_idx.len(),
            checkpoint_sha256: String::new(),
            status: RunStatus::Completed,
            history,
        };
        let timings = Timings {
            load_seconds,
            train_seconds,
            seconds_per_epoch: train_seconds / manifest.history.len().max(1) as f64,
        };
        write_file(
            &dir.join(TIMINGS_FILE),
            &serde_json::to_vec_pretty(&timings).expect("timings serialize"),
        )?;
        if let Err(e) = res {
            manifest.status = RunStatus::Failed(e.to_string());
            write_file(&dir.join(MANIFEST_FILE), &manifest.to_bytes())?;
            return Err(e.into());
        }
        let proxy = Proxy {
            model: net,
            config: cfg,
        };
        let ckpt = dir.join(CHECKPOINT_FILE);
        save_checkpoint(&ckpt, &proxy)?;
        manifest.checkpoint_sha256 = sha256_hex(&read_file(&ckpt)?);
        write_file(&dir.join(MANIFEST_FILE), &manifest.to_bytes())?;
        outcomes.push(RunOutcome {
            dir,
            manifest,
            timings,
        });
    }
    Ok(outcomes)
}

/// Parses `"3"`, `"0..9"` (inclusive) or `"1,4,7"`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || CliError::Invalid(format!("cannot parse seed list {spec:?}"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').map(num).collect()
}

//! Dataset container.
//!
//! ```text
//! magic        8 bytes   "DPXDSET\0"
//! version      u32 LE
//! header_len   u64 LE
//! header       header_len bytes of UTF-8 JSON (DatasetHeader)
//! samples      n_samples records, each:
//!                id u64 LE, seed u64 LE, alpha f64 LE, beta n_bus × f64 LE,
//!                oracle flag u8 (0 absent, 1 present), and when present:
//!                status u8, L★ f64, x★ n × f64, y★ m × f64
//! ```
//!
//! Training reads samples through [`read_demands`], whose record type has no
//! oracle field; the oracle bytes are skipped without being decoded.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dualprox_core::dcopf::{sample_demand, sub_seed, DcopfModel, PowerNetwork, SamplerConfig};
use dualprox_core::metrics::EvalSet;
use dualprox_core::oracle::{solve_lp, SolveStatus};

use crate::error::{read_file, write_file, CliError, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"DPXDSET\0";
pub const DATASET_VERSION: u32 = 1;
/// Oracle failures tolerated while generating one dataset.
pub const MAX_ORACLE_FAILURES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u32,
    /// SHA-256 of the network's JSON encoding.
    pub network_fingerprint: String,
    pub n_samples: usize,
    pub n_bus: usize,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub split: f64,
    pub split_seed: u64,
    /// Sorted sample indices.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub sampler: SamplerConfig,
    pub network: PowerNetwork,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleBlock {
    pub status: SolveStatus,
    pub lstar: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: u64,
    /// Seed of the demand stream actually used.
    pub seed: u64,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub oracle: Option<OracleBlock>,
}

/// Demand-only sample handed to training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub id: u64,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<SampleRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn network_fingerprint(net: &PowerNetwork) -> String {
    sha256_hex(&serde_json::to_vec(net).expect("network serializes"))
}

fn status_code(s: SolveStatus) -> u8 {
    match s {
        SolveStatus::Optimal => 0,
        SolveStatus::MaxIter => 1,
        SolveStatus::NumericalFailure => 2,
    }
}

fn status_from(code: u8) -> Result<SolveStatus> {
    match code {
        0 => Ok(SolveStatus::Optimal),
        1 => Ok(SolveStatus::MaxIter),
        2 => Ok(SolveStatus::NumericalFailure),
        c => Err(CliError::Invalid(format!("unknown solver status code {c}"))),
    }
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Dataset {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let json = serde_json::to_vec(h).map_err(|e| CliError::Invalid(e.to_string()))?;
        let per = 8 * (3 + h.n_bus + 1 + h.n + h.m) + 2;
        let mut out = Vec::with_capacity(20 + json.len() + per * self.samples.len());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for s in &self.samples {
            if s.beta.len() != h.n_bus {
                return Err(CliError::Invalid(format!("sample {} has {} demands", s.id, s.beta.len())));
            }
            out.extend_from_slice(&s.id.to_le_bytes());
            out.extend_from_slice(&s.seed.to_le_bytes());
            out.extend_from_slice(&s.alpha.to_le_bytes());
            put_f64s(&mut out, &s.beta);
            match &s.oracle {
                None => out.push(0),
                Some(o) => {
                    if o.x.len() != h.n || o.y.len() != h.m {
                        return Err(CliError::Invalid(format!("sample {} has a malformed oracle block", s.id)));
                    }
                    out.push(1);
                    out.push(status_code(o.status));
                    out.extend_from_slice(&o.lstar.to_le_bytes());
                    put_f64s(&mut out, &o.x);
                    put_f64s(&mut out, &o.y);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let header = r.header()?;
        let mut samples = Vec::with_capacity(header.n_samples);
        for _ in 0..header.n_samples {
            let (id, seed, alpha, beta) = r.demand(&header)?;
            let oracle = match r.u8()? {
                0 => None,
                1 => Some(OracleBlock {
                    status: status_from(r.u8()?)?,
                    lstar: r.f64()?,
                    x: r.f64s(header.n)?,
                    y: r.f64s(header.m)?,
                }),
                f => return Err(CliError::Invalid(format!("bad oracle flag {f} for sample {id}"))),
            };
            samples.push(SampleRecord {
                id,
                seed,
                alpha,
                beta,
                oracle,
            });
        }
        r.finish()?;
        Ok(Self { header, samples })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    pub fn model(&self) -> Result<DcopfModel> {
        Ok(DcopfModel::new(self.header.network.clone())?)
    }

    /// Evaluation samples with their optimal values. Fails if any sample
    /// lacks an oracle block or was not solved to optimality.
    pub fn eval_set(&self, model: &DcopfModel, indices: &[usize]) -> Result<EvalSet> {
        let nb = self.header.n_bus;
        let template = model.template()?;
        let mut features = DMatrix::zeros(indices.len(), nb);
        let mut rhs = DMatrix::zeros(indices.len(), template.m());
        let mut ids = Vec::with_capacity(indices.len());
        let mut lstar = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            let s = self
                .samples
                .get(i)
                .ok_or_else(|| CliError::Invalid(format!("sample index {i} out of range")))?;
            let o = s.oracle.as_ref().ok_or_else(|| {
                CliError::Invalid(format!("sample {} has no oracle block; regenerate with --with-oracle", s.id))
            })?;
            if o.status != SolveStatus::Optimal {
                return Err(CliError::Invalid(format!("sample {} was not solved to optimality", s.id)));
            }
            let beta = DVector::from_column_slice(&s.beta);
            features.row_mut(row).tr_copy_from(&beta);
            rhs.row_mut(row).tr_copy_from(&model.rhs(&beta)?);
            ids.push(s.id);
            lstar.push(Some(o.lstar));
        }
        Ok(EvalSet {
            template,
            ids,
            features,
            rhs,
            lstar,
        })
    }

    /// Test-split evaluation set.
    pub fn test_set(&self, model: &DcopfModel) -> Result<EvalSet> {
        self.eval_set(model, &self.header.test)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            CliError::Invalid(format!("dataset truncated at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        (0..k).map(|_| self.f64()).collect()
    }

    fn header(&mut self) -> Result<DatasetHeader> {
        if self.take(8)? != DATASET_MAGIC {
            return Err(CliError::Invalid("not a dataset file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"));
        if version != DATASET_VERSION {
            return Err(CliError::Invalid(format!("unsupported dataset version {version}")));
        }
        let len = usize::try_from(self.u64()?)
            .map_err(|_| CliError::Invalid("dataset header too large".into()))?;
        let header: DatasetHeader = serde_json::from_slice(self.take(len)?)
            .map_err(|e| CliError::Invalid(format!("dataset header: {e}")))?;
        let net = &header.network;
        // Deserialization bypasses the constructor's checks.
        PowerNetwork::new(
            net.base_mva(),
            net.buses().to_vec(),
            net.generators().to_vec(),
            net.branches().to_vec(),
            net.slack(),
        )?;
        if network_fingerprint(net) != header.network_fingerprint {
            return Err(CliError::Invalid("network fingerprint does not match the stored network".into()));
        }
        let nb = net.buses().len();
        let (ng, nl) = (net.generators().len(), net.branches().len());
        if header.n_bus != nb || header.m != 1 + nl || header.n != ng + nl {
            return Err(CliError::Invalid("dataset dimensions do not match the network".into()));
        }
        let mut all: Vec<usize> = header.train.iter().chain(&header.test).copied().collect();
        all.sort_unstable();
        if all != (0..header.n_samples).collect::<Vec<_>>() {
            return Err(CliError::Invalid("train and test indices must partition the samples".into()));
        }
        Ok(header)
    }

    fn demand(&mut self, h: &DatasetHeader) -> Result<(u64, u64, f64, Vec<f64>)> {
        Ok((self.u64()?, self.u64()?, self.f64()?, self.f64s(h.n_bus)?))
    }

    fn skip_oracle(&mut self, h: &DatasetHeader) -> Result<()> {
        match self.u8()? {
            0 => Ok(()),
            1 => self.take(1 + 8 * (1 + h.n + h.m)).map(|_| ()),
            f => Err(CliError::Invalid(format!("bad oracle flag {f}"))),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(CliError::Invalid(format!(
                "{} trailing bytes after the last sample",
                self.bytes.len() - self.pos
            )))
        }
    }
}

/// Header and the demands of the samples at `indices`, read without
/// decoding any oracle block.
pub fn read_demands(bytes: &[u8], indices: &[usize]) -> Result<(DatasetHeader, Vec<TrainSample>)> {
    let mut r = Reader::new(bytes);
    let header = r.header()?;
    let mut all = Vec::with_capacity(header.n_samples);
    for _ in 0..header.n_samples {
        let (id, _, _, beta) = r.demand(&header)?;
        r.skip_oracle(&header)?;
        all.push(TrainSample { id, beta });
    }
    r.finish()?;
    let picked = indices
        .iter()
        .map(|&i| {
            all.get(i)
                .cloned()
                .ok_or_else(|| CliError::Invalid(format!("sample index {i} out of range")))
        })
        .collect::<Result<_>>()?;
    Ok((header, picked))
}

/// Options for [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenOptions {
    pub n_samples: usize,
    pub split: f64,
    pub seed: u64,
    pub split_seed: u64,
    pub with_oracle: bool,
    pub sampler: SamplerConfig,
}

fn solve_sample(model: &DcopfModel, beta: &[f64]) -> Result<OracleBlock> {
    let inst = model.instance(&DVector::from_column_slice(beta))?;
    let res = solve_lp(&inst);
    Ok(OracleBlock {
        status: res.status,
        lstar: res.primal_obj,
        x: res.x.as_slice().to_vec(),
        y: res.y.as_slice().to_vec(),
    })
}

fn draw(net: &PowerNetwork, id: u64, seed: u64, cfg: &SamplerConfig) -> Result<SampleRecord> {
    let s = sample_demand(net, seed, cfg)?;
    Ok(SampleRecord {
        id,
        seed,
        alpha: s.alpha,
        beta: s.beta.as_slice().to_vec(),
        oracle: None,
    })
}

/// Samples demands and, optionally, solves every instance. Sample `i` draws
/// from `sub_seed(seed, i)`; a sample the oracle fails on is redrawn from
/// `sub_seed(that seed, attempt)`.
pub fn generate(net: PowerNetwork, opts: &GenOptions) -> Result<Dataset> {
    if opts.n_samples == 0 {
        return Err(CliError::Invalid("n_samples must be positive".into()));
    }
    if !(opts.split > 0.0 && opts.split < 1.0) {
        return Err(CliError::Invalid(format!("split must lie in (0, 1), got {}", opts.split)));
    }
    let model = DcopfModel::new(net.clone())?;
    let mut samples: Vec<SampleRecord> = (0..opts.n_samples as u64)
        .into_par_iter()
        .map(|id| {
            let mut rec = draw(&net, id, sub_seed(opts.seed, id), &opts.sampler)?;
            if opts.with_oracle {
                rec.oracle = Some(solve_sample(&model, &rec.beta)?);
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;

    let mut failures = 0;
    for rec in samples.iter_mut() {
        let mut attempt = 0;
        while rec.oracle.as_ref().is_some_and(|o| o.status != SolveStatus::Optimal) {
            failures += 1;
            if failures >= MAX_ORACLE_FAILURES {
                return Err(CliError::Numerical(format!(
                    "oracle failed {failures} times (last on sample {})",
                    rec.id
                )));
            }
            attempt += 1;
            let mut fresh = draw(&net, rec.id, sub_seed(rec.seed, attempt), &opts.sampler)?;
            fresh.oracle = Some(solve_sample(&model, &fresh.beta)?);
            *rec = fresh;
        }
    }

    let mut order: Vec<usize> = (0..opts.n_samples).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(opts.split_seed, u64::MAX - 1)));
    let n_train = ((opts.split * opts.n_samples as f64).round() as usize).clamp(1, opts.n_samples);
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();

    let template = model.template()?;
    let header = DatasetHeader {
        format_version: DATASET_VERSION,
        network_fingerprint: network_fingerprint(&net),
        n_samples: opts.n_samples,
        n_bus: net.buses().len(),
        m: template.m(),
        n: template.n(),
        seed: opts.seed,
        split: opts.split,
        split_seed: opts.split_seed,
        train,
        test,
        sampler: opts.sampler,
        network: net,
    };
    Ok(Dataset { header, samples })
}

/// Splits the training indices into the part fitted on and a validation
/// slice of `round(fraction · len)` trailing entries.
pub fn validation_split(train: &[usize], fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let n_val = ((fraction * train.len() as f64).round() as usize).min(train.len().saturating_sub(1));
    let cut = train.len() - n_val;
    (train[..cut].to_vec(), train[cut..].to_vec())
}

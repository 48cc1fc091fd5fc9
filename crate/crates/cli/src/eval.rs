//! `eval`: test-split metrics for one checkpoint or a tree of run
//! directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dualprox_core::metrics::evaluate_model;
use dualprox_core::mlp::load_checkpoint;
use dualprox_core::{Method, MetricsRecord};

use crate::dataset::{sha256_hex, Dataset};
use crate::error::{read_file, write_file, CliError, Result};
use crate::train::{RunManifest, CHECKPOINT_FILE, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct RunRef {
    pub checkpoint: PathBuf,
    pub manifest: Option<PathBuf>,
}

/// Finds checkpoints under `path`: the file itself, or every directory
/// below it holding a checkpoint, in sorted order.
pub fn discover_runs(path: &Path) -> Result<Vec<RunRef>> {
    if path.is_file() {
        let manifest = path.with_file_name(MANIFEST_FILE);
        return Ok(vec![RunRef {
            checkpoint: path.to_path_buf(),
            manifest: manifest.is_file().then_some(manifest),
        }]);
    }
    let mut found = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let ckpt = dir.join(CHECKPOINT_FILE);
        if ckpt.is_file() {
            let manifest = dir.join(MANIFEST_FILE);
            found.push(RunRef {
                checkpoint: ckpt,
                manifest: manifest.is_file().then_some(manifest),
            });
        }
        let entries = std::fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
        for entry in entries {
            let p = entry.map_err(|e| CliError::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            }
        }
    }
    if found.is_empty() {
        return Err(CliError::Invalid(format!("no {CHECKPOINT_FILE} under {}", path.display())));
    }
    found.sort_by(|a, b| a.checkpoint.cmp(&b.checkpoint));
    Ok(found)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: Method,
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub record: MetricsRecord,
}

/// Evaluates every run on the test split of the dataset at `dataset_path`.
/// Prints a warning to stderr for runs trained on a different dataset.
pub fn evaluate_runs(runs: &[RunRef], dataset_path: &Path) -> Result<Vec<EvalRow>> {
    let bytes = read_file(dataset_path)?;
    let digest = sha256_hex(&bytes);
    let dataset = Dataset::from_bytes(&bytes)?;
    let model = dataset.model()?;
    let test = dataset.test_set(&model)?;
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let proxy = load_checkpoint(&run.checkpoint)?;
        if let Some(path) = &run.manifest {
            let manifest = RunManifest::load(path)?;
            if manifest.dataset_sha256 != digest {
                eprintln!(
                    "warning: {} was trained on a different dataset",
                    run.checkpoint.display()
                );
            }
        }
        let record = evaluate_model(&proxy, &test)?;
        rows.push(EvalRow {
            method: proxy.config.method,
            seed: proxy.config.seed,
            checkpoint: run.checkpoint.clone(),
            record,
        });
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// One line per test sample followed by a summary line.
pub fn metrics_csv(rec: &MetricsRecord) -> String {
    let mut s = String::from("id,lstar,bound,dual_obj,v,v_sum,v_linf,dgap,gstar\n");
    for p in &rec.per_sample {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            p.id,
            p.lstar,
            p.bound,
            p.dual_obj,
            p.v,
            p.v_sum,
            p.v_linf,
            opt(p.dgap),
            opt(p.gstar)
        );
    }
    let _ = writeln!(
        s,
        "summary,,,,{},,,{},{}",
        rec.v_mean, rec.dgap_mean, rec.gstar_mean
    );
    let _ = writeln!(s, "# gstar_max={} excluded={}", rec.gstar_max, rec.excluded);
    s
}

/// Per-run rows plus, per method with more than one run, a mean row.
/// Columns: G★, G★max, V, ΔG.
pub fn summary_rows(rows: &[EvalRow]) -> Vec<(String, String, [f64; 4])> {
    let mut out = Vec::new();
    let mut by_method: BTreeMap<&str, Vec<[f64; 4]>> = BTreeMap::new();
    for r in rows {
        let v = [r.record.gstar_mean, r.record.gstar_max, r.record.v_mean, r.record.dgap_mean];
        out.push((r.method.name().to_string(), r.seed.to_string(), v));
        by_method.entry(r.method.name()).or_default().push(v);
    }
    for (method, vals) in by_method {
        if vals.len() > 1 {
            let k = vals.len() as f64;
            let mean = std::array::from_fn(|j| vals.iter().map(|v| v[j]).sum::<f64>() / k);
            out.push((method.to_string(), "mean".to_string(), mean));
        }
    }
    out
}

pub fn summary_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from("method,seed,gstar_mean,gstar_max,v_mean,dgap_mean\n");
    for (method, seed, v) in summary_rows(rows) {
        let _ = writeln!(s, "{method},{seed},{},{},{},{}", v[0], v[1], v[2], v[3]);
    }
    s
}

pub fn summary_table(rows: &[EvalRow]) -> String {
    let mut s = format!(
        "{:<8} {:>5} {:>10} {:>10} {:>11} {:>10}\n",
        "method", "seed", "G★ (%)", "G★max (%)", "V", "ΔG (%)"
    );
    for (method, seed, v) in summary_rows(rows) {
        let _ = writeln!(
            s,
            "{method:<8} {seed:>5} {:>10.4} {:>10.4} {:>11.3e} {:>10.4}",
            v[0], v[1], v[2], v[3]
        );
    }
    s
}

/// Runs `eval` and, when `out` is given, writes one CSV per run plus
/// `summary.csv` there.
pub fn run_eval(path: &Path, dataset_path: &Path, out: Option<&Path>) -> Result<Vec<EvalRow>> {
    let runs = discover_runs(path)?;
    let rows = evaluate_runs(&runs, dataset_path)?;
    if let Some(dir) = out {
        for r in &rows {
            let name = format!("metrics-{}-seed{}.csv", r.method.name(), r.seed);
            write_file(&dir.join(name), metrics_csv(&r.record).as_bytes())?;
        }
        write_file(&dir.join("summary.csv"), summary_csv(&rows).as_bytes())?;
    }
    Ok(rows)
}

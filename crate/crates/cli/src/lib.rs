//! Persistence and commands behind the `dualprox` binary.

pub mod bench;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod plot;
pub mod train;

use std::path::Path;

pub use dataset::{Dataset, DatasetHeader, GenOptions, OracleBlock, SampleRecord, TrainSample};
pub use error::{CliError, Result};
pub use train::{RunManifest, TrainOptions};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "DUALPROX_WORKERS";

/// Sizes the global thread pool from `DUALPROX_WORKERS`, defaulting to the
/// logical core count. Call once, before any parallel work.
pub fn init_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Invalid(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))
}

/// `gen-data`: parses a MATPOWER case, generates and writes a dataset.
pub fn run_gen_data(case: &Path, opts: &GenOptions, out: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(case).map_err(|e| CliError::io(case, e))?;
    let net = dualprox_core::dcopf::parse_matpower_case(&text)?;
    let data = dataset::generate(net, opts)?;
    data.save(out)?;
    Ok(data)
}

/// Parses a TOML file into `T`, rejecting unknown keys where `T` does.
pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

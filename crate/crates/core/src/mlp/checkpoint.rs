//! Checkpoint container.
//!
//! ```text
//! magic        8 bytes   "DPXCKPT\0"
//! version      u32 LE
//! header_len   u64 LE
//! header       header_len bytes of UTF-8 JSON (dims, head, training config)
//! payload      f64 LE values, in order:
//!                for each of the 4 layers: W (column-major, in × out), b
//!                normalizer mean, normalizer std, y scale
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::{Head, Layer, MlpModel, Normalizer, N_LAYERS};
use super::proxy::Proxy;
use super::train::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DPXCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    head: Head,
    m: usize,
    n: usize,
    input_dim: usize,
    hidden: usize,
    config: TrainConfig,
}

fn put(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, proxy: &Proxy) -> Result<()> {
    let model = &proxy.model;
    let header = Header {
        head: model.head(),
        m: model.m(),
        n: model.n(),
        input_dim: model.input_dim(),
        hidden: model.hidden(),
        config: proxy.config.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut buf = Vec::with_capacity(24 + json.len() + 8 * model.param_count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for layer in model.layers() {
        put(&mut buf, layer.w.iter().copied());
        put(&mut buf, layer.b.iter().copied());
    }
    let norm = model.normalizer();
    put(&mut buf, norm.mean.iter().copied());
    put(&mut buf, norm.std.iter().copied());
    put(&mut buf, model.y_scale().iter().copied());
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn bytes(&mut self, k: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(8 * k)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Proxy> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    if cur.bytes(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(cur.bytes(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(cur.bytes(8)?.try_into().unwrap()) as usize;
    let header: Header =
        serde_json::from_slice(cur.bytes(len)?).map_err(|e| Error::Format(e.to_string()))?;
    let out = header.head.output_dim(header.m, header.n);
    let dims = [header.input_dim, header.hidden, header.hidden, header.hidden, out];
    let mut layers = Vec::with_capacity(N_LAYERS);
    for k in 0..N_LAYERS {
        let (i, o) = (dims[k], dims[k + 1]);
        let w = DMatrix::from_vec(i, o, cur.f64s(i * o)?);
        let b = DVector::from_vec(cur.f64s(o)?);
        layers.push(Layer { w, b });
    }
    let normalizer = Normalizer {
        mean: cur.f64s(header.input_dim)?,
        std: cur.f64s(header.input_dim)?,
    };
    let y_scale = cur.f64s(header.m)?;
    if cur.pos != data.len() {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    let mut model = MlpModel::from_layers(header.head, header.m, header.n, header.hidden, layers, normalizer)?;
    model.set_y_scale(y_scale)?;
    Ok(Proxy {
        model,
        config: header.config,
    })
}

pub fn save_checkpoint(path: &Path, proxy: &Proxy) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, proxy)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Proxy> {
    read_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Method;

    #[test]
    fn round_trip_is_bit_identical() {
        let mut model = MlpModel::new(3, 5, Head::DualYZlZu, 2, 4, 7);
        model
            .set_normalizer(Normalizer {
                mean: vec![0.1, -2.0, 1e-300],
                std: vec![1.0, 3.5, 0.25],
            })
            .unwrap();
        model.set_y_scale(vec![2.0, 0.5]).unwrap();
        let proxy = Proxy {
            model,
            config: TrainConfig {
                method: Method::Penalty,
                penalty_weight: Some(1e8),
                ..Default::default()
            },
        };
        let mut a = Vec::new();
        write_checkpoint(&mut a, &proxy).unwrap();
        let back = read_checkpoint(&a[..]).unwrap();
        let mut b = Vec::new();
        write_checkpoint(&mut b, &back).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.config, proxy.config);
        let x = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.3 - 1.0);
        assert_eq!(back.model.predict(&x).unwrap(), proxy.model.predict(&x).unwrap());
    }

    #[test]
    fn corrupt_input_rejected() {
        assert!(read_checkpoint(&b"DPXDSET\0rest"[..]).is_err());
        let proxy = Proxy {
            model: MlpModel::new(2, 3, Head::DualY, 1, 1, 0),
            config: TrainConfig::default(),
        };
        let mut a = Vec::new();
        write_checkpoint(&mut a, &proxy).unwrap();
        assert!(read_checkpoint(&a[..a.len() - 1]).is_err());
        a.push(0);
        assert!(read_checkpoint(&a[..]).is_err());
    }
}

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 128;
pub const N_LAYERS: usize = 4;

/// Which dual blocks the network predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// `y` only (linear).
    DualY,
    /// `y` (linear) and `zˡ` (softplus).
    DualYZl,
    /// `y` (linear), `zˡ` and `zᵘ` (softplus).
    DualYZlZu,
}

impl Head {
    pub fn output_dim(self, m: usize, n: usize) -> usize {
        match self {
            Head::DualY => m,
            Head::DualYZl => m + n,
            Head::DualYZlZu => m + 2 * n,
        }
    }
}

#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `out = in · W + b`, with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Layer {
    fn zeros(inp: usize, out: usize) -> Self {
        Self {
            w: DMatrix::zeros(inp, out),
            b: DVector::zeros(out),
        }
    }

    fn glorot(inp: usize, out: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (inp + out) as f64).sqrt();
        Self {
            w: DMatrix::from_fn(inp, out, |_, _| rng.random_range(-a..a)),
            b: DVector::zeros(out),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * &self.w;
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.b[j]);
        }
        z
    }
}

/// Per-feature standardization frozen from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    /// Zero spreads are stored as 1.
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Statistics of the rows of `x` (samples × features).
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
        let std = x
            .column_iter()
            .zip(&mean)
            .map(|(c, &mu)| {
                let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
                let s = var.sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (mu, s) = (self.mean[j], self.std[j]);
            col.apply(|v| *v = (*v - mu) / s);
        }
        out
    }
}

/// Head outputs for a batch, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub y: DMatrix<f64>,
    pub zl: Option<DMatrix<f64>>,
    pub zu: Option<DMatrix<f64>>,
}

/// Activations recorded by [`MlpModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// Layer inputs: standardized features, then the three hidden activations.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of all four layers.
    pre: Vec<DMatrix<f64>>,
}

/// Upstream gradients with respect to the head outputs, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub y: DMatrix<f64>,
    pub zl: Option<DMatrix<f64>>,
    pub zu: Option<DMatrix<f64>>,
}

/// Gradients shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }
}

/// Four affine layers with softplus between them, followed by the head.
#[derive(Debug, Clone)]
pub struct MlpModel {
    head: Head,
    m: usize,
    n: usize,
    hidden: usize,
    layers: Vec<Layer>,
    normalizer: Normalizer,
    /// Fixed multiplier on the `y` outputs; ones unless configured.
    y_scale: Vec<f64>,
    version: u64,
}

impl PartialEq for MlpModel {
    /// Compares architecture and parameters, not the cache version.
    fn eq(&self, other: &Self) -> bool {
        self.head == other.head
            && self.m == other.m
            && self.n == other.n
            && self.hidden == other.hidden
            && self.layers == other.layers
            && self.normalizer == other.normalizer
            && self.y_scale == other.y_scale
    }
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn new(input_dim: usize, hidden: usize, head: Head, m: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = head.output_dim(m, n);
        let dims = [input_dim, hidden, hidden, hidden, out];
        let layers = dims.windows(2).map(|d| Layer::glorot(d[0], d[1], &mut rng)).collect();
        Self::from_layers(head, m, n, hidden, layers, Normalizer::identity(input_dim))
            .expect("consistent shapes")
    }

    pub fn zeros(input_dim: usize, hidden: usize, head: Head, m: usize, n: usize) -> Self {
        let out = head.output_dim(m, n);
        let dims = [input_dim, hidden, hidden, hidden, out];
        let layers = dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect();
        Self::from_layers(head, m, n, hidden, layers, Normalizer::identity(input_dim))
            .expect("consistent shapes")
    }

    pub fn from_layers(
        head: Head,
        m: usize,
        n: usize,
        hidden: usize,
        layers: Vec<Layer>,
        normalizer: Normalizer,
    ) -> Result<Self> {
        if layers.len() != N_LAYERS {
            return Err(Error::dims("layer count", N_LAYERS, layers.len()));
        }
        let input_dim = layers[0].w.nrows();
        let dims = [input_dim, hidden, hidden, hidden, head.output_dim(m, n)];
        for (k, layer) in layers.iter().enumerate() {
            if layer.w.shape() != (dims[k], dims[k + 1]) || layer.b.len() != dims[k + 1] {
                return Err(Error::Format(format!(
                    "layer {k} has shape {:?}/{}, expected ({}, {})",
                    layer.w.shape(),
                    layer.b.len(),
                    dims[k],
                    dims[k + 1]
                )));
            }
        }
        if normalizer.mean.len() != input_dim || normalizer.std.len() != input_dim {
            return Err(Error::dims("normalizer", input_dim, normalizer.mean.len()));
        }
        Ok(Self {
            head,
            m,
            n,
            hidden,
            layers,
            normalizer,
            y_scale: vec![1.0; m],
            version: 0,
        })
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<()> {
        if normalizer.mean.len() != self.input_dim() || normalizer.std.len() != self.input_dim() {
            return Err(Error::dims("normalizer", self.input_dim(), normalizer.mean.len()));
        }
        self.normalizer = normalizer;
        self.version += 1;
        Ok(())
    }

    pub fn y_scale(&self) -> &[f64] {
        &self.y_scale
    }

    pub fn set_y_scale(&mut self, scale: Vec<f64>) -> Result<()> {
        if scale.len() != self.m {
            return Err(Error::dims("y scale", self.m, scale.len()));
        }
        self.y_scale = scale;
        self.version += 1;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Mutable access to every parameter; bumps the version so older caches
    /// are rejected by [`MlpModel::backward`].
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    /// Runs the network on raw features (batch × input_dim).
    pub fn forward(&self, features: &DMatrix<f64>) -> Result<(HeadOutput, ForwardCache)> {
        if features.ncols() != self.input_dim() {
            return Err(Error::dims("feature columns", self.input_dim(), features.ncols()));
        }
        let mut inputs = Vec::with_capacity(N_LAYERS);
        let mut pre = Vec::with_capacity(N_LAYERS);
        let mut a = self.normalizer.apply(features);
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&a);
            inputs.push(a);
            a = if k + 1 < N_LAYERS { z.map(softplus) } else { z.clone() };
            pre.push(z);
        }
        let out = self.split_head(&a);
        Ok((
            out,
            ForwardCache {
                version: self.version,
                inputs,
                pre,
            },
        ))
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Result<HeadOutput> {
        Ok(self.forward(features)?.0)
    }

    fn split_head(&self, raw: &DMatrix<f64>) -> HeadOutput {
        let (m, n) = (self.m, self.n);
        let mut y = raw.columns(0, m).into_owned();
        for (j, mut col) in y.column_iter_mut().enumerate() {
            col *= self.y_scale[j];
        }
        let zl = match self.head {
            Head::DualY => None,
            _ => Some(raw.columns(m, n).map(softplus)),
        };
        let zu = match self.head {
            Head::DualYZlZu => Some(raw.columns(m + n, n).map(softplus)),
            _ => None,
        };
        HeadOutput { y, zl, zu }
    }

    /// Gradient of `mean over the batch of ⟨grad, head output⟩` with respect
    /// to every parameter.
    pub fn backward(&self, grad: &HeadGrad, cache: &ForwardCache) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        let batch = cache.inputs[0].nrows();
        let (m, n) = (self.m, self.n);
        let last = &cache.pre[N_LAYERS - 1];
        if grad.y.shape() != (batch, m) {
            return Err(Error::dims("upstream y rows", batch, grad.y.nrows()));
        }
        let mut delta = DMatrix::zeros(batch, last.ncols());
        for j in 0..m {
            let s = self.y_scale[j];
            delta.column_mut(j).zip_apply(&grad.y.column(j), |d, g| *d = g * s);
        }
        let blocks = [(grad.zl.as_ref(), m), (grad.zu.as_ref(), m + n)];
        let wanted = match self.head {
            Head::DualY => 0,
            Head::DualYZl => 1,
            Head::DualYZlZu => 2,
        };
        for (k, (g, off)) in blocks.into_iter().enumerate() {
            match (k < wanted, g) {
                (true, Some(g)) => {
                    if g.shape() != (batch, n) {
                        return Err(Error::dims("upstream z rows", batch, g.nrows()));
                    }
                    for j in 0..n {
                        for i in 0..batch {
                            delta[(i, off + j)] = g[(i, j)] * sigmoid(last[(i, off + j)]);
                        }
                    }
                }
                (true, None) => {
                    return Err(Error::Contract("missing upstream gradient for a head block".into()))
                }
                (false, Some(_)) => {
                    return Err(Error::Contract("upstream gradient for a block the head lacks".into()))
                }
                (false, None) => {}
            }
        }
        let inv = 1.0 / batch as f64;
        let mut grads = Vec::with_capacity(N_LAYERS);
        for k in (0..N_LAYERS).rev() {
            let layer = &self.layers[k];
            let gw = cache.inputs[k].transpose() * &delta * inv;
            let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum() * inv));
            if k > 0 {
                let mut next = &delta * layer.w.transpose();
                next.zip_apply(&cache.pre[k - 1], |d, z| *d *= sigmoid(z));
                delta = next;
            }
            grads.push(Layer { w: gw, b: gb });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(batch: usize, dim: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(batch, dim, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_model_outputs() {
        let model = MlpModel::zeros(3, 4, Head::DualYZlZu, 2, 3);
        let out = model.predict(&features(5, 3, 0)).unwrap();
        assert!(out.y.iter().all(|&v| v == 0.0));
        let ln2 = 2f64.ln();
        assert!(out.zl.unwrap().iter().all(|&v| v == ln2));
        assert!(out.zu.unwrap().iter().all(|&v| v == ln2));
    }

    #[test]
    fn batch_of_one_matches_batch() {
        let model = MlpModel::new(3, 8, Head::DualYZl, 2, 3, 1);
        let x = features(6, 3, 2);
        let out = model.predict(&x).unwrap();
        for i in 0..6 {
            let row = x.rows(i, 1).into_owned();
            let one = model.predict(&row).unwrap();
            let again = model.predict(&DMatrix::from_row_slice(1, 3, row.as_slice())).unwrap();
            assert_eq!(one, again);
            assert!((one.y.row(0) - out.y.row(i)).amax() < 1e-14);
            assert!((one.zl.unwrap().row(0) - out.zl.as_ref().unwrap().row(i)).amax() < 1e-14);
        }
    }

    #[test]
    fn matches_per_sample_loop() {
        let model = MlpModel::new(4, 6, Head::DualYZlZu, 2, 2, 3);
        let x = features(5, 4, 4);
        let out = model.predict(&x).unwrap();
        for i in 0..5 {
            let mut a: Vec<f64> = x.row(i).iter().copied().collect();
            for (k, layer) in model.layers().iter().enumerate() {
                let mut z = vec![0.0; layer.w.ncols()];
                for (o, zo) in z.iter_mut().enumerate() {
                    *zo = layer.b[o] + (0..a.len()).map(|p| a[p] * layer.w[(p, o)]).sum::<f64>();
                }
                a = if k + 1 < N_LAYERS { z.into_iter().map(softplus).collect() } else { z };
            }
            for j in 0..2 {
                assert!((out.y[(i, j)] - a[j]).abs() < 1e-12);
                assert!((out.zl.as_ref().unwrap()[(i, j)] - softplus(a[2 + j])).abs() < 1e-12);
                assert!((out.zu.as_ref().unwrap()[(i, j)] - softplus(a[4 + j])).abs() < 1e-12);
            }
        }
    }

    fn objective(model: &MlpModel, x: &DMatrix<f64>, g: &HeadGrad) -> f64 {
        let out = model.predict(x).unwrap();
        let mut s = out.y.component_mul(&g.y).sum();
        if let (Some(o), Some(gz)) = (&out.zl, &g.zl) {
            s += o.component_mul(gz).sum();
        }
        if let (Some(o), Some(gz)) = (&out.zu, &g.zu) {
            s += o.component_mul(gz).sum();
        }
        s / x.nrows() as f64
    }

    #[test]
    fn backward_matches_finite_differences() {
        for head in [Head::DualY, Head::DualYZl, Head::DualYZlZu] {
            let mut model = MlpModel::new(3, 4, head, 2, 2, 5);
            let x = features(4, 3, 6);
            let up = features(4, 2, 7);
            let g = HeadGrad {
                y: up.clone(),
                zl: (head != Head::DualY).then(|| features(4, 2, 8)),
                zu: (head == Head::DualYZlZu).then(|| features(4, 2, 9)),
            };
            let (_, cache) = model.forward(&x).unwrap();
            let analytic = model.backward(&g, &cache).unwrap().flat();
            let count = model.param_count();
            for p in 0..count {
                let h = 1e-6;
                let orig = *model.params_mut().nth(p).unwrap();
                *model.params_mut().nth(p).unwrap() = orig + h;
                let up_val = objective(&model, &x, &g);
                *model.params_mut().nth(p).unwrap() = orig - h;
                let down_val = objective(&model, &x, &g);
                *model.params_mut().nth(p).unwrap() = orig;
                let fd = (up_val - down_val) / (2.0 * h);
                let err = (fd - analytic[p]).abs() / (1.0 + fd.abs().max(analytic[p].abs()));
                assert!(err <= 1e-5, "{head:?} param {p}: fd {fd} vs {}", analytic[p]);
            }
        }
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let model = MlpModel::new(3, 5, Head::DualY, 2, 1, 9);
        let x = features(3, 3, 10);
        let up = features(3, 2, 11);
        let (_, cache) = model.forward(&x).unwrap();
        let g1 = model
            .backward(&HeadGrad { y: up.clone(), zl: None, zu: None }, &cache)
            .unwrap()
            .flat();
        let g2 = model
            .backward(&HeadGrad { y: 2.0 * up, zl: None, zu: None }, &cache)
            .unwrap()
            .flat();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let g0 = model
            .backward(&HeadGrad { y: DMatrix::zeros(3, 2), zl: None, zu: None }, &cache)
            .unwrap();
        assert!(g0.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut model = MlpModel::new(2, 3, Head::DualY, 1, 1, 0);
        let (_, cache) = model.forward(&features(2, 2, 0)).unwrap();
        *model.params_mut().next().unwrap() += 1.0;
        let g = HeadGrad { y: DMatrix::zeros(2, 1), zl: None, zu: None };
        assert!(matches!(model.backward(&g, &cache), Err(Error::StaleCache)));
    }

    #[test]
    fn normalizer_handles_constant_features() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let norm = Normalizer::fit(&x);
        assert_eq!(norm.std[1], 1.0);
        let z = norm.apply(&x);
        assert!((z.column(0).sum()).abs() < 1e-12);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
    }
}

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{dc3_complete, dc3_loss_and_grad, penalty_loss_and_grad, Dc3Config};
use crate::completion::Regularizer;
use crate::dcopf::sub_seed;
use crate::error::{Error, Result};
use crate::loss::s3l_batch;
use crate::lp::{dual_objective, DualPoint, LpInstance};

use super::adam::{AdamConfig, AdamState};
use super::network::{Head, HeadGrad, MlpModel, Normalizer, DEFAULT_HIDDEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    S3l,
    Dll,
    Dc3,
    Penalty,
}

impl Method {
    pub fn head(self) -> Head {
        match self {
            Method::S3l | Method::Dll => Head::DualY,
            Method::Dc3 => Head::DualYZl,
            Method::Penalty => Head::DualYZlZu,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::S3l => "s3l",
            Method::Dll => "dll",
            Method::Dc3 => "dc3",
            Method::Penalty => "penalty",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s3l" => Ok(Method::S3l),
            "dll" => Ok(Method::Dll),
            "dc3" => Ok(Method::Dc3),
            "penalty" => Ok(Method::Penalty),
            other => Err(Error::Contract(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: usize,
    pub adam: AdamConfig,
    pub mu0: f64,
    pub mu_decay: f64,
    /// Lower bound on μ; zero disables it.
    pub mu_floor: f64,
    /// Fixed penalty weight for Penalty and DC3. `None` uses
    /// `penalty_scale` times the running mean of `|dual objective|`.
    pub penalty_weight: Option<f64>,
    pub penalty_scale: f64,
    pub dc3: Dc3Config,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::S3l,
            epochs: 500,
            batch_size: 64,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            adam: AdamConfig::default(),
            mu0: 1.0,
            mu_decay: 0.99,
            mu_floor: 0.0,
            penalty_weight: None,
            penalty_scale: 100.0,
            dc3: Dc3Config::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(msg));
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return bad("epochs, batch_size and hidden must be positive".into());
        }
        if !(self.mu_decay > 0.0 && self.mu_decay <= 1.0) {
            return bad(format!("mu_decay must lie in (0, 1], got {}", self.mu_decay));
        }
        if !(self.mu0 >= 0.0 && self.mu0.is_finite() && self.mu_floor >= 0.0) {
            return bad("mu0 and mu_floor must be finite and >= 0".into());
        }
        if !(self.adam.lr >= 0.0 && self.adam.eps > 0.0) {
            return bad("learning rate must be >= 0 and eps > 0".into());
        }
        if let Some(w) = self.penalty_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("penalty_weight must be >= 0, got {w}"));
            }
        }
        Ok(())
    }

    /// Starting μ; DLL is always unregularized.
    pub fn initial_mu(&self) -> f64 {
        match self.method {
            Method::S3l => self.mu0,
            _ => 0.0,
        }
    }
}

pub fn mu_schedule_step(mu: f64, decay: f64) -> f64 {
    decay * mu
}

/// Training samples: features and right-hand sides, one row per sample, of
/// a family sharing `template`'s matrix, costs and bounds. Optimal values
/// are deliberately absent.
#[derive(Debug, Clone)]
pub struct TrainSet {
    template: LpInstance,
    features: DMatrix<f64>,
    rhs: DMatrix<f64>,
}

impl TrainSet {
    pub fn new(template: LpInstance, features: DMatrix<f64>, rhs: DMatrix<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::Contract("training set is empty".into()));
        }
        if rhs.nrows() != features.nrows() {
            return Err(Error::dims("rhs rows", features.nrows(), rhs.nrows()));
        }
        if rhs.ncols() != template.m() {
            return Err(Error::dims("rhs columns", template.m(), rhs.ncols()));
        }
        Ok(Self {
            template,
            features,
            rhs,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn template(&self) -> &LpInstance {
        &self.template
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn rhs(&self) -> &DMatrix<f64> {
        &self.rhs
    }

    /// Fresh model for `cfg.method` with normalization fitted to this set.
    pub fn new_model(&self, cfg: &TrainConfig) -> MlpModel {
        let mut model = MlpModel::new(
            self.features.ncols(),
            cfg.hidden,
            cfg.method.head(),
            self.template.m(),
            self.template.n(),
            cfg.seed,
        );
        model
            .set_normalizer(Normalizer::fit(&self.features))
            .expect("normalizer matches features");
        model
    }

    fn select(&self, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let f = DMatrix::from_fn(idx.len(), self.features.ncols(), |i, j| self.features[(idx[i], j)]);
        let r = DMatrix::from_fn(idx.len(), self.rhs.ncols(), |i, j| self.rhs[(idx[i], j)]);
        (f, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    /// Percent.
    pub mean: f64,
    pub max: f64,
}

/// Scores the model on held-out data once per epoch. Only the caller sees
/// optimal values.
pub type Validator<'a> = dyn Fn(&MlpModel) -> Result<GapSummary> + Sync + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// μ used during this epoch.
    pub mu: f64,
    /// Mean training loss in maximization form.
    pub loss: f64,
    pub val_mean_gstar: Option<f64>,
    pub val_max_gstar: Option<f64>,
}

struct BatchResult {
    loss: f64,
    grad: HeadGrad,
    max_abs_z: f64,
}

#[derive(Default)]
struct RunningScale {
    sum: f64,
    count: f64,
}

impl RunningScale {
    fn push(&mut self, values: &[f64]) -> f64 {
        self.sum += values.iter().map(|v| v.abs()).sum::<f64>();
        self.count += values.len() as f64;
        self.sum / self.count.max(1.0)
    }
}

fn max_abs_z(template: &LpInstance, ys: &DMatrix<f64>) -> f64 {
    crate::completion::reduced_costs_batch(template, ys)
        .map(|zs| zs.iter().fold(0.0_f64, |a, z| a.max(z.abs())))
        .unwrap_or(f64::NAN)
}

fn to_matrix(rows: &[DVector<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

fn batch_step(
    model: &MlpModel,
    out: &super::network::HeadOutput,
    template: &LpInstance,
    rhs: &DMatrix<f64>,
    mu: f64,
    cfg: &TrainConfig,
    scale: &mut RunningScale,
) -> Result<BatchResult> {
    let rows = out.y.nrows();
    let (m, n) = (model.m(), model.n());
    let instance = |i: usize| template.with_rhs(rhs.row(i).transpose());
    match cfg.method {
        Method::S3l | Method::Dll => {
            let reg = Regularizer::from_mu(mu)?;
            let batch = s3l_batch(template, rhs, &out.y, reg)?;
            Ok(BatchResult {
                loss: batch.mean_total(),
                grad: HeadGrad {
                    y: -batch.grads,
                    zl: None,
                    zu: None,
                },
                max_abs_z: batch.max_abs_z,
            })
        }
        Method::Penalty => {
            let zl = out.zl.as_ref().expect("penalty head");
            let zu = out.zu.as_ref().expect("penalty head");
            let points: Vec<(LpInstance, DualPoint)> = (0..rows)
                .map(|i| {
                    let dp = DualPoint::new(
                        out.y.row(i).transpose(),
                        zl.row(i).transpose(),
                        zu.row(i).transpose(),
                    );
                    Ok((instance(i)?, dp))
                })
                .collect::<Result<_>>()?;
            let objs: Vec<f64> = points
                .iter()
                .map(|(inst, dp)| dual_objective(inst, dp))
                .collect::<Result<_>>()?;
            let w = cfg.penalty_weight.unwrap_or_else(|| cfg.penalty_scale * scale.push(&objs));
            let res: Vec<_> = points
                .par_iter()
                .map(|(inst, dp)| penalty_loss_and_grad(inst, dp, w))
                .collect::<Result<_>>()?;
            let loss = res.iter().map(|(v, _)| v.total).sum::<f64>() / rows as f64;
            let gy: Vec<_> = res.iter().map(|(_, g)| -&g.y).collect();
            let gl: Vec<_> = res.iter().map(|(_, g)| -&g.zl).collect();
            let gu: Vec<_> = res.iter().map(|(_, g)| -&g.zu).collect();
            Ok(BatchResult {
                loss,
                grad: HeadGrad {
                    y: to_matrix(&gy, m),
                    zl: Some(to_matrix(&gl, n)),
                    zu: Some(to_matrix(&gu, n)),
                },
                max_abs_z: max_abs_z(template, &out.y),
            })
        }
        Method::Dc3 => {
            let zl = out.zl.as_ref().expect("dc3 head");
            let items: Vec<(LpInstance, DVector<f64>, DVector<f64>)> = (0..rows)
                .map(|i| Ok((instance(i)?, out.y.row(i).transpose(), zl.row(i).transpose())))
                .collect::<Result<_>>()?;
            let objs: Vec<f64> = items
                .iter()
                .map(|(inst, y, zl)| {
                    let zu = dc3_complete(inst, y, zl)?;
                    dual_objective(inst, &DualPoint::new(y.clone(), zl.clone(), zu))
                })
                .collect::<Result<_>>()?;
            let w = cfg.penalty_weight.unwrap_or_else(|| cfg.penalty_scale * scale.push(&objs));
            let res: Vec<_> = items
                .par_iter()
                .map(|(inst, y, zl)| dc3_loss_and_grad(inst, y, zl, &cfg.dc3, w))
                .collect::<Result<_>>()?;
            let loss = res.iter().map(|r| r.0.total).sum::<f64>() / rows as f64;
            let gy: Vec<_> = res.iter().map(|r| -&r.1).collect();
            let gl: Vec<_> = res.iter().map(|r| -&r.2).collect();
            Ok(BatchResult {
                loss,
                grad: HeadGrad {
                    y: to_matrix(&gy, m),
                    zl: Some(to_matrix(&gl, n)),
                    zu: None,
                },
                max_abs_z: max_abs_z(template, &out.y),
            })
        }
    }
}

/// Runs `cfg.epochs` epochs of shuffled minibatches, updating `model` in
/// place. Deterministic given `cfg.seed`.
pub fn train(
    model: &mut MlpModel,
    data: &TrainSet,
    cfg: &TrainConfig,
    validate: Option<&Validator<'_>>,
) -> Result<Vec<EpochRecord>> {
    let mut history = Vec::with_capacity(cfg.epochs);
    train_into(model, data, cfg, validate, &mut history)?;
    Ok(history)
}

/// Same as [`train`], appending one record per completed epoch to
/// `history` so that the epochs before a failure survive it.
pub fn train_into(
    model: &mut MlpModel,
    data: &TrainSet,
    cfg: &TrainConfig,
    validate: Option<&Validator<'_>>,
    history: &mut Vec<EpochRecord>,
) -> Result<()> {
    cfg.validate()?;
    if model.head() != cfg.method.head() {
        return Err(Error::Contract(format!(
            "model head {:?} does not match method {}",
            model.head(),
            cfg.method.name()
        )));
    }
    if model.m() != data.template.m() || model.n() != data.template.n() {
        return Err(Error::dims("model outputs", data.template.m(), model.m()));
    }
    if model.input_dim() != data.features.ncols() {
        return Err(Error::dims("feature columns", model.input_dim(), data.features.ncols()));
    }
    let mut adam = AdamState::new(model, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, u64::MAX));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut scale = RunningScale::default();
    let mut mu = cfg.initial_mu();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_idx, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (features, rhs) = data.select(idx);
            let (out, cache) = model.forward(&features)?;
            let res = batch_step(model, &out, &data.template, &rhs, mu, cfg, &mut scale)?;
            if !res.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    mu,
                    max_abs_z: res.max_abs_z,
                });
            }
            loss_sum += res.loss * idx.len() as f64;
            let grads = model.backward(&res.grad, &cache)?;
            adam.step(model, &grads);
        }
        let (val_mean_gstar, val_max_gstar) = match validate {
            Some(f) => {
                let s = f(model)?;
                (Some(s.mean), Some(s.max))
            }
            None => (None, None),
        };
        history.push(EpochRecord {
            epoch,
            mu,
            loss: loss_sum / data.len() as f64,
            val_mean_gstar,
            val_max_gstar,
        });
        mu = mu_schedule_step(mu, cfg.mu_decay).max(cfg.mu_floor.min(mu));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn tiny_set() -> TrainSet {
        let template = LpInstance::new(
            dmatrix![1.0, 1.0, 0.0; 0.0, 1.0, 1.0],
            dvector![0.0, 0.0],
            dvector![1.0, 2.0, 0.5],
            dvector![0.0, 0.0, 0.0],
            dvector![2.0, 2.0, 2.0],
        )
        .unwrap();
        let features = DMatrix::from_fn(20, 2, |i, j| 0.5 + 0.05 * (i as f64) + 0.1 * j as f64);
        let rhs = features.clone();
        TrainSet::new(template, features, rhs).unwrap()
    }

    #[test]
    fn mu_schedule() {
        assert_eq!(mu_schedule_step(1.0, 0.99), 0.99);
        assert_eq!(mu_schedule_step(0.0, 0.99), 0.0);
        let mut mu = 1.0;
        for _ in 0..300 {
            mu = mu_schedule_step(mu, 0.99);
        }
        assert!((mu / 0.99f64.powi(300) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_leaves_model_unchanged() {
        let data = tiny_set();
        for method in [Method::S3l, Method::Dll, Method::Dc3, Method::Penalty] {
            let cfg = TrainConfig {
                method,
                epochs: 1,
                batch_size: 8,
                hidden: 6,
                adam: AdamConfig { lr: 0.0, ..Default::default() },
                ..Default::default()
            };
            let mut model = data.new_model(&cfg);
            let before = model.clone();
            let hist = train(&mut model, &data, &cfg, None).unwrap();
            assert_eq!(hist.len(), 1);
            let same = before.params().zip(model.params()).all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "{method:?}");
        }
    }

    #[test]
    fn history_records_decayed_mu_and_is_deterministic() {
        let data = tiny_set();
        let cfg = TrainConfig {
            epochs: 12,
            batch_size: 8,
            hidden: 6,
            ..Default::default()
        };
        let run = || {
            let mut model = data.new_model(&cfg);
            let h = train(&mut model, &data, &cfg, None).unwrap();
            (h, model)
        };
        let (h1, m1) = run();
        let (h2, m2) = run();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        for (k, rec) in h1.iter().enumerate() {
            assert!((rec.mu - 0.99f64.powi(k as i32)).abs() <= 1e-12 * rec.mu);
        }
    }

    #[test]
    fn dll_equals_s3l_with_zero_mu() {
        let data = tiny_set();
        let base = TrainConfig {
            epochs: 3,
            batch_size: 8,
            hidden: 6,
            ..Default::default()
        };
        let dll = TrainConfig { method: Method::Dll, ..base.clone() };
        let s3l0 = TrainConfig { mu0: 0.0, ..base };
        let mut a = data.new_model(&dll);
        let mut b = data.new_model(&s3l0);
        let ha = train(&mut a, &data, &dll, None).unwrap();
        let hb = train(&mut b, &data, &s3l0, None).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_head_rejected() {
        let data = tiny_set();
        let cfg = TrainConfig { hidden: 4, ..Default::default() };
        let mut model = data.new_model(&TrainConfig { method: Method::Penalty, ..cfg.clone() });
        assert!(train(&mut model, &data, &cfg, None).is_err());
        let bad = TrainConfig { mu_decay: 1.5, ..cfg };
        assert!(bad.validate().is_err());
    }
}

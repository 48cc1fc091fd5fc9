use serde::{Deserialize, Serialize};

use super::network::{Gradients, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for every parameter, in [`MlpModel::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel, cfg: AdamConfig) -> Self {
        let k = model.param_count();
        Self {
            cfg,
            m: vec![0.0; k],
            v: vec![0.0; k],
            step: 0,
        }
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let g = grads
            .layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()));
        for (((p, g), m), v) in model
            .params_mut()
            .zip(g)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::network::Head;

    #[test]
    fn first_step_moves_by_lr() {
        let mut model = MlpModel::new(2, 3, Head::DualY, 1, 1, 0);
        let before: Vec<f64> = model.params().copied().collect();
        let mut grads = model
            .backward(
                &crate::mlp::HeadGrad {
                    y: nalgebra::DMatrix::from_element(1, 1, 1.0),
                    zl: None,
                    zu: None,
                },
                &model.forward(&nalgebra::DMatrix::from_element(1, 2, 0.5)).unwrap().1,
            )
            .unwrap();
        for l in &mut grads.layers {
            l.w.fill(2.0);
            l.b.fill(-3.0);
        }
        let mut adam = AdamState::new(&model, AdamConfig::default());
        adam.step(&mut model, &grads);
        for (a, b) in before.iter().zip(model.params()) {
            let d = (b - a).abs();
            assert!((d - 1e-3).abs() < 1e-9, "moved {d}");
        }
    }
}

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::baselines::dc3_correct;
use crate::completion::{complete_batch, Regularizer};
use crate::error::{Error, Result};
use crate::lp::{DualPoint, LpInstance};

use super::network::MlpModel;
use super::train::{Method, TrainConfig};

/// A trained network together with the method that decides its inference
/// path.
#[derive(Debug, Clone, PartialEq)]
pub struct Proxy {
    pub model: MlpModel,
    pub config: TrainConfig,
}

impl Proxy {
    /// Dual points for every row of `features`. S3L and DLL complete `y`
    /// without regularization, DC3 completes and corrects `(y, zˡ)`, and
    /// Penalty returns the raw prediction.
    pub fn predict(
        &self,
        template: &LpInstance,
        features: &DMatrix<f64>,
    ) -> Result<Vec<DualPoint>> {
        if self.model.m() != template.m() || self.model.n() != template.n() {
            return Err(Error::dims("model output rows", template.m(), self.model.m()));
        }
        let out = self.model.predict(features)?;
        let rows = out.y.nrows();
        let y_row = |i: usize| out.y.row(i).transpose();
        match self.config.method {
            Method::S3l | Method::Dll => {
                let comps = complete_batch(template, &out.y, Regularizer::None)?;
                Ok(comps
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| c.into_dual_point(y_row(i)))
                    .collect())
            }
            Method::Dc3 => {
                let zl = out.zl.as_ref().ok_or_else(|| Error::Contract("DC3 needs a zl head".into()))?;
                (0..rows)
                    .into_par_iter()
                    .map(|i| {
                        let y = y_row(i);
                        let zl = zl.row(i).transpose();
                        Ok(dc3_correct(template, &y, &zl, &self.config.dc3)?.final_point())
                    })
                    .collect()
            }
            Method::Penalty => {
                let (zl, zu) = match (&out.zl, &out.zu) {
                    (Some(zl), Some(zu)) => (zl, zu),
                    _ => return Err(Error::Contract("Penalty needs zl and zu heads".into())),
                };
                Ok((0..rows)
                    .map(|i| DualPoint::new(y_row(i), zl.row(i).transpose(), zu.row(i).transpose()))
                    .collect())
            }
        }
    }
}

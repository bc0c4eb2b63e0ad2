//! Latent-factor models: NMF, truncated SVD, iterative SVD completion and
//! SGD matrix factorization.
//!
//! Every fitted model reconstructs a raw score for a `(user, item)` pair;
//! [`predict_rating`] clamps that score into the rating scale.

mod nmf;
mod persist;
mod sgd;
mod svd;
mod svd_iter;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::ratings::RatingScale;

pub use nmf::{nmf_fit, NmfModel, NmfParams};
pub use persist::{load_model, save_model, ModelFile, SplitParams, MODEL_FORMAT_VERSION};
pub use sgd::{sgd_mf_fit, SgdMfModel, SgdParams};
pub use svd::{svd_truncated, SvdModel};
pub use svd_iter::{svd_iterative, svd_iterative_with_fill, SvdIterParams, SvdIterResult};

/// Anything that reconstructs a score for a user-item pair.
pub trait RatingModel {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    /// Unclamped reconstruction. Indices must be in range.
    fn raw_score(&self, user: usize, item: usize) -> f64;
    /// One row of latent features per user.
    fn user_factors(&self) -> DenseMatrix;
}

/// Reconstruction at `(user, item)`, clamped into `scale`.
pub fn predict_rating<M: RatingModel + ?Sized>(model: &M, user: usize, item: usize, scale: RatingScale) -> Result<f64> {
    if user >= model.n_users() || item >= model.n_items() {
        return Err(Error::IndexOutOfRange { user, item, n_users: model.n_users(), n_items: model.n_items() });
    }
    Ok(scale.clamp(model.raw_score(user, item)))
}

/// A fitted model of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorModel {
    Nmf(NmfModel),
    Svd(SvdModel),
    SgdMf(SgdMfModel),
}

impl FactorModel {
    pub fn kind(&self) -> &'static str {
        match self {
            FactorModel::Nmf(_) => "nmf",
            FactorModel::Svd(_) => "svd",
            FactorModel::SgdMf(_) => "sgd_mf",
        }
    }

    fn inner(&self) -> &dyn RatingModel {
        match self {
            FactorModel::Nmf(m) => m,
            FactorModel::Svd(m) => m,
            FactorModel::SgdMf(m) => m,
        }
    }
}

impl RatingModel for FactorModel {
    fn n_users(&self) -> usize {
        self.inner().n_users()
    }

    fn n_items(&self) -> usize {
        self.inner().n_items()
    }

    fn raw_score(&self, user: usize, item: usize) -> f64 {
        self.inner().raw_score(user, item)
    }

    fn user_factors(&self) -> DenseMatrix {
        self.inner().user_factors()
    }
}

impl From<NmfModel> for FactorModel {
    fn from(m: NmfModel) -> Self {
        FactorModel::Nmf(m)
    }
}

impl From<SvdModel> for FactorModel {
    fn from(m: SvdModel) -> Self {
        FactorModel::Svd(m)
    }
}

impl From<SgdMfModel> for FactorModel {
    fn from(m: SgdMfModel) -> Self {
        FactorModel::SgdMf(m)
    }
}

fn check_finite(x: &DenseMatrix, what: &'static str) -> Result<()> {
    if x.as_slice().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scale(min: f64, max: f64) -> RatingScale {
        RatingScale::new(min, max).unwrap()
    }

    #[test]
    fn nmf_prediction_is_clamped() {
        let model = NmfModel::from_factors(
            DenseMatrix::from_rows(&[vec![2.0]]).unwrap(),
            DenseMatrix::from_rows(&[vec![1.0, 3.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(model.raw_score(0, 1), 6.0);
        assert_eq!(predict_rating(&model, 0, 1, scale(1.0, 5.0)).unwrap(), 5.0);
        assert_eq!(predict_rating(&model, 0, 0, scale(1.0, 5.0)).unwrap(), 2.0);
    }

    #[test]
    fn svd_prediction_reproduces_diagonal() {
        let x = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let model = svd_truncated(&x, 2).unwrap();
        let p = predict_rating(&model, 0, 0, scale(0.0, 5.0)).unwrap();
        assert!((p - 3.0).abs() < 1e-14);
    }

    #[test]
    fn svd_prediction_rank_one_by_hand() {
        // [[2,4],[1,2]] = 5 * (2,1)/sqrt5 * (1,2)/sqrt5
        let r5 = 5f64.sqrt();
        let model = SvdModel::from_factors(
            DenseMatrix::from_rows(&[vec![2.0 / r5], vec![1.0 / r5]]).unwrap(),
            vec![5.0],
            DenseMatrix::from_rows(&[vec![1.0 / r5, 2.0 / r5]]).unwrap(),
        )
        .unwrap();
        let p = predict_rating(&model, 0, 1, scale(0.0, 10.0)).unwrap();
        assert!((p - 4.0).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_index_is_an_error() {
        let model = NmfModel::from_factors(
            DenseMatrix::from_rows(&[vec![1.0]]).unwrap(),
            DenseMatrix::from_rows(&[vec![1.0]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(predict_rating(&model, 1, 0, scale(1.0, 5.0)), Err(Error::IndexOutOfRange { .. })));
        assert!(predict_rating(&model, 0, 1, scale(1.0, 5.0)).is_err());
    }
}

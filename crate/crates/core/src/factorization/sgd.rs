use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RatingModel;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::ratings::SparseRatingMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    /// Learning rate.
    pub alpha: f64,
    /// L2 regularization weight.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdParams {
    fn default() -> Self {
        Self { alpha: 0.005, lambda: 0.02, epochs: 50, seed: 0 }
    }
}

/// Biasless matrix factorization `R ≈ P Q` trained by SGD on observed entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdMfModel {
    pub components: usize,
    /// `n_users x r`
    pub p: DenseMatrix,
    /// `r x n_items`
    pub q: DenseMatrix,
    pub params: SgdParams,
}

impl RatingModel for SgdMfModel {
    fn n_users(&self) -> usize {
        self.p.n_rows()
    }

    fn n_items(&self) -> usize {
        self.q.n_cols()
    }

    fn raw_score(&self, user: usize, item: usize) -> f64 {
        self.p.row(user).dot(&self.q.as_array().column(item))
    }

    fn user_factors(&self) -> DenseMatrix {
        self.p.clone()
    }
}

/// Trains `P` and `Q` with plain regularized SGD.
///
/// Factors start at seeded uniform draws in `(0, 0.1]`; each epoch visits
/// the observed entries in a freshly shuffled order.
pub fn sgd_mf_fit(train: &SparseRatingMatrix, r: usize, params: SgdParams) -> Result<SgdMfModel> {
    let SgdParams { alpha, lambda, epochs, seed } = params;
    if r < 1 {
        return Err(Error::invalid("SGD-MF needs at least one component"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) || !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("alpha and lambda must be finite and non-negative, got {alpha}, {lambda}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = || 0.1 * (1.0 - rng.random::<f64>());
    let mut p = Array2::from_shape_simple_fn((train.n_users(), r), &mut init);
    // item factors row-per-item while training
    let mut q = Array2::from_shape_simple_fn((train.n_items(), r), &mut init);

    let entries: Vec<(usize, usize, f64)> = train.iter().collect();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let (u, i, rating) = entries[k];
            let mut pu = p.row_mut(u);
            let mut qi = q.row_mut(i);
            let err = rating - pu.dot(&qi);
            for f in 0..r {
                let (pf, qf) = (pu[f], qi[f]);
                pu[f] += alpha * (err * qf - lambda * pf);
                qi[f] += alpha * (err * pf - lambda * qf);
            }
        }
        if p.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
    }

    Ok(SgdMfModel {
        components: r,
        p: DenseMatrix::from_array_unchecked(p),
        q: DenseMatrix::from_array_unchecked(q.reversed_axes()),
        params,
    })
}

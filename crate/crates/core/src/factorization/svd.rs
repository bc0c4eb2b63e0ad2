use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{check_finite, RatingModel};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, SvdFactors};
use crate::ratings::FillStrategy;

/// Rank-`k` factors `U Σ Vᵀ`.
///
/// Singular values are non-negative and descending; the first clearly
/// nonzero entry of every `U` column is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdModel {
    pub k: usize,
    /// `n_users x k`
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    /// `k x n_items`
    pub vt: DenseMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill: Option<FillStrategy>,
}

impl SvdModel {
    pub fn from_factors(u: DenseMatrix, s: Vec<f64>, vt: DenseMatrix) -> Result<Self> {
        let k = s.len();
        if k == 0 || u.n_cols() != k || vt.n_rows() != k {
            return Err(Error::DimensionMismatch(format!(
                "U is {:?}, {} singular values, Vt is {:?}",
                u.shape(),
                k,
                vt.shape()
            )));
        }
        if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("singular values must be finite and non-negative"));
        }
        Ok(Self { k, u, s, vt, fill: None })
    }

    pub(crate) fn from_parts(f: SvdFactors) -> Self {
        Self {
            k: f.s.len(),
            u: DenseMatrix::from_array_unchecked(f.u),
            s: f.s.to_vec(),
            vt: DenseMatrix::from_array_unchecked(f.vt),
            fill: None,
        }
    }

    /// `U · diag(S) · Vt` as a dense array.
    pub fn reconstruction(&self) -> Array2<f64> {
        let s = Array1::from(self.s.clone());
        (self.u.as_array() * &s).dot(self.vt.as_array())
    }
}

impl RatingModel for SvdModel {
    fn n_users(&self) -> usize {
        self.u.n_rows()
    }

    fn n_items(&self) -> usize {
        self.vt.n_cols()
    }

    fn raw_score(&self, user: usize, item: usize) -> f64 {
        let u = self.u.row(user);
        let vt = self.vt.as_array();
        (0..self.k).map(|j| u[j] * self.s[j] * vt[[j, item]]).sum()
    }

    /// Rows of `U · diag(S)`, so distances weigh components by the variance
    /// they carry.
    fn user_factors(&self) -> DenseMatrix {
        let s = Array1::from(self.s.clone());
        DenseMatrix::from_array_unchecked(self.u.as_array() * &s)
    }
}

/// Best rank-`k` approximation of `x` in the Frobenius norm.
pub fn svd_truncated(x: &DenseMatrix, k: usize) -> Result<SvdModel> {
    svd_truncated_warm(x, k, None)
}

pub(crate) fn svd_truncated_warm(x: &DenseMatrix, k: usize, warm: Option<&SvdModel>) -> Result<SvdModel> {
    check_finite(x, "SVD input")?;
    let (n, m) = x.shape();
    if k < 1 || k > n.min(m) {
        return Err(Error::invalid(format!("SVD rank {k} outside 1..={}", n.min(m))));
    }
    let basis = warm.map(|w| {
        if linalg::warm_side_is_left(x.shape()) {
            w.u.as_array().clone()
        } else {
            w.vt.as_array().t().to_owned()
        }
    });
    let f = linalg::truncated_svd(x.view(), k, basis.as_ref());
    Ok(SvdModel::from_parts(f))
}

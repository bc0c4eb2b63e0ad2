//! Row-major dense matrix used for filled rating matrices and factor blocks.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A finite, row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix(Array2<f64>);

impl DenseMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                n_rows,
                n_cols
            )));
        }
        let array =
            Array2::from_shape_vec((n_rows, n_cols), values).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::from_array(array)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    pub fn from_array(array: Array2<f64>) -> Result<Self> {
        if array.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense matrix"));
        }
        Ok(Self(array.as_standard_layout().into_owned()))
    }

    /// Wraps an array the caller already knows to be finite.
    pub(crate) fn from_array_unchecked(array: Array2<f64>) -> Self {
        debug_assert!(array.iter().all(|v| v.is_finite()));
        Self(array.as_standard_layout().into_owned())
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self(Array2::zeros((n_rows, n_cols)))
    }

    pub fn n_rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[[row, col]]
    }

    pub fn row(&self, row: usize) -> ArrayView1<'_, f64> {
        self.0.row(row)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    /// Row-major values.
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("DenseMatrix is always in standard layout")
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Serialize, Deserialize)]
struct DenseRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Serialize for DenseMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DenseRepr { rows: self.n_rows(), cols: self.n_cols(), data: self.as_slice().to_vec() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = DenseRepr::deserialize(deserializer)?;
        DenseMatrix::new(repr.rows, repr.cols, repr.data).map_err(serde::de::Error::custom)
    }
}

//! Lee-Seung multiplicative updates for `X ≈ W H` under the squared
//! Frobenius loss.
//!
//! Each outer iteration updates `H` then `W`. The expensive products
//! (`WᵀX`, `XHᵀ`) are computed once per half-step and reused for
//! `inner_updates` multiplicative steps, which only touch the small
//! `r x r` Gram matrices. Every individual step is an ordinary
//! multiplicative update, so the objective never increases.

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_finite, RatingModel};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::ratings::FillStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmfParams {
    /// Outer iterations (one `H` half-step and one `W` half-step each).
    pub max_iterations: usize,
    /// Stop once `(f_prev - f) / f_prev` drops below this.
    pub rel_tolerance: f64,
    /// Multiplicative steps per half-step.
    pub inner_updates: usize,
    pub seed: u64,
}

impl Default for NmfParams {
    fn default() -> Self {
        Self { max_iterations: 400, rel_tolerance: 1e-6, inner_updates: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfModel {
    pub components: usize,
    /// `n_users x r`
    pub w: DenseMatrix,
    /// `r x n_items`
    pub h: DenseMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill: Option<FillStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<NmfParams>,
    /// Squared Frobenius objective after each outer iteration.
    #[serde(default)]
    pub objective_trace: Vec<f64>,
}

impl NmfModel {
    /// Wraps pre-computed non-negative factors.
    pub fn from_factors(w: DenseMatrix, h: DenseMatrix) -> Result<Self> {
        if w.n_cols() != h.n_rows() || w.n_cols() == 0 {
            return Err(Error::DimensionMismatch(format!("W is {:?}, H is {:?}", w.shape(), h.shape())));
        }
        if w.as_slice().iter().chain(h.as_slice()).any(|v| *v < 0.0) {
            return Err(Error::invalid("NMF factors must be non-negative"));
        }
        Ok(Self { components: w.n_cols(), w, h, fill: None, params: None, objective_trace: Vec::new() })
    }

    pub fn iterations(&self) -> usize {
        self.objective_trace.len()
    }

    pub fn reconstruction(&self) -> Array2<f64> {
        self.w.as_array().dot(self.h.as_array())
    }
}

impl RatingModel for NmfModel {
    fn n_users(&self) -> usize {
        self.w.n_rows()
    }

    fn n_items(&self) -> usize {
        self.h.n_cols()
    }

    fn raw_score(&self, user: usize, item: usize) -> f64 {
        self.w.row(user).dot(&self.h.as_array().column(item))
    }

    fn user_factors(&self) -> DenseMatrix {
        self.w.clone()
    }
}

/// Fits `x ≈ W H` with `W, H ≥ 0` of inner dimension `r`.
///
/// Factors start from seeded uniform draws in `(0, 1]`.
pub fn nmf_fit(x: &DenseMatrix, r: usize, params: NmfParams) -> Result<NmfModel> {
    check_finite(x, "NMF input")?;
    let (n, m) = x.shape();
    if r < 1 || r > n.min(m) {
        return Err(Error::invalid(format!("NMF rank {r} outside 1..={}", n.min(m))));
    }
    if params.max_iterations < 1 || params.inner_updates < 1 {
        return Err(Error::invalid("NMF needs at least one iteration and one inner update"));
    }
    if x.as_slice().iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("NMF input has a negative entry"));
    }

    let x = x.as_array();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut uniform = || 1.0 - rng.random::<f64>();
    let mut w = Array2::from_shape_simple_fn((n, r), &mut uniform);
    let mut h = Array2::from_shape_simple_fn((r, m), &mut uniform);

    let x_sq: f64 = x.iter().map(|v| v * v).sum();
    let mut trace = Vec::new();
    for _ in 0..params.max_iterations {
        let wtx = w.t().dot(x);
        let wtw = w.t().dot(&w);
        for _ in 0..params.inner_updates {
            let den = wtw.dot(&h);
            multiplicative_step(&mut h, &wtx, &den);
        }

        let xht = x.dot(&h.t());
        let hht = h.dot(&h.t());
        for _ in 0..params.inner_updates {
            let den = w.dot(&hht);
            multiplicative_step(&mut w, &xht, &den);
        }

        // ‖X − WH‖² = ‖X‖² − 2⟨W, XHᵀ⟩ + ⟨WᵀW, HHᵀ⟩
        let wtw = w.t().dot(&w);
        let cross: f64 = Zip::from(&w).and(&xht).fold(0.0, |acc, a, b| acc + a * b);
        let quad: f64 = Zip::from(&wtw).and(&hht).fold(0.0, |acc, a, b| acc + a * b);
        let objective = (x_sq - 2.0 * cross + quad).max(0.0);

        let previous = trace.last().copied();
        trace.push(objective);
        if objective == 0.0 {
            break;
        }
        if let Some(prev) = previous {
            if prev - objective < params.rel_tolerance * prev {
                break;
            }
        }
    }

    if w.iter().chain(h.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("NMF factors"));
    }
    Ok(NmfModel {
        components: r,
        w: DenseMatrix::from_array_unchecked(w),
        h: DenseMatrix::from_array_unchecked(h),
        fill: None,
        params: Some(params),
        objective_trace: trace,
    })
}

fn multiplicative_step(factor: &mut Array2<f64>, num: &Array2<f64>, den: &Array2<f64>) {
    Zip::from(factor).and(num).and(den).for_each(|f, &a, &b| {
        // b == 0 forces a == 0 or f == 0, so leaving f is exact
        if b > 0.0 {
            *f *= a / b;
        }
    });
}

//! Iterative SVD completion: fill, factor, overwrite the missing cells with
//! the rank-`k` reconstruction, repeat until the missing cells settle.

use ndarray::{ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::svd::{svd_truncated_warm, SvdModel};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::ratings::{impute_dense, FillStrategy, SparseRatingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvdIterParams {
    /// Stop once the RMS change over missing cells drops below this.
    pub threshold: f64,
    pub max_iterations: usize,
}

impl Default for SvdIterParams {
    fn default() -> Self {
        Self { threshold: 1e-4, max_iterations: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct SvdIterResult {
    /// Factorization of the last filled matrix.
    pub model: SvdModel,
    /// Observed cells hold the original ratings; missing cells hold the
    /// final reconstruction.
    pub completed: DenseMatrix,
    pub iterations: usize,
    /// RMS change over missing cells at each iteration.
    pub delta_trace: Vec<f64>,
    /// False when `max_iterations` ran out before the threshold was met.
    pub converged: bool,
}

pub fn svd_iterative(
    m: &SparseRatingMatrix,
    initial_fill: FillStrategy,
    k: usize,
    threshold: f64,
    max_iterations: usize,
) -> Result<SvdIterResult> {
    let initial = impute_dense(m, initial_fill)?;
    let mut result = svd_iterative_with_fill(m, initial, k, threshold, max_iterations, |_, _| {})?;
    result.model.fill = Some(initial_fill);
    Ok(result)
}

/// Runs the completion loop from an explicit starting matrix.
///
/// `observe` is called after every iteration with the iteration number and
/// the current completed matrix.
pub fn svd_iterative_with_fill<F>(
    m: &SparseRatingMatrix,
    initial: DenseMatrix,
    k: usize,
    threshold: f64,
    max_iterations: usize,
    mut observe: F,
) -> Result<SvdIterResult>
where
    F: FnMut(usize, ArrayView2<'_, f64>),
{
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::invalid(format!("threshold must be positive, got {threshold}")));
    }
    if max_iterations < 1 {
        return Err(Error::invalid("max_iterations must be at least 1"));
    }
    if initial.shape() != (m.n_users(), m.n_items()) {
        return Err(Error::DimensionMismatch(format!(
            "initial fill is {:?}, matrix is {}x{}",
            initial.shape(),
            m.n_users(),
            m.n_items()
        )));
    }

    let n_items = m.n_items();
    let mut observed = vec![false; m.n_users() * n_items];
    for (u, i, _) in m.iter() {
        observed[u * n_items + i] = true;
    }
    let n_missing = observed.iter().filter(|o| !**o).count();

    let mut current = initial.into_array();
    let mut model: Option<SvdModel> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    for iteration in 1..=max_iterations {
        let filled = DenseMatrix::from_array_unchecked(current);
        let fit = svd_truncated_warm(&filled, k, model.as_ref())?;
        current = filled.into_array();
        let recon = fit.reconstruction();

        let mut sq_change = 0.0;
        Zip::from(&mut current)
            .and(&recon)
            .and(&ArrayView2::from_shape(recon.dim(), &observed[..]).expect("mask shape"))
            .for_each(|cell, &r, &obs| {
                if !obs {
                    let d = r - *cell;
                    sq_change += d * d;
                    *cell = r;
                }
            });
        let delta = if n_missing == 0 { 0.0 } else { (sq_change / n_missing as f64).sqrt() };
        trace.push(delta);
        model = Some(fit);
        observe(iteration, current.view());
        if delta < threshold {
            converged = true;
            break;
        }
    }

    let iterations = trace.len();
    Ok(SvdIterResult {
        model: model.expect("at least one iteration ran"),
        completed: DenseMatrix::from_array_unchecked(current),
        iterations,
        delta_trace: trace,
        converged,
    })
}

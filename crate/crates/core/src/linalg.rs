//! Dense SVD kernels.
//!
//! Two routes share one output shape:
//!
//! * one-sided (Hestenes) Jacobi on the whole matrix, used for small inputs
//!   and whenever the requested rank is a large fraction of the short side;
//! * block subspace iteration on the Gram matrix of the short side, with a
//!   Rayleigh-Ritz step every iteration and a final Jacobi SVD of the
//!   projected block `Q^T X`, used for rating-sized inputs where only the
//!   leading triplets are needed.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Thin SVD factors, singular values descending.
#[derive(Debug, Clone)]
pub(crate) struct SvdFactors {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

impl SvdFactors {
    pub fn truncate(self, k: usize) -> SvdFactors {
        SvdFactors {
            u: self.u.slice(s![.., ..k]).to_owned(),
            s: self.s.slice(s![..k]).to_owned(),
            vt: self.vt.slice(s![..k, ..]).to_owned(),
        }
    }

    /// Flips signs so that the first clearly nonzero entry of every `u` column
    /// is positive. The matching `vt` row flips with it.
    pub fn normalize_signs(&mut self) {
        for j in 0..self.u.ncols() {
            let col = self.u.column(j);
            let pivot = col.iter().copied().find(|v| v.abs() > SIGN_PIVOT);
            if pivot.is_some_and(|v| v < 0.0) {
                self.u.column_mut(j).mapv_inplace(|v| -v);
                self.vt.row_mut(j).mapv_inplace(|v| -v);
            }
        }
    }
}

const SIGN_PIVOT: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 80;
const SUBSPACE_MAX_ITERS: usize = 2000;
const SUBSPACE_TOL: f64 = 1e-12;
/// Short side at or below which the whole-matrix Jacobi route is used.
const SMALL_SIDE: usize = 96;

/// Leading `k` singular triplets of `x`.
///
/// `warm` optionally seeds the subspace iteration with an approximate basis
/// for the short side (rows of `x` if `x` is wide, columns otherwise).
pub(crate) fn truncated_svd(x: ArrayView2<'_, f64>, k: usize, warm: Option<&Array2<f64>>) -> SvdFactors {
    let (m, n) = x.dim();
    let short = m.min(n);
    debug_assert!(k >= 1 && k <= short);
    let block = block_size(k, short);
    let mut f = if short <= SMALL_SIDE || block * 2 >= short {
        jacobi_svd(x).truncate(k)
    } else {
        subspace_svd(x, k, block, warm)
    };
    f.normalize_signs();
    f
}

fn block_size(k: usize, short: usize) -> usize {
    (k + (k / 2).max(10)).min(short)
}

/// Whether the warm-start basis for `x` is its left (`u`) side.
pub(crate) fn warm_side_is_left(shape: (usize, usize)) -> bool {
    shape.0 <= shape.1
}

/// Full thin SVD by one-sided Jacobi rotations.
pub(crate) fn jacobi_svd(x: ArrayView2<'_, f64>) -> SvdFactors {
    let (m, n) = x.dim();
    if m < n {
        let t = jacobi_svd(x.t());
        return SvdFactors { u: t.vt.reversed_axes(), s: t.s, vt: t.u.reversed_axes() };
    }
    // tall: orthogonalise the n columns of x
    let mut cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let eps = f64::EPSILON * (m as f64).sqrt().max(1.0);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (a, b) = (&cols[p], &cols[q]);
                    (dot(a, a), dot(b, b), dot(a, b))
                };
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate_pair(&mut cols, p, q, c, sn);
                rotate_pair(&mut vcols, p, q, c, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let mut u = Array2::zeros((m, n));
    let mut s = Array1::zeros(n);
    let mut vt = Array2::zeros((n, n));
    let mut missing = Vec::new();
    for (j, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s[j] = sigma;
        for (r, v) in vcols[src].iter().enumerate() {
            vt[[j, r]] = *v;
        }
        if sigma > 0.0 && sigma.is_finite() {
            for (r, v) in cols[src].iter().enumerate() {
                u[[r, j]] = v / sigma;
            }
        } else {
            missing.push(j);
        }
    }
    complete_basis(&mut u, &missing);
    SvdFactors { u, s, vt }
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (a, b) = (&mut left[p], &mut right[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every
/// other column, drawn from the standard basis.
fn complete_basis(u: &mut Array2<f64>, missing: &[usize]) {
    let m = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|c| !missing.contains(c)).collect();
    for &j in missing {
        let mut best = Array1::zeros(m);
        let mut best_norm = 0.0;
        for e in 0..m {
            let mut v = Array1::zeros(m);
            v[e] = 1.0;
            for _ in 0..2 {
                for &c in &filled {
                    let proj = u.column(c).dot(&v);
                    v.scaled_add(-proj, &u.column(c));
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm > best_norm {
                best_norm = norm;
                best = v;
            }
            if best_norm > 0.5 {
                break;
            }
        }
        u.column_mut(j).assign(&(best / best_norm));
        filled.push(j);
    }
}

/// Orthonormalises the columns of `q` in place (two passes of classical
/// Gram-Schmidt). Columns that collapse are replaced by seeded random
/// directions so the block keeps full rank.
fn orthonormalize(q: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let (n, b) = q.dim();
    for j in 0..b {
        loop {
            let before = q.column(j).dot(&q.column(j)).sqrt();
            if j > 0 {
                for _ in 0..2 {
                    let basis = q.slice(s![.., ..j]).to_owned();
                    let coeffs = basis.t().dot(&q.column(j));
                    let correction = basis.dot(&coeffs);
                    let mut col = q.column_mut(j);
                    col -= &correction;
                }
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            if norm > 1e-10 * before && norm > 0.0 {
                q.column_mut(j).mapv_inplace(|v| v / norm);
                break;
            }
            for r in 0..n {
                q[[r, j]] = rng.random::<f64>() - 0.5;
            }
        }
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi; eigenvalues descending,
/// eigenvectors in the columns of the returned matrix.
pub(crate) fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = Array2::eye(n);
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).map(|(p, q)| a[[p, q]] * a[[p, q]]).sum();
        let diag: f64 = (0..n).map(|p| a[[p, p]] * a[[p, p]]).sum();
        if off <= f64::EPSILON * f64::EPSILON * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    (values, vectors)
}

fn subspace_svd(x: ArrayView2<'_, f64>, k: usize, block: usize, warm: Option<&Array2<f64>>) -> SvdFactors {
    let left = warm_side_is_left(x.dim());
    // Gram matrix of the short side
    let gram = if left { x.dot(&x.t()) } else { x.t().dot(&x) };
    let dim = gram.nrows();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_5bd ^ ((dim as u64) << 20) ^ block as u64);
    let mut q = Array2::from_shape_fn((dim, block), |_| rng.random::<f64>() - 0.5);
    if let Some(w) = warm.filter(|w| w.nrows() == dim) {
        let cols = w.ncols().min(block);
        q.slice_mut(s![.., ..cols]).assign(&w.slice(s![.., ..cols]));
    }
    orthonormalize(&mut q, &mut rng);

    for _ in 0..SUBSPACE_MAX_ITERS {
        let z = gram.dot(&q);
        let t = q.t().dot(&z);
        let t = (&t + &t.t()) * 0.5;
        let (theta, y) = symmetric_eigen(&t);
        let q_ritz = q.dot(&y);
        let z_ritz = z.dot(&y);
        let scale = theta[0].abs().max(f64::MIN_POSITIVE);
        let worst = (0..k)
            .map(|i| {
                let r = &z_ritz.column(i) - &(&q_ritz.column(i) * theta[i]);
                r.dot(&r).sqrt()
            })
            .fold(0.0, f64::max);
        if worst <= SUBSPACE_TOL * scale {
            q = q_ritz;
            break;
        }
        q = z_ritz;
        orthonormalize(&mut q, &mut rng);
    }

    // Rayleigh-Ritz on x itself for accurate singular values
    if left {
        let b = q.t().dot(&x);
        let f = jacobi_svd(b.view());
        SvdFactors { u: q.dot(&f.u), s: f.s, vt: f.vt }.truncate(k)
    } else {
        let b = x.dot(&q);
        let f = jacobi_svd(b.view());
        SvdFactors { u: f.u, s: f.s, vt: f.vt.dot(&q.t()) }.truncate(k)
    }
}

//! K-Means segmentation of users over latent factor rows.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::factorization::RatingModel;
use crate::ratings::SparseRatingMatrix;
use crate::seed::mix_seed;

/// One feature row per user.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFeatures(DenseMatrix);

impl LatentFeatures {
    pub fn new(rows: DenseMatrix) -> Self {
        Self(rows)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        DenseMatrix::from_rows(rows).map(Self)
    }

    pub fn n_users(&self) -> usize {
        self.0.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.0.n_cols()
    }

    pub fn row(&self, user: usize) -> &[f64] {
        let d = self.dim();
        &self.0.as_slice()[user * d..(user + 1) * d]
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

/// NMF: rows of `W`. SVD: rows of `U · diag(S)`. SGD-MF: rows of `P`.
pub fn user_latent_features<M: RatingModel + ?Sized>(model: &M) -> LatentFeatures {
    LatentFeatures(model.user_factors())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    /// `k x dim`
    pub centroids: DenseMatrix,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Restart that produced this model.
    pub restart: usize,
    /// Inertia after every assignment pass of the winning run.
    pub inertia_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.centroids.n_cols()
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        let d = self.dim();
        &self.centroids.as_slice()[c * d..(c + 1) * d]
    }

    /// Users assigned to cluster `c`.
    pub fn members(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments.iter().enumerate().filter(move |(_, &a)| a == c).map(|(u, _)| u)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid and its squared distance; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm with `restarts` seeded random initialisations.
///
/// Each run starts from `k` distinct user rows and alternates assignment and
/// mean updates until no assignment changes. A cluster that empties takes
/// over the point farthest from its own centroid. The lowest-inertia run
/// wins; ties go to the earliest restart.
pub fn kmeans_fit(
    features: &LatentFeatures,
    k: usize,
    seed: u64,
    max_iterations: usize,
    restarts: usize,
) -> Result<ClusterModel> {
    let runs = kmeans_runs(features, k, seed, max_iterations, restarts)?;
    Ok(runs.into_iter().reduce(|best, run| if run.inertia < best.inertia { run } else { best }).expect("restarts >= 1"))
}

/// Every restart of [`kmeans_fit`], in restart order.
pub fn kmeans_runs(
    features: &LatentFeatures,
    k: usize,
    seed: u64,
    max_iterations: usize,
    restarts: usize,
) -> Result<Vec<ClusterModel>> {
    let n = features.n_users();
    if k < 1 || k > n {
        return Err(Error::invalid(format!("cluster count {k} outside 1..={n}")));
    }
    if max_iterations < 1 || restarts < 1 {
        return Err(Error::invalid("max_iterations and restarts must be at least 1"));
    }
    Ok((0..restarts).into_par_iter().map(|restart| lloyd(features, k, seed, restart, max_iterations)).collect())
}

fn lloyd(features: &LatentFeatures, k: usize, seed: u64, restart: usize, max_iterations: usize) -> ClusterModel {
    let n = features.n_users();
    let dim = features.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[restart as u64]));
    let mut centroids = Vec::with_capacity(k * dim);
    for idx in rand::seq::index::sample(&mut rng, n, k).iter() {
        centroids.extend_from_slice(features.row(idx));
    }

    let mut assignments = vec![usize::MAX; n];
    let mut distances = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        for u in 0..n {
            let (c, d) = nearest(features.row(u), &centroids, dim);
            changed |= assignments[u] != c;
            assignments[u] = c;
            distances[u] = d;
            inertia += d;
        }
        trace.push(inertia);
        if !changed {
            converged = true;
            break;
        }
        update_centroids(features, k, &mut assignments, &mut centroids);
    }

    if !converged {
        // capped: leave every user on its nearest final centroid
        let mut inertia = 0.0;
        for u in 0..n {
            let (c, d) = nearest(features.row(u), &centroids, dim);
            assignments[u] = c;
            inertia += d;
        }
        trace.push(inertia);
    }

    ClusterModel {
        k,
        centroids: DenseMatrix::new(k, dim, centroids).expect("finite centroids from finite features"),
        assignments,
        inertia: *trace.last().expect("at least one pass"),
        iterations,
        seed,
        restart,
        inertia_trace: trace,
    }
}

fn cluster_mean(features: &LatentFeatures, assignments: &[usize], c: usize, out: &mut [f64]) -> usize {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut count = 0;
    for (u, _) in assignments.iter().enumerate().filter(|(_, &a)| a == c) {
        for (o, x) in out.iter_mut().zip(features.row(u)) {
            *o += x;
        }
        count += 1;
    }
    if count > 0 {
        out.iter_mut().for_each(|v| *v /= count as f64);
    }
    count
}

fn update_centroids(features: &LatentFeatures, k: usize, assignments: &mut [usize], centroids: &mut [f64]) {
    let dim = features.dim();
    let mut sizes = vec![0usize; k];
    for c in 0..k {
        sizes[c] = cluster_mean(features, assignments, c, &mut centroids[c * dim..(c + 1) * dim]);
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        // farthest point among clusters that can spare one
        let mut donor: Option<(usize, f64)> = None;
        for (u, &c) in assignments.iter().enumerate() {
            if sizes[c] < 2 {
                continue;
            }
            let d = sq_dist(features.row(u), &centroids[c * dim..(c + 1) * dim]);
            if donor.is_none_or(|(_, best)| d > best) {
                donor = Some((u, d));
            }
        }
        let (u, _) = donor.expect("some cluster has two members while one is empty");
        let old = assignments[u];
        assignments[u] = empty;
        sizes[old] -= 1;
        sizes[empty] = 1;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(features.row(u));
        cluster_mean(features, assignments, old, &mut centroids[old * dim..(old + 1) * dim]);
    }
}

/// Nearest centroid for each point; ties go to the lowest index.
pub fn assign_to_clusters(model: &ClusterModel, points: &LatentFeatures) -> Result<Vec<usize>> {
    if points.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "points have dimension {}, centroids {}",
            points.dim(),
            model.dim()
        )));
    }
    Ok((0..points.n_users()).map(|u| nearest(points.row(u), model.centroids.as_slice(), model.dim()).0).collect())
}

/// Writes `user_id,cluster`, one row per user in dense index order.
pub fn write_cluster_csv<W: Write>(model: &ClusterModel, m: &SparseRatingMatrix, writer: W) -> Result<()> {
    if model.assignments.len() != m.n_users() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignments for {} users",
            model.assignments.len(),
            m.n_users()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "cluster"])?;
    for (u, c) in model.assignments.iter().enumerate() {
        w.write_record([m.users().ids()[u].as_str(), &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `user_id,cluster` file back into dense-index assignments.
pub fn read_cluster_csv<R: std::io::Read>(reader: R, m: &SparseRatingMatrix) -> Result<Vec<usize>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut assignments = vec![None; m.n_users()];
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let line = line as u64 + 2;
        let bad = |message: String| Error::Parse { line, message };
        if record.len() < 2 {
            return Err(bad("expected user_id,cluster".into()));
        }
        let user = m.users().index_of(&record[0]).ok_or_else(|| Error::UnknownUser(record[0].to_string()))?;
        let cluster: usize =
            record[1].trim().parse().map_err(|_| bad(format!("cluster {:?} is not an index", &record[1])))?;
        assignments[user] = Some(cluster);
    }
    assignments
        .into_iter()
        .enumerate()
        .map(|(u, a)| a.ok_or_else(|| Error::invalid(format!("user {:?} has no cluster", m.users().ids()[u]))))
        .collect()
}

//! Ranked top-N lists from a factor model or from cluster peers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::factorization::{predict_rating, RatingModel};
use crate::ratings::{RatingScale, SparseRatingMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub item_raw: String,
    #[serde(skip)]
    pub item_index: usize,
    pub score: f64,
}

fn user_index(m: &SparseRatingMatrix, user: &str) -> Result<usize> {
    m.users().index_of(user).ok_or_else(|| Error::UnknownUser(user.to_string()))
}

/// Highest scores first; equal scores by ascending item index.
fn rank(m: &SparseRatingMatrix, mut scored: Vec<(usize, f64)>, n: usize) -> Vec<Recommendation> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(n)
        .map(|(i, score)| Recommendation { item_raw: m.items().ids()[i].clone(), item_index: i, score })
        .collect()
}

/// Items the user has rated, as a membership mask over item indices.
fn seen_mask(m: &SparseRatingMatrix, u: usize) -> Vec<bool> {
    let mut seen = vec![false; m.n_items()];
    for &i in m.row(u).0 {
        seen[i] = true;
    }
    seen
}

/// The `n` best-scoring items for `user` by clamped model prediction.
pub fn top_n<M: RatingModel + ?Sized>(
    model: &M,
    m: &SparseRatingMatrix,
    user: &str,
    n: usize,
    exclude_seen: bool,
    scale: RatingScale,
) -> Result<Vec<Recommendation>> {
    let u = user_index(m, user)?;
    if model.n_users() != m.n_users() || model.n_items() != m.n_items() {
        return Err(Error::DimensionMismatch(format!(
            "model covers {}x{}, ratings are {}x{}",
            model.n_users(),
            model.n_items(),
            m.n_users(),
            m.n_items()
        )));
    }
    let seen = seen_mask(m, u);
    let scored = (0..m.n_items())
        .filter(|&i| !(exclude_seen && seen[i]))
        .map(|i| predict_rating(model, u, i, scale).map(|s| (i, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank(m, scored, n))
}

/// Peer-based ranking from a fitted cluster model.
pub fn cluster_top_n(
    cm: &ClusterModel,
    m: &SparseRatingMatrix,
    user: &str,
    n: usize,
    min_support: usize,
) -> Result<Vec<Recommendation>> {
    cluster_top_n_from_assignments(&cm.assignments, m, user, n, min_support)
}

/// Ranks the user's unseen items by their mean rating inside the user's
/// cluster. Items rated by fewer than `min_support` cluster members score
/// their global mean instead; items nobody rated score the global mean of
/// all ratings.
pub fn cluster_top_n_from_assignments(
    assignments: &[usize],
    m: &SparseRatingMatrix,
    user: &str,
    n: usize,
    min_support: usize,
) -> Result<Vec<Recommendation>> {
    let u = user_index(m, user)?;
    if assignments.len() != m.n_users() {
        return Err(Error::DimensionMismatch(format!("{} assignments for {} users", assignments.len(), m.n_users())));
    }
    let cluster = assignments[u];
    let mut sums = vec![0.0; m.n_items()];
    let mut counts = vec![0usize; m.n_items()];
    for (peer, _) in assignments.iter().enumerate().filter(|(_, &c)| c == cluster) {
        let (items, values) = m.row(peer);
        for (&i, &v) in items.iter().zip(values) {
            sums[i] += v;
            counts[i] += 1;
        }
    }
    let item_means = m.item_means();
    let global = m.global_mean().ok_or(Error::NoObservations)?;
    let seen = seen_mask(m, u);
    let scored = (0..m.n_items())
        .filter(|&i| !seen[i])
        .map(|i| {
            let score = if counts[i] >= min_support.max(1) {
                sums[i] / counts[i] as f64
            } else {
                item_means[i].unwrap_or(global)
            };
            (i, score)
        })
        .collect();
    Ok(rank(m, scored, n))
}

/// Writes `rank,item_id,score` with ranks from 1.
pub fn write_recommendations_csv<W: Write>(recs: &[Recommendation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "item_id", "score"])?;
    for (k, r) in recs.iter().enumerate() {
        w.write_record([(k + 1).to_string().as_str(), &r.item_raw, &format!("{:.6}", r.score)])?;
    }
    w.flush()?;
    Ok(())
}

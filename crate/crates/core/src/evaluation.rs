//! Hold-out splits, error metrics and the algorithm/fill/rank sweep.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{
    nmf_fit, predict_rating, sgd_mf_fit, svd_iterative, svd_truncated, FactorModel, NmfParams, RatingModel, SgdParams,
    SvdIterParams,
};
use crate::ratings::{impute_dense, FillStrategy, RatingScale, SparseRatingMatrix};
use crate::seed::mix_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSplit {
    /// Same user and item index spaces as the source matrix.
    pub train: SparseRatingMatrix,
    /// `(user, item, rating)` in CSR order of the source.
    pub test: Vec<(usize, usize, f64)>,
    pub fraction: f64,
    pub seed: u64,
}

/// Moves a seeded uniform sample of `round(fraction * nnz)` observed entries
/// into the test set.
pub fn split_ratings(m: &SparseRatingMatrix, fraction: f64, seed: u64) -> Result<EvalSplit> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Range { value: fraction, domain: "split fraction [0, 1)".into() });
    }
    let entries: Vec<(usize, usize, f64)> = m.iter().collect();
    let n_test = (fraction * entries.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; entries.len()];
    for k in rand::seq::index::sample(&mut rng, entries.len(), n_test).iter() {
        in_test[k] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = entries.into_iter().zip(&in_test).partition(|(_, &t)| t);
    let test: Vec<_> = test.into_iter().map(|(e, _)| e).collect();
    let train: Vec<_> = train.into_iter().map(|(e, _)| e).collect();
    Ok(EvalSplit { train: m.with_entries(&train)?, test, fraction, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub rmse: f64,
    pub mae: f64,
}

pub fn error_metrics(predicted: &[f64], actual: &[f64]) -> Result<MetricPair> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions for {} ratings", predicted.len(), actual.len())));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        if !p.is_finite() || !a.is_finite() {
            return Err(Error::NonFinite("metric input"));
        }
        let d = p - a;
        sq += d * d;
        abs += d.abs();
    }
    let n = predicted.len() as f64;
    let rmse = (sq / n).sqrt();
    // rounding can push mae a hair above rmse when all errors are equal
    let mae = (abs / n).min(rmse);
    Ok(MetricPair { rmse, mae })
}

/// Scores every test entry with clamped predictions in rating units.
pub fn evaluate_model<M: RatingModel + ?Sized>(model: &M, split: &EvalSplit, scale: RatingScale) -> Result<MetricPair> {
    if split.test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let predicted =
        split.test.iter().map(|&(u, i, _)| predict_rating(model, u, i, scale)).collect::<Result<Vec<_>>>()?;
    let actual: Vec<f64> = split.test.iter().map(|t| t.2).collect();
    error_metrics(&predicted, &actual)
}

/// Sweep algorithms, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Nmf,
    SvdT,
    SvdI,
    SgdMf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Nmf, Algorithm::SvdT, Algorithm::SvdI, Algorithm::SgdMf];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Nmf => "nmf",
            Algorithm::SvdT => "svd_t",
            Algorithm::SvdI => "svd_i",
            Algorithm::SgdMf => "sgd_mf",
        }
    }

    fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}; expected nmf, svd_t, svd_i or sgd_mf")))
    }
}

/// Hyperparameters for every algorithm. Seeds inside are overridden per fit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitParams {
    pub nmf: NmfParams,
    pub svd_iter: SvdIterParams,
    pub sgd: SgdParams,
}

/// Fits one model on `train`. Dense algorithms see `impute_dense(train, fill)`;
/// SVD-I starts from that fill; SGD-MF ignores it.
pub fn fit_model(
    algorithm: Algorithm,
    train: &SparseRatingMatrix,
    fill: FillStrategy,
    components: usize,
    params: &FitParams,
    seed: u64,
) -> Result<FactorModel> {
    Ok(match algorithm {
        Algorithm::Nmf => {
            let x = impute_dense(train, fill)?;
            let mut model = nmf_fit(&x, components, NmfParams { seed, ..params.nmf })?;
            model.fill = Some(fill);
            model.into()
        }
        Algorithm::SvdT => {
            let x = impute_dense(train, fill)?;
            let mut model = svd_truncated(&x, components)?;
            model.fill = Some(fill);
            model.into()
        }
        Algorithm::SvdI => {
            let p = params.svd_iter;
            svd_iterative(train, fill, components, p.threshold, p.max_iterations)?.model.into()
        }
        Algorithm::SgdMf => sgd_mf_fit(train, components, SgdParams { seed, ..params.sgd })?.into(),
    })
}

/// Seed for one sweep cell, independent of execution order.
pub fn combination_seed(master: u64, algorithm: Algorithm, fill: FillStrategy, components: usize) -> u64 {
    mix_seed(master, &[algorithm.code(), fill.seed_code(), components as u64])
}

/// Grid of fits to run. The default covers the three methods with published
/// results (SGD-MF is opt-in) over ranks 2..=30 with user-mean fill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub algorithms: Vec<Algorithm>,
    pub fills: Vec<FillStrategy>,
    pub components: Vec<usize>,
    pub fraction: f64,
    pub seed: u64,
    pub params: FitParams,
    /// Run combinations on the rayon pool.
    pub parallel: bool,
    /// Record wall-clock seconds; otherwise the column is zero so that
    /// reports are reproducible byte for byte.
    pub record_timings: bool,
    /// Hash of the ratings file; defaults to the matrix digest.
    pub dataset_digest: Option<String>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Nmf, Algorithm::SvdT, Algorithm::SvdI],
            fills: vec![FillStrategy::UserMean],
            components: (2..=30).collect(),
            fraction: 0.2,
            seed: 0,
            params: FitParams::default(),
            parallel: true,
            record_timings: false,
            dataset_digest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub fill: FillStrategy,
    pub components: usize,
    /// NaN when the fit failed.
    pub rmse: f64,
    pub mae: f64,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRow {
    pub algorithm: Algorithm,
    pub fill: FillStrategy,
    pub components: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepProvenance {
    pub seed: u64,
    pub fraction: f64,
    pub dataset_digest: String,
    pub scale: RatingScale,
    pub n_users: usize,
    pub n_items: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub algorithms: Vec<Algorithm>,
    pub fills: Vec<FillStrategy>,
    pub components: Vec<usize>,
    pub params: FitParams,
    pub record_timings: bool,
    pub failures: Vec<FailedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub provenance: SweepProvenance,
}

pub const SWEEP_CSV_HEADER: &str = "algorithm,fill,components,rmse,mae,seconds";

impl SweepReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SWEEP_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:.6},{:.6},{:.6}",
                r.algorithm, r.fill, r.components, r.rmse, r.mae, r.wall_seconds
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn provenance_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.provenance).expect("provenance serializes");
        s.push('\n');
        s
    }

    /// Row with the lowest RMSE for `algorithm`, ignoring failures.
    pub fn best(&self, algorithm: Algorithm) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.algorithm == algorithm && r.error.is_none())
            .min_by(|a, b| a.rmse.total_cmp(&b.rmse))
    }
}

fn dedup_in_order<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    for &x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Fits and scores every `(algorithm, fill, components)` combination on one
/// shared split.
///
/// Rows come out ordered by algorithm, then fill in the order given, then
/// ascending components. A combination that fails to fit keeps its row with
/// NaN metrics and is listed under the provenance failures.
pub fn run_sweep(m: &SparseRatingMatrix, spec: &SweepSpec) -> Result<SweepReport> {
    if spec.algorithms.is_empty() || spec.fills.is_empty() || spec.components.is_empty() {
        return Err(Error::invalid("sweep needs at least one algorithm, fill and component count"));
    }
    let mut algorithms = spec.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();
    let fills = dedup_in_order(&spec.fills);
    let mut components = spec.components.clone();
    components.sort();
    components.dedup();

    let split = split_ratings(m, spec.fraction, spec.seed)?;
    if split.test.is_empty() {
        return Err(Error::invalid("split fraction leaves no test entries"));
    }

    let mut cells: Vec<(Algorithm, FillStrategy, usize)> = Vec::new();
    for &a in &algorithms {
        for &f in &fills {
            cells.extend(components.iter().map(|&r| (a, f, r)));
        }
    }
    let run = |&(algorithm, fill, r): &(Algorithm, FillStrategy, usize)| {
        let start = Instant::now();
        let outcome =
            fit_model(algorithm, &split.train, fill, r, &spec.params, combination_seed(spec.seed, algorithm, fill, r))
                .and_then(|model| evaluate_model(&model, &split, m.scale()));
        let wall_seconds = if spec.record_timings { start.elapsed().as_secs_f64() } else { 0.0 };
        let (rmse, mae, error) = match outcome {
            Ok(p) => (p.rmse, p.mae, None),
            Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
        };
        SweepRow { algorithm, fill, components: r, rmse, mae, wall_seconds, error }
    };
    let rows: Vec<SweepRow> =
        if spec.parallel { cells.par_iter().map(run).collect() } else { cells.iter().map(run).collect() };

    let failures = rows
        .iter()
        .filter_map(|r| {
            r.error.as_ref().map(|e| FailedRow {
                algorithm: r.algorithm,
                fill: r.fill,
                components: r.components,
                error: e.clone(),
            })
        })
        .collect();
    let provenance = SweepProvenance {
        seed: spec.seed,
        fraction: spec.fraction,
        dataset_digest: spec.dataset_digest.clone().unwrap_or_else(|| m.digest()),
        scale: m.scale(),
        n_users: m.n_users(),
        n_items: m.n_items(),
        n_train: split.train.nnz(),
        n_test: split.test.len(),
        algorithms,
        fills,
        components,
        params: spec.params,
        record_timings: spec.record_timings,
        failures,
    };
    Ok(SweepReport { rows, provenance })
}

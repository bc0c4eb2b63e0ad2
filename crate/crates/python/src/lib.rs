use std::fs::File;
use std::io::{BufReader, BufWriter};

use latentrec::evaluation::combination_seed;
use latentrec::{
    build_matrix, kmeans_fit, load_model, load_ratings, save_model, split_ratings, user_latent_features, Algorithm,
    ClusterModel, DuplicatePolicy, FactorModel, FillStrategy, FitParams, InputFormat, ModelFile, OutOfRangePolicy,
    RatingModel, RatingScale, RatingTriple, SparseRatingMatrix, SplitParams, SweepSpec,
};
use pyo3::exceptions::{PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn err(e: latentrec::Error) -> PyErr {
    match e {
        latentrec::Error::UnknownUser(_) => PyKeyError::new_err(e.to_string()),
        latentrec::Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = latentrec::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Sparse user-item ratings with raw ids mapped to dense indices.
#[pyclass(name = "RatingMatrix", module = "latentrec", frozen)]
struct PyRatingMatrix {
    inner: SparseRatingMatrix,
}

#[pymethods]
impl PyRatingMatrix {
    /// Loads a `tsv` (MovieLens `u.data`) or `csv` ratings file.
    #[staticmethod]
    #[pyo3(signature = (path, format = "tsv", scale = "1:5", duplicates = "error", clamp = false))]
    fn from_file(path: &str, format: &str, scale: &str, duplicates: &str, clamp: bool) -> PyResult<Self> {
        let scale: RatingScale = parse(scale)?;
        let policy = if clamp { OutOfRangePolicy::Clamp } else { OutOfRangePolicy::Error };
        let file = File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        let triples = load_ratings(BufReader::new(file), parse::<InputFormat>(format)?, scale, policy).map_err(err)?;
        let inner = build_matrix(&triples, scale, parse::<DuplicatePolicy>(duplicates)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (triples, scale = "1:5", duplicates = "error"))]
    fn from_triples(triples: Vec<(String, String, f64)>, scale: &str, duplicates: &str) -> PyResult<Self> {
        let triples: Vec<RatingTriple> = triples.into_iter().map(|(u, i, r)| RatingTriple::new(u, i, r)).collect();
        let inner = build_matrix(&triples, parse(scale)?, parse::<DuplicatePolicy>(duplicates)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    #[getter]
    fn users(&self) -> Vec<String> {
        self.inner.users().ids().to_vec()
    }

    #[getter]
    fn items(&self) -> Vec<String> {
        self.inner.items().ids().to_vec()
    }

    #[getter]
    fn scale(&self) -> String {
        self.inner.scale().to_string()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    fn get(&self, user: &str, item: &str) -> Option<f64> {
        let u = self.inner.users().index_of(user)?;
        let i = self.inner.items().index_of(item)?;
        self.inner.get(u, i)
    }

    /// `(user_index, item_index, rating)` in CSR order.
    fn entries(&self) -> Vec<(usize, usize, f64)> {
        self.inner.iter().collect()
    }

    /// Dense rows with unobserved cells filled.
    #[pyo3(signature = (fill = "user_mean"))]
    fn dense(&self, fill: &str) -> PyResult<Vec<Vec<f64>>> {
        let d = latentrec::impute_dense(&self.inner, parse(fill)?).map_err(err)?;
        Ok(d.to_rows())
    }

    /// Returns `(train, test)` where `test` lists `(user_index, item_index, rating)`.
    #[pyo3(signature = (fraction = 0.2, seed = 0))]
    fn split(&self, fraction: f64, seed: u64) -> PyResult<(Self, Vec<(usize, usize, f64)>)> {
        let s = split_ratings(&self.inner, fraction, seed).map_err(err)?;
        Ok((Self { inner: s.train }, s.test))
    }

    fn __repr__(&self) -> String {
        format!(
            "RatingMatrix(n_users={}, n_items={}, nnz={})",
            self.inner.n_users(),
            self.inner.n_items(),
            self.inner.nnz()
        )
    }
}

/// A fitted NMF, SVD or SGD-MF model.
#[pyclass(name = "Model", module = "latentrec", frozen)]
struct PyModel {
    file: ModelFile,
}

#[pymethods]
impl PyModel {
    /// Fits on the training part of a seeded split of `matrix`.
    #[staticmethod]
    #[pyo3(signature = (matrix, algorithm, rank, fill = "user_mean", fraction = 0.2, seed = 0))]
    fn fit(
        matrix: &PyRatingMatrix,
        algorithm: &str,
        rank: usize,
        fill: &str,
        fraction: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let algorithm: Algorithm = parse(algorithm)?;
        let fill: FillStrategy = parse(fill)?;
        let split = split_ratings(&matrix.inner, fraction, seed).map_err(err)?;
        let model = latentrec::fit_model(
            algorithm,
            &split.train,
            fill,
            rank,
            &FitParams::default(),
            combination_seed(seed, algorithm, fill, rank),
        )
        .map_err(err)?;
        let mut file = ModelFile::new(model);
        file.dataset_digest = Some(matrix.inner.digest());
        file.split = Some(SplitParams { fraction, seed });
        Ok(Self { file })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        Ok(Self { file: load_model(BufReader::new(f)).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let f = File::create(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        save_model(&self.file, BufWriter::new(f)).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.file.model {
            FactorModel::Nmf(_) => "nmf",
            FactorModel::Svd(_) => "svd",
            FactorModel::SgdMf(_) => "sgd_mf",
        }
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.file.model.n_users()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.file.model.n_items()
    }

    /// Clamped prediction for dense indices.
    #[pyo3(signature = (user, item, scale = "1:5"))]
    fn predict(&self, user: usize, item: usize, scale: &str) -> PyResult<f64> {
        latentrec::predict_rating(&self.file.model, user, item, parse(scale)?).map_err(err)
    }

    fn user_factors(&self) -> Vec<Vec<f64>> {
        self.file.model.user_factors().to_rows()
    }

    /// `(rmse, mae)` on the held-out part of the split the model was fitted on.
    fn evaluate(&self, matrix: &PyRatingMatrix) -> PyResult<(f64, f64)> {
        let sp = self.file.split.ok_or_else(|| PyValueError::new_err("model carries no split parameters"))?;
        let split = split_ratings(&matrix.inner, sp.fraction, sp.seed).map_err(err)?;
        let m = latentrec::evaluate_model(&self.file.model, &split, matrix.inner.scale()).map_err(err)?;
        Ok((m.rmse, m.mae))
    }

    /// Top-`n` `(item_id, score)` pairs for a raw user id.
    #[pyo3(signature = (matrix, user, n = 10, exclude_seen = true))]
    fn recommend(
        &self,
        matrix: &PyRatingMatrix,
        user: &str,
        n: usize,
        exclude_seen: bool,
    ) -> PyResult<Vec<(String, f64)>> {
        let recs = latentrec::top_n(&self.file.model, &matrix.inner, user, n, exclude_seen, matrix.inner.scale())
            .map_err(err)?;
        Ok(recs.into_iter().map(|r| (r.item_raw, r.score)).collect())
    }
}

/// K-Means segmentation of a model's user factors.
#[pyclass(name = "Clusters", module = "latentrec", frozen)]
struct PyClusters {
    inner: ClusterModel,
}

#[pymethods]
impl PyClusters {
    #[staticmethod]
    #[pyo3(signature = (model, k = 10, seed = 0, max_iterations = 300, restarts = 10))]
    fn fit(model: &PyModel, k: usize, seed: u64, max_iterations: usize, restarts: usize) -> PyResult<Self> {
        let features = user_latent_features(&model.file.model);
        Ok(Self { inner: kmeans_fit(&features, k, seed, max_iterations, restarts).map_err(err)? })
    }

    #[getter]
    fn assignments(&self) -> Vec<usize> {
        self.inner.assignments.clone()
    }

    #[getter]
    fn inertia(&self) -> f64 {
        self.inner.inertia
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn centroids(&self) -> Vec<Vec<f64>> {
        self.inner.centroids.to_rows()
    }

    #[pyo3(signature = (matrix, user, n = 10, min_support = 3))]
    fn recommend(
        &self,
        matrix: &PyRatingMatrix,
        user: &str,
        n: usize,
        min_support: usize,
    ) -> PyResult<Vec<(String, f64)>> {
        let recs = latentrec::cluster_top_n(&self.inner, &matrix.inner, user, n, min_support).map_err(err)?;
        Ok(recs.into_iter().map(|r| (r.item_raw, r.score)).collect())
    }
}

/// `(rmse, mae)` between two equal-length sequences.
#[pyfunction]
fn error_metrics(predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<(f64, f64)> {
    let m = latentrec::error_metrics(&predicted, &actual).map_err(err)?;
    Ok((m.rmse, m.mae))
}

/// Runs a sweep and returns `(csv_text, provenance_json)`.
#[pyfunction]
#[pyo3(signature = (matrix, algorithms, fills, components, fraction = 0.2, seed = 0))]
fn run_sweep(
    py: Python<'_>,
    matrix: &PyRatingMatrix,
    algorithms: Vec<String>,
    fills: Vec<String>,
    components: Vec<usize>,
    fraction: f64,
    seed: u64,
) -> PyResult<(String, String)> {
    let spec = SweepSpec {
        algorithms: algorithms.iter().map(|a| parse(a)).collect::<PyResult<_>>()?,
        fills: fills.iter().map(|f| parse(f)).collect::<PyResult<_>>()?,
        components,
        fraction,
        seed,
        ..SweepSpec::default()
    };
    let report = py.detach(|| latentrec::run_sweep(&matrix.inner, &spec)).map_err(err)?;
    Ok((report.to_csv(), report.provenance_json()))
}

#[pymodule]
#[pyo3(name = "latentrec")]
pub fn latentrec_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRatingMatrix>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyClusters>()?;
    m.add_function(wrap_pyfunction!(error_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}

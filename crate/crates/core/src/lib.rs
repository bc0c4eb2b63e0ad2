//! Matrix-factorization recommender engine.
//!
//! Ratings are loaded into a [`SparseRatingMatrix`], optionally densified with
//! a [`FillStrategy`], and factored by NMF, truncated SVD, iterative SVD
//! completion or SGD matrix factorization. Fitted models feed K-Means user
//! segmentation, top-N recommendation and RMSE/MAE evaluation.

pub mod clustering;
pub mod dense;
pub mod error;
pub mod evaluation;
pub mod factorization;
mod linalg;
pub mod ratings;
pub mod recommender;
mod seed;

pub use clustering::{
    assign_to_clusters, kmeans_fit, kmeans_runs, read_cluster_csv, user_latent_features, write_cluster_csv,
    ClusterModel, LatentFeatures,
};
pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use evaluation::{
    error_metrics, evaluate_model, fit_model, run_sweep, split_ratings, Algorithm, EvalSplit, FitParams, MetricPair,
    SweepReport, SweepSpec,
};
pub use factorization::{
    load_model, nmf_fit, predict_rating, save_model, sgd_mf_fit, svd_iterative, svd_truncated, FactorModel, ModelFile,
    NmfModel, NmfParams, RatingModel, SgdMfModel, SgdParams, SplitParams, SvdIterParams, SvdModel,
};
pub use ratings::{
    build_matrix, content_digest, impute_dense, load_ratings, DuplicatePolicy, FillStrategy, InputFormat,
    OutOfRangePolicy, RatingScale, RatingTriple, SparseRatingMatrix,
};
pub use recommender::{
    cluster_top_n, cluster_top_n_from_assignments, top_n, write_recommendations_csv, Recommendation,
};

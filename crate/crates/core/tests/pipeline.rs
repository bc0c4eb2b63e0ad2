use latentrec::factorization::{load_model, save_model, ModelFile};
use latentrec::{
    build_matrix, cluster_top_n, evaluate_model, fit_model, impute_dense, kmeans_fit, load_ratings, split_ratings,
    svd_truncated, top_n, user_latent_features, Algorithm, DenseMatrix, DuplicatePolicy, FillStrategy, FitParams,
    InputFormat, OutOfRangePolicy, RatingModel, RatingScale,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn csv_fixture() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut text = String::from("user,item,rating,timestamp\n");
    for u in 0..40 {
        for i in 0..25 {
            if rng.random::<f64>() < 0.5 {
                // two taste groups so clusters have something to find
                let base = if (u < 20) == (i < 12) { 4.0 } else { 2.0 };
                let r: f64 = (base + rng.random_range(-1.0..1.0_f64)).round();
                text.push_str(&format!("user{u},\"film {i}\",{r},{}\n", 880_000_000 + u * 100 + i));
            }
        }
    }
    text
}

#[test]
fn csv_to_recommendations() {
    let scale = RatingScale::default();
    let triples = load_ratings(csv_fixture().as_bytes(), InputFormat::Csv, scale, OutOfRangePolicy::Error).unwrap();
    let m = build_matrix(&triples, scale, DuplicatePolicy::Error).unwrap();
    assert_eq!(m.n_users(), 40);
    assert_eq!(m.n_items(), 25);
    assert!(m.items().index_of("film 3").is_some());

    let split = split_ratings(&m, 0.2, 7).unwrap();
    for algorithm in Algorithm::ALL {
        let model = fit_model(algorithm, &split.train, FillStrategy::UserMean, 3, &FitParams::default(), 1).unwrap();
        let metrics = evaluate_model(&model, &split, scale).unwrap();
        // the two-block structure is easy; every method should beat a coin flip over 1..5
        assert!(metrics.rmse < 1.5, "{algorithm}: {metrics:?}");
        assert!(metrics.mae <= metrics.rmse);

        let mut buf = Vec::new();
        save_model(&ModelFile::new(model.clone()), &mut buf).unwrap();
        let back = load_model(buf.as_slice()).unwrap().model;
        assert_eq!(back, model);

        let recs = top_n(&model, &m, "user3", 5, true, scale).unwrap();
        assert_eq!(recs.len(), 5);
        let (seen, _) = m.row(m.users().index_of("user3").unwrap());
        assert!(recs.iter().all(|r| !seen.contains(&r.item_index)));
    }

    let model = fit_model(Algorithm::SvdT, &m, FillStrategy::UserMean, 2, &FitParams::default(), 0).unwrap();
    let clusters = kmeans_fit(&user_latent_features(&model), 2, 3, 100, 10).unwrap();
    let group = |u: usize| clusters.assignments[m.users().index_of(&format!("user{u}")).unwrap()];
    assert!((0..20).all(|u| group(u) == group(0)));
    assert!((20..40).all(|u| group(u) == group(20)));
    assert_ne!(group(0), group(20));

    let peer = cluster_top_n(&clusters, &m, "user0", 3, 2).unwrap();
    assert!(!peer.is_empty());
    assert!(peer.windows(2).all(|w| w[0].score >= w[1].score));
}

fn oracle_singular_values(x: &DenseMatrix) -> Vec<f64> {
    let (n, m) = x.shape();
    let mut s: Vec<f64> =
        DMatrix::from_row_slice(n, m, x.as_slice()).svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn tail_norm(s: &[f64], k: usize) -> f64 {
    s[k..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn residual(x: &DenseMatrix, k: usize) -> (Vec<f64>, f64) {
    let model = svd_truncated(x, k).unwrap();
    let r = (x.as_array() - &model.reconstruction()).mapv(|v| v * v).sum().sqrt();
    (model.s, r)
}

#[test]
fn large_ratings_like_matrix_matches_oracle() {
    // big enough that the iterative route is taken
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (n, m) = (160, 130);
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let data: Vec<f64> =
        (0..n * m).map(|idx| 3.0 + u[idx / m] * v[idx % m] + 0.3 * rng.random_range(-1.0..1.0)).collect();
    let x = DenseMatrix::new(n, m, data).unwrap();
    let sigma = oracle_singular_values(&x);
    for k in [1, 4, 12] {
        let (s, r) = residual(&x, k);
        for (a, b) in s.iter().zip(&sigma) {
            assert!((a - b).abs() <= 1e-8 * sigma[0], "k={k}: {a} vs {b}");
        }
        let expected = tail_norm(&sigma, k);
        assert!((r - expected).abs() <= 1e-6 * expected, "k={k}: {r} vs {expected}");
    }
}

#[test]
fn imputed_fill_feeds_factorization() {
    let triples: Vec<_> = [(0, 0, 5.0), (0, 1, 3.0), (1, 1, 4.0), (2, 0, 1.0), (2, 2, 2.0)]
        .iter()
        .map(|&(u, i, r)| latentrec::RatingTriple::new(u.to_string(), i.to_string(), r))
        .collect();
    let m = build_matrix(&triples, RatingScale::default(), DuplicatePolicy::Error).unwrap();
    let x = impute_dense(&m, FillStrategy::ItemMean).unwrap();
    let full = svd_truncated(&x, 3).unwrap();
    for u in 0..3 {
        for i in 0..3 {
            assert!((full.raw_score(u, i) - x.get(u, i)).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncation_error_is_optimal(
        n in 1usize..14,
        m in 1usize..14,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x = DenseMatrix::new(n, m, data).unwrap();
        let sigma = oracle_singular_values(&x);
        for k in 1..=n.min(m) {
            let (_, r) = residual(&x, k);
            let expected = tail_norm(&sigma, k);
            prop_assert!((r - expected).abs() <= 1e-6 * expected.max(1e-6 * x.frobenius_norm()));
        }
    }
}

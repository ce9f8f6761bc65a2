use csscreen::eigen::top_k_eigen_with;
use csscreen::sim::generate_spiked;
use csscreen::tuning::predict_entry;
use csscreen::{split_train_validation, tune_rank, tune_rank_on, DenseSymmetric, EigenOptions, StatKind, TuneConfig};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Symmetric matrix `sum_k lambda_k u_k u_k^T` with orthonormal random `u_k`.
fn planted(p: usize, lambdas: &[f64], seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(p, lambdas.len(), |_, _| rng.random::<f64>() - 0.5);
    let q = g.qr().q();
    let mut m = DMatrix::zeros(p, p);
    for (k, &l) in lambdas.iter().enumerate() {
        let u = q.column(k);
        m += l * &u * u.transpose();
    }
    (&m + m.transpose()) * 0.5
}

#[test]
fn predict_entry_matches_dense_truncation() {
    let p = 40;
    let m = planted(p, &[9.0, -6.0, 4.0, -2.5], 3);
    let dense = DenseSymmetric::new(p, m.iter().copied().collect()).unwrap();
    let spec = top_k_eigen_with(&dense, 4, &EigenOptions::with_tol(1e-12, 1)).unwrap();
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let mut best2 = DMatrix::zeros(p, p);
    for &c in &idx[..2] {
        let u = eig.eigenvectors.column(c);
        best2 += eig.eigenvalues[c] * &u * u.transpose();
    }
    for i in 0..p {
        for j in 0..p {
            if i != j {
                assert!((predict_entry(&spec, i, j, 2) - best2[(i, j)]).abs() < 1e-10);
                assert!((predict_entry(&spec, i, j, 4) - m[(i, j)]).abs() < 1e-10);
            }
        }
    }
    assert_eq!(predict_entry(&spec, 0, 1, 0), 0.0);
}

#[test]
fn planted_rank_three_is_recovered() {
    let p = 300;
    for seed in 0..5 {
        let m = planted(p, &[30.0, -20.0, 12.0], seed);
        let tau = 0.1;
        let sample = split_train_validation(p, 1.0 / (1.0 + tau), tau, seed).unwrap();
        let (result, _, _) = tune_rank_on::<f64>(
            &sample,
            |i, j| (m[(i, j)], false),
            StatKind::Covariance,
            2,
            10,
            &EigenOptions::with_tol(1e-10, seed),
        )
        .unwrap();
        assert_eq!(result.k_hat, 3, "seed {seed}: {:?}", result.losses);
        assert!(result.losses[&2] > result.losses[&3]);
        assert!(result.losses.values().all(|&l| l >= 0.0));
    }
}

#[test]
fn singleton_range_returns_that_rank() {
    let (_, x1, x2) = generate_spiked::<f64>(150, 20, 20, 1).unwrap();
    let mut cfg = TuneConfig::new(0.3, StatKind::Pearson, 2);
    cfg.k_l = 3;
    cfg.k_u = Some(3);
    let out = tune_rank(&x1, &x2, &cfg).unwrap();
    assert_eq!(out.tuning.k_hat, 3);
    assert_eq!(out.scores.k_used, 3);
    assert_eq!(out.tuning.losses.len(), 1);
}

#[test]
fn tuned_scores_reuse_the_shared_decomposition() {
    let (_, x1, x2) = generate_spiked::<f64>(200, 30, 30, 5).unwrap();
    let out = tune_rank(&x1, &x2, &TuneConfig::new(0.3, StatKind::Pearson, 4)).unwrap();
    let k = out.tuning.k_hat;
    for i in 0..200 {
        let want: f64 = (0..k).map(|t| out.spectrum.eigenvalues[t].abs() * out.spectrum.component(i, t).powi(2)).sum::<f64>().sqrt();
        assert!((out.scores.scores[i] - want).abs() < 1e-12);
    }
    assert_eq!(out.tuning.train_count, out.differential.nnz());
}

#[test]
fn oversized_validation_budget_is_rejected() {
    let (_, x1, x2) = generate_spiked::<f64>(150, 20, 20, 1).unwrap();
    let err = tune_rank(&x1, &x2, &TuneConfig::new(0.95, StatKind::Pearson, 2)).unwrap_err();
    assert!(err.to_string().contains("rho"));
}

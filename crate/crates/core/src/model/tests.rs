use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn small_cfg(input_dim: usize, n: usize) -> SimEcConfig {
    SimEcConfig {
        input_dim,
        embed_dim: 3,
        hidden_sizes: vec![6],
        n_targets: n,
        lr: 0.01,
        epochs: 30,
        seed: 5,
        ..Default::default()
    }
}

fn psd_target(m: usize, rank: usize, seed: u64) -> Matrix {
    let z = gaussian(m, rank, seed);
    crate::spectral::gram(&z).scale(1.0 / rank as f64)
}

#[test]
fn training_is_deterministic_and_traces_every_epoch() {
    let x = gaussian(20, 4, 1);
    let s = TargetSpec::square(psd_target(20, 2, 2)).unwrap();
    let cfg = small_cfg(4, 20);
    let (m1, r1) = train(&cfg, &x, &s).unwrap();
    let (m2, r2) = train(&cfg, &x, &s).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(r1.loss_trace, r2.loss_trace);
    assert_eq!(r1.loss_trace.len(), cfg.epochs);
    assert_eq!(r1.final_mse_relations, r2.final_mse_relations);
    assert!(r1.final_mse_gram.is_some());
}

#[test]
fn minibatch_training_is_deterministic() {
    let x = gaussian(25, 4, 3);
    let s = TargetSpec::square(psd_target(25, 2, 4)).unwrap();
    let cfg = SimEcConfig {
        batch_rows: 7,
        ..small_cfg(4, 25)
    };
    let (m1, r1) = train(&cfg, &x, &s).unwrap();
    let (m2, r2) = train(&cfg, &x, &s).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(r1.loss_trace, r2.loss_trace);
    assert!(r1.loss_trace.last().unwrap() < &r1.loss_trace[0]);
}

#[test]
fn config_errors() {
    let x = gaussian(10, 4, 5);
    let s = TargetSpec::square(psd_target(10, 2, 6)).unwrap();
    let bad = [
        SimEcConfig { epochs: 0, ..small_cfg(4, 10) },
        SimEcConfig { embed_dim: 0, ..small_cfg(4, 10) },
        SimEcConfig { n_targets: 11, ..small_cfg(4, 10) },
        SimEcConfig { input_dim: 5, ..small_cfg(4, 10) },
        SimEcConfig { lambda_sym: 1.0, k: 2, ..small_cfg(4, 10) },
    ];
    for cfg in bad {
        assert!(train(&cfg, &x, &s).is_err(), "{cfg:?}");
    }
    assert!(train(&small_cfg(4, 10), &gaussian(9, 4, 7), &s).is_err());
}

#[test]
fn full_rank_identity_input_fits_psd_target() {
    let m = 30;
    let s = psd_target(m, 30, 8);
    let target = TargetSpec::square(s.clone()).unwrap();
    let cfg = SimEcConfig {
        input_dim: m,
        embed_dim: m,
        n_targets: m,
        encoder_bias: false,
        lr: 0.01,
        lr_decay: 0.05,
        epochs: 1500,
        seed: 1,
        ..Default::default()
    };
    let (model, report) = train(&cfg, &Matrix::identity(m), &target).unwrap();
    assert!(report.final_mse_relations < 1e-3, "{}", report.final_mse_relations);
    let pred = predict_relations(&model, &Matrix::identity(m)).unwrap();
    assert!(linalg::mse(&pred[0], &s) < 1e-3);
}

#[test]
fn zero_target_shrinks_relation_weights_under_l2() {
    let x = gaussian(15, 4, 9);
    let target = TargetSpec::square(Matrix::zeros(15, 15)).unwrap();
    let cfg = SimEcConfig {
        lambda_l2: 0.1,
        lr: 0.03,
        epochs: 800,
        ..small_cfg(4, 15)
    };
    let init_norm = {
        let p = net::init(&cfg.shape(), cfg.seed).unwrap();
        linalg::frobenius_sq(&p.relation_weights[0]).sqrt()
    };
    let (model, report) = train(&cfg, &x, &target).unwrap();
    let norm = linalg::frobenius_sq(&model.params.relation_weights[0]).sqrt();
    assert!(report.loss_trace.last().unwrap() < &1e-4, "{:?}", &report.loss_trace[790..]);
    assert!(norm < 0.05 * init_norm, "{norm} vs {init_norm}");
}

#[test]
fn embedding_is_a_pure_function() {
    let x = gaussian(12, 4, 10);
    let s = TargetSpec::square(psd_target(12, 2, 11)).unwrap();
    let (model, _) = train(&small_cfg(4, 12), &x, &s).unwrap();
    let y = embed(&model, &x).unwrap();
    let row = x.select_rows(&[3, 3]);
    let y_row = embed(&model, &row).unwrap();
    assert_eq!(y_row.row(0), y.row(3));
    assert_eq!(y_row.row(0), y_row.row(1));
    assert!(embed(&model, &gaussian(2, 5, 1)).is_err());
}

#[test]
fn zero_input_through_bias_free_linear_encoder() {
    let cfg = SimEcConfig {
        hidden_sizes: vec![],
        encoder_bias: false,
        ..small_cfg(4, 6)
    };
    let x = gaussian(6, 4, 12);
    let s = TargetSpec::square(psd_target(6, 2, 13)).unwrap();
    let (model, _) = train(&cfg, &x, &s).unwrap();
    let y = embed(&model, &Matrix::zeros(3, 4)).unwrap();
    assert!(y.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn predictions_compose_and_respect_bounds() {
    let x = gaussian(10, 4, 14);
    let s = TargetSpec::square(psd_target(10, 2, 15)).unwrap();
    let (model, _) = train(&small_cfg(4, 10), &x, &s).unwrap();
    let y = embed(&model, &x).unwrap();
    let pred = predict_relations(&model, &x).unwrap();
    assert_eq!(pred[0], linalg::matmul(&y, &model.params.relation_weights[0]).unwrap());

    let ratings = Matrix::from_fn(10, 10, |r, c| 1.0 + ((r * 7 + c * 3) % 5) as f64);
    let target = TargetSpec::rectangular(ratings).unwrap();
    let cfg = SimEcConfig {
        output_bounds: Some((1.0, 5.0)),
        lr: 0.05,
        ..small_cfg(4, 10)
    };
    let (model, _) = train(&cfg, &x, &target).unwrap();
    let pred = predict_relations(&model, &gaussian(30, 4, 16).scale(10.0)).unwrap();
    assert!(pred[0].as_slice().iter().all(|&v| (1.0..=5.0).contains(&v)));
}

#[test]
fn gram_is_symmetric_and_scalar_for_one_row() {
    let x = gaussian(9, 4, 17);
    let s = TargetSpec::square(psd_target(9, 2, 18)).unwrap();
    let (model, _) = train(&small_cfg(4, 9), &x, &s).unwrap();
    let g = gram_approx(&model, &x).unwrap();
    for i in 0..9 {
        for j in 0..9 {
            assert_eq!(g[(i, j)].to_bits(), g[(j, i)].to_bits());
        }
    }
    let one = x.select_rows(&[2]);
    let y = embed(&model, &one).unwrap();
    let g1 = gram_approx(&model, &one).unwrap();
    assert_eq!(g1.shape(), (1, 1));
    assert!((g1[(0, 0)] - linalg::dot(y.row(0), y.row(0))).abs() < 1e-15);
}

#[test]
fn identity_factorization_recovers_rank_one() {
    let u: Vec<f64> = (0..12).map(|i| (i as f64 * 0.4).sin()).collect();
    let v: Vec<f64> = (0..8).map(|j| 1.0 + (j as f64 * 0.3).cos()).collect();
    let r = Matrix::from_fn(12, 8, |i, j| u[i] * v[j]);
    let target = TargetSpec::rectangular(r.clone()).unwrap();
    let hyper = SimEcConfig {
        lr: 0.02,
        lr_decay: 0.05,
        epochs: 1500,
        seed: 3,
        ..Default::default()
    };
    let (model, report) = identity_factorize(&target, 1, 0.0, &hyper).unwrap();
    assert!(model.params.encoder_layers[0].bias.is_none());
    assert_eq!(model.params.encoder_layers.len(), 1);
    assert!(report.final_mse_relations < 1e-4, "{}", report.final_mse_relations);
}

#[test]
fn subsampled_columns_and_sym_block() {
    let x = gaussian(16, 4, 19);
    let s = psd_target(16, 3, 20);
    let target = TargetSpec::square(s.clone()).unwrap();
    let cfg = SimEcConfig {
        n_targets: 4,
        lambda_sym: 0.5,
        ..small_cfg(4, 4)
    };
    let (model, report) = train(&cfg, &x, &target).unwrap();
    assert_eq!(model.target_column_ids, vec![0, 1, 2, 3]);
    assert_eq!(predict_relations(&model, &x).unwrap()[0].shape(), (16, 4));
    assert!(report.final_mse_gram.is_some());

    let cols = TargetColumns::Explicit(vec![1, 5, 9, 13]);
    let (model, _) = train_with_columns(&cfg, &x, &target, &cols).unwrap();
    assert_eq!(model.target_column_ids, vec![1, 5, 9, 13]);
    let random = TargetColumns::Random { seed: 4 };
    let (model, _) = train_with_columns(&cfg, &x, &target, &random).unwrap();
    assert_eq!(model.target_column_ids.len(), 4);
    assert!(model.target_column_ids.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn dual_freezes_the_second_relation_layer() {
    let x1 = gaussian(14, 3, 21);
    let x2 = gaussian(9, 5, 22);
    let r = linalg::matmul_nt(&gaussian(14, 2, 23), &gaussian(9, 2, 24)).unwrap();
    let target = TargetSpec::rectangular(r).unwrap();
    let cfg1 = SimEcConfig {
        input_dim: 3,
        embed_dim: 2,
        n_targets: 9,
        lr: 0.01,
        epochs: 40,
        ..Default::default()
    };
    let cfg2 = SimEcConfig {
        input_dim: 5,
        n_targets: 14,
        ..cfg1.clone()
    };
    let (m1, m2) = train_dual(&cfg1, &cfg2, &x1, &x2, &target).unwrap();
    let y1 = embed(&m1, &x1).unwrap();
    assert_eq!(m2.params.relation_weights[0], linalg::transpose(&y1));

    // a new "user" gets a prediction against every row of x1
    let new_user = gaussian(1, 5, 25);
    let pred = dual_predict(&m1, &m2, &x1, &new_user).unwrap();
    assert_eq!(pred.shape(), (14, 1));

    let cfg_bad = SimEcConfig { embed_dim: 3, ..cfg2 };
    assert!(train_dual(&cfg1, &cfg_bad, &x1, &x2, &target).is_err());
}

#[test]
fn multi_similarity_targets() {
    let a = psd_target(10, 3, 26);
    let avg = multi_similarity_target(&[a.clone(), a.clone()], MultiMode::Averaged).unwrap();
    let norm = similarity::normalize_by_top_eigenvalue(&a).unwrap();
    assert!(avg.slice(0).sub(&norm).unwrap().max_abs() < 1e-12);
    assert_eq!(avg.k(), 1);

    let b = psd_target(10, 2, 27);
    let stacked = multi_similarity_target(&[a.clone(), b, a.clone()], MultiMode::Stacked).unwrap();
    assert_eq!(stacked.k(), 3);
    assert!(multi_similarity_target(std::slice::from_ref(&a), MultiMode::Stacked).is_err());
    assert!(multi_similarity_target(&[a, Matrix::identity(3)], MultiMode::Stacked).is_err());
}

#[test]
fn model_round_trips_bit_exactly() {
    let x = gaussian(10, 4, 28);
    let s = TargetSpec::square(psd_target(10, 2, 29)).unwrap();
    let cfg = SimEcConfig {
        output_bounds: Some((-1.5, 2.25)),
        lambda_orth: 0.125,
        ..small_cfg(4, 10)
    };
    let (model, _) = train(&cfg, &x, &s).unwrap();
    let mut bytes = Vec::new();
    write_model(&model, &mut bytes).unwrap();
    assert_eq!(&bytes[..6], MAGIC);
    let back = read_model(bytes.as_slice()).unwrap();
    assert_eq!(back, model);
    let mut again = Vec::new();
    write_model(&back, &mut again).unwrap();
    assert_eq!(bytes, again);

    assert!(read_model(&bytes[..bytes.len() - 3]).is_err());
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(read_model(wrong.as_slice()).is_err());
    let mut extra = bytes;
    extra.push(0);
    assert!(read_model(extra.as_slice()).is_err());
}

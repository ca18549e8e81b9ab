use itac_core::artifact;
use itac_core::linalg::Matrix;
use itac_core::neural::{
    ann_predict, ann_predict_row, ann_train, ann_train_split, fitted_series, gradient_check, rnn_hidden_state,
    rnn_predict, rnn_train, rnn_train_split, Activation, Adam, AnnConfig, Cell, Mlp, ModelArtifact, Network,
    RnnConfig, TrainingConfig,
};
use itac_core::rng::rng_from_seed;
use itac_core::transform::AlignedDataset;
use itac_core::{Error, MonthRange};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn dataset(features: Matrix<f64>, target: Vec<f64>) -> AlignedDataset<f64> {
    let span = MonthRange::with_len("1950-01".parse().unwrap(), target.len()).unwrap();
    let names = (0..features.cols()).map(|i| format!("x{i}")).collect();
    AlignedDataset::new(features, target, span, names).unwrap()
}

fn random_problem(rows: usize, cols: usize, seed: u64) -> AlignedDataset<f64> {
    let mut rng = rng_from_seed(seed);
    let x = Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    let y = (0..rows).map(|r| x.row(r).iter().sum::<f64>().sin() + 0.1 * rng.random::<f64>()).collect();
    dataset(x, y)
}

fn untrained_ann(layers: usize, neurons: usize, activation: Activation, data: &AlignedDataset<f64>, seed: u64) -> ModelArtifact<f64> {
    let cfg = AnnConfig { hidden_layers: layers, neurons, activation, epochs: 0, seed, ..AnnConfig::default() };
    ann_train(data, &cfg).unwrap()
}

#[test]
fn ann_gradient_matches_finite_differences() {
    let data = random_problem(32, 4, 1);
    for activation in [Activation::Tanh, Activation::Relu] {
        let art = untrained_ann(2, 8, activation, &data, 7);
        let err = gradient_check(&art, &data.features, &data.target, 1e-5).unwrap();
        assert!(err < 1e-4, "{activation:?}: {err}");
    }
}

#[test]
fn linear_network_gradient_is_exact() {
    let data = random_problem(20, 3, 2);
    let mut mlp = Mlp::<f64>::new(3, &[], Activation::Linear);
    mlp.initialize(&mut rng_from_seed(3));
    mlp.params[3] = 0.25;
    let art = ModelArtifact::from_network(Network::Mlp(mlp), TrainingConfig::Ann(AnnConfig::default()));
    let err = gradient_check(&art, &data.features, &data.target, 1e-5).unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn recurrent_gradients_match_finite_differences() {
    let data = random_problem(12, 3, 4);
    for cell in [Cell::Lstm, Cell::Elman] {
        let cfg = RnnConfig { cell, hidden_layers: 2, neurons: 6, window: 4, epochs: 0, seed: 5, ..RnnConfig::default() };
        let art = rnn_train(&data, &cfg).unwrap();
        let err = gradient_check(&art, &data.features, &data.target, 1e-5).unwrap();
        assert!(err < 1e-4, "{cell:?}: {err}");
    }
}

#[test]
fn gradient_check_rejects_bad_epsilon() {
    let data = random_problem(8, 2, 1);
    let art = untrained_ann(2, 6, Activation::Tanh, &data, 1);
    assert!(gradient_check(&art, &data.features, &data.target, 1e-2).is_err());
    assert!(gradient_check(&art, &data.features, &data.target, 1e-9).is_err());
}

pub fn sin_dataset() -> AlignedDataset<f64> {
    let n = 500;
    let xs: Vec<f64> = (0..n)
        .map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64)
        .collect();
    let y = xs.iter().map(|x| x.sin()).collect();
    dataset(Matrix::from_vec(n, 1, xs).unwrap(), y)
}

#[test]
fn ann_fits_sine() {
    let data = sin_dataset();
    let cfg = AnnConfig { hidden_layers: 2, neurons: 32, epochs: 2000, batch_size: 32, learning_rate: 1e-3, seed: 11, ..AnnConfig::default() };
    let art = ann_train(&data, &cfg).unwrap();
    assert!(art.final_training_loss < 0.01, "{}", art.final_training_loss);
    let pred = ann_predict(&art, &data.features).unwrap();
    let mse = pred.iter().zip(&data.target).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / pred.len() as f64;
    assert_eq!(mse, art.final_training_loss);
}

#[test]
fn zero_epoch_output_variance_matches_initialization() {
    // Uniform(±√(3/fan_in)) weights have variance 1/fan_in, so each ReLU
    // layer halves the second moment: E[y²] = E[x²] / 2^L.
    let layers = 3;
    let data = random_problem(400, 10, 9);
    let input_moment: f64 = data.features.as_slice().iter().map(|v| v * v).sum::<f64>() / data.features.as_slice().len() as f64;
    let expected = input_moment / 2f64.powi(layers as i32);
    let mut acc = 0.0;
    let reps = 40;
    for seed in 0..reps {
        let art = untrained_ann(layers, 128, Activation::Relu, &data, seed);
        assert!(art.loss_curve.is_empty());
        let pred = ann_predict(&art, &data.features).unwrap();
        acc += pred.iter().map(|p| p * p).sum::<f64>() / pred.len() as f64;
    }
    let observed = acc / reps as f64;
    assert!((observed / expected - 1.0).abs() < 0.2, "observed {observed}, expected {expected}");
}

#[test]
fn table_configurations_are_valid() {
    assert!(AnnConfig { hidden_layers: 32, neurons: 64, ..AnnConfig::default() }.validate().is_ok());
    assert!(RnnConfig { hidden_layers: 24, neurons: 32, batch_size: 4, ..RnnConfig::default() }.validate().is_ok());
    assert!(AnnConfig { hidden_layers: 65, ..AnnConfig::default() }.validate().is_err());
    assert!(AnnConfig { neurons: 5, ..AnnConfig::default() }.validate().is_err());
    assert!(RnnConfig { hidden_layers: 49, ..RnnConfig::default() }.validate().is_err());
    assert!(RnnConfig { hidden_layers: 1, ..RnnConfig::default() }.validate().is_err());
}

#[test]
fn zero_network_predicts_zero() {
    let data = random_problem(5, 3, 1);
    let mut art = untrained_ann(2, 6, Activation::Tanh, &data, 1);
    if let Network::Mlp(m) = &mut art.network {
        m.params.iter_mut().for_each(|p| *p = 0.0);
    }
    assert!(ann_predict(&art, &data.features).unwrap().iter().all(|&p| p == 0.0));
}

#[test]
fn batched_and_single_row_predictions_agree() {
    let data = random_problem(30, 4, 3);
    let art = ann_train(&data, &AnnConfig { epochs: 5, seed: 2, ..AnnConfig::default() }).unwrap();
    let batched = ann_predict(&art, &data.features).unwrap();
    for r in 0..data.len() {
        let single = ann_predict_row(&art, data.features.row(r)).unwrap();
        assert!((single - batched[r]).abs() <= 1e-12);
    }
    assert!(matches!(ann_predict(&art, &Matrix::zeros(2, 5)), Err(Error::Shape(_))));
}

#[test]
fn training_is_bit_reproducible() {
    let data = random_problem(60, 3, 8);
    let cfg = AnnConfig { epochs: 20, seed: 99, ..AnnConfig::default() };
    let a = ann_train(&data, &cfg).unwrap();
    let b = ann_train(&data, &cfg).unwrap();
    assert_eq!(a, b);
    let rcfg = RnnConfig { epochs: 5, hidden_layers: 2, neurons: 6, window: 3, seed: 4, ..RnnConfig::default() };
    let a = rnn_train(&data, &rcfg).unwrap();
    let b = rnn_train(&data, &rcfg).unwrap();
    assert_eq!(a, b);
    let seq = data.features.select_rows(0..3);
    assert_eq!(rnn_predict(&a, &seq).unwrap().to_bits(), rnn_predict(&a, &seq).unwrap().to_bits());
}

#[test]
fn artifacts_round_trip_exactly() {
    let data = random_problem(40, 3, 8);
    let a = rnn_train(&data, &RnnConfig { epochs: 3, hidden_layers: 2, neurons: 6, window: 2, ..RnnConfig::default() }).unwrap();
    let text = artifact::to_json(&a).unwrap();
    assert_eq!(artifact::peek_kind(&text).unwrap(), "network");
    let back: ModelArtifact<f64> = artifact::from_json(&text).unwrap();
    assert_eq!(a, back);
}

#[test]
fn window_must_be_shorter_than_sample() {
    let data = random_problem(20, 2, 1);
    let cfg = RnnConfig { window: 20, ..RnnConfig::default() };
    assert!(matches!(rnn_train(&data, &cfg), Err(Error::Length(_))));
    let art = rnn_train(&data, &RnnConfig { window: 3, epochs: 0, hidden_layers: 2, neurons: 6, ..RnnConfig::default() }).unwrap();
    assert!(matches!(rnn_predict(&art, &data.features.select_rows(0..4)), Err(Error::Shape(_))));
}

#[test]
fn lstm_hidden_state_norm_is_bounded() {
    let data = random_problem(30, 2, 5);
    let art = rnn_train(&data, &RnnConfig { window: 6, epochs: 0, hidden_layers: 2, neurons: 16, ..RnnConfig::default() }).unwrap();
    let seq = Matrix::from_fn(6, 2, |_, c| if c == 0 { 3.0 } else { -2.0 });
    let h = rnn_hidden_state(&art, &seq).unwrap();
    assert!(h.iter().map(|v| v * v).sum::<f64>().sqrt() <= 4.0);
}

#[test]
fn adam_ignores_zero_gradient() {
    let mut params = vec![1.0, -2.0, 3.5];
    let before = params.clone();
    let mut adam = Adam::new(3, 1e-3);
    for _ in 0..5 {
        adam.step(&mut params, &[0.0, 0.0, 0.0]);
    }
    assert_eq!(params, before);
}

#[test]
fn full_batch_linear_model_loss_is_nonincreasing() {
    let mut rng = rng_from_seed(12);
    let x = Matrix::from_fn(80, 3, |_, _| StandardNormal.sample(&mut rng));
    let y: Vec<f64> = (0..80).map(|r| 1.5 * x[(r, 0)] - 0.5 * x[(r, 2)] + 0.3).collect();
    let mut mlp = Mlp::<f64>::new(3, &[], Activation::Linear);
    mlp.initialize(&mut rng_from_seed(1));
    let mut adam = Adam::new(mlp.params.len(), 1e-3);
    let data = dataset(x, y);
    let mut art = ModelArtifact::from_network(Network::Mlp(mlp), TrainingConfig::Ann(AnnConfig::default()));
    let mut last = f64::INFINITY;
    for _ in 0..300 {
        let grad = itac_core::neural::loss_gradient(&art, &data.features, &data.target).unwrap();
        if let Network::Mlp(m) = &mut art.network {
            adam.step(&mut m.params, &grad);
        }
        let loss = itac_core::neural::network_mse(&art, &data.features, &data.target).unwrap();
        assert!(loss <= last);
        last = loss;
    }
}

#[test]
fn exploding_targets_raise_divergence() {
    let data = dataset(Matrix::from_fn(10, 2, |r, c| (r + c) as f64), vec![1e200; 10]);
    let err = ann_train(&data, &AnnConfig { epochs: 3, ..AnnConfig::default() }).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 1 }));
}

#[test]
fn elman_learns_ar1_one_step_ahead() {
    let (x, eps) = itac_core::synthetic::ar1(500, 0.8, 21);
    let data = dataset(Matrix::from_vec(500, 1, x.clone()).unwrap(), x.clone());
    let start = data.span.start;
    let train = MonthRange::new(start, start.offset(349)).unwrap();
    let valid = MonthRange::new(start.offset(350), start.offset(399)).unwrap();
    let cfg = RnnConfig {
        cell: Cell::Elman,
        hidden_layers: 2,
        neurons: 6,
        window: 1,
        learning_rate: 1e-3,
        epochs: 600,
        batch_size: 4,
        seed: 3,
        ..RnnConfig::default()
    };
    let art = rnn_train_split(&data, Some(&train), Some(&valid), &cfg).unwrap();
    let fitted = fitted_series(&art, &data).unwrap();
    let offset = cfg.window;
    let model: f64 = (400..500).map(|t| (fitted.values[t - offset] - x[t]).powi(2)).sum::<f64>() / 100.0;
    let oracle: f64 = (400..500).map(|t| eps[t].powi(2)).sum::<f64>() / 100.0;
    assert!((model / oracle - 1.0).abs() <= 0.10, "model {model} vs innovation {oracle}");
}

#[test]
fn early_stopping_restores_best_validation_weights() {
    let data = random_problem(120, 3, 30);
    let start = data.span.start;
    let train = MonthRange::new(start, start.offset(79)).unwrap();
    let valid = MonthRange::new(start.offset(80), start.offset(119)).unwrap();
    let cfg = AnnConfig { epochs: 400, patience: 10, learning_rate: 1e-2, ..AnnConfig::default() };
    let art = ann_train_split(&data, Some(&train), Some(&valid), &cfg).unwrap();
    let best = art.validation_curve.iter().cloned().fold(f64::INFINITY, f64::min);
    if art.best_epoch > 0 {
        assert_eq!(art.validation_curve[art.best_epoch - 1], best);
    }
    assert!(art.validation_curve.len() < 400);
}

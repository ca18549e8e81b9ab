//! Feed-forward and recurrent index constructions trained with Adam.
//!
//! Samples follow one convention everywhere. A feed-forward network maps
//! feature row `t` to target `t`. A recurrent network with window `w` maps
//! feature rows `t-w..t` (exclusive of `t`) to target `t`, so its first
//! prediction is for row `w`.

mod mlp;
mod rnn;

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use mlp::Mlp;
pub use rnn::{Cell, Rnn};

use crate::artifact::Artifact;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{rng_from_seed, split_seed};
use crate::scalar::Real;
use crate::series::{MonthRange, TimeSeries};
use crate::transform::AlignedDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    /// Identity; only for diagnostics on linear models.
    Linear,
}

impl Activation {
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(T::zero()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output<T: Real>(self, a: T) -> T {
        match self {
            Activation::Tanh => T::one() - a * a,
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Linear => T::one(),
        }
    }
}

pub const ANN_LAYERS: (usize, usize) = (2, 64);
pub const RNN_LAYERS: (usize, usize) = (2, 48);
pub const NEURONS: (usize, usize) = (6, 256);
pub const DEFAULT_PATIENCE: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnConfig {
    pub hidden_layers: usize,
    pub neurons: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables early stopping.
    pub patience: usize,
}

impl Default for AnnConfig {
    fn default() -> Self {
        AnnConfig {
            hidden_layers: 2,
            neurons: 32,
            activation: Activation::Tanh,
            learning_rate: 1e-3,
            epochs: 500,
            batch_size: 32,
            seed: 0,
            patience: DEFAULT_PATIENCE,
        }
    }
}

fn check_common(layers: usize, bounds: (usize, usize), neurons: usize, lr: f64, batch: usize) -> Result<()> {
    if !(bounds.0..=bounds.1).contains(&layers) {
        return Err(Error::Config(format!(
            "hidden_layers {layers} outside [{}, {}]",
            bounds.0, bounds.1
        )));
    }
    if !(NEURONS.0..=NEURONS.1).contains(&neurons) {
        return Err(Error::Config(format!(
            "neurons {neurons} outside [{}, {}]",
            NEURONS.0, NEURONS.1
        )));
    }
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::Config(format!("learning_rate must be positive, got {lr}")));
    }
    if batch == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    Ok(())
}

impl AnnConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.hidden_layers, ANN_LAYERS, self.neurons, self.learning_rate, self.batch_size)
    }

    /// Parameter count for `input` features.
    pub fn parameter_count(&self, input: usize) -> usize {
        let h = self.neurons;
        (input + 1) * h + (self.hidden_layers - 1) * (h + 1) * h + h + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RnnConfig {
    pub cell: Cell,
    pub hidden_layers: usize,
    pub neurons: usize,
    /// Months of features fed per prediction.
    pub window: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub patience: usize,
    pub forget_bias: f64,
}

impl Default for RnnConfig {
    fn default() -> Self {
        RnnConfig {
            cell: Cell::Lstm,
            hidden_layers: 2,
            neurons: 32,
            window: 6,
            learning_rate: 1e-3,
            epochs: 500,
            batch_size: 4,
            seed: 0,
            patience: DEFAULT_PATIENCE,
            forget_bias: 1.0,
        }
    }
}

impl RnnConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.hidden_layers, RNN_LAYERS, self.neurons, self.learning_rate, self.batch_size)?;
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn parameter_count(&self, input: usize) -> usize {
        let g = match self.cell {
            Cell::Elman => 1,
            Cell::Lstm => 4,
        };
        let h = self.neurons;
        g * h * (input + h + 1) + (self.hidden_layers - 1) * g * h * (2 * h + 1) + h + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", bound = "")]
pub enum Network<T: Real> {
    Mlp(Mlp<T>),
    Rnn(Rnn<T>),
}

impl<T: Real> Network<T> {
    fn params(&self) -> &[T] {
        match self {
            Network::Mlp(m) => &m.params,
            Network::Rnn(r) => &r.params,
        }
    }

    fn params_mut(&mut self) -> &mut Vec<T> {
        match self {
            Network::Mlp(m) => &mut m.params,
            Network::Rnn(r) => &mut r.params,
        }
    }

    fn input_width(&self) -> usize {
        match self {
            Network::Mlp(m) => m.input_width(),
            Network::Rnn(r) => r.input,
        }
    }

    fn predict(&self, data: &Samples<'_, T>, target_row: usize) -> T {
        match self {
            Network::Mlp(m) => m.forward(data.inputs.row(target_row)),
            Network::Rnn(r) => r.forward(&data.window_rows(target_row)),
        }
    }

    /// Adds `scale · ∂(ŷ−y)²/∂θ` for one sample to `grad`; returns ŷ.
    fn accumulate(&self, data: &Samples<'_, T>, target_row: usize, scale: T, grad: &mut [T]) -> T {
        let y = data.targets[target_row];
        match self {
            Network::Mlp(m) => {
                let (pred, cache) = m.forward_cached(data.inputs.row(target_row));
                m.backward(&cache, scale * T::of(2.0) * (pred - y), grad);
                pred
            }
            Network::Rnn(r) => {
                let (pred, cache) = r.forward_cached(&data.window_rows(target_row));
                r.backward(&cache, scale * T::of(2.0) * (pred - y), grad);
                pred
            }
        }
    }
}

/// Feature matrix and targets with the sample convention of the network.
struct Samples<'a, T: Real> {
    inputs: &'a Matrix<T>,
    targets: &'a [T],
    window: usize,
}

impl<'a, T: Real> Samples<'a, T> {
    fn window_rows(&self, target_row: usize) -> Vec<&'a [T]> {
        (target_row - self.window..target_row).map(|r| self.inputs.row(r)).collect()
    }

    /// Rows that can be predicted.
    fn rows(&self) -> Range<usize> {
        self.window..self.targets.len()
    }

    fn mse(&self, net: &Network<T>, rows: &[usize]) -> T {
        if rows.is_empty() {
            return T::zero();
        }
        let s: T = rows
            .iter()
            .map(|&i| {
                let e = net.predict(self, i) - self.targets[i];
                e * e
            })
            .sum();
        s / T::of_usize(rows.len())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T: Real> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize, learning_rate: T) -> Self {
        Adam {
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] = params[i] - self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TrainingConfig {
    Ann(AnnConfig),
    Rnn(RnnConfig),
}

/// Fitted network plus everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelArtifact<T: Real> {
    pub network: Network<T>,
    pub config: TrainingConfig,
    pub init_scheme: String,
    pub feature_names: Vec<String>,
    /// Training-range MSE at the returned weights.
    pub final_training_loss: T,
    /// Training-range MSE after each epoch.
    pub loss_curve: Vec<T>,
    /// Validation MSE after each epoch (empty without validation).
    pub validation_curve: Vec<T>,
    /// Epoch whose weights were kept (0 = initialization).
    pub best_epoch: usize,
}

impl<T: Real> Artifact for ModelArtifact<T> {
    const KIND: &'static str = "network";
}

impl<T: Real> ModelArtifact<T> {
    /// Wraps an explicitly built network (no training).
    pub fn from_network(network: Network<T>, config: TrainingConfig) -> Self {
        ModelArtifact {
            network,
            config,
            init_scheme: "explicit".into(),
            feature_names: Vec::new(),
            final_training_loss: T::zero(),
            loss_curve: Vec::new(),
            validation_curve: Vec::new(),
            best_epoch: 0,
        }
    }

    pub fn window(&self) -> usize {
        match &self.config {
            TrainingConfig::Ann(_) => 0,
            TrainingConfig::Rnn(c) => c.window,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.network.params().len()
    }

    pub fn parameters(&self) -> &[T] {
        self.network.params()
    }
}

struct TrainSettings {
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    patience: usize,
}

struct TrainOutcome<T> {
    loss_curve: Vec<T>,
    validation_curve: Vec<T>,
    best_epoch: usize,
    final_loss: T,
}

fn train_loop<T: Real>(
    net: &mut Network<T>,
    data: &Samples<'_, T>,
    train: &[usize],
    validation: &[usize],
    s: &TrainSettings,
) -> Result<TrainOutcome<T>> {
    if train.is_empty() {
        return Err(Error::Length("no training samples".into()));
    }
    let mut rng = rng_from_seed(split_seed(s.seed, "shuffle"));
    let mut adam = Adam::new(net.params().len(), T::of(s.learning_rate));
    let mut grad = vec![T::zero(); net.params().len()];
    let mut order = train.to_vec();
    let mut loss_curve = Vec::with_capacity(s.epochs);
    let mut validation_curve = Vec::new();
    let early = !validation.is_empty() && s.patience > 0;
    let mut best = (data.mse(net, validation), 0usize, net.params().to_vec());
    let mut stale = 0;
    for epoch in 1..=s.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(s.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::of_usize(batch.len());
            for &i in batch {
                net.accumulate(data, i, scale, &mut grad);
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            adam.step(net.params_mut(), &grad);
        }
        let loss = data.mse(net, train);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        loss_curve.push(loss);
        if !validation.is_empty() {
            let v = data.mse(net, validation);
            if !v.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            validation_curve.push(v);
            if v < best.0 {
                best = (v, epoch, net.params().to_vec());
                stale = 0;
            } else {
                stale += 1;
            }
            if early && stale >= s.patience {
                break;
            }
        }
    }
    let best_epoch = if early {
        *net.params_mut() = best.2;
        best.1
    } else {
        loss_curve.len()
    };
    Ok(TrainOutcome {
        final_loss: data.mse(net, train),
        loss_curve,
        validation_curve,
        best_epoch,
    })
}

/// Rows of `dataset` whose months fall in `range`.
fn rows_in(dataset_span: &MonthRange, range: Option<&MonthRange>, all: Range<usize>) -> Result<Vec<usize>> {
    match range {
        None => Ok(all.collect()),
        Some(r) => {
            let start = dataset_span
                .index_of(r.start)
                .filter(|_| dataset_span.contains(r.end))
                .ok_or_else(|| Error::InvalidSpan(format!("{r} not within dataset span {dataset_span}")))?;
            Ok((start..start + r.len()).filter(|i| all.contains(i)).collect())
        }
    }
}

fn ensure_finite<T: Real>(dataset: &AlignedDataset<T>) -> Result<()> {
    if !dataset.features.is_finite() || !crate::scalar::all_finite(&dataset.target) {
        return Err(Error::numeric("dataset contains non-finite values"));
    }
    Ok(())
}

/// Trains on every row of `dataset`, without early stopping.
pub fn ann_train<T: Real>(dataset: &AlignedDataset<T>, config: &AnnConfig) -> Result<ModelArtifact<T>> {
    ann_train_split(dataset, None, None, config)
}

/// Trains on rows in `train` (all rows when `None`), early-stopping on `validation`.
pub fn ann_train_split<T: Real>(
    dataset: &AlignedDataset<T>,
    train: Option<&MonthRange>,
    validation: Option<&MonthRange>,
    config: &AnnConfig,
) -> Result<ModelArtifact<T>> {
    let all = 0..dataset.len();
    let train_rows = rows_in(&dataset.span, train, all.clone())?;
    let val_rows = match validation {
        Some(v) => rows_in(&dataset.span, Some(v), all)?,
        None => Vec::new(),
    };
    ann_train_rows(dataset, &train_rows, &val_rows, config)
}

/// Trains on an arbitrary set of rows, early-stopping on `validation` when non-empty.
pub fn ann_train_rows<T: Real>(
    dataset: &AlignedDataset<T>,
    train: &[usize],
    validation: &[usize],
    config: &AnnConfig,
) -> Result<ModelArtifact<T>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Length("empty dataset".into()));
    }
    ensure_finite(dataset)?;
    check_rows(train, validation, 0, dataset.len())?;
    let mut mlp = Mlp::new(
        dataset.width(),
        &vec![config.neurons; config.hidden_layers],
        config.activation,
    );
    mlp.initialize(&mut rng_from_seed(split_seed(config.seed, "init")));
    let mut net = Network::Mlp(mlp);
    let data = Samples {
        inputs: &dataset.features,
        targets: &dataset.target,
        window: 0,
    };
    let out = train_loop(
        &mut net,
        &data,
        train,
        validation,
        &TrainSettings {
            learning_rate: config.learning_rate,
            epochs: config.epochs,
            batch_size: config.batch_size,
            seed: config.seed,
            patience: config.patience,
        },
    )?;
    Ok(ModelArtifact {
        network: net,
        config: TrainingConfig::Ann(config.clone()),
        init_scheme: "uniform(±sqrt(3/fan_in)) weights, zero biases".into(),
        feature_names: dataset.feature_names.clone(),
        final_training_loss: out.final_loss,
        loss_curve: out.loss_curve,
        validation_curve: out.validation_curve,
        best_epoch: out.best_epoch,
    })
}

fn check_rows(train: &[usize], validation: &[usize], first: usize, len: usize) -> Result<()> {
    if let Some(r) = train.iter().chain(validation).find(|&&r| r < first || r >= len) {
        return Err(Error::Length(format!("row {r} has no complete sample (valid rows {first}..{len})")));
    }
    Ok(())
}

pub fn rnn_train<T: Real>(dataset: &AlignedDataset<T>, config: &RnnConfig) -> Result<ModelArtifact<T>> {
    rnn_train_split(dataset, None, None, config)
}

/// Recurrent counterpart of [`ann_train_split`]; ranges refer to target months.
pub fn rnn_train_split<T: Real>(
    dataset: &AlignedDataset<T>,
    train: Option<&MonthRange>,
    validation: Option<&MonthRange>,
    config: &RnnConfig,
) -> Result<ModelArtifact<T>> {
    let usable = config.window.min(dataset.len())..dataset.len();
    let train_rows = rows_in(&dataset.span, train, usable.clone())?;
    let val_rows = match validation {
        Some(v) => rows_in(&dataset.span, Some(v), usable)?,
        None => Vec::new(),
    };
    rnn_train_rows(dataset, &train_rows, &val_rows, config)
}

/// Recurrent counterpart of [`ann_train_rows`]; every row must be at least `window`.
pub fn rnn_train_rows<T: Real>(
    dataset: &AlignedDataset<T>,
    train: &[usize],
    validation: &[usize],
    config: &RnnConfig,
) -> Result<ModelArtifact<T>> {
    config.validate()?;
    if config.window >= dataset.len() {
        return Err(Error::Length(format!(
            "window {} needs more than {} observations",
            config.window,
            dataset.len()
        )));
    }
    ensure_finite(dataset)?;
    check_rows(train, validation, config.window, dataset.len())?;
    let mut rnn = Rnn::new(config.cell, dataset.width(), config.neurons, config.hidden_layers);
    rnn.initialize(&mut rng_from_seed(split_seed(config.seed, "init")), config.forget_bias);
    let mut net = Network::Rnn(rnn);
    let data = Samples {
        inputs: &dataset.features,
        targets: &dataset.target,
        window: config.window,
    };
    let out = train_loop(
        &mut net,
        &data,
        train,
        validation,
        &TrainSettings {
            learning_rate: config.learning_rate,
            epochs: config.epochs,
            batch_size: config.batch_size,
            seed: config.seed,
            patience: config.patience,
        },
    )?;
    let forget = if config.cell == Cell::Lstm {
        format!(", forget-gate bias {}", config.forget_bias)
    } else {
        String::new()
    };
    Ok(ModelArtifact {
        network: net,
        config: TrainingConfig::Rnn(config.clone()),
        init_scheme: format!("uniform(±sqrt(3/fan_in)) weights, zero biases{forget}"),
        feature_names: dataset.feature_names.clone(),
        final_training_loss: out.final_loss,
        loss_curve: out.loss_curve,
        validation_curve: out.validation_curve,
        best_epoch: out.best_epoch,
    })
}

/// Network predictions for the given rows under its sample convention.
pub fn predict_rows<T: Real>(artifact: &ModelArtifact<T>, dataset: &AlignedDataset<T>, rows: &[usize]) -> Result<Vec<T>> {
    check_width(artifact, dataset.width())?;
    let data = Samples {
        inputs: &dataset.features,
        targets: &dataset.target,
        window: artifact.window(),
    };
    check_rows(rows, &[], artifact.window(), dataset.len())?;
    Ok(rows.iter().map(|&r| artifact.network.predict(&data, r)).collect())
}

fn check_width<T: Real>(artifact: &ModelArtifact<T>, cols: usize) -> Result<()> {
    let want = artifact.network.input_width();
    if cols != want {
        return Err(Error::shape(format!("network expects {want} features, got {cols}")));
    }
    Ok(())
}

/// One prediction per feature row.
pub fn ann_predict<T: Real>(artifact: &ModelArtifact<T>, features: &Matrix<T>) -> Result<Vec<T>> {
    let Network::Mlp(mlp) = &artifact.network else {
        return Err(Error::Artifact("not a feed-forward network".into()));
    };
    check_width(artifact, features.cols())?;
    Ok((0..features.rows()).map(|r| mlp.forward(features.row(r))).collect())
}

pub fn ann_predict_row<T: Real>(artifact: &ModelArtifact<T>, features: &[T]) -> Result<T> {
    let m = Matrix::from_vec(1, features.len(), features.to_vec())?;
    Ok(ann_predict(artifact, &m)?[0])
}

/// Prediction from exactly one window of feature rows (oldest first).
pub fn rnn_predict<T: Real>(artifact: &ModelArtifact<T>, sequence: &Matrix<T>) -> Result<T> {
    let Network::Rnn(rnn) = &artifact.network else {
        return Err(Error::Artifact("not a recurrent network".into()));
    };
    check_width(artifact, sequence.cols())?;
    if sequence.rows() != artifact.window() {
        return Err(Error::shape(format!(
            "sequence has {} rows, window is {}",
            sequence.rows(),
            artifact.window()
        )));
    }
    let rows: Vec<&[T]> = (0..sequence.rows()).map(|r| sequence.row(r)).collect();
    Ok(rnn.forward(&rows))
}

/// Top-layer hidden state after feeding `sequence`.
pub fn rnn_hidden_state<T: Real>(artifact: &ModelArtifact<T>, sequence: &Matrix<T>) -> Result<Vec<T>> {
    let Network::Rnn(rnn) = &artifact.network else {
        return Err(Error::Artifact("not a recurrent network".into()));
    };
    check_width(artifact, sequence.cols())?;
    let rows: Vec<&[T]> = (0..sequence.rows()).map(|r| sequence.row(r)).collect();
    Ok(rnn.final_hidden(&rows))
}

/// Fitted one-step series over a dataset: every row for feed-forward
/// networks, rows from `window` on for recurrent ones.
pub fn fitted_series<T: Real>(artifact: &ModelArtifact<T>, dataset: &AlignedDataset<T>) -> Result<TimeSeries<T>> {
    check_width(artifact, dataset.width())?;
    let data = Samples {
        inputs: &dataset.features,
        targets: &dataset.target,
        window: artifact.window(),
    };
    let rows = data.rows();
    if rows.is_empty() {
        return Err(Error::Length("dataset shorter than the network window".into()));
    }
    let start = dataset.span.start.offset(rows.start as i32);
    let values = rows.map(|r| artifact.network.predict(&data, r)).collect();
    Ok(TimeSeries::monthly(start, values))
}

/// MSE of the network on `inputs`/`targets` under its sample convention.
pub fn network_mse<T: Real>(artifact: &ModelArtifact<T>, inputs: &Matrix<T>, targets: &[T]) -> Result<T> {
    check_width(artifact, inputs.cols())?;
    if inputs.rows() != targets.len() {
        return Err(Error::shape("inputs and targets differ in length"));
    }
    let data = Samples {
        inputs,
        targets,
        window: artifact.window(),
    };
    let rows: Vec<usize> = data.rows().collect();
    Ok(data.mse(&artifact.network, &rows))
}

/// Analytic MSE gradient with respect to every parameter.
pub fn loss_gradient<T: Real>(artifact: &ModelArtifact<T>, inputs: &Matrix<T>, targets: &[T]) -> Result<Vec<T>> {
    check_width(artifact, inputs.cols())?;
    let data = Samples {
        inputs,
        targets,
        window: artifact.window(),
    };
    let rows: Vec<usize> = data.rows().collect();
    if rows.is_empty() {
        return Err(Error::Length("batch has no complete samples".into()));
    }
    let mut grad = vec![T::zero(); artifact.parameter_count()];
    let scale = T::one() / T::of_usize(rows.len());
    for &i in &rows {
        artifact.network.accumulate(&data, i, scale, &mut grad);
    }
    Ok(grad)
}

/// Largest parameter count checked exhaustively by [`gradient_check`].
pub const GRADIENT_CHECK_FULL: usize = 10_000;
const GRADIENT_CHECK_SUBSET: usize = 512;

/// Maximum relative error between analytic and central-difference gradients
/// of the batch MSE, `|a − n| / max(|a|, |n|, 1e-6)`.
///
/// Networks above [`GRADIENT_CHECK_FULL`] parameters are checked on a seeded
/// random subset of 512 parameters.
pub fn gradient_check<T: Real>(artifact: &ModelArtifact<T>, inputs: &Matrix<T>, targets: &[T], epsilon: T) -> Result<T> {
    if !(epsilon >= T::of(1e-7) && epsilon <= T::of(1e-3)) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let analytic = loss_gradient(artifact, inputs, targets)?;
    let n = analytic.len();
    let indices: Vec<usize> = if n <= GRADIENT_CHECK_FULL {
        (0..n).collect()
    } else {
        let seed = match &artifact.config {
            TrainingConfig::Ann(c) => c.seed,
            TrainingConfig::Rnn(c) => c.seed,
        };
        let mut rng = rng_from_seed(split_seed(seed, "gradient-check"));
        let mut picked: Vec<usize> = (0..GRADIENT_CHECK_SUBSET).map(|_| rng.random_range(0..n)).collect();
        picked.sort_unstable();
        picked.dedup();
        picked
    };
    let mut probe = artifact.clone();
    let floor = T::of(1e-6);
    let mut worst = T::zero();
    for i in indices {
        let orig = probe.network.params()[i];
        probe.network.params_mut()[i] = orig + epsilon;
        let up = network_mse(&probe, inputs, targets)?;
        probe.network.params_mut()[i] = orig - epsilon;
        let down = network_mse(&probe, inputs, targets)?;
        probe.network.params_mut()[i] = orig;
        let numeric = (up - down) / (T::of(2.0) * epsilon);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}

//! Autoencoder recommender with a stochastic latent layer.
//!
//! Each artist's similarity row is one training example. The encoder maps a
//! (dropout-corrupted) binary row through one tanh hidden layer to a latent
//! mean and log-variance; the decoder maps a reparameterized latent sample
//! through one tanh hidden layer to a score per artist. The loss is the mean
//! squared reconstruction error against the uncorrupted row plus an optional
//! `kl_weight`-scaled KL divergence to a standard normal. Inference uses the
//! latent mean and no dropout, so it is a pure function of the input.
//!
//! All parameters live in one flat buffer described by [`Layout`]; gradients
//! and Adam moments share that layout.

use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::SimilarityGraph;
use crate::ranking::{rank_by_score, UserVector};

#[derive(Debug, Error, PartialEq)]
pub enum VaeError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("cannot train on an empty similarity graph")]
    EmptyGraph,
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("dimension mismatch: model expects {expected} artists, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("parameter buffer has {found} values, layout needs {expected}")]
    ParameterCount { expected: usize, found: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("candidate list is empty")]
    NoCandidates,
    #[error("unknown candidate index {0}")]
    UnknownCandidate(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    /// Number of artists. `0` means "take it from the training graph".
    pub input_dim: usize,
    pub hidden: usize,
    pub bottleneck: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Weight of the KL term; 0 trains a plain denoising autoencoder.
    pub kl_weight: f64,
    /// Fraction of rows held out for validation and early stopping.
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            input_dim: 0,
            hidden: 600,
            bottleneck: 200,
            dropout: 0.2,
            batch_size: 250,
            epochs: 100,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            kl_weight: 0.0,
            validation_fraction: 0.0,
            patience: 5,
            seed: 0,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        let err = |m| Err(VaeError::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.dropout) {
            return err("dropout must be in [0, 1)");
        }
        if self.bottleneck == 0 || self.hidden == 0 {
            return err("layer widths must be >= 1");
        }
        if self.batch_size == 0 {
            return err("batch size must be >= 1");
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return err("kl weight must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return err("adam betas must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return err("validation fraction must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    EncoderWeight,
    EncoderBias,
    MeanWeight,
    MeanBias,
    LogVarWeight,
    LogVarBias,
    DecoderWeight,
    DecoderBias,
    OutputWeight,
    OutputBias,
}

impl Param {
    pub const ALL: [Param; 10] = [
        Param::EncoderWeight,
        Param::EncoderBias,
        Param::MeanWeight,
        Param::MeanBias,
        Param::LogVarWeight,
        Param::LogVarBias,
        Param::DecoderWeight,
        Param::DecoderBias,
        Param::OutputWeight,
        Param::OutputBias,
    ];
}

/// Offsets of every tensor inside the flat parameter buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl Layout {
    /// `(rows, cols)`; biases are `(1, n)`.
    pub fn shape(&self, p: Param) -> (usize, usize) {
        let Layout { input, hidden, latent } = *self;
        match p {
            Param::EncoderWeight => (input, hidden),
            Param::EncoderBias | Param::DecoderBias => (1, hidden),
            Param::MeanWeight | Param::LogVarWeight => (hidden, latent),
            Param::MeanBias | Param::LogVarBias => (1, latent),
            Param::DecoderWeight => (latent, hidden),
            Param::OutputWeight => (hidden, input),
            Param::OutputBias => (1, input),
        }
    }

    pub fn range(&self, p: Param) -> Range<usize> {
        let mut start = 0;
        for q in Param::ALL {
            let (r, c) = self.shape(q);
            if q == p {
                return start..start + r * c;
            }
            start += r * c;
        }
        unreachable!()
    }

    pub fn len(&self) -> usize {
        Param::ALL.iter().map(|&p| {
            let (r, c) = self.shape(p);
            r * c
        }).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn mat<'a>(&self, buf: &'a [f64], p: Param) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape(self.shape(p), &buf[self.range(p)]).expect("layout")
    }

    fn vec<'a>(&self, buf: &'a [f64], p: Param) -> ArrayView1<'a, f64> {
        ArrayView1::from(&buf[self.range(p)])
    }

    fn mat_mut<'a>(&self, buf: &'a mut [f64], p: Param) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape(self.shape(p), &mut buf[self.range(p)]).expect("layout")
    }

    fn vec_mut<'a>(&self, buf: &'a mut [f64], p: Param) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut buf[self.range(p)])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel {
    config: VaeConfig,
    layout: Layout,
    params: Vec<f64>,
}

impl VaeModel {
    /// All parameters zero. `config.input_dim` must be set.
    pub fn zeros(config: VaeConfig) -> Result<Self, VaeError> {
        let layout = Self::layout_for(&config)?;
        Ok(VaeModel {
            config,
            params: vec![0.0; layout.len()],
            layout,
        })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init<R: Rng>(config: VaeConfig, rng: &mut R) -> Result<Self, VaeError> {
        let mut model = Self::zeros(config)?;
        let layout = model.layout;
        for p in Param::ALL {
            let (rows, cols) = layout.shape(p);
            if rows == 1 {
                continue;
            }
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            for v in &mut model.params[layout.range(p)] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn from_parts(config: VaeConfig, params: Vec<f64>) -> Result<Self, VaeError> {
        let layout = Self::layout_for(&config)?;
        if params.len() != layout.len() {
            return Err(VaeError::ParameterCount {
                expected: layout.len(),
                found: params.len(),
            });
        }
        Ok(VaeModel { config, layout, params })
    }

    fn layout_for(config: &VaeConfig) -> Result<Layout, VaeError> {
        config.validate()?;
        if config.input_dim == 0 {
            return Err(VaeError::InvalidConfig("input dimension must be >= 1"));
        }
        Ok(Layout {
            input: config.input_dim,
            hidden: config.hidden,
            latent: config.bottleneck,
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_artists(&self) -> usize {
        self.layout.input
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    fn check_rows(&self, rows: &[&[usize]]) -> Result<(), VaeError> {
        if rows.is_empty() {
            return Err(VaeError::EmptyBatch);
        }
        let n = self.layout.input;
        match rows.iter().flat_map(|r| r.iter()).find(|&&j| j >= n) {
            Some(&j) => Err(VaeError::DimensionMismatch {
                expected: n,
                found: j + 1,
            }),
            None => Ok(()),
        }
    }
}

/// Inverted dropout: each coordinate is zeroed with probability `p`,
/// survivors are scaled by `1 / (1 - p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn scales<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.p);
        (0..n)
            .map(|_| if rng.random::<f64>() < self.p { 0.0 } else { keep })
            .collect()
    }
}

/// A fixed realization of the training noise for one batch: dropout scales
/// for every nonzero input and the latent reparameterization draws.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    pub input_scales: Vec<Vec<f64>>,
    pub eps: Array2<f64>,
}

impl Noise {
    pub fn sample<R: Rng>(rng: &mut R, rows: &[&[usize]], dropout: f64, latent: usize) -> Self {
        let dropout = Dropout { p: dropout };
        let input_scales = rows.iter().map(|r| dropout.scales(rng, r.len())).collect();
        let eps = Array2::from_shape_simple_fn((rows.len(), latent), || StandardNormal.sample(rng));
        Noise { input_scales, eps }
    }

    /// No dropout and latent fixed at the mean.
    pub fn none(rows: &[&[usize]], latent: usize) -> Self {
        Noise {
            input_scales: rows.iter().map(|r| vec![1.0; r.len()]).collect(),
            eps: Array2::zeros((rows.len(), latent)),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Loss {
    pub mse: f64,
    /// Batch-mean KL divergence, reported whether or not it is weighted in.
    pub kl: f64,
    pub total: f64,
}

fn tanh_grad(out: &Array2<f64>, upstream: Array2<f64>) -> Array2<f64> {
    let mut d = upstream;
    Zip::from(&mut d).and(out).for_each(|d, &h| *d *= 1.0 - h * h);
    d
}

impl VaeModel {
    fn encode_input(&self, rows: &[&[usize]], scales: &[Vec<f64>]) -> Array2<f64> {
        let l = &self.layout;
        let w = l.mat(&self.params, Param::EncoderWeight);
        let b = l.vec(&self.params, Param::EncoderBias);
        let mut a1 = Array2::zeros((rows.len(), l.hidden));
        for (r, (row, sc)) in rows.iter().zip(scales).enumerate() {
            let mut out = a1.row_mut(r);
            out.assign(&b);
            for (&j, &s) in row.iter().zip(sc) {
                if s != 0.0 {
                    out.scaled_add(s, &w.row(j));
                }
            }
        }
        a1
    }

    /// Loss and, when requested, the gradient of the loss w.r.t. every
    /// parameter, for a fixed noise realization.
    fn forward_backward(&self, rows: &[&[usize]], noise: &Noise, want_grad: bool) -> (Loss, Option<Vec<f64>>) {
        let l = &self.layout;
        let p = &self.params;
        let beta = self.config.kl_weight;
        let n_rows = rows.len();
        let cells = (n_rows * l.input) as f64;

        let h1 = self.encode_input(rows, &noise.input_scales).mapv(f64::tanh);
        let mu = h1.dot(&l.mat(p, Param::MeanWeight)) + l.vec(p, Param::MeanBias);
        let logvar = h1.dot(&l.mat(p, Param::LogVarWeight)) + l.vec(p, Param::LogVarBias);
        let std = logvar.mapv(|v| (0.5 * v).exp());
        let z = &mu + &(&noise.eps * &std);
        let h2 = (z.dot(&l.mat(p, Param::DecoderWeight)) + l.vec(p, Param::DecoderBias)).mapv(f64::tanh);
        let mut diff = h2.dot(&l.mat(p, Param::OutputWeight)) + l.vec(p, Param::OutputBias);
        for (r, row) in rows.iter().enumerate() {
            for &j in *row {
                diff[[r, j]] -= 1.0;
            }
        }

        let mse = diff.iter().map(|d| d * d).sum::<f64>() / cells;
        let kl = Zip::from(&mu)
            .and(&logvar)
            .fold(0.0, |acc, &m, &lv| acc - 0.5 * (1.0 + lv - m * m - lv.exp()))
            / n_rows as f64;
        let total = if beta > 0.0 { mse + beta * kl } else { mse };
        let loss = Loss { mse, kl, total };
        if !want_grad {
            return (loss, None);
        }

        let mut grad = vec![0.0; l.len()];
        let d_out = diff * (2.0 / cells);
        l.mat_mut(&mut grad, Param::OutputWeight).assign(&h2.t().dot(&d_out));
        l.vec_mut(&mut grad, Param::OutputBias).assign(&d_out.sum_axis(Axis(0)));

        let da2 = tanh_grad(&h2, d_out.dot(&l.mat(p, Param::OutputWeight).t()));
        l.mat_mut(&mut grad, Param::DecoderWeight).assign(&z.t().dot(&da2));
        l.vec_mut(&mut grad, Param::DecoderBias).assign(&da2.sum_axis(Axis(0)));

        let dz = da2.dot(&l.mat(p, Param::DecoderWeight).t());
        let mut dmu = dz.clone();
        let mut dlogvar = &dz * &noise.eps * &std * 0.5;
        if beta > 0.0 {
            let w = beta / n_rows as f64;
            dmu.scaled_add(w, &mu);
            Zip::from(&mut dlogvar)
                .and(&logvar)
                .for_each(|d, &lv| *d += w * 0.5 * (lv.exp() - 1.0));
        }
        l.mat_mut(&mut grad, Param::MeanWeight).assign(&h1.t().dot(&dmu));
        l.vec_mut(&mut grad, Param::MeanBias).assign(&dmu.sum_axis(Axis(0)));
        l.mat_mut(&mut grad, Param::LogVarWeight).assign(&h1.t().dot(&dlogvar));
        l.vec_mut(&mut grad, Param::LogVarBias).assign(&dlogvar.sum_axis(Axis(0)));

        let dh1 = dmu.dot(&l.mat(p, Param::MeanWeight).t()) + dlogvar.dot(&l.mat(p, Param::LogVarWeight).t());
        let da1 = tanh_grad(&h1, dh1);
        l.vec_mut(&mut grad, Param::EncoderBias).assign(&da1.sum_axis(Axis(0)));
        let mut g_enc = l.mat_mut(&mut grad, Param::EncoderWeight);
        for (r, (row, sc)) in rows.iter().zip(&noise.input_scales).enumerate() {
            for (&j, &s) in row.iter().zip(sc) {
                if s != 0.0 {
                    g_enc.row_mut(j).scaled_add(s, &da1.row(r));
                }
            }
        }
        (loss, Some(grad))
    }

    /// Loss under a given noise realization, without gradients.
    pub fn loss_with_noise(&self, rows: &[&[usize]], noise: &Noise) -> Result<Loss, VaeError> {
        self.check_rows(rows)?;
        Ok(self.forward_backward(rows, noise, false).0)
    }
}

/// Loss and flat gradient for a batch of binary rows under a fixed noise realization.
pub fn loss_and_gradients_with_noise(
    model: &VaeModel,
    rows: &[&[usize]],
    noise: &Noise,
) -> Result<(Loss, Vec<f64>), VaeError> {
    model.check_rows(rows)?;
    let (loss, grad) = model.forward_backward(rows, noise, true);
    Ok((loss, grad.expect("gradient requested")))
}

/// Draws dropout and latent noise from `rng`, then computes loss and gradient.
pub fn loss_and_gradients<R: Rng>(
    model: &VaeModel,
    rows: &[&[usize]],
    rng: &mut R,
) -> Result<(Loss, Vec<f64>), VaeError> {
    model.check_rows(rows)?;
    let noise = Noise::sample(rng, rows, model.config.dropout, model.layout.latent);
    loss_and_gradients_with_noise(model, rows, &noise)
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    /// Empty unless a validation fraction was configured.
    pub validation_loss: Vec<f64>,
    pub steps_per_epoch: usize,
    pub stopped_early: bool,
}

pub fn steps_per_epoch(rows: usize, batch_size: usize) -> usize {
    rows.div_ceil(batch_size)
}

pub fn train_multvae(graph: &SimilarityGraph, config: &VaeConfig) -> Result<(VaeModel, TrainTrace), VaeError> {
    train_multvae_with(graph, config, |_, _| {})
}

/// Trains on every row of `graph`; `on_epoch` receives the epoch number and trace so far.
pub fn train_multvae_with(
    graph: &SimilarityGraph,
    config: &VaeConfig,
    mut on_epoch: impl FnMut(usize, &TrainTrace),
) -> Result<(VaeModel, TrainTrace), VaeError> {
    if graph.is_empty() {
        return Err(VaeError::EmptyGraph);
    }
    let mut config = config.clone();
    match config.input_dim {
        0 => config.input_dim = graph.len(),
        d if d != graph.len() => {
            return Err(VaeError::DimensionMismatch {
                expected: d,
                found: graph.len(),
            })
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = VaeModel::init(config.clone(), &mut rng)?;
    let mut adam = Adam::new(
        model.params.len(),
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_epsilon,
    );

    let mut order: Vec<usize> = (0..graph.len()).collect();
    let n_valid = (graph.len() as f64 * config.validation_fraction).floor() as usize;
    let mut valid = Vec::new();
    if n_valid > 0 && n_valid < graph.len() {
        order.shuffle(&mut rng);
        valid = order.split_off(graph.len() - n_valid);
        valid.sort_unstable();
        order.sort_unstable();
    }
    let valid_rows: Vec<&[usize]> = valid.iter().map(|&i| graph.row(i)).collect();

    let mut trace = TrainTrace {
        steps_per_epoch: steps_per_epoch(order.len(), config.batch_size),
        ..TrainTrace::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let rows: Vec<&[usize]> = chunk.iter().map(|&i| graph.row(i)).collect();
            let (loss, grad) = loss_and_gradients(&model, &rows, &mut rng)?;
            if !loss.total.is_finite() {
                return Err(VaeError::NonFiniteLoss { epoch });
            }
            sum += loss.total * rows.len() as f64;
            adam.step(&mut model.params, &grad);
        }
        trace.train_loss.push(sum / order.len() as f64);

        if !valid_rows.is_empty() {
            let v = eval_loss(&model, &valid_rows, config.batch_size);
            if !v.is_finite() {
                return Err(VaeError::NonFiniteLoss { epoch });
            }
            trace.validation_loss.push(v);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.params.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        on_epoch(epoch, &trace);
        if !valid_rows.is_empty() && stale >= config.patience.max(1) {
            trace.stopped_early = epoch < config.epochs;
            break;
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, trace))
}

/// Deterministic (no dropout, mean latent) loss averaged over `rows`.
fn eval_loss(model: &VaeModel, rows: &[&[usize]], batch: usize) -> f64 {
    let mut sum = 0.0;
    for chunk in rows.chunks(batch) {
        let noise = Noise::none(chunk, model.layout.latent);
        sum += model.forward_backward(chunk, &noise, false).0.total * chunk.len() as f64;
    }
    sum / rows.len() as f64
}

/// Scores every artist for a seed vector: no dropout, latent at its mean.
pub fn predict(model: &VaeModel, user: &UserVector) -> Result<Vec<f64>, VaeError> {
    if user.dim() != model.n_artists() {
        return Err(VaeError::DimensionMismatch {
            expected: model.n_artists(),
            found: user.dim(),
        });
    }
    let l = &model.layout;
    let p = &model.params;
    let rows = [user.seeds()];
    let h1 = model.encode_input(&rows, &[vec![1.0; user.seeds().len()]]).mapv(f64::tanh);
    let mu = h1.dot(&l.mat(p, Param::MeanWeight)) + l.vec(p, Param::MeanBias);
    let h2 = (mu.dot(&l.mat(p, Param::DecoderWeight)) + l.vec(p, Param::DecoderBias)).mapv(f64::tanh);
    let out: Array1<f64> = h2.row(0).dot(&l.mat(p, Param::OutputWeight)) + l.vec(p, Param::OutputBias);
    Ok(out.to_vec())
}

pub fn rank_candidates_vae(
    model: &VaeModel,
    user: &UserVector,
    candidates: &[usize],
) -> Result<Vec<(usize, f64)>, VaeError> {
    if candidates.is_empty() {
        return Err(VaeError::NoCandidates);
    }
    if let Some(&c) = candidates.iter().find(|&&c| c >= model.n_artists()) {
        return Err(VaeError::UnknownCandidate(c));
    }
    let scores = predict(model, user)?;
    Ok(rank_by_score(candidates.iter().map(|&c| (c, scores[c])).collect()))
}

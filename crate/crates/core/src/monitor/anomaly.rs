//! Anomaly Monitor: a single-hidden-layer autoencoder over scene rasters.
//! Reconstruction error above a calibrated cutoff marks the scene as out of
//! the training distribution.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CageError, Result};
use crate::raster::SceneRaster;

pub const MIN_TRAINING_SAMPLES: usize = 10;
/// Multiplier applied to the calibration quantile.
pub const THRESHOLD_SAFETY_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 0.05,
            epochs: 500,
            batch_size: 16,
            hidden: 16,
            seed: 0,
        }
    }
}

/// Encoder `sigmoid(W1·x + b1)`, decoder `W2·h + b2`. Matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub input: usize,
    pub hidden: usize,
    /// `hidden × input`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `input × hidden`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Epochs of training applied so far; zero means untrained.
    pub epochs_trained: usize,
}

/// Parameter gradients, laid out like [`Autoencoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros(ae: &Autoencoder) -> Self {
        Gradients {
            w1: vec![0.0; ae.w1.len()],
            b1: vec![0.0; ae.b1.len()],
            w2: vec![0.0; ae.w2.len()],
            b2: vec![0.0; ae.b2.len()],
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Autoencoder {
    /// Weights uniform in (−0.1, 0.1), biases zero.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if input == 0 || hidden == 0 || hidden >= input {
            return Err(CageError::invalid("autoencoder", "need 0 < hidden < input"));
        }
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-0.1..0.1)).collect() };
        let w1 = draw(hidden * input);
        let w2 = draw(input * hidden);
        Ok(Autoencoder {
            input,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; input],
            epochs_trained: 0,
        })
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.input..(j + 1) * self.input];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
                sigmoid(z)
            })
            .collect()
    }

    pub fn decode(&self, h: &[f64]) -> Vec<f64> {
        (0..self.input)
            .map(|i| {
                let row = &self.w2[i * self.hidden..(i + 1) * self.hidden];
                row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + self.b2[i]
            })
            .collect()
    }

    /// Mean squared reconstruction error of one sample.
    pub fn loss(&self, x: &[f64]) -> f64 {
        let y = self.decode(&self.encode(x));
        mse(&y, x)
    }

    pub fn mean_loss(&self, samples: &[&[f64]]) -> f64 {
        samples.iter().map(|x| self.loss(x)).sum::<f64>() / samples.len() as f64
    }

    /// Adds the gradient of `scale · loss(x)` into `g` and returns `loss(x)`.
    pub fn accumulate_gradient(&self, x: &[f64], scale: f64, g: &mut Gradients) -> f64 {
        let (d, h) = (self.input, self.hidden);
        let a = self.encode(x);
        let y = self.decode(&a);
        let loss = mse(&y, x);
        let gy: Vec<f64> = y
            .iter()
            .zip(x)
            .map(|(yi, xi)| scale * 2.0 * (yi - xi) / d as f64)
            .collect();
        let mut ga = vec![0.0; h];
        for (i, &gyi) in gy.iter().enumerate() {
            g.b2[i] += gyi;
            let w_row = &self.w2[i * h..(i + 1) * h];
            let g_row = &mut g.w2[i * h..(i + 1) * h];
            for j in 0..h {
                g_row[j] += gyi * a[j];
                ga[j] += w_row[j] * gyi;
            }
        }
        for j in 0..h {
            let gz = ga[j] * a[j] * (1.0 - a[j]);
            g.b1[j] += gz;
            let g_row = &mut g.w1[j * d..(j + 1) * d];
            for (gw, xi) in g_row.iter_mut().zip(x) {
                *gw += gz * xi;
            }
        }
        loss
    }

    /// Gradient of the mean loss over `samples`.
    pub fn gradient(&self, samples: &[&[f64]]) -> Gradients {
        let mut g = Gradients::zeros(self);
        let scale = 1.0 / samples.len() as f64;
        for x in samples {
            self.accumulate_gradient(x, scale, &mut g);
        }
        g
    }

    fn apply(&mut self, g: &Gradients, lr: f64) {
        for (p, d) in self
            .w1
            .iter_mut()
            .zip(&g.w1)
            .chain(self.b1.iter_mut().zip(&g.b1))
            .chain(self.w2.iter_mut().zip(&g.w2))
            .chain(self.b2.iter_mut().zip(&g.b2))
        {
            *p -= lr * d;
        }
    }
}

fn mse(y: &[f64], x: &[f64]) -> f64 {
    y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub autoencoder: Autoencoder,
    /// Full-set mean loss before training, then after each epoch.
    pub loss_curve: Vec<f64>,
}

/// Mini-batch gradient descent on the mean squared reconstruction error,
/// with seeded initialization and per-epoch shuffling.
pub fn train(rasters: &[SceneRaster], params: &TrainParams) -> Result<TrainOutcome> {
    if rasters.len() < MIN_TRAINING_SAMPLES {
        return Err(CageError::invalid(
            "training set",
            format!("need at least {MIN_TRAINING_SAMPLES} samples, got {}", rasters.len()),
        ));
    }
    let d = rasters[0].len();
    if rasters.iter().any(|r| r.len() != d) {
        return Err(CageError::invalid("training set", "rasters differ in size"));
    }
    if params.batch_size == 0 || !(params.learning_rate > 0.0) {
        return Err(CageError::invalid(
            "train params",
            "batch_size and learning_rate must be > 0",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut ae = Autoencoder::init(d, params.hidden, &mut rng)?;
    let samples: Vec<&[f64]> = rasters.iter().map(|r| r.cells.as_slice()).collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(params.epochs + 1);
    curve.push(ae.mean_loss(&samples));
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(params.batch_size).enumerate() {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| samples[i]).collect();
            let mut g = Gradients::zeros(&ae);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for x in &batch {
                batch_loss += ae.accumulate_gradient(x, scale, &mut g) * scale;
            }
            if !batch_loss.is_finite() {
                return Err(CageError::NanLoss { epoch, batch: b });
            }
            ae.apply(&g, params.learning_rate);
        }
        ae.epochs_trained += 1;
        let loss = ae.mean_loss(&samples);
        if !loss.is_finite() {
            return Err(CageError::NanLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        curve.push(loss);
    }
    Ok(TrainOutcome {
        autoencoder: ae,
        loss_curve: curve,
    })
}

/// Reconstruction and its mean squared error.
pub fn reconstruct(ae: &Autoencoder, raster: &SceneRaster) -> Result<(Vec<f64>, f64)> {
    if ae.epochs_trained == 0 {
        return Err(CageError::Untrained);
    }
    if raster.len() != ae.input {
        return Err(CageError::invalid(
            "raster",
            format!("expected {} cells, got {}", ae.input, raster.len()),
        ));
    }
    let y = ae.decode(&ae.encode(&raster.cells));
    let score = mse(&y, &raster.cells);
    Ok((y, score))
}

/// Nearest-rank quantile: the `⌈q·n⌉`-th smallest value.
pub fn nearest_rank(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let rank = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    v[rank - 1]
}

/// Cutoff = nearest-rank `q`-quantile of the training scores × 1.5.
pub fn calibrate_threshold(ae: &Autoencoder, rasters: &[SceneRaster], q: f64) -> Result<f64> {
    if rasters.is_empty() {
        return Err(CageError::invalid("calibration set", "empty"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(CageError::invalid("calibration quantile", "must lie in (0, 1]"));
    }
    let scores = rasters
        .iter()
        .map(|r| reconstruct(ae, r).map(|(_, s)| s))
        .collect::<Result<Vec<_>>>()?;
    Ok(threshold_from_scores(&scores, q))
}

pub fn threshold_from_scores(scores: &[f64], q: f64) -> f64 {
    (nearest_rank(scores, q) * THRESHOLD_SAFETY_FACTOR).max(f64::MIN_POSITIVE)
}

/// A calibrated, versioned model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyModel {
    pub autoencoder: Autoencoder,
    pub threshold: f64,
    pub calibration_quantile: f64,
    pub training_set_digest: String,
    pub version: u32,
    pub train_params: TrainParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmVerdict {
    pub tick: u64,
    pub score: f64,
    pub flag: bool,
    pub model_version: u32,
}

pub fn detect(model: &AnomalyModel, raster: &SceneRaster, tick: u64) -> Result<AmVerdict> {
    let (_, score) = reconstruct(&model.autoencoder, raster)?;
    Ok(AmVerdict {
        tick,
        score,
        flag: score > model.threshold,
        model_version: model.version,
    })
}

//! A one-hidden-layer encoder `z = W2 tanh(W1 x + b1) + b2` trained with
//! NT-Xent by plain mini-batch gradient descent.
//!
//! Views are produced by adding isotropic Gaussian noise to each input. The
//! encoder output is contrasted directly; there is no separate projection
//! head.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::{read_file, write_file, Reader, Writer};
use crate::contrastive::{nt_xent_loss_and_grad, ViewBatch, DEFAULT_TEMPERATURE};
use crate::embedding::EmbeddingMatrix;
use crate::error::{OodError, Result};

pub const ENCODER_MAGIC: &[u8; 4] = b"TOYE";
pub const ENCODER_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams {
    input_dim: usize,
    hidden: usize,
    output_dim: usize,
    /// `hidden x input_dim`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `output_dim x hidden`, row-major.
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Activations kept for backpropagation.
struct Forward {
    hidden: Vec<f64>,
    output: Vec<f64>,
}

impl ToyEncoderParams {
    /// Gaussian init scaled by `1 / sqrt(fan_in)`, zero biases.
    pub fn init(input_dim: usize, hidden: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || output_dim == 0 {
            return Err(OodError::Parameter(format!(
                "encoder sizes must be positive, got {input_dim}/{hidden}/{output_dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |count: usize, fan_in: usize| -> Vec<f64> {
            let scale = 1.0 / (fan_in as f64).sqrt();
            (0..count)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    scale * e
                })
                .collect()
        };
        let w1 = draw(hidden * input_dim, input_dim);
        let w2 = draw(output_dim * hidden, hidden);
        Ok(ToyEncoderParams {
            input_dim,
            hidden,
            output_dim,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; output_dim],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// All weights in `w1, b1, w2, b2` order.
    pub fn flat(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn from_flat(input_dim: usize, hidden: usize, output_dim: usize, flat: &[f64]) -> Result<Self> {
        let sizes = [hidden * input_dim, hidden, output_dim * hidden, output_dim];
        if flat.len() != sizes.iter().sum::<usize>() {
            return Err(OodError::Parameter(format!(
                "expected {} encoder weights, got {}",
                sizes.iter().sum::<usize>(),
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(OodError::Parameter("encoder weights must be finite".into()));
        }
        let mut rest = flat;
        let mut take = |len: usize| {
            let (head, tail) = rest.split_at(len);
            rest = tail;
            head.to_vec()
        };
        Ok(ToyEncoderParams {
            input_dim,
            hidden,
            output_dim,
            w1: take(sizes[0]),
            b1: take(sizes[1]),
            w2: take(sizes[2]),
            b2: take(sizes[3]),
        })
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let w = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
                (w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b1[h]).tanh()
            })
            .collect();
        let output = (0..self.output_dim)
            .map(|o| {
                let w = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                w.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>() + self.b2[o]
            })
            .collect();
        Forward { hidden, output }
    }

    pub fn embed(&self, inputs: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        if inputs.d() != self.input_dim {
            return Err(OodError::Parameter(format!(
                "encoder expects dimension {}, got {}",
                self.input_dim,
                inputs.d()
            )));
        }
        let data: Vec<f64> = inputs.rows().flat_map(|x| self.forward(x).output).collect();
        EmbeddingMatrix::new(inputs.n(), self.output_dim, data)
    }

    /// Backpropagates `dz` (one row per input) into a flat gradient laid out
    /// like [`ToyEncoderParams::flat`].
    fn backward(&self, inputs: &[&[f64]], passes: &[Forward], dz: &EmbeddingMatrix) -> Vec<f64> {
        let (ni, nh, no) = (self.input_dim, self.hidden, self.output_dim);
        let mut gw1 = vec![0.0; nh * ni];
        let mut gb1 = vec![0.0; nh];
        let mut gw2 = vec![0.0; no * nh];
        let mut gb2 = vec![0.0; no];
        let mut dh = vec![0.0; nh];
        for (r, (x, pass)) in inputs.iter().zip(passes).enumerate() {
            let g = dz.row(r);
            dh.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..no {
                gb2[o] += g[o];
                for h in 0..nh {
                    gw2[o * nh + h] += g[o] * pass.hidden[h];
                    dh[h] += self.w2[o * nh + h] * g[o];
                }
            }
            for h in 0..nh {
                let da = dh[h] * (1.0 - pass.hidden[h] * pass.hidden[h]);
                gb1[h] += da;
                for i in 0..ni {
                    gw1[h * ni + i] += da * x[i];
                }
            }
        }
        [gw1, gb1, gw2, gb2].concat()
    }

    fn apply_step(&mut self, grad: &[f64], lr: f64) {
        let mut it = grad.iter();
        for w in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
        {
            *w -= lr * it.next().expect("gradient matches parameter count");
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ENCODER_MAGIC, ENCODER_VERSION);
        w.u32(self.input_dim as u32);
        w.u32(self.hidden as u32);
        w.u32(self.output_dim as u32);
        w.f64s(&self.flat());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, version) = Reader::open(bytes, ENCODER_MAGIC, "encoder params")?;
        if version != ENCODER_VERSION {
            return Err(OodError::Format(format!(
                "encoder params: unsupported version {version}"
            )));
        }
        let ni = r.u32()? as usize;
        let nh = r.u32()? as usize;
        let no = r.u32()? as usize;
        let count = nh * ni + nh + no * nh + no;
        let flat = r.f64s(count)?;
        r.expect_end()?;
        Self::from_flat(ni, nh, no, &flat).map_err(|e| OodError::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Samples per mini-batch; each contributes two views.
    pub batch_n: usize,
    pub tau: f64,
    /// Standard deviation of the additive view noise.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        ToyTrainConfig {
            lr: 0.5,
            epochs: 20,
            batch_n: 32,
            tau: DEFAULT_TEMPERATURE,
            noise_scale: 0.1,
            seed: 2019,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ToyEncoderParams,
    /// Mean batch loss per epoch, in epoch order.
    pub curve: Vec<f64>,
}

impl TrainOutcome {
    /// `epoch,mean_loss` CSV with 1-based epochs.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (e, l) in self.curve.iter().enumerate() {
            out.push_str(&format!("{},{}\n", e + 1, l));
        }
        out
    }
}

/// Contrastive training of `params` on `samples`. Deterministic given
/// `config.seed`.
pub fn train_toy_encoder(
    samples: &EmbeddingMatrix,
    params: &ToyEncoderParams,
    config: &ToyTrainConfig,
) -> Result<TrainOutcome> {
    if !(config.lr.is_finite() && config.lr >= 0.0) {
        return Err(OodError::Parameter(format!("lr must be >= 0, got {}", config.lr)));
    }
    if config.epochs == 0 {
        return Err(OodError::Parameter("epochs must be >= 1".into()));
    }
    if config.batch_n < 2 || samples.n() < 2 {
        return Err(OodError::Parameter(
            "contrastive batches need at least 2 samples".into(),
        ));
    }
    if !(config.noise_scale.is_finite() && config.noise_scale >= 0.0) {
        return Err(OodError::Parameter("noise scale must be >= 0".into()));
    }
    if samples.d() != params.input_dim {
        return Err(OodError::Parameter(format!(
            "encoder expects dimension {}, got {}",
            params.input_dim,
            samples.d()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = params.clone();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..samples.n()).collect();
    let d = samples.d();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_n).filter(|c| c.len() >= 2) {
            let mut views = Vec::with_capacity(chunk.len() * 2 * d);
            for &s in chunk {
                for _ in 0..2 {
                    views.extend(samples.row(s).iter().map(|&v| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        v + config.noise_scale * e
                    }));
                }
            }
            let inputs: Vec<&[f64]> = views.chunks_exact(d).collect();
            let passes: Vec<Forward> = inputs.iter().map(|x| params.forward(x)).collect();
            let z: Vec<f64> = passes.iter().flat_map(|p| p.output.iter().copied()).collect();
            let diverged = || OodError::Training {
                epoch: epoch + 1,
                last_finite_epoch: (epoch > 0).then_some(epoch),
            };
            let z = EmbeddingMatrix::new(inputs.len(), params.output_dim, z)
                .map_err(|_| diverged())?;
            let batch = ViewBatch::new(z, config.tau)?;
            // a non-finite gradient surfaces as a data error from the matrix
            let (loss, dz) = nt_xent_loss_and_grad(&batch).map_err(|_| diverged())?;
            if !loss.is_finite() {
                return Err(diverged());
            }
            let grad = params.backward(&inputs, &passes, &dz);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged());
            }
            params.apply_step(&grad, config.lr);
            loss_sum += loss;
            batches += 1;
        }
        let mean = loss_sum / batches as f64;
        if !mean.is_finite() {
            return Err(OodError::Training {
                epoch: epoch + 1,
                last_finite_epoch: (epoch > 0).then_some(epoch),
            });
        }
        curve.push(mean);
    }
    Ok(TrainOutcome { params, curve })
}

//! Fully connected spectral classifier: two PMish hidden layers and a
//! sigmoid output, trained with class-weighted binary cross-entropy and
//! Adam. Every pixel spectrum is classified on its own, with no spatial
//! context.
//!
//! PMish is taken as `f(x) = x · tanh(β · softplus(x))` with one learnable
//! β per hidden layer; β = 1 is plain Mish.

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{Method, ScoreMap};
use crate::envi::SpectralCube;
use crate::error::{Error, Result};
use crate::scene::PixelTable;

pub const HIDDEN1: usize = 128;
pub const HIDDEN2: usize = 64;

/// Probabilities are clamped to [PROB_CLAMP, 1 − PROB_CLAMP] inside the loss.
pub const PROB_CLAMP: f64 = 1e-12;

/// Smallest β allowed after an optimizer step.
const BETA_FLOOR: f64 = 1e-3;

const MODEL_MAGIC: &[u8; 8] = b"HSDNN001";

/// max(x, 0) + ln(1 + e^(−|x|)), finite for every finite x.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Parametric Mish: x · tanh(β · softplus(x)).
pub fn pmish(x: f64, beta: f64) -> f64 {
    x * (beta * softplus(x)).tanh()
}

/// (∂f/∂x, ∂f/∂β) of [`pmish`].
pub fn pmish_grad(x: f64, beta: f64) -> (f64, f64) {
    let s = softplus(x);
    let t = (beta * s).tanh();
    let sech2 = 1.0 - t * t;
    (t + x * beta * sigmoid(x) * sech2, x * s * sech2)
}

/// Class-weighted binary cross-entropy for one prediction.
pub fn weighted_bce(p: f64, y: u8, w_pos: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y != 0 {
        -w_pos * p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Network weights. Layer sizes follow from the matrix shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    /// 1 × hidden2
    pub w3: DMatrix<f64>,
    pub b3: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl MlpParams {
    /// All-zero weights and β = 1.
    pub fn zeros(inputs: usize, hidden1: usize, hidden2: usize) -> Self {
        Self {
            w1: DMatrix::zeros(hidden1, inputs),
            b1: DVector::zeros(hidden1),
            w2: DMatrix::zeros(hidden2, hidden1),
            b2: DVector::zeros(hidden2),
            w3: DMatrix::zeros(1, hidden2),
            b3: 0.0,
            beta1: 1.0,
            beta2: 1.0,
        }
    }

    /// Glorot-uniform weights, zero biases, β = 1.
    pub fn init(inputs: usize, hidden1: usize, hidden2: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(inputs, hidden1, hidden2);
        for m in [&mut p.w1, &mut p.w2, &mut p.w3] {
            let (fan_out, fan_in) = m.shape();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            // Row-major fill so the draw order matches the file layout.
            for i in 0..fan_out {
                for j in 0..fan_in {
                    m[(i, j)] = rng.gen_range(-a..a);
                }
            }
        }
        p
    }

    pub fn inputs(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden1(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden2(&self) -> usize {
        self.w2.nrows()
    }

    pub fn len(&self) -> usize {
        let (l, h1, h2) = (self.inputs(), self.hidden1(), self.hidden2());
        h1 * l + h1 + h2 * h1 + h2 + h2 + 1 + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat view in a fixed order: W1, b1, W2, b2, W3 (all row-major), b3,
    /// β1, β2.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        push_row_major(&mut v, &self.w1);
        v.extend(self.b1.iter());
        push_row_major(&mut v, &self.w2);
        v.extend(self.b2.iter());
        push_row_major(&mut v, &self.w3);
        v.push(self.b3);
        v.push(self.beta1);
        v.push(self.beta2);
        v
    }

    /// Inverse of [`to_flat`](Self::to_flat) for a network of this shape.
    pub fn set_flat(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.len(), "flat parameter length");
        let mut it = v.iter().copied();
        fill_row_major(&mut self.w1, &mut it);
        self.b1.iter_mut().for_each(|x| *x = it.next().unwrap());
        fill_row_major(&mut self.w2, &mut it);
        self.b2.iter_mut().for_each(|x| *x = it.next().unwrap());
        fill_row_major(&mut self.w3, &mut it);
        self.b3 = it.next().unwrap();
        self.beta1 = it.next().unwrap();
        self.beta2 = it.next().unwrap();
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

fn push_row_major(v: &mut Vec<f64>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
}

fn fill_row_major(m: &mut DMatrix<f64>, it: &mut impl Iterator<Item = f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] = it.next().expect("enough values");
        }
    }
}

/// Intermediate values of a batched forward pass (columns are pixels).
struct Activations {
    z1: DMatrix<f64>,
    h1: DMatrix<f64>,
    z2: DMatrix<f64>,
    h2: DMatrix<f64>,
    p: Vec<f64>,
}

fn add_bias(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut col in m.column_iter_mut() {
        col += b;
    }
}

fn forward_cached(params: &MlpParams, x: DMatrixView<'_, f64>) -> Activations {
    let mut z1 = &params.w1 * x;
    add_bias(&mut z1, &params.b1);
    let h1 = z1.map(|v| pmish(v, params.beta1));
    let mut z2 = &params.w2 * &h1;
    add_bias(&mut z2, &params.b2);
    let h2 = z2.map(|v| pmish(v, params.beta2));
    let z3 = &params.w3 * &h2;
    let p = z3.iter().map(|&z| sigmoid(z + params.b3)).collect();
    Activations { z1, h1, z2, h2, p }
}

/// out = W x + b, accumulated column by column in a fixed order so the
/// result for a pixel never depends on what else is in the batch.
fn dense(w: &DMatrix<f64>, b: &DVector<f64>, x: &[f64], out: &mut [f64]) {
    out.copy_from_slice(b.as_slice());
    for (col, &xk) in w.column_iter().zip(x) {
        for (o, &wik) in out.iter_mut().zip(col.iter()) {
            *o += wik * xk;
        }
    }
}

fn predict_pixel(params: &MlpParams, x: &[f64], h1: &mut [f64], h2: &mut [f64]) -> f64 {
    dense(&params.w1, &params.b1, x, h1);
    h1.iter_mut().for_each(|v| *v = pmish(*v, params.beta1));
    dense(&params.w2, &params.b2, h1, h2);
    h2.iter_mut().for_each(|v| *v = pmish(*v, params.beta2));
    let z: f64 = params.w3.iter().zip(h2.iter()).map(|(w, h)| w * h).sum();
    sigmoid(z + params.b3)
}

/// Target probability for each BIP pixel in `pixels` (already standardized).
/// Each value equals [`forward`] on that pixel alone.
pub fn forward_batch(params: &MlpParams, pixels: &[f64]) -> Result<Vec<f64>> {
    let l = params.inputs();
    if pixels.len() % l != 0 {
        return Err(Error::Dimension {
            what: "pixel buffer vs network inputs",
            expected: l,
            got: pixels.len() % l,
        });
    }
    let mut h1 = vec![0.0; params.hidden1()];
    let mut h2 = vec![0.0; params.hidden2()];
    Ok(pixels
        .chunks_exact(l)
        .map(|x| predict_pixel(params, x, &mut h1, &mut h2))
        .collect())
}

/// σ(W3 · PMish(W2 · PMish(W1 x + b1) + b2) + b3) for one pixel.
pub fn forward(params: &MlpParams, x: &[f64]) -> Result<f64> {
    if x.len() != params.inputs() {
        return Err(Error::Dimension {
            what: "pixel length",
            expected: params.inputs(),
            got: x.len(),
        });
    }
    Ok(forward_batch(params, x)?[0])
}

/// Gradient of the mean weighted BCE, in the same layout as the parameters.
pub type Gradients = MlpParams;

/// Mean weighted BCE of `params` on a batch (BIP pixels, labels).
pub fn batch_loss(params: &MlpParams, pixels: &[f64], labels: &[u8], w_pos: f64) -> f64 {
    let n = labels.len();
    let p = forward_cached(params, DMatrixView::from_slice(pixels, params.inputs(), n)).p;
    p.iter()
        .zip(labels)
        .map(|(&p, &y)| weighted_bce(p, y, w_pos))
        .sum::<f64>()
        / n as f64
}

/// Summed (not averaged) loss and gradients over one batch slice.
fn loss_and_grad_sum(
    params: &MlpParams,
    pixels: &[f64],
    labels: &[u8],
    w_pos: f64,
) -> (f64, Gradients) {
    let n = labels.len();
    let x = DMatrixView::from_slice(pixels, params.inputs(), n);
    let a = forward_cached(params, x);

    let mut loss = 0.0;
    // dL/dz3 for the unclamped loss: −w·y·(1−p) + (1−y)·p
    let dz3 = DMatrix::from_iterator(
        1,
        n,
        a.p.iter().zip(labels).map(|(&p, &y)| {
            loss += weighted_bce(p, y, w_pos);
            if y != 0 {
                -w_pos * (1.0 - p)
            } else {
                p
            }
        }),
    );

    let gw3 = &dz3 * a.h2.transpose();
    let gb3: f64 = dz3.iter().sum();

    let dh2 = params.w3.transpose() * &dz3;
    let mut gbeta2 = 0.0;
    let mut dz2 = dh2;
    for (d, &z) in dz2.iter_mut().zip(a.z2.iter()) {
        let (dx, db) = pmish_grad(z, params.beta2);
        gbeta2 += *d * db;
        *d *= dx;
    }
    let gw2 = &dz2 * a.h1.transpose();
    let gb2 = dz2.column_sum();

    let mut dz1 = params.w2.transpose() * &dz2;
    let mut gbeta1 = 0.0;
    for (d, &z) in dz1.iter_mut().zip(a.z1.iter()) {
        let (dx, db) = pmish_grad(z, params.beta1);
        gbeta1 += *d * db;
        *d *= dx;
    }
    let gw1 = &dz1 * x.transpose();
    let gb1 = dz1.column_sum();

    (
        loss,
        MlpParams {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
            w3: gw3,
            b3: gb3,
            beta1: gbeta1,
            beta2: gbeta2,
        },
    )
}

fn add_grads(mut a: (f64, Gradients), b: (f64, Gradients)) -> (f64, Gradients) {
    a.0 += b.0;
    a.1.w1 += b.1.w1;
    a.1.b1 += b.1.b1;
    a.1.w2 += b.1.w2;
    a.1.b2 += b.1.b2;
    a.1.w3 += b.1.w3;
    a.1.b3 += b.1.b3;
    a.1.beta1 += b.1.beta1;
    a.1.beta2 += b.1.beta2;
    a
}

fn scale_grads(g: &mut Gradients, s: f64) {
    g.w1 *= s;
    g.b1 *= s;
    g.w2 *= s;
    g.b2 *= s;
    g.w3 *= s;
    g.b3 *= s;
    g.beta1 *= s;
    g.beta2 *= s;
}

/// Sub-batch size for the parallel gradient reduction.
const PARALLEL_SLICE: usize = 256;

/// Mean loss and its gradient. With `parallel`, the batch is split into
/// fixed slices whose partial sums are combined in a fixed pairwise order.
pub fn loss_and_gradients(
    params: &MlpParams,
    pixels: &[f64],
    labels: &[u8],
    w_pos: f64,
    parallel: bool,
) -> Result<(f64, Gradients)> {
    let l = params.inputs();
    let n = labels.len();
    if n == 0 {
        return Err(Error::Config("empty batch".into()));
    }
    if pixels.len() != n * l {
        return Err(Error::Dimension {
            what: "batch pixels",
            expected: n * l,
            got: pixels.len(),
        });
    }
    let (loss, mut g) = if parallel && n > PARALLEL_SLICE {
        let parts: Vec<(f64, Gradients)> = pixels
            .par_chunks(PARALLEL_SLICE * l)
            .zip(labels.par_chunks(PARALLEL_SLICE))
            .map(|(px, y)| loss_and_grad_sum(params, px, y, w_pos))
            .collect();
        tree_reduce(parts)
    } else {
        loss_and_grad_sum(params, pixels, labels, w_pos)
    };
    scale_grads(&mut g, 1.0 / n as f64);
    Ok((loss / n as f64, g))
}

fn tree_reduce(mut parts: Vec<(f64, Gradients)>) -> (f64, Gradients) {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => add_grads(a, b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one slice")
}

/// Gradients for a labelled pixel table (spectra used as-is).
pub fn backward(params: &MlpParams, batch: &PixelTable, w_pos: f64) -> Result<Gradients> {
    let labels = batch
        .labels()
        .ok_or_else(|| Error::Config("backward needs labelled pixels".into()))?;
    Ok(loss_and_gradients(params, batch.spectra(), labels, w_pos, false)?.1)
}

/// Per-band z-score transform fitted on the training pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(bands: usize) -> Self {
        Self {
            mean: vec![0.0; bands],
            std: vec![1.0; bands],
        }
    }

    /// Population mean and standard deviation per band. Bands with no
    /// spread keep a unit scale.
    pub fn fit(pixels: &[f64], bands: usize) -> Self {
        let n = (pixels.len() / bands).max(1) as f64;
        let mut mean = vec![0.0; bands];
        for row in pixels.chunks_exact(bands) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; bands];
        for row in pixels.chunks_exact(bands) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, pixels: &[f64]) -> Vec<f64> {
        let b = self.mean.len();
        let mut out = pixels.to_vec();
        for row in out.chunks_exact_mut(b) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PositiveWeight {
    /// N_negative / N_positive of the training set.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub positive_weight: PositiveWeight,
    pub seed: u64,
    pub standardize: bool,
    pub hidden1: usize,
    pub hidden2: usize,
    /// Parallel gradient evaluation (still deterministic for a given seed).
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.0002,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 1024,
            positive_weight: PositiveWeight::Auto,
            seed: 0,
            standardize: true,
            hidden1: HIDDEN1,
            hidden2: HIDDEN2,
            parallel: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::Config("batch size and layer widths must be positive".into()));
        }
        if let PositiveWeight::Fixed(w) = self.positive_weight {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config("positive weight must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A trained network together with its input standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNet {
    pub params: MlpParams,
    pub standardizer: Option<Standardizer>,
}

impl SpectralNet {
    pub fn bands(&self) -> usize {
        self.params.inputs()
    }

    /// Probabilities for raw (unstandardized) BIP pixels.
    pub fn predict(&self, pixels: &[f64]) -> Result<Vec<f64>> {
        let std = self
            .standardizer
            .as_ref()
            .ok_or_else(|| Error::Model("standardization statistics missing".into()))?;
        if std.mean.len() != self.bands() {
            return Err(Error::Model("standardizer length differs from network inputs".into()));
        }
        forward_batch(&self.params, &std.apply(pixels))
    }

    /// Flat little-endian file: magic, L, hidden1, hidden2 (u64), β1, β2,
    /// standardization mean and std, then W1, b1, W2, b2, W3, b3 row-major
    /// `f64`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let std = self
            .standardizer
            .as_ref()
            .ok_or_else(|| Error::Model("standardization statistics missing".into()))?;
        let p = &self.params;
        let mut out = Vec::with_capacity(8 * (p.len() + 6 + 2 * p.inputs()));
        out.extend_from_slice(MODEL_MAGIC);
        for d in [p.inputs(), p.hidden1(), p.hidden2()] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&p.beta1.to_le_bytes());
        out.extend_from_slice(&p.beta2.to_le_bytes());
        for v in std.mean.iter().chain(&std.std) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let flat = p.to_flat();
        for v in &flat[..flat.len() - 2] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Model(m);
        if bytes.len() < 48 || &bytes[..8] != MODEL_MAGIC {
            return Err(bad("not a spectral network file".into()));
        }
        let word = |i: usize| -> [u8; 8] { bytes[8 + i * 8..16 + i * 8].try_into().unwrap() };
        let l = u64::from_le_bytes(word(0)) as usize;
        let h1 = u64::from_le_bytes(word(1)) as usize;
        let h2 = u64::from_le_bytes(word(2)) as usize;
        if l == 0 || h1 == 0 || h2 == 0 {
            return Err(bad("zero layer width".into()));
        }
        let mut params = MlpParams::zeros(l, h1, h2);
        let n_weights = params.len() - 2;
        let words = 5 + 2 * l + n_weights;
        if bytes.len() != 8 + 8 * words {
            return Err(bad(format!(
                "expected {} bytes, found {}",
                8 + 8 * words,
                bytes.len()
            )));
        }
        let f = |i: usize| f64::from_le_bytes(word(i));
        let beta1 = f(3);
        let beta2 = f(4);
        let mean = (0..l).map(|i| f(5 + i)).collect();
        let std: Vec<f64> = (0..l).map(|i| f(5 + l + i)).collect();
        let mut flat: Vec<f64> = (0..n_weights).map(|i| f(5 + 2 * l + i)).collect();
        flat.push(beta1);
        flat.push(beta2);
        params.set_flat(&flat);
        if !params.is_finite() || !(beta1 > 0.0 && beta2 > 0.0) {
            return Err(bad("non-finite weights or non-positive β".into()));
        }
        Ok(Self {
            params,
            standardizer: Some(Standardizer { mean, std }),
        })
    }
}

/// Output of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: SpectralNet,
    /// Mean training loss of each epoch, accumulated batch by batch.
    pub epoch_losses: Vec<f64>,
    pub positive_weight: f64,
}

impl TrainOutcome {
    /// `epoch,mean_loss` CSV with 1-based epochs.
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss\n");
        for (i, l) in self.epoch_losses.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.adam_beta1.powi(self.t);
        let bc2 = 1.0 - cfg.adam_beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.adam_beta1 * self.m[i] + (1.0 - cfg.adam_beta1) * g;
            self.v[i] = cfg.adam_beta2 * self.v[i] + (1.0 - cfg.adam_beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Train on labelled pixels. Deterministic for a fixed seed: weight init,
/// per-epoch shuffles and reduction order all derive from it.
pub fn train(pixels: &PixelTable, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let labels = pixels
        .labels()
        .ok_or_else(|| Error::Config("training pixels need labels".into()))?;
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 {
        return Err(Error::MissingClass("positive"));
    }
    if n_neg == 0 {
        return Err(Error::MissingClass("negative"));
    }
    let w_pos = match config.positive_weight {
        PositiveWeight::Auto => n_neg as f64 / n_pos as f64,
        PositiveWeight::Fixed(w) => w,
    };
    let bands = pixels.bands();
    let standardizer = if config.standardize {
        Standardizer::fit(pixels.spectra(), bands)
    } else {
        Standardizer::identity(bands)
    };
    let x = standardizer.apply(pixels.spectra());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MlpParams::init(bands, config.hidden1, config.hidden2, &mut rng);
    let mut flat = params.to_flat();
    let mut adam = Adam {
        m: vec![0.0; flat.len()],
        v: vec![0.0; flat.len()],
        t: 0,
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_x = Vec::with_capacity(config.batch_size * bands);
    let mut batch_y = Vec::with_capacity(config.batch_size);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in idx {
                batch_x.extend_from_slice(&x[i * bands..(i + 1) * bands]);
                batch_y.push(labels[i]);
            }
            let (loss, g) =
                loss_and_gradients(&params, &batch_x, &batch_y, w_pos, config.parallel)?;
            if !loss.is_finite() {
                return Err(Error::DivergedAt(epoch + 1));
            }
            total += loss * idx.len() as f64;
            adam.step(&mut flat, &g.to_flat(), config);
            let nb = flat.len();
            flat[nb - 2] = flat[nb - 2].max(BETA_FLOOR);
            flat[nb - 1] = flat[nb - 1].max(BETA_FLOOR);
            params.set_flat(&flat);
        }
        let mean = total / n as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(Error::DivergedAt(epoch + 1));
        }
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        net: SpectralNet {
            params,
            standardizer: Some(standardizer),
        },
        epoch_losses,
        positive_weight: w_pos,
    })
}

/// Score every pixel of a cube with a trained network. Values are
/// probabilities and are not renormalized.
pub fn score_region(cube: &SpectralCube, net: &SpectralNet) -> Result<ScoreMap> {
    if cube.bands() != net.bands() {
        return Err(Error::Dimension {
            what: "cube bands vs network inputs",
            expected: net.bands(),
            got: cube.bands(),
        });
    }
    let chunk = crate::detectors::SCORE_CHUNK * cube.bands();
    let parts: Vec<Result<Vec<f64>>> = cube
        .values()
        .par_chunks(chunk)
        .map(|c| net.predict(c))
        .collect();
    let mut scores = Vec::with_capacity(cube.pixel_count());
    for p in parts {
        scores.extend(p?);
    }
    ScoreMap::new(cube.region().clone(), Method::Nn, scores)
}

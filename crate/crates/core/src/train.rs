//! Desk-scale training harness: a synthetic image dataset and a linear
//! softmax classifier trained by plain minibatch SGD on flattened pixels,
//! with optional augmentation applied per minibatch.
//!
//! The trace records the KL loss and the training error of every step. Under
//! mixing, the reference class for the training error is the class of the
//! quadrant with the largest area.

use std::io::{self, Write};

use crate::image::ImageTensor;
use crate::loss::{grad_kl, kl_loss, softmax};
use crate::ricap::{four_mixup, ricap_batch, ricap_image_only, BoundaryMode, LabeledImage, SoftLabel};
use crate::sampling::{sample_permutation, BetaParam, RngState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub side: usize,
    /// Per-pixel Gaussian noise, in units of the raw signal.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            train_per_class: 200,
            test_per_class: 50,
            side: 16,
            noise: 4.0,
        }
    }
}

/// Small 3-channel images whose class sets a dominant color and a stripe
/// texture, buried in per-pixel noise and normalized per channel to zero mean
/// and unit variance (statistics from the training split).
#[derive(Debug, Clone)]
pub struct SyntheticQuadrantDataset {
    pub num_classes: usize,
    pub train: Vec<LabeledImage<f32>>,
    pub test: Vec<LabeledImage<f32>>,
}

impl SyntheticQuadrantDataset {
    pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<Self> {
        if config.num_classes == 0 || config.side == 0 || config.train_per_class == 0 {
            return Err(Error::ParameterDomain(
                "dataset needs at least one class, one pixel and one training sample".into(),
            ));
        }
        let root = RngState::new(seed, 0);
        let mut class_rng = root.substream(0);
        let styles: Vec<ClassStyle> = (0..config.num_classes)
            .map(|_| ClassStyle::draw(&mut class_rng))
            .collect();

        let make = |split: u64, per_class: usize| -> Result<Vec<LabeledImage<f32>>> {
            let mut rng = root.substream(split);
            (0..per_class * config.num_classes)
                .map(|i| {
                    let class_id = i % config.num_classes;
                    let image = styles[class_id].render(config, &mut rng)?;
                    Ok(LabeledImage::new(image, class_id))
                })
                .collect()
        };
        let mut train = make(1, config.train_per_class)?;
        let mut test = make(2, config.test_per_class)?;

        let (mean, std) = channel_stats(&train);
        for s in train.iter_mut().chain(test.iter_mut()) {
            normalize(&mut s.image, &mean, &std);
        }
        Ok(Self {
            num_classes: config.num_classes,
            train,
            test,
        })
    }
}

#[derive(Debug, Clone)]
struct ClassStyle {
    color: [f64; 3],
    freq: (f64, f64),
    phase: f64,
}

impl ClassStyle {
    fn draw(rng: &mut RngState) -> Self {
        let color = [0; 3].map(|_| 2.0 * rng.uniform() - 1.0);
        let freq = (1.0 + 3.0 * rng.uniform(), 3.0 * rng.uniform());
        Self {
            color,
            freq,
            phase: std::f64::consts::TAU * rng.uniform(),
        }
    }

    fn render(&self, config: &SyntheticConfig, rng: &mut RngState) -> Result<ImageTensor<f32>> {
        let side = config.side as f64;
        let mut img = ImageTensor::from_fn(3, config.side, config.side, |c, y, x| {
            let arg = std::f64::consts::TAU * (self.freq.0 * x as f64 + self.freq.1 * y as f64) / side;
            (self.color[c] + 0.5 * (arg + self.phase).sin()) as f32
        })?;
        for v in img.data_mut() {
            *v += (config.noise * rng.standard_normal()) as f32;
        }
        Ok(img)
    }
}

fn channel_stats(samples: &[LabeledImage<f32>]) -> ([f64; 3], [f64; 3]) {
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut n = 0usize;
    for s in samples {
        let plane = s.image.height() * s.image.width();
        for (c, chunk) in s.image.data().chunks(plane).enumerate() {
            for &v in chunk {
                sum[c] += v as f64;
                sq[c] += (v as f64) * (v as f64);
            }
        }
        n += plane;
    }
    let mean = sum.map(|s| s / n as f64);
    let std = [0, 1, 2].map(|c| (sq[c] / n as f64 - mean[c] * mean[c]).max(1e-12).sqrt());
    (mean, std)
}

fn normalize(img: &mut ImageTensor<f32>, mean: &[f64; 3], std: &[f64; 3]) {
    let plane = img.height() * img.width();
    for (c, chunk) in img.data_mut().chunks_mut(plane).enumerate() {
        for v in chunk {
            *v = ((*v as f64 - mean[c]) / std[c]) as f32;
        }
    }
}

/// Linear softmax classifier, `logits = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    num_classes: usize,
    num_features: usize,
    /// Row-major `num_classes × num_features`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(num_classes: usize, num_features: usize) -> Self {
        Self {
            num_classes,
            num_features,
            weights: vec![0.0; num_classes * num_features],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        debug_assert_eq!(features.len(), self.num_features);
        self.weights
            .chunks(self.num_features)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        let logits = self.logits(features);
        let mut best = 0;
        for (j, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = j;
            }
        }
        best
    }

    /// Mean KL loss over a batch.
    pub fn batch_loss(&self, features: &[Vec<f64>], targets: &[SoftLabel]) -> f64 {
        features
            .iter()
            .zip(targets)
            .map(|(x, t)| kl_loss(&self.logits(x), t))
            .sum::<f64>()
            / features.len() as f64
    }

    /// One SGD step on the mean KL loss; returns the loss before the update
    /// and the logits used for it.
    pub fn sgd_step(&mut self, features: &[Vec<f64>], targets: &[SoftLabel], lr: f64) -> (f64, Vec<Vec<f64>>) {
        let n = features.len() as f64;
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; self.num_classes];
        let mut loss = 0.0;
        let mut all_logits = Vec::with_capacity(features.len());
        for (x, t) in features.iter().zip(targets) {
            let logits = self.logits(x);
            loss += kl_loss(&logits, t);
            let g = grad_kl(&logits, t);
            for (j, gj) in g.iter().enumerate() {
                if *gj == 0.0 {
                    continue;
                }
                grad_b[j] += gj;
                let row = &mut grad_w[j * self.num_features..(j + 1) * self.num_features];
                for (r, xi) in row.iter_mut().zip(x) {
                    *r += gj * xi;
                }
            }
            all_logits.push(logits);
        }
        let scale = lr / n;
        for (w, g) in self.weights.iter_mut().zip(&grad_w) {
            *w -= scale * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad_b) {
            *b -= scale * g;
        }
        (loss / n, all_logits)
    }

    pub fn error_rate(&self, samples: &[LabeledImage<f32>]) -> f64 {
        let wrong = samples
            .iter()
            .filter(|s| self.predict(&features(&s.image)) != s.class_id)
            .count();
        wrong as f64 / samples.len() as f64
    }
}

pub fn features(image: &ImageTensor<f32>) -> Vec<f64> {
    image.data().iter().map(|&v| v as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augment {
    None,
    Ricap(BetaParam),
    RicapImageOnly(BetaParam),
    FourMixup(BetaParam),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Test error is evaluated every `eval_every` steps and at the last step.
    pub eval_every: usize,
    pub mode: BoundaryMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 0.01,
            batch_size: 64,
            eval_every: 100,
            mode: BoundaryMode::PerBatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub train_kl: f64,
    pub train_err: f64,
    pub test_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    /// Mean training KL over the last `n` steps.
    pub fn tail_mean_kl(&self, n: usize) -> f64 {
        let tail = &self.rows[self.rows.len().saturating_sub(n)..];
        tail.iter().map(|r| r.train_kl).sum::<f64>() / tail.len() as f64
    }

    pub fn final_test_err(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.test_err)
    }

    /// `step,train_kl,train_err,test_err`; `test_err` is empty on steps
    /// without an evaluation.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,train_kl,train_err,test_err")?;
        for r in &self.rows {
            match r.test_err {
                Some(t) => writeln!(out, "{},{},{},{}", r.step, r.train_kl, r.train_err, t)?,
                None => writeln!(out, "{},{},{},", r.step, r.train_kl, r.train_err)?,
            }
        }
        Ok(())
    }
}

/// Features, targets and reference classes of one minibatch.
type Minibatch = (Vec<Vec<f64>>, Vec<SoftLabel>, Vec<usize>);

fn augmented_batch(
    batch: &[LabeledImage<f32>],
    num_classes: usize,
    augment: Augment,
    mode: BoundaryMode,
    rng: &mut RngState,
) -> Result<Minibatch> {
    let mut xs = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    let mut reference = Vec::with_capacity(batch.len());
    match augment {
        Augment::None => {
            for s in batch {
                xs.push(features(&s.image));
                targets.push(SoftLabel::one_hot(s.class_id, num_classes)?);
                reference.push(s.class_id);
            }
        }
        Augment::Ricap(beta) | Augment::FourMixup(beta) => {
            let out = if let Augment::Ricap(_) = augment {
                ricap_batch(batch, num_classes, beta, rng, mode)?
            } else {
                four_mixup(batch, num_classes, beta, rng, mode)?
            };
            for s in out {
                xs.push(features(&s.image));
                reference.push(batch[s.specs[s.weights.argmax()].source_index].class_id);
                targets.push(s.label);
            }
        }
        Augment::RicapImageOnly(beta) => {
            for s in ricap_image_only(batch, num_classes, beta, rng, mode)? {
                xs.push(features(&s.image));
                targets.push(SoftLabel::one_hot(s.class_id, num_classes)?);
                reference.push(s.class_id);
            }
        }
    }
    Ok((xs, targets, reference))
}

pub fn train_toy(
    dataset: &SyntheticQuadrantDataset,
    augment: Augment,
    config: &TrainConfig,
    rng: &mut RngState,
) -> Result<(LinearModel, TrainTrace)> {
    if config.steps == 0 || config.batch_size == 0 || config.eval_every == 0 {
        return Err(Error::ParameterDomain(
            "steps, batch_size and eval_every must be at least 1".into(),
        ));
    }
    if !(config.lr.is_finite() && config.lr > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "learning rate must be positive, got {}",
            config.lr
        )));
    }
    let first = dataset
        .train
        .first()
        .ok_or_else(|| Error::Batch("training split is empty".into()))?;
    let mut model = LinearModel::zeros(dataset.num_classes, first.image.data().len());
    let mut order_rng = rng.substream(1);
    let mut aug_rng = rng.substream(2);
    let n = dataset.train.len();
    let batch_size = config.batch_size.min(n);
    let mut order = sample_permutation(n, &mut order_rng)?;
    let mut cursor = 0;
    let mut trace = TrainTrace::default();

    for step in 1..=config.steps {
        if cursor + batch_size > n {
            order = sample_permutation(n, &mut order_rng)?;
            cursor = 0;
        }
        let batch: Vec<LabeledImage<f32>> = order[cursor..cursor + batch_size]
            .iter()
            .map(|&i| dataset.train[i].clone())
            .collect();
        cursor += batch_size;

        let (xs, targets, reference) =
            augmented_batch(&batch, dataset.num_classes, augment, config.mode, &mut aug_rng)?;
        let (train_kl, logits) = model.sgd_step(&xs, &targets, config.lr);
        let wrong = logits
            .iter()
            .zip(&reference)
            .filter(|(z, &r)| softmax(z).argmax() != r)
            .count();
        let test_err = (step % config.eval_every == 0 || step == config.steps)
            .then(|| model.error_rate(&dataset.test));
        trace.rows.push(TraceRow {
            step,
            train_kl,
            train_err: wrong as f64 / batch_size as f64,
            test_err,
        });
    }
    Ok((model, trace))
}

//! Random image cropping and patching.
//!
//! A boundary position `(w, h)` splits the output canvas into four quadrants.
//! Quadrant `k` is filled with a crop of size `(w_k, h_k)` taken from source
//! image `k`, and the one-hot labels are mixed with weights
//! `W_k = w_k·h_k / (I_x·I_y)`.
//!
//! Two boundary modes are supported. [`BoundaryMode::PerBatch`] follows the
//! reference training loop: one boundary for the whole minibatch, one crop
//! origin per quadrant, and an independent whole-batch permutation per
//! quadrant to pick sources. [`BoundaryMode::PerSample`] draws a boundary,
//! four sources and four origins for every output sample from its own
//! sub-stream.

use serde::{Deserialize, Serialize};

use crate::image::{patch_compose, ImageTensor, Pixel, RealPixel, Rect};
use crate::sampling::{sample_beta, sample_index, sample_permutation, BetaParam, RngState};
use crate::{ficap, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    #[serde(rename = "UL")]
    UpperLeft,
    #[serde(rename = "UR")]
    UpperRight,
    #[serde(rename = "LL")]
    LowerLeft,
    #[serde(rename = "LR")]
    LowerRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::UpperLeft,
        Quadrant::UpperRight,
        Quadrant::LowerLeft,
        Quadrant::LowerRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Quadrant::UpperLeft => "UL",
            Quadrant::UpperRight => "UR",
            Quadrant::LowerLeft => "LL",
            Quadrant::LowerRight => "LR",
        }
    }

    pub fn is_right(self) -> bool {
        matches!(self, Quadrant::UpperRight | Quadrant::LowerRight)
    }

    pub fn is_lower(self) -> bool {
        matches!(self, Quadrant::LowerLeft | Quadrant::LowerRight)
    }
}

/// Output canvas size in pixels, `I_x × I_y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ParameterDomain(format!(
                "canvas must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn of<T: Pixel>(image: &ImageTensor<T>) -> Result<Self> {
        Self::new(image.width(), image.height())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundaryPosition {
    pub w: usize,
    pub h: usize,
}

impl BoundaryPosition {
    pub fn new(w: usize, h: usize, canvas: Canvas) -> Result<Self> {
        if w > canvas.width || h > canvas.height {
            return Err(Error::ParameterDomain(format!(
                "boundary ({w}, {h}) outside {}x{} canvas",
                canvas.width, canvas.height
            )));
        }
        Ok(Self { w, h })
    }

    /// Top-left offset of quadrant `q` in the patched canvas.
    pub fn placement(&self, q: Quadrant) -> (usize, usize) {
        (
            if q.is_right() { self.w } else { 0 },
            if q.is_lower() { self.h } else { 0 },
        )
    }
}

/// Where one quadrant's pixels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropSpec {
    pub quadrant: Quadrant,
    pub source_index: usize,
    /// `(x_k, y_k)`, top-left corner of the crop in the source image.
    pub origin: (usize, usize),
    /// `(w_k, h_k)`
    pub size: (usize, usize),
}

impl CropSpec {
    pub fn rect(&self) -> Rect {
        Rect::new(self.origin.0, self.origin.1, self.size.0, self.size.1)
    }

    pub fn area(&self) -> usize {
        self.size.0 * self.size.1
    }
}

/// The boundary implied by a full set of quadrant specs (the upper-left size).
pub fn boundary_of(specs: &[CropSpec; 4]) -> BoundaryPosition {
    BoundaryPosition {
        w: specs[0].size.0,
        h: specs[0].size.1,
    }
}

/// Area-proportional quadrant weights, held as integer pixel counts over the
/// canvas area so that they sum to one exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuadrantWeights {
    areas: [u64; 4],
    total: u64,
}

impl QuadrantWeights {
    pub fn from_areas(areas: [u64; 4]) -> Result<Self> {
        let total: u64 = areas.iter().sum();
        if total == 0 {
            return Err(Error::ParameterDomain("quadrant areas sum to zero".into()));
        }
        Ok(Self { areas, total })
    }

    pub fn areas(&self) -> [u64; 4] {
        self.areas
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, k: usize) -> f64 {
        self.areas[k] as f64 / self.total as f64
    }

    pub fn values(&self) -> [f64; 4] {
        [self.get(0), self.get(1), self.get(2), self.get(3)]
    }

    /// Index of the largest weight; ties go to the lowest quadrant index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for k in 1..4 {
            if self.areas[k] > self.areas[best] {
                best = k;
            }
        }
        best
    }
}

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Label("label has no classes".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Label(format!("probability {p} is not in [0, inf)")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Label(format!("probabilities sum to {sum}")));
        }
        Ok(Self { probs })
    }

    pub(crate) fn from_probs_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn one_hot(class_id: usize, num_classes: usize) -> Result<Self> {
        check_class(class_id, num_classes)?;
        let mut probs = vec![0.0; num_classes];
        probs[class_id] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Highest-probability class; ties go to the lowest class id.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = j;
            }
        }
        best
    }

    pub fn is_one_hot(&self) -> bool {
        self.probs.iter().filter(|&&p| p == 1.0).count() == 1
            && self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Non-zero entries as `(class_id, probability)`.
    pub fn sparse(&self) -> Vec<(usize, f64)> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(j, &p)| (j, p))
            .collect()
    }
}

fn check_class(class_id: usize, num_classes: usize) -> Result<()> {
    if class_id >= num_classes {
        return Err(Error::Label(format!(
            "class id {class_id} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage<T> {
    pub image: ImageTensor<T>,
    pub class_id: usize,
}

impl<T> LabeledImage<T> {
    pub fn new(image: ImageTensor<T>, class_id: usize) -> Self {
        Self { image, class_id }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample<T> {
    pub image: ImageTensor<T>,
    pub label: SoftLabel,
    pub weights: QuadrantWeights,
    pub specs: [CropSpec; 4],
}

impl<T> AugmentedSample<T> {
    /// Recomputes the soft label from the recorded crop specs and the class
    /// ids of the source batch.
    pub fn rederive_label(&self, classes: &[usize], num_classes: usize) -> Result<SoftLabel> {
        label_for_specs(&self.specs, classes, num_classes).map(|(label, _)| label)
    }
}

/// Output of the image-mixing-only ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct HardLabeledSample<T> {
    pub image: ImageTensor<T>,
    pub class_id: usize,
    pub weights: QuadrantWeights,
    pub specs: [CropSpec; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    #[default]
    PerBatch,
    PerSample,
}

/// How crop origins are chosen once the crop sizes are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginRule {
    /// `x_k ~ U{0, I_x − w_k}`, `y_k ~ U{0, I_y − h_k}`.
    Random,
    /// Position-preserving crops (each crop taken from the region it fills).
    Fixed,
}

/// Rounds half to even, the rounding used when scaling boundary fractions.
pub fn round_half_even(x: f64) -> f64 {
    x.round_ties_even()
}

pub fn draw_boundary(canvas: Canvas, beta: BetaParam, rng: &mut RngState) -> BoundaryPosition {
    let wf = sample_beta(beta, rng);
    let hf = sample_beta(beta, rng);
    boundary_from_fractions(wf, hf, canvas)
}

/// `w = round(w'·I_x)`, `h = round(h'·I_y)`.
pub fn boundary_from_fractions(wf: f64, hf: f64, canvas: Canvas) -> BoundaryPosition {
    let scale = |f: f64, n: usize| (round_half_even(f * n as f64).max(0.0) as usize).min(n);
    BoundaryPosition {
        w: scale(wf, canvas.width),
        h: scale(hf, canvas.height),
    }
}

/// The four `(w_k, h_k)` in quadrant order UL, UR, LL, LR.
pub fn crop_sizes(boundary: BoundaryPosition, canvas: Canvas) -> [(usize, usize); 4] {
    let (w, h) = (boundary.w, boundary.h);
    let (rw, rh) = (canvas.width - w, canvas.height - h);
    [(w, h), (rw, h), (w, rh), (rw, rh)]
}

pub fn mix_weights(sizes: [(usize, usize); 4], canvas: Canvas) -> QuadrantWeights {
    let areas = sizes.map(|(w, h)| (w * h) as u64);
    debug_assert_eq!(areas.iter().sum::<u64>(), canvas.area() as u64);
    QuadrantWeights {
        areas,
        total: canvas.area() as u64,
    }
}

/// `probs[j] = Σ_{k : classes[k] = j} W_k`, accumulated in integer pixel
/// counts before the single division.
pub fn mix_labels(
    classes: [usize; 4],
    weights: &QuadrantWeights,
    num_classes: usize,
) -> Result<SoftLabel> {
    let mut counts = vec![0u64; num_classes];
    for (k, &class_id) in classes.iter().enumerate() {
        check_class(class_id, num_classes)?;
        counts[class_id] += weights.areas[k];
    }
    let total = weights.total as f64;
    Ok(SoftLabel::from_probs_unchecked(
        counts.into_iter().map(|c| c as f64 / total).collect(),
    ))
}

/// Shared `(channels, I_x, I_y)` of a nonempty batch.
pub fn batch_canvas<T: Pixel>(images: &[&ImageTensor<T>]) -> Result<Canvas> {
    let first = images
        .first()
        .ok_or_else(|| Error::Batch("batch is empty".into()))?;
    for (i, img) in images.iter().enumerate().skip(1) {
        if img.shape() != first.shape() {
            return Err(Error::Batch(format!(
                "image {i} has shape {:?}, image 0 has {:?}",
                img.shape(),
                first.shape()
            )));
        }
    }
    Canvas::of(first)
}

fn origin_for(
    rule: OriginRule,
    quadrant: Quadrant,
    boundary: BoundaryPosition,
    size: (usize, usize),
    canvas: Canvas,
    rng: &mut RngState,
) -> (usize, usize) {
    match rule {
        OriginRule::Random => {
            let x = sample_index(canvas.width - size.0, rng);
            let y = sample_index(canvas.height - size.1, rng);
            (x, y)
        }
        OriginRule::Fixed => ficap::ficap_crop_origin(quadrant, boundary),
    }
}

/// Draws the crop specs for `batch_len` output samples.
pub fn plan_crops(
    batch_len: usize,
    canvas: Canvas,
    beta: BetaParam,
    rng: &mut RngState,
    mode: BoundaryMode,
    rule: OriginRule,
) -> Result<Vec<[CropSpec; 4]>> {
    if batch_len == 0 {
        return Err(Error::Batch("batch is empty".into()));
    }
    match mode {
        BoundaryMode::PerBatch => {
            let boundary = draw_boundary(canvas, beta, rng);
            let sizes = crop_sizes(boundary, canvas);
            let mut columns = Vec::with_capacity(4);
            for q in Quadrant::ALL {
                let perm = sample_permutation(batch_len, rng)?;
                let size = sizes[q.index()];
                let origin = origin_for(rule, q, boundary, size, canvas, rng);
                columns.push((perm, origin));
            }
            Ok((0..batch_len)
                .map(|i| {
                    Quadrant::ALL.map(|q| {
                        let (perm, origin) = &columns[q.index()];
                        CropSpec {
                            quadrant: q,
                            source_index: perm[i],
                            origin: *origin,
                            size: sizes[q.index()],
                        }
                    })
                })
                .collect())
        }
        BoundaryMode::PerSample => {
            let batch_key = rng.next_u64();
            let batch_stream = rng.substream(batch_key);
            Ok((0..batch_len)
                .map(|i| {
                    let mut sub = batch_stream.substream(i as u64);
                    let boundary = draw_boundary(canvas, beta, &mut sub);
                    let sizes = crop_sizes(boundary, canvas);
                    Quadrant::ALL.map(|q| {
                        let source_index = sample_index(batch_len - 1, &mut sub);
                        let size = sizes[q.index()];
                        let origin = origin_for(rule, q, boundary, size, canvas, &mut sub);
                        CropSpec {
                            quadrant: q,
                            source_index,
                            origin,
                            size,
                        }
                    })
                })
                .collect())
        }
    }
}

/// Crops every quadrant from its source and patches the results.
pub fn compose_from_specs<T: Pixel>(
    sources: &[&ImageTensor<T>],
    specs: &[CropSpec; 4],
    canvas: Canvas,
) -> Result<ImageTensor<T>> {
    let mut patches = Vec::with_capacity(4);
    for spec in specs {
        let src = sources.get(spec.source_index).ok_or_else(|| {
            Error::Batch(format!(
                "{} source index {} out of range for batch of {}",
                spec.quadrant.short_name(),
                spec.source_index,
                sources.len()
            ))
        })?;
        patches.push(src.crop(spec.rect())?);
    }
    let b = boundary_of(specs);
    patch_compose(
        &patches[0],
        &patches[1],
        &patches[2],
        &patches[3],
        (b.w, b.h),
        (canvas.width, canvas.height),
    )
}

fn label_for_specs(
    specs: &[CropSpec; 4],
    classes: &[usize],
    num_classes: usize,
) -> Result<(SoftLabel, QuadrantWeights)> {
    let weights = QuadrantWeights::from_areas(specs.map(|s| s.area() as u64))?;
    let mut quadrant_classes = [0usize; 4];
    for (k, spec) in specs.iter().enumerate() {
        quadrant_classes[k] = *classes.get(spec.source_index).ok_or_else(|| {
            Error::Batch(format!("source index {} out of range", spec.source_index))
        })?;
    }
    Ok((mix_labels(quadrant_classes, &weights, num_classes)?, weights))
}

/// Builds augmented samples from already-drawn crop specs.
pub fn assemble<T: Pixel>(
    batch: &[LabeledImage<T>],
    num_classes: usize,
    plans: &[[CropSpec; 4]],
) -> Result<Vec<AugmentedSample<T>>> {
    let images: Vec<&ImageTensor<T>> = batch.iter().map(|s| &s.image).collect();
    let classes: Vec<usize> = batch.iter().map(|s| s.class_id).collect();
    let canvas = batch_canvas(&images)?;
    plans
        .iter()
        .map(|specs| {
            let image = compose_from_specs(&images, specs, canvas)?;
            let (label, weights) = label_for_specs(specs, &classes, num_classes)?;
            Ok(AugmentedSample {
                image,
                label,
                weights,
                specs: *specs,
            })
        })
        .collect()
}

pub(crate) fn augment_with_rule<T: Pixel>(
    batch: &[LabeledImage<T>],
    num_classes: usize,
    beta: BetaParam,
    rng: &mut RngState,
    mode: BoundaryMode,
    rule: OriginRule,
) -> Result<Vec<AugmentedSample<T>>> {
    let images: Vec<&ImageTensor<T>> = batch.iter().map(|s| &s.image).collect();
    let canvas = batch_canvas(&images)?;
    let plans = plan_crops(batch.len(), canvas, beta, rng, mode, rule)?;
    assemble(batch, num_classes, &plans)
}

/// RICAP over a minibatch: one augmented sample per input position.
pub fn ricap_batch<T: Pixel>(
    batch: &[LabeledImage<T>],
    num_classes: usize,
    beta: BetaParam,
    rng: &mut RngState,
    mode: BoundaryMode,
) -> Result<Vec<AugmentedSample<T>>> {
    augment_with_rule(batch, num_classes, beta, rng, mode, OriginRule::Random)
}

/// Image mixing only: patched images with the hard label of the quadrant
/// that occupies the largest area.
pub fn ricap_image_only<T: Pixel>(
    batch: &[LabeledImage<T>],
    num_classes: usize,
    beta: BetaParam,
    rng: &mut RngState,
    mode: BoundaryMode,
) -> Result<Vec<HardLabeledSample<T>>> {
    let samples = ricap_batch(batch, num_classes, beta, rng, mode)?;
    Ok(samples
        .into_iter()
        .map(|s| {
            let k = s.weights.argmax();
            HardLabeledSample {
                class_id: batch[s.specs[k].source_index].class_id,
                image: s.image,
                weights: s.weights,
                specs: s.specs,
            }
        })
        .collect())
}

/// Label mixing only: the un-augmented image of the largest-area source
/// paired with the full four-way soft label.
pub fn ricap_label_only<T: Pixel>(
    batch: &[LabeledImage<T>],
    num_classes: usize,
    beta: BetaParam,
    rng: &mut RngState,
    mode: BoundaryMode,
) -> Result<Vec<AugmentedSample<T>>> {
    let images: Vec<&ImageTensor<T>> = batch.iter().map(|s| &s.image).collect();
    let canvas = batch_canvas(&images)?;
    let plans = plan_crops(batch.len(), canvas, beta, rng, mode, OriginRule::Random)?;
    label_only_from_plans(batch, num_classes, &plans)
}

pub fn label_only_from_plans<T: Pixel>(
    batch: &[LabeledImage<T>],
    num_classes: usize,
    plans: &[[CropSpec; 4]],
) -> Result<Vec<AugmentedSample<T>>> {
    let classes: Vec<usize> = batch.iter().map(|s| s.class_id).collect();
    plans
        .iter()
        .map(|specs| {
            let (label, weights) = label_for_specs(specs, &classes, num_classes)?;
            let source = specs[weights.argmax()].source_index;
            Ok(AugmentedSample {
                image: batch[source].image.clone(),
                label,
                weights,
                specs: *specs,
            })
        })
        .collect()
}

/// Pixel-wise blend `Σ W_k · image_k`.
///
/// Evaluated as `x_1 + Σ_{k>1} W_k (x_k − x_1)`, which equals the convex
/// combination because the weights sum to one, and returns `x_1` exactly
/// when all sources agree or the first weight is one.
pub fn blend_four<T: RealPixel>(
    images: [&ImageTensor<T>; 4],
    weights: &QuadrantWeights,
) -> Result<ImageTensor<T>> {
    let shape = images[0].shape();
    if let Some(k) = (1..4).find(|&k| images[k].shape() != shape) {
        return Err(Error::Batch(format!(
            "blend input {k} has shape {:?}, expected {shape:?}",
            images[k].shape()
        )));
    }
    let w = weights.values();
    let data = (0..images[0].data().len())
        .map(|i| {
            let anchor = images[0].data()[i].to_f64();
            let mut acc = anchor;
            for k in 1..4 {
                if w[k] != 0.0 {
                    acc += w[k] * (images[k].data()[i].to_f64() - anchor);
                }
            }
            T::from_f64(acc)
        })
        .collect();
    ImageTensor::new(shape.0, shape.1, shape.2, data)
}

/// Four-image mixup comparator: the RICAP weight draw reused as alpha values
/// for a pixel-wise blend of the four whole source images.
pub fn four_mixup<T: RealPixel>(
    batch: &[LabeledImage<T>],
    num_classes: usize,
    beta: BetaParam,
    rng: &mut RngState,
    mode: BoundaryMode,
) -> Result<Vec<AugmentedSample<T>>> {
    let images: Vec<&ImageTensor<T>> = batch.iter().map(|s| &s.image).collect();
    let canvas = batch_canvas(&images)?;
    let plans = plan_crops(batch.len(), canvas, beta, rng, mode, OriginRule::Random)?;
    let classes: Vec<usize> = batch.iter().map(|s| s.class_id).collect();
    plans
        .iter()
        .map(|specs| {
            let (label, weights) = label_for_specs(specs, &classes, num_classes)?;
            let sources = specs.map(|s| images[s.source_index]);
            Ok(AugmentedSample {
                image: blend_four(sources, &weights)?,
                label,
                weights,
                specs: *specs,
            })
        })
        .collect()
}

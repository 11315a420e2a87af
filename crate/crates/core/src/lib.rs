//! Random image cropping and patching (RICAP) augmentation.
//!
//! Four training images are cropped and patched into a single canvas split at a
//! random boundary position; the class labels are mixed in proportion to the
//! area each crop occupies. The crate also ships the fixed-crop variant used for
//! aligned imagery, a bounding-box aware variant for detection, an embedding
//! mixer, the ablation variants, a four-image mixup comparator, and the
//! soft-label losses plus a small linear trainer used to exercise everything
//! end to end.
//!
//! All randomness flows through [`sampling::RngState`], so every operation is
//! reproducible from a `(seed, stream_id)` pair.

pub mod detect;
pub mod embed;
mod error;
pub mod ficap;
pub mod image;
pub mod loss;
pub mod ricap;
pub mod sampling;
pub mod train;

pub use error::{Error, Result};
pub use image::{ImageTensor, Pixel, RealPixel, Rect};
pub use ricap::{
    AugmentedSample, BoundaryMode, BoundaryPosition, Canvas, CropSpec, LabeledImage, Quadrant,
    QuadrantWeights, SoftLabel,
};
pub use sampling::{BetaParam, RngState};

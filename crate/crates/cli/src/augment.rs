//! The `augment` subcommand: read a manifest, augment it batch by batch, and
//! write `images/NNNNNN.png` plus one JSON line per output to `records.jsonl`.
//!
//! Batches are consecutive runs of `batch_size` manifest entries; batch `b`
//! draws from stream `b` of the seed, so the output tree is a pure function
//! of the manifest, the flags and the seed.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ricap_core::detect::{ricap_detection_batch, BBox, DetectionSample};
use ricap_core::ficap::ficap_batch;
use ricap_core::ricap::{
    boundary_of, four_mixup, mix_labels, ricap_batch, ricap_image_only, ricap_label_only,
    round_half_even,
};
use ricap_core::{
    BetaParam, BoundaryMode, CropSpec, ImageTensor, LabeledImage, Quadrant, QuadrantWeights, Rect,
    RngState,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{encode_image, load_images, load_manifest, LoadedManifest};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Ricap,
    RicapImageOnly,
    RicapLabelOnly,
    FourMixup,
    Ficap,
    Detect,
}

#[derive(Debug, Clone)]
pub struct AugmentOptions {
    pub manifest: PathBuf,
    pub variant: Variant,
    pub beta: BetaParam,
    pub seed: u64,
    pub batch_size: usize,
    pub boundary: BoundaryMode,
    pub min_visibility: f64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub quadrant: Quadrant,
    pub source_path: String,
    pub source_class: usize,
    pub crop: Rect,
    pub placement: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOutputRecord {
    pub image_path: String,
    pub variant: Variant,
    /// Sparse `(class_id, weight)` pairs; absent for detection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_label: Option<Vec<(usize, f64)>>,
    pub provenance: Vec<ProvenanceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<BBox>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSummary {
    pub images_written: usize,
    pub records_path: PathBuf,
}

fn provenance(
    specs: &[CropSpec; 4],
    batch_offset: usize,
    loaded: &LoadedManifest,
) -> Vec<ProvenanceEntry> {
    let boundary = boundary_of(specs);
    specs
        .iter()
        .map(|s| {
            let entry = &loaded.manifest.entries[batch_offset + s.source_index];
            ProvenanceEntry {
                quadrant: s.quadrant,
                source_path: entry.path.clone(),
                source_class: entry.class_id,
                crop: s.rect(),
                placement: boundary.placement(s.quadrant),
            }
        })
        .collect()
}

fn to_real(image: &ImageTensor<u8>) -> Result<ImageTensor<f32>> {
    let (c, h, w) = image.shape();
    Ok(ImageTensor::new(c, h, w, image.data().iter().map(|&v| v as f32).collect())?)
}

/// Rounds half to even and saturates to `0..=255`.
fn to_u8(image: &ImageTensor<f32>) -> Result<ImageTensor<u8>> {
    let (c, h, w) = image.shape();
    let data = image
        .data()
        .iter()
        .map(|&v| round_half_even(v as f64).clamp(0.0, 255.0) as u8)
        .collect();
    Ok(ImageTensor::new(c, h, w, data)?)
}

/// Image, sparse label, crop plan and boxes of one written sample.
type Output = (ImageTensor<u8>, Option<Vec<(usize, f64)>>, [CropSpec; 4], Option<Vec<BBox>>);

pub fn cmd_augment(opts: &AugmentOptions) -> Result<AugmentSummary> {
    if opts.batch_size == 0 {
        return Err(CliError::Validation("--batch-size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&opts.min_visibility) {
        return Err(CliError::Validation(format!(
            "--min-visibility must lie in [0, 1], got {}",
            opts.min_visibility
        )));
    }
    let loaded = load_manifest(&opts.manifest)?;
    if opts.variant == Variant::Detect && loaded.manifest.entries.iter().any(|e| e.boxes.is_none()) {
        return Err(CliError::Validation(
            "--variant detect needs a `boxes` list on every manifest entry".into(),
        ));
    }
    let images = load_images(&loaded)?;
    let num_classes = loaded.manifest.num_classes;

    let image_dir = opts.out.join(IMAGES_DIR);
    fs::create_dir_all(&image_dir).map_err(|e| CliError::io(&image_dir, e))?;
    let records_path = opts.out.join(RECORDS_FILE);
    let file = File::create(&records_path).map_err(|e| CliError::io(&records_path, e))?;
    let mut records = BufWriter::new(file);

    let mut written = 0usize;
    for (b, start) in (0..images.len()).step_by(opts.batch_size).enumerate() {
        let end = (start + opts.batch_size).min(images.len());
        let mut rng = RngState::new(opts.seed, b as u64);
        let batch: Vec<LabeledImage<u8>> = (start..end)
            .map(|i| LabeledImage::new(images[i].clone(), loaded.manifest.entries[i].class_id))
            .collect();

        let outputs: Vec<Output> =
            match opts.variant {
                Variant::Ricap | Variant::Ficap => {
                    let samples = if opts.variant == Variant::Ricap {
                        ricap_batch(&batch, num_classes, opts.beta, &mut rng, opts.boundary)?
                    } else {
                        ficap_batch(&batch, num_classes, opts.beta, &mut rng, opts.boundary)?
                    };
                    samples
                        .into_iter()
                        .map(|s| (s.image, Some(s.label.sparse()), s.specs, None))
                        .collect()
                }
                Variant::RicapLabelOnly => {
                    ricap_label_only(&batch, num_classes, opts.beta, &mut rng, opts.boundary)?
                        .into_iter()
                        .map(|s| (s.image, Some(s.label.sparse()), s.specs, None))
                        .collect()
                }
                Variant::RicapImageOnly => {
                    ricap_image_only(&batch, num_classes, opts.beta, &mut rng, opts.boundary)?
                        .into_iter()
                        .map(|s| (s.image, Some(vec![(s.class_id, 1.0)]), s.specs, None))
                        .collect()
                }
                Variant::FourMixup => {
                    let real: Vec<LabeledImage<f32>> = batch
                        .iter()
                        .map(|s| Ok(LabeledImage::new(to_real(&s.image)?, s.class_id)))
                        .collect::<Result<_>>()?;
                    let mut out = Vec::with_capacity(real.len());
                    for s in four_mixup(&real, num_classes, opts.beta, &mut rng, opts.boundary)? {
                        out.push((to_u8(&s.image)?, Some(s.label.sparse()), s.specs, None));
                    }
                    out
                }
                Variant::Detect => {
                    let det: Vec<DetectionSample<u8>> = batch
                        .iter()
                        .enumerate()
                        .map(|(i, s)| DetectionSample {
                            image: s.image.clone(),
                            boxes: loaded.manifest.entries[start + i].boxes.clone().unwrap_or_default(),
                        })
                        .collect();
                    ricap_detection_batch(&det, opts.beta, &mut rng, opts.boundary, opts.min_visibility)?
                        .into_iter()
                        .map(|s| (s.image, None, s.specs, Some(s.boxes)))
                        .collect()
                }
            };

        for (image, soft_label, specs, boxes) in outputs {
            let rel = format!("{IMAGES_DIR}/{written:06}.png");
            encode_image(&image, &opts.out.join(&rel))?;
            let record = AugmentOutputRecord {
                image_path: rel,
                variant: opts.variant,
                soft_label,
                provenance: provenance(&specs, start, &loaded),
                boxes,
            };
            serde_json::to_writer(&mut records, &record)
                .map_err(|e| CliError::Validation(format!("cannot serialize record: {e}")))?;
            records
                .write_all(b"\n")
                .map_err(|e| CliError::io(&records_path, e))?;
            written += 1;
        }
    }
    records.flush().map_err(|e| CliError::io(&records_path, e))?;
    Ok(AugmentSummary {
        images_written: written,
        records_path,
    })
}

pub fn read_records(path: &Path) -> Result<Vec<AugmentOutputRecord>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|line| {
            let line = line.map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&line).map_err(|source| CliError::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

/// Re-derives a record's label from its provenance rectangles and checks it
/// against the recorded one; for detection, checks that every box lies inside
/// the quadrant it was placed in.
pub fn verify_record(record: &AugmentOutputRecord, num_classes: usize) -> Result<()> {
    if record.provenance.len() != 4 {
        return Err(CliError::Invariant(format!(
            "{}: expected 4 provenance entries, found {}",
            record.image_path,
            record.provenance.len()
        )));
    }
    let areas: [u64; 4] = std::array::from_fn(|k| record.provenance[k].crop.area() as u64);
    let classes: [usize; 4] = std::array::from_fn(|k| record.provenance[k].source_class);
    let weights = QuadrantWeights::from_areas(areas)?;

    if record.variant == Variant::Detect {
        let boxes = record.boxes.as_deref().unwrap_or_default();
        for b in boxes {
            let inside = record.provenance.iter().any(|p| {
                b.is_within(Rect::new(p.placement.0, p.placement.1, p.crop.w, p.crop.h))
            });
            if !inside {
                return Err(CliError::Invariant(format!(
                    "{}: box {b:?} lies outside every quadrant",
                    record.image_path
                )));
            }
        }
        return Ok(());
    }

    let expected = match record.variant {
        Variant::RicapImageOnly => vec![(classes[weights.argmax()], 1.0)],
        _ => mix_labels(classes, &weights, num_classes)?.sparse(),
    };
    let recorded = record.soft_label.clone().unwrap_or_default();
    if recorded != expected {
        return Err(CliError::Invariant(format!(
            "{}: recorded label {recorded:?} but provenance gives {expected:?}",
            record.image_path
        )));
    }
    let sum: f64 = recorded.iter().map(|(_, w)| w).sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(CliError::Invariant(format!(
            "{}: label weights sum to {sum}",
            record.image_path
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_back_to_bytes() {
        let img = ImageTensor::new(1, 1, 5, vec![-3.0f32, 0.5, 1.5, 254.6, 300.0]).unwrap();
        assert_eq!(to_u8(&img).unwrap().data(), &[0, 0, 2, 255, 255]);
    }

    #[test]
    fn tampered_record_fails_verification() {
        let prov = |q, w, h, class| ProvenanceEntry {
            quadrant: q,
            source_path: "a.png".into(),
            source_class: class,
            crop: Rect::new(0, 0, w, h),
            placement: (0, 0),
        };
        let mut record = AugmentOutputRecord {
            image_path: "images/000000.png".into(),
            variant: Variant::Ricap,
            soft_label: Some(vec![(0, 0.2), (1, 0.8)]),
            provenance: vec![
                prov(Quadrant::UpperLeft, 1, 1, 0),
                prov(Quadrant::UpperRight, 2, 1, 1),
                prov(Quadrant::LowerLeft, 1, 1, 1),
                prov(Quadrant::LowerRight, 1, 1, 1),
            ],
            boxes: None,
        };
        verify_record(&record, 2).unwrap();
        record.soft_label = Some(vec![(0, 0.5), (1, 0.5)]);
        assert!(matches!(verify_record(&record, 2), Err(CliError::Invariant(_))));
        record.variant = Variant::RicapImageOnly;
        record.soft_label = Some(vec![(1, 1.0)]);
        verify_record(&record, 2).unwrap();
    }
}

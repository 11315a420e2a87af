//! Fixed image cropping and patching, for aligned imagery where absolute
//! position carries meaning. The boundary is still random but every crop is
//! taken from exactly the region it will occupy in the output, so each output
//! pixel `(x, y)` comes from pixel `(x, y)` of its source.

use crate::image::Pixel;
use crate::ricap::{
    augment_with_rule, AugmentedSample, BoundaryMode, BoundaryPosition, LabeledImage, OriginRule,
    Quadrant,
};
use crate::sampling::{BetaParam, RngState};
use crate::Result;

pub fn ficap_crop_origin(quadrant: Quadrant, boundary: BoundaryPosition) -> (usize, usize) {
    boundary.placement(quadrant)
}

/// Same contract as [`crate::ricap::ricap_batch`] except for the crop origins.
/// Labels are still area-mixed.
pub fn ficap_batch<T: Pixel>(
    batch: &[LabeledImage<T>],
    num_classes: usize,
    beta: BetaParam,
    rng: &mut RngState,
    mode: BoundaryMode,
) -> Result<Vec<AugmentedSample<T>>> {
    augment_with_rule(batch, num_classes, beta, rng, mode, OriginRule::Fixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageTensor;
    use crate::ricap::{boundary_of, Canvas};

    #[test]
    fn origin_table() {
        let c = Canvas::new(32, 32).unwrap();
        let b = BoundaryPosition::new(16, 16, c).unwrap();
        assert_eq!(ficap_crop_origin(Quadrant::LowerRight, b), (16, 16));
        let zero = BoundaryPosition::new(0, 0, c).unwrap();
        for q in Quadrant::ALL {
            assert_eq!(ficap_crop_origin(q, zero), (0, 0));
        }
        let b = BoundaryPosition::new(8, 24, c).unwrap();
        assert_eq!(ficap_crop_origin(Quadrant::UpperRight, b), (8, 0));
        assert_eq!(ficap_crop_origin(Quadrant::LowerLeft, b), (0, 24));
    }

    #[test]
    fn quadrants_keep_absolute_position() {
        let batch: Vec<_> = (0..4)
            .map(|i| {
                LabeledImage::new(
                    ImageTensor::from_fn(3, 10, 12, |c, y, x| (i * 50 + c * 11 + y * 3 + x) as u8)
                        .unwrap(),
                    i,
                )
            })
            .collect();
        for mode in [BoundaryMode::PerBatch, BoundaryMode::PerSample] {
            let mut rng = RngState::new(4, 2);
            for _ in 0..50 {
                let out = ficap_batch(&batch, 4, BetaParam::new(0.5).unwrap(), &mut rng, mode).unwrap();
                for s in &out {
                    let b = boundary_of(&s.specs);
                    for y in 0..10 {
                        for x in 0..12 {
                            let k = (x >= b.w) as usize + 2 * (y >= b.h) as usize;
                            let src = &batch[s.specs[k].source_index].image;
                            for c in 0..3 {
                                assert_eq!(s.image.get(c, y, x), src.get(c, y, x));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn passthrough_at_beta_zero() {
        let batch: Vec<_> = (0..3)
            .map(|i| LabeledImage::new(ImageTensor::from_fn(1, 6, 6, |_, y, x| (i * 36 + y * 6 + x) as u8).unwrap(), i))
            .collect();
        let mut rng = RngState::new(0, 0);
        for _ in 0..20 {
            for s in ficap_batch(&batch, 3, BetaParam::ZERO, &mut rng, BoundaryMode::PerBatch).unwrap() {
                assert!(batch.iter().any(|b| b.image == s.image && b.class_id == s.label.argmax()));
                assert!(s.label.is_one_hot());
            }
        }
    }
}

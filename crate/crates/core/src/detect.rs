//! Cropping and patching for object detection.
//!
//! Images are patched exactly as in [`crate::ricap`]; instead of mixing
//! labels, every source bounding box is clipped to its quadrant's crop and
//! moved into the patched frame.

use serde::{Deserialize, Serialize};

use crate::image::{ImageTensor, Pixel, Rect};
use crate::ricap::{
    batch_canvas, boundary_of, compose_from_specs, plan_crops, BoundaryMode, CropSpec, OriginRule,
};
use crate::sampling::{BetaParam, RngState};
use crate::{Error, Result};

/// Axis-aligned box in absolute pixels, center form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(class_id: usize, cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { class_id, cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn from_corners(class_id: usize, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(class_id, (x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::Input(format!(
                "box must have finite coordinates and positive extent, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `(x0, y0, x1, y1)`
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Whether the box lies inside `[x, x+w] × [y, y+h]`.
    pub fn is_within(&self, rect: Rect) -> bool {
        let (x0, y0, x1, y1) = self.corners();
        x0 >= rect.x as f64
            && y0 >= rect.y as f64
            && x1 <= rect.right() as f64
            && y1 <= rect.bottom() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSample<T> {
    pub image: ImageTensor<T>,
    pub boxes: Vec<BBox>,
}

/// A patched detection sample together with the crops it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchedDetection<T> {
    pub image: ImageTensor<T>,
    pub boxes: Vec<BBox>,
    pub specs: [CropSpec; 4],
}

impl<T> PatchedDetection<T> {
    pub fn into_sample(self) -> DetectionSample<T> {
        DetectionSample {
            image: self.image,
            boxes: self.boxes,
        }
    }
}

fn check_visibility(min_visibility: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&min_visibility) {
        return Err(Error::ParameterDomain(format!(
            "min_visibility must lie in [0, 1], got {min_visibility}"
        )));
    }
    Ok(())
}

/// Clips `bbox` to `crop` and moves the visible part to `placement` in the
/// patched canvas. Returns `None` when nothing is visible or the visible
/// fraction of the original area is below `min_visibility`.
pub fn transform_bbox(
    bbox: &BBox,
    crop: Rect,
    placement: (usize, usize),
    min_visibility: f64,
) -> Result<Option<BBox>> {
    bbox.validate()?;
    check_visibility(min_visibility)?;
    let shift_x = placement.0 as f64 - crop.x as f64;
    let shift_y = placement.1 as f64 - crop.y as f64;

    if bbox.is_within(crop) {
        return Ok(Some(BBox {
            cx: bbox.cx + shift_x,
            cy: bbox.cy + shift_y,
            ..*bbox
        }));
    }

    let (x0, y0, x1, y1) = bbox.corners();
    let ix0 = x0.max(crop.x as f64);
    let iy0 = y0.max(crop.y as f64);
    let ix1 = x1.min(crop.right() as f64);
    let iy1 = y1.min(crop.bottom() as f64);
    if ix1 <= ix0 || iy1 <= iy0 {
        return Ok(None);
    }
    let visible = (ix1 - ix0) * (iy1 - iy0) / ((x1 - x0) * (y1 - y0));
    if visible < min_visibility {
        return Ok(None);
    }
    BBox::from_corners(
        bbox.class_id,
        ix0 + shift_x,
        iy0 + shift_y,
        ix1 + shift_x,
        iy1 + shift_y,
    )
    .map(Some)
}

/// Boxes of one patched sample, gathered quadrant by quadrant.
pub fn boxes_for_specs<T>(
    batch: &[DetectionSample<T>],
    specs: &[CropSpec; 4],
    min_visibility: f64,
) -> Result<Vec<BBox>> {
    let boundary = boundary_of(specs);
    let mut out = Vec::new();
    for spec in specs {
        let placement = boundary.placement(spec.quadrant);
        for b in &batch[spec.source_index].boxes {
            if let Some(moved) = transform_bbox(b, spec.rect(), placement, min_visibility)? {
                out.push(moved);
            }
        }
    }
    Ok(out)
}

pub fn ricap_detection_batch<T: Pixel>(
    batch: &[DetectionSample<T>],
    beta: BetaParam,
    rng: &mut RngState,
    mode: BoundaryMode,
    min_visibility: f64,
) -> Result<Vec<PatchedDetection<T>>> {
    check_visibility(min_visibility)?;
    let images: Vec<&ImageTensor<T>> = batch.iter().map(|s| &s.image).collect();
    let canvas = batch_canvas(&images)?;
    let plans = plan_crops(batch.len(), canvas, beta, rng, mode, OriginRule::Random)?;
    plans
        .iter()
        .map(|specs| {
            Ok(PatchedDetection {
                image: compose_from_specs(&images, specs, canvas)?,
                boxes: boxes_for_specs(batch, specs, min_visibility)?,
                specs: *specs,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ricap::{Canvas, Quadrant};

    /// Rasterizes a box onto a pixel grid (pixel `(x, y)` covered when its
    /// unit cell lies inside the box), crops the mask, and returns the tight
    /// box of what survives, placed in the output frame.
    fn mask_oracle(
        corners: (i64, i64, i64, i64),
        crop: Rect,
        placement: (usize, usize),
        min_visibility: f64,
    ) -> Option<(f64, f64, f64, f64)> {
        let (x0, y0, x1, y1) = corners;
        let total = ((x1 - x0) * (y1 - y0)) as f64;
        let mut visible = 0usize;
        let (mut mnx, mut mny, mut mxx, mut mxy) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for y in crop.y as i64..crop.bottom() as i64 {
            for x in crop.x as i64..crop.right() as i64 {
                if x >= x0 && x < x1 && y >= y0 && y < y1 {
                    visible += 1;
                    mnx = mnx.min(x);
                    mny = mny.min(y);
                    mxx = mxx.max(x);
                    mxy = mxy.max(y);
                }
            }
        }
        if visible == 0 || (visible as f64) / total < min_visibility {
            return None;
        }
        let dx = placement.0 as i64 - crop.x as i64;
        let dy = placement.1 as i64 - crop.y as i64;
        Some((
            (mnx + dx) as f64,
            (mny + dy) as f64,
            (mxx + 1 + dx) as f64,
            (mxy + 1 + dy) as f64,
        ))
    }

    #[test]
    fn whole_image_box_into_center_crop() {
        let b = BBox::new(3, 16.0, 16.0, 32.0, 32.0).unwrap();
        let out = transform_bbox(&b, Rect::new(8, 8, 16, 16), (0, 0), 0.0).unwrap().unwrap();
        assert_eq!((out.cx, out.cy, out.w, out.h, out.class_id), (8.0, 8.0, 16.0, 16.0, 3));
        assert_eq!(
            mask_oracle((0, 0, 32, 32), Rect::new(8, 8, 16, 16), (0, 0), 0.0),
            Some(out.corners())
        );
    }

    #[test]
    fn disjoint_box_is_dropped() {
        let b = BBox::new(0, 4.0, 4.0, 4.0, 4.0).unwrap();
        assert_eq!(transform_bbox(&b, Rect::new(10, 10, 5, 5), (0, 0), 0.0).unwrap(), None);
        // touching edge, no positive overlap
        assert_eq!(transform_bbox(&b, Rect::new(6, 0, 5, 5), (0, 0), 0.0).unwrap(), None);
        assert_eq!(transform_bbox(&b, Rect::new(0, 0, 0, 32), (0, 0), 0.0).unwrap(), None);
    }

    #[test]
    fn identity_transform_is_exact() {
        let b = BBox::new(1, 10.3, 7.7, 3.1, 2.9).unwrap();
        assert_eq!(transform_bbox(&b, Rect::new(0, 0, 32, 32), (0, 0), 0.0).unwrap(), Some(b));
    }

    #[test]
    fn visibility_threshold() {
        let b = BBox::from_corners(0, 0.0, 0.0, 10.0, 10.0).unwrap();
        let crop = Rect::new(5, 0, 10, 10); // half visible
        assert!(transform_bbox(&b, crop, (0, 0), 0.5).unwrap().is_some());
        assert!(transform_bbox(&b, crop, (0, 0), 0.51).unwrap().is_none());
        assert!(transform_bbox(&b, crop, (0, 0), 1.5).is_err());
    }

    #[test]
    fn degenerate_input_box_is_rejected() {
        let b = BBox { class_id: 0, cx: 1.0, cy: 1.0, w: 0.0, h: 1.0 };
        assert!(matches!(transform_bbox(&b, Rect::new(0, 0, 4, 4), (0, 0), 0.0), Err(Error::Input(_))));
    }

    #[test]
    fn integer_cases_match_mask_oracle() {
        let mut rng = RngState::new(77, 0);
        let mut next = |hi: usize| crate::sampling::sample_index(hi, &mut rng);
        for _ in 0..2000 {
            let n = 12;
            let (a, b) = (next(n - 1), next(n - 1));
            let (c, d) = (next(n - 1), next(n - 1));
            let (x0, x1) = (a.min(b), a.max(b) + 1);
            let (y0, y1) = (c.min(d), c.max(d) + 1);
            let cw = next(n);
            let ch = next(n);
            let crop = Rect::new(next(n - cw), next(n - ch), cw, ch);
            let placement = (next(n - cw), next(n - ch));
            let vis = [0.0, 0.25, 0.5, 1.0][next(3)];
            let bbox = BBox::from_corners(0, x0 as f64, y0 as f64, x1 as f64, y1 as f64).unwrap();
            let got = transform_bbox(&bbox, crop, placement, vis).unwrap().map(|b| b.corners());
            let want = mask_oracle((x0 as i64, y0 as i64, x1 as i64, y1 as i64), crop, placement, vis);
            assert_eq!(got, want, "box {bbox:?} crop {crop:?} placement {placement:?} vis {vis}");
        }
    }

    #[test]
    fn subpixel_cases_within_half_pixel() {
        // Pixel-center rasterization on a grid; each edge is off by at most 0.5.
        let mut rng = RngState::new(78, 0);
        for _ in 0..1000 {
            let u = |rng: &mut RngState| crate::sampling::sample_beta(BetaParam::new(1.0).unwrap(), rng);
            let (a, b) = (u(&mut rng) * 16.0, u(&mut rng) * 16.0);
            let (c, d) = (u(&mut rng) * 16.0, u(&mut rng) * 16.0);
            let (x0, x1, y0, y1) = (a.min(b), a.max(b), c.min(d), c.max(d));
            if x1 - x0 < 1e-6 || y1 - y0 < 1e-6 {
                continue;
            }
            let crop = Rect::new(4, 3, 8, 9);
            let bbox = BBox::from_corners(0, x0, y0, x1, y1).unwrap();
            let got = transform_bbox(&bbox, crop, (0, 0), 0.0).unwrap();
            let covered: Vec<(usize, usize)> = (crop.y..crop.bottom())
                .flat_map(|y| (crop.x..crop.right()).map(move |x| (x, y)))
                .filter(|&(x, y)| {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    px >= x0 && px < x1 && py >= y0 && py < y1
                })
                .collect();
            if covered.is_empty() {
                continue;
            }
            let got = got.expect("pixels covered but box dropped");
            let (gx0, gy0, gx1, gy1) = got.corners();
            let mx0 = covered.iter().map(|p| p.0).min().unwrap() as f64 - crop.x as f64;
            let mx1 = covered.iter().map(|p| p.0).max().unwrap() as f64 + 1.0 - crop.x as f64;
            let my0 = covered.iter().map(|p| p.1).min().unwrap() as f64 - crop.y as f64;
            let my1 = covered.iter().map(|p| p.1).max().unwrap() as f64 + 1.0 - crop.y as f64;
            for (g, m) in [(gx0, mx0), (gy0, my0), (gx1, mx1), (gy1, my1)] {
                assert!((g - m).abs() <= 0.5 + 1e-9, "{got:?} vs mask {mx0},{my0},{mx1},{my1}");
            }
        }
    }

    #[test]
    fn batch_boxes_stay_in_their_quadrant() {
        let canvas = Canvas::new(32, 32).unwrap();
        let batch: Vec<_> = (0..4)
            .map(|i| DetectionSample {
                image: ImageTensor::filled(3, 32, 32, i as u8).unwrap(),
                boxes: vec![
                    BBox::new(i, 16.0, 16.0, 32.0, 32.0).unwrap(),
                    BBox::new(i, 5.0, 6.0, 4.0, 6.0).unwrap(),
                    BBox::new(i, 25.5, 20.25, 7.0, 9.5).unwrap(),
                ],
            })
            .collect();
        let mut rng = RngState::new(1, 0);
        for _ in 0..100 {
            let out = ricap_detection_batch(&batch, BetaParam::new(0.3).unwrap(), &mut rng, BoundaryMode::PerBatch, 0.0).unwrap();
            for s in out {
                let b = boundary_of(&s.specs);
                // the full-image box survives in every non-empty quadrant
                let nonempty = s.specs.iter().filter(|sp| sp.area() > 0).count();
                assert!(s.boxes.len() >= nonempty);
                for bx in &s.boxes {
                    let inside = Quadrant::ALL.iter().any(|&q| {
                        let (dx, dy) = b.placement(q);
                        let size = s.specs[q.index()].size;
                        bx.is_within(Rect::new(dx, dy, size.0, size.1))
                    });
                    assert!(inside, "{bx:?} escapes its quadrant");
                    assert!(bx.is_within(Rect::new(0, 0, canvas.width, canvas.height)));
                }
            }
        }
    }

    #[test]
    fn upper_left_full_box_example() {
        let src = DetectionSample {
            image: ImageTensor::filled(1, 32, 32, 0u8).unwrap(),
            boxes: vec![BBox::new(2, 16.0, 16.0, 32.0, 32.0).unwrap()],
        };
        let specs = Quadrant::ALL.map(|q| CropSpec { quadrant: q, source_index: 0, origin: (5, 9), size: (16, 16) });
        let boxes = boxes_for_specs(&[src], &specs, 0.0).unwrap();
        assert_eq!(boxes[0], BBox::new(2, 8.0, 8.0, 16.0, 16.0).unwrap());
        assert_eq!(boxes.len(), 4);
    }

    #[test]
    fn passthrough_keeps_boxes_exact() {
        let batch: Vec<_> = (0..3)
            .map(|i| DetectionSample {
                image: ImageTensor::from_fn(1, 16, 16, |_, y, x| (i * 60 + y + x) as u8).unwrap(),
                boxes: vec![BBox::new(i, 3.3 + i as f64, 7.1, 2.2, 4.4).unwrap()],
            })
            .collect();
        let mut rng = RngState::new(2, 0);
        for _ in 0..30 {
            for s in ricap_detection_batch(&batch, BetaParam::ZERO, &mut rng, BoundaryMode::PerSample, 0.0).unwrap() {
                let sample = s.into_sample();
                assert!(batch.contains(&sample));
            }
        }
    }
}

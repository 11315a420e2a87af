//! The `selfcheck` subcommand: a fixed-seed run of the library's core
//! invariants, reported per group.

use std::fmt;

use ricap_core::ficap::ficap_crop_origin;
use ricap_core::loss::{entropy, grad_soft_ce, kl_loss, soft_ce_loss, weighted_ce_loss};
use ricap_core::ricap::{assemble, boundary_of, crop_sizes, mix_labels, mix_weights, ricap_batch};
use ricap_core::sampling::{sample_beta, sample_index};
use ricap_core::{
    BetaParam, BoundaryMode, BoundaryPosition, Canvas, CropSpec, ImageTensor, LabeledImage,
    Quadrant, QuadrantWeights, RngState, SoftLabel,
};

const SEED: u64 = 0x5e1f_c4ec;

#[derive(Debug, Clone, Copy, Default)]
pub struct SelfCheckOptions {
    /// Negative control: flip one pixel of one composed image before the
    /// provenance group inspects it.
    pub corrupt_pixel: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl GroupResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for GroupResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {} ({} cases, {} failures)", self.name, self.cases, self.failures)?;
        if let Some(msg) = &self.first_failure {
            write!(f, ": {msg}")?;
        }
        Ok(())
    }
}

struct Group {
    result: GroupResult,
}

impl Group {
    fn new(name: &'static str) -> Self {
        Self {
            result: GroupResult {
                name,
                cases: 0,
                failures: 0,
                first_failure: None,
            },
        }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.result.cases += 1;
        if !ok {
            self.result.failures += 1;
            if self.result.first_failure.is_none() {
                self.result.first_failure = Some(describe());
            }
        }
    }
}

fn random_batch(n: usize, canvas: Canvas, rng: &mut RngState) -> Vec<LabeledImage<u8>> {
    (0..n)
        .map(|_| {
            let img = ImageTensor::from_fn(3, canvas.height, canvas.width, |_, _, _| {
                sample_index(255, rng) as u8
            })
            .expect("valid shape");
            LabeledImage::new(img, sample_index(9, rng))
        })
        .collect()
}

/// Which source pixel `(source_index, c, y, x)` should land at output
/// `(c, y, x)`, computed from the recorded specs alone.
fn traced_source(specs: &[CropSpec; 4], y: usize, x: usize) -> (usize, usize, usize) {
    let b = boundary_of(specs);
    let k = (x >= b.w) as usize + 2 * (y >= b.h) as usize;
    let (px, py) = b.placement(Quadrant::ALL[k]);
    let s = &specs[k];
    (s.source_index, s.origin.1 + y - py, s.origin.0 + x - px)
}

fn pixel_provenance(opts: SelfCheckOptions) -> GroupResult {
    let mut g = Group::new("pixel-provenance");
    let mut rng = RngState::new(SEED, 1);
    for draw in 0..200 {
        let side_w = 8 + sample_index(8, &mut rng);
        let side_h = 8 + sample_index(8, &mut rng);
        let canvas = Canvas::new(side_w, side_h).expect("nonzero");
        let batch = random_batch(4, canvas, &mut rng);
        let beta = BetaParam::new([0.1, 0.3, 1.0, 3.0][draw % 4]).expect("valid");
        let mode = if draw % 2 == 0 { BoundaryMode::PerBatch } else { BoundaryMode::PerSample };
        let mut out = match ricap_batch(&batch, 10, beta, &mut rng, mode) {
            Ok(out) => out,
            Err(e) => {
                g.check(false, || format!("draw {draw}: {e}"));
                continue;
            }
        };
        if opts.corrupt_pixel && draw == 0 {
            let v = out[0].image.get(0, 0, 0);
            out[0].image.set(0, 0, 0, v ^ 0xFF);
        }
        for (i, s) in out.iter().enumerate() {
            let mut mismatch = None;
            'pixels: for c in 0..3 {
                for y in 0..canvas.height {
                    for x in 0..canvas.width {
                        let (src, sy, sx) = traced_source(&s.specs, y, x);
                        if s.image.get(c, y, x) != batch[src].image.get(c, sy, sx) {
                            mismatch = Some((c, y, x));
                            break 'pixels;
                        }
                    }
                }
            }
            g.check(mismatch.is_none(), || {
                format!("draw {draw} sample {i}: pixel {mismatch:?} not traceable to its crop")
            });
        }
    }
    g.result
}

fn weight_conservation() -> GroupResult {
    let mut g = Group::new("weight-conservation");
    let mut rng = RngState::new(SEED, 2);
    for side in [8usize, 17, 32, 224] {
        let canvas = Canvas::new(side, side).expect("nonzero");
        for _ in 0..500 {
            let b = BoundaryPosition {
                w: sample_index(side, &mut rng),
                h: sample_index(side, &mut rng),
            };
            let w = mix_weights(crop_sizes(b, canvas), canvas);
            let exact = w.areas().iter().sum::<u64>() == w.total();
            let classes = [0; 4].map(|_| sample_index(9, &mut rng));
            let sum: f64 = mix_labels(classes, &w, 10)
                .map(|l| l.probs().iter().sum())
                .unwrap_or(f64::NAN);
            g.check(exact && (sum - 1.0).abs() < 1e-12, || {
                format!("boundary {b:?} on {side}x{side}: areas {:?}, label sum {sum}", w.areas())
            });
        }
    }
    g.result
}

fn random_logits(n: usize, rng: &mut RngState) -> Vec<f64> {
    (0..n).map(|_| 6.0 * rng.standard_normal()).collect()
}

fn loss_identities() -> GroupResult {
    let mut g = Group::new("loss-identities");
    let mut rng = RngState::new(SEED, 3);
    for case in 0..500 {
        let logits = random_logits(10, &mut rng);
        let areas = [0; 4].map(|_| sample_index(400, &mut rng) as u64 + 1);
        let classes = [0; 4].map(|_| sample_index(9, &mut rng));
        let w = QuadrantWeights::from_areas(areas).expect("positive");
        let target = mix_labels(classes, &w, 10).expect("valid classes");
        let a = weighted_ce_loss(&logits, classes, &w).unwrap_or(f64::NAN);
        let b = soft_ce_loss(&logits, &target);
        let kl = kl_loss(&logits, &target);
        let ok = (a - b).abs() < 1e-12 && (kl - (b - entropy(&target))).abs() < 1e-12 && kl >= -1e-12;
        g.check(ok, || format!("case {case}: weighted {a} soft {b} kl {kl}"));
    }
    g.result
}

fn gradient_check() -> GroupResult {
    let mut g = Group::new("gradient-check");
    let mut rng = RngState::new(SEED, 4);
    let step = 1e-5;
    for case in 0..100 {
        let logits = random_logits(6, &mut rng).iter().map(|z| z / 3.0).collect::<Vec<_>>();
        let raw: Vec<f64> = (0..6).map(|_| rng.uniform() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let mut probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
        probs[0] += 1.0 - probs.iter().sum::<f64>();
        let Ok(target) = SoftLabel::new(probs) else {
            g.check(false, || format!("case {case}: could not build target"));
            continue;
        };
        let analytic = grad_soft_ce(&logits, &target);
        let numeric: Vec<f64> = (0..logits.len())
            .map(|i| {
                let mut hi = logits.clone();
                let mut lo = logits.clone();
                hi[i] += step;
                lo[i] -= step;
                (kl_loss(&hi, &target) - kl_loss(&lo, &target)) / (2.0 * step)
            })
            .collect();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        g.check(rel < 1e-6, || format!("case {case}: relative error {rel}"));
    }
    g.result
}

fn passthrough() -> GroupResult {
    let mut g = Group::new("beta-zero-passthrough");
    let mut rng = RngState::new(SEED, 5);
    let canvas = Canvas::new(12, 9).expect("nonzero");
    for draw in 0..100 {
        let batch = random_batch(5, canvas, &mut rng);
        let mode = if draw % 2 == 0 { BoundaryMode::PerBatch } else { BoundaryMode::PerSample };
        let out = ricap_batch(&batch, 10, BetaParam::ZERO, &mut rng, mode).unwrap_or_default();
        g.check(out.len() == batch.len(), || format!("draw {draw}: wrong output count"));
        for s in &out {
            let ok = batch
                .iter()
                .any(|b| b.image == s.image && SoftLabel::one_hot(b.class_id, 10).ok().as_ref() == Some(&s.label));
            g.check(ok, || format!("draw {draw}: output is not an input image with one-hot label"));
        }
    }
    g.result
}

fn ficap_reconstruction() -> GroupResult {
    let mut g = Group::new("ficap-reconstruction");
    let mut rng = RngState::new(SEED, 6);
    let canvas = Canvas::new(16, 16).expect("nonzero");
    let batch = random_batch(1, canvas, &mut rng);
    for w in 0..=16 {
        for h in 0..=16 {
            let b = BoundaryPosition { w, h };
            let sizes = crop_sizes(b, canvas);
            let specs = Quadrant::ALL.map(|q| CropSpec {
                quadrant: q,
                source_index: 0,
                origin: ficap_crop_origin(q, b),
                size: sizes[q.index()],
            });
            let ok = assemble(&batch, 10, &[specs])
                .map(|out| out[0].image == batch[0].image)
                .unwrap_or(false);
            g.check(ok, || format!("boundary ({w}, {h}) does not reconstruct the source"));
        }
    }
    g.result
}

/// Fraction draws used by the sampler stay inside `[0, 1]`.
fn sampler_range() -> GroupResult {
    let mut g = Group::new("beta-sampler-range");
    let mut rng = RngState::new(SEED, 7);
    for beta in [0.0, 0.05, 0.3, 1.0, 3.0, 50.0] {
        let param = BetaParam::new(beta).expect("valid");
        let bad = (0..2000)
            .map(|_| sample_beta(param, &mut rng))
            .find(|f| !(0.0..=1.0).contains(f));
        g.check(bad.is_none(), || format!("beta {beta}: drew {bad:?}"));
    }
    g.result
}

pub fn run_selfcheck(opts: SelfCheckOptions) -> Vec<GroupResult> {
    vec![
        pixel_provenance(opts),
        weight_conservation(),
        loss_identities(),
        gradient_check(),
        passthrough(),
        ficap_reconstruction(),
        sampler_range(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes_every_group() {
        for g in run_selfcheck(SelfCheckOptions::default()) {
            assert!(g.passed(), "{g}");
            assert!(g.cases > 0);
        }
    }

    #[test]
    fn corrupted_pixel_fails_only_provenance() {
        let results = run_selfcheck(SelfCheckOptions { corrupt_pixel: true });
        for g in &results {
            assert_eq!(g.passed(), g.name != "pixel-provenance", "{g}");
        }
    }

    #[test]
    fn report_is_deterministic() {
        assert_eq!(run_selfcheck(SelfCheckOptions::default()), run_selfcheck(SelfCheckOptions::default()));
    }
}

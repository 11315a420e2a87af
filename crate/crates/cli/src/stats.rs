//! The `stats` subcommand: empirical distribution of boundary draws.
//!
//! CSV schema, one row per bin: `series,bin,count,frequency`. Series `w` and
//! `h` are histograms over every pixel value `0..=I`; series `W1`..`W4` bin
//! the quadrant weights into ten intervals of width 0.1 (labelled by their
//! lower edge, the last one closed).

use std::io::{self, Write};

use ricap_core::ricap::{crop_sizes, draw_boundary, mix_weights};
use ricap_core::{BetaParam, Canvas, RngState};

use crate::error::{CliError, Result};

pub const WEIGHT_BINS: usize = 10;

#[derive(Debug, Clone)]
pub struct StatsOptions {
    pub beta: BetaParam,
    pub samples: usize,
    pub canvas: Canvas,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub beta: BetaParam,
    pub canvas: Canvas,
    pub samples: usize,
    pub w_hist: Vec<u64>,
    pub h_hist: Vec<u64>,
    pub weight_hist: [[u64; WEIGHT_BINS]; 4],
    /// Mean and unbiased variance of `w / I_x` and `h / I_y`.
    pub w_moments: (f64, f64),
    pub h_moments: (f64, f64),
}

fn moments(hist: &[u64], extent: usize) -> (f64, f64) {
    let n: u64 = hist.iter().sum();
    let n = n as f64;
    let mean = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| c as f64 * v as f64 / extent as f64)
        .sum::<f64>()
        / n;
    let var = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| c as f64 * (v as f64 / extent as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (mean, var)
}

pub fn cmd_stats(opts: &StatsOptions) -> Result<StatsReport> {
    if opts.samples < 2 {
        return Err(CliError::Validation("--samples must be at least 2".into()));
    }
    let canvas = opts.canvas;
    let mut rng = RngState::new(opts.seed, 0);
    let mut w_hist = vec![0u64; canvas.width + 1];
    let mut h_hist = vec![0u64; canvas.height + 1];
    let mut weight_hist = [[0u64; WEIGHT_BINS]; 4];
    for _ in 0..opts.samples {
        let b = draw_boundary(canvas, opts.beta, &mut rng);
        w_hist[b.w] += 1;
        h_hist[b.h] += 1;
        let weights = mix_weights(crop_sizes(b, canvas), canvas);
        for (k, row) in weight_hist.iter_mut().enumerate() {
            let bin = ((weights.get(k) * WEIGHT_BINS as f64) as usize).min(WEIGHT_BINS - 1);
            row[bin] += 1;
        }
    }
    Ok(StatsReport {
        beta: opts.beta,
        canvas,
        samples: opts.samples,
        w_moments: moments(&w_hist, canvas.width),
        h_moments: moments(&h_hist, canvas.height),
        w_hist,
        h_hist,
        weight_hist,
    })
}

impl StatsReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.samples as f64;
        writeln!(out, "series,bin,count,frequency")?;
        for (name, hist) in [("w", &self.w_hist), ("h", &self.h_hist)] {
            for (v, &c) in hist.iter().enumerate() {
                writeln!(out, "{name},{v},{c},{}", c as f64 / n)?;
            }
        }
        for (k, row) in self.weight_hist.iter().enumerate() {
            for (bin, &c) in row.iter().enumerate() {
                let edge = bin as f64 / WEIGHT_BINS as f64;
                writeln!(out, "W{},{edge},{c},{}", k + 1, c as f64 / n)?;
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let expected = self.beta.variance();
        format!(
            "beta={} samples={} canvas={}x{}\n\
             w/I_x: mean={:.6} var={:.6} (closed form: mean=0.5 var={:.6})\n\
             h/I_y: mean={:.6} var={:.6} (closed form: mean=0.5 var={:.6})",
            self.beta.value(),
            self.samples,
            self.canvas.width,
            self.canvas.height,
            self.w_moments.0,
            self.w_moments.1,
            expected,
            self.h_moments.0,
            self.h_moments.1,
            expected,
        )
    }

    /// Largest per-bin z-score of the `w` histogram against the law of
    /// `round(U·I_x)` with `U` uniform: the end bins carry half a unit of
    /// mass, the interior bins a full unit.
    pub fn max_uniform_z(&self) -> f64 {
        let ix = self.canvas.width;
        let n = self.samples as f64;
        self.w_hist
            .iter()
            .enumerate()
            .map(|(v, &c)| {
                let p = if v == 0 || v == ix { 0.5 / ix as f64 } else { 1.0 / ix as f64 };
                (c as f64 - n * p).abs() / (n * p * (1.0 - p)).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

pub fn parse_canvas(s: &str) -> std::result::Result<Canvas, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    Canvas::new(w, h).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(beta: f64, samples: usize) -> StatsReport {
        cmd_stats(&StatsOptions {
            beta: BetaParam::new(beta).unwrap(),
            samples,
            canvas: Canvas::new(32, 32).unwrap(),
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn uniform_boundary_at_beta_one() {
        let r = run(1.0, 100_000);
        assert!(r.max_uniform_z() < 3.0, "z {}", r.max_uniform_z());
        assert!(r.w_hist.iter().all(|&c| c > 0));
    }

    #[test]
    fn degenerate_beta_hits_only_edges() {
        let r = run(0.0, 5_000);
        for (v, &c) in r.w_hist.iter().enumerate() {
            assert!(c == 0 || v == 0 || v == 32);
        }
        for row in &r.weight_hist {
            assert_eq!(row[1..WEIGHT_BINS - 1].iter().sum::<u64>(), 0);
        }
    }

    #[test]
    fn variance_at_point_three() {
        let r = run(0.3, 100_000);
        assert!((r.w_moments.1 / 0.15625 - 1.0).abs() < 0.05, "{}", r.summary());
    }

    #[test]
    fn csv_shape() {
        let r = run(1.0, 100);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 33 + 33 + 4 * WEIGHT_BINS);
    }

    #[test]
    fn canvas_parsing() {
        assert_eq!(parse_canvas("32x16").unwrap(), Canvas::new(32, 16).unwrap());
        assert!(parse_canvas("0x16").is_err());
        assert!(parse_canvas("32").is_err());
    }
}

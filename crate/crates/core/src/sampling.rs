//! Deterministic random sources.
//!
//! Every draw goes through an [`RngState`], a ChaCha8 generator keyed by a
//! 64-bit seed and selected onto one of 2^64 independent streams. Per-sample
//! work derives child streams with [`RngState::substream`] so that results do
//! not depend on the order in which samples are processed.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream under the same seed, keyed by `key` relative to this
    /// stream. Does not advance `self`.
    pub fn substream(&self, key: u64) -> RngState {
        RngState::new(self.seed, splitmix64(self.stream_id ^ splitmix64(key)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// A standard normal variate.
    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `(0, 1]`.
    fn open_unit(&mut self) -> f64 {
        1.0 - self.inner.random::<f64>()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shape parameter of the symmetric Beta(β, β) law. `β = 0` is the
/// degenerate limit in which all mass sits on {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BetaParam(f64);

impl BetaParam {
    pub const ZERO: BetaParam = BetaParam(0.0);

    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta >= 0.0 {
            Ok(Self(beta))
        } else {
            Err(Error::ParameterDomain(format!(
                "beta must be a finite value >= 0, got {beta}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_degenerate(self) -> bool {
        self.0 == 0.0
    }

    /// Closed-form variance of Beta(β, β), with the β → 0 limit of 1/4.
    pub fn variance(self) -> f64 {
        1.0 / (4.0 * (2.0 * self.0 + 1.0))
    }
}

impl TryFrom<f64> for BetaParam {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        BetaParam::new(value)
    }
}

impl From<BetaParam> for f64 {
    fn from(value: BetaParam) -> f64 {
        value.0
    }
}

impl std::str::FromStr for BetaParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let beta: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::ParameterDomain(format!("beta is not a number: {s:?}")))?;
        BetaParam::new(beta)
    }
}

/// Draws a fraction from Beta(β, β).
///
/// Jöhnk's rejection method is used below β = 1 (where the density is
/// U-shaped) and a ratio of two Marsaglia–Tsang gamma variates otherwise.
/// `β = 0` yields a fair coin over {0.0, 1.0}.
pub fn sample_beta(param: BetaParam, rng: &mut RngState) -> f64 {
    let beta = param.value();
    if param.is_degenerate() {
        return if rng.next_u64() & 1 == 0 { 0.0 } else { 1.0 };
    }
    if beta < 1.0 {
        johnk(beta, rng)
    } else {
        let x = gamma_marsaglia_tsang(beta, rng);
        let y = gamma_marsaglia_tsang(beta, rng);
        x / (x + y)
    }
}

/// Jöhnk's method in log space; for small shapes `U^(1/β)` underflows long
/// before the acceptance test becomes rare.
fn johnk(beta: f64, rng: &mut RngState) -> f64 {
    let inv = 1.0 / beta;
    loop {
        let log_x = rng.open_unit().ln() * inv;
        let log_y = rng.open_unit().ln() * inv;
        let log_max = log_x.max(log_y);
        let log_sum = log_max + ((log_x - log_max).exp() + (log_y - log_max).exp()).ln();
        if log_sum <= 0.0 {
            return (log_x - log_sum).exp().clamp(0.0, 1.0);
        }
    }
}

fn gamma_marsaglia_tsang(shape: f64, rng: &mut RngState) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = rng.standard_normal();
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.open_unit();
        if u < 1.0 - 0.0331 * z.powi(4) || u.ln() < 0.5 * z * z + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Uniform over the closed range `[lo, hi_inclusive]`.
pub fn sample_uniform_int(lo: i64, hi_inclusive: i64, rng: &mut RngState) -> Result<i64> {
    if lo > hi_inclusive {
        return Err(Error::ParameterDomain(format!(
            "empty integer range [{lo}, {hi_inclusive}]"
        )));
    }
    Ok(rng.inner.random_range(lo..=hi_inclusive))
}

/// Unsigned convenience form of [`sample_uniform_int`] over `[0, hi_inclusive]`.
pub fn sample_index(hi_inclusive: usize, rng: &mut RngState) -> usize {
    rng.inner.random_range(0..=hi_inclusive)
}

/// A uniformly random permutation of `0..n` (Fisher–Yates).
pub fn sample_permutation(n: usize, rng: &mut RngState) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::ParameterDomain(
            "permutation length must be at least 1".into(),
        ));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng.inner);
    Ok(perm)
}

//! Area-weighted mixing of embedding vectors.
//!
//! When a patched image is paired with four captions, the positive caption
//! representation is the quadrant-weighted combination of the four caption
//! embeddings.

use serde::{Deserialize, Serialize};

use crate::ricap::QuadrantWeights;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("embedding entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn mix_embeddings(
    vectors: &[EmbeddingVector; 4],
    weights: &QuadrantWeights,
) -> Result<EmbeddingVector> {
    mix_embeddings_with(vectors, weights.values())
}

/// Like [`mix_embeddings`] but with explicit real weights, which must be
/// non-negative and sum to one within `1e-9`.
pub fn mix_embeddings_with(
    vectors: &[EmbeddingVector; 4],
    weights: [f64; 4],
) -> Result<EmbeddingVector> {
    let d = vectors[0].dim();
    if let Some(k) = (1..4).find(|&k| vectors[k].dim() != d) {
        return Err(Error::Input(format!(
            "embedding {k} has dimension {}, expected {d}",
            vectors[k].dim()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
        || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Input(format!(
            "mixing weights must be a convex combination, got {weights:?}"
        )));
    }
    let mixed = (0..d)
        .map(|i| {
            let anchor = vectors[0].0[i];
            let mut acc = anchor;
            for k in 1..4 {
                if weights[k] != 0.0 {
                    acc += weights[k] * (vectors[k].0[i] - anchor);
                }
            }
            acc
        })
        .collect();
    Ok(EmbeddingVector(mixed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn basis(i: usize) -> EmbeddingVector {
        let mut v = vec![0.0; 4];
        v[i] = 1.0;
        ev(&v)
    }

    #[test]
    fn degenerate_weights_select_first() {
        let vs = [ev(&[1.5, -2.0]), ev(&[9.0, 9.0]), ev(&[3.0, 1.0]), ev(&[0.0, 7.0])];
        let w = QuadrantWeights::from_areas([100, 0, 0, 0]).unwrap();
        assert_eq!(mix_embeddings(&vs, &w).unwrap(), vs[0]);
    }

    #[test]
    fn basis_vectors_average() {
        let vs = [basis(0), basis(1), basis(2), basis(3)];
        let w = QuadrantWeights::from_areas([4, 4, 4, 4]).unwrap();
        assert_eq!(mix_embeddings(&vs, &w).unwrap().values(), &[0.25; 4]);
    }

    #[test]
    fn equal_vectors_are_fixed_points() {
        let v = ev(&[0.1, -0.7, 3.3]);
        let w = QuadrantWeights::from_areas([7, 13, 29, 3]).unwrap();
        assert_eq!(mix_embeddings(&[v.clone(), v.clone(), v.clone(), v.clone()], &w).unwrap(), v);
    }

    #[test]
    fn input_errors() {
        let w = QuadrantWeights::from_areas([1, 1, 1, 1]).unwrap();
        assert!(mix_embeddings(&[ev(&[1.0]), ev(&[1.0, 2.0]), ev(&[1.0]), ev(&[1.0])], &w).is_err());
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
        let vs = [basis(0), basis(1), basis(2), basis(3)];
        assert!(mix_embeddings_with(&vs, [0.5, 0.5, 0.5, -0.5]).is_err());
    }

    proptest! {
        #[test]
        fn linear_and_norm_bounded(
            u in prop::collection::vec(-10.0f64..10.0, 24),
            v in prop::collection::vec(-10.0f64..10.0, 24),
            areas in prop::array::uniform4(0u64..50),
            a in -3.0f64..3.0, b in -3.0f64..3.0,
        ) {
            prop_assume!(areas.iter().sum::<u64>() > 0);
            let w = QuadrantWeights::from_areas(areas).unwrap();
            let split = |xs: &[f64]| -> [EmbeddingVector; 4] {
                std::array::from_fn(|k| ev(&xs[k * 6..(k + 1) * 6]))
            };
            let (us, vs) = (split(&u), split(&v));
            let comb: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = mix_embeddings(&split(&comb), &w).unwrap();
            let mu = mix_embeddings(&us, &w).unwrap();
            let mv = mix_embeddings(&vs, &w).unwrap();
            for i in 0..6 {
                let rhs = a * mu.values()[i] + b * mv.values()[i];
                prop_assert!((lhs.values()[i] - rhs).abs() < 1e-9);
            }
            let max_norm = us.iter().map(EmbeddingVector::norm).fold(0.0, f64::max);
            prop_assert!(mu.norm() <= max_norm + 1e-9);
        }
    }
}

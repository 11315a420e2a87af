//! The `mix-embeddings` subcommand.
//!
//! Input JSON holds four `vectors` and either explicit `weights` or a
//! `boundary` (`[w, h]`) plus `canvas` (`[width, height]`), from which the
//! area weights are derived. Output is `{"weights": [...], "mixed": [...]}`.

use std::path::Path;

use ricap_core::embed::{mix_embeddings, mix_embeddings_with, EmbeddingVector};
use ricap_core::ricap::{crop_sizes, mix_weights};
use ricap_core::{BoundaryPosition, Canvas};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
pub struct MixRequest {
    pub vectors: Vec<EmbeddingVector>,
    #[serde(default)]
    pub weights: Option<[f64; 4]>,
    #[serde(default)]
    pub boundary: Option<(usize, usize)>,
    #[serde(default)]
    pub canvas: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixResponse {
    pub weights: [f64; 4],
    pub mixed: EmbeddingVector,
}

pub fn mix_request(req: &MixRequest) -> Result<MixResponse> {
    let vectors: &[EmbeddingVector; 4] = req.vectors.as_slice().try_into().map_err(|_| {
        CliError::Validation(format!("expected exactly 4 vectors, got {}", req.vectors.len()))
    })?;
    match (req.weights, req.boundary, req.canvas) {
        (Some(weights), None, None) => Ok(MixResponse {
            weights,
            mixed: mix_embeddings_with(vectors, weights)?,
        }),
        (None, Some((w, h)), Some((cw, ch))) => {
            let canvas = Canvas::new(cw, ch)?;
            let boundary = BoundaryPosition::new(w, h, canvas)?;
            let weights = mix_weights(crop_sizes(boundary, canvas), canvas);
            Ok(MixResponse {
                weights: weights.values(),
                mixed: mix_embeddings(vectors, &weights)?,
            })
        }
        _ => Err(CliError::Validation(
            "give either \"weights\" or both \"boundary\" and \"canvas\"".into(),
        )),
    }
}

pub fn cmd_mix_embeddings(input: &Path) -> Result<MixResponse> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let req: MixRequest = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: input.to_path_buf(),
        source,
    })?;
    mix_request(&req)
}

//! The `train` subcommand: the linear-softmax toy run, with its per-step
//! trace written as CSV.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use ricap_core::train::{train_toy, Augment, SyntheticConfig, SyntheticQuadrantDataset, TrainConfig, TrainTrace};
use ricap_core::RngState;

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub augment: Augment,
    pub seed: u64,
    pub data: SyntheticConfig,
    pub config: TrainConfig,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub trace: TrainTrace,
    pub final_train_err: f64,
    pub final_test_err: f64,
}

pub fn cmd_train(opts: &TrainOptions) -> Result<TrainReport> {
    let dataset = SyntheticQuadrantDataset::generate(&opts.data, opts.seed)?;
    let mut rng = RngState::new(opts.seed, 0);
    let (model, trace) = train_toy(&dataset, opts.augment, &opts.config, &mut rng)?;
    if let Some(path) = &opts.out {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        trace
            .write_csv(BufWriter::new(file))
            .map_err(|e| CliError::io(path, e))?;
    }
    Ok(TrainReport {
        final_train_err: model.error_rate(&dataset.train),
        final_test_err: model.error_rate(&dataset.test),
        trace,
    })
}

//! Command implementations behind the `ricap` binary.

pub mod augment;
pub mod embed_cmd;
pub mod error;
pub mod io;
pub mod selfcheck;
pub mod stats;
pub mod train_cmd;

pub use error::{CliError, Result};

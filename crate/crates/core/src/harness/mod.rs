//! Coded link simulation, baselines, GMI estimation and result export.

pub mod export;
pub mod gmi;
pub mod link;
pub mod plot;
pub mod uncoded;

pub use export::{export_constellation, parse_constellation_csv, parse_results_csv, results_csv, ResultRow, RunRecord};
pub use gmi::{estimate_gmi, Estimate, GmiEstimate};
pub use link::{run_coded_link, run_coded_link_with, Link, SimConfig, SimResult, System, SystemKind, CODE_RATE};
pub use plot::emit_plot;
pub use uncoded::run_uncoded_baseline;

pub mod rng_streams {
    pub use crate::rng::{derive_seed, rng_stream, Purpose, StreamRng};
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error(transparent)]
    Modem(#[from] crate::modem::Error),
    #[error(transparent)]
    Ldpc(#[from] crate::ldpc5g::Error),
    #[error(transparent)]
    Neural(#[from] crate::neuralmod::Error),
}

impl Error {
    /// True for file-system problems, as opposed to bad inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Neural(crate::neuralmod::Error::Io(_)))
    }
}

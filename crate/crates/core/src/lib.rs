pub mod cca;
pub mod classify;
pub mod coding;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod schedule;
pub mod synth;
pub mod text;

pub use error::{Error, ErrorKind, Result};

//! File formats, the openness-sweep harness and the command line front end
//! for [`srosr_core`].
//!
//! * [`io`]: IDX (optionally gzipped) and CSV datasets, sample lists
//! * [`model_file`]: JSON model envelope with a binary dictionary sidecar
//! * [`harness`]: sweep configuration, randomised trials, reports

#![forbid(unsafe_code)]

mod error;
pub mod harness;
pub mod io;
pub mod model_file;

pub use crate::error::{Error, Result};
pub use srosr_core;

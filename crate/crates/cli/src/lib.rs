//! Command-line front end: CSV ingestion, fit/simulate/km drivers, and
//! structured report output. The statistical work lives in the `expaft`
//! library; this crate only parses, validates, dispatches, and serializes.

pub mod args;
pub mod data;
pub mod error;
pub mod report;
pub mod run;

pub use args::Cli;
pub use data::{read_csv, DatasetSchema, LoadedData};
pub use error::{CliError, Result};
pub use report::{Envelope, FitReport};

//! Experiment harness for `sparsemf`: specs, synthetic and image data, sweep
//! orchestration, and result files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod pgm;
pub mod record;
pub mod seed;

pub use config::{load_spec, parse_spec, ExperimentSpec, Kind, Overrides, SpecFile, SCHEMA_VERSION};
pub use error::{HarnessError, ImageError, Result};
pub use experiment::{run_and_export, run_image, run_single, run_spec, run_sweep, Outcome, RunOptions};
pub use output::{export_results, report, ResultsFile};
pub use pgm::{ingest_image, normalize, read_pgm, synthetic_image, Normalization, Pgm};
pub use record::{aggregate, AggregateRow, Cell, CellMode, ResultRecord, Stat};

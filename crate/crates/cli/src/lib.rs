//! Experiment runner for the radial quantization lab.
//!
//! A config file names a model, a grid, some weights and a list of
//! experiments; [`run_config`] evaluates them into a [`Report`] whose ledger
//! records every invariant checked along the way.

pub mod chain;
pub mod config;
pub mod error;
pub mod expr;
pub mod report;
pub mod runner;

pub use chain::{key_estimate_chain, ChainRecord, Link};
pub use config::{Config, Experiment, Kind};
pub use error::{LabError, LabResult};
pub use expr::{parse_weight, ParseError, WeightExpr};
pub use report::{LedgerEntry, Report, Table};
pub use runner::run_config;

//! Non-parametric Gaussian copula synthesis for mixed-type tables.
//!
//! The pipeline has two halves. Fitting maps every column through a
//! privatized empirical CDF into a latent standard-normal space, estimates
//! the latent correlation matrix, perturbs it with Laplace noise and repairs
//! it back into a valid correlation matrix. Sampling draws correlated
//! normals and pushes them back through the stored marginal anchors.
//!
//! ```no_run
//! use npgc::{fit, read_csv, CsvOptions, PrivacyConfig};
//!
//! let table = read_csv("adult.csv", None, &CsvOptions::default())?;
//! let model = fit(&table, &PrivacyConfig::default(), 7)?;
//! let synthetic = model.sample(1000, 11)?;
//! model.save("model.json")?;
//! # Ok::<(), npgc::Error>(())
//! ```
//!
//! The [`metrics`] module scores synthetic tables against real ones and
//! [`regen`] runs the iterated refit-on-own-output experiment.

pub mod copula;
mod error;
pub mod marginals;
pub mod metrics;
pub mod numkernels;
pub mod regen;
pub mod synthesizer;
pub mod table;

pub use error::{Error, Result};

pub use table::{
    infer_schema, read_csv, split, write_csv, Cell, Column, ColumnKind, ColumnSchema, CsvOptions, SchemaOverride,
    SplitSpec, Table,
};

pub use numkernels::Epsilon;
pub use synthesizer::{fit, PrivacyConfig, SynthesizerModel};

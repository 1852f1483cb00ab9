//! Fit / sample orchestration and the portable model file.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{
    estimate_correlation, privatize_correlation, repair_psd, sample_latent, CopulaModel, DEFAULT_DELTA,
};
use crate::marginals::{fit_transform, MarginalModel};
use crate::numkernels::{Epsilon, Rng, SymmetricMatrix};
use crate::table::{ColumnSchema, Table};
use crate::{Error, Result};

/// Model file layout version written by [`SynthesizerModel::save`].
pub const FORMAT_VERSION: u64 = 1;

const CORRELATION_STREAM: u64 = u64::MAX;
const SAMPLE_STREAM: u64 = 0x5a4d_504c;

/// Total privacy budget and how it is accounted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub epsilon: Epsilon,
    /// Divide the marginal budget across columns and the correlation budget
    /// across the `p(p−1)/2` off-diagonal entries.
    #[serde(default)]
    pub strict_composition: bool,
}

impl PrivacyConfig {
    pub fn new(epsilon: Epsilon) -> Self {
        Self { epsilon, strict_composition: false }
    }

    pub fn strict(mut self, on: bool) -> Self {
        self.strict_composition = on;
        self
    }

    /// Budget for the marginal release.
    pub fn epsilon_m(&self) -> Epsilon {
        self.epsilon.divide(2.0)
    }

    /// Budget for the correlation release.
    pub fn epsilon_c(&self) -> Epsilon {
        self.epsilon.divide(2.0)
    }

    /// Budget each column's count vector is perturbed with.
    pub fn per_column_epsilon(&self, p: usize) -> Epsilon {
        if self.strict_composition {
            self.epsilon_m().divide(p as f64)
        } else {
            self.epsilon_m()
        }
    }

    /// Budget each off-diagonal correlation entry is perturbed with.
    pub fn per_entry_epsilon(&self, p: usize) -> Epsilon {
        let pairs = (p * p.saturating_sub(1) / 2).max(1);
        if self.strict_composition {
            self.epsilon_c().divide(pairs as f64)
        } else {
            self.epsilon_c()
        }
    }
}

/// A fitted synthesizer. Self-contained: sampling never touches the
/// training data.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizerModel {
    schema: Vec<ColumnSchema>,
    marginals: Vec<MarginalModel>,
    copula: CopulaModel,
    privacy: PrivacyConfig,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u64,
    epsilon: Epsilon,
    #[serde(default)]
    strict_composition: bool,
    seed: u64,
    schema: Vec<ColumnSchema>,
    marginals: Vec<MarginalModel>,
    correlation: Vec<f64>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

/// Fits the marginals, the latent correlation and its privatized repair.
pub fn fit(table: &Table, privacy: &PrivacyConfig, seed: u64) -> Result<SynthesizerModel> {
    let n = table.n_rows();
    let p = table.n_cols();
    if n < 2 {
        return Err(Error::Argument(format!("fit needs at least 2 rows, got {n}")));
    }
    if p == 0 {
        return Err(Error::Argument("fit needs at least one column".into()));
    }
    let root = Rng::new(seed);
    let eps_col = privacy.per_column_epsilon(p);
    let fitted: Vec<(MarginalModel, Vec<f64>)> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut fit_rng = root.child(2 * j as u64);
            let mut score_rng = root.child(2 * j as u64 + 1);
            fit_transform(&table.schema()[j], table.column(j), eps_col, &mut fit_rng, &mut score_rng)
        })
        .collect::<Result<_>>()?;
    let (marginals, latents): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();

    let r_hat = estimate_correlation(&latents)?;
    drop(latents);
    let mut noise_rng = root.child(CORRELATION_STREAM);
    let r_noisy = privatize_correlation(&r_hat, n, privacy.per_entry_epsilon(p), &mut noise_rng)?;
    let r_repaired = repair_psd(&r_noisy, DEFAULT_DELTA)?;
    let copula = CopulaModel::from_correlation(r_repaired)?;
    log::debug!("fitted {p} columns on {n} rows (epsilon {})", privacy.epsilon);
    Ok(SynthesizerModel { schema: table.schema().to_vec(), marginals, copula, privacy: *privacy, seed })
}

impl SynthesizerModel {
    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn marginals(&self) -> &[MarginalModel] {
        &self.marginals
    }

    pub fn copula(&self) -> &CopulaModel {
        &self.copula
    }

    pub fn privacy(&self) -> &PrivacyConfig {
        &self.privacy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Draws `m` rows. Deterministic for a fixed model, `m` and `seed`.
    pub fn sample(&self, m: usize, seed: u64) -> Result<Table> {
        if m == 0 {
            return Err(Error::Argument("number of rows to sample must be at least 1".into()));
        }
        let mut rng = Rng::new(seed).child(SAMPLE_STREAM);
        let latent = sample_latent(&self.copula, m, &mut rng)?;
        let columns = self.marginals.iter().zip(&latent).map(|(marginal, z)| marginal.inverse_column(z)).collect();
        Table::new(self.schema.clone(), columns)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            epsilon: self.privacy.epsilon,
            strict_composition: self.privacy.strict_composition,
            seed: self.seed,
            schema: self.schema.clone(),
            marginals: self.marginals.clone(),
            correlation: self.copula.correlation().packed_lower(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Numeric(format!("model serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: probe.format_version, supported: FORMAT_VERSION });
        }
        let file: ModelFile = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        let p = file.schema.len();
        if p == 0 || file.marginals.len() != p {
            return Err(Error::Schema(format!(
                "model has {} schema columns but {} marginals",
                p,
                file.marginals.len()
            )));
        }
        for (schema, marginal) in file.schema.iter().zip(&file.marginals) {
            schema.validate()?;
            if schema.kind != marginal.kind() {
                return Err(Error::Schema(format!("column `{}`: marginal kind does not match schema", schema.name)));
            }
            if let MarginalModel::Categorical(m) = marginal {
                if m.categories != schema.categories {
                    return Err(Error::Schema(format!(
                        "column `{}`: marginal categories differ from schema",
                        schema.name
                    )));
                }
            }
            marginal.validate(&schema.name)?;
        }
        let correlation = SymmetricMatrix::from_packed_lower(p, &file.correlation)?;
        let copula = CopulaModel::from_correlation(correlation)?;
        Ok(Self {
            schema: file.schema,
            marginals: file.marginals,
            copula,
            privacy: PrivacyConfig { epsilon: file.epsilon, strict_composition: file.strict_composition },
            seed: file.seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn parse_error(text: &str, err: &serde_json::Error) -> Error {
    Error::ModelParse { offset: byte_offset(text, err.line(), err.column()), message: err.to_string() }
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

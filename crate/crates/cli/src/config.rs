use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use npgc::Epsilon;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn parse_epsilon(s: &str) -> Result<Epsilon, String> {
    s.parse::<Epsilon>().map_err(|e| e.to_string())
}

/// Reads a JSON config file whose keys mirror the command's flag names.
pub fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn write_resolved<T: Serialize>(config: &T, path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(config)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// `<dir>/<stem>.config.json` next to an output file.
pub fn sidecar(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    output.with_file_name(format!("{stem}.config.json"))
}

fn required<T>(value: Option<T>, flag: &str) -> anyhow::Result<T> {
    match value {
        Some(v) => Ok(v),
        None => bail!("missing required option --{flag} (flag or config file)"),
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitArgs {
    /// Training data CSV
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Where to write the model JSON
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Total privacy budget: a positive number or "inf" to disable noise
    #[arg(long, value_parser = parse_epsilon)]
    pub epsilon: Option<Epsilon>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON schema override (column name to kind, optional categories)
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Split the budget across columns and correlation entries
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict_composition: Option<bool>,
    /// JSON file with default values for the flags above
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct FitConfig {
    pub command: &'static str,
    pub input: PathBuf,
    pub model: PathBuf,
    pub epsilon: Epsilon,
    pub seed: u64,
    pub schema: Option<PathBuf>,
    pub strict_composition: bool,
}

impl FitArgs {
    pub fn resolve(self) -> anyhow::Result<FitConfig> {
        let file: FitArgs = read_config(self.config.as_deref())?;
        Ok(FitConfig {
            command: "fit",
            input: required(self.input.or(file.input), "input")?,
            model: required(self.model.or(file.model), "model")?,
            epsilon: self.epsilon.or(file.epsilon).unwrap_or_default(),
            seed: self.seed.or(file.seed).unwrap_or(0),
            schema: self.schema.or(file.schema),
            strict_composition: self.strict_composition.or(file.strict_composition).unwrap_or(false),
        })
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SampleArgs {
    /// Model JSON written by `fit`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Number of rows to generate (at least 1)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rows: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the synthetic CSV
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct SampleConfig {
    pub command: &'static str,
    pub model: PathBuf,
    pub rows: usize,
    pub seed: u64,
    pub output: PathBuf,
}

impl SampleArgs {
    pub fn resolve(self) -> anyhow::Result<SampleConfig> {
        let file: SampleArgs = read_config(self.config.as_deref())?;
        let rows = required(self.rows.or(file.rows), "rows")?;
        if rows == 0 {
            bail!("--rows must be at least 1");
        }
        Ok(SampleConfig {
            command: "sample",
            model: required(self.model.or(file.model), "model")?,
            rows: usize::try_from(rows)?,
            seed: self.seed.or(file.seed).unwrap_or(0),
            output: required(self.output.or(file.output), "output")?,
        })
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateArgs {
    /// Real data CSV (the training data when --holdout is given)
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Synthetic data CSV
    #[arg(long)]
    pub synth: Option<PathBuf>,
    /// Real rows never used for fitting; enables the DCR share and becomes
    /// the reference for fidelity and the discriminator
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    /// Categorical column for train-on-synthetic, test-on-real
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for report.json, report.txt and config.json
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON schema override applied to the real data
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct EvaluateConfig {
    pub command: &'static str,
    pub real: PathBuf,
    pub synth: PathBuf,
    pub holdout: Option<PathBuf>,
    pub target: Option<String>,
    pub seed: u64,
    pub out: PathBuf,
    pub schema: Option<PathBuf>,
    pub reference: &'static str,
    pub tstr_split: Option<f64>,
    pub dcr_synth_rows: Option<usize>,
}

impl EvaluateArgs {
    pub fn resolve(self) -> anyhow::Result<EvaluateConfig> {
        let file: EvaluateArgs = read_config(self.config.as_deref())?;
        let holdout = self.holdout.or(file.holdout);
        let target = self.target.or(file.target);
        Ok(EvaluateConfig {
            command: "evaluate",
            real: required(self.real.or(file.real), "real")?,
            synth: required(self.synth.or(file.synth), "synth")?,
            reference: if holdout.is_some() { "holdout" } else { "real" },
            dcr_synth_rows: holdout.is_some().then_some(npgc::metrics::DCR_SYNTH_ROWS),
            tstr_split: target.is_some().then_some(0.7),
            holdout,
            target,
            seed: self.seed.or(file.seed).unwrap_or(0),
            out: required(self.out.or(file.out), "out")?,
            schema: self.schema.or(file.schema),
        })
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RegenArgs {
    /// Real data CSV; split 80/20 into train and holdout
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of regeneration iterations
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Option<u64>,
    #[arg(long, value_parser = parse_epsilon)]
    pub epsilon: Option<Epsilon>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for trace.csv, trace.svg and config.json
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict_composition: Option<bool>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct RegenConfig {
    pub command: &'static str,
    pub input: PathBuf,
    pub steps: usize,
    pub epsilon: Epsilon,
    pub seed: u64,
    pub out: PathBuf,
    pub schema: Option<PathBuf>,
    pub strict_composition: bool,
    pub train_fraction: f64,
    pub reference: &'static str,
    /// Budget spent over all iterations if each refit counts separately.
    pub cumulative_epsilon: Epsilon,
}

impl RegenArgs {
    pub fn resolve(self) -> anyhow::Result<RegenConfig> {
        let file: RegenArgs = read_config(self.config.as_deref())?;
        let steps = usize::try_from(self.steps.or(file.steps).unwrap_or(10))?;
        if steps == 0 {
            bail!("--steps must be at least 1");
        }
        let epsilon = self.epsilon.or(file.epsilon).unwrap_or_default();
        let cumulative_epsilon = match epsilon {
            Epsilon::Finite(e) => Epsilon::Finite(e * steps as f64),
            Epsilon::Infinite => Epsilon::Infinite,
        };
        Ok(RegenConfig {
            command: "regen",
            input: required(self.input.or(file.input), "input")?,
            steps,
            epsilon,
            seed: self.seed.or(file.seed).unwrap_or(0),
            out: required(self.out.or(file.out), "out")?,
            schema: self.schema.or(file.schema),
            strict_composition: self.strict_composition.or(file.strict_composition).unwrap_or(false),
            train_fraction: 0.8,
            reference: "holdout",
            cumulative_epsilon,
        })
    }
}

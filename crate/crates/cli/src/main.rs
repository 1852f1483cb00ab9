use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use npgc::metrics::{Evaluation, UtilitySplit};
use npgc::regen::{emit_trace, run_sfl_with, CopulaGenerator};
use npgc::{
    fit, read_csv, split, write_csv, CsvOptions, Epsilon, PrivacyConfig, SchemaOverride, SplitSpec, SynthesizerModel,
    Table,
};

mod config;

use config::{sidecar, write_resolved, EvaluateArgs, FitArgs, RegenArgs, SampleArgs};

/// Differentially private Gaussian copula synthesizer for mixed-type tables.
#[derive(Parser)]
#[command(name = "npgc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a CSV and write it as JSON
    Fit(FitArgs),
    /// Draw synthetic rows from a fitted model
    Sample(SampleArgs),
    /// Score a synthetic CSV against real data
    Evaluate(EvaluateArgs),
    /// Run the synthetic feedback loop and write its trace
    Regen(RegenArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let resolved = match cli.command {
        Command::Fit(a) => a.resolve().map(Resolved::Fit),
        Command::Sample(a) => a.resolve().map(Resolved::Sample),
        Command::Evaluate(a) => a.resolve().map(Resolved::Evaluate),
        Command::Regen(a) => a.resolve().map(Resolved::Regen),
    };
    let resolved = match resolved {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let outcome = match resolved {
        Resolved::Fit(c) => run_fit(&c),
        Resolved::Sample(c) => run_sample(&c),
        Resolved::Evaluate(c) => run_evaluate(&c),
        Resolved::Regen(c) => run_regen(&c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

enum Resolved {
    Fit(config::FitConfig),
    Sample(config::SampleConfig),
    Evaluate(config::EvaluateConfig),
    Regen(config::RegenConfig),
}

fn read_input(path: &Path, schema: Option<&Path>) -> anyhow::Result<Table> {
    let schema = schema.map(SchemaOverride::from_json_file).transpose()?;
    Ok(read_csv(path, schema.as_ref(), &CsvOptions::default())?)
}

// Same column kinds as `like`; categories are read from the file itself.
fn read_like(path: &Path, like: &Table) -> anyhow::Result<Table> {
    let schema = SchemaOverride::kinds_only(like.schema());
    Ok(read_csv(path, Some(&schema), &CsvOptions::default())?)
}

fn describe_budget(privacy: &PrivacyConfig, p: usize) -> String {
    match privacy.epsilon {
        Epsilon::Infinite => "inf (differential privacy disabled)".into(),
        e if privacy.strict_composition => format!(
            "{e} (marginals {} per column, correlation {} per entry)",
            privacy.per_column_epsilon(p),
            privacy.per_entry_epsilon(p)
        ),
        e => format!("{e} (marginals {}, correlation {})", privacy.epsilon_m(), privacy.epsilon_c()),
    }
}

fn run_fit(c: &config::FitConfig) -> anyhow::Result<()> {
    let table = read_input(&c.input, c.schema.as_deref())?;
    let privacy = PrivacyConfig::new(c.epsilon).strict(c.strict_composition);
    let started = Instant::now();
    let model = fit(&table, &privacy, c.seed)?;
    let seconds = started.elapsed().as_secs_f64();
    model.save(&c.model)?;
    write_resolved(c, &sidecar(&c.model))?;

    println!("rows      {}", table.n_rows());
    println!("columns   {}", table.n_cols());
    println!("epsilon   {}", describe_budget(&privacy, table.n_cols()));
    println!("fit time  {seconds:.4} s");
    println!("model     {}", c.model.display());
    let width = table.schema().iter().map(|s| s.name.len()).max().unwrap_or(0);
    for s in table.schema() {
        match s.kind {
            npgc::ColumnKind::Categorical => {
                println!("  {:<width$}  {} ({} categories)", s.name, s.kind, s.categories.len())
            }
            k => println!("  {:<width$}  {k}", s.name),
        }
    }
    Ok(())
}

fn run_sample(c: &config::SampleConfig) -> anyhow::Result<()> {
    let model = SynthesizerModel::load(&c.model)?;
    let synth = model.sample(c.rows, c.seed)?;
    write_csv(&synth, &c.output)?;
    write_resolved(c, &sidecar(&c.output))?;
    println!("wrote {} rows to {}", synth.n_rows(), c.output.display());
    Ok(())
}

fn run_evaluate(c: &config::EvaluateConfig) -> anyhow::Result<()> {
    let real = read_input(&c.real, c.schema.as_deref())?;
    let synth = read_like(&c.synth, &real).context("reading synthetic data")?;
    let holdout = c.holdout.as_deref().map(|p| read_like(p, &real).context("reading holdout")).transpose()?;

    let reference = holdout.as_ref().unwrap_or(&real);
    let mut eval = Evaluation::new(reference, &synth, c.seed);
    if holdout.is_some() {
        eval.train = Some(&real);
    }
    let parts = match (&c.target, c.tstr_split) {
        (Some(_), Some(f)) => Some(split(&real, &SplitSpec::new(f, c.seed))?),
        _ => None,
    };
    if let (Some(target), Some((train, test))) = (&c.target, &parts) {
        eval.utility = Some(UtilitySplit { train, test, target });
    }
    let report = eval.run()?;

    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let text = report.render();
    fs::write(c.out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(c.out.join("report.txt"), &text)?;
    write_resolved(c, &c.out.join("config.json"))?;
    print!("{text}");
    Ok(())
}

fn run_regen(c: &config::RegenConfig) -> anyhow::Result<()> {
    let table = read_input(&c.input, c.schema.as_deref())?;
    let (train, holdout) = split(&table, &SplitSpec::new(c.train_fraction, c.seed))?;
    let privacy = PrivacyConfig::new(c.epsilon).strict(c.strict_composition);
    write_resolved(c, &c.out.join("config.json"))?;
    let generator = CopulaGenerator { privacy };
    let trace = match run_sfl_with(&generator, &train, &holdout, c.reference, c.steps, c.seed) {
        Ok(t) => t,
        Err(failure) => {
            if !failure.partial.iterations.is_empty() {
                emit_trace(&failure.partial, &c.out)?;
            }
            return Err(anyhow::Error::new(*failure));
        }
    };
    emit_trace(&trace, &c.out)?;
    println!("iteration  overall  shapes   trends   seconds");
    for it in &trace.iterations {
        println!(
            "{:>9}  {:.4}   {:.4}   {:.4}   {:.3}",
            it.iteration, it.overall_score, it.shapes_mean, it.trends_mean, it.seconds
        );
    }
    println!("trace written to {}", c.out.display());
    Ok(())
}

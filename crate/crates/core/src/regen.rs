//! Synthetic feedback loop: refit a fresh generator on its own previous
//! output for several generations and score every generation against a
//! fixed real reference table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::metrics::{fidelity, ColumnScore};
use crate::numkernels::Rng;
use crate::synthesizer::{fit, PrivacyConfig};
use crate::table::{Cell, Column, Table};
use crate::{Error, Result};

/// Something that learns from a table and emits a synthetic one.
pub trait Generator {
    fn generate(&self, train: &Table, rows: usize, seed: u64) -> Result<Table>;
}

/// The copula synthesizer, refit from scratch on every call.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopulaGenerator {
    pub privacy: PrivacyConfig,
}

impl Generator for CopulaGenerator {
    fn generate(&self, train: &Table, rows: usize, seed: u64) -> Result<Table> {
        let model = fit(train, &self.privacy, seed)?;
        model.sample(rows, Rng::new(seed).child(1).seed())
    }
}

/// Emits the per-column most frequent value (missing included) on every
/// row. A fixed point of the loop after one generation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModeGenerator;

impl Generator for ModeGenerator {
    fn generate(&self, train: &Table, rows: usize, _seed: u64) -> Result<Table> {
        if rows == 0 {
            return Err(Error::Argument("number of rows to generate must be at least 1".into()));
        }
        let mode = |col: &Column| -> usize {
            let mut cells: Vec<(u8, u64)> = (0..col.len())
                .map(|i| match col {
                    Column::Categorical(v) => v[i].map_or((0, 0), |c| (1, c as u64)),
                    _ => col.numeric(i).map_or((0, 0), |x| (1, x.to_bits())),
                })
                .collect();
            let first: Vec<(u8, u64)> = cells.clone();
            cells.sort_unstable();
            let (mut best, mut best_n, mut i) = ((0, 0), 0, 0);
            while i < cells.len() {
                let j = i + cells[i..].iter().take_while(|c| **c == cells[i]).count();
                if j - i > best_n {
                    best = cells[i];
                    best_n = j - i;
                }
                i = j;
            }
            first.iter().position(|c| *c == best).unwrap_or(0)
        };
        let row: Vec<Cell> = (0..train.n_cols()).map(|j| train.cell(mode(train.column(j)), j)).collect();
        Table::from_rows(train.schema().to_vec(), &vec![row; rows])
    }
}

/// Scores of one generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegenIteration {
    pub iteration: usize,
    pub overall_score: f64,
    pub shapes_mean: f64,
    pub trends_mean: f64,
    pub column_shapes: Vec<ColumnScore>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegenTrace {
    /// What the scores were computed against.
    pub reference: String,
    pub iterations: Vec<RegenIteration>,
}

/// A loop that stopped early, with the generations completed before it.
#[derive(Debug, thiserror::Error)]
#[error("regeneration failed at iteration {iteration}: {source}")]
pub struct RegenFailure {
    pub iteration: usize,
    pub partial: RegenTrace,
    #[source]
    pub source: Error,
}

/// Seed used by generation `k` (1-based) under `master`.
pub fn iteration_seed(master: u64, k: usize) -> u64 {
    Rng::new(master).child(k as u64).seed()
}

/// Runs `steps` generations of the copula synthesizer. `S⁰ = train`; each
/// generation fits a fresh model on the previous output only, samples
/// `|train|` rows and is scored against `reference`.
pub fn run_sfl(
    train: &Table,
    reference: &Table,
    steps: usize,
    privacy: &PrivacyConfig,
    seed: u64,
) -> std::result::Result<RegenTrace, Box<RegenFailure>> {
    run_sfl_with(&CopulaGenerator { privacy: *privacy }, train, reference, "reference", steps, seed)
}

/// [`run_sfl`] with any generator. `reference_name` is recorded in the
/// trace.
pub fn run_sfl_with(
    generator: &dyn Generator,
    train: &Table,
    reference: &Table,
    reference_name: &str,
    steps: usize,
    seed: u64,
) -> std::result::Result<RegenTrace, Box<RegenFailure>> {
    let mut trace = RegenTrace { reference: reference_name.to_string(), iterations: Vec::with_capacity(steps) };
    if steps == 0 {
        return Err(Box::new(RegenFailure {
            iteration: 0,
            partial: trace,
            source: Error::Argument("regeneration needs at least one step".into()),
        }));
    }
    let rows = train.n_rows();
    let mut previous: Option<Table> = None;
    for k in 1..=steps {
        let started = Instant::now();
        let source = previous.as_ref().unwrap_or(train);
        let step = generator
            .generate(source, rows, iteration_seed(seed, k))
            .and_then(|synth| fidelity(reference, &synth).map(|f| (synth, f)));
        let (synth, f) = match step {
            Ok(v) => v,
            Err(source) => return Err(Box::new(RegenFailure { iteration: k, partial: trace, source })),
        };
        let seconds = started.elapsed().as_secs_f64();
        log::info!("iteration {k}: overall {:.4} ({seconds:.3} s)", f.overall);
        trace.iterations.push(RegenIteration {
            iteration: k,
            overall_score: f.overall,
            shapes_mean: f.shapes_mean,
            trends_mean: f.trends_mean,
            column_shapes: f.column_shapes,
            seconds,
        });
        previous = Some(synth);
    }
    Ok(trace)
}

/// Writes `trace.csv` and `trace.svg` into `out_dir`.
pub fn emit_trace(trace: &RegenTrace, out_dir: impl AsRef<Path>) -> Result<()> {
    if trace.iterations.is_empty() {
        return Err(Error::Argument("cannot emit an empty trace".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join("trace.csv");
    fs::write(&csv_path, trace_csv(trace)).map_err(|e| Error::io(&csv_path, e))?;
    let svg_path = out_dir.join("trace.svg");
    fs::write(&svg_path, trace_svg(trace)).map_err(|e| Error::io(&svg_path, e))
}

pub fn trace_csv(trace: &RegenTrace) -> String {
    let mut out = String::from("iteration,overall_score,shapes_mean,trends_mean,seconds\n");
    for it in &trace.iterations {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6}",
            it.iteration, it.overall_score, it.shapes_mean, it.trends_mean, it.seconds
        );
    }
    out
}

pub fn trace_svg(trace: &RegenTrace) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 64.0;
    const RIGHT: f64 = 150.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 48.0;
    let series: [(&str, &str, fn(&RegenIteration) -> f64); 3] = [
        ("overall_score", "#1f77b4", |i| i.overall_score),
        ("shapes_mean", "#2ca02c", |i| i.shapes_mean),
        ("trends_mean", "#d62728", |i| i.trends_mean),
    ];
    let its = &trace.iterations;
    let k_max = its.last().map_or(1, |i| i.iteration).max(2) as f64;
    let values = its.iter().flat_map(|i| series.iter().map(move |s| (s.2)(i)));
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((hi - lo) * 0.1).max(0.005);
    let (y0, y1) = ((lo - pad).max(0.0), (hi + pad).min(1.0));
    let x_at = |k: f64| LEFT + (k - 1.0) / (k_max - 1.0) * (W - LEFT - RIGHT);
    let y_at = |v: f64| TOP + (y1 - v) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">Score vs regeneration iteration (against {})</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(&trace.reference)
    );
    let (bx, by) = (LEFT, H - BOTTOM);
    let _ = writeln!(svg, r#"<line x1="{bx}" y1="{TOP}" x2="{bx}" y2="{by}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{bx}" y1="{by}" x2="{}" y2="{by}" stroke="black"/>"#, W - RIGHT);
    for t in 0..=4 {
        let v = y0 + (y1 - y0) * t as f64 / 4.0;
        let y = y_at(v);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.4}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
        let _ = writeln!(svg, r##"<line x1="{bx}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#dddddd"/>"##, W - RIGHT);
    }
    for it in its {
        let x = x_at(it.iteration as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            by + 16.0,
            it.iteration
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">iteration</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0
    );
    for (n, (name, colour, get)) in series.iter().enumerate() {
        let points: Vec<String> =
            its.iter().map(|i| format!("{:.2},{:.2}", x_at(i.iteration as f64), y_at(get(i)))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"><title>{name}</title></polyline>"#,
            points.join(" ")
        );
        let ly = TOP + 16.0 * n as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{name}</text>"#,
            lx + 24.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

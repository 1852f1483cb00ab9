//! Acceptance run on the Adult census data. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

mod common;

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use npgc::copula::{privatize_correlation, repair_psd, DEFAULT_DELTA};
use npgc::marginals::perturb_counts;
use npgc::metrics::{balanced_dcr_share, dcr_share, discriminator_auc, fidelity, tstr};
use npgc::numkernels::{Rng, SymmetricMatrix};
use npgc::regen::run_sfl;
use npgc::table::write_csv_to;
use npgc::{
    fit, split, Column, ColumnSchema, Epsilon, PrivacyConfig, Result, SchemaOverride, SplitSpec, SynthesizerModel,
    Table,
};

const SPLIT_SEED: u64 = 42;
const FIT_SEED: u64 = 7;
const SAMPLE_SEED: u64 = 11;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() <= limit_s
}

/// Two-sample KS by brute force over the pooled support.
fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    pooled
        .iter()
        .map(|&x| {
            let fa = a.partition_point(|&v| v <= x) as f64 / a.len() as f64;
            let fb = b.partition_point(|&v| v <= x) as f64 / b.len() as f64;
            (fa - fb).abs()
        })
        .fold(0.0, f64::max)
}

fn numeric_values(t: &Table, j: usize) -> Vec<f64> {
    let c = t.column(j);
    (0..c.len()).filter_map(|i| c.numeric(i)).collect()
}

/// Relative frequency of each label (and of missing) in a categorical column.
fn label_frequencies(t: &Table, j: usize) -> Vec<(String, f64)> {
    let Column::Categorical(codes) = t.column(j) else { unreachable!() };
    let n = codes.len() as f64;
    let missing = t.schema()[j].categories.len();
    let mut counts = vec![0usize; missing + 1];
    for c in codes {
        counts[c.map_or(missing, |c| c as usize)] += 1;
    }
    t.schema()[j]
        .categories
        .iter()
        .cloned()
        .chain(std::iter::once("<missing>".to_string()))
        .zip(counts)
        .map(|(l, c)| (l, c as f64 / n))
        .collect()
}

struct Adult {
    full: Table,
    train: Table,
    holdout: Table,
}

fn criterion_1(adult: &Adult) -> Result<Outcome> {
    let started = Instant::now();
    let model = fit(&adult.train, &PrivacyConfig::new(Epsilon::Infinite), FIT_SEED)?;
    let synth = model.sample(adult.train.n_rows(), SAMPLE_SEED)?;
    let elapsed = started.elapsed();
    let (mut worst_ks, mut worst_freq) = (0.0f64, 0.0f64);
    for j in 0..adult.train.n_cols() {
        if adult.train.schema()[j].kind.is_numeric() {
            worst_ks = worst_ks.max(ks(&numeric_values(&adult.train, j), &numeric_values(&synth, j)));
        } else {
            for ((_, a), (_, b)) in label_frequencies(&adult.train, j).into_iter().zip(label_frequencies(&synth, j)) {
                worst_freq = worst_freq.max((a - b).abs());
            }
        }
    }
    outcome(
        worst_ks <= 0.02 && worst_freq <= 0.01 && within(elapsed, 30.0),
        format!(
            "max KS {worst_ks:.4} (<= 0.02), max category deviation {worst_freq:.4} (<= 0.01), {:.2} s (<= 30)",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(adult: &Adult) -> Result<Outcome> {
    let started = Instant::now();
    let model = fit(&adult.train, &PrivacyConfig::new(Epsilon::Finite(1.0)), FIT_SEED)?;
    let synth = model.sample(adult.train.n_rows(), SAMPLE_SEED)?;
    let report = fidelity(&adult.holdout, &synth)?;
    let elapsed = started.elapsed();
    outcome(
        report.overall >= 0.94 && within(elapsed, 60.0),
        format!(
            "overall {:.4} (>= 0.94; shapes {:.4}, pair trends {:.4}), {:.2} s (<= 60)",
            report.overall,
            report.shapes_mean,
            report.trends_mean,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3(adult: &Adult) -> Result<Outcome> {
    let started = Instant::now();
    let trace = run_sfl(&adult.train, &adult.holdout, 10, &PrivacyConfig::new(Epsilon::Finite(1.0)), FIT_SEED)
        .map_err(|f| f.source)?;
    let elapsed = started.elapsed();
    let first = trace.iterations[0].overall_score;
    let last = trace.iterations[9].overall_score;
    let drop_pp = (first - last) * 100.0;
    outcome(
        drop_pp <= 3.0 && within(elapsed, 600.0),
        format!(
            "overall {first:.4} -> {last:.4}, drop {drop_pp:.2} pp (<= 3), {:.2} s (<= 600)",
            elapsed.as_secs_f64()
        ),
    )
}

fn eigenvalues(m: &SymmetricMatrix) -> Vec<f64> {
    let p = m.order();
    let dm = DMatrix::from_fn(p, p, |i, j| m.get(i, j));
    dm.symmetric_eigenvalues().iter().copied().collect()
}

fn criterion_4() -> Result<Outcome> {
    let started = Instant::now();
    let mut rng = Rng::new(2024);
    let (mut min_eig, mut max_diag, mut max_idem) = (f64::INFINITY, 0.0f64, 0.0f64);
    let mut generated = 0;
    while generated < 1000 {
        let p = 2 + rng.below(39);
        let m = SymmetricMatrix::from_fn(p, |i, j| if i == j { 1.0 } else { 2.0 * rng.uniform() - 1.0 });
        if eigenvalues(&m).iter().all(|&v| v >= 0.0) {
            continue;
        }
        generated += 1;
        let r = repair_psd(&m, DEFAULT_DELTA)?;
        min_eig = min_eig.min(eigenvalues(&r).into_iter().fold(f64::INFINITY, f64::min));
        for i in 0..p {
            max_diag = max_diag.max((r.get(i, i) - 1.0).abs());
        }
        let again = repair_psd(&r, DEFAULT_DELTA)?;
        max_idem = max_idem.max(again.frobenius_distance(&r));
    }
    let elapsed = started.elapsed();
    outcome(
        min_eig >= -1e-8 && max_diag <= 1e-10 && max_idem <= 1e-9 && within(elapsed, 30.0),
        format!(
            "min eigenvalue {min_eig:.3e} (>= -1e-8), diagonal error {max_diag:.1e} (<= 1e-10), idempotence {max_idem:.1e} (<= 1e-9), {:.2} s (<= 30)",
            elapsed.as_secs_f64()
        ),
    )
}

fn mean_abs_deviation(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).abs()).sum::<f64>() / v.len() as f64
}

fn criterion_5(adult: &Adult) -> Result<Outcome> {
    let started = Instant::now();
    let privacy = PrivacyConfig::new(Epsilon::Finite(1.0));
    let draws = 1_000_000;

    let eps_m = privacy.epsilon_m();
    let noisy = perturb_counts(&vec![0.0; draws], eps_m, &mut Rng::new(5))?;
    let mad_m = mean_abs_deviation(&noisy);
    let target_m = 1.0 / eps_m.value();

    // An identity input isolates the noise; order 1415 gives >= 1e6 entries.
    let p = 1415;
    let n = adult.train.n_rows();
    let eps_c = privacy.epsilon_c();
    let noisy_r = privatize_correlation(&SymmetricMatrix::identity(p), n, eps_c, &mut Rng::new(6))?;
    let mut offdiag = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in 0..i {
            offdiag.push(noisy_r.get(i, j));
        }
    }
    let mad_c = mean_abs_deviation(&offdiag);
    let target_c = 2.0 / (n as f64 * eps_c.value());
    let elapsed = started.elapsed();
    let rel_m = (mad_m / target_m - 1.0).abs();
    let rel_c = (mad_c / target_c - 1.0).abs();
    outcome(
        rel_m <= 0.05 && rel_c <= 0.05 && within(elapsed, 10.0),
        format!(
            "marginal MAD {mad_m:.4} vs {target_m:.4} ({:.2}%), correlation MAD {mad_c:.3e} vs {target_c:.3e} ({:.2}%) over {} draws, {:.2} s (<= 10)",
            rel_m * 100.0,
            rel_c * 100.0,
            offdiag.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn row_keys(t: &Table) -> Vec<String> {
    (0..t.n_rows()).map(|i| format!("{:?}", t.row(i))).collect()
}

fn criterion_6(adult: &Adult) -> Result<Outcome> {
    let model = fit(&adult.train, &PrivacyConfig::new(Epsilon::Finite(1.0)), FIT_SEED)?;
    let synth = model.sample(adult.train.n_rows(), SAMPLE_SEED)?;
    let share = balanced_dcr_share(&adult.train, &adult.holdout, &synth, npgc::metrics::DCR_SYNTH_ROWS, 1)?;
    let auc = discriminator_auc(&adult.holdout, &synth, 1)?;

    let train_keys: HashSet<String> = row_keys(&adult.train).into_iter().collect();
    let disjoint: Vec<usize> =
        row_keys(&adult.holdout).iter().enumerate().filter(|(_, k)| !train_keys.contains(*k)).map(|(i, _)| i).collect();
    let holdout = adult.holdout.take_rows(&disjoint)?;
    let copy_rows: Vec<usize> = (0..adult.train.n_rows()).step_by(20).collect();
    let copy_share = dcr_share(&adult.train, &holdout, &adult.train.take_rows(&copy_rows)?)?;
    let copy_auc = discriminator_auc(&adult.holdout, &adult.holdout.clone(), 1)?;

    outcome(
        (0.45..=0.62).contains(&share) && auc <= 0.90 && copy_share == 1.0 && (copy_auc - 0.5).abs() <= 0.05,
        format!(
            "DCR share {share:.4} (in [0.45, 0.62]), discriminator AUC {auc:.4} (<= 0.90), exact-copy DCR {copy_share:.4} (= 1), exact-copy AUC {copy_auc:.4} (0.5 +- 0.05)"
        ),
    )
}

fn criterion_7(adult: &Adult) -> Result<Outcome> {
    let (train, test) = split(&adult.full, &SplitSpec::new(0.7, SPLIT_SEED))?;
    let model = fit(&train, &PrivacyConfig::new(Epsilon::Finite(1.0)), FIT_SEED)?;
    let synth = model.sample(train.n_rows(), SAMPLE_SEED)?;
    let u = tstr(&train, &test, &synth, "income")?;
    outcome(
        u.accuracy_drop <= 0.25,
        format!(
            "real accuracy {:.4}, TSTR accuracy {:.4}, accuracy drop {:.4} (<= 0.25)",
            u.real_accuracy, u.tstr_accuracy, u.accuracy_drop
        ),
    )
}

fn criterion_8() -> Result<Outcome> {
    let counts = [5254usize, 1051, 751, 413, 26, 11];
    let labels = ["A", "B", "C", "D", "E", "F"];
    let n: usize = counts.iter().sum();
    let mut codes = Vec::with_capacity(n);
    for (k, &c) in counts.iter().enumerate() {
        codes.extend(std::iter::repeat_n(Some(k as u32), c));
    }
    let mut rng = Rng::new(3);
    rng.shuffle(&mut codes);
    let duration: Vec<Option<f64>> =
        codes.iter().map(|c| Some((c.unwrap() as f64 + 1.0) * (1.0 + rng.uniform()))).collect();
    let table = Table::new(
        vec![ColumnSchema::categorical("activity", labels), ColumnSchema::continuous("duration")],
        vec![Column::Categorical(codes), Column::Continuous(duration)],
    )?;
    let model = fit(&table, &PrivacyConfig::new(Epsilon::Infinite), FIT_SEED)?;
    let synth = model.sample(10_332, SAMPLE_SEED)?;
    let real = label_frequencies(&table, 0);
    let fake = label_frequencies(&synth, 0);
    let mut worst = (String::new(), 0.0f64);
    for ((label, a), (_, b)) in real.iter().zip(&fake) {
        if *a >= 0.001 {
            let rel = (b - a).abs() / a;
            if rel > worst.1 {
                worst = (label.clone(), rel);
            }
        }
    }
    let smallest = fake.iter().find(|(l, _)| l == "F").map_or(0.0, |f| f.1);
    outcome(
        worst.1 <= 0.20,
        format!(
            "n = {n}, m = 10332, worst relative error {:.4} on `{}` (<= 0.20); smallest category {:.5} vs {:.5}",
            worst.1,
            worst.0,
            smallest,
            counts[5] as f64 / n as f64
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_9(adult: &Adult) -> Result<Outcome> {
    let privacy = PrivacyConfig::new(Epsilon::Finite(1.0));
    let started = Instant::now();
    fit(&adult.train, &privacy, FIT_SEED)?;
    let fit_s = started.elapsed().as_secs_f64();

    let sizes = [5_000usize, 10_000, 20_000, 40_000];
    let schema = SchemaOverride::exact(adult.full.schema());
    let full = npgc::read_csv(common::adult_path(), Some(&schema), &npgc::CsvOptions::default())?;
    let mut order: Vec<usize> = (0..full.n_rows()).collect();
    Rng::new(SPLIT_SEED).shuffle(&mut order);
    let mut points = Vec::new();
    for &n in &sizes {
        let subset = full.take_rows(&order[..n])?;
        let times: Vec<f64> = (0..5)
            .map(|r| {
                let t = Instant::now();
                fit(&subset, &privacy, r).map(|_| t.elapsed().as_secs_f64())
            })
            .collect::<Result<_>>()?;
        points.push(((n as f64).ln(), median(times).ln()));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let medians: Vec<String> = points.iter().map(|p| format!("{:.4}", p.1.exp())).collect();
    outcome(
        fit_s <= 5.0 && slope <= 1.3,
        format!(
            "fit on {} rows {fit_s:.3} s (<= 5); median fit seconds at n = 5k/10k/20k/40k: {}; log-log slope {slope:.3} (<= 1.3)",
            adult.train.n_rows(),
            medians.join(" / ")
        ),
    )
}

fn criterion_10(adult: &Adult) -> Result<Outcome> {
    let dir = tempfile::tempdir().map_err(|e| npgc::Error::Argument(e.to_string()))?;
    let mut identical = true;
    let mut sizes = Vec::new();
    for eps in [Epsilon::Finite(1.0), Epsilon::Infinite] {
        let model = fit(&adult.train, &PrivacyConfig::new(eps), FIT_SEED)?;
        let path = dir.path().join("model.json");
        let mut before = Vec::new();
        write_csv_to(&model.sample(5_000, SAMPLE_SEED)?, &mut before)?;
        model.save(&path)?;
        let loaded = SynthesizerModel::load(&path)?;
        let mut after = Vec::new();
        write_csv_to(&loaded.sample(5_000, SAMPLE_SEED)?, &mut after)?;
        identical &= before == after;
        sizes.push(std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0));
    }
    outcome(
        identical,
        format!(
            "sampled CSV identical before and after save/load at epsilon 1 and inf: {identical}; model files {} / {} bytes",
            sizes[0], sizes[1]
        ),
    )
}

fn main() -> ExitCode {
    let adult = {
        let full = common::adult();
        let (train, holdout) = split(&full, &SplitSpec::new(0.8, SPLIT_SEED)).expect("split");
        Adult { full, train, holdout }
    };
    println!(
        "Adult: {} rows, {} columns; train {} / holdout {}",
        adult.full.n_rows(),
        adult.full.n_cols(),
        adult.train.n_rows(),
        adult.holdout.n_rows()
    );
    let criteria: Vec<(&str, Box<dyn Fn() -> Result<Outcome> + '_>)> = vec![
        ("exact-marginal identity", Box::new(|| criterion_1(&adult))),
        ("fidelity score", Box::new(|| criterion_2(&adult))),
        ("regeneration stability", Box::new(|| criterion_3(&adult))),
        ("PSD repair correctness", Box::new(criterion_4)),
        ("DP mechanism calibration", Box::new(|| criterion_5(&adult))),
        ("privacy metrics sanity", Box::new(|| criterion_6(&adult))),
        ("utility sanity", Box::new(|| criterion_7(&adult))),
        ("imbalance preservation", Box::new(criterion_8)),
        ("performance envelope", Box::new(|| criterion_9(&adult))),
        ("serialization", Box::new(|| criterion_10(&adult))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("criterion {:>2} [{}] {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use std::collections::BTreeMap;

use serde::Serialize;

use crate::table::{Column, ColumnKind, Table};
use crate::{Error, Result};

/// Score of one column's univariate agreement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnScore {
    pub column: String,
    pub metric: &'static str,
    pub score: f64,
}

/// Score of one column pair's bivariate agreement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairScore {
    pub columns: [String; 2],
    pub metric: &'static str,
    pub score: f64,
}

/// Column Shapes, Column Pair Trends and their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityReport {
    pub column_shapes: Vec<ColumnScore>,
    pub shapes_mean: f64,
    pub pair_trends: Vec<PairScore>,
    pub trends_mean: f64,
    pub overall: f64,
}

/// Checks that two tables share column names and kinds (integer and
/// continuous count as the same numeric kind). Names the first mismatch.
pub fn check_compatible(real: &Table, synth: &Table) -> Result<()> {
    if real.n_cols() != synth.n_cols() {
        return Err(Error::Argument(format!("tables have {} and {} columns", real.n_cols(), synth.n_cols())));
    }
    for (a, b) in real.schema().iter().zip(synth.schema()) {
        if a.name != b.name {
            return Err(Error::Argument(format!("column `{}` does not match column `{}`", a.name, b.name)));
        }
        if a.kind.is_numeric() != b.kind.is_numeric() {
            return Err(Error::Argument(format!(
                "column `{}` is {} in one table and {} in the other",
                a.name, a.kind, b.kind
            )));
        }
    }
    Ok(())
}

fn observed(column: &Column) -> Vec<f64> {
    (0..column.len()).filter_map(|i| column.numeric(i)).collect()
}

fn sorted_observed(column: &Column) -> Vec<f64> {
    let mut v = observed(column);
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov statistic over sorted samples.
pub fn ks_statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { 1.0 };
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    ks_statistic_sorted(&a, &b)
}

/// Label-level coding of a categorical column pair shared by both tables,
/// with missing as the last code.
struct SharedCodes {
    real: Vec<usize>,
    synth: Vec<usize>,
    levels: usize,
}

fn shared_categorical(real: &Table, synth: &Table, j: usize) -> SharedCodes {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for t in [real, synth] {
        for c in &t.schema()[j].categories {
            index.entry(c.as_str()).or_insert(0);
        }
    }
    for (k, v) in index.values_mut().enumerate() {
        *v = k;
    }
    let missing = index.len();
    let code = |t: &Table| -> Vec<usize> {
        let Column::Categorical(v) = t.column(j) else { unreachable!("checked categorical") };
        let cats = &t.schema()[j].categories;
        v.iter().map(|c| c.map_or(missing, |c| index[cats[c as usize].as_str()])).collect()
    };
    SharedCodes { real: code(real), synth: code(synth), levels: missing + 1 }
}

fn frequencies(codes: &[usize], levels: usize) -> Vec<f64> {
    let mut f = vec![0.0; levels];
    for &c in codes {
        f[c] += 1.0;
    }
    let n = codes.len().max(1) as f64;
    f.iter_mut().for_each(|v| *v /= n);
    f
}

fn tv_complement(a: &[f64], b: &[f64]) -> f64 {
    1.0 - 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Per-column univariate scores: `1 − KS` for numeric columns and
/// `1 − TVD` over category frequencies (missing counted as a category).
pub fn column_shapes(real: &Table, synth: &Table) -> Result<Vec<ColumnScore>> {
    check_compatible(real, synth)?;
    Ok((0..real.n_cols())
        .map(|j| {
            let column = real.schema()[j].name.clone();
            if real.schema()[j].kind.is_numeric() {
                let d = ks_statistic_sorted(&sorted_observed(real.column(j)), &sorted_observed(synth.column(j)));
                ColumnScore { column, metric: "KSComplement", score: 1.0 - d }
            } else {
                let codes = shared_categorical(real, synth, j);
                let score =
                    tv_complement(&frequencies(&codes.real, codes.levels), &frequencies(&codes.synth, codes.levels));
                ColumnScore { column, metric: "TVComplement", score }
            }
        })
        .collect())
}

/// Linear-interpolated quantile of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pair-level discretization of one column in both tables.
fn discretize(real: &Table, synth: &Table, j: usize) -> SharedCodes {
    if real.schema()[j].kind == ColumnKind::Categorical {
        return shared_categorical(real, synth, j);
    }
    let sorted = sorted_observed(real.column(j));
    let edges: Vec<f64> = if sorted.is_empty() {
        Vec::new()
    } else {
        [0.2, 0.4, 0.6, 0.8].iter().map(|&q| quantile(&sorted, q)).collect()
    };
    let missing = edges.len() + 1;
    let code = |c: &Column| -> Vec<usize> {
        (0..c.len()).map(|i| c.numeric(i).map_or(missing, |x| edges.partition_point(|&e| e < x))).collect()
    };
    SharedCodes { real: code(real.column(j)), synth: code(synth.column(j)), levels: missing + 1 }
}

fn contingency_similarity(a: &SharedCodes, b: &SharedCodes) -> f64 {
    let joint = |x: &[usize], y: &[usize]| -> Vec<f64> {
        let mut f = vec![0.0; a.levels * b.levels];
        for (&u, &v) in x.iter().zip(y) {
            f[u * b.levels + v] += 1.0;
        }
        let n = x.len().max(1) as f64;
        f.iter_mut().for_each(|v| *v /= n);
        f
    };
    tv_complement(&joint(&a.real, &b.real), &joint(&a.synth, &b.synth))
}

/// Pearson correlation over rows where both cells are present. Pairs are
/// sorted first so the result does not depend on row order. `None` when a
/// side has zero variance or fewer than two complete rows.
fn pearson(x: &Column, y: &Column) -> Option<f64> {
    let mut pairs: Vec<(f64, f64)> = (0..x.len()).filter_map(|i| Some((x.numeric(i)?, y.numeric(i)?))).collect();
    if pairs.len() < 2 {
        return None;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-pair bivariate scores. Numeric pairs use `1 − |Δρ|/2`; any pair
/// involving a categorical column, or a numeric column whose correlation is
/// undefined, uses the contingency-table complement with numeric columns cut
/// at the real quintiles.
pub fn pair_trends(real: &Table, synth: &Table) -> Result<Vec<PairScore>> {
    check_compatible(real, synth)?;
    let p = real.n_cols();
    if p < 2 {
        return Err(Error::Argument("pair trends need at least two columns".into()));
    }
    let codes: Vec<SharedCodes> = (0..p).map(|j| discretize(real, synth, j)).collect();
    let mut out = Vec::with_capacity(p * (p - 1) / 2);
    for a in 0..p {
        for b in (a + 1)..p {
            let columns = [real.schema()[a].name.clone(), real.schema()[b].name.clone()];
            let numeric = real.schema()[a].kind.is_numeric() && real.schema()[b].kind.is_numeric();
            let rho = numeric
                .then(|| Some((pearson(real.column(a), real.column(b))?, pearson(synth.column(a), synth.column(b))?)))
                .flatten();
            out.push(match rho {
                Some((r, s)) => {
                    PairScore { columns, metric: "CorrelationSimilarity", score: 1.0 - (r - s).abs() / 2.0 }
                }
                None => PairScore {
                    columns,
                    metric: "ContingencySimilarity",
                    score: contingency_similarity(&codes[a], &codes[b]),
                },
            });
        }
    }
    Ok(out)
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

/// Mean of the two component means.
pub fn overall_score(shapes: &[f64], trends: &[f64]) -> Result<f64> {
    if shapes.is_empty() || trends.is_empty() {
        return Err(Error::Argument("overall score needs non-empty shape and trend scores".into()));
    }
    Ok((mean(shapes.iter().copied()) + mean(trends.iter().copied())) / 2.0)
}

/// Column Shapes and Column Pair Trends of `synth` against `real`.
pub fn fidelity(real: &Table, synth: &Table) -> Result<FidelityReport> {
    let column_shapes = column_shapes(real, synth)?;
    let pair_trends = pair_trends(real, synth)?;
    let shapes: Vec<f64> = column_shapes.iter().map(|s| s.score).collect();
    let trends: Vec<f64> = pair_trends.iter().map(|s| s.score).collect();
    let overall = overall_score(&shapes, &trends)?;
    Ok(FidelityReport {
        shapes_mean: mean(shapes.into_iter()),
        trends_mean: mean(trends.into_iter()),
        column_shapes,
        pair_trends,
        overall,
    })
}

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::fidelity::check_compatible;
use super::model::{roc_auc, FeatureEncoder, Softmax, SparseRow, TrainConfig};
use crate::numkernels::Rng;
use crate::table::{Column, Table};
use crate::{Error, Result};

/// Fraction of rows that land in the training part of a stratified split.
const DISCRIMINATOR_TRAIN_FRACTION: f64 = 0.7;

fn shuffled_prefix(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// AUC of a logistic classifier trained to tell `real` rows from `synth`
/// rows. Classes are balanced by subsampling the larger table; the AUC is
/// measured on a held-out stratified 30%. Rows with identical features are
/// kept on the same side of the split.
pub fn discriminator_auc(real: &Table, synth: &Table, seed: u64) -> Result<f64> {
    check_compatible(real, synth)?;
    if real.n_rows() == 0 || synth.n_rows() == 0 {
        return Err(Error::Argument("discriminator needs rows from both tables".into()));
    }
    let k = real.n_rows().min(synth.n_rows());
    if k < 2 {
        return Err(Error::Argument("discriminator needs at least two rows per table".into()));
    }
    let root = Rng::new(seed);
    let real = real.take_rows(&shuffled_prefix(real.n_rows(), k, &mut root.child(0)))?;
    let synth = synth.take_rows(&shuffled_prefix(synth.n_rows(), k, &mut root.child(1)))?;

    let encoder = FeatureEncoder::fit(&real, &[]);
    let cut = ((k as f64 * DISCRIMINATOR_TRAIN_FRACTION).floor() as usize).clamp(1, k - 1);
    let rows: Vec<(SparseRow, usize)> = encoder
        .encode(&synth)
        .into_iter()
        .map(|r| (r, 0))
        .chain(encoder.encode(&real).into_iter().map(|r| (r, 1)))
        .collect();

    // Identical feature vectors form one group and go to the same side of
    // the split, so a row rarely meets its twin across train and test. A
    // group that overflows the training quota of a class is cut at the quota.
    let mut group_of: HashMap<Vec<(u32, u64)>, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, (row, _)) in rows.iter().enumerate() {
        let key: Vec<(u32, u64)> = row.iter().map(|&(k, v)| (k, v.to_bits())).collect();
        let g = *group_of.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    root.child(2).shuffle(&mut groups);
    let mut in_train = [0usize; 2];
    let (mut train_x, mut train_y, mut test_x, mut test_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for group in &groups {
        for &i in group {
            let (row, label) = &rows[i];
            if in_train[*label] < cut {
                in_train[*label] += 1;
                train_x.push(row.clone());
                train_y.push(*label);
            } else {
                test_x.push(row.clone());
                test_y.push(*label == 1);
            }
        }
    }
    let model = Softmax::train(&train_x, &train_y, 2, encoder.dim(), TrainConfig::default())?;
    let scores: Vec<f64> = test_x.iter().map(|r| model.predict_proba(r)[1]).collect();
    roc_auc(&scores, &test_y)
}

/// Rows flattened for distance computations: numeric cells scaled by the
/// training range, categorical cells as shared label codes, missing as NaN.
struct DistanceRows {
    values: Vec<f64>,
    p: usize,
}

struct DistanceLayout {
    categorical: Vec<bool>,
    range: Vec<f64>,
    labels: Vec<BTreeMap<String, f64>>,
}

impl DistanceLayout {
    fn new(train: &Table, others: &[&Table]) -> Self {
        let p = train.n_cols();
        let mut categorical = vec![false; p];
        let mut range = vec![0.0; p];
        let mut labels = vec![BTreeMap::new(); p];
        for j in 0..p {
            let col = train.column(j);
            if let Column::Categorical(_) = col {
                categorical[j] = true;
                for t in std::iter::once(train).chain(others.iter().copied()) {
                    for c in &t.schema()[j].categories {
                        let next = labels[j].len() as f64;
                        labels[j].entry(c.clone()).or_insert(next);
                    }
                }
            } else {
                let (lo, hi) = (0..col.len())
                    .filter_map(|i| col.numeric(i))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
                range[j] = if hi > lo { hi - lo } else { 0.0 };
            }
        }
        Self { categorical, range, labels }
    }

    fn rows(&self, t: &Table) -> DistanceRows {
        let p = t.n_cols();
        let n = t.n_rows();
        let mut values = vec![f64::NAN; n * p];
        for j in 0..p {
            match t.column(j) {
                Column::Categorical(codes) => {
                    let cats = &t.schema()[j].categories;
                    for (i, c) in codes.iter().enumerate() {
                        if let Some(c) = c {
                            values[i * p + j] = self.labels[j][&cats[*c as usize]];
                        }
                    }
                }
                col => {
                    let r = self.range[j];
                    for i in 0..n {
                        if let Some(x) = col.numeric(i) {
                            values[i * p + j] = if r > 0.0 { x / r } else { x };
                        }
                    }
                }
            }
        }
        DistanceRows { values, p }
    }

    fn cell(&self, j: usize, a: f64, b: f64) -> f64 {
        match (a.is_nan(), b.is_nan()) {
            (true, true) => 0.0,
            (true, false) | (false, true) => 1.0,
            _ if self.categorical[j] || self.range[j] == 0.0 => (a != b) as u8 as f64,
            _ => (a - b).abs().min(1.0),
        }
    }

    /// Smallest summed distance from `row` to any reference row, abandoning
    /// a candidate once its partial sum exceeds the best so far.
    fn nearest(&self, row: &[f64], refs: &DistanceRows) -> f64 {
        let p = refs.p;
        let mut best = f64::INFINITY;
        for r in refs.values.chunks_exact(p) {
            let mut acc = 0.0;
            for j in 0..p {
                acc += self.cell(j, row[j], r[j]);
                if acc > best {
                    break;
                }
            }
            if acc < best {
                best = acc;
            }
        }
        best
    }
}

/// Share of synthetic rows strictly closer to their nearest training row
/// than to their nearest holdout row; exact ties count one half.
///
/// Distances average per-column terms: `|Δ|/range` for numerics (range from
/// `train`, capped at 1), 0/1 mismatch for categories, 1 between a missing
/// and a present cell and 0 between two missing cells.
pub fn dcr_share(train: &Table, holdout: &Table, synth: &Table) -> Result<f64> {
    check_compatible(train, holdout)?;
    check_compatible(train, synth)?;
    if holdout.n_rows() == 0 {
        return Err(Error::Argument("DCR share needs a non-empty holdout".into()));
    }
    if train.n_rows() == 0 || synth.n_rows() == 0 {
        return Err(Error::Argument("DCR share needs non-empty train and synthetic tables".into()));
    }
    let layout = DistanceLayout::new(train, &[holdout, synth]);
    let t = layout.rows(train);
    let h = layout.rows(holdout);
    let s = layout.rows(synth);
    let votes: Vec<f64> = s
        .values
        .par_chunks_exact(s.p)
        .map(|row| {
            let dt = layout.nearest(row, &t);
            let dh = layout.nearest(row, &h);
            if dt < dh {
                1.0
            } else if dt == dh {
                0.5
            } else {
                0.0
            }
        })
        .collect();
    Ok(votes.iter().sum::<f64>() / votes.len() as f64)
}

/// DCR share under the evaluation protocol: the training table is
/// subsampled to the holdout size so an ideal generator scores 0.5, and at
/// most `max_synth_rows` synthetic rows are scored.
pub fn balanced_dcr_share(
    train: &Table,
    holdout: &Table,
    synth: &Table,
    max_synth_rows: usize,
    seed: u64,
) -> Result<f64> {
    let root = Rng::new(seed);
    let train = if train.n_rows() > holdout.n_rows() {
        train.take_rows(&shuffled_prefix(train.n_rows(), holdout.n_rows(), &mut root.child(0)))?
    } else {
        train.clone()
    };
    let synth = if synth.n_rows() > max_synth_rows {
        synth.take_rows(&shuffled_prefix(synth.n_rows(), max_synth_rows.max(1), &mut root.child(1)))?
    } else {
        synth.clone()
    };
    dcr_share(&train, holdout, &synth)
}

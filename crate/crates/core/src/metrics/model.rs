//! Feature encoding and the multinomial logistic classifier used by the
//! discriminator and TSTR metrics.

use std::collections::HashMap;

use crate::table::{Column, Table};
use crate::{Error, Result};

/// Sparse feature row: `(index, value)` pairs.
pub type SparseRow = Vec<(u32, f64)>;

#[derive(Debug, Clone)]
enum Encoding {
    Numeric { column: usize, mean: f64, scale: f64, value: u32, missing: u32 },
    Categorical { column: usize, slots: HashMap<String, u32>, missing: u32 },
}

/// Standardized numerics with a missing indicator per numeric column, and
/// one-hot categoricals with missing as its own level. Statistics and levels
/// come from the table the encoder is fitted on; unseen labels encode as all
/// zeros.
#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    encodings: Vec<Encoding>,
    dim: usize,
}

impl FeatureEncoder {
    /// Fits on `reference`, skipping the columns listed in `exclude`.
    pub fn fit(reference: &Table, exclude: &[usize]) -> Self {
        let mut encodings = Vec::new();
        let mut dim = 0u32;
        for (j, schema) in reference.schema().iter().enumerate() {
            if exclude.contains(&j) {
                continue;
            }
            match reference.column(j) {
                Column::Categorical(_) => {
                    let mut slots = HashMap::new();
                    for c in &schema.categories {
                        slots.insert(c.clone(), dim);
                        dim += 1;
                    }
                    encodings.push(Encoding::Categorical { column: j, slots, missing: dim });
                    dim += 1;
                }
                column => {
                    let v: Vec<f64> = (0..column.len()).filter_map(|i| column.numeric(i)).collect();
                    let n = v.len().max(1) as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
                    encodings.push(Encoding::Numeric { column: j, mean, scale, value: dim, missing: dim + 1 });
                    dim += 2;
                }
            }
        }
        Self { encodings, dim: dim as usize }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encode(&self, table: &Table) -> Vec<SparseRow> {
        let mut rows: Vec<SparseRow> = vec![Vec::with_capacity(self.encodings.len()); table.n_rows()];
        for enc in &self.encodings {
            match enc {
                Encoding::Numeric { column, mean, scale, value, missing } => {
                    let col = table.column(*column);
                    for (i, row) in rows.iter_mut().enumerate() {
                        match col.numeric(i) {
                            Some(x) => row.push((*value, (x - mean) / scale)),
                            None => row.push((*missing, 1.0)),
                        }
                    }
                }
                Encoding::Categorical { column, slots, missing } => {
                    let Column::Categorical(codes) = table.column(*column) else {
                        continue;
                    };
                    let lookup: Vec<Option<u32>> =
                        table.schema()[*column].categories.iter().map(|c| slots.get(c).copied()).collect();
                    for (row, code) in rows.iter_mut().zip(codes) {
                        match code {
                            None => row.push((*missing, 1.0)),
                            Some(c) => {
                                if let Some(slot) = lookup[*c as usize] {
                                    row.push((slot, 1.0));
                                }
                            }
                        }
                    }
                }
            }
        }
        rows
    }
}

/// Multinomial logistic regression with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Softmax {
    classes: usize,
    dim: usize,
    /// Row-major `classes × (dim + 1)`, intercept last.
    weights: Vec<f64>,
}

/// Training settings for [`Softmax::train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub l2: f64,
    pub steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { l2: 1e-3, steps: 500 }
    }
}

impl Softmax {
    /// Full-batch accelerated gradient descent on the mean cross-entropy
    /// plus `l2/2 ‖W‖²`. The step is `1/L` with `L` bounding the curvature,
    /// so the run is deterministic and needs no tuning.
    pub fn train(x: &[SparseRow], y: &[usize], classes: usize, dim: usize, config: TrainConfig) -> Result<Softmax> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Argument("classifier needs equally many rows and labels".into()));
        }
        if classes < 2 {
            return Err(Error::Argument("classifier needs at least two classes".into()));
        }
        if let Some(bad) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::Argument(format!("label {bad} out of range for {classes} classes")));
        }
        let n = x.len() as f64;
        let width = dim + 1;
        let mean_sq = x.iter().map(|r| 1.0 + r.iter().map(|(_, v)| v * v).sum::<f64>()).sum::<f64>() / n;
        let step = 1.0 / (0.5 * mean_sq + config.l2);

        let mut model = Softmax { classes, dim, weights: vec![0.0; classes * width] };
        let mut prev = model.weights.clone();
        let mut look = model.weights.clone();
        let mut grad = vec![0.0; classes * width];
        let mut probs = vec![0.0; classes];
        for t in 0..config.steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (row, &label) in x.iter().zip(y) {
                logits_into(&look, width, row, &mut probs);
                softmax_in_place(&mut probs);
                for (c, p) in probs.iter().enumerate() {
                    let r = p - if c == label { 1.0 } else { 0.0 };
                    let g = &mut grad[c * width..(c + 1) * width];
                    for &(k, v) in row {
                        g[k as usize] += r * v;
                    }
                    g[dim] += r;
                }
            }
            for c in 0..classes {
                for k in 0..width {
                    let idx = c * width + k;
                    let penalty = if k == dim { 0.0 } else { config.l2 * look[idx] };
                    let next = look[idx] - step * (grad[idx] / n + penalty);
                    let momentum = t as f64 / (t as f64 + 3.0);
                    look[idx] = next + momentum * (next - prev[idx]);
                    prev[idx] = next;
                }
            }
        }
        model.weights = prev;
        Ok(model)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn predict_proba(&self, row: &SparseRow) -> Vec<f64> {
        let mut p = vec![0.0; self.classes];
        logits_into(&self.weights, self.dim + 1, row, &mut p);
        softmax_in_place(&mut p);
        p
    }

    /// Most probable class; ties go to the lower index.
    pub fn predict(&self, row: &SparseRow) -> usize {
        let p = self.predict_proba(row);
        let mut best = 0;
        for (c, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = c;
            }
        }
        best
    }
}

fn logits_into(weights: &[f64], width: usize, row: &SparseRow, out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        let w = &weights[c * width..(c + 1) * width];
        *o = w[width - 1] + row.iter().map(|&(k, v)| w[k as usize] * v).sum::<f64>();
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

/// Area under the ROC curve of `scores` for the positive labels, via the
/// Mann–Whitney statistic with mid-ranks for ties.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Argument("AUC needs both positive and negative examples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += (i..=j).filter(|&k| positive[order[k]]).count() as f64 * mid;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

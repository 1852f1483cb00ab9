use std::collections::BTreeMap;

use serde::Serialize;

use super::fidelity::check_compatible;
use super::model::{FeatureEncoder, Softmax, TrainConfig};
use crate::table::{Column, Table};
use crate::{Error, Result};

/// Train-on-synthetic, test-on-real result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TstrScore {
    pub target: String,
    /// Test accuracy of the classifier trained on real rows.
    pub real_accuracy: f64,
    /// Test accuracy of the classifier trained on synthetic rows.
    pub tstr_accuracy: f64,
    /// `(real_accuracy − tstr_accuracy) / real_accuracy`.
    pub accuracy_drop: f64,
}

fn labelled(table: &Table, target: usize, classes: &BTreeMap<String, usize>) -> (Vec<usize>, Vec<usize>) {
    let Column::Categorical(codes) = table.column(target) else { unreachable!("target checked categorical") };
    let cats = &table.schema()[target].categories;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, c) in codes.iter().enumerate() {
        if let Some(c) = c {
            if let Some(&label) = classes.get(&cats[*c as usize]) {
                rows.push(i);
                labels.push(label);
            }
        }
    }
    (rows, labels)
}

fn observed_labels(table: &Table, target: usize) -> Vec<String> {
    let Column::Categorical(codes) = table.column(target) else { unreachable!("target checked categorical") };
    let mut seen = vec![false; table.schema()[target].categories.len()];
    codes.iter().flatten().for_each(|&c| seen[c as usize] = true);
    table.schema()[target].categories.iter().zip(seen).filter(|(_, s)| *s).map(|(c, _)| c.clone()).collect()
}

/// Trains the built-in classifier on `train` and on `synth`, scores both
/// on `test` and reports the relative accuracy drop. Rows with a missing
/// target are skipped.
pub fn tstr(train: &Table, test: &Table, synth: &Table, target: &str) -> Result<TstrScore> {
    check_compatible(train, test)?;
    check_compatible(train, synth)?;
    let t = train.column_index(target).ok_or_else(|| Error::Argument(format!("target column `{target}` not found")))?;
    for table in [train, test, synth] {
        if !matches!(table.column(t), Column::Categorical(_)) {
            return Err(Error::Argument(format!("target column `{target}` must be categorical")));
        }
    }

    let mut classes = BTreeMap::new();
    for table in [train, synth, test] {
        for label in observed_labels(table, t) {
            let next = classes.len();
            classes.entry(label).or_insert(next);
        }
    }
    if classes.len() < 2 {
        return Err(Error::Argument(format!("target column `{target}` has fewer than two classes")));
    }
    let synth_labels = observed_labels(synth, t);
    for label in observed_labels(test, t) {
        if !synth_labels.contains(&label) {
            log::warn!(
                "class `{label}` of `{target}` is absent from the synthetic data; its test rows count as errors"
            );
        }
    }

    let encoder = FeatureEncoder::fit(train, &[t]);
    let (test_rows, test_y) = labelled(test, t, &classes);
    if test_rows.is_empty() {
        return Err(Error::Argument("test table has no labelled rows".into()));
    }
    let test_x = encoder.encode(&test.take_rows(&test_rows)?);
    let accuracy = |source: &Table| -> Result<f64> {
        let (rows, y) = labelled(source, t, &classes);
        if rows.is_empty() {
            return Err(Error::Argument("training table has no labelled rows".into()));
        }
        let x = encoder.encode(&source.take_rows(&rows)?);
        let model = Softmax::train(&x, &y, classes.len(), encoder.dim(), TrainConfig::default())?;
        let hits = test_x.iter().zip(&test_y).filter(|(r, y)| model.predict(r) == **y).count();
        Ok(hits as f64 / test_y.len() as f64)
    };
    let real_accuracy = accuracy(train)?;
    let tstr_accuracy = accuracy(synth)?;
    if real_accuracy <= 0.0 {
        return Err(Error::Numeric("real-trained classifier has zero accuracy".into()));
    }
    Ok(TstrScore {
        target: target.to_string(),
        real_accuracy,
        tstr_accuracy,
        accuracy_drop: (real_accuracy - tstr_accuracy) / real_accuracy,
    })
}

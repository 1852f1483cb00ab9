//! Fidelity, privacy and utility metrics for synthetic tables.

mod fidelity;
mod model;
mod privacy;
mod utility;

use std::fmt::Write as _;

use serde::Serialize;

pub use fidelity::{
    check_compatible, column_shapes, fidelity, ks_statistic, overall_score, pair_trends, ColumnScore, FidelityReport,
    PairScore,
};
pub use model::{roc_auc, FeatureEncoder, Softmax, SparseRow, TrainConfig};
pub use privacy::{balanced_dcr_share, dcr_share, discriminator_auc};
pub use utility::{tstr, TstrScore};

use crate::table::Table;
use crate::Result;

/// Default cap on synthetic rows scored by the DCR share.
pub const DCR_SYNTH_ROWS: usize = 2000;

/// Everything the evaluation reports for one synthetic table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    #[serde(flatten)]
    pub fidelity: FidelityReport,
    pub discriminator_auc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dcr_share: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility: Option<TstrScore>,
}

/// Inputs to [`evaluate`]. `reference` is the real table fidelity and the
/// discriminator compare against; `train` enables the DCR share with
/// `reference` as the holdout; `utility` enables TSTR.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation<'a> {
    pub reference: &'a Table,
    pub synth: &'a Table,
    pub train: Option<&'a Table>,
    pub utility: Option<UtilitySplit<'a>>,
    pub seed: u64,
    pub dcr_synth_rows: usize,
}

/// Real train/test partition and target column for TSTR.
#[derive(Debug, Clone, Copy)]
pub struct UtilitySplit<'a> {
    pub train: &'a Table,
    pub test: &'a Table,
    pub target: &'a str,
}

impl<'a> Evaluation<'a> {
    pub fn new(reference: &'a Table, synth: &'a Table, seed: u64) -> Self {
        Self { reference, synth, train: None, utility: None, seed, dcr_synth_rows: DCR_SYNTH_ROWS }
    }

    pub fn run(&self) -> Result<QualityReport> {
        let fidelity = fidelity(self.reference, self.synth)?;
        let discriminator_auc = discriminator_auc(self.reference, self.synth, self.seed)?;
        let dcr_share = match self.train {
            Some(train) => Some(balanced_dcr_share(train, self.reference, self.synth, self.dcr_synth_rows, self.seed)?),
            None => None,
        };
        let utility = match &self.utility {
            Some(u) => Some(tstr(u.train, u.test, self.synth, u.target)?),
            None => None,
        };
        Ok(QualityReport { fidelity, discriminator_auc, dcr_share, utility })
    }
}

impl QualityReport {
    /// Plain-text table with four decimals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let f = &self.fidelity;
        let width = f.column_shapes.iter().map(|s| s.column.len()).max().unwrap_or(0).max(24);
        let _ = writeln!(out, "Column shapes");
        for s in &f.column_shapes {
            let _ = writeln!(out, "  {:<width$}  {:<16}  {:.4}", s.column, s.metric, s.score);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<width$}  {:.4}", "Column Shapes", f.shapes_mean, width = width + 20);
        let _ = writeln!(out, "{:<width$}  {:.4}", "Column Pair Trends", f.trends_mean, width = width + 20);
        let _ = writeln!(out, "{:<width$}  {:.4}", "Overall Score", f.overall, width = width + 20);
        let _ = writeln!(out, "{:<width$}  {:.4}", "Discriminator AUC", self.discriminator_auc, width = width + 20);
        if let Some(d) = self.dcr_share {
            let _ = writeln!(out, "{:<width$}  {:.4}", "DCR Share", d, width = width + 20);
        }
        if let Some(u) = &self.utility {
            let _ = writeln!(
                out,
                "{:<width$}  {:.4}",
                format!("Real Accuracy ({})", u.target),
                u.real_accuracy,
                width = width + 20
            );
            let _ = writeln!(out, "{:<width$}  {:.4}", "Synthetic Score (TSTR)", u.tstr_accuracy, width = width + 20);
            let _ = writeln!(out, "{:<width$}  {:.4}", "Accuracy Drop", u.accuracy_drop, width = width + 20);
        }
        out
    }
}

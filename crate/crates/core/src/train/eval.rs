use serde::{Deserialize, Serialize};

use crate::data::DomainDataset;
use crate::error::Result;
use crate::losses::{class_correlation, ClassCorrelation};
use crate::model::{predict, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[i][j]` counts rows of true class `i` predicted as `j`.
    pub confusion: Vec<Vec<u64>>,
    pub trace: f64,
    pub diag_stat: f64,
}

/// Argmax accuracy, confusion matrix and class-correlation diagnostics of
/// `(g, c)` over every row of `dataset`.
pub fn evaluate(g: &ModelParams, c: &ModelParams, dataset: &DomainDataset) -> Result<Evaluation> {
    let probs = predict(g, c, dataset.features())?;
    let k = probs.cols();
    let mut confusion = vec![vec![0u64; k]; dataset.num_classes().max(k)];
    for (&y, p) in dataset.labels().iter().zip(probs.argmax_rows()) {
        confusion[y][p] += 1;
    }
    let ClassCorrelation { trace, diag_stat, .. } = class_correlation(&probs)?;
    Ok(Evaluation {
        accuracy: accuracy_of(&confusion),
        confusion,
        trace,
        diag_stat,
    })
}

/// `trace(confusion) / total`; zero for an empty matrix.
pub fn accuracy_of(confusion: &[Vec<u64>]) -> f64 {
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let correct: u64 = confusion.iter().enumerate().map(|(i, row)| row.get(i).copied().unwrap_or(0)).sum();
    correct as f64 / total as f64
}

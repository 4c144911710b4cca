//! Loss terms of the classifier-adversarial objective and their composition.
//!
//! * [`ce_loss`]: source cross-entropy
//! * [`pld_loss`]: paired-level discrepancy, mean Jensen–Shannon divergence
//!   over same-label pairs (source–source and source–target)
//! * [`nnd_loss`]: nuclear-norm discrepancy between source and target
//!   prediction matrices
//! * [`mi_loss`]: mutual information of target predictions
//!
//! [`objective`] wires them into a single scalar whose one backward pass
//! trains the classifier to maximize the adversarial terms while the
//! extractor, behind a gradient reversal node, minimizes them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};

mod divergence;
mod objective;
mod terms;

pub use divergence::{build_pairs, js_divergence, pld_loss, PairSet};
pub use objective::{objective, LossWeights, Objective, ObjectiveOptions, Terms};
pub use terms::{ce_loss, class_correlation, mi_loss, nnd_loss, ClassCorrelation, NndNormalization};

/// Tolerance on row sums when validating probability rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A `b×k` row-stochastic matrix of class probabilities on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Predictions<'t>(Var<'t>);

impl<'t> Predictions<'t> {
    /// Wraps the output of a row softmax without re-validating it.
    pub(crate) fn from_softmax(v: Var<'t>) -> Self {
        Self(v)
    }

    /// Validates that every row is a probability vector.
    pub fn new(v: Var<'t>) -> Result<Self> {
        check_row_stochastic(&v.value(), "predictions")?;
        Ok(Self(v))
    }

    pub fn var(&self) -> Var<'t> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.value().rows()
    }

    pub fn classes(&self) -> usize {
        self.0.value().cols()
    }
}

pub(crate) fn check_row_stochastic(t: &Tensor, what: &str) -> Result<()> {
    t.expect_matrix("probability rows")?;
    for r in 0..t.rows() {
        let row = t.row(r);
        if row.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Contract(format!("{what}: row {r} has a negative or NaN entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Contract(format!("{what}: row {r} sums to {s}, not 1")));
        }
    }
    Ok(())
}

/// Scalar values of every term for one step, with the weights that were used.
///
/// `total = ce − α·(pld_intra + pld_inter) − β·nnd − γ·mi`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub pld_intra: f64,
    pub pld_inter: f64,
    pub nnd: f64,
    pub mi: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub intra_pairs: usize,
    pub inter_pairs: usize,
}

impl LossBreakdown {
    /// Recomputes `total` from the components.
    pub fn reconstructed_total(&self) -> f64 {
        self.ce - self.alpha * (self.pld_intra + self.pld_inter) - self.beta * self.nnd - self.gamma * self.mi
    }

    pub fn is_finite(&self) -> bool {
        [self.ce, self.pld_intra, self.pld_inter, self.nnd, self.mi, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "total={} ce={} pld_intra={} pld_inter={} nnd={} mi={} (alpha={} beta={} gamma={}, pairs {}/{})",
            self.total,
            self.ce,
            self.pld_intra,
            self.pld_inter,
            self.nnd,
            self.mi,
            self.alpha,
            self.beta,
            self.gamma,
            self.intra_pairs,
            self.inter_pairs
        )
    }
}

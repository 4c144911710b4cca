use serde::{Deserialize, Serialize};

use super::{check_row_stochastic, Predictions};
use crate::autodiff::{matmul, Tensor, Var};
use crate::error::{Error, Result};

/// How batch nuclear norms are scaled before differencing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NndNormalization {
    /// Divide each norm by its batch size.
    #[default]
    PerSample,
    /// Use the norms as they are.
    Raw,
}

/// `‖P_s‖_* / b_s − ‖P_t‖_* / b_t` (or the unscaled difference in raw mode).
pub fn nnd_loss<'t>(
    preds_s: Predictions<'t>,
    preds_t: Predictions<'t>,
    normalization: NndNormalization,
) -> Result<Var<'t>> {
    let (bs, bt) = (preds_s.rows(), preds_t.rows());
    if bs == 0 || bt == 0 {
        return Err(Error::Contract("nnd_loss needs non-empty batches".into()));
    }
    let ns = preds_s.var().nuclear_norm()?;
    let nt = preds_t.var().nuclear_norm()?;
    let (ns, nt) = match normalization {
        NndNormalization::PerSample => (ns.scale(1.0 / bs as f64), nt.scale(1.0 / bt as f64)),
        NndNormalization::Raw => (ns, nt),
    };
    ns.sub(nt)
}

/// Marginal entropy of the mean prediction plus the mean negative
/// conditional entropy: `−Σ p̄ log p̄ + mean_j ⟨p_j, log p_j⟩`.
pub fn mi_loss(preds_t: Predictions<'_>) -> Result<Var<'_>> {
    if preds_t.rows() == 0 {
        return Err(Error::Contract("mi_loss needs a non-empty batch".into()));
    }
    let p = preds_t.var();
    let b = preds_t.rows() as f64;
    let p_bar = p.mean_rows()?;
    let marginal = p_bar.mul(p_bar.log())?.sum().neg();
    let conditional = p.mul(p.log())?.sum().scale(1.0 / b);
    marginal.add(conditional)
}

/// Mean `−log p_i[y_i]` over the batch.
pub fn ce_loss<'t>(preds_s: Predictions<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let (b, k) = (preds_s.rows(), preds_s.classes());
    if labels.len() != b {
        return Err(Error::Contract(format!(
            "ce_loss: {} labels for {b} predictions",
            labels.len()
        )));
    }
    if b == 0 {
        return Err(Error::Contract("ce_loss needs a non-empty batch".into()));
    }
    let mut onehot = Tensor::zeros(&[b, k]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::Contract(format!("label {y} out of range for {k} classes")));
        }
        onehot.set(i, y, 1.0);
    }
    let p = preds_s.var();
    let mask = p.tape().constant(onehot);
    Ok(mask.mul(p.log())?.sum().scale(-1.0 / b as f64))
}

/// Class correlation `S = MᵀM` of a prediction matrix and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCorrelation {
    pub matrix: Tensor,
    /// `tr(S)`, which equals `‖M‖_F²`.
    pub trace: f64,
    /// `‖M‖_F`.
    pub frobenius: f64,
    /// `2·tr(S) − b`.
    pub diag_stat: f64,
}

/// Diagnostic only; nothing is recorded on a tape.
pub fn class_correlation(preds: &Tensor) -> Result<ClassCorrelation> {
    check_row_stochastic(preds, "class_correlation")?;
    let matrix = matmul(&preds.transpose(), preds)?;
    let k = matrix.rows();
    let trace: f64 = (0..k).map(|j| matrix.get(j, j)).sum();
    Ok(ClassCorrelation {
        trace,
        frobenius: preds.frobenius_norm(),
        diag_stat: 2.0 * trace - preds.rows() as f64,
        matrix,
    })
}

use serde::{Deserialize, Serialize};

use super::{check_row_stochastic, Predictions};
use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};

/// Mean Jensen–Shannon divergence between matching rows of `p` and `q`
/// (natural log). A single pair of `1×k` rows gives the plain divergence.
///
/// Both inputs must be row-stochastic.
pub fn js_divergence<'t>(p: Var<'t>, q: Var<'t>) -> Result<Var<'t>> {
    check_row_stochastic(&p.value(), "js_divergence lhs")?;
    check_row_stochastic(&q.value(), "js_divergence rhs")?;
    js_rows_mean(p, q)
}

/// `½·KL(p‖m) + ½·KL(q‖m)` with `m = (p+q)/2`, averaged over rows.
///
/// The two KL sums are reduced separately and added last, so swapping the
/// arguments reproduces the value bit for bit.
pub(crate) fn js_rows_mean<'t>(p: Var<'t>, q: Var<'t>) -> Result<Var<'t>> {
    let n = p.value().rows();
    if n == 0 {
        return Err(Error::Contract("js_divergence of zero rows".into()));
    }
    let log_m = p.add(q)?.scale(0.5).log();
    let kl_p = p.mul(p.log().sub(log_m)?)?.sum();
    let kl_q = q.mul(q.log().sub(log_m)?)?.sum();
    Ok(kl_p.add(kl_q)?.scale(0.5 / n as f64))
}

/// Same-label index pairs within one source/target batch pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    /// `(i, i′)` source indices with `i < i′` and equal labels.
    pub intra_pairs: Vec<(usize, usize)>,
    /// `(source_idx, target_idx)` with source label equal to target pseudo label.
    pub inter_pairs: Vec<(usize, usize)>,
}

/// All unordered same-label source pairs and all matching source–target
/// pairs, in ascending lexicographic order.
pub fn build_pairs(source_labels: &[usize], target_pseudo: &[usize]) -> PairSet {
    let targets: Vec<Option<usize>> = target_pseudo.iter().copied().map(Some).collect();
    build_pairs_masked(source_labels, &targets)
}

/// Like [`build_pairs`], skipping targets whose pseudo label is `None`.
pub(crate) fn build_pairs_masked(source_labels: &[usize], target_pseudo: &[Option<usize>]) -> PairSet {
    let mut intra_pairs = Vec::new();
    for (i, &yi) in source_labels.iter().enumerate() {
        for (off, &yj) in source_labels[i + 1..].iter().enumerate() {
            if yi == yj {
                intra_pairs.push((i, i + 1 + off));
            }
        }
    }
    let mut inter_pairs = Vec::new();
    for (k, &yk) in source_labels.iter().enumerate() {
        for (j, &yp) in target_pseudo.iter().enumerate() {
            if yp == Some(yk) {
                inter_pairs.push((k, j));
            }
        }
    }
    PairSet {
        intra_pairs,
        inter_pairs,
    }
}

/// `(intra, inter)` mean JS over the pair lists. An empty list contributes a
/// constant zero.
pub fn pld_loss<'t>(
    preds_s: Predictions<'t>,
    preds_t: Predictions<'t>,
    pairs: &PairSet,
) -> Result<(Var<'t>, Var<'t>)> {
    let (ns, nt) = (preds_s.rows(), preds_t.rows());
    let bad_intra = pairs.intra_pairs.iter().any(|&(a, b)| a >= ns || b >= ns);
    let bad_inter = pairs.inter_pairs.iter().any(|&(a, b)| a >= ns || b >= nt);
    if bad_intra || bad_inter {
        return Err(Error::Contract(format!(
            "pair index out of range for batches of {ns} source / {nt} target rows"
        )));
    }
    let tape = preds_s.var().tape();
    let zero = || tape.constant(Tensor::scalar(0.0));

    let intra = if pairs.intra_pairs.is_empty() {
        zero()
    } else {
        let (a, b): (Vec<usize>, Vec<usize>) = pairs.intra_pairs.iter().copied().unzip();
        let ps = preds_s.var();
        js_rows_mean(ps.gather_rows(&a)?, ps.gather_rows(&b)?)?
    };
    let inter = if pairs.inter_pairs.is_empty() {
        zero()
    } else {
        let (a, b): (Vec<usize>, Vec<usize>) = pairs.inter_pairs.iter().copied().unzip();
        js_rows_mean(preds_s.var().gather_rows(&a)?, preds_t.var().gather_rows(&b)?)?
    };
    Ok((intra, inter))
}

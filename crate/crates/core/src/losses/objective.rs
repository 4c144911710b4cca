use serde::{Deserialize, Serialize};

use super::divergence::{build_pairs_masked, pld_loss, PairSet};
use super::terms::{ce_loss, mi_loss, nnd_loss, NndNormalization};
use super::LossBreakdown;
use crate::autodiff::{Tape, Var};
use crate::data::{SourceBatch, TargetBatch};
use crate::error::{Error, Result};
use crate::model::{classify, extract, BoundMlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("loss weight {name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveOptions {
    pub nnd_normalization: NndNormalization,
    /// Targets whose top probability is below this are left out of the
    /// inter-domain pairs. `0.0` keeps every target.
    pub pseudo_label_threshold: f64,
}

/// Tape nodes of the individual terms.
#[derive(Debug, Clone, Copy)]
pub struct Terms<'t> {
    pub ce: Var<'t>,
    pub pld_intra: Var<'t>,
    pub pld_inter: Var<'t>,
    pub nnd: Var<'t>,
    pub mi: Var<'t>,
}

#[derive(Debug)]
pub struct Objective<'t> {
    pub total: Var<'t>,
    pub terms: Terms<'t>,
    pub breakdown: LossBreakdown,
    pub pairs: PairSet,
    pub pseudo_labels: Vec<usize>,
}

/// Builds `L_ce − α·L_pld − β·L_nnd − γ·L_mi` on `tape`.
///
/// Features are computed once per domain. The classifier then runs twice:
/// a direct pass feeding cross-entropy (source) and mutual information
/// (target), and a pass behind a gradient reversal node (factor
/// `lambda_grl`) feeding PLD and NND. Pseudo labels are the argmax of the
/// direct target predictions and carry no gradient.
///
/// Descending the gradient of `total` therefore moves the classifier toward
/// larger `α·L_pld + β·L_nnd` and the extractor toward smaller values of it.
/// Terms whose weight is exactly zero are left out of `total`, so they add
/// nothing to any gradient.
#[allow(clippy::too_many_arguments)]
pub fn objective<'t>(
    tape: &'t Tape,
    g: &BoundMlp<'t>,
    c: &BoundMlp<'t>,
    source: &SourceBatch,
    target: &TargetBatch,
    weights: LossWeights,
    lambda_grl: f64,
    options: &ObjectiveOptions,
) -> Result<Objective<'t>> {
    weights.validate()?;

    let fs = extract(g, tape.constant(source.features.clone()))?;
    let ft = extract(g, tape.constant(target.features.clone()))?;

    let ps = classify(c, fs, None)?;
    let pt = classify(c, ft, None)?;
    let ce = ce_loss(ps, &source.labels)?;
    let mi = mi_loss(pt)?;

    let pseudo_labels = pt.var().value().argmax_rows();
    let kept: Vec<Option<usize>> = {
        let probs = pt.var().value();
        pseudo_labels
            .iter()
            .enumerate()
            .map(|(j, &y)| (probs.get(j, y) >= options.pseudo_label_threshold).then_some(y))
            .collect()
    };
    let pairs = build_pairs_masked(&source.labels, &kept);

    let ps_adv = classify(c, fs, Some(lambda_grl))?;
    let pt_adv = classify(c, ft, Some(lambda_grl))?;
    let (pld_intra, pld_inter) = pld_loss(ps_adv, pt_adv, &pairs)?;
    let nnd = nnd_loss(ps_adv, pt_adv, options.nnd_normalization)?;

    let mut total = ce;
    if weights.alpha != 0.0 {
        total = total.sub(pld_intra.add(pld_inter)?.scale(weights.alpha))?;
    }
    if weights.beta != 0.0 {
        total = total.sub(nnd.scale(weights.beta))?;
    }
    if weights.gamma != 0.0 {
        total = total.sub(mi.scale(weights.gamma))?;
    }

    let breakdown = LossBreakdown {
        ce: ce.item(),
        pld_intra: pld_intra.item(),
        pld_inter: pld_inter.item(),
        nnd: nnd.item(),
        mi: mi.item(),
        total: total.item(),
        alpha: weights.alpha,
        beta: weights.beta,
        gamma: weights.gamma,
        intra_pairs: pairs.intra_pairs.len(),
        inter_pairs: pairs.inter_pairs.len(),
    };

    Ok(Objective {
        total,
        terms: Terms {
            ce,
            pld_intra,
            pld_inter,
            nnd,
            mi,
        },
        breakdown,
        pairs,
        pseudo_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::model::{init_params, MlpSpec};

    fn batches() -> (SourceBatch, TargetBatch) {
        let xs = Tensor::from_rows(&[[0.5, -1.0], [1.0, 0.2], [-0.3, 0.8], [0.9, 0.9]]);
        let xt = Tensor::from_rows(&[[0.1, -0.4], [1.3, 0.0], [-0.6, 0.5]]);
        (
            SourceBatch {
                features: xs,
                labels: vec![0, 1, 2, 0],
            },
            TargetBatch { features: xt },
        )
    }

    #[test]
    fn zero_weights_reduce_to_cross_entropy() {
        let g = init_params(&MlpSpec::new(vec![2, 6, 4]).unwrap(), 1);
        let c = init_params(&MlpSpec::new(vec![4, 3]).unwrap(), 2);
        let (s, t) = batches();

        let tape = Tape::new();
        let (gb, cb) = (g.bind(&tape), c.bind(&tape));
        let obj = objective(&tape, &gb, &cb, &s, &t, LossWeights::new(0.0, 0.0, 0.0), 1.0, &Default::default())
            .unwrap();
        assert_eq!(obj.breakdown.total, obj.breakdown.ce);
        let grads = obj.total.backward().unwrap();

        let tape2 = Tape::new();
        let (gb2, cb2) = (g.bind(&tape2), c.bind(&tape2));
        let fs = extract(&gb2, tape2.constant(s.features.clone())).unwrap();
        let ce = ce_loss(classify(&cb2, fs, None).unwrap(), &s.labels).unwrap();
        let grads2 = ce.backward().unwrap();

        for (a, b) in gb.vars().iter().chain(&cb.vars()).zip(gb2.vars().iter().chain(&cb2.vars())) {
            assert_eq!(grads.wrt(*a), grads2.wrt(*b));
        }
    }

    #[test]
    fn breakdown_total_reconstructs() {
        let g = init_params(&MlpSpec::new(vec![2, 6, 4]).unwrap(), 3);
        let c = init_params(&MlpSpec::new(vec![4, 3]).unwrap(), 4);
        let (s, t) = batches();
        let tape = Tape::new();
        let (gb, cb) = (g.bind(&tape), c.bind(&tape));
        let obj = objective(&tape, &gb, &cb, &s, &t, LossWeights::new(0.7, 0.1, 0.1), 0.5, &Default::default())
            .unwrap();
        let b = &obj.breakdown;
        assert!((b.total - b.reconstructed_total()).abs() < 1e-12);
        assert_eq!(b.intra_pairs, 1);
        assert_eq!(obj.pseudo_labels.len(), 3);
    }

    #[test]
    fn threshold_drops_unconfident_targets() {
        let g = init_params(&MlpSpec::new(vec![2, 6, 4]).unwrap(), 3);
        let c = init_params(&MlpSpec::new(vec![4, 3]).unwrap(), 4);
        let (s, t) = batches();
        let tape = Tape::new();
        let (gb, cb) = (g.bind(&tape), c.bind(&tape));
        let opts = ObjectiveOptions {
            pseudo_label_threshold: 1.01,
            ..Default::default()
        };
        let obj = objective(&tape, &gb, &cb, &s, &t, LossWeights::new(1.0, 0.1, 0.1), 1.0, &opts).unwrap();
        assert!(obj.pairs.inter_pairs.is_empty());
        assert_eq!(obj.breakdown.pld_inter, 0.0);
    }

    #[test]
    fn rejects_negative_weights() {
        let g = init_params(&MlpSpec::new(vec![2, 4]).unwrap(), 3);
        let c = init_params(&MlpSpec::new(vec![4, 3]).unwrap(), 4);
        let (s, t) = batches();
        let tape = Tape::new();
        let (gb, cb) = (g.bind(&tape), c.bind(&tape));
        let res = objective(&tape, &gb, &cb, &s, &t, LossWeights::new(-1.0, 0.1, 0.1), 1.0, &Default::default());
        assert!(matches!(res, Err(Error::Config(_))));
    }
}

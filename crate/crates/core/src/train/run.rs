use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::eval::evaluate;
use super::optim::{sgd_step, OptimizerState, SgdParams};
use super::schedule::omega;
use crate::autodiff::{Tape, Tensor};
use crate::data::{next_batch, BatchRng, DomainDataset};
use crate::error::{Error, Result};
use crate::losses::{objective, LossBreakdown, LossWeights, ObjectiveOptions};
use crate::model::{init_params, Checkpoint};

/// One line of the metrics stream, emitted after every epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// One-based epoch number.
    pub epoch: usize,
    /// Optimizer steps completed so far.
    pub step: usize,
    /// `ω` at the last step of the epoch.
    pub omega: f64,
    /// Loss values are epoch means; pair counts are epoch totals.
    pub loss: LossBreakdown,
    pub source_acc: f64,
    pub target_acc: f64,
    /// Target confusion matrix, rows are true classes.
    pub confusion: Vec<Vec<u64>>,
    pub diag_stat_source: f64,
    pub diag_stat_target: f64,
    pub trace_source: f64,
    pub trace_target: f64,
    /// Fraction of the epoch's steps with at least one inter-domain pair.
    pub pair_coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRecord>,
    pub checkpoint: Checkpoint,
}

/// Seeds for the extractor, the classifier and the batch stream.
pub fn derived_seeds(seed: u64) -> (u64, u64, u64) {
    (
        seed.wrapping_add(0x1000),
        seed.wrapping_add(0x2000),
        seed.wrapping_add(0x3000),
    )
}

/// Loads the configured data and trains on it.
pub fn train_run(config: &TrainConfig) -> Result<RunOutput> {
    config.validate()?;
    let (source, target) = config.data.load(config.seed)?;
    train_on(config, &source, &target, |_| Ok(()))
}

/// Trains `config` on the given domains, calling `on_epoch` with each
/// record as soon as it is computed.
///
/// Every step draws a batch pair, builds the objective with
/// `α = ω·alpha0` and GRL factor `ω`, runs one backward pass and applies
/// one SGD update to the extractor and classifier together. The training
/// path only sees the target through its unlabeled view.
pub fn train_on(
    config: &TrainConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    mut on_epoch: impl FnMut(&MetricsRecord) -> Result<()>,
) -> Result<RunOutput> {
    let lr = config.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::Data(format!(
            "feature width differs: source {} vs target {}",
            source.dim(),
            target.dim()
        )));
    }
    let (g_spec, c_spec) = config.model.specs(source.dim(), source.num_classes())?;
    let (g_seed, c_seed, batch_seed) = derived_seeds(config.seed);
    let mut g = init_params(&g_spec, g_seed);
    let mut c = init_params(&c_spec, c_seed);
    let mut opt = OptimizerState::new(g.tensors().chain(c.tensors()));
    let hp = SgdParams {
        lr,
        momentum: config.optimizer.momentum,
        weight_decay: config.optimizer.weight_decay,
    };
    let l = &config.losses;
    let options = ObjectiveOptions {
        nnd_normalization: l.nnd_normalization,
        pseudo_label_threshold: l.pseudo_label_threshold,
    };
    let steps_per_epoch = config.steps_per_epoch(source.len());
    let total_steps = config.schedule.epochs * steps_per_epoch;
    let target_view = target.unlabeled();
    let mut rng = BatchRng::new(batch_seed);
    let mut metrics = Vec::with_capacity(config.schedule.epochs);

    for epoch in 0..config.schedule.epochs {
        let mut sum = LossBreakdown::default();
        let mut covered = 0usize;
        let mut w = 0.0;
        for s in 0..steps_per_epoch {
            let step = epoch * steps_per_epoch + s;
            w = omega(step, total_steps, config.schedule.ramp)?;
            let weights = LossWeights {
                alpha: if l.disable_pld { 0.0 } else { w * l.alpha0 },
                beta: if l.disable_nnd { 0.0 } else { l.beta },
                gamma: if l.disable_mi { 0.0 } else { l.gamma },
            };
            let (sb, tb, next) = next_batch(source, target_view, config.schedule.batch_size, rng)?;
            rng = next;

            let grads = {
                let tape = Tape::new();
                let (gb, cb) = (g.bind(&tape), c.bind(&tape));
                let obj = objective(&tape, &gb, &cb, &sb, &tb, weights, w, &options)?;
                if !obj.breakdown.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        step,
                        breakdown: Box::new(obj.breakdown),
                    });
                }
                accumulate(&mut sum, &obj.breakdown);
                covered += usize::from(!obj.pairs.inter_pairs.is_empty());
                let grads = obj.total.backward()?;
                gb.vars()
                    .iter()
                    .chain(cb.vars().iter())
                    .map(|v| grads.wrt(*v))
                    .collect::<Vec<Tensor>>()
            };
            sgd_step(g.tensors_mut().chain(c.tensors_mut()), &grads, &mut opt, &hp)?;
        }

        let es = evaluate(&g, &c, source)?;
        let et = evaluate(&g, &c, target)?;
        let record = MetricsRecord {
            epoch: epoch + 1,
            step: (epoch + 1) * steps_per_epoch,
            omega: w,
            loss: mean(sum, steps_per_epoch),
            source_acc: es.accuracy,
            target_acc: et.accuracy,
            confusion: et.confusion,
            diag_stat_source: es.diag_stat,
            diag_stat_target: et.diag_stat,
            trace_source: es.trace,
            trace_target: et.trace,
            pair_coverage: covered as f64 / steps_per_epoch as f64,
        };
        on_epoch(&record)?;
        metrics.push(record);
    }

    Ok(RunOutput {
        metrics,
        checkpoint: Checkpoint::new(config.seed, config.content_hash(), g, c),
    })
}

fn accumulate(sum: &mut LossBreakdown, b: &LossBreakdown) {
    sum.ce += b.ce;
    sum.pld_intra += b.pld_intra;
    sum.pld_inter += b.pld_inter;
    sum.nnd += b.nnd;
    sum.mi += b.mi;
    sum.total += b.total;
    sum.alpha += b.alpha;
    sum.beta += b.beta;
    sum.gamma += b.gamma;
    sum.intra_pairs += b.intra_pairs;
    sum.inter_pairs += b.inter_pairs;
}

fn mean(sum: LossBreakdown, n: usize) -> LossBreakdown {
    let k = n as f64;
    LossBreakdown {
        ce: sum.ce / k,
        pld_intra: sum.pld_intra / k,
        pld_inter: sum.pld_inter / k,
        nnd: sum.nnd / k,
        mi: sum.mi / k,
        total: sum.total / k,
        alpha: sum.alpha / k,
        beta: sum.beta / k,
        gamma: sum.gamma / k,
        ..sum
    }
}

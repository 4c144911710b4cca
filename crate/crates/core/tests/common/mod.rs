//! Independent scalar oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uda_core::autodiff::{Tape, Tensor};
use uda_core::data::{SourceBatch, TargetBatch};
use uda_core::losses::{ce_loss, mi_loss, nnd_loss, pld_loss, LossWeights, NndNormalization, PairSet};
use uda_core::model::{classify, extract, init_params, MlpSpec, ModelParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plain-loop Jensen–Shannon divergence of two distributions, natural log.
pub fn js_scalar(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            s += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            s += 0.5 * b * (b / m).ln();
        }
    }
    s
}

/// `H(mean row) − mean_j H(row_j)` by explicit loops.
pub fn mi_scalar(rows: &[Vec<f64>]) -> f64 {
    let b = rows.len() as f64;
    let k = rows[0].len();
    let mut h_bar = 0.0;
    for c in 0..k {
        let m: f64 = rows.iter().map(|r| r[c]).sum::<f64>() / b;
        if m > 0.0 {
            h_bar -= m * m.ln();
        }
    }
    let mut h_mean = 0.0;
    for r in rows {
        for &v in r {
            if v > 0.0 {
                h_mean -= v * v.ln();
            }
        }
    }
    h_bar - h_mean / b
}

/// Row-stochastic `b×k` matrix from softmax of logits in `[-scale, scale]`.
pub fn random_probs(r: &mut impl Rng, b: usize, k: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..b)
        .map(|_| {
            let z: Vec<f64> = (0..k).map(|_| r.random_range(-scale..=scale)).collect();
            let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn to_tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(rows)
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_batches(r: &mut impl Rng, n: usize, d: usize, k: usize) -> (SourceBatch, TargetBatch) {
    let source = SourceBatch {
        features: random_matrix(r, n, d),
        labels: (0..n).map(|i| i % k).collect(),
    };
    let target = TargetBatch {
        features: random_matrix(r, n, d),
    };
    (source, target)
}

/// `(ce − γ·mi, α·(pld_intra + pld_inter) + β·nnd)` at `(g, c)` on a
/// forward-only tape, with the pair lists held fixed.
pub fn split_objective(
    g: &ModelParams,
    c: &ModelParams,
    s: &SourceBatch,
    t: &TargetBatch,
    pairs: &PairSet,
    w: LossWeights,
) -> (f64, f64) {
    let tape = Tape::new();
    let (gb, cb) = (g.bind_frozen(&tape), c.bind_frozen(&tape));
    let fs = extract(&gb, tape.constant(s.features.clone())).unwrap();
    let ft = extract(&gb, tape.constant(t.features.clone())).unwrap();
    let ps = classify(&cb, fs, None).unwrap();
    let pt = classify(&cb, ft, None).unwrap();
    let ce = ce_loss(ps, &s.labels).unwrap().item();
    let mi = mi_loss(pt).unwrap().item();
    let (intra, inter) = pld_loss(ps, pt, pairs).unwrap();
    let nnd = nnd_loss(ps, pt, NndNormalization::PerSample).unwrap().item();
    (
        ce - w.gamma * mi,
        w.alpha * (intra.item() + inter.item()) + w.beta * nnd,
    )
}

/// Xavier weights plus biases drawn from `[-0.5, 0.5]`, so no two logits
/// tie by construction.
pub fn random_params(widths: Vec<usize>, seed: u64) -> ModelParams {
    let mut p = init_params(&MlpSpec::new(widths).unwrap(), seed);
    let mut r = rng(seed ^ 0xb1a5);
    for layer in &mut p.layers {
        layer.bias.data_mut().iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
    }
    p
}

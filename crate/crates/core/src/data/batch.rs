use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DomainDataset, UnlabeledView};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SourceBatch {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetBatch {
    pub features: Tensor,
}

/// Counter-based sampling state: batch `n` of a run is a pure function of
/// `(seed, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRng {
    pub seed: u64,
    pub counter: u64,
}

impl BatchRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    fn stream(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.counter);
        rng
    }

    pub fn next(self) -> Self {
        Self {
            counter: self.counter.wrapping_add(1),
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchIndices {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// Row indices of the next batch pair.
///
/// Source rows are drawn class-balanced: slot `s` of the batch goes to class
/// `(counter + s) mod K` over the `K` classes present, and each class fills
/// its slots without replacement while it has rows left. Target rows are a
/// uniform sample without replacement.
pub fn next_batch_indices(
    source_labels: &[usize],
    target_len: usize,
    batch_size: usize,
    rng: BatchRng,
) -> Result<(BatchIndices, BatchRng)> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if batch_size > source_labels.len() || batch_size > target_len {
        return Err(Error::Config(format!(
            "batch_size {batch_size} exceeds dataset size ({} source, {target_len} target)",
            source_labels.len()
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in source_labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let classes: Vec<&Vec<usize>> = by_class.values().collect();
    let k = classes.len();
    let start = (rng.counter % k as u64) as usize;
    let slot_class = |s: usize| (start + s) % k;

    let mut counts = vec![0usize; k];
    (0..batch_size).for_each(|s| counts[slot_class(s)] += 1);

    let mut r = rng.stream();
    let mut draws: Vec<std::vec::IntoIter<usize>> = classes
        .iter()
        .zip(&counts)
        .map(|(members, &want)| {
            let picked: Vec<usize> = if want <= members.len() {
                index::sample(&mut r, members.len(), want).into_iter().map(|j| members[j]).collect()
            } else {
                (0..want).map(|_| members[r.random_range(0..members.len())]).collect()
            };
            picked.into_iter()
        })
        .collect();
    let source = (0..batch_size)
        .map(|s| draws[slot_class(s)].next().expect("slot counts match draws"))
        .collect();
    let target = index::sample(&mut r, target_len, batch_size).into_vec();

    Ok((BatchIndices { source, target }, rng.next()))
}

/// Draws the next source/target batch pair and returns the advanced state.
pub fn next_batch(
    source: &DomainDataset,
    target: UnlabeledView<'_>,
    batch_size: usize,
    rng: BatchRng,
) -> Result<(SourceBatch, TargetBatch, BatchRng)> {
    if source.dim() != target.features().cols() {
        return Err(Error::Data(format!(
            "feature width differs: source {} vs target {}",
            source.dim(),
            target.features().cols()
        )));
    }
    let (idx, next) = next_batch_indices(source.labels(), target.len(), batch_size, rng)?;
    let labels = idx.source.iter().map(|&i| source.labels()[i]).collect();
    Ok((
        SourceBatch {
            features: source.features().select_rows(&idx.source),
            labels,
        },
        TargetBatch {
            features: target.features().select_rows(&idx.target),
        },
        next,
    ))
}

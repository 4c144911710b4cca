//! Two-domain datasets: synthetic shift generators, CSV ingestion and
//! deterministic mini-batch sampling.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

mod batch;
mod csv_io;
mod synth;

pub use batch::{next_batch, next_batch_indices, BatchIndices, BatchRng, SourceBatch, TargetBatch};
pub use csv_io::{load_csv, read_csv, write_csv, CsvSchema};
pub use synth::{gen_gaussian_mixture, gen_two_moons, generate, GeneratorKind, ShiftSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

/// Features and labels of one domain.
///
/// Target labels are only reachable through [`DomainDataset::labels`], which
/// evaluation uses; training sees targets through [`UnlabeledView`].
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    features: Tensor,
    labels: Vec<usize>,
    domain: Domain,
    num_classes: usize,
}

impl DomainDataset {
    pub fn new(features: Tensor, labels: Vec<usize>, domain: Domain, num_classes: usize) -> Result<Self> {
        let (n, _) = features.expect_matrix("dataset features")?;
        if labels.len() != n {
            return Err(Error::Data(format!("{} labels for {n} feature rows", labels.len())));
        }
        if !features.is_finite() {
            return Err(Error::Data(format!("{} features contain NaN or infinity", domain.as_str())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Data(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self {
            features,
            labels,
            domain,
            num_classes,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Label-free view handed to the training loop.
    pub fn unlabeled(&self) -> UnlabeledView<'_> {
        UnlabeledView {
            features: &self.features,
        }
    }
}

/// Features of a dataset with no path to its labels.
#[derive(Debug, Clone, Copy)]
pub struct UnlabeledView<'a> {
    features: &'a Tensor,
}

impl UnlabeledView<'_> {
    pub fn features(&self) -> &Tensor {
        self.features
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

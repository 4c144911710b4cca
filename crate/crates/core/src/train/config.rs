use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schedule::Ramp;
use crate::data::{generate, load_csv, CsvSchema, DomainDataset, GeneratorKind, ShiftSpec};
use crate::error::{Error, Result};
use crate::losses::NndNormalization;
use crate::model::MlpSpec;

/// Everything a run depends on. Two runs with equal configs produce
/// bit-identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub losses: LossConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub data: DataConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Extractor widths after the input layer; the last entry is the
    /// feature width.
    pub extractor: Vec<usize>,
    /// Hidden widths of the classifier between features and classes.
    pub classifier_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            extractor: vec![64, 32],
            classifier_hidden: Vec::new(),
        }
    }
}

impl ModelConfig {
    pub fn specs(&self, input_width: usize, classes: usize) -> Result<(MlpSpec, MlpSpec)> {
        let feature_width = *self
            .extractor
            .last()
            .ok_or_else(|| Error::Config("model.extractor needs at least one width".into()))?;
        let g: Vec<usize> = std::iter::once(input_width).chain(self.extractor.iter().copied()).collect();
        let c: Vec<usize> = std::iter::once(feature_width)
            .chain(self.classifier_hidden.iter().copied())
            .chain(std::iter::once(classes))
            .collect();
        Ok((MlpSpec::new(g)?, MlpSpec::new(c)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Peak PLD weight; the weight at step `t` is `ω(t)·alpha0`.
    pub alpha0: f64,
    pub beta: f64,
    pub gamma: f64,
    pub disable_pld: bool,
    pub disable_nnd: bool,
    pub disable_mi: bool,
    pub nnd_normalization: NndNormalization,
    pub pseudo_label_threshold: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            beta: 0.1,
            gamma: 0.1,
            disable_pld: false,
            disable_nnd: false,
            disable_mi: false,
            nnd_normalization: NndNormalization::PerSample,
            pseudo_label_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Required; there is no default learning rate.
    pub lr: Option<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: None,
            momentum: 0.9,
            weight_decay: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub ramp: Ramp,
    pub epochs: usize,
    /// `None` means one pass over the source set: `ceil(n_source / batch_size)`.
    pub steps_per_epoch: Option<usize>,
    pub batch_size: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            ramp: Ramp::Sigmoid,
            epochs: 200,
            steps_per_epoch: None,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    TwoMoons,
    GaussianMixture,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub n_per_domain: usize,
    pub classes: usize,
    pub rotation_deg: f64,
    pub affine: Option<[[f64; 2]; 2]>,
    pub translation: [f64; 2],
    pub noise_std: f64,
    pub radius: f64,
    /// Generator seed; `None` uses the run seed.
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
    pub csv: CsvSchema,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = ShiftSpec::default();
        Self {
            source: DataSource::TwoMoons,
            n_per_domain: s.n_per_domain,
            classes: s.classes,
            rotation_deg: s.rotation_deg,
            affine: s.affine,
            translation: s.translation,
            noise_std: s.noise_std,
            radius: s.radius,
            seed: None,
            path: None,
            csv: CsvSchema::default(),
        }
    }
}

impl DataConfig {
    /// Generator description for synthetic sources; `None` for CSV.
    pub fn shift_spec(&self, run_seed: u64) -> Option<ShiftSpec> {
        let generator = match self.source {
            DataSource::TwoMoons => GeneratorKind::TwoMoons,
            DataSource::GaussianMixture => GeneratorKind::GaussianMixture,
            DataSource::Csv => return None,
        };
        Some(ShiftSpec {
            generator,
            n_per_domain: self.n_per_domain,
            classes: self.classes,
            rotation_deg: self.rotation_deg,
            affine: self.affine,
            translation: self.translation,
            noise_std: self.noise_std,
            radius: self.radius,
            seed: self.seed.unwrap_or(run_seed),
        })
    }

    pub fn load(&self, run_seed: u64) -> Result<(DomainDataset, DomainDataset)> {
        match self.shift_spec(run_seed) {
            Some(spec) => generate(&spec),
            None => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("data.path is required when data.source = \"csv\"".into()))?;
                load_csv(path, &self.csv)
            }
        }
    }
}

impl TrainConfig {
    /// Checks every invariant; returns the learning rate.
    pub fn validate(&self) -> Result<f64> {
        let lr = self
            .optimizer
            .lr
            .ok_or_else(|| Error::Config("missing required key optimizer.lr".into()))?;
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Config(format!("optimizer.lr must be > 0, got {lr}")));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.momentum) {
            return Err(Error::Config(format!("optimizer.momentum must lie in [0, 1), got {}", o.momentum)));
        }
        if !(o.weight_decay >= 0.0) || !o.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "optimizer.weight_decay must be >= 0, got {}",
                o.weight_decay
            )));
        }
        let l = &self.losses;
        for (key, w) in [("losses.alpha0", l.alpha0), ("losses.beta", l.beta), ("losses.gamma", l.gamma)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("{key} must be finite and >= 0, got {w}")));
            }
        }
        if !(0.0..=1.0).contains(&l.pseudo_label_threshold) {
            return Err(Error::Config(format!(
                "losses.pseudo_label_threshold must lie in [0, 1], got {}",
                l.pseudo_label_threshold
            )));
        }
        let s = &self.schedule;
        if s.epochs == 0 {
            return Err(Error::Config("schedule.epochs must be >= 1".into()));
        }
        if s.batch_size == 0 {
            return Err(Error::Config("schedule.batch_size must be >= 1".into()));
        }
        if s.steps_per_epoch == Some(0) {
            return Err(Error::Config("schedule.steps_per_epoch must be >= 1".into()));
        }
        if self.model.extractor.is_empty() || self.model.extractor.contains(&0) {
            return Err(Error::Config("model.extractor widths must be >= 1 and non-empty".into()));
        }
        if self.model.classifier_hidden.contains(&0) {
            return Err(Error::Config("model.classifier_hidden widths must be >= 1".into()));
        }
        if let Some(spec) = self.data.shift_spec(self.seed) {
            spec.validate()?;
        }
        Ok(lr)
    }

    pub fn steps_per_epoch(&self, n_source: usize) -> usize {
        self.schedule
            .steps_per_epoch
            .unwrap_or_else(|| n_source.div_ceil(self.schedule.batch_size).max(1))
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The same config with the adaptation terms switched off.
    pub fn source_only(&self) -> Self {
        let mut c = self.clone();
        c.losses.disable_pld = true;
        c.losses.disable_nnd = true;
        c.losses.disable_mi = true;
        c
    }
}

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::run::{train_on, MetricsRecord};
use crate::data::DomainDataset;
use crate::error::Result;

pub const ABLATION_VARIANTS: [&str; 5] = ["full", "w/o pld", "w/o nnd", "w/o mi", "source-only"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// Record of the final epoch.
    pub metrics: MetricsRecord,
}

/// The five variant configs, all sharing the base seed.
pub fn ablation_configs(base: &TrainConfig) -> Vec<(&'static str, TrainConfig)> {
    ABLATION_VARIANTS
        .iter()
        .map(|&name| {
            let mut c = base.clone();
            let l = &mut c.losses;
            let (pld, nnd, mi) = match name {
                "full" => (false, false, false),
                "w/o pld" => (true, false, false),
                "w/o nnd" => (false, true, false),
                "w/o mi" => (false, false, true),
                _ => (true, true, true),
            };
            l.disable_pld = pld;
            l.disable_nnd = nnd;
            l.disable_mi = mi;
            (name, c)
        })
        .collect()
}

pub fn ablate(base: &TrainConfig, source: &DomainDataset, target: &DomainDataset) -> Result<Vec<AblationRow>> {
    ablation_configs(base)
        .into_iter()
        .map(|(name, cfg)| {
            let out = train_on(&cfg, source, target, |_| Ok(()))?;
            let metrics = out.metrics.last().cloned().expect("epochs >= 1");
            Ok(AblationRow {
                variant: name.to_string(),
                metrics,
            })
        })
        .collect()
}

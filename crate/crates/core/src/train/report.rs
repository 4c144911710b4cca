use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ablation::AblationRow;
use super::run::MetricsRecord;
use crate::data::DomainDataset;
use crate::error::Result;
use crate::model::{features, predict, ModelParams};

/// Provenance stamped on every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub seed: u64,
    pub config_hash: String,
}

impl RunHeader {
    pub fn comment(&self) -> String {
        format!("seed={}, config_hash={}", self.seed, self.config_hash)
    }
}

/// JSON-lines metrics stream. The first line is the [`RunHeader`]; each
/// following line is one [`MetricsRecord`].
pub struct MetricsWriter<W: Write> {
    out: W,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W, header: &RunHeader) -> Result<Self> {
        serde_json::to_writer(&mut out, header)?;
        writeln!(out)?;
        Ok(Self { out })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        writeln!(self.out)?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_ablation_csv<W: Write>(mut out: W, header: &RunHeader, rows: &[AblationRow]) -> Result<()> {
    writeln!(out, "# {}", header.comment())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "variant",
        "source_acc",
        "target_acc",
        "diag_stat_source",
        "diag_stat_target",
        "trace_source",
        "trace_target",
        "final_total",
    ])?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.variant.clone(),
            m.source_acc.to_string(),
            m.target_acc.to_string(),
            m.diag_stat_source.to_string(),
            m.diag_stat_target.to_string(),
            m.trace_source.to_string(),
            m.trace_target.to_string(),
            m.loss.total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Extractor features of both domains with columns
/// `f0..f{h-1},domain,label,prediction`.
pub fn write_embeddings_csv<W: Write>(
    mut out: W,
    header: &RunHeader,
    g: &ModelParams,
    c: &ModelParams,
    domains: &[&DomainDataset],
) -> Result<()> {
    writeln!(out, "# {}", header.comment())?;
    let mut w = csv::Writer::from_writer(out);
    let width = g.spec.output_width();
    let mut cols: Vec<String> = (0..width).map(|j| format!("f{j}")).collect();
    cols.extend(["domain", "label", "prediction"].map(String::from));
    w.write_record(&cols)?;
    for ds in domains {
        let f = features(g, ds.features())?;
        let pred = predict(g, c, ds.features())?.argmax_rows();
        for (i, (&y, p)) in ds.labels().iter().zip(pred).enumerate() {
            let mut row: Vec<String> = f.row(i).iter().map(|v| v.to_string()).collect();
            row.push(ds.domain().as_str().into());
            row.push(y.to_string());
            row.push(p.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

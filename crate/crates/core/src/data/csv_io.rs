use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Domain, DomainDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Column layout of a two-domain CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    /// Feature columns in order; `None` takes every column other than the
    /// label and domain columns.
    pub feature_columns: Option<Vec<String>>,
    pub label_column: String,
    pub domain_column: String,
    pub source_tag: String,
    pub target_tag: String,
    /// Standardize every feature with the source mean and standard deviation.
    pub standardize: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            feature_columns: None,
            label_column: "label".into(),
            domain_column: "domain".into(),
            source_tag: "source".into(),
            target_tag: "target".into(),
            standardize: true,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(DomainDataset, DomainDataset)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, schema)
}

/// Parses a two-domain table. Lines starting with `#` are skipped. Labels
/// must be non-negative integers, and every target label must also occur in
/// the source domain.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<(DomainDataset, DomainDataset)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
    };
    let label_col = column(&schema.label_column)?;
    let domain_col = column(&schema.domain_column)?;
    let feature_cols: Vec<(usize, String)> = match &schema.feature_columns {
        Some(names) => names.iter().map(|n| Ok((column(n)?, n.clone()))).collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label_col && i != domain_col)
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Data("no feature columns".into()));
    }
    let d = feature_cols.len();

    let (mut xs, mut ys, mut xt, mut yt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let (xbuf, ybuf) = match field(domain_col) {
            t if t == schema.source_tag => (&mut xs, &mut ys),
            t if t == schema.target_tag => (&mut xt, &mut yt),
            other => {
                return Err(Error::Data(format!(
                    "line {line}: unknown domain '{other}' in column '{}'",
                    schema.domain_column
                )))
            }
        };
        for (i, name) in &feature_cols {
            let raw = field(*i);
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Data(format!("line {line}: column '{name}': cannot parse '{raw}' as a number")))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("line {line}: column '{name}': non-finite value '{raw}'")));
            }
            xbuf.push(v);
        }
        let raw = field(label_col);
        let y: usize = raw.parse().map_err(|_| {
            Error::Data(format!(
                "line {line}: column '{}': label '{raw}' is not a non-negative integer",
                schema.label_column
            ))
        })?;
        ybuf.push(y);
    }
    if ys.is_empty() || yt.is_empty() {
        return Err(Error::Data(format!(
            "need rows for both domains, found {} source and {} target",
            ys.len(),
            yt.len()
        )));
    }
    let seen: BTreeSet<usize> = ys.iter().copied().collect();
    if let Some(y) = yt.iter().find(|y| !seen.contains(y)) {
        return Err(Error::Data(format!("target label {y} never occurs in the source domain")));
    }
    let num_classes = seen.last().map_or(0, |m| m + 1);

    let (ns, nt) = (ys.len(), yt.len());
    let mut source = Tensor::matrix(ns, d, xs)?;
    let mut target = Tensor::matrix(nt, d, xt)?;
    if schema.standardize {
        let (mean, std) = column_stats(&source);
        standardize(&mut source, &mean, &std);
        standardize(&mut target, &mean, &std);
    }
    Ok((
        DomainDataset::new(source, ys, Domain::Source, num_classes)?,
        DomainDataset::new(target, yt, Domain::Target, num_classes)?,
    ))
}

/// Column means and population standard deviations; a constant column gets
/// a deviation of one.
fn column_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows() as f64, x.cols());
    let mean: Vec<f64> = (0..d)
        .map(|j| (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n)
        .collect();
    let std = (0..d)
        .map(|j| {
            let var = (0..x.rows()).map(|i| (x.get(i, j) - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn standardize(x: &mut Tensor, mean: &[f64], std: &[f64]) {
    let d = mean.len();
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        let j = i % d;
        *v = (*v - mean[j]) / std[j];
    }
}

/// Writes both domains with columns `x0..x{d-1},label,domain`, preceded by
/// one `# ` line per entry of `comments`.
pub fn write_csv<W: Write>(
    mut writer: W,
    source: &DomainDataset,
    target: &DomainDataset,
    comments: &[String],
) -> Result<()> {
    if source.dim() != target.dim() {
        return Err(Error::Data(format!(
            "feature width differs: source {} vs target {}",
            source.dim(),
            target.dim()
        )));
    }
    for c in comments {
        writeln!(writer, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..source.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    header.push("domain".into());
    w.write_record(&header)?;
    for ds in [source, target] {
        for (i, &y) in ds.labels().iter().enumerate() {
            let mut row: Vec<String> = ds.features().row(i).iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            row.push(ds.domain().as_str().to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

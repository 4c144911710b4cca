//! Config resolution: file, then `--set` overrides, then defaults and validation.

use std::path::Path;

use toml::{Table, Value};
use uda_core::train::TrainConfig;
use uda_core::{Error, Result};

/// One `dotted.key=value` pair. The value is read as a TOML literal; if
/// that fails it is taken as a bare string, so `data.source=csv` works.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl std::str::FromStr for Override {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form key=value")))?;
        let key = key.trim();
        let path: Vec<String> = key.split('.').map(|p| p.trim().to_string()).collect();
        if path.iter().any(String::is_empty) {
            return Err(Error::Config(format!("override key `{key}` has an empty segment")));
        }
        let raw = raw.trim();
        let value = toml::from_str::<Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        Ok(Self { path, value })
    }
}

impl Override {
    fn apply(&self, root: &mut Table) -> Result<()> {
        let (last, parents) = self.path.split_last().expect("non-empty path");
        let mut table = root;
        for (i, seg) in parents.iter().enumerate() {
            let entry = table
                .entry(seg.clone())
                .or_insert_with(|| Value::Table(Table::new()));
            table = entry.as_table_mut().ok_or_else(|| {
                Error::Config(format!("`{}` is not a table", self.path[..=i].join(".")))
            })?;
        }
        table.insert(last.clone(), self.value.clone());
        Ok(())
    }
}

/// Parses `text`, applies `overrides` in order, fills defaults and
/// validates. Unknown keys are errors naming the full dotted key.
pub fn resolve_str(text: &str, overrides: &[Override]) -> Result<TrainConfig> {
    let mut table: Table = toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    for o in overrides {
        o.apply(&mut table)?;
    }
    let config: TrainConfig = serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.message().to_string();
        match unknown_field(&msg) {
            Some(_) => Error::Config(format!("unknown key `{path}`")),
            None => Error::Config(format!("`{path}`: {msg}")),
        }
    })?;
    config.validate()?;
    Ok(config)
}

/// [`resolve_str`] on a file; `None` starts from an empty document.
pub fn resolve_config(path: Option<&Path>, overrides: &[Override]) -> Result<TrainConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    resolve_str(&text, overrides)
}

/// The resolved config as TOML, headed by a seed/hash comment. Feeding it
/// back through [`resolve_str`] gives an equal config.
pub fn snapshot(config: &TrainConfig) -> Result<String> {
    let body = toml::to_string(config).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    Ok(format!(
        "# seed={}, config_hash={}\n{body}",
        config.seed,
        config.content_hash()
    ))
}

fn unknown_field(msg: &str) -> Option<&str> {
    let rest = msg.strip_prefix("unknown field `")?;
    rest.split('`').next()
}

use std::path::{Path, PathBuf};

use pairspec::CONVENTIONS;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Format;
use crate::error::{CliError, CliResult};

/// SHA-256 of the canonical JSON of the resolved run description. Object
/// keys are sorted, so equal configurations hash equally.
pub fn config_digest(resolved: &Value) -> String {
    hex::encode(Sha256::digest(resolved.to_string().as_bytes()))
}

/// Writes result files under one directory, each tagged with the config
/// digest and the conventions version.
pub struct Output {
    dir: PathBuf,
    format: Format,
    digest: String,
}

impl Output {
    pub fn new(dir: &Path, format: Format, resolved: &Value) -> CliResult<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), format, digest: config_digest(resolved) })
    }

    fn write(&mut self, name: String, body: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// A table given as CSV text; becomes `stem.csv` or, with the JSON
    /// format, `stem.json` holding column names and typed rows.
    pub fn table(&mut self, stem: &str, csv_text: &str) -> CliResult<()> {
        match self.format {
            Format::Csv => {
                let body = format!("# digest={} conventions={}\n{csv_text}", self.digest, CONVENTIONS);
                self.write(format!("{stem}.csv"), &body)
            }
            Format::Json => {
                let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
                let columns: Vec<String> = reader
                    .headers()
                    .map_err(|e| CliError::Invalid(e.to_string()))?
                    .iter()
                    .map(str::to_string)
                    .collect();
                let mut rows = Vec::new();
                for record in reader.records() {
                    let record = record.map_err(|e| CliError::Invalid(e.to_string()))?;
                    rows.push(record.iter().map(cell).collect::<Vec<Value>>());
                }
                let doc = json!({
                    "digest": self.digest,
                    "conventions": CONVENTIONS,
                    "columns": columns,
                    "rows": rows,
                });
                self.write(format!("{stem}.json"), &pretty(&doc)?)
            }
        }
    }

    /// Reports are always JSON.
    pub fn report<S: Serialize>(&mut self, stem: &str, report: &S) -> CliResult<()> {
        let doc = json!({
            "digest": self.digest,
            "conventions": CONVENTIONS,
            "report": serde_json::to_value(report).map_err(|e| CliError::Invalid(e.to_string()))?,
        });
        self.write(format!("{stem}.json"), &pretty(&doc)?)
    }
}

fn pretty(v: &Value) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn cell(s: &str) -> Value {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        _ => Value::String(s.to_string()),
    }
}

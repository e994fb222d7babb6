//! Output directory ownership and file writers. Every file carries the
//! resolved config and a SHA-256 of its payload.

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;

const LOCK: &str = ".stellar-match.lock";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Exclusive handle on an output directory; the lockfile goes away on drop.
pub struct OutputDir {
    dir: PathBuf,
    config: Value,
    format: Format,
}

impl OutputDir {
    pub fn acquire(config: &RunConfig) -> Result<Self, CliError> {
        let dir = config.output.dir.clone();
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        let lock = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Io(format!(
                    "{} is in use by another run (remove {} if it is stale)",
                    dir.display(),
                    lock.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        let format = config.output.format;
        let config = serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(Self { dir, config, format })
    }

    fn create(&self, name: &str) -> Result<File, CliError> {
        let path = self.dir.join(name);
        File::create(&path).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    /// A table produced as CSV; written as CSV with `#` header lines, or as
    /// JSON `{columns, rows}` when the run asks for JSON.
    pub fn table(&mut self, stem: &str, csv: &[u8]) -> Result<String, CliError> {
        match self.format {
            Format::Csv => {
                let hash = sha256_hex(csv);
                let name = format!("{stem}.csv");
                let mut f = self.create(&name)?;
                writeln!(f, "# config: {}", self.config)?;
                writeln!(f, "# sha256: {hash}")?;
                f.write_all(csv)?;
                Ok(name)
            }
            Format::Json => self.json(stem, &csv_to_json(csv)),
        }
    }

    pub fn json<T: Serialize>(&mut self, stem: &str, result: &T) -> Result<String, CliError> {
        let result = serde_json::to_value(result).map_err(|e| CliError::Io(e.to_string()))?;
        let hash = sha256_hex(result.to_string().as_bytes());
        let doc = json!({ "config": self.config, "sha256": hash, "result": result });
        let name = format!("{stem}.json");
        let mut f = self.create(&name)?;
        serde_json::to_writer_pretty(&mut f, &doc).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(f)?;
        Ok(name)
    }

    /// JSON lines: a header object with config and hash, then one record per line.
    pub fn jsonl<T: Serialize>(&mut self, stem: &str, records: &[T]) -> Result<String, CliError> {
        let mut body = String::new();
        for r in records {
            body.push_str(&serde_json::to_string(r).map_err(|e| CliError::Io(e.to_string()))?);
            body.push('\n');
        }
        let header = json!({ "config": self.config, "sha256": sha256_hex(body.as_bytes()) });
        let name = format!("{stem}.jsonl");
        let mut f = self.create(&name)?;
        writeln!(f, "{header}")?;
        f.write_all(body.as_bytes())?;
        Ok(name)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.dir.join(LOCK));
    }
}

/// Numeric CSV (header row, then numbers or empty cells) to `{columns, rows}`.
fn csv_to_json(csv: &[u8]) -> Value {
    let text = String::from_utf8_lossy(csv);
    let mut lines = text.lines();
    let columns: Vec<&str> = lines.next().map(|h| h.split(',').collect()).unwrap_or_default();
    let rows: Vec<Vec<Value>> = lines
        .map(|l| {
            l.split(',')
                .map(|cell| cell.parse::<f64>().map_or(Value::Null, |v| json!(v)))
                .collect()
        })
        .collect();
    json!({ "columns": columns, "rows": rows })
}

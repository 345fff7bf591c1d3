//! CSV and JSON emission.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Format;
use crate::CliError;

/// Header information written unless `--no-meta` is set.
#[derive(Debug, Clone)]
pub struct Meta {
    pub command: &'static str,
    pub seed: u64,
    pub generated_at_unix: u64,
}

impl Meta {
    pub fn now(command: &'static str, seed: u64) -> Self {
        let generated_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { command, seed, generated_at_unix }
    }

    fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "generated_at_unix": self.generated_at_unix,
        })
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes `rows` as CSV (header always present) or as a JSON object `{"rows": [...]}`.
pub fn write_rows<T: Serialize>(out: &mut dyn Write, format: Format, rows: &[T], header: &[&str], meta: Option<&Meta>) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            if let Some(m) = meta {
                writeln!(
                    out,
                    "# fas {} v{} seed={} generated_at_unix={}",
                    m.command,
                    env!("CARGO_PKG_VERSION"),
                    m.seed,
                    m.generated_at_unix
                )
                .map_err(io)?;
            }
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(header).map_err(io)?;
            for r in rows {
                w.serialize(r).map_err(io)?;
            }
            w.flush().map_err(io)
        }
        Format::Json => write_json(out, &json!({ "rows": rows }), meta),
    }
}

/// Writes a JSON document; the `meta` object is added at the top level.
pub fn write_json<T: Serialize>(out: &mut dyn Write, value: &T, meta: Option<&Meta>) -> Result<(), CliError> {
    let mut v = serde_json::to_value(value).map_err(io)?;
    if let (Some(m), Value::Object(map)) = (meta, &mut v) {
        map.insert("meta".into(), m.to_json());
    }
    serde_json::to_writer_pretty(&mut *out, &v).map_err(io)?;
    writeln!(out).map_err(io)
}

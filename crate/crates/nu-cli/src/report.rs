//! Deterministic run reports: command echo, content digests of every input
//! file, the payload, and warnings. All numbers render with 17 significant
//! digits; wall time goes to stderr so stdout is byte-identical across
//! reruns.

use nuwass::io::render_json;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::path::Path;

pub struct Report {
    command: String,
    inputs: Map<String, Value>,
    warnings: Vec<String>,
    output: Value,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Report {
            command: command.into(),
            inputs: Map::new(),
            warnings: Vec::new(),
            output: Value::Null,
        }
    }

    /// Records the SHA-256 content digest of an input file.
    pub fn digest_input(&mut self, path: &Path) {
        let digest = std::fs::read(path)
            .map(|bytes| {
                let mut h = Sha256::new();
                h.update(&bytes);
                format!("{:x}", h.finalize())
            })
            .unwrap_or_else(|e| format!("unreadable: {e}"));
        self.inputs.insert(path.display().to_string(), Value::String(digest));
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn set_output(&mut self, output: Value) {
        self.output = output;
    }

    /// Renders the full report (deterministic: no timing inside).
    pub fn render(&self) -> String {
        let v = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "inputs": Value::Object(self.inputs.clone()),
            "warnings": self.warnings,
            "output": self.output,
        });
        let mut out = String::new();
        render_json(&v, &mut out);
        out.push('\n');
        out
    }
}

/// Renders one CSV cell per value with full float precision.
pub fn csv_line(cells: &[Value]) -> String {
    let mut parts = Vec::with_capacity(cells.len());
    for c in cells {
        match c {
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    parts.push(i.to_string());
                } else {
                    parts.push(nuwass::io::fmt_f64(n.as_f64().unwrap_or(f64::NAN)));
                }
            }
            Value::String(s) => parts.push(s.clone()),
            other => parts.push(other.to_string()),
        }
    }
    parts.join(",")
}

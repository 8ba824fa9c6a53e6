//! Deterministic table emission: 9-significant-digit float formatting and
//! CSV/JSON writers with an embedded config metadata block.

use std::io::Write;
use std::path::Path;

use crate::config::OutputFormat;
use crate::error::{Error, Result};

/// Format with 9 significant digits, shortest form: plain decimal for
/// moderate exponents, `d.dddde<exp>` otherwise. Locale-independent.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let s = format!("{:.8e}", x);
    let (mant, exp) = s.split_once('e').expect("exponential form");
    let exp: i32 = exp.parse().expect("numeric exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let trimmed = digits.trim_end_matches('0');
    let trimmed = if trimmed.is_empty() { "0" } else { trimmed };
    let sign = if neg { "-" } else { "" };
    if (-4..=8).contains(&exp) {
        if exp >= 0 {
            let int_len = exp as usize + 1;
            if trimmed.len() <= int_len {
                format!("{sign}{trimmed}{}", "0".repeat(int_len - trimmed.len()))
            } else {
                format!("{sign}{}.{}", &trimmed[..int_len], &trimmed[int_len..])
            }
        } else {
            format!("{sign}0.{}{}", "0".repeat((-exp - 1) as usize), trimmed)
        }
    } else if trimmed.len() == 1 {
        format!("{sign}{trimmed}e{exp}")
    } else {
        format!("{sign}{}.{}e{exp}", &trimmed[..1], &trimmed[1..])
    }
}

/// One output table: fixed header, string cells, plus the config text that
/// produced it. CSV embeds the config as `# `-prefixed comment lines; JSON
/// carries it in a `config` field next to the row objects.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, meta: &str, trailer: Option<&str>) -> String {
        let mut out = String::new();
        for line in meta.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        if let Some(t) = trailer {
            out.push_str("# ");
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, meta: &str, trailer: Option<&str>) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                serde_json::Value::Object(
                    self.header
                        .iter()
                        .zip(row)
                        .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                        .collect(),
                )
            })
            .collect();
        let mut doc = serde_json::Map::new();
        doc.insert("config".into(), serde_json::Value::String(meta.into()));
        if let Some(t) = trailer {
            doc.insert("abort".into(), serde_json::Value::String(t.into()));
        }
        doc.insert("rows".into(), serde_json::Value::Array(rows));
        let mut text = serde_json::to_string_pretty(&doc).expect("json serializes");
        text.push('\n');
        text
    }

    /// Write as `<stem>.csv` or `<stem>.json` under `dir`; returns the path.
    pub fn write(
        &self,
        dir: &Path,
        stem: &str,
        format: OutputFormat,
        meta: &str,
        trailer: Option<&str>,
    ) -> Result<std::path::PathBuf> {
        let (ext, body) = match format {
            OutputFormat::Csv => ("csv", self.to_csv(meta, trailer)),
            OutputFormat::Json => ("json", self.to_json(meta, trailer)),
        };
        let path = dir.join(format!("{stem}.{ext}"));
        write_atomic(&path, body.as_bytes())?;
        Ok(path)
    }
}

/// Serialize any value as pretty JSON into `dir/<name>`.
pub fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<std::path::PathBuf> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("JSON serialization failed: {e}")))?;
    text.push('\n');
    let path = dir.join(name);
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

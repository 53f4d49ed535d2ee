//! Data ingestion, model specs, and report emission.
//!
//! Counts files are CSV with a `value,count` header or raw-sample files with
//! one observation per line (auto-detected). Model specs are JSON records
//! `{family, params, truncation}`. Every emitted artifact embeds the tool
//! version, the seed, and a hash of the full run configuration, and floats
//! are written with 12 significant digits so reruns are byte-identical.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::base::{make_parametric, BaseMeasure, EmpiricalCounts, Family, TruncationPolicy};
use crate::error::{Error, Result};

/// JSON model spec: a family plus an optional truncation policy.
#[derive(Debug, Clone, serde::Deserialize, Serialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationPolicy>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<BaseMeasure> {
        make_parametric(self.family.clone(), self.truncation.unwrap_or_default())
    }
}

/// Load a model spec from a JSON file.
pub fn load_model_spec(path: &Path) -> Result<ModelSpec> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Parse a counts file.
///
/// A `value,count` header selects CSV mode; otherwise every line is read as
/// one raw observation. Duplicate values are merged. Errors carry the line
/// number.
pub fn parse_counts(path: &Path) -> Result<EmpiricalCounts> {
    let text = fs::read_to_string(path)?;
    parse_counts_str(&path.display().to_string(), &text)
}

/// String-input form of [`parse_counts`].
pub fn parse_counts_str(name: &str, text: &str) -> Result<EmpiricalCounts> {
    let err = |line: usize, message: String| Error::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (first_no, first) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let header = first
        .split(',')
        .map(|f| f.trim().to_ascii_lowercase())
        .collect::<Vec<_>>();
    let csv_mode = header == ["value", "count"];
    let mut pairs: Vec<(f64, u64)> = Vec::new();
    if !csv_mode {
        // raw mode: the first line is data too
        let v: f64 = first
            .parse()
            .map_err(|_| err(first_no, format!("expected a number, got {first:?}")))?;
        pairs.push((v, 1));
    }
    for (no, line) in lines {
        if csv_mode {
            let mut fields = line.split(',');
            let (v, c) = match (fields.next(), fields.next(), fields.next()) {
                (Some(v), Some(c), None) => (v.trim(), c.trim()),
                _ => return Err(err(no, format!("expected `value,count`, got {line:?}"))),
            };
            let value: f64 = v.parse().map_err(|_| err(no, format!("bad value {v:?}")))?;
            let count: u64 = c.parse().map_err(|_| {
                err(
                    no,
                    format!("bad count {c:?} (must be a nonnegative integer)"),
                )
            })?;
            pairs.push((value, count));
        } else {
            let v: f64 = line
                .parse()
                .map_err(|_| err(no, format!("expected a number, got {line:?}")))?;
            pairs.push((v, 1));
        }
    }
    EmpiricalCounts::from_pairs(pairs)
}

/// Format with 12 significant digits, stable across platforms.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let formatted = format!("{:.*e}", 11, x);
    // shortest representation that round-trips the rounded value
    let rounded: f64 = formatted.parse().unwrap();
    let plain = format!("{rounded}");
    if plain.parse::<f64>() == Ok(rounded) {
        plain
    } else {
        formatted
    }
}

/// Round to 12 significant digits (for JSON payloads).
fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", 11, x).parse().unwrap()
}

/// FNV-1a hash of a canonical JSON encoding; embedded in artifacts so a
/// rerun can prove it used the same configuration.
pub fn config_hash(config: &Value) -> String {
    let canonical = canonical_json(config);
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in canonical.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Deterministic JSON encoding: object keys sorted, floats at 12 digits.
fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", k, canonical_json(&map[*k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        Value::Number(n) => match n.as_f64() {
            Some(x) => format_sig(x),
            None => n.to_string(),
        },
        other => other.to_string(),
    }
}

/// Walk a JSON value, rounding every float to 12 significant digits and
/// replacing non-finite numbers by strings.
fn normalize_numbers(v: Value) -> Value {
    match v {
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| (k, normalize_numbers(v)))
                .collect(),
        ),
        Value::Array(items) => Value::Array(items.into_iter().map(normalize_numbers).collect()),
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                if n.is_f64() {
                    return match serde_json::Number::from_f64(round_sig(x)) {
                        Some(num) => Value::Number(num),
                        None => Value::String(format_sig(x)),
                    };
                }
            }
            Value::Number(n)
        }
        other => other,
    }
}

/// Reproducibility block attached to every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool_version: String,
    pub seed: u64,
    pub config: Value,
    pub config_hash: String,
}

impl Meta {
    pub fn new(seed: u64, config: Value) -> Meta {
        let hash = config_hash(&config);
        Meta {
            tool_version: crate::VERSION.to_string(),
            seed,
            config,
            config_hash: hash,
        }
    }
}

/// Serialize a report (any `Serialize` payload) plus its meta block to
/// pretty JSON with normalized floats; byte-identical across reruns.
pub fn report_json<T: Serialize>(payload: &T, meta: &Meta) -> Result<String> {
    let mut value = serde_json::to_value(payload)?;
    if let Value::Object(ref mut map) = value {
        map.insert("meta".into(), serde_json::to_value(meta)?);
    } else {
        let mut map = Map::new();
        map.insert("result".into(), value);
        map.insert("meta".into(), serde_json::to_value(meta)?);
        value = Value::Object(map);
    }
    let normalized = normalize_numbers(value);
    let mut text = serde_json::to_string_pretty(&normalized)?;
    text.push('\n');
    Ok(text)
}

/// Write string content, creating parent directories as needed.
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, content)?;
    Ok(())
}

/// CSV table with a header row; floats at 12 significant digits.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Goodness-of-fit report as CSV: a commented summary header followed by
/// the per-coefficient table.
pub fn gof_report_csv(report: &crate::inference::GofReport, meta: &Meta) -> String {
    let mut text = format!(
        "# lp-sharpen {} seed={} config_hash={} method={} statistic={} df={} p_value={}\n",
        crate::VERSION,
        meta.seed,
        meta.config_hash,
        report.method,
        format_sig(report.statistic),
        report.df,
        format_sig(report.p_value),
    );
    if let Some(note) = &report.note {
        text.push_str(&format!("# note: {note}\n"));
    }
    let rows: Vec<Vec<String>> = report
        .per_coefficient
        .iter()
        .map(|row| vec![row.order.to_string(), format_sig(row.lp), format_sig(row.z)])
        .collect();
    text.push_str(&csv_table(&["order", "lp", "z"], &rows));
    text
}

/// Counts as a `value,count` CSV (round-trips through [`parse_counts`]).
pub fn counts_csv(data: &EmpiricalCounts) -> String {
    let rows: Vec<Vec<String>> = data
        .values()
        .iter()
        .zip(data.counts())
        .map(|(&v, &c)| vec![format_sig(v), c.to_string()])
        .collect();
    csv_table(&["value", "count"], &rows)
}

//! Relative change of every scalar summary metric between two run directories.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delta {
    pub a: f64,
    pub b: f64,
    /// `(b - a) / a`; zero when both are zero, absent when only `a` is.
    pub relative: Option<f64>,
}

pub fn diff_dirs(a: &Path, b: &Path) -> Result<BTreeMap<String, Delta>, CliError> {
    let read = |dir: &Path| -> Result<Value, CliError> {
        let path = dir.join("summary.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        v.get("summary").cloned().ok_or_else(|| CliError::Config(format!("{}: no summary object", path.display())))
    };
    diff_summaries(&read(a)?, &read(b)?)
}

/// Compare two summary objects. Both must expose the same scalar metrics.
pub fn diff_summaries(a: &Value, b: &Value) -> Result<BTreeMap<String, Delta>, CliError> {
    let (fa, fb) = (flatten(a), flatten(b));
    let missing: Vec<&String> =
        fa.keys().filter(|k| !fb.contains_key(*k)).chain(fb.keys().filter(|k| !fa.contains_key(*k))).collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!("schema mismatch: metrics present in only one run: {missing:?}")));
    }
    Ok(fa
        .into_iter()
        .map(|(k, a)| {
            let b = fb[&k];
            let relative = if a == 0.0 { (b == 0.0).then_some(0.0) } else { Some((b - a) / a) };
            (k, Delta { a, b, relative })
        })
        .collect())
}

/// Numeric leaves of nested objects, keyed by dotted path. Arrays (CDFs,
/// per-queue tables) are skipped: their length legitimately differs.
fn flatten(v: &Value) -> BTreeMap<String, f64> {
    fn walk(prefix: &str, v: &Value, out: &mut BTreeMap<String, f64>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            Value::Number(n) => {
                out.insert(prefix.to_string(), n.as_f64().unwrap_or(f64::NAN));
            }
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    walk("", v, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn identical_is_zero() {
        let s = json!({"ttft_p99_us": 5, "counters": {"bytes_transferred": 9}});
        let d = diff_summaries(&s, &s).unwrap();
        assert!(d.values().all(|x| x.relative == Some(0.0)));
        assert!(d.contains_key("counters.bytes_transferred"));
    }

    #[test]
    fn halving_is_minus_fifty_percent() {
        let d = diff_summaries(&json!({"ttft_p99_us": 200_000}), &json!({"ttft_p99_us": 100_000})).unwrap();
        assert_eq!(d["ttft_p99_us"].relative, Some(-0.5));
    }

    #[test]
    fn missing_metric_is_a_schema_error() {
        let err = diff_summaries(&json!({"ttft_p99_us": 1, "tbt_p99_us": 2}), &json!({"ttft_p99_us": 1})).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("tbt_p99_us"));
    }

    #[test]
    fn from_zero_has_no_relative_change() {
        let d = diff_summaries(&json!({"x": 0}), &json!({"x": 3})).unwrap();
        assert_eq!(d["x"].relative, None);
    }
}

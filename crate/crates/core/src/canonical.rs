//! Canonical JSON serialization.
//!
//! Every JSON artifact the pipeline writes (manifests, reports, sidecars,
//! config echoes) goes through this writer so that identical inputs produce
//! byte-identical files: object keys sorted lexicographically, two-space
//! indentation, LF newlines, a single trailing newline, and serde_json's
//! shortest round-trip float formatting.

use crate::error::{CadxError, Result};
use serde::Serialize;
use serde_json::Value;
use std::path::Path;

/// Renders `value` as canonical JSON text.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)
        .map_err(|e| CadxError::numeric(format!("JSON serialization failed: {e}")))?;
    let mut out = String::new();
    write_value(&v, 0, &mut out)?;
    out.push('\n');
    Ok(out)
}

/// Writes `value` as canonical JSON to `path`.
pub fn write_canonical_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_canonical_string(value)?;
    std::fs::write(path, text.as_bytes()).map_err(|e| CadxError::io(path, e))
}

fn write_value(v: &Value, depth: usize, out: &mut String) -> Result<()> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            // serde_json rejects non-finite floats at to_value time, so any
            // Number here formats deterministically.
            out.push_str(&n.to_string());
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
            } else {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    indent(depth + 1, out);
                    write_value(item, depth + 1, out)?;
                }
                out.push('\n');
                indent(depth, out);
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
            } else {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort_unstable();
                out.push('{');
                for (i, key) in keys.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    indent(depth + 1, out);
                    out.push_str(
                        &serde_json::to_string(key).expect("string serialization is infallible"),
                    );
                    out.push_str(": ");
                    write_value(&map[key.as_str()], depth + 1, out)?;
                }
                out.push('\n');
                indent(depth, out);
                out.push('}');
            }
        }
    }
    Ok(())
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted() {
        let v = json!({"zeta": 1, "alpha": {"m": 2, "b": 3}});
        let s = to_canonical_string(&v).unwrap();
        let a = s.find("\"alpha\"").unwrap();
        let z = s.find("\"zeta\"").unwrap();
        let b = s.find("\"b\"").unwrap();
        let m = s.find("\"m\"").unwrap();
        assert!(a < z);
        assert!(b < m);
        assert!(s.ends_with('\n'));
        assert!(!s.contains('\r'));
    }

    #[test]
    fn repeated_serialization_is_identical() {
        let v = json!({"x": [1.5, 0.1, 2e-7], "y": "Ünïcode", "z": null});
        assert_eq!(
            to_canonical_string(&v).unwrap(),
            to_canonical_string(&v).unwrap()
        );
    }

    #[test]
    fn non_finite_becomes_null() {
        // serde_json maps NaN/inf to null at to_value time; pipeline outputs
        // are validated finite before they reach the writer.
        assert_eq!(to_canonical_string(&f64::NAN).unwrap(), "null\n");
    }

    #[test]
    fn round_trip_parses_back() {
        let v = json!({"entries": [{"id": "a", "n": 3}], "version": 1});
        let s = to_canonical_string(&v).unwrap();
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}

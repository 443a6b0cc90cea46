//! Canonical JSON: object keys sorted by UTF-16 code unit at every level, no
//! insignificant whitespace, integral numbers without exponent.

use serde::Serialize;
use serde_json::{Number, Value};
use std::cmp::Ordering;

use super::{CryptoError, Result};

/// Serializes `value` to canonical JSON bytes.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let value =
        serde_json::to_value(value).map_err(|e| CryptoError::NotSerializable(e.to_string()))?;
    Ok(canonical_json_value(&value))
}

/// Canonical JSON as a `String`.
pub fn canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    // The writer only ever emits valid UTF-8.
    Ok(String::from_utf8(canonical_json(value)?).expect("canonical JSON is UTF-8"))
}

pub fn canonical_json_value(value: &Value) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    write_value(&mut out, value);
    out
}

fn utf16_cmp(a: &str, b: &str) -> Ordering {
    a.encode_utf16().cmp(b.encode_utf16())
}

fn write_value(out: &mut Vec<u8>, value: &Value) {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(out, item);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| utf16_cmp(a.0, b.0));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(out, k);
                out.push(b':');
                write_value(out, v);
            }
            out.push(b'}');
        }
    }
}

fn write_number(out: &mut Vec<u8>, n: &Number) {
    if n.is_u64() || n.is_i64() {
        out.extend_from_slice(n.to_string().as_bytes());
        return;
    }
    let f = n.as_f64().unwrap_or(0.0);
    if f.fract() == 0.0 && f.abs() < 1e21 {
        out.extend_from_slice(format!("{f:.0}").as_bytes());
    } else {
        out.extend_from_slice(n.to_string().as_bytes());
    }
}

fn write_string(out: &mut Vec<u8>, s: &str) {
    // serde_json's string escaping matches JSON.stringify for valid UTF-8.
    serde_json::to_writer(&mut *out, s).expect("writing to a Vec cannot fail");
}

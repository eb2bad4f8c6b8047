//! Canonical JSON: sorted keys, no insignificant whitespace, floats at 17
//! significant digits, non-finite floats as `null`.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn to_canonical_string<S: Serialize + ?Sized>(value: &S) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, &mut out);
    Ok(out)
}

/// Hex SHA-256 of the canonical encoding.
pub fn config_hash<S: Serialize + ?Sized>(value: &S) -> Result<String> {
    let s = to_canonical_string(value)?;
    Ok(hex::encode(Sha256::digest(s.as_bytes())))
}

/// `{:.16e}` keeps every f64 round-trippable; integers stay integral.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    format!("{x:.16e}")
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.push_str(&n.to_string());
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string encodes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key encodes"));
                out.push(':');
                write_value(&map[k], out);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_compact() {
        let s = to_canonical_string(&json!({"b": 1, "a": [true, null], "c": {"z": "x", "y": 2}}))
            .unwrap();
        assert_eq!(s, r#"{"a":[true,null],"b":1,"c":{"y":2,"z":"x"}}"#);
    }

    #[test]
    fn floats_round_trip_at_17_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert_eq!(
                s.split('e').next().unwrap().trim_start_matches('-').len(),
                18
            );
        }
        assert_eq!(to_canonical_string(&f64::NAN).unwrap(), "null");
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&json!({"x": 1.5, "y": [1, 2]})).unwrap();
        let b = config_hash(&json!({"y": [1, 2], "x": 1.5})).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }
}

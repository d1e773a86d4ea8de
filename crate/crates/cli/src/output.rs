//! Deterministic JSON printing with 17 significant digits for every float.

use std::fmt::Write;

use serde::Serialize;
use serde_json::Value;

/// `{:.16e}` for finite floats, `null` otherwise.
pub fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".into()
    }
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&float(n.as_f64().expect("f64 number")));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

/// One-line JSON of any serializable value.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report serializes");
    let mut out = String::new();
    write_value(&mut out, &v);
    out
}

/// A vector (`rank` 1) or row-major square matrix as text rows.
pub fn matrix_rows(data: &[f64], rank: usize) -> Vec<String> {
    let n = (data.len() as f64).sqrt().round() as usize;
    if rank < 2 || n * n != data.len() || n == 0 {
        return vec![data.iter().map(|v| format!("{v:>12.5e}")).collect::<Vec<_>>().join(" ")];
    }
    data.chunks(n)
        .map(|row| row.iter().map(|v| format!("{v:>12.5e}")).collect::<Vec<_>>().join(" "))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let x = 0.1_f64 + 0.2;
        let s = to_json(&x);
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(to_json(&f64::NAN), "null");
        assert_eq!(to_json(&3usize), "3");
    }

    #[test]
    fn output_is_valid_json() {
        #[derive(Serialize)]
        struct S {
            a: Vec<f64>,
            b: &'static str,
            c: Option<f64>,
        }
        let s = to_json(&S {
            a: vec![1.0, -2.5e-300, 1e300],
            b: "q\"uote",
            c: None,
        });
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"][1].as_f64().unwrap(), -2.5e-300);
        assert_eq!(v["b"], "q\"uote");
    }
}

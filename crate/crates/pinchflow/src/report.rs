//! Deterministic JSON/CSV emission.
//!
//! Artifacts must be byte-identical across reruns with the same config and
//! seed, and every float is written with 17 significant digits so a reader
//! recovers the exact f64. Field order is the insertion order; there are no
//! maps anywhere.

use std::fmt::Write as _;

/// Format a float with 17 significant digits (round-trips any f64).
/// Non-finite values render as `inf`, `-inf`, `nan` (CSV only; the JSON
/// writer maps them to `null`).
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    // +0.0 and -0.0 are the same number; keep one spelling.
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

/// JSON document tree with deterministic serialization.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn obj() -> Self {
        Json::Obj(Vec::new())
    }

    /// Append a field; panics if `self` is not an object (programmer error).
    pub fn push(&mut self, key: &str, value: Json) -> &mut Self {
        match self {
            Json::Obj(fields) => fields.push((key.to_string(), value)),
            _ => panic!("push on non-object Json"),
        };
        self
    }

    pub fn num(x: f64) -> Json {
        Json::Num(x)
    }

    pub fn str(s: impl Into<String>) -> Json {
        Json::Str(s.into())
    }

    pub fn to_string_pretty(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, 0);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, indent: usize) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Json::Num(x) => {
                if x.is_finite() {
                    out.push_str(&fmt_float(*x));
                } else {
                    out.push_str("null");
                }
            }
            Json::Str(s) => write_escaped(out, s),
            Json::Arr(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    push_indent(out, indent + 1);
                    item.write(out, indent + 1);
                }
                out.push('\n');
                push_indent(out, indent);
                out.push(']');
            }
            Json::Obj(fields) => {
                if fields.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push('{');
                for (i, (key, value)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    push_indent(out, indent + 1);
                    write_escaped(out, key);
                    out.push_str(": ");
                    value.write(out, indent + 1);
                }
                out.push('\n');
                push_indent(out, indent);
                out.push('}');
            }
        }
    }
}

fn push_indent(out: &mut String, levels: usize) {
    for _ in 0..levels {
        out.push_str("  ");
    }
}

fn write_escaped(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// CSV builder: `#`-prefixed metadata lines, a header, then rows.
pub struct Csv {
    out: String,
    columns: usize,
}

impl Csv {
    pub fn new(meta_lines: &[String], header: &[&str]) -> Self {
        let mut out = String::new();
        for line in meta_lines {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{}", header.join(","));
        Csv {
            out,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "csv row width mismatch");
        let _ = writeln!(self.out, "{}", cells.join(","));
    }

    pub fn row_floats(&mut self, cells: &[f64]) {
        let rendered: Vec<String> = cells.iter().map(|&x| fmt_float(x)).collect();
        self.row(&rendered);
    }

    pub fn finish(self) -> String {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_significant_digits() {
        let s = fmt_float(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        let recovered: f64 = s.parse().unwrap();
        assert_eq!(recovered, 0.1);
    }

    #[test]
    fn float_format_round_trips_awkward_values() {
        for &x in &[
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -4.9e-324,
            0.0,
            -0.0,
            f64::MAX,
        ] {
            let s = fmt_float(x);
            let recovered: f64 = s.parse().unwrap();
            assert_eq!(recovered.to_bits(), if x == 0.0 { 0u64 } else { x.to_bits() }, "{s}");
        }
    }

    #[test]
    fn json_is_deterministic_and_ordered() {
        let mut doc = Json::obj();
        doc.push("b", Json::Int(2));
        doc.push("a", Json::num(0.5));
        doc.push("list", Json::Arr(vec![Json::Bool(true), Json::Null]));
        let text = doc.to_string_pretty();
        assert!(text.find("\"b\"").unwrap() < text.find("\"a\"").unwrap());
        assert_eq!(text, doc.to_string_pretty());
    }

    #[test]
    fn json_maps_non_finite_to_null() {
        let mut doc = Json::obj();
        doc.push("x", Json::num(f64::INFINITY));
        assert!(doc.to_string_pretty().contains("\"x\": null"));
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&["seed=7".to_string()], &["t", "psi"]);
        csv.row_floats(&[0.0, 1.0]);
        let text = csv.finish();
        assert!(text.starts_with("# seed=7\nt,psi\n"));
        assert!(text.contains("0.0000000000000000e0,1.0000000000000000e0"));
    }
}

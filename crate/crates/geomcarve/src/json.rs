//! Deterministic JSON emission.
//!
//! Reports and manifests must be byte-identical across runs so they can be
//! diffed and checked into fixtures. This tree emitter guarantees that:
//! object fields keep their insertion order, floats always use scientific
//! notation with 17 significant digits (which round-trips every finite f64
//! exactly), and non-finite floats degrade to `null`. Parsing is out of
//! scope; readers use serde against typed structs instead.

use std::fmt::Write;

/// A JSON tree with deterministic serialization.
///
/// `Object` keeps fields as a vector of pairs, so emission order is exactly
/// insertion order rather than hash or alphabetical order.
#[derive(Clone, Debug, PartialEq)]
pub enum JsonValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<JsonValue>),
    Object(Vec<(String, JsonValue)>),
}

impl From<bool> for JsonValue {
    fn from(v: bool) -> Self {
        JsonValue::Bool(v)
    }
}

impl From<i64> for JsonValue {
    fn from(v: i64) -> Self {
        JsonValue::Int(v)
    }
}

impl From<usize> for JsonValue {
    fn from(v: usize) -> Self {
        JsonValue::Int(v as i64)
    }
}

impl From<f64> for JsonValue {
    fn from(v: f64) -> Self {
        JsonValue::Float(v)
    }
}

impl From<&str> for JsonValue {
    fn from(v: &str) -> Self {
        JsonValue::Str(v.to_string())
    }
}

impl From<String> for JsonValue {
    fn from(v: String) -> Self {
        JsonValue::Str(v)
    }
}

impl<T: Into<JsonValue>> FromIterator<T> for JsonValue {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        JsonValue::Array(iter.into_iter().map(Into::into).collect())
    }
}

impl JsonValue {
    /// Convenience constructor keeping field order as given.
    pub fn object<K: Into<String>, V: Into<JsonValue>>(
        pairs: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        JsonValue::Object(pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }

    /// Pretty-prints with two-space indentation and a trailing newline-free
    /// body; identical trees always produce identical bytes.
    pub fn to_pretty(&self) -> String {
        let mut out = String::new();
        self.write_into(&mut out, 0);
        out
    }

    fn write_into(&self, out: &mut String, depth: usize) {
        match self {
            JsonValue::Null => out.push_str("null"),
            JsonValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            JsonValue::Int(i) => {
                write!(out, "{i}").expect("writing to a String cannot fail");
            }
            JsonValue::Float(f) => {
                out.push_str(&format_float(*f));
            }
            JsonValue::Str(s) => write_escaped(out, s),
            JsonValue::Array(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push_str("[\n");
                for (i, item) in items.iter().enumerate() {
                    indent(out, depth + 1);
                    item.write_into(out, depth + 1);
                    out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
                }
                indent(out, depth);
                out.push(']');
            }
            JsonValue::Object(pairs) => {
                if pairs.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push_str("{\n");
                for (i, (key, value)) in pairs.iter().enumerate() {
                    indent(out, depth + 1);
                    write_escaped(out, key);
                    out.push_str(": ");
                    value.write_into(out, depth + 1);
                    out.push_str(if i + 1 < pairs.len() { ",\n" } else { "\n" });
                }
                indent(out, depth);
                out.push('}');
            }
        }
    }
}

/// Scientific notation with 16 digits after the point — 17 significant
/// digits, enough for any finite f64 to parse back to the identical bits.
/// NaN and infinities have no JSON spelling and become `null`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
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
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\u{8}' => out.push_str("\\b"),
            '\u{c}' => out.push_str("\\f"),
            c if (c as u32) < 0x20 => {
                write!(out, "\\u{:04x}", c as u32).expect("writing to a String cannot fail");
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_trees_print_with_stable_layout() {
        let tree = JsonValue::object([
            ("version", JsonValue::from("1")),
            ("count", JsonValue::from(3usize)),
            ("ok", JsonValue::from(true)),
            ("nothing", JsonValue::Null),
            ("items", [1i64, 2].into_iter().collect()),
            ("empty_list", JsonValue::Array(vec![])),
            ("empty_obj", JsonValue::Object(vec![])),
        ]);
        let expected = "{\n  \"version\": \"1\",\n  \"count\": 3,\n  \"ok\": true,\n  \
                        \"nothing\": null,\n  \"items\": [\n    1,\n    2\n  ],\n  \
                        \"empty_list\": [],\n  \"empty_obj\": {}\n}";
        assert_eq!(tree.to_pretty(), expected);
    }

    #[test]
    fn floats_use_seventeen_significant_digits() {
        assert_eq!(JsonValue::Float(0.5).to_pretty(), "5.0000000000000000e-1");
        assert_eq!(JsonValue::Float(818.24).to_pretty(), "8.1824000000000001e2");
        assert_eq!(JsonValue::Float(0.0).to_pretty(), "0.0000000000000000e0");
        assert_eq!(JsonValue::Float(f64::NAN).to_pretty(), "null");
        assert_eq!(JsonValue::Float(f64::INFINITY).to_pretty(), "null");
        assert_eq!(JsonValue::Float(f64::NEG_INFINITY).to_pretty(), "null");
    }

    #[test]
    fn strings_escape_quotes_backslashes_and_control_characters() {
        let v = JsonValue::from("a\"b\\c\nd\te\u{1}f");
        assert_eq!(v.to_pretty(), "\"a\\\"b\\\\c\\nd\\te\\u0001f\"");
    }

    #[test]
    fn emitted_floats_parse_back_to_identical_bits() {
        let values = [
            1.8,
            std::f64::consts::PI,
            -0.0,
            1e-300,
            123456789.123456789,
            f64::MIN_POSITIVE,
            f64::MAX,
        ];
        for v in values {
            let text = format_float(v);
            let parsed: f64 = text.parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits(), "{text} must round-trip");
        }
    }

    #[test]
    fn serde_can_parse_what_the_emitter_prints() {
        let tree = JsonValue::object([
            ("pi", JsonValue::Float(std::f64::consts::PI)),
            ("label", JsonValue::from("line1\nline2")),
            ("shape", [12usize, 16].into_iter().collect()),
        ]);
        let parsed: serde_json::Value = serde_json::from_str(&tree.to_pretty()).unwrap();
        assert_eq!(parsed["pi"].as_f64().unwrap().to_bits(), std::f64::consts::PI.to_bits());
        assert_eq!(parsed["label"].as_str().unwrap(), "line1\nline2");
        assert_eq!(parsed["shape"][1].as_u64().unwrap(), 16);
    }
}

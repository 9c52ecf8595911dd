//! Fixed-precision number formatting for reports.
//!
//! Report numbers are written with exactly six decimals so identical inputs
//! give byte-identical files.

use serde_json::{Number, Value};

pub const DECIMALS: usize = 6;

/// `x` formatted with six decimals.
pub fn fixed_str(x: f64) -> String {
    let s = format!("{:.*}", DECIMALS, x);
    // -0.000000 and 0.000000 must not differ
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// JSON number with six decimals; non-finite values become `null`.
pub fn fixed(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let n: Number = fixed_str(x).parse().expect("formatted float is a valid JSON number");
    Value::Number(n)
}

pub fn fixed_opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, fixed)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

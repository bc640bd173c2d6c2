//! Stable number formatting for reports.

use serde_json::Value;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Plain decimal (never scientific) with `digits` significant digits.
pub fn fixed_significant(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let text = format!("{x:.decimals$}");
    if text.starts_with("-0") && text.trim_start_matches(['-', '0', '.']).is_empty() {
        return text[1..].to_string();
    }
    text
}

pub fn decimal(x: f64) -> String {
    fixed_significant(x, SIGNIFICANT_DIGITS)
}

/// Rounds to 12 significant digits before handing the value to JSON.
pub fn json_number(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x);
    serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

pub fn json_numbers(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(json_number).collect())
}

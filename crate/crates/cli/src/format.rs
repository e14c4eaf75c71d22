//! Locale-independent number formatting with six significant digits,
//! matching C's `%.6g`.

use serde_json::Value;

pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // `{:e}` rounds to the requested precision, so its exponent already
    // accounts for carries like 9.999995 -> 1.00000e1
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// JSON number carrying exactly the digits [`fmt_g`] prints; `null` for
/// non-finite values.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(fmt_g(x).parse::<f64>().expect("formatted float parses"))
    } else {
        Value::Null
    }
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

/// CSV cell for an optional value (empty when absent).
pub fn opt_cell(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

//! Canonical text for layer parameter values.
//!
//! Values are rendered the way a Python `repr` of the equivalent object would
//! print them, which is what the exported feature keys are made of:
//! `(14, 14)`, `(4096,)`, `1e-05`, `True`, `zeros`.

use serde_json::Value;

/// Canonical text of a JSON parameter value. Top-level strings are verbatim.
pub fn canonical_json_value(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => nested_repr(other),
    }
}

fn nested_repr(value: &Value) -> String {
    match value {
        Value::Null => "None".to_string(),
        Value::Bool(b) => canonical_bool(*b).to_string(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.to_string()
            } else if let Some(u) = n.as_u64() {
                u.to_string()
            } else {
                float_repr(n.as_f64().unwrap_or(f64::NAN))
            }
        }
        Value::String(s) => quoted(s),
        Value::Array(items) => tuple(items.iter().map(nested_repr)),
        Value::Object(map) => {
            let body: Vec<String> = map
                .iter()
                .map(|(k, v)| format!("{}: {}", quoted(k), nested_repr(v)))
                .collect();
            format!("{{{}}}", body.join(", "))
        }
    }
}

pub fn canonical_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

pub(crate) fn quoted(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

/// Python tuple syntax: `()`, `(a,)`, `(a, b)`.
pub fn tuple<I>(items: I) -> String
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let items: Vec<String> = items.into_iter().map(|s| s.as_ref().to_string()).collect();
    match items.len() {
        0 => "()".to_string(),
        1 => format!("({},)", items[0]),
        _ => format!("({})", items.join(", ")),
    }
}

/// Shortest round-trip decimal for a 64-bit float, in `repr` layout.
pub fn float_repr(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0" } else { "0.0" }.to_string();
    }
    layout_scientific(&format!("{x:e}"))
}

/// Same as [`float_repr`] but using the shortest digits that round-trip a
/// 32-bit float (ONNX stores float attributes as `f32`).
pub fn float32_repr(x: f32) -> String {
    if x.is_nan() || x.is_infinite() || x == 0.0 {
        return float_repr(f64::from(x));
    }
    layout_scientific(&format!("{x:e}"))
}

// `s` is Rust's `{:e}` output: `-1.2345e-7`, `4e3`.
fn layout_scientific(s: &str) -> String {
    let (mantissa, exp) = s.split_once('e').expect("scientific float format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if (-4..16).contains(&exp) {
        if exp >= 0 {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                out.push_str(&digits);
                out.extend(std::iter::repeat_n('0', int_len - digits.len()));
                out.push_str(".0");
            } else {
                out.push_str(&digits[..int_len]);
                out.push('.');
                out.push_str(&digits[int_len..]);
            }
        } else {
            out.push_str("0.");
            out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
            out.push_str(&digits);
        }
    } else {
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        out.push('e');
        out.push(if exp < 0 { '-' } else { '+' });
        out.push_str(&format!("{:02}", exp.abs()));
    }
    out
}

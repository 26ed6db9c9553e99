//! Canonical float formatting for the on-disk text formats.
//!
//! Values are written with 17 significant digits, which is enough to recover
//! every `f64` exactly. Trailing zeros of the mantissa are dropped so that
//! round numbers stay readable (`5.0`, `0.5`).

use std::fmt::Write;

/// Formats `x` with 17 significant digits as a JSON-compatible number.
///
/// Non-finite values have no JSON spelling; callers validate before writing.
pub fn canonical_f64(x: f64) -> String {
    debug_assert!(x.is_finite(), "non-finite value reached the serializer");
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0" } else { "0.0" }.to_string();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };

    let mut out = String::with_capacity(24);
    if negative {
        out.push('-');
    }
    if (-6..=16).contains(&exp) {
        if exp >= 0 {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                out.push_str(digits);
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
            out.push_str(digits);
        }
    } else {
        out.push_str(&digits[..1]);
        out.push('.');
        out.push_str(if digits.len() > 1 { &digits[1..] } else { "0" });
        write!(out, "e{exp}").unwrap();
    }
    out
}

pub(crate) fn write_vec3(out: &mut String, v: &[f64; 3]) {
    out.push('[');
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&canonical_f64(*x));
    }
    out.push(']');
}

//! Fixed-precision float formatting shared by every text output.

/// Formats `v` with 9 significant digits.
///
/// Values with magnitude in `[1e-4, 1e9)` are printed positionally with
/// trailing zeros trimmed; anything else uses scientific notation with a
/// 9-digit mantissa. Zero prints as `0`.
pub fn sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs();
    if (1e-4..1e9).contains(&mag) {
        // Round via the scientific form first so the digit count is exact even
        // when rounding carries into a new leading digit (9.9999999995 -> 10).
        let sci = format!("{:.8e}", v);
        let exp: i32 = sci
            .rsplit_once('e')
            .and_then(|(_, e)| e.parse().ok())
            .unwrap_or(0);
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, v))
    } else {
        let sci = format!("{:.8e}", v);
        match sci.split_once('e') {
            Some((mant, exp)) => format!("{}e{}", trim_zeros(mant.to_string()), exp),
            None => sci,
        }
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Two-decimal display used in human-readable reports.
pub fn fixed2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

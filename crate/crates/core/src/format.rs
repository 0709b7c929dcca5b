//! Number formatting shared by the CSV writers.

/// Fixed-point decimal with nine significant digits. Magnitudes too large or
/// too small for a readable fixed form fall back to scientific notation.
pub fn sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0.00000000".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-15..=15).contains(&exp) {
        return format!("{v:.8e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding may carry into a new leading digit
    let rounded: f64 = s.parse().unwrap_or(v);
    if rounded != 0.0 && rounded.abs().log10().floor() as i32 > exp && decimals > 0 {
        let decimals = decimals - 1;
        return format!("{v:.decimals$}");
    }
    s
}

/// Empty field for missing values.
pub fn sig9_opt(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(1.0), "1.00000000");
        assert_eq!(sig9(-0.5), "-0.500000000");
        assert_eq!(sig9(123456.789012), "123456.789");
        assert_eq!(sig9(1.23456789e-5), "0.0000123456789");
        assert_eq!(sig9(9.9999999996), "10.0000000");
        assert_eq!(sig9(0.0), "0.00000000");
        assert_eq!(sig9(3e20), "3.00000000e20");
        assert_eq!(sig9_opt(None), "");
    }
}

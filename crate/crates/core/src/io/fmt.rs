/// Formats like C's `%#.6g`: six significant digits with trailing zeros
/// kept, scientific notation for very small or large magnitudes.
pub fn g6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.00000".into() } else { "0.00000".into() };
    }
    // Exponent after rounding to six significant digits.
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if decimals == 0 {
        format!("{s}.")
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::g6;

    #[test]
    fn matches_printf() {
        assert_eq!(g6(-31.98), "-31.9800");
        assert_eq!(g6(0.0), "0.00000");
        assert_eq!(g6(1.0), "1.00000");
        assert_eq!(g6(123456.0), "123456.");
        assert_eq!(g6(1234567.0), "1.23457e+06");
        assert_eq!(g6(0.0001), "0.000100000");
        assert_eq!(g6(0.00001234), "1.23400e-05");
        assert_eq!(g6(999999.5), "1.00000e+06");
        assert_eq!(g6(9.999995), "10.0000");
        assert_eq!(g6(f64::NEG_INFINITY), "-inf");
        assert_eq!(g6(3.3356409519815204e-7), "3.33564e-07");
    }
}

//! Deterministic number formatting for text artifacts.

/// Rounds `x` to `digits` significant digits and prints the shortest decimal
/// that reads back to that rounded value.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let sci = format!("{:.*e}", digits.saturating_sub(1), x);
    let rounded: f64 = sci.parse().expect("scientific notation parses");
    format!("{rounded}")
}

/// Full-precision form (17 significant digits) that round-trips bit-exactly.
pub fn exact(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(sig(0.676902313659419, 9), "0.676902314");
        assert_eq!(sig(100.0, 9), "100");
        assert_eq!(sig(5.61, 9), "5.61");
        assert_eq!(sig(0.0, 9), "0");
        assert_eq!(sig(-1.5e-7, 3), "-0.00000015");
    }

    #[test]
    fn exact_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, f64::MAX, 123456.789] {
            let back: f64 = exact(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}

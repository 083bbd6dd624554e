//! Decimal rounding, half away from zero.
//!
//! Rounding works on the shortest decimal representation that round-trips
//! the `f64` (Rust's `Display`), not on the binary value, so `-0.305`
//! rounds to `-0.31` even though its nearest double is slightly above it.
//! The output never depends on locale.

/// Formats `x` with exactly `decimals` fractional digits. Non-finite
/// inputs are formatted as-is. A result of zero is never signed.
pub fn round_half_away(x: f64, decimals: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let text = format!("{}", x.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((text.as_str(), ""));

    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(
            frac_part
                .bytes()
                .chain(std::iter::repeat(b'0'))
                .take(decimals),
        )
        .map(|b| b - b'0')
        .collect();
    let round_up = frac_part
        .as_bytes()
        .get(decimals)
        .is_some_and(|&d| d >= b'5');
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }

    let int_len = digits.len() - decimals;
    let mut out = String::with_capacity(digits.len() + 2);
    if x < 0.0 && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    for &d in &digits[..int_len] {
        out.push(char::from(b'0' + d));
    }
    if decimals > 0 {
        out.push('.');
        for &d in &digits[int_len..] {
            out.push(char::from(b'0' + d));
        }
    }
    out
}

/// Numeric counterpart of [`round_half_away`].
pub fn round_half_away_f64(x: f64, decimals: usize) -> f64 {
    round_half_away(x, decimals).parse().unwrap_or(x)
}

//! Decimal text <-> micro-unit integer conversion and exact rational rounding.
//!
//! Every measured value in the engine is an `i64` count of micro-units
//! (10⁻⁶). Parsing never goes through binary floating point for plain
//! decimal literals, so `0.3` is exactly `300_000`.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use thiserror::Error;

/// Micro-units per whole unit.
pub const MICRO: i64 = 1_000_000;

/// Exact rational value expressed in micro-units.
pub type Exact = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixedParseError {
    #[error("empty numeric field")]
    Empty,
    #[error("not a decimal number: {0:?}")]
    Malformed(String),
    #[error("value out of range: {0:?}")]
    OutOfRange(String),
}

/// Parses a decimal literal into micro-units, rounding half away from zero
/// past the sixth fractional digit.
///
/// Plain literals (`-12.5`, `.3`, `7.`) are converted digit by digit.
/// Exponent notation falls back to `f64` parsing.
pub fn parse_micros(text: &str) -> Result<i64, FixedParseError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(FixedParseError::Empty);
    }
    if s.contains(['e', 'E']) {
        return parse_scientific(s);
    }

    let (negative, body) = match s.as_bytes()[0] {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(FixedParseError::Malformed(text.to_string()));
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(FixedParseError::Malformed(text.to_string()));
    }

    let overflow = || FixedParseError::OutOfRange(text.to_string());
    let mut magnitude: i128 = 0;
    for b in int_part.bytes() {
        magnitude = magnitude * 10 + i128::from(b - b'0');
        if magnitude > i128::from(i64::MAX) {
            return Err(overflow());
        }
    }
    magnitude *= i128::from(MICRO);

    let frac = frac_part.as_bytes();
    let mut scale = i128::from(MICRO) / 10;
    for &b in frac.iter().take(6) {
        magnitude += i128::from(b - b'0') * scale;
        scale /= 10;
    }
    if frac.len() > 6 && frac[6] >= b'5' {
        magnitude += 1;
    }

    let signed = if negative { -magnitude } else { magnitude };
    i64::try_from(signed).map_err(|_| overflow())
}

fn parse_scientific(s: &str) -> Result<i64, FixedParseError> {
    let value: f64 = s
        .parse()
        .map_err(|_| FixedParseError::Malformed(s.to_string()))?;
    if !value.is_finite() {
        return Err(FixedParseError::Malformed(s.to_string()));
    }
    let scaled = (value * MICRO as f64).round();
    if scaled.abs() >= i64::MAX as f64 {
        return Err(FixedParseError::OutOfRange(s.to_string()));
    }
    Ok(scaled as i64)
}

/// Formats micro-units as a decimal with trailing zeros trimmed, keeping at
/// least one fractional digit (`1000000` -> `"1.0"`, `1037037` -> `"1.037037"`).
pub fn format_micros(raw: i64) -> String {
    let sign = if raw < 0 { "-" } else { "" };
    let magnitude = raw.unsigned_abs();
    let int_part = magnitude / MICRO as u64;
    let frac_part = magnitude % MICRO as u64;
    let mut frac = format!("{frac_part:06}");
    while frac.len() > 1 && frac.ends_with('0') {
        frac.pop();
    }
    format!("{sign}{int_part}.{frac}")
}

/// Rounds an exact micro-unit rational to the nearest integer micro-unit,
/// halves away from zero.
pub fn round_exact(value: &Exact) -> i64 {
    value
        .round()
        .to_integer()
        .to_i64()
        .expect("rounded micro-unit value exceeds i64")
}

/// Exact rational from an integer micro-unit count.
pub fn exact(raw: i64) -> Exact {
    Exact::from_integer(i128::from(raw))
}

//! Exact rational arithmetic helpers.
//!
//! Classification metrics are ratios of small integer counts, so they are
//! computed as rationals and converted to `f64` once at the end. The audit
//! constructions rely on this to assert metric equalities exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `num/den`, with the 0/0 convention mapped to 0.
pub fn ratio_or_zero(num: u64, den: u64) -> BigRational {
    if den == 0 {
        BigRational::zero()
    } else {
        ratio(num, den)
    }
}

pub fn to_f64(value: &BigRational) -> f64 {
    value.to_f64().expect("rational fits in f64")
}

/// Renders a reduced `p/q` string, or just `p` for integers.
pub fn format_fraction(value: &BigRational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Parses a plain decimal string (`0.35`, `-1`, `2.`) into an exact rational.
/// Used for CLI parameters so that reported fractions stay small instead of
/// inheriting the full binary expansion of an `f64`.
pub fn parse_decimal(text: &str) -> Result<BigRational> {
    let s = text.trim();
    let bad = || Error::InvalidParameter(format!("`{s}` is not a decimal number"));
    if s.is_empty() {
        return Err(bad());
    }
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let joined = format!("{int_part}{frac_part}");
    let numer: BigInt = joined.parse().map_err(|_| bad())?;
    let denom = BigInt::from(10u32).pow(frac_part.len() as u32);
    Ok(BigRational::new(numer * sign, denom))
}

/// Exact rational from the bits of an `f64` (every finite float is rational).
pub fn from_f64(value: f64) -> Result<BigRational> {
    BigRational::from_float(value)
        .ok_or_else(|| Error::InvalidParameter(format!("{value} is not finite")))
}

pub fn is_strictly_positive(value: &BigRational) -> bool {
    value.is_positive()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(parse_decimal("0.5").unwrap(), ratio(1, 2));
        assert_eq!(parse_decimal("0.35").unwrap(), ratio(7, 20));
        assert_eq!(parse_decimal("2").unwrap(), ratio(2, 1));
        assert_eq!(parse_decimal("-0.25").unwrap(), -ratio(1, 4));
        assert!(parse_decimal("abc").is_err());
        assert!(parse_decimal(".").is_err());
    }

    #[test]
    fn conversion_to_f64_is_correctly_rounded() {
        assert_eq!(to_f64(&ratio(19, 24)), 19.0 / 24.0);
        assert_eq!(to_f64(&ratio(6, 7)), 6.0 / 7.0);
        assert_eq!(to_f64(&ratio(1, 3)), 1.0 / 3.0);
    }

    #[test]
    fn f64_round_trip() {
        let r = from_f64(0.3).unwrap();
        assert_eq!(to_f64(&r), 0.3);
    }
}

//! Exact rational scalars used for every cost computation in this crate.
//!
//! Costs travel as arbitrary-precision rationals end to end; floats appear
//! only inside the LP engine's fast path and in diagnostic statistics.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

/// Errors produced while parsing cost literals.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NumberError {
    #[error("empty number literal")]
    Empty,
    #[error("malformed number literal `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

pub fn rat_zero() -> Rat {
    Rat::zero()
}

pub fn rat_one() -> Rat {
    Rat::one()
}

pub fn rat_int(v: i64) -> Rat {
    Rat::from_integer(BigInt::from(v))
}

pub fn rat_frac(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Parses a cost literal: an integer, a decimal fraction, or `p/q`.
///
/// Decimal strings are read exactly; `2.5` becomes 5/2, never a float.
pub fn parse_rat(text: &str) -> Result<Rat, NumberError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(NumberError::Empty);
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_int(num).ok_or_else(|| NumberError::Malformed(text.to_string()))?;
        let d = parse_int(den).ok_or_else(|| NumberError::Malformed(text.to_string()))?;
        if d.is_zero() {
            return Err(NumberError::ZeroDenominator(text.to_string()));
        }
        return Ok(Rat::new(n, d));
    }
    let (sign, body) = match s.as_bytes()[0] {
        b'-' => (-1, &s[1..]),
        b'+' => (1, &s[1..]),
        _ => (1, s),
    };
    if body.is_empty() {
        return Err(NumberError::Malformed(text.to_string()));
    }
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(NumberError::Malformed(text.to_string()));
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(NumberError::Malformed(text.to_string()));
    }
    let digits = format!("{}{}", int_part, frac_part);
    let digits = if digits.is_empty() { "0".to_string() } else { digits };
    let num: BigInt = digits.parse().map_err(|_| NumberError::Malformed(text.to_string()))?;
    let den = BigInt::from(10u32).pow(frac_part.len() as u32);
    Ok(Rat::new(num * sign, den))
}

fn parse_int(s: &str) -> Option<BigInt> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    s.parse().ok()
}

/// Canonical textual form: integers plain, terminating decimals as decimals,
/// everything else as `p/q`. `parse_rat(format_rat(x)) == x` always.
pub fn format_rat(value: &Rat) -> String {
    let num = value.numer();
    let den = value.denom();
    if den.is_one() {
        return num.to_string();
    }
    // A reduced fraction has a terminating decimal expansion exactly when the
    // denominator factors as 2^a * 5^b.
    let (mut d, mut twos, mut fives) = (den.clone(), 0u32, 0u32);
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&d % &two).is_zero() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() {
        return format!("{}/{}", num, den);
    }
    let shift = twos.max(fives);
    let scale = BigInt::from(10u32).pow(shift);
    let scaled = (num * &scale) / den;
    let neg = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let digits = if digits.len() <= shift as usize {
        format!("{}{}", "0".repeat(shift as usize + 1 - digits.len()), digits)
    } else {
        digits
    };
    let split = digits.len() - shift as usize;
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    out.push_str(&digits[..split]);
    if shift > 0 {
        out.push('.');
        out.push_str(&digits[split..]);
    }
    out
}

pub fn rat_to_f64(value: &Rat) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Exact lift of a finite f64 into a rational.
pub fn f64_to_rat(value: f64) -> Option<Rat> {
    Rat::from_float(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_integers_and_decimals_exactly() {
        assert_eq!(parse_rat("3").unwrap(), rat_int(3));
        assert_eq!(parse_rat("2.5").unwrap(), rat_frac(5, 2));
        assert_eq!(parse_rat("0.125").unwrap(), rat_frac(1, 8));
        assert_eq!(parse_rat("-0.5").unwrap(), rat_frac(-1, 2));
        assert_eq!(parse_rat("7/3").unwrap(), rat_frac(7, 3));
        assert_eq!(parse_rat("00.10").unwrap(), rat_frac(1, 10));
    }

    #[test]
    fn rejects_malformed_literals() {
        assert!(parse_rat("").is_err());
        assert!(parse_rat(".").is_err());
        assert!(parse_rat("1.2.3").is_err());
        assert!(parse_rat("1e3").is_err());
        assert!(parse_rat("1/0").is_err());
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(format_rat(&rat_int(4)), "4");
        assert_eq!(format_rat(&rat_frac(5, 2)), "2.5");
        assert_eq!(format_rat(&rat_frac(1, 8)), "0.125");
        assert_eq!(format_rat(&rat_frac(1, 3)), "1/3");
        assert_eq!(format_rat(&rat_frac(-3, 4)), "-0.75");
        assert_eq!(format_rat(&rat_frac(1, 10)), "0.1");
    }

    #[test]
    fn format_parse_round_trip() {
        for num in -40i64..=40 {
            for den in 1i64..=12 {
                let r = rat_frac(num, den);
                assert_eq!(parse_rat(&format_rat(&r)).unwrap(), r);
            }
        }
    }
}

//! Exact rational scalars backed by arbitrary-precision integers.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rat = BigRational;

pub fn rat(numer: i64, denom: i64) -> Rat {
    Rat::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Exact conversion of a finite f64 (every finite f64 is a dyadic rational).
pub fn rat_from_f64(x: f64) -> Result<Rat> {
    Rat::from_float(x).ok_or_else(|| Error::InvalidArgument(format!("non-finite value {x}")))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fall back for ratios whose numerator/denominator overflow f64
        // individually; scale both down first.
        let digits = r.numer().magnitude().to_string().len() as i64
            - r.denom().magnitude().to_string().len() as i64;
        let shift = BigInt::from(10).pow(digits.unsigned_abs() as u32);
        let (n, d) = if digits > 0 {
            ((r.numer() / &shift).to_f64(), r.denom().to_f64())
        } else {
            (r.numer().to_f64(), (r.denom() / &shift).to_f64())
        };
        match (n, d) {
            (Some(n), Some(d)) if d != 0.0 => n / d * 10f64.powi(digits as i32),
            _ => f64::NAN,
        }
    })
}

/// Parses `"p/q"`, integers, and plain decimal strings (e.g. `"-1.25"`).
pub fn parse_rational(s: &str) -> Result<Rat> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Config("empty rational literal".into()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad rational numerator in {s:?}")))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad rational denominator in {s:?}")))?;
        if d.is_zero() {
            return Err(Error::Config(format!("zero denominator in {s:?}")));
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let negative = int_part.trim_start().starts_with('-');
        let int_part = if int_part.is_empty() || int_part == "-" || int_part == "+" {
            format!("{int_part}0")
        } else {
            int_part.to_string()
        };
        let i: BigInt = int_part
            .parse()
            .map_err(|_| Error::Config(format!("bad decimal literal {s:?}")))?;
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::Config(format!("bad decimal literal {s:?}")));
        }
        let f: BigInt = frac_part
            .parse()
            .map_err(|_| Error::Config(format!("bad decimal literal {s:?}")))?;
        let scale = BigInt::from(10).pow(frac_part.len() as u32);
        let frac = Rat::new(f, scale);
        let whole = Rat::from_integer(i);
        return Ok(if negative { whole - frac } else { whole + frac });
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| Error::Config(format!("bad integer literal {s:?}")))?;
    Ok(Rat::from_integer(n))
}

/// Shortest exact text form: `"3"`, `"-2/3"`.
pub fn rat_to_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn factorial(n: usize) -> BigInt {
    (1..=n as u64)
        .map(BigInt::from)
        .fold(BigInt::one(), |a, b| a * b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fraction_integer_and_decimal() {
        assert_eq!(parse_rational("28/45").unwrap(), rat(28, 45));
        assert_eq!(parse_rational("-2/3").unwrap(), rat(-2, 3));
        assert_eq!(parse_rational("42").unwrap(), rat_int(42));
        assert_eq!(parse_rational("-1.25").unwrap(), rat(-5, 4));
        assert_eq!(parse_rational("0.5").unwrap(), rat(1, 2));
        assert_eq!(parse_rational(" 7 / 9 ").unwrap(), rat(7, 9));
    }

    #[test]
    fn rejects_malformed_literals() {
        for bad in ["", "1/0", "a/b", "1.2.3", "1.", "--3", "1e5/2", ".", "-"] {
            assert!(parse_rational(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn f64_round_trip_is_exact() {
        for x in [0.5, -0.1, 1.0 / 3.0, 2e-30, 123456.789] {
            assert_eq!(rat_to_f64(&rat_from_f64(x).unwrap()), x);
        }
    }

    #[test]
    fn display_form() {
        assert_eq!(rat_to_string(&rat(-2, 3)), "-2/3");
        assert_eq!(rat_to_string(&rat(6, 3)), "2");
    }

    #[test]
    fn factorial_values() {
        assert_eq!(factorial(0), BigInt::from(1));
        assert_eq!(factorial(5), BigInt::from(120));
    }
}

//! Numeric types used for rates.
//!
//! Every computation that touches rates is generic over [`Rate`], which is
//! implemented for `f64` (fast, tolerance-based comparisons) and for
//! [`Exact`] (128-bit rationals, exact comparisons). Model parameters are
//! always stored as [`Exact`] so the same model can be evaluated in either
//! mode without re-parsing.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational number.
pub type Exact = Ratio<i128>;

/// Scalar field in which rates are evaluated.
pub trait Rate:
    Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn from_exact(q: &Exact) -> Self;

    fn as_f64(&self) -> f64;

    /// Slack below which two values are considered equal.
    fn tolerance() -> Self;

    fn from_u64(n: u64) -> Self {
        Self::from_exact(&Exact::from_integer(n as i128))
    }

    /// Strictly positive beyond tolerance.
    fn is_active(&self) -> bool {
        *self > Self::tolerance()
    }

    /// `|self - other|` within tolerance.
    fn approx_eq(&self, other: &Self) -> bool {
        let diff = if *self > *other {
            self.clone() - other.clone()
        } else {
            other.clone() - self.clone()
        };
        diff <= Self::tolerance()
    }

    fn is_finite_rate(&self) -> bool {
        true
    }

    /// Text form used in reports: shortest decimal for `f64`, `p/q` for rationals.
    fn to_text(&self) -> String;
}

impl Rate for f64 {
    fn from_exact(q: &Exact) -> Self {
        // numerator / denominator in f64; exact for dyadic rationals
        ToPrimitive::to_f64(q).unwrap_or(f64::NAN)
    }

    fn as_f64(&self) -> f64 {
        *self
    }

    fn tolerance() -> Self {
        1e-12
    }

    fn is_finite_rate(&self) -> bool {
        self.is_finite()
    }

    fn to_text(&self) -> String {
        format!("{self}")
    }
}

impl Rate for Exact {
    fn from_exact(q: &Exact) -> Self {
        *q
    }

    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn tolerance() -> Self {
        Exact::zero()
    }

    fn to_text(&self) -> String {
        format_exact(self)
    }
}

pub fn min<T: Rate>(a: &T, b: &T) -> T {
    if a <= b {
        a.clone()
    } else {
        b.clone()
    }
}

pub fn max<T: Rate>(a: &T, b: &T) -> T {
    if a >= b {
        a.clone()
    } else {
        b.clone()
    }
}

/// Positive part `[a - b]^+`.
pub fn pos_diff<T: Rate>(a: &T, b: &T) -> T {
    if a > b {
        a.clone() - b.clone()
    } else {
        T::zero()
    }
}

/// Parse a nonnegative or negative rational from `"3"`, `"0.25"`, `"-1.5"`,
/// `"1/3"` or `"2.5e-3"`. Decimal input is converted exactly.
pub fn parse_exact(text: &str) -> Result<Exact> {
    let s = text.trim();
    let err = |detail: &str| Error::Parse {
        what: "number",
        detail: format!("`{text}`: {detail}"),
    };
    if s.is_empty() {
        return Err(err("empty"));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_exact(num)?;
        let d = parse_exact(den)?;
        if d.is_zero() {
            return Err(err("zero denominator"));
        }
        return Ok(n / d);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => {
            let e: i32 = s[i + 1..].parse().map_err(|_| err("bad exponent"))?;
            (&s[..i], e)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err("no digits"));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err("not a number"));
    }
    if int_part.len() + frac_part.len() > 30 || exponent.abs() > 24 {
        return Err(err("too many digits for exact arithmetic"));
    }
    let joined = format!("{int_part}{frac_part}");
    let n: i128 = joined.parse().map_err(|_| err("not a number"))?;
    let scale = exponent - frac_part.len() as i32;
    let ten = 10i128;
    let mut q = if scale >= 0 {
        Exact::from_integer(n * ten.pow(scale as u32))
    } else {
        Exact::new(n, ten.pow((-scale) as u32))
    };
    if negative {
        q = -q;
    }
    Ok(q)
}

/// Exact value of an `f64` using its shortest round-trip decimal form, so
/// `0.3` becomes `3/10` rather than the binary approximation.
pub fn exact_from_f64(x: f64) -> Result<Exact> {
    if !x.is_finite() {
        return Err(Error::Parse {
            what: "number",
            detail: format!("{x} is not finite"),
        });
    }
    parse_exact(&format!("{x:e}"))
}

/// Canonical text form: integers as `"2"`, other values as `"3/10"`.
pub fn format_exact(q: &Exact) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn is_negative(q: &Exact) -> bool {
    q.is_negative()
}

/// Serde adapter storing an [`Exact`] in its canonical text form.
pub mod exact_text {
    use super::{format_exact, parse_exact, Exact};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Exact, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_exact(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Exact, D::Error> {
        let text = String::deserialize(d)?;
        parse_exact(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(parse_exact("0.25").unwrap(), Exact::new(1, 4));
        assert_eq!(parse_exact("0.3").unwrap(), Exact::new(3, 10));
        assert_eq!(parse_exact("-1.5").unwrap(), Exact::new(-3, 2));
        assert_eq!(parse_exact("1/3").unwrap(), Exact::new(1, 3));
        assert_eq!(parse_exact("2.5e-3").unwrap(), Exact::new(1, 400));
        assert_eq!(parse_exact("4").unwrap(), Exact::from_integer(4));
        assert_eq!(parse_exact(".5").unwrap(), Exact::new(1, 2));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_exact("").is_err());
        assert!(parse_exact("abc").is_err());
        assert!(parse_exact("1/0").is_err());
        assert!(parse_exact("1.2.3").is_err());
    }

    #[test]
    fn f64_round_trip_uses_shortest_decimal() {
        assert_eq!(exact_from_f64(0.3).unwrap(), Exact::new(3, 10));
        assert_eq!(exact_from_f64(1e-3).unwrap(), Exact::new(1, 1000));
        assert_eq!(exact_from_f64(2.0).unwrap(), Exact::from_integer(2));
    }

    #[test]
    fn canonical_format() {
        assert_eq!(format_exact(&Exact::new(3, 10)), "3/10");
        assert_eq!(format_exact(&Exact::from_integer(-2)), "-2");
        let q = Exact::new(7, 4);
        assert_eq!(parse_exact(&format_exact(&q)).unwrap(), q);
    }

    #[test]
    fn positive_part() {
        assert_eq!(pos_diff(&3.0, &1.0), 2.0);
        assert_eq!(pos_diff(&1.0, &3.0), 0.0);
        let a = Exact::new(1, 2);
        assert_eq!(pos_diff(&a, &Exact::one()), Exact::zero());
    }
}

//! Decimal fixed-point numbers with four fractional digits.
//!
//! Every threshold, band percentage and deviation in the gate is carried as a
//! [`Fixed`]. Intermediate products use `i128` and are rounded half-to-even
//! back to four digits, so all comparisons are exact and platform independent.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of raw units per whole unit.
pub const SCALE: i64 = 10_000;
const FRACTION_DIGITS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFixedError {
    #[error("empty decimal string")]
    Empty,
    #[error("invalid decimal `{0}`")]
    Invalid(String),
    #[error("decimal `{0}` has more than 4 fractional digits")]
    TooPrecise(String),
    #[error("decimal `{0}` is out of range")]
    Overflow(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed(i64);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(SCALE);
    pub const HUNDRED: Fixed = Fixed(100 * SCALE);

    pub const fn from_raw(raw: i64) -> Self {
        Fixed(raw)
    }

    pub const fn from_int(value: i64) -> Self {
        Fixed(value * SCALE)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn abs(self) -> Self {
        Fixed(self.0.abs())
    }

    /// `self * numerator / denominator`, computed exactly and rounded once.
    ///
    /// Panics if `denominator` is zero.
    pub fn mul_div(self, numerator: Fixed, denominator: Fixed) -> Fixed {
        let n = i128::from(self.0) * i128::from(numerator.0);
        Fixed(narrow(div_round_half_even(n, i128::from(denominator.0))))
    }

    /// Ratio of two integers as a fixed-point value. Panics if `den` is zero.
    pub fn ratio(num: i64, den: i64) -> Fixed {
        let n = i128::from(num) * i128::from(SCALE);
        Fixed(narrow(div_round_half_even(n, i128::from(den))))
    }

    /// Linear interpolation `self + (other - self) * step / steps`.
    pub fn lerp(self, other: Fixed, step: i64, steps: i64) -> Fixed {
        assert!(steps > 0, "interpolation needs a positive step count");
        let delta = i128::from(other.0 - self.0) * i128::from(step);
        Fixed(self.0 + narrow(div_round_half_even(delta, i128::from(steps))))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }
}

fn narrow(v: i128) -> i64 {
    i64::try_from(v).expect("fixed-point overflow")
}

/// Integer division rounding to nearest, ties to even.
pub(crate) fn div_round_half_even(n: i128, d: i128) -> i128 {
    assert!(d != 0, "fixed-point division by zero");
    let (n, d) = if d < 0 { (-n, -d) } else { (n, d) };
    let q = n.div_euclid(d);
    let r = n.rem_euclid(d);
    let twice = 2 * r;
    if twice > d || (twice == d && q % 2 != 0) {
        q + 1
    } else {
        q
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 + rhs.0)
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 - rhs.0)
    }
}

impl Mul for Fixed {
    type Output = Fixed;

    fn mul(self, other: Fixed) -> Fixed {
        let n = i128::from(self.0) * i128::from(other.0);
        Fixed(narrow(div_round_half_even(n, i128::from(SCALE))))
    }
}

/// Panics if the divisor is zero.
impl Div for Fixed {
    type Output = Fixed;

    fn div(self, other: Fixed) -> Fixed {
        self.mul_div(Fixed::ONE, other)
    }
}

impl Neg for Fixed {
    type Output = Fixed;
    fn neg(self) -> Fixed {
        Fixed(-self.0)
    }
}

impl From<i64> for Fixed {
    fn from(v: i64) -> Self {
        Fixed::from_int(v)
    }
}

impl From<u64> for Fixed {
    fn from(v: u64) -> Self {
        Fixed::from_int(i64::try_from(v).expect("count exceeds fixed-point range"))
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let int = abs / SCALE as u64;
        let frac = abs % SCALE as u64;
        if frac == 0 {
            write!(f, "{sign}{int}")
        } else {
            let digits = format!("{frac:04}");
            write!(f, "{sign}{int}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl FromStr for Fixed {
    type Err = ParseFixedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        if text.is_empty() {
            return Err(ParseFixedError::Empty);
        }
        let (negative, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text.strip_prefix('+').unwrap_or(text)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if int_part.is_empty()
            || !all_digits(int_part)
            || !all_digits(frac_part)
            || (body.contains('.') && frac_part.is_empty())
        {
            return Err(ParseFixedError::Invalid(s.to_string()));
        }
        if frac_part.len() > FRACTION_DIGITS {
            return Err(ParseFixedError::TooPrecise(s.to_string()));
        }
        let overflow = || ParseFixedError::Overflow(s.to_string());
        let int: i64 = int_part.parse().map_err(|_| overflow())?;
        let mut frac: i64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| overflow())? };
        for _ in frac_part.len()..FRACTION_DIGITS {
            frac *= 10;
        }
        let raw = int.checked_mul(SCALE).and_then(|v| v.checked_add(frac)).ok_or_else(overflow)?;
        Ok(Fixed(if negative { -raw } else { raw }))
    }
}

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fixed {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct FixedVisitor;

        impl Visitor<'_> for FixedVisitor {
            type Value = Fixed;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal string with at most 4 fractional digits")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Fixed, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Fixed, E> {
                v.checked_mul(SCALE).map(Fixed).ok_or_else(|| E::custom("integer out of range"))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Fixed, E> {
                i64::try_from(v)
                    .ok()
                    .and_then(|v| v.checked_mul(SCALE))
                    .map(Fixed)
                    .ok_or_else(|| E::custom("integer out of range"))
            }
        }

        deserializer.deserialize_any(FixedVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fx(s: &str) -> Fixed {
        s.parse().unwrap()
    }

    #[test]
    fn parses_and_prints() {
        assert_eq!(fx("490.5").raw(), 4_905_000);
        assert_eq!(fx("-0.0001").raw(), -1);
        assert_eq!(fx("12").to_string(), "12");
        assert_eq!(fx("12.3400").to_string(), "12.34");
        assert_eq!(fx("-5").to_string(), "-5");
        assert_eq!(fx("-0.5").to_string(), "-0.5");
    }

    #[test]
    fn rejects_bad_text() {
        assert_eq!("".parse::<Fixed>(), Err(ParseFixedError::Empty));
        assert!(matches!("1.23456".parse::<Fixed>(), Err(ParseFixedError::TooPrecise(_))));
        for bad in ["abc", "1.", ".5", "1.2.3", "--1", "1e3"] {
            assert!(bad.parse::<Fixed>().is_err(), "{bad}");
        }
    }

    #[test]
    fn rounds_half_to_even() {
        assert_eq!(div_round_half_even(5, 2), 2);
        assert_eq!(div_round_half_even(7, 2), 4);
        assert_eq!(div_round_half_even(-5, 2), -2);
        assert_eq!(div_round_half_even(-7, 2), -4);
        assert_eq!(div_round_half_even(10, 3), 3);
        assert_eq!(div_round_half_even(11, 3), 4);
        assert_eq!(Fixed::ratio(1, 3).to_string(), "0.3333");
        assert_eq!(Fixed::ratio(2, 3).to_string(), "0.6667");
    }

    #[test]
    fn arithmetic_is_exact_on_table_values() {
        let bound = Fixed::from_int(400).mul_div(Fixed::from_int(108), Fixed::HUNDRED);
        assert_eq!(bound, Fixed::from_int(432));
        assert_eq!(Fixed::from_int(450) * fx("1.09"), fx("490.5"));
        assert_eq!(Fixed::from_int(500).lerp(Fixed::from_int(400), 6, 12), Fixed::from_int(450));
    }

    #[test]
    fn serde_uses_strings() {
        let json = serde_json::to_string(&fx("1.25")).unwrap();
        assert_eq!(json, "\"1.25\"");
        assert_eq!(serde_json::from_str::<Fixed>("\"1.25\"").unwrap(), fx("1.25"));
        assert_eq!(serde_json::from_str::<Fixed>("7").unwrap(), Fixed::from_int(7));
        assert!(serde_json::from_str::<Fixed>("1.5").is_err());
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(raw in -1_000_000_000_000i64..1_000_000_000_000) {
            let v = Fixed::from_raw(raw);
            prop_assert_eq!(v.to_string().parse::<Fixed>().unwrap(), v);
        }
    }
}

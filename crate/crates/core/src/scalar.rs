//! Numeric back-ends. Every quantity in the search is built from field
//! operations on the model parameters, so the same code runs on `f64` and on
//! exact big rationals.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub trait Scalar:
    Clone
    + Debug
    + Display
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
    + Neg<Output = Self>
{
    /// Short name used in reports.
    const MODE: &'static str;

    fn from_ratio(value: &BigRational) -> Self;

    /// Converts a float, exactly for the rational back-end.
    fn from_f64(value: f64) -> Self;

    fn to_f64(&self) -> f64;

    fn from_int(value: i64) -> Self;

    fn abs(&self) -> Self;

    /// Tolerance used to decide ties between distortions: zero when exact.
    fn tie_tolerance() -> Self;

    fn is_exact() -> bool;

    fn half() -> Self {
        Self::one() / Self::from_int(2)
    }

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    const MODE: &'static str = "float";

    fn from_ratio(value: &BigRational) -> Self {
        ToPrimitive::to_f64(value).unwrap_or(f64::NAN)
    }

    fn from_f64(value: f64) -> Self {
        value
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_int(value: i64) -> Self {
        value as f64
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn tie_tolerance() -> Self {
        1e-12
    }

    fn is_exact() -> bool {
        false
    }
}

impl Scalar for BigRational {
    const MODE: &'static str = "rational";

    fn from_ratio(value: &BigRational) -> Self {
        value.clone()
    }

    fn from_f64(value: f64) -> Self {
        BigRational::from_float(value).unwrap_or_else(BigRational::zero)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_int(value: i64) -> Self {
        BigRational::from_integer(BigInt::from(value))
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }

    fn tie_tolerance() -> Self {
        BigRational::zero()
    }

    fn is_exact() -> bool {
        true
    }
}

/// Parses `"1/3"`, `"0.4375"`, `"2"` or `"1e-3"` into an exact rational.
pub fn parse_ratio(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_ratio(num)?;
        let den = parse_ratio(den)?;
        if den.is_zero() {
            return None;
        }
        return Some(num / den);
    }
    if text.contains(['e', 'E']) {
        let value: f64 = text.parse().ok()?;
        return BigRational::from_float(value);
    }
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let mantissa: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
    let value = BigRational::new(mantissa, scale);
    Some(if negative { -value } else { value })
}

//! Non-negative exact rationals used for transition probabilities.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RationalError {
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("negative value {0}")]
    Negative(String),
    #[error("cannot parse rational {0:?}: expected \"num/den\"")]
    Parse(String),
}

/// A reduced, non-negative fraction.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(num: u64, den: u64) -> Result<Self, RationalError> {
        if den == 0 {
            return Err(RationalError::ZeroDenominator);
        }
        Ok(Rational(BigRational::new(num.into(), den.into())))
    }

    /// Panicking constructor for literals in builders and tests.
    pub fn frac(num: u64, den: u64) -> Self {
        Self::new(num, den).expect("literal rational")
    }

    pub fn from_big(value: BigRational) -> Result<Self, RationalError> {
        if value.is_negative() {
            Err(RationalError::Negative(value.to_string()))
        } else {
            Ok(Rational(value))
        }
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    /// `2^-exp`.
    pub fn pow2_neg(exp: u32) -> Self {
        Rational(BigRational::new(
            BigInt::one(),
            BigInt::one() << exp as usize,
        ))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn as_big(&self) -> &BigRational {
        &self.0
    }

    pub fn into_big(self) -> BigRational {
        self.0
    }

    /// `1 - self`, or `None` when `self > 1`.
    pub fn complement(&self) -> Option<Self> {
        let c = BigRational::one() - &self.0;
        (!c.is_negative()).then_some(Rational(c))
    }

    pub fn checked_sub(&self, rhs: &Self) -> Option<Self> {
        let d = &self.0 - &rhs.0;
        (!d.is_negative()).then_some(Rational(d))
    }

    pub fn pow(&self, exp: u32) -> Self {
        Rational(num_traits::pow(self.0.clone(), exp as usize))
    }

    pub fn recip(&self) -> Option<Self> {
        (!self.is_zero()).then(|| Rational(self.0.recip()))
    }

    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.0)
    }

    /// Bit length of the larger of numerator and denominator.
    pub fn bits(&self) -> u64 {
        ratio_bits(&self.0)
    }

    /// Denominator as a `u64`, when it fits.
    pub fn denom_u64(&self) -> Option<u64> {
        self.0.denom().to_u64()
    }

    pub fn numer_u64(&self) -> Option<u64> {
        self.0.numer().to_u64()
    }

    /// Smallest `ell >= 0` with `self >= 2^-ell`; `None` for zero.
    pub fn resolution_exponent(&self) -> Option<u32> {
        if self.is_zero() {
            return None;
        }
        let num: BigUint = self.0.numer().magnitude().clone();
        let den: BigUint = self.0.denom().magnitude().clone();
        let mut ell = 0u32;
        let mut scaled = num;
        while scaled < den {
            scaled <<= 1usize;
            ell += 1;
        }
        Some(ell)
    }
}

pub(crate) fn ratio_to_f64(r: &BigRational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // Scale down huge components before converting.
    let shift = ratio_bits(r).saturating_sub(1000) as usize;
    let n = r.numer() >> shift;
    let d = r.denom() >> shift;
    n.to_f64().unwrap_or(0.0) / d.to_f64().unwrap_or(f64::INFINITY)
}

pub(crate) fn ratio_bits(r: &BigRational) -> u64 {
    r.numer().bits().max(r.denom().bits())
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Rational {
    type Err = RationalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RationalError::Parse(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let n: BigInt = n.parse().map_err(|_| bad())?;
        let d: BigInt = d.parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(RationalError::ZeroDenominator);
        }
        Rational::from_big(BigRational::new(n, d))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a Rational> for &'a Rational {
    type Output = Rational;
    fn add(self, rhs: &Rational) -> Rational {
        Rational(&self.0 + &rhs.0)
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational(self.0 * rhs.0)
    }
}

impl<'a> Mul<&'a Rational> for &'a Rational {
    type Output = Rational;
    fn mul(self, rhs: &Rational) -> Rational {
        Rational(&self.0 * &rhs.0)
    }
}

impl Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        Rational(self.0 / rhs.0)
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |a, b| a + b)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        Rational(iter.fold(BigRational::zero(), |a, b| a + &b.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_on_construction() {
        let r = Rational::frac(6, 8);
        assert_eq!(r.to_string(), "3/4");
        assert_eq!(Rational::frac(0, 5).to_string(), "0/1");
    }

    #[test]
    fn rejects_zero_denominator_and_negatives() {
        assert_eq!(Rational::new(1, 0), Err(RationalError::ZeroDenominator));
        assert!("-1/2".parse::<Rational>().is_err());
        assert!("x/2".parse::<Rational>().is_err());
    }

    #[test]
    fn parse_display_roundtrip() {
        let r: Rational = "10/4".parse().unwrap();
        assert_eq!(r, Rational::frac(5, 2));
        assert_eq!(r.to_string().parse::<Rational>().unwrap(), r);
    }

    #[test]
    fn resolution_exponent_matches_powers_of_two() {
        assert_eq!(Rational::one().resolution_exponent(), Some(0));
        assert_eq!(Rational::frac(1, 2).resolution_exponent(), Some(1));
        assert_eq!(Rational::frac(1, 256).resolution_exponent(), Some(8));
        assert_eq!(Rational::frac(1, 257).resolution_exponent(), Some(9));
        assert_eq!(Rational::frac(3, 8).resolution_exponent(), Some(2));
        assert_eq!(Rational::zero().resolution_exponent(), None);
    }

    #[test]
    fn complement_and_sub() {
        assert_eq!(Rational::frac(1, 4).complement(), Some(Rational::frac(3, 4)));
        assert_eq!(Rational::frac(5, 4).complement(), None);
        assert_eq!(Rational::frac(1, 4).checked_sub(&Rational::frac(1, 2)), None);
    }

    #[test]
    fn huge_values_convert_to_f64() {
        let tiny = Rational::pow2_neg(2000);
        assert_eq!(tiny.to_f64(), 0.0);
        let half = Rational::from_big(BigRational::new(
            BigInt::one() << 3000usize,
            BigInt::from(2) << 3000usize,
        ))
        .unwrap();
        assert_eq!(half.to_f64(), 0.5);
    }
}

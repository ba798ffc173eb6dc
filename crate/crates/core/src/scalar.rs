//! Probability arithmetic shared by the floating-point and exact engines.
//!
//! Every exact computation in this crate is generic over [`Scalar`], which is
//! implemented for `f64` and for arbitrary-precision rationals
//! ([`BigRational`]). Masses read from instance files keep their rational form
//! when they were written as `"p/q"`, so an identity that holds algebraically can
//! be checked with zero error.

use std::fmt::{self, Debug, Display};
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Arithmetic needed by the exact enumeration engine.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn from_mass(mass: &Mass) -> Self;

    fn from_f64(value: f64) -> Self;

    fn from_ratio(num: u64, den: u64) -> Self;

    fn to_f64(&self) -> f64;

    /// True when a fraction-vector total has left the feasible region. Rational
    /// values are compared exactly; floats get a 1e-9 allowance for rounding.
    fn exceeds_one(&self) -> bool;
}

impl Scalar for f64 {
    fn from_mass(mass: &Mass) -> Self {
        mass.value()
    }

    fn from_f64(value: f64) -> Self {
        value
    }

    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn exceeds_one(&self) -> bool {
        *self > 1.0 + 1e-9
    }
}

impl Scalar for BigRational {
    fn from_mass(mass: &Mass) -> Self {
        match mass {
            Mass::Exact(r) => r.clone(),
            Mass::Real(v) => <Self as Scalar>::from_f64(*v),
        }
    }

    fn from_f64(value: f64) -> Self {
        BigRational::from_float(value).expect("finite probability")
    }

    fn from_ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn exceeds_one(&self) -> bool {
        *self > BigRational::one()
    }
}

/// A probability mass as it appears in an instance document.
///
/// `Exact` masses come from `"p/q"` strings and survive a serialization round
/// trip bit for bit; `Real` masses are plain binary floats.
#[derive(Clone, PartialEq)]
pub enum Mass {
    Real(f64),
    Exact(BigRational),
}

impl Mass {
    pub fn ratio(num: u64, den: u64) -> Self {
        Mass::Exact(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn zero() -> Self {
        Mass::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Mass::Exact(BigRational::one())
    }

    pub fn value(&self) -> f64 {
        match self {
            Mass::Real(v) => *v,
            Mass::Exact(r) => ToPrimitive::to_f64(r).unwrap_or(f64::NAN),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Mass::Exact(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Mass::Real(v) => *v == 0.0,
            Mass::Exact(r) => r.is_zero(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Mass::Real(v) => *v < 0.0,
            Mass::Exact(r) => r.is_negative(),
        }
    }

    /// `self - other`, exact when both operands are.
    pub fn minus(&self, other: &Mass) -> Mass {
        match (self, other) {
            (Mass::Exact(a), Mass::Exact(b)) => Mass::Exact(a - b),
            _ => Mass::Real(self.value() - other.value()),
        }
    }

    /// `self / other`, exact when both operands are.
    pub fn divided_by(&self, other: &Mass) -> Mass {
        match (self, other) {
            (Mass::Exact(a), Mass::Exact(b)) => Mass::Exact(a / b),
            _ => Mass::Real(self.value() / other.value()),
        }
    }

    /// Mass-by-value comparison used for the i.i.d. test.
    pub fn same_value(&self, other: &Mass) -> bool {
        match (self, other) {
            (Mass::Exact(a), Mass::Exact(b)) => a == b,
            _ => self.value() == other.value(),
        }
    }

    /// Sum of a list of masses; exact when every term is.
    pub fn total<'a>(masses: impl IntoIterator<Item = &'a Mass>) -> Mass {
        let mut exact = Some(BigRational::zero());
        let mut real = 0.0;
        for m in masses {
            real += m.value();
            exact = match (exact, m) {
                (Some(acc), Mass::Exact(r)) => Some(acc + r),
                _ => None,
            };
        }
        match exact {
            Some(r) => Mass::Exact(r),
            None => Mass::Real(real),
        }
    }
}

impl Debug for Mass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Display::fmt(self, f)
    }
}

impl Display for Mass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mass::Real(v) => write!(f, "{v}"),
            Mass::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
        }
    }
}

impl From<f64> for Mass {
    fn from(v: f64) -> Self {
        Mass::Real(v)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("malformed mass {0:?}: expected a number or a \"p/q\" string")]
pub struct ParseMassError(String);

impl FromStr for Mass {
    type Err = ParseMassError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || ParseMassError(s.to_string());
        if let Some((p, q)) = s.split_once('/') {
            let p: BigInt = p.trim().parse().map_err(|_| err())?;
            let q: BigInt = q.trim().parse().map_err(|_| err())?;
            if q.is_zero() {
                return Err(err());
            }
            return Ok(Mass::Exact(BigRational::new(p, q)));
        }
        if let Ok(p) = s.parse::<BigInt>() {
            return Ok(Mass::Exact(BigRational::from_integer(p)));
        }
        s.parse::<f64>().map(Mass::Real).map_err(|_| err())
    }
}

impl Serialize for Mass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Mass::Real(v) => serializer.serialize_f64(*v),
            Mass::Exact(_) => serializer.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Mass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MassVisitor;

        impl Visitor<'_> for MassVisitor {
            type Value = Mass;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a probability as a number or a \"p/q\" string")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Mass, E> {
                Ok(Mass::Real(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Mass, E> {
                Ok(Mass::Exact(BigRational::from_integer(BigInt::from(v))))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Mass, E> {
                Ok(Mass::Exact(BigRational::from_integer(BigInt::from(v))))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Mass, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(MassVisitor)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

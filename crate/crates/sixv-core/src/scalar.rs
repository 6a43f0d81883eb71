//! Numeric abstraction so the same combinatorics run in `f64` or exact rationals.

use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Field operations needed by weight tables, probabilities and transfer matrices.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// True when arithmetic is exact.
    const EXACT: bool;

    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn abs_val(&self) -> Self;

    /// Equality used for weight matching: exact for rationals, relative tolerance for floats.
    fn matches(&self, other: &Self, rel_tol: f64) -> bool;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs_val(&self) -> Self {
        libm::fabs(*self)
    }
    fn matches(&self, other: &Self, rel_tol: f64) -> bool {
        let scale = libm::fmax(libm::fabs(*self), libm::fabs(*other));
        libm::fabs(self - other) <= rel_tol * libm::fmax(scale, 1e-300)
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn abs_val(&self) -> Self {
        self.abs()
    }
    fn matches(&self, other: &Self, _rel_tol: f64) -> bool {
        self == other
    }
}

/// Exact rational `num/den`.
pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::from_ratio(num, den)
}

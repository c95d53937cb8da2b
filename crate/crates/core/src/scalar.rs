//! Scalar abstractions.
//!
//! [`Field`] is the minimum needed by the closed-form estimators (ratios of
//! sums, quadratic revenue), so those run on exact rationals as well as
//! floats. [`Real`] adds everything the iterative learners need.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use ndarray::{LinalgScalar, ScalarOperand};
use num_rational::Ratio;
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// An ordered field: enough for sums, products and ratios.
pub trait Field: Num + NumAssign + Copy + PartialOrd + Debug + Send + Sync + 'static {
    fn abs_value(self) -> Self;
    fn from_f64_approx(v: f64) -> Self;
    fn to_f64_approx(self) -> f64;

    fn from_count(n: usize) -> Self {
        let mut acc = Self::zero();
        for _ in 0..n {
            acc += Self::one();
        }
        acc
    }
}

macro_rules! float_field {
    ($t:ty) => {
        impl Field for $t {
            #[inline]
            fn abs_value(self) -> Self {
                self.abs()
            }
            #[inline]
            fn from_f64_approx(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64_approx(self) -> f64 {
                self as f64
            }
            #[inline]
            fn from_count(n: usize) -> Self {
                n as $t
            }
        }
    };
}

float_field!(f32);
float_field!(f64);

macro_rules! ratio_field {
    ($i:ty) => {
        impl Field for Ratio<$i> {
            fn abs_value(self) -> Self {
                if self < <Self as num_traits::Zero>::zero() {
                    -self
                } else {
                    self
                }
            }
            fn from_f64_approx(v: f64) -> Self {
                Ratio::<$i>::approximate_float(v).expect("value not representable as a ratio")
            }
            fn to_f64_approx(self) -> f64 {
                self.to_f64().unwrap_or(f64::NAN)
            }
            fn from_count(n: usize) -> Self {
                Ratio::from_integer(n as $i)
            }
        }
    };
}

ratio_field!(i64);
ratio_field!(i128);

/// Floating-point scalar used by the data model, learners and forests.
pub trait Real:
    Field
    + Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Display
    + LowerExp
    + FromStr
    + Default
    + Serialize
    + DeserializeOwned
{
    /// Lossless-enough conversion used for literals.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as Field>::from_f64_approx(v)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as Field>::to_f64_approx(self)
    }
}

impl Real for f32 {}
impl Real for f64 {}

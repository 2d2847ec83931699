//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits in a float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }

    /// Digits after the point in scientific notation that make a text
    /// round-trip exact.
    const EXACT_DIGITS: usize;
}

impl Real for f32 {
    const EXACT_DIGITS: usize = 8;
}

impl Real for f64 {
    const EXACT_DIGITS: usize = 16;
}

/// Formats a value so that parsing it back yields the identical bit pattern.
pub fn fmt_exact<T: Real>(v: T) -> String {
    format!("{:.*e}", T::EXACT_DIGITS, v)
}

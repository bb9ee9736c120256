//! Floating-point scalar abstraction shared by every kernel.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the geometry kernels are generic over.
///
/// Implemented for `f32` and `f64`. The default clip constants (in particular
/// the `1e-15` Lorentz clip) only mean something in double precision, so the
/// crate-root aliases all pin `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    /// Lossy conversion used for error reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `sinh(x) / x`, with the removable singularity at zero evaluated by series.
pub(crate) fn sinhc<T: Scalar>(x: T) -> T {
    if x.abs() < T::of(1e-4) {
        let x2 = x * x;
        T::one() + x2 / T::of(6.0) + x2 * x2 / T::of(120.0)
    } else {
        x.sinh() / x
    }
}

/// `d/dr [sinh(k r) / (k r)] / r` expressed in `x = k r`, divided by `k^2`.
///
/// Equals `(x cosh x - sinh x) / x^3`, which tends to `1/3` at zero.
pub(crate) fn sinhc_slope<T: Scalar>(x: T) -> T {
    if x.abs() < T::of(1e-2) {
        let x2 = x * x;
        T::one() / T::of(3.0) + x2 / T::of(30.0) + x2 * x2 / T::of(840.0)
    } else {
        (x * x.cosh() - x.sinh()) / (x * x * x)
    }
}

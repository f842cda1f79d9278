//! Scalar abstractions shared by the numeric parts of the crate.
//!
//! [`Field`] is the minimum needed for return arithmetic and attribution
//! (exact rationals qualify). [`Real`] adds the floating-point operations
//! needed for datasets with missing cells and for annualized metrics.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num};

/// Ring/field operations with ordering: enough for compounding and linking.
pub trait Field: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {}

impl<T> Field for T where T: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {}

/// IEEE floating point: `f32` or `f64`.
pub trait Real: Field + Float + FromPrimitive + Copy {
    /// Lossy conversion used when mixing literals into generic code.
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Product of `(1 + r)` over the slice.
pub fn growth_factor<T: Field>(returns: &[T]) -> T {
    returns.iter().fold(T::one(), |acc, r| acc * (T::one() + r.clone()))
}

/// Compounded return of the slice: `Π(1 + r) − 1`.
pub fn compound<T: Field>(returns: &[T]) -> T {
    growth_factor(returns) - T::one()
}

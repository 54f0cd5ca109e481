use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar accepted by the geometric and statistical code.
pub trait Real: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {
    /// Lossless for every integer the callers pass (pixel counts, sums).
    fn of_u64(v: u64) -> Self {
        <Self as FromPrimitive>::from_u64(v).expect("u64 is representable as a float")
    }

    fn of_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 is representable as a float")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl<T> Real for T where T: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {}

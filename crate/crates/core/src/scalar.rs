//! Scalar abstractions shared by the numeric modules.
//!
//! Geometry and clustering code is written against [`Scalar`] so it runs on
//! `f32` and `f64` alike. Assignment works over [`AssignCost`], which also
//! admits exact integer costs.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, Neg};

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating point: f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Entry type accepted by the Hungarian solver: any signed ordered ring.
///
/// Integers give exact results; floats must be finite.
pub trait AssignCost: Num + Copy + PartialOrd + Neg<Output = Self> + Debug {
    fn is_finite_cost(self) -> bool;
}

macro_rules! int_cost {
    ($($t:ty),*) => {$(
        impl AssignCost for $t {
            fn is_finite_cost(self) -> bool { true }
        }
    )*};
}
int_cost!(i8, i16, i32, i64, i128, isize);

impl AssignCost for f32 {
    fn is_finite_cost(self) -> bool {
        self.is_finite()
    }
}

impl AssignCost for f64 {
    fn is_finite_cost(self) -> bool {
        self.is_finite()
    }
}

//! Scalar abstraction shared by every score formula.
//!
//! Score arithmetic, normalization, the t-test and the retrieval metrics are
//! written once against [`Real`] and instantiated for `f32` and `f64`.
//! Provider responses arrive as `f64` on the wire and are cast on entry.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + NumCast
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal or wire value.
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 is representable in every Real")
    }

    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("count is representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

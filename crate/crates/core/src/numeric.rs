//! Scalar abstractions shared by the numeric parts of the crate.
//!
//! Window planning only needs ordered field arithmetic, so it is written
//! against [`Scalar`] and runs unchanged on `f32`, `f64` or an exact rational
//! such as `num_rational::Ratio<i64>`. Probability work (softmax, weighted
//! means) needs `exp`/`ln` and is written against [`Real`].

use num_traits::{Float, FromPrimitive, Num, NumCast, ToPrimitive};

/// Ordered field element: enough for window arithmetic.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + std::fmt::Debug {
    /// Builds a scalar from a small integer. Every implementor can represent these exactly.
    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("small integers are representable")
    }

    /// `self * num / den` for integer ratios, kept exact where the type allows.
    fn scale(self, num: i64, den: i64) -> Self {
        self * Self::from_int(num) / Self::from_int(den)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + std::fmt::Debug {}

/// Floating point scalar: f32 or f64.
pub trait Real: Scalar + Float + NumCast + std::iter::Sum {}

impl Real for f32 {}
impl Real for f64 {}

/// Weighted arithmetic mean. Returns `None` when the weights sum to zero.
pub fn weighted_mean<T: Real>(pairs: impl IntoIterator<Item = (T, T)>) -> Option<T> {
    let (num, den) = pairs
        .into_iter()
        .fold((T::zero(), T::zero()), |(n, d), (v, w)| (n + v * w, d + w));
    (den > T::zero()).then(|| num / den)
}

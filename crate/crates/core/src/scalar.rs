//! Floating-point scalar abstraction: f32 or f64.

use num_traits as nt;

/// Scalar trait the numeric core is generic over.
pub trait Real:
    nt::Float
    + nt::FloatConst
    + nt::FromPrimitive
    + nt::ToPrimitive
    + core::fmt::Debug
    + core::fmt::Display
    + core::iter::Sum
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Pull an `f64` literal into the generic scalar type.
#[inline]
pub fn cast<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must be representable in the scalar type")
}

/// Exact integer constant as a scalar.
#[inline]
pub fn int<T: Real>(k: i64) -> T {
    T::from_i64(k).expect("integer constant must be representable in the scalar type")
}

/// n! as a scalar, computed exactly in integers first.
pub fn factorial<T: Real>(n: u32) -> T {
    let mut acc: u128 = 1;
    for k in 2..=n as u128 {
        acc *= k;
    }
    T::from_u128(acc).expect("factorial must be representable")
}

/// Binomial coefficient C(n, k) as a scalar, exact integer arithmetic first.
pub fn binomial<T: Real>(n: u32, k: u32) -> T {
    if k > n {
        return T::zero();
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        acc = acc * (n as u128 - i) / (i + 1);
    }
    T::from_u128(acc).expect("binomial must be representable")
}

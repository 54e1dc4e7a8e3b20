//! Scalar abstraction shared by every solver.
//!
//! All physics is written against [`Real`] so the same code runs in `f64`
//! (the default everywhere) and `f32` (for quick, low-precision sweeps).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar used throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + std::fmt::LowerExp
    + Sum
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over a [`Real`].
pub type C<R> = Complex<R>;

#[inline]
pub fn c<R: Real>(re: R, im: R) -> C<R> {
    Complex::new(re, im)
}

#[inline]
pub fn cr<R: Real>(re: R) -> C<R> {
    Complex::new(re, R::zero())
}

/// `e^{i theta}`.
#[inline]
pub fn cis<R: Real>(theta: R) -> C<R> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn i_unit<R: Real>() -> C<R> {
    Complex::new(R::zero(), R::one())
}

/// Euclidean norm of a complex vector.
pub fn norm<R: Real>(v: &[C<R>]) -> R {
    v.iter().map(|z| z.norm_sqr()).sum::<R>().sqrt()
}

/// `<a|b>` with the first argument conjugated.
pub fn dot<R: Real>(a: &[C<R>], b: &[C<R>]) -> C<R> {
    a.iter()
        .zip(b)
        .fold(C::new(R::zero(), R::zero()), |acc, (x, y)| acc + x.conj() * y)
}

//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the solver can run on (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense vector helpers on slices. Vectors in ℝⁿ are plain `Vec<T>`.
pub mod vecops {
    use super::Scalar;

    pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(&x, &y)| x * y).sum()
    }

    pub fn norm<T: Scalar>(a: &[T]) -> T {
        dot(a, a).sqrt()
    }

    pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<T>()
            .sqrt()
    }

    pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
        a.iter().zip(b).map(|(&x, &y)| x - y).collect()
    }

    pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
        a.iter().zip(b).map(|(&x, &y)| x + y).collect()
    }

    pub fn scale<T: Scalar>(a: &[T], s: T) -> Vec<T> {
        a.iter().map(|&x| x * s).collect()
    }

    /// `a + s * b`
    pub fn axpy<T: Scalar>(a: &[T], s: T, b: &[T]) -> Vec<T> {
        a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
    }

    /// `(1 - s) * a + s * b`
    pub fn lerp<T: Scalar>(a: &[T], b: &[T], s: T) -> Vec<T> {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| x + s * (y - x))
            .collect()
    }

    pub fn max_abs<T: Scalar>(a: &[T]) -> T {
        a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

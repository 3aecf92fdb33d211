//! Scalar abstraction for the numerical core.
//!
//! The linear-algebra and optimal-control code is generic over the real
//! scalar so the same routines run in `f32` or `f64`. The compiler pipeline
//! itself uses the `f64` aliases at the crate root.

use num_traits::NumCast;

pub trait Scalar: nalgebra::RealField + Copy + NumCast + Default {
    /// Lossy conversion from `f64`, used for constants and tolerances.
    fn of(x: f64) -> Self {
        NumCast::from(x).expect("scalar conversion")
    }

    fn to_f64(self) -> f64 {
        NumCast::from(self).expect("scalar conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `|z|^2` for a complex number over any [`Scalar`].
pub fn cnorm_sqr<T: Scalar>(z: &num_complex::Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// `|z|` for a complex number over any [`Scalar`].
pub fn cnorm<T: Scalar>(z: &num_complex::Complex<T>) -> T {
    cnorm_sqr(z).sqrt()
}

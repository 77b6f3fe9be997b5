//! Scalar abstraction shared by the density, quadrature and channel code.
//!
//! Everything that only needs smooth real arithmetic plus the complementary
//! error function is written against [`Real`], which is implemented for `f32`
//! and `f64`. The acceptance tolerances of the toolkit (1e-9 on integrals,
//! 1e-6 bits on mutual information) are only reachable in `f64`; `f32` is
//! useful for quick exploratory scans.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Real scalar usable by the numerical core.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Default absolute tolerance for adaptive quadrature at this precision.
    const QUAD_TOL: f64;

    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Converts an `f64` literal. Panics only if the value is not representable,
    /// which cannot happen for the finite constants used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Scaled complementary error function `exp(x^2) * erfc(x)`.
    ///
    /// Below the switch point the product is formed directly; above it the
    /// Laplace continued fraction is evaluated bottom-up, which never forms the
    /// overflowing `exp(x^2)` factor.
    fn erfcx(self) -> Self {
        let x = self;
        if x < Self::lit(ERFCX_CF_SWITCH) {
            return (x * x).exp() * x.erfc();
        }
        // erfcx(x) = 1/sqrt(pi) * 1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))))
        let half = Self::lit(0.5);
        let mut tail = x;
        for k in (1..=ERFCX_CF_TERMS).rev() {
            tail = x + Self::lit(k as f64) * half / tail;
        }
        Self::FRAC_1_SQRT_PI() / tail
    }
}

const ERFCX_CF_SWITCH: f64 = 5.0;
const ERFCX_CF_TERMS: usize = 80;

trait FracOneSqrtPi {
    #[allow(non_snake_case)]
    fn FRAC_1_SQRT_PI() -> Self;
}

impl<T: Float + FloatConst> FracOneSqrtPi for T {
    #[inline]
    fn FRAC_1_SQRT_PI() -> Self {
        T::FRAC_2_SQRT_PI() / (T::one() + T::one())
    }
}

impl Real for f64 {
    const QUAD_TOL: f64 = 1e-11;

    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    const QUAD_TOL: f64 = 1e-6;

    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

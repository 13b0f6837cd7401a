//! Scalar abstractions.
//!
//! Continuous numerics (symbols, transforms, propagators, integrators) are
//! generic over [`Real`], implemented for `f32` and `f64`. Exponent
//! bookkeeping (admissibility ranges, decay exponents, Hölder exponent
//! construction) is generic over [`Exact`], which additionally covers the
//! rational types so those identities can be checked with zero tolerance.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive};
use rustfft::FftNum;

/// Floating-point scalar used by every grid-based computation.
pub trait Real:
    Float
    + FloatConst
    + FftNum
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field used for exponent arithmetic.
///
/// Floats satisfy it approximately, rationals exactly.
pub trait Exact: Clone + PartialOrd + Num + Signed + FromPrimitive + Debug {
    /// Largest integer not exceeding `self`, as `Self`.
    fn floor_int(&self) -> Self;
    fn to_f64_lossy(&self) -> f64;
    /// Absolute tolerance for equality checks; zero for exact types.
    fn eq_tolerance() -> f64;

    fn from_int(n: i64) -> Self {
        Self::from_i64(n).expect("integer representable")
    }

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }

    fn approx_eq(&self, other: &Self) -> bool {
        let d = (self.clone() - other.clone()).abs().to_f64_lossy();
        let scale = self.to_f64_lossy().abs().max(other.to_f64_lossy().abs()).max(1.0);
        d <= Self::eq_tolerance() * scale
    }

    /// `a <= b` up to the type's tolerance.
    fn le_tol(a: &Self, b: &Self) -> bool {
        a <= b || a.approx_eq(b)
    }
}

impl Exact for f64 {
    fn floor_int(&self) -> Self {
        self.floor()
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
    fn eq_tolerance() -> f64 {
        1e-12
    }
}

impl Exact for f32 {
    fn floor_int(&self) -> Self {
        self.floor()
    }
    fn to_f64_lossy(&self) -> f64 {
        f64::from(*self)
    }
    fn eq_tolerance() -> f64 {
        1e-5
    }
}

impl Exact for Ratio<i64> {
    fn floor_int(&self) -> Self {
        self.floor()
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn eq_tolerance() -> f64 {
        0.0
    }
}

impl Exact for Ratio<BigInt> {
    fn floor_int(&self) -> Self {
        self.floor()
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn eq_tolerance() -> f64 {
        0.0
    }
}

/// Japanese bracket `(1 + t²)^{1/2}`.
pub fn bracket<T: Real>(t: T) -> T {
    (T::one() + t * t).sqrt()
}

/// Surface area of the unit sphere `S_{n-1}` in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        // |S_{n-1}| = 2π^{n/2}/Γ(n/2); recursion |S_{n+1}| = 2π/n |S_{n-1}|
        _ => 2.0 * PI / (n as f64 - 2.0) * sphere_area(n - 2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn sphere_areas() {
        assert_eq!(sphere_area(1), 2.0);
        assert!((sphere_area(4) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn rational_floor_and_eq() {
        let x = Rational64::new(7, 2);
        assert_eq!(x.floor_int(), Rational64::from_integer(3));
        assert!(x.approx_eq(&Rational64::new(14, 4)));
        assert!(!x.approx_eq(&Rational64::new(15, 4)));
    }
}

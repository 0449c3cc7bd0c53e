//! Complex amplitudes with tolerance-based comparison.
//!
//! All rewrite side conditions (`1.t`, `0.t`, merging of equal summands) and
//! every probability computed by measurement go through this type, so an exact
//! backend could replace it without touching the rewrite logic.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

/// Default tolerance used for scalar equality.
pub const DEFAULT_EPS: f64 = 1e-10;

/// A complex amplitude. Both components are always finite.
#[derive(Clone, Copy, PartialEq)]
pub struct Scalar(Complex64);

impl Scalar {
    pub const ZERO: Scalar = Scalar(Complex64::new(0.0, 0.0));
    pub const ONE: Scalar = Scalar(Complex64::new(1.0, 0.0));
    pub const I: Scalar = Scalar(Complex64::new(0.0, 1.0));

    /// Builds a scalar, returning `None` if either component is NaN or infinite.
    pub fn new(re: f64, im: f64) -> Option<Scalar> {
        (re.is_finite() && im.is_finite()).then_some(Scalar(Complex64::new(re, im)))
    }

    pub fn real(re: f64) -> Scalar {
        Scalar::new(re, 0.0).expect("non-finite real scalar")
    }

    pub fn re(self) -> f64 {
        self.0.re
    }

    pub fn im(self) -> f64 {
        self.0.im
    }

    pub fn as_complex(self) -> Complex64 {
        self.0
    }

    pub fn from_complex(c: Complex64) -> Option<Scalar> {
        Scalar::new(c.re, c.im)
    }

    /// `|a|²`.
    pub fn modulus_sq(self) -> f64 {
        self.0.norm_sqr()
    }

    pub fn modulus(self) -> f64 {
        self.0.norm()
    }

    /// Componentwise comparison: `|re - re'| <= eps` and `|im - im'| <= eps`.
    pub fn approx_eq(self, other: Scalar, eps: f64) -> bool {
        (self.0.re - other.0.re).abs() <= eps && (self.0.im - other.0.im).abs() <= eps
    }

    pub fn is_zero(self, eps: f64) -> bool {
        self.approx_eq(Scalar::ZERO, eps)
    }

    pub fn is_one(self, eps: f64) -> bool {
        self.approx_eq(Scalar::ONE, eps)
    }

    /// Checked division; `None` when the divisor is (exactly) zero or the
    /// result overflows.
    pub fn checked_div(self, other: Scalar) -> Option<Scalar> {
        if other.0.re == 0.0 && other.0.im == 0.0 {
            return None;
        }
        Scalar::from_complex(self.0 / other.0)
    }

    /// Principal square root of a nonnegative real, as a scalar.
    pub fn sqrt_real(x: f64) -> Option<Scalar> {
        (x >= 0.0).then(|| Scalar::real(x.sqrt()))
    }
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::ZERO
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.im == 0.0 {
            write!(f, "{}", self.0.re)
        } else {
            write!(f, "{}{:+}i", self.0.re, self.0.im)
        }
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::real(x)
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 + rhs.0)
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 - rhs.0)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 * rhs.0)
    }
}

impl Mul<f64> for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: f64) -> Scalar {
        Scalar(self.0 * rhs)
    }
}

impl Div<f64> for Scalar {
    type Output = Scalar;
    fn div(self, rhs: f64) -> Scalar {
        Scalar(self.0 / rhs)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn modulus_sq_examples() {
        let h = Scalar::real(1.0 / 2f64.sqrt());
        assert!((h.modulus_sq() - 0.5).abs() < 1e-15);
        assert_eq!(Scalar::real(2.0).modulus_sq(), 4.0);
        assert_eq!(Scalar::I.modulus_sq(), 1.0);
    }

    #[test]
    fn approx_eq_examples() {
        let h = Scalar::real(1.0 / 2f64.sqrt());
        assert!(Scalar::ONE.approx_eq(Scalar::ONE, 1e-10));
        assert!((h * h).approx_eq(Scalar::real(0.5), 1e-10));
        assert!(!Scalar::ZERO.approx_eq(Scalar::real(1e-3), 1e-10));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Scalar::new(f64::NAN, 0.0).is_none());
        assert!(Scalar::new(0.0, f64::INFINITY).is_none());
        assert!(Scalar::ONE.checked_div(Scalar::ZERO).is_none());
    }

    fn scalar() -> impl Strategy<Value = Scalar> {
        (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(a, b)| Scalar::new(a, b).unwrap())
    }

    proptest! {
        #[test]
        fn approx_eq_reflexive_symmetric(a in scalar(), b in scalar(), eps in 0.0f64..1.0) {
            prop_assert!(a.approx_eq(a, eps));
            prop_assert_eq!(a.approx_eq(b, eps), b.approx_eq(a, eps));
        }

        #[test]
        fn modulus_sq_is_multiplicative(a in scalar(), b in scalar()) {
            let lhs = (a * b).modulus_sq();
            let rhs = a.modulus_sq() * b.modulus_sq();
            let tol = 4.0 * f64::EPSILON * rhs.max(f64::MIN_POSITIVE);
            prop_assert!((lhs - rhs).abs() <= tol, "{} vs {}", lhs, rhs);
        }
    }
}

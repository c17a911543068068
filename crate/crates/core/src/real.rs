//! Scalar abstraction so the closed-form providers, the metric algebra and the
//! integrators run in both `f64` and double-double precision.

use num_complex::Complex;
use num_traits::{Float, FloatConst};
use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use twofloat::TwoFloat;

pub trait Real:
    Float
    + FloatConst
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Send
    + Sync
    + 'static
{
    fn c(x: f64) -> Self;
    fn f(self) -> f64;

    fn ci(n: i64) -> Self {
        Self::c(n as f64)
    }
}

impl Real for f64 {
    #[inline]
    fn c(x: f64) -> Self {
        x
    }
    #[inline]
    fn f(self) -> f64 {
        self
    }
}

impl Real for DD {
    #[inline]
    fn c(x: f64) -> Self {
        DD(TwoFloat::from(x))
    }
    #[inline]
    fn f(self) -> f64 {
        self.0.hi() + self.0.lo()
    }
}

/// Double-double scalar used by the extended-precision paths.
///
/// Wraps [`TwoFloat`], replacing its division, reciprocal, `exp` and `ln`,
/// which only reach double accuracy, with full double-double versions.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct DD(pub TwoFloat);

impl DD {
    pub fn hi(self) -> f64 {
        self.0.hi()
    }

    pub fn lo(self) -> f64 {
        self.0.lo()
    }

    /// Long division with two correction quotients.
    fn quotient(a: TwoFloat, b: TwoFloat) -> TwoFloat {
        let q1 = a.hi() / b.hi();
        let r = a - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        TwoFloat::new_add(q1, q2) + q3
    }

    fn exp_dd(self) -> Self {
        let x = self.0;
        if !x.hi().is_finite() {
            return DD(Float::exp(x));
        }
        if x.hi() > 709.0 {
            return DD(TwoFloat::from(f64::INFINITY));
        }
        if x.hi() < -745.0 {
            return DD(TwoFloat::from(0.0));
        }
        let ln2 = <TwoFloat as FloatConst>::LN_2();
        let k = (x.hi() / std::f64::consts::LN_2).round();
        let r = (x - ln2 * k) / 1024.0;
        // exp(r) - 1 on the reduced argument, then (1 + s)^2 - 1 = 2s + s^2.
        let mut term = r;
        let mut s = r;
        for n in 2..30 {
            term = term * r / n as f64;
            s += term;
            if term.hi().abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..10 {
            s = s * 2.0 + s * s;
        }
        let sum = s + 1.0;
        let scale = 2f64.powi(k as i32);
        DD(TwoFloat::from(scale) * sum)
    }

    fn ln_dd(self) -> Self {
        let x = self.0;
        if !(x.hi() > 0.0) || !x.hi().is_finite() {
            return DD(Float::ln(x));
        }
        let mut y = DD(TwoFloat::from(x.hi().ln()));
        for _ in 0..2 {
            let e = (-y).exp_dd();
            y = y + self * e - DD(TwoFloat::from(1.0));
        }
        y
    }
}

impl From<f64> for DD {
    fn from(x: f64) -> Self {
        DD(TwoFloat::from(x))
    }
}

impl std::fmt::Display for DD {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Display::fmt(&self.0, f)
    }
}

macro_rules! dd_binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident, $body:expr) => {
        impl std::ops::$tr for DD {
            type Output = DD;
            #[inline]
            fn $m(self, rhs: DD) -> DD {
                let f: fn(TwoFloat, TwoFloat) -> TwoFloat = $body;
                DD(f(self.0, rhs.0))
            }
        }
        impl std::ops::$atr for DD {
            #[inline]
            fn $am(&mut self, rhs: DD) {
                *self = std::ops::$tr::$m(*self, rhs);
            }
        }
    };
}

dd_binop!(Add, add, AddAssign, add_assign, |a, b| a + b);
dd_binop!(Sub, sub, SubAssign, sub_assign, |a, b| a - b);
dd_binop!(Mul, mul, MulAssign, mul_assign, |a, b| a * b);
dd_binop!(Div, div, DivAssign, div_assign, DD::quotient);
dd_binop!(Rem, rem, RemAssign, rem_assign, |a, b| a % b);

impl std::ops::Neg for DD {
    type Output = DD;
    #[inline]
    fn neg(self) -> DD {
        DD(-self.0)
    }
}

impl num_traits::Zero for DD {
    fn zero() -> Self {
        DD(TwoFloat::from(0.0))
    }
    fn is_zero(&self) -> bool {
        self.0.hi() == 0.0
    }
}

impl num_traits::One for DD {
    fn one() -> Self {
        DD(TwoFloat::from(1.0))
    }
}

impl num_traits::Num for DD {
    type FromStrRadixErr = <TwoFloat as num_traits::Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        TwoFloat::from_str_radix(s, radix).map(DD)
    }
}

impl num_traits::ToPrimitive for DD {
    fn to_i64(&self) -> Option<i64> {
        self.0.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.0.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.f())
    }
}

impl num_traits::NumCast for DD {
    fn from<N: num_traits::ToPrimitive>(n: N) -> Option<Self> {
        <TwoFloat as num_traits::NumCast>::from(n).map(DD)
    }
}

macro_rules! dd_const {
    ($($name:ident),*) => {
        $(fn $name() -> Self { DD(<TwoFloat as FloatConst>::$name()) })*
    };
}

impl FloatConst for DD {
    dd_const!(
        E, FRAC_1_PI, FRAC_1_SQRT_2, FRAC_2_PI, FRAC_2_SQRT_PI, FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6,
        FRAC_PI_8, LN_10, LN_2, LOG10_E, LOG2_E, PI, SQRT_2
    );
}

macro_rules! dd_unary {
    ($($name:ident),*) => {
        $(fn $name(self) -> Self { DD(Float::$name(self.0)) })*
    };
}

macro_rules! dd_nullary {
    ($($name:ident),*) => {
        $(fn $name() -> Self { DD(<TwoFloat as Float>::$name()) })*
    };
}

macro_rules! dd_pred {
    ($($name:ident),*) => {
        $(fn $name(self) -> bool { Float::$name(self.0) })*
    };
}

impl Float for DD {
    dd_nullary!(nan, infinity, neg_infinity, neg_zero, min_value, min_positive_value, max_value, epsilon);
    dd_pred!(is_nan, is_infinite, is_finite, is_normal, is_sign_positive, is_sign_negative);
    dd_unary!(
        floor, ceil, round, trunc, fract, abs, signum, sqrt, exp2, log2, log10, cbrt, sin, cos, tan, asin,
        acos, atan, exp_m1, ln_1p, sinh, cosh, tanh, asinh, acosh, atanh
    );

    fn classify(self) -> std::num::FpCategory {
        Float::classify(self.0)
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        DD(DD::quotient(TwoFloat::from(1.0), self.0))
    }
    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { self.recip() } else { self };
        let mut e = n.unsigned_abs();
        let mut acc = DD::from(1.0);
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }
    fn powf(self, n: Self) -> Self {
        (self.ln_dd() * n).exp_dd()
    }
    fn exp(self) -> Self {
        self.exp_dd()
    }
    fn ln(self) -> Self {
        self.ln_dd()
    }
    fn log(self, base: Self) -> Self {
        self.ln_dd() / base.ln_dd()
    }
    fn max(self, other: Self) -> Self {
        if self >= other || other.is_nan() { self } else { other }
    }
    fn min(self, other: Self) -> Self {
        if self <= other || other.is_nan() { self } else { other }
    }
    fn abs_sub(self, other: Self) -> Self {
        if self > other { self - other } else { DD::from(0.0) }
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn atan2(self, other: Self) -> Self {
        DD(Float::atan2(self.0, other.0))
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        Float::integer_decode(self.0)
    }
}

pub fn to_c64<T: Real>(z: Complex<T>) -> Complex<f64> {
    Complex::new(z.re.f(), z.im.f())
}

pub fn from_c64<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::c(z.re), T::c(z.im))
}

#[inline]
pub fn abs2<T: Real>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub fn scale<T: Real>(z: Complex<T>, s: T) -> Complex<T> {
    Complex::new(z.re * s, z.im * s)
}

#[inline]
pub fn re<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dd(x: f64) -> DD {
        DD::from(x)
    }

    #[test]
    fn division_is_double_double() {
        let third = dd(1.0) / dd(3.0);
        assert_eq!((third * dd(3.0) - dd(1.0)).f(), 0.0);
        assert!((dd(3.0).recip() - third).f().abs() < 1e-32);
    }

    #[test]
    fn exp_ln_reference_values() {
        // ln 2 and e from their stored double-double constants.
        assert!((dd(2.0).ln() - DD::LN_2()).f().abs() < 1e-31);
        assert!((dd(1.0).exp() - DD::E()).f().abs() < 1e-31);
        assert!((dd(0.5).ln() + DD::LN_2()).f().abs() < 1e-31);
    }

    proptest! {
        #[test]
        fn field_identities(a in 0.01f64..100.0, b in 0.01f64..100.0) {
            let (x, y) = (dd(a) + dd(a * 1e-17), dd(b));
            let q = x / y;
            prop_assert!(((q * y - x) / x).f().abs() < 1e-31);
            let l = x.ln();
            prop_assert!(((l.exp() - x) / x).f().abs() < 1e-30);
            prop_assert!(((x * y).ln() - x.ln() - y.ln()).f().abs() < 1e-30 * (1.0 + l.f().abs()));
            prop_assert!(((x.powi(5) / x.powi(3)) / (x * x) - dd(1.0)).f().abs() < 1e-30);
        }
    }
}

//! Forward-mode dual numbers.
//!
//! The closed-form scale-series formulas are written once, generic over
//! [`Real`], and evaluated either on plain `f64` or on [`Dual`] to get exact
//! first derivatives with respect to one seeded parameter (the Lundberg
//! exponent, in practice).

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn exp_m1(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn exp_m1(self) -> Self {
        f64::exp_m1(self)
    }
}

/// `v + d·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Dual { v, d }
    }

    /// A variable seeded with unit derivative.
    pub fn var(v: f64) -> Self {
        Dual { v, d: 1.0 }
    }
}

impl Real for Dual {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual { v: e, d: self.d * e }
    }
    #[inline]
    fn exp_m1(self) -> Self {
        Dual { v: self.v.exp_m1(), d: self.d * self.v.exp() }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let v = self.v / o.v;
        Dual { v, d: (self.d - v * o.d) / o.v }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: f64) -> Dual {
        Dual { v: self.v + o, d: self.d }
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: f64) -> Dual {
        Dual { v: self.v - o, d: self.d }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: f64) -> Dual {
        Dual { v: self.v * o, d: self.d * o }
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: f64) -> Dual {
        Dual { v: self.v / o, d: self.d / o }
    }
}

/// `(1 - e^{-s x}) / s`, continuous through `s = 0` where it equals `x`.
///
/// Negative `s` is allowed: `exp_ratio(-g, x) = (e^{g x} - 1) / g`.
pub fn exp_ratio<T: Real>(s: T, x: f64) -> T {
    let t = s.value() * x;
    if t.abs() < 1e-5 {
        // x (1 - t/2 + t²/6 - t³/24)
        let st = s * x;
        (T::cst(1.0) - st * 0.5 + st * st / 6.0 - st * st * st / 24.0) * x
    } else {
        -((-s * x).exp_m1()) / s
    }
}

/// `(e^{t} - 1) / t`, continuous through zero.
pub fn expm1_ratio<T: Real>(t: T) -> T {
    if t.value().abs() < 1e-5 {
        T::cst(1.0) + t * 0.5 + t * t / 6.0 + t * t * t / 24.0
    } else {
        t.exp_m1() / t
    }
}

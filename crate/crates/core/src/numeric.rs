//! Working-precision scalars.
//!
//! Every real quantity in the crate is a [`rug::Float`] carrying the precision
//! of the [`WeightSpec`](crate::weight::WeightSpec) it was derived from. MPC is
//! not linked, so complex arithmetic is provided here by [`Complex`], a plain
//! pair of MPFR floats.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rug::float::Constant;
use rug::Float;

use crate::error::{Error, Result};

/// Parses a decimal literal at the requested precision without passing
/// through `f64`, so `0.7` means 7/10 to the last bit.
pub fn parse_real(prec: u32, text: &str) -> Result<Float> {
    let trimmed = text.trim();
    let parsed = Float::parse(trimmed)
        .map_err(|e| Error::BadConfig(format!("not a real number: {trimmed:?} ({e})")))?;
    Ok(Float::with_val(prec, parsed))
}

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

pub fn sqrt_pi(prec: u32) -> Float {
    pi(prec).sqrt()
}

/// `2^-bits` at precision `prec`.
pub fn pow2(prec: u32, exp: i32) -> Float {
    Float::with_val(prec, 1) << exp
}

/// `max(1, |values|...)`, the scale used to turn absolute residuals into
/// mixed absolute/relative ones.
pub fn unit_scale<'a>(prec: u32, values: impl IntoIterator<Item = &'a Float>) -> Float {
    let mut scale = Float::with_val(prec, 1);
    for v in values {
        if v.cmp_abs(&scale) == Some(std::cmp::Ordering::Greater) {
            scale = Float::with_val(prec, v.abs_ref());
        }
    }
    scale
}

/// Relative deviation `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: &Float, b: &Float, floor: &Float) -> Float {
    let prec = a.prec().max(b.prec());
    let diff = Float::with_val(prec, a - b).abs();
    let mut scale = Float::with_val(prec, a.abs_ref());
    let bb = Float::with_val(prec, b.abs_ref());
    if bb > scale {
        scale = bb;
    }
    if *floor > scale {
        scale = floor.clone();
    }
    if scale.is_zero() {
        return diff;
    }
    diff / scale
}

/// Decimal rendering with a fixed number of significant digits, used for all
/// report and table output so that files are byte-stable.
pub fn fmt_real(x: &Float, digits: usize) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    x.to_string_radix(10, Some(digits))
}

/// A complex number with MPFR components.
#[derive(Clone, PartialEq)]
pub struct Complex {
    pub re: Float,
    pub im: Float,
}

impl fmt::Debug for Complex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} + {}i)", fmt_real(&self.re, 20), fmt_real(&self.im, 20))
    }
}

impl Complex {
    pub fn new(re: Float, im: Float) -> Self {
        Complex { re, im }
    }

    pub fn from_f64(prec: u32, re: f64, im: f64) -> Self {
        Complex::new(Float::with_val(prec, re), Float::with_val(prec, im))
    }

    pub fn zero(prec: u32) -> Self {
        Complex::new(Float::new(prec), Float::new(prec))
    }

    pub fn from_real(x: Float) -> Self {
        let im = Float::new(x.prec());
        Complex::new(x, im)
    }

    pub fn prec(&self) -> u32 {
        self.re.prec()
    }

    pub fn conj(&self) -> Self {
        Complex::new(self.re.clone(), Float::with_val(self.prec(), -&self.im))
    }

    pub fn norm_sqr(&self) -> Float {
        let p = self.prec();
        Float::with_val(p, self.re.square_ref()) + Float::with_val(p, self.im.square_ref())
    }

    pub fn abs(&self) -> Float {
        self.re.clone().hypot(&self.im)
    }

    pub fn scale(&self, s: &Float) -> Self {
        let p = self.prec();
        Complex::new(Float::with_val(p, &self.re * s), Float::with_val(p, &self.im * s))
    }

    pub fn add_real(&self, s: &Float) -> Self {
        Complex::new(Float::with_val(self.prec(), &self.re + s), self.im.clone())
    }

    pub fn recip(&self) -> Self {
        let p = self.prec();
        let d = self.norm_sqr();
        Complex::new(
            Float::with_val(p, &self.re / &d),
            Float::with_val(p, -&self.im) / d,
        )
    }

    pub fn div(&self, other: &Complex) -> Self {
        self * &other.recip()
    }

    pub fn div_real(&self, s: &Float) -> Self {
        let p = self.prec();
        Complex::new(Float::with_val(p, &self.re / s), Float::with_val(p, &self.im / s))
    }

    pub fn square(&self) -> Self {
        self * self
    }

    /// Accumulates `self += w * v` for a real `w` and complex `v`.
    pub fn add_scaled(&mut self, w: &Float, v: &Complex) {
        let p = self.prec();
        let tr = Float::with_val(p, w * &v.re);
        let ti = Float::with_val(p, w * &v.im);
        self.re += tr;
        self.im += ti;
    }
}

impl<'a> Add<&'a Complex> for &'a Complex {
    type Output = Complex;
    fn add(self, o: &Complex) -> Complex {
        let p = self.prec();
        Complex::new(Float::with_val(p, &self.re + &o.re), Float::with_val(p, &self.im + &o.im))
    }
}

impl<'a> Sub<&'a Complex> for &'a Complex {
    type Output = Complex;
    fn sub(self, o: &Complex) -> Complex {
        let p = self.prec();
        Complex::new(Float::with_val(p, &self.re - &o.re), Float::with_val(p, &self.im - &o.im))
    }
}

impl<'a> Mul<&'a Complex> for &'a Complex {
    type Output = Complex;
    fn mul(self, o: &Complex) -> Complex {
        let p = self.prec();
        let re = Float::with_val(p, &self.re * &o.re) - Float::with_val(p, &self.im * &o.im);
        let im = Float::with_val(p, &self.re * &o.im) + Float::with_val(p, &self.im * &o.re);
        Complex::new(re, im)
    }
}

impl<'a> Mul<&'a Float> for &'a Complex {
    type Output = Complex;
    fn mul(self, s: &Float) -> Complex {
        self.scale(s)
    }
}

impl Neg for &Complex {
    type Output = Complex;
    fn neg(self) -> Complex {
        let p = self.prec();
        Complex::new(Float::with_val(p, -&self.re), Float::with_val(p, -&self.im))
    }
}

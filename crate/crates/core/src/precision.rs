//! Arbitrary-precision complex scalar.
//!
//! [`PrecisionComplex`] wraps an MPC value together with the decimal working
//! precision it was created at. Binary operations run at the larger of the two
//! operand precisions.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rug::float::Constant;
use rug::ops::{Pow, PowAssign, SubFrom};
use rug::{Complex, Float};

use crate::error::{Error, Result};

/// Smallest supported working precision.
pub const MIN_DIGITS: u32 = 15;

/// Extra digits carried internally above the requested precision.
pub const GUARD_DIGITS: u32 = 10;

/// Bits of mantissa needed to hold `digits` decimal digits.
pub fn digits_to_bits(digits: u32) -> u32 {
    ((digits as f64) * std::f64::consts::LOG2_10).ceil() as u32 + 4
}

/// A power of ten as a low-precision float, safe for any exponent range.
pub fn pow10(exp: i32) -> Float {
    Float::with_val(64, 10).pow(exp)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionComplex {
    z: Complex,
    digits: u32,
}

impl PrecisionComplex {
    fn wrap(z: Complex, digits: u32) -> Self {
        PrecisionComplex { z, digits }
    }

    /// Wrap an MPC value, rounding it to `digits`.
    pub fn from_complex(z: Complex, digits: u32) -> Self {
        let digits = digits.max(MIN_DIGITS);
        let prec = digits_to_bits(digits);
        if z.prec() == (prec, prec) {
            Self::wrap(z, digits)
        } else {
            Self::wrap(Complex::with_val(prec, z), digits)
        }
    }

    pub fn new(re: f64, im: f64, digits: u32) -> Self {
        let digits = digits.max(MIN_DIGITS);
        Self::wrap(Complex::with_val(digits_to_bits(digits), (re, im)), digits)
    }

    pub fn real(re: f64, digits: u32) -> Self {
        Self::new(re, 0.0, digits)
    }

    pub fn zero(digits: u32) -> Self {
        Self::new(0.0, 0.0, digits)
    }

    pub fn one(digits: u32) -> Self {
        Self::new(1.0, 0.0, digits)
    }

    pub fn i(digits: u32) -> Self {
        Self::new(0.0, 1.0, digits)
    }

    pub fn from_int(n: i64, digits: u32) -> Self {
        let digits = digits.max(MIN_DIGITS);
        Self::wrap(Complex::with_val(digits_to_bits(digits), n), digits)
    }

    pub fn pi(digits: u32) -> Self {
        let digits = digits.max(MIN_DIGITS);
        let p = Float::with_val(digits_to_bits(digits), Constant::Pi);
        Self::wrap(Complex::with_val(digits_to_bits(digits), (p, 0)), digits)
    }

    /// Primitive cube root of unity `exp(2πi/3)`.
    pub fn omega(digits: u32) -> Self {
        let two_pi_i = Self::pi(digits) * Self::new(0.0, 2.0, digits);
        (two_pi_i / Self::real(3.0, digits)).exp()
    }

    /// Parse a decimal literal such as `0.25`, `3` or `1e-4`.
    pub fn parse_real(text: &str, digits: u32) -> Result<Self> {
        let digits = digits.max(MIN_DIGITS);
        let prec = digits_to_bits(digits);
        let parsed = Float::parse(text.trim())
            .map_err(|_| Error::InvalidNumber(text.to_string()))?;
        let f = Float::with_val(prec, parsed);
        Ok(Self::wrap(Complex::with_val(prec, (f, 0)), digits))
    }

    /// Parse `re`, `re+imi`, `re-imi`, `imi` or `re,im`.
    pub fn parse(text: &str, digits: u32) -> Result<Self> {
        let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if t.is_empty() {
            return Err(Error::InvalidNumber(text.to_string()));
        }
        if let Some((re, im)) = t.split_once(',') {
            let re = Self::parse_real(re, digits)?;
            let im = Self::parse_real(im, digits)?;
            return Ok(re + im * Self::i(digits));
        }
        if let Some(body) = t.strip_suffix('i') {
            // find the sign that separates real and imaginary parts
            let bytes = body.as_bytes();
            let mut split = None;
            for k in (1..bytes.len()).rev() {
                let c = bytes[k] as char;
                let prev = bytes[k - 1] as char;
                if (c == '+' || c == '-') && prev != 'e' && prev != 'E' {
                    split = Some(k);
                    break;
                }
            }
            let (re, im) = match split {
                Some(k) => (&body[..k], &body[k..]),
                None => ("0", body),
            };
            let im = match im {
                "" | "+" => "1",
                "-" => "-1",
                s => s,
            };
            let re = Self::parse_real(re, digits)?;
            let im = Self::parse_real(im.trim_start_matches('+'), digits)?;
            return Ok(re + im * Self::i(digits));
        }
        Self::parse_real(&t, digits)
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn prec_bits(&self) -> u32 {
        digits_to_bits(self.digits)
    }

    pub fn as_complex(&self) -> &Complex {
        &self.z
    }

    pub fn into_complex(self) -> Complex {
        self.z
    }

    pub fn re(&self) -> &Float {
        self.z.real()
    }

    pub fn im(&self) -> &Float {
        self.z.imag()
    }

    /// Round (or extend) to another working precision.
    pub fn with_digits(&self, digits: u32) -> Self {
        Self::from_complex(self.z.clone(), digits)
    }

    pub fn abs(&self) -> Float {
        Float::with_val(self.prec_bits(), self.z.abs_ref())
    }

    /// Modulus as `f64`; saturates to 0 or infinity outside the f64 range.
    pub fn abs_f64(&self) -> f64 {
        self.abs().to_f64()
    }

    pub fn arg_f64(&self) -> f64 {
        Float::with_val(64, self.z.arg_ref()).to_f64()
    }

    pub fn is_zero(&self) -> bool {
        self.z.real().is_zero() && self.z.imag().is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.z.real().is_finite() && self.z.imag().is_finite()
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (self.z.real().to_f64(), self.z.imag().to_f64())
    }

    fn unary(&self, f: impl FnOnce(&mut Complex)) -> Self {
        let mut z = self.z.clone();
        f(&mut z);
        Self::wrap(z, self.digits)
    }

    pub fn exp(&self) -> Self {
        self.unary(|z| {
            z.exp_mut();
        })
    }

    /// Principal logarithm.
    pub fn ln(&self) -> Self {
        self.unary(|z| {
            z.ln_mut();
        })
    }

    /// Principal square root.
    pub fn sqrt(&self) -> Self {
        self.unary(|z| {
            z.sqrt_mut();
        })
    }

    /// Principal root of the given degree, `exp(ln(z)/n)`; zero maps to zero.
    pub fn root(&self, degree: u32) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        if degree == 2 {
            return self.sqrt();
        }
        let mut z = self.z.clone();
        z.ln_mut();
        z /= degree;
        z.exp_mut();
        Self::wrap(z, self.digits)
    }

    pub fn powi(&self, n: i64) -> Self {
        if n == 0 {
            return Self::one(self.digits);
        }
        let mut z = self.z.clone();
        z.pow_assign(n.unsigned_abs() as u32);
        if n < 0 {
            z.recip_mut();
        }
        Self::wrap(z, self.digits)
    }

    /// Principal power `exp(w·ln z)`.
    pub fn powc(&self, w: &Self) -> Self {
        let d = self.digits.max(w.digits);
        let lz = self.with_digits(d).ln();
        (lz * w).exp()
    }

    pub fn recip(&self) -> Self {
        self.unary(|z| {
            z.recip_mut();
        })
    }

    /// `1 - self`.
    pub fn one_minus(&self) -> Self {
        let mut z = self.z.clone();
        z.sub_from(1);
        Self::wrap(z, self.digits)
    }

    pub fn mul_f64(&self, x: f64) -> Self {
        self.unary(|z| *z *= x)
    }

    /// `re,im` with `sig` significant digits, the report encoding.
    pub fn to_pair_string(&self, sig: usize) -> String {
        format!(
            "{},{}",
            format_float(self.z.real(), sig),
            format_float(self.z.imag(), sig)
        )
    }

    /// Approximate equality in relative terms: `|a-b| <= tol·max(|a|,|b|,floor)`.
    pub fn rel_close(&self, other: &Self, tol: f64) -> bool {
        rel_error(self, other, 1e-300) <= tol
    }

    /// Compare moduli.
    pub fn cmp_abs(&self, other: &Self) -> Ordering {
        self.abs().partial_cmp(&other.abs()).unwrap_or(Ordering::Equal)
    }
}

/// `|a-b| / max(|a|, |b|, floor)` as `f64`.
pub fn rel_error(a: &PrecisionComplex, b: &PrecisionComplex, floor: f64) -> f64 {
    let diff = (a - b).abs();
    let mut den = a.abs();
    let bb = b.abs();
    if bb > den {
        den = bb;
    }
    let fl = Float::with_val(64, floor);
    if fl > den {
        den = fl;
    }
    Float::with_val(64, diff / den).to_f64()
}

/// Same as [`rel_error`] with the floor given as a power of ten, `10^(-floor_digits)`.
pub fn rel_error_digits(a: &PrecisionComplex, b: &PrecisionComplex, floor_digits: u32) -> Float {
    let diff = (a - b).abs();
    let mut den = a.abs();
    let bb = b.abs();
    if bb > den {
        den = bb;
    }
    let fl = pow10(-(floor_digits as i32));
    if fl > den {
        den = fl;
    }
    Float::with_val(64, diff / den)
}

/// Scientific notation with `sig` significant digits.
pub fn format_float(x: &Float, sig: usize) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    let s = x.to_string_radix(10, Some(sig.max(2)));
    s.replace('@', "")
}

impl fmt::Display for PrecisionComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sig = f.precision().unwrap_or(self.digits as usize);
        let re = format_float(self.z.real(), sig);
        if self.z.imag().is_zero() {
            return write!(f, "{re}");
        }
        let im = format_float(self.z.imag(), sig);
        if im.starts_with('-') {
            write!(f, "{re}{im}i")
        } else {
            write!(f, "{re}+{im}i")
        }
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident, $op:tt, $aop:tt) => {
        impl<'a> $tr<&'a PrecisionComplex> for &'a PrecisionComplex {
            type Output = PrecisionComplex;
            fn $m(self, rhs: &'a PrecisionComplex) -> PrecisionComplex {
                let d = self.digits.max(rhs.digits);
                PrecisionComplex::wrap(Complex::with_val(digits_to_bits(d), &self.z $op &rhs.z), d)
            }
        }
        impl $tr<PrecisionComplex> for PrecisionComplex {
            type Output = PrecisionComplex;
            fn $m(self, rhs: PrecisionComplex) -> PrecisionComplex {
                (&self).$m(&rhs)
            }
        }
        impl<'a> $tr<&'a PrecisionComplex> for PrecisionComplex {
            type Output = PrecisionComplex;
            fn $m(self, rhs: &'a PrecisionComplex) -> PrecisionComplex {
                (&self).$m(rhs)
            }
        }
        impl<'a> $tr<PrecisionComplex> for &'a PrecisionComplex {
            type Output = PrecisionComplex;
            fn $m(self, rhs: PrecisionComplex) -> PrecisionComplex {
                self.$m(&rhs)
            }
        }
        impl $atr<&PrecisionComplex> for PrecisionComplex {
            fn $am(&mut self, rhs: &PrecisionComplex) {
                if rhs.digits > self.digits {
                    *self = (&*self).$m(rhs);
                } else {
                    self.z $aop &rhs.z;
                }
            }
        }
        impl $atr<PrecisionComplex> for PrecisionComplex {
            fn $am(&mut self, rhs: PrecisionComplex) {
                self.$am(&rhs);
            }
        }
    };
}

binop!(Add, add, AddAssign, add_assign, +, +=);
binop!(Sub, sub, SubAssign, sub_assign, -, -=);
binop!(Mul, mul, MulAssign, mul_assign, *, *=);
binop!(Div, div, DivAssign, div_assign, /, /=);

impl Neg for PrecisionComplex {
    type Output = PrecisionComplex;
    fn neg(mut self) -> PrecisionComplex {
        self.z = -self.z;
        self
    }
}

impl Neg for &PrecisionComplex {
    type Output = PrecisionComplex;
    fn neg(self) -> PrecisionComplex {
        -self.clone()
    }
}

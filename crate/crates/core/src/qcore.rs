//! q-shifted factorials and modified theta functions.
//!
//! Provides `(a;q)_n` for integer, infinite and complex index, the base-inverted
//! factorial `(a;q^{-1})_n`, `θ(z;q) = (z, q/z; q)_∞` and the theta addition
//! formula residual used as an invariant check.

use rug::{Complex, Float};

use crate::error::{Error, Result};
use crate::precision::{digits_to_bits, pow10, PrecisionComplex, MIN_DIGITS};

/// The base `q` of a q-series, `0 < |q| < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct QBase {
    q: PrecisionComplex,
}

impl QBase {
    pub fn new(q: PrecisionComplex) -> Result<Self> {
        let m = q.abs();
        if q.is_zero() || m >= 1 || !q.is_finite() {
            return Err(Error::InvalidBase(format!(
                "need 0 < |q| < 1, got |q| = {}",
                m.to_f64()
            )));
        }
        Ok(QBase { q })
    }

    pub fn from_f64(q: f64, digits: u32) -> Result<Self> {
        Self::new(PrecisionComplex::real(q, digits))
    }

    pub fn value(&self) -> &PrecisionComplex {
        &self.q
    }

    pub fn digits(&self) -> u32 {
        self.q.digits()
    }

    pub fn abs_f64(&self) -> f64 {
        self.q.abs_f64()
    }

    pub fn ln_abs(&self) -> f64 {
        self.q.abs().ln().to_f64()
    }

    /// `q^b = exp(b log q)` with the principal logarithm.
    pub fn pow(&self, b: &PrecisionComplex) -> PrecisionComplex {
        self.q.powc(b)
    }

    pub fn powi(&self, n: i64) -> PrecisionComplex {
        self.q.powi(n)
    }

    /// The same base as a different power, `q^k`.
    pub fn power_base(&self, k: u32) -> Result<QBase> {
        QBase::new(self.q.powi(k as i64))
    }
}

/// Truncation parameters shared by products and series.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationControl {
    /// Relative tail bound at which summation or multiplication stops.
    pub tail_epsilon: Float,
    pub max_terms: usize,
    pub consecutive_small: usize,
    /// Series with convergence margin below this are refused.
    pub margin_floor: f64,
}

impl TruncationControl {
    pub const DEFAULT_MAX_TERMS: usize = 200_000;

    /// Tail bound `10^(-digits)` with default budgets.
    pub fn for_digits(digits: u32) -> Self {
        TruncationControl {
            tail_epsilon: pow10(-(digits.max(MIN_DIGITS) as i32)),
            max_terms: Self::DEFAULT_MAX_TERMS,
            consecutive_small: 3,
            margin_floor: 1e-3,
        }
    }

    pub fn with_max_terms(mut self, max_terms: usize) -> Self {
        self.max_terms = max_terms;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_terms < 64 {
            return Err(Error::Budget {
                max_terms: self.max_terms,
                what: "max_terms must be at least 64".into(),
            });
        }
        if self.consecutive_small < 2 || !(self.tail_epsilon > 0) {
            return Err(Error::InvalidNumber(
                "truncation control needs consecutive_small >= 2 and tail_epsilon > 0".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn ln_eps(&self) -> f64 {
        Float::with_val(64, self.tail_epsilon.ln_ref()).to_f64()
    }
}

/// Modulus below which a factor is treated as an exact zero, `10^(-digits+2)`.
pub fn pole_tolerance(digits: u32) -> Float {
    pow10(-(digits as i32) + 2)
}

pub(crate) fn is_negligible(z: &Complex, digits: u32) -> bool {
    let tol = pole_tolerance(digits);
    Float::with_val(64, z.abs_ref()) < tol
}

fn work_digits(a: &PrecisionComplex, q: &QBase) -> u32 {
    a.digits().max(q.digits())
}

/// Index of a q-shifted factorial.
#[derive(Clone, Debug, PartialEq)]
pub enum PochIndex {
    Finite(i64),
    Infinite,
    Complex(PrecisionComplex),
}

/// `(a;q)_n` for any integer `n`.
pub fn qpoch_n(a: &PrecisionComplex, q: &QBase, n: i64) -> Result<PrecisionComplex> {
    let digits = work_digits(a, q);
    let prec = digits_to_bits(digits);
    let mut prod = Complex::with_val(prec, 1);
    if n >= 0 {
        let mut t = Complex::with_val(prec, a.as_complex());
        for _ in 0..n {
            let f = Complex::with_val(prec, 1 - &t);
            prod *= &f;
            t *= q.value().as_complex();
        }
        return Ok(PrecisionComplex::from_complex(prod, digits));
    }
    let mut t = Complex::with_val(prec, a.as_complex());
    for j in 1..=(-n) {
        t /= q.value().as_complex();
        let f = Complex::with_val(prec, 1 - &t);
        if is_negligible(&f, digits) {
            return Err(Error::Pole(format!("(a;q)_{n} with a = q^{j}")));
        }
        prod *= &f;
    }
    prod.recip_mut();
    Ok(PrecisionComplex::from_complex(prod, digits))
}

/// `(a;q)_∞` with relative error at most `ctl.tail_epsilon`.
pub fn qpoch_inf(a: &PrecisionComplex, q: &QBase, ctl: &TruncationControl) -> Result<PrecisionComplex> {
    let digits = work_digits(a, q);
    let prec = digits_to_bits(digits);
    if a.is_zero() {
        return Ok(PrecisionComplex::one(digits));
    }
    let ln_a = a.abs().ln().to_f64();
    let ln_q = q.ln_abs();
    let abs_q = q.abs_f64();
    let ln_eps = ctl.ln_eps();
    let ln_half = -std::f64::consts::LN_2;
    let mut prod = Complex::with_val(prec, 1);
    let mut t = Complex::with_val(prec, a.as_complex());
    let mut n: usize = 0;
    loop {
        let ln_t = ln_a + n as f64 * ln_q;
        let f = Complex::with_val(prec, 1 - &t);
        if ln_t.abs() < 1.0 && is_negligible(&f, digits) {
            return Ok(PrecisionComplex::zero(digits));
        }
        prod *= &f;
        if ln_t < ln_half {
            // x = |a||q|^{n+1}; ln bound = ln x - ln(1-|q|) - ln(1-x)
            let ln_x = ln_t + ln_q;
            let x = ln_x.exp();
            let ln_bound = ln_x - (1.0 - abs_q).ln() - (1.0 - x).ln();
            if ln_bound <= ln_eps {
                break;
            }
        }
        n += 1;
        if n > ctl.max_terms {
            return Err(Error::Budget {
                max_terms: ctl.max_terms,
                what: "infinite q-product".into(),
            });
        }
        t *= q.value().as_complex();
    }
    Ok(PrecisionComplex::from_complex(prod, digits))
}

/// Nearest integer to `b` if `b` is an integer within tolerance.
pub(crate) fn as_integer(b: &PrecisionComplex) -> Option<i64> {
    let tol = pole_tolerance(b.digits());
    if Float::with_val(64, b.im().abs_ref()) >= tol {
        return None;
    }
    let r = Float::with_val(b.prec_bits(), b.re().round_ref());
    let diff = Float::with_val(64, b.re() - &r).abs();
    if diff < tol && r.to_f64().abs() < 1e15 {
        Some(r.to_f64() as i64)
    } else {
        None
    }
}

/// `(a;q)_b = (a;q)_∞/(q^b a;q)_∞` for complex `b`; integer `b` uses [`qpoch_n`].
pub fn qpoch_complex_index(
    a: &PrecisionComplex,
    q: &QBase,
    b: &PrecisionComplex,
    ctl: &TruncationControl,
) -> Result<PrecisionComplex> {
    if let Some(n) = as_integer(b) {
        return qpoch_n(a, q, n);
    }
    let shifted = q.pow(b) * a;
    let den = qpoch_inf(&shifted, q, ctl)?;
    if den.is_zero() {
        return Err(Error::Pole("(q^b a;q)_∞ vanishes".into()));
    }
    Ok(qpoch_inf(a, q, ctl)? / den)
}

/// Product `(a_1,…,a_k;q)_b`.
pub fn qpoch_multi(
    args: &[PrecisionComplex],
    q: &QBase,
    index: &PochIndex,
    ctl: &TruncationControl,
) -> Result<PrecisionComplex> {
    let mut prod = PrecisionComplex::one(q.digits());
    for a in args {
        let v = match index {
            PochIndex::Finite(n) => qpoch_n(a, q, *n)?,
            PochIndex::Infinite => qpoch_inf(a, q, ctl)?,
            PochIndex::Complex(b) => qpoch_complex_index(a, q, b, ctl)?,
        };
        prod *= v;
    }
    Ok(prod)
}

/// `(a;q^{-1})_n` via `q^{-C(n,2)}(-a)^n(1/a;q)_n`.
pub fn qpoch_base_inverted(a: &PrecisionComplex, q: &QBase, n: u32) -> Result<PrecisionComplex> {
    let digits = work_digits(a, q);
    if n == 0 {
        return Ok(PrecisionComplex::one(digits));
    }
    if a.is_zero() {
        return Err(Error::ZeroArgument("(a;q^-1)_n with a = 0".into()));
    }
    let n = n as i64;
    let qb = q.powi(n * (n - 1) / 2);
    let sign = (-a).powi(n);
    Ok(sign * qpoch_n(&a.recip(), q, n)? / qb)
}

/// `θ(z;q) = (z, q/z; q)_∞`.
pub fn theta(z: &PrecisionComplex, q: &QBase, ctl: &TruncationControl) -> Result<PrecisionComplex> {
    if z.is_zero() {
        return Err(Error::ZeroArgument("theta at z = 0".into()));
    }
    let a = qpoch_inf(z, q, ctl)?;
    if a.is_zero() {
        return Ok(a);
    }
    let b = qpoch_inf(&(q.value() / z), q, ctl)?;
    Ok(a * b)
}

/// Product `θ(z_1,…,z_k;q)`.
pub fn theta_multi(zs: &[PrecisionComplex], q: &QBase, ctl: &TruncationControl) -> Result<PrecisionComplex> {
    let mut prod = PrecisionComplex::one(q.digits());
    for z in zs {
        prod *= theta(z, q, ctl)?;
    }
    Ok(prod)
}

/// LHS − RHS of the theta addition formula
/// `θ(e, e/c, qa/d, qc/(ad)) − θ(d, d/c, qa/e, qc/(ae)) = (d/c) θ(a, c/a, e/d, de/c)`.
pub fn theta_addition_residual(
    a: &PrecisionComplex,
    c: &PrecisionComplex,
    d: &PrecisionComplex,
    e: &PrecisionComplex,
    q: &QBase,
    ctl: &TruncationControl,
) -> Result<PrecisionComplex> {
    for (name, v) in [("a", a), ("c", c), ("d", d), ("e", e)] {
        if v.is_zero() {
            return Err(Error::ZeroArgument(format!("theta addition formula with {name} = 0")));
        }
    }
    let qv = q.value();
    let t1 = theta_multi(
        &[e.clone(), e / c, qv * a / d, qv * c / (a * d)],
        q,
        ctl,
    )?;
    let t2 = theta_multi(
        &[d.clone(), d / c, qv * a / e, qv * c / (a * e)],
        q,
        ctl,
    )?;
    let t3 = theta_multi(&[a.clone(), c / a, e / d, d * e / c], q, ctl)?;
    Ok(t1 - t2 - d / c * t3)
}

/// Smallest `min_k |1 - x q^k|` over `k` in `range`, a measure of how close `x`
/// is to the lattice `q^{-k}`.
pub fn lattice_distance(x: &PrecisionComplex, q: &QBase, range: std::ops::RangeInclusive<i64>) -> f64 {
    if x.is_zero() {
        return 1.0;
    }
    let (xr, xi) = x.to_f64_pair();
    let (qr, qi) = q.value().to_f64_pair();
    let xm = (xr * xr + xi * xi).sqrt();
    let qm = (qr * qr + qi * qi).sqrt();
    let xa = xi.atan2(xr);
    let qa = qi.atan2(qr);
    let mut best = f64::INFINITY;
    for k in range {
        let m = xm * qm.powi(k as i32);
        let ang = xa + k as f64 * qa;
        let re = 1.0 - m * ang.cos();
        let im = -m * ang.sin();
        let d = (re * re + im * im).sqrt();
        if d < best {
            best = d;
        }
    }
    best
}

/// Exponent range worth scanning for lattice proximity of `x`: near `k₀` with
/// `|x q^{k₀}| ≈ 1`.
pub fn lattice_window(x: &PrecisionComplex, q: &QBase) -> (i64, i64) {
    let lx = x.abs().ln().to_f64();
    let lq = q.ln_abs();
    if !lx.is_finite() {
        return (0, 0);
    }
    let k0 = (-lx / lq).round() as i64;
    (k0 - 2, k0 + 2)
}

/// `n >= 0` with `a q^n = 1` within pole tolerance, if any.
pub fn termination_index(a: &PrecisionComplex, q: &QBase) -> Option<usize> {
    if a.is_zero() {
        return None;
    }
    let (lo, hi) = lattice_window(a, q);
    let digits = work_digits(a, q);
    for n in lo.max(0)..=hi.max(0) {
        let f = (a * q.powi(n)).one_minus();
        if is_negligible(f.as_complex(), digits) {
            return Some(n as usize);
        }
    }
    None
}

/// `m >= 1` with `a = q^m` within pole tolerance, if any.
pub fn positive_power_index(a: &PrecisionComplex, q: &QBase) -> Option<usize> {
    if a.is_zero() {
        return None;
    }
    let (lo, hi) = lattice_window(&a.recip(), q);
    let digits = work_digits(a, q);
    for m in lo.max(1)..=hi.max(1) {
        let f = (a / q.powi(m)).one_minus();
        if is_negligible(f.as_complex(), digits) {
            return Some(m as usize);
        }
    }
    None
}

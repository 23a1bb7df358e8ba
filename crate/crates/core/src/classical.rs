//! Ordinary gamma, q-gamma, rising factorials and `{}_rF_s` / `{}_rH_r` series.
//!
//! Series at unit argument converge only algebraically. After a direct
//! partial sum up to `N` the remainder is `t_N·G(N)`, where `G` solves
//! `G(n) = 1 + r(n) G(n+1)` for the rational term ratio `r` and is expanded
//! as `G(n) = Σ_j c_j n^{1-j}`.

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Complex, Float};

use crate::engine::SeriesValue;
use crate::error::{Error, Result};
use crate::precision::{digits_to_bits, pow10, PrecisionComplex};
use crate::qcore::{as_integer, pole_tolerance, qpoch_inf, QBase, TruncationControl};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassicalKind {
    /// `Σ_{k≥0} ∏(a)_k/∏(b)_k z^k/k!`
    F,
    /// `Σ_{k∈Z} ∏(a)_k/∏(b)_k z^k`
    H,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalSeriesSpec {
    pub kind: ClassicalKind,
    pub numerators: Vec<PrecisionComplex>,
    pub denominators: Vec<PrecisionComplex>,
    pub z: PrecisionComplex,
}

/// Nonpositive integer `-n` within pole tolerance, as `n`.
fn nonpositive_integer(x: &PrecisionComplex) -> Option<u64> {
    match as_integer(x) {
        Some(n) if n <= 0 => Some(n.unsigned_abs()),
        _ => None,
    }
}

/// Spouge coefficients for parameter `a` at `prec` bits.
fn spouge_sum(z: &Complex, a: u32, prec: u32) -> Complex {
    // c_0 + Σ_{k=1}^{a-1} c_k/(z+k),  c_k = (-1)^{k-1}/(k-1)! (a-k)^{k-1/2} e^{a-k}
    let two_pi = Float::with_val(prec, Constant::Pi) * 2u32;
    let mut sum = Complex::with_val(prec, (two_pi.sqrt(), 0));
    let mut fact = Float::with_val(prec, 1);
    for k in 1..a {
        if k > 1 {
            fact *= k - 1;
        }
        let base = Float::with_val(prec, a - k);
        let pw = Float::with_val(prec, base.clone().pow(Float::with_val(prec, k) - 0.5f64));
        let ex = Float::with_val(prec, a - k).exp();
        let mut ck = Float::with_val(prec, pw * ex) / &fact;
        if k % 2 == 0 {
            ck = -ck;
        }
        let den = Complex::with_val(prec, z + k);
        sum += Complex::with_val(prec, ck / den);
    }
    sum
}


/// Spouge order giving relative error below `10^-digits`.
fn spouge_order(digits: u32) -> u32 {
    let ln10 = std::f64::consts::LN_10;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    ((digits as f64 * ln10) / ln2pi).ceil() as u32 + 2
}

/// Γ(z) via Spouge's approximation with reflection for `Re z < 1/2`.
///
/// The order `a` is chosen so that `a^{-1/2}(2π)^{-(a+1/2)} < 10^{-digits}`;
/// the alternating coefficient sum is formed with about `0.9a` extra digits.
pub fn gamma(z: &PrecisionComplex) -> Result<PrecisionComplex> {
    let digits = z.digits();
    if nonpositive_integer(z).is_some() {
        return Err(Error::Pole(format!("gamma at nonpositive integer {z}")));
    }
    let a = spouge_order(digits);
    let work = digits + (0.9 * a as f64).ceil() as u32 + 10;
    let prec = digits_to_bits(work);
    let zc = Complex::with_val(prec, z.as_complex());
    let half = Float::with_val(prec, 0.5);
    let reflect = *zc.real() < half;
    let arg = if reflect { Complex::with_val(prec, 1 - &zc) } else { zc.clone() };
    // Γ(x) = Γ((x-1)+1)
    let x = Complex::with_val(prec, &arg - 1u32);
    let s = spouge_sum(&x, a, prec);
    let xa = Complex::with_val(prec, &x + a);
    let expo = Complex::with_val(prec, &x + &half);
    let mut g = Complex::with_val(prec, xa.clone().ln() * expo);
    g -= &xa;
    g.exp_mut();
    g *= &s;
    if reflect {
        // Γ(z) = π / (sin(πz) Γ(1-z))
        let pi = Float::with_val(prec, Constant::Pi);
        let mut sn = Complex::with_val(prec, &zc * &pi);
        sn.sin_mut();
        g *= &sn;
        g.recip_mut();
        g *= &pi;
    }
    Ok(PrecisionComplex::from_complex(g, digits))
}

/// `Γ_q(z) = (q;q)_∞ (1-q)^{1-z} / (q^z;q)_∞`.
pub fn gamma_q(z: &PrecisionComplex, q: &QBase, ctl: &TruncationControl) -> Result<PrecisionComplex> {
    let qz = q.pow(z);
    let den = qpoch_inf(&qz, q, ctl)?;
    if den.is_zero() {
        return Err(Error::Pole(format!("q-gamma at {z}")));
    }
    let num = qpoch_inf(q.value(), q, ctl)?;
    let one = PrecisionComplex::one(z.digits().max(q.digits()));
    let pw = q.value().one_minus().powc(&(&one - z));
    Ok(num * pw / den)
}

/// Rising factorial `(α)_n`, with `(α)_{-n} = (-1)^n/(1-α)_n`.
pub fn rising(alpha: &PrecisionComplex, n: i64) -> Result<PrecisionComplex> {
    let digits = alpha.digits();
    let mut prod = PrecisionComplex::one(digits);
    if n >= 0 {
        for k in 0..n {
            prod *= alpha + &PrecisionComplex::from_int(k, digits);
        }
        return Ok(prod);
    }
    let beta = alpha.one_minus();
    for k in 0..(-n) {
        prod *= &beta + &PrecisionComplex::from_int(k, digits);
    }
    if prod.abs() < pole_tolerance(digits) {
        return Err(Error::Pole(format!("({alpha})_{n}")));
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    Ok(PrecisionComplex::real(sign, digits) / prod)
}

/// Elementary symmetric coefficients of `∏(k + x_i)`, leading first.
fn poly_coeffs(xs: &[Complex], prec: u32) -> Vec<Complex> {
    let mut c = vec![Complex::with_val(prec, 1)];
    for x in xs {
        let mut next = vec![Complex::with_val(prec, 0); c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] += Complex::with_val(prec, ci * x);
        }
        c = next;
    }
    c
}

/// Asymptotic factor `G(n)` with `Σ_{k≥n} t_k = t_n G(n)` for term ratio
/// `P(k)/Q(k)` of equal degree; returns `(G(n), error estimate)`.
fn tail_factor(nums: &[Complex], dens: &[Complex], n: u64, prec: u32, eps: &Float) -> Result<(Complex, Float)> {
    let p = poly_coeffs(nums, prec);
    let qc = poly_coeffs(dens, prec);
    let zero = Complex::with_val(prec, 0);
    let pi = |i: usize| p.get(i).unwrap_or(&zero);
    let qi = |i: usize| qc.get(i).unwrap_or(&zero);
    let sigma = Complex::with_val(prec, qi(1) - pi(1));
    if *sigma.real() <= 1 {
        return Err(Error::DivergentSeries("unit-argument series needs Re(Σb - Σa) > 1".into()));
    }
    let max_terms = 400usize;
    // rows of binom(1-j, m), m = 0..=max_terms
    let binom_row = |alpha: i64| -> Vec<Float> {
        let mut row = Vec::with_capacity(max_terms + 1);
        let mut b = Float::with_val(prec, 1);
        row.push(b.clone());
        for t in 1..=max_terms {
            b *= alpha - t as i64 + 1;
            b /= t as u32;
            row.push(b.clone());
        }
        row
    };
    let nf = Float::with_val(prec, n);
    let mut c: Vec<Complex> = Vec::new();
    let mut g_sum = Complex::with_val(prec, 0);
    let mut npow = nf.clone(); // n^{1-j}
    let mut prev_abs: Option<Float> = None;
    let mut last_abs = Float::with_val(64, 0);
    let mut binoms: Vec<Vec<Float>> = Vec::new();
    for l in 1..=max_terms {
        // solve coefficient equation L = l for c_{l-1}
        let jmax = l - 1; // index being solved
        binoms.push(binom_row(1 - jmax as i64));
        let mut r = Complex::with_val(prec, 0);
        for (j, cj) in c.iter().enumerate() {
            // left side q_{l-j} c_j
            r += Complex::with_val(prec, qi(l - j) * cj);
            // right side - Σ_i p_i g'_{l-i}: c_j contributes to g_m with m >= j
            for i in 0..=(l - j) {
                let m = l - i; // g index
                if m < j {
                    continue;
                }
                let b = &binoms[j][m - j];
                let t = Complex::with_val(prec, pi(i) * cj);
                r -= Complex::with_val(prec, t * b);
            }
        }
        r -= qi(l - 1);
        let k = Complex::with_val(prec, &sigma + (l as i64 - 2));
        let cl = Complex::with_val(prec, -r / k);
        let term = Complex::with_val(prec, &cl * &npow);
        let ta = Float::with_val(64, term.abs_ref());
        if let Some(pa) = &prev_abs {
            if ta > *pa {
                // asymptotic series started to diverge
                break;
            }
        }
        g_sum += &term;
        c.push(cl);
        npow /= &nf;
        last_abs = ta.clone();
        let ga = Float::with_val(64, g_sum.abs_ref());
        if ta < Float::with_val(64, eps * &ga) {
            return Ok((g_sum, last_abs));
        }
        prev_abs = Some(ta);
    }
    Ok((g_sum, last_abs))
}

/// `Σ_{k≥0} t_k` with `t_0 = 1`, `t_{k+1} = t_k z ∏(a+k)/∏(b+k)`.
fn rational_series(
    nums: &[PrecisionComplex],
    dens: &[PrecisionComplex],
    z: &PrecisionComplex,
    digits: u32,
    ctl: &TruncationControl,
) -> Result<(PrecisionComplex, usize, Float)> {
    let prec = digits_to_bits(digits);
    let stop = nums.iter().filter_map(nonpositive_integer).min();
    if let Some(p) = dens.iter().filter_map(nonpositive_integer).min() {
        if stop.map_or(true, |s| p < s) {
            return Err(Error::Pole(format!("denominator parameter -{p}")));
        }
    }
    let a: Vec<Complex> = nums.iter().map(|x| Complex::with_val(prec, x.as_complex())).collect();
    let b: Vec<Complex> = dens.iter().map(|x| Complex::with_val(prec, x.as_complex())).collect();
    let zc = Complex::with_val(prec, z.as_complex());
    let one = PrecisionComplex::one(digits);
    let unit = (z - &one).abs() < pole_tolerance(digits);
    let zabs = z.abs_f64();
    if stop.is_none() {
        if !unit && zabs >= 1.0 {
            return Err(Error::DivergentSeries(format!("|z| = {zabs} >= 1")));
        }
        if unit && a.len() > b.len() {
            return Err(Error::DivergentSeries("more numerator than denominator parameters".into()));
        }
    }
    let use_tail = stop.is_none() && unit && a.len() == b.len();
    let mut n_direct: u64 = if use_tail {
        let big = nums.iter().chain(dens).map(|x| x.abs_f64()).fold(0.0, f64::max);
        (digits as u64).max(60).max((8.0 * big) as u64)
    } else {
        u64::MAX
    };
    let mut sum = Complex::with_val(prec, 0);
    let mut t = Complex::with_val(prec, 1);
    let mut small_run = 0usize;
    let mut prev_abs: Option<Float> = None;
    let mut k: u64 = 0;
    loop {
        if use_tail && k == n_direct {
            let (g, err) = tail_factor(&a, &b, k, prec, &ctl.tail_epsilon)?;
            let tail = Complex::with_val(prec, &t * &g);
            let bound = Float::with_val(64, t.abs_ref()) * err;
            let total = Complex::with_val(prec, &sum + &tail);
            let thr = Float::with_val(64, &ctl.tail_epsilon * Float::with_val(64, total.abs_ref()));
            // the expansion is asymptotic: if its smallest term is still too big, sum further directly
            if bound > thr && 2 * k <= ctl.max_terms as u64 {
                n_direct = 2 * k;
            } else {
                return Ok((PrecisionComplex::from_complex(total, digits), k as usize, bound));
            }
        }
        sum += &t;
        if stop == Some(k) {
            return Ok((PrecisionComplex::from_complex(sum, digits), k as usize + 1, Float::with_val(64, 0)));
        }
        if stop.is_none() && !use_tail {
            let ta = Float::with_val(64, t.abs_ref());
            let sa = Float::with_val(64, sum.abs_ref());
            let thr = Float::with_val(64, &ctl.tail_epsilon * sa);
            let decreasing = prev_abs.as_ref().map_or(true, |p| ta <= *p);
            small_run = if ta < thr && decreasing { small_run + 1 } else { 0 };
            prev_abs = Some(ta.clone());
            if small_run >= ctl.consecutive_small {
                let bound = ta * zabs / (1.0 - zabs.min(0.999));
                return Ok((PrecisionComplex::from_complex(sum, digits), k as usize + 1, bound));
            }
        }
        if k as usize >= ctl.max_terms {
            return Err(Error::Budget {
                max_terms: ctl.max_terms,
                what: "classical series".into(),
            });
        }
        for x in &a {
            t *= Complex::with_val(prec, x + k);
        }
        for x in &b {
            t /= Complex::with_val(prec, x + k);
        }
        t *= &zc;
        k += 1;
    }
}

pub fn eval_classical(spec: &ClassicalSeriesSpec, ctl: &TruncationControl) -> Result<SeriesValue> {
    let mut digits = spec.z.digits();
    for x in spec.numerators.iter().chain(&spec.denominators) {
        digits = digits.max(x.digits());
    }
    let one = PrecisionComplex::one(digits);
    match spec.kind {
        ClassicalKind::F => {
            let mut dens = spec.denominators.clone();
            dens.push(one);
            let (v, n, b) = rational_series(&spec.numerators, &dens, &spec.z, digits, ctl)?;
            Ok(SeriesValue {
                value: v,
                terms_used: n,
                tail_bound: b,
            })
        }
        ClassicalKind::H => {
            let (fwd, n1, b1) = rational_series(&spec.numerators, &spec.denominators, &spec.z, digits, ctl)?;
            // k = -m: t_{-m} = (-1)^{m(r-s)} ∏(1-b)_m/∏(1-a)_m z^{-m}
            let bn: Vec<PrecisionComplex> = spec.denominators.iter().map(|x| x.one_minus()).collect();
            let bd: Vec<PrecisionComplex> = spec.numerators.iter().map(|x| x.one_minus()).collect();
            // backward side vanishes from m = n on when some 1-b = -(n-1), i.e. b = n
            let stop = bn.iter().filter_map(nonpositive_integer).min();
            if stop == Some(0) {
                return Ok(SeriesValue {
                    value: fwd,
                    terms_used: n1,
                    tail_bound: b1,
                });
            }
            let diff = spec.numerators.len() as i64 - spec.denominators.len() as i64;
            let mut zb = spec.z.recip();
            if diff % 2 != 0 {
                zb = -zb;
            }
            let (bwd, n2, b2) = rational_series(&bn, &bd, &zb, digits, ctl)?;
            Ok(SeriesValue {
                value: fwd + bwd - one,
                terms_used: n1 + n2 - 1,
                tail_bound: b1 + b2,
            })
        }
    }
}

/// Γ at a precision-carrying point; convenience for products of gammas.
pub fn gamma_product(num: &[PrecisionComplex], den: &[PrecisionComplex]) -> Result<PrecisionComplex> {
    let digits = num.iter().chain(den).map(|x| x.digits()).max().unwrap_or(15);
    let mut v = PrecisionComplex::one(digits);
    for x in num {
        v *= gamma(x)?;
    }
    for x in den {
        v /= gamma(x)?;
    }
    Ok(v)
}

/// Relative tolerance helper for tests and callers, `10^{-digits}`.
pub fn tolerance(digits: u32) -> Float {
    pow10(-(digits as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::rel_error;

    const D: u32 = 40;

    fn c(x: f64) -> PrecisionComplex {
        PrecisionComplex::real(x, D)
    }

    fn ctl() -> TruncationControl {
        TruncationControl::for_digits(D)
    }

    fn mpfr_gamma(x: f64, digits: u32) -> PrecisionComplex {
        let f = Float::with_val(digits_to_bits(digits), x).gamma();
        PrecisionComplex::from_complex(Complex::with_val(digits_to_bits(digits), (f, 0)), digits)
    }

    #[test]
    fn gamma_examples() {
        assert!(rel_error(&gamma(&c(1.0)).unwrap(), &c(1.0), 1e-300) < 1e-38);
        let sqrt_pi = PrecisionComplex::pi(D).sqrt();
        assert!(rel_error(&gamma(&c(0.5)).unwrap(), &sqrt_pi, 1e-300) < 1e-38);
        let z = PrecisionComplex::new(0.3, 0.2, D);
        let r = gamma(&(&z + &c(1.0))).unwrap() / gamma(&z).unwrap();
        assert!(rel_error(&r, &z, 1e-300) < 1e-37);
        assert!(matches!(gamma(&c(-2.0)), Err(Error::Pole(_))));
    }

    #[test]
    fn gamma_matches_mpfr_on_reals() {
        // independent oracle: MPFR's real gamma
        for &x in &[0.1, 0.75, 1.3, 2.5, 7.25, 13.0, -0.4, -2.7, -5.5] {
            for &d in &[20u32, 40, 70] {
                let g = gamma(&PrecisionComplex::real(x, d)).unwrap();
                let o = mpfr_gamma(x, d);
                assert!(rel_error(&g, &o, 1e-300) < 10f64.powi(-(d as i32) + 2), "x={x} d={d}");
            }
        }
    }

    #[test]
    fn q_gamma_examples() {
        let q = QBase::from_f64(0.3, D).unwrap();
        assert!(rel_error(&gamma_q(&c(1.0), &q, &ctl()).unwrap(), &c(1.0), 1e-300) < 1e-38);
        assert!(rel_error(&gamma_q(&c(2.0), &q, &ctl()).unwrap(), &c(1.0), 1e-300) < 1e-38);
        let z = PrecisionComplex::new(0.4, 0.3, D);
        let lhs = gamma_q(&(&z + &c(1.0)), &q, &ctl()).unwrap();
        let rhs = gamma_q(&z, &q, &ctl()).unwrap() * q.pow(&z).one_minus() / q.value().one_minus();
        assert!(rel_error(&lhs, &rhs, 1e-300) < 1e-37);
    }

    #[test]
    fn q_gamma_tends_to_gamma() {
        let d = 20;
        let target = PrecisionComplex::pi(d).sqrt();
        let mut prev = f64::INFINITY;
        for k in 2..=4 {
            let q = QBase::from_f64(1.0 - 10f64.powi(-k), d).unwrap();
            let ctl = TruncationControl::for_digits(d).with_max_terms(10_000_000);
            let v = gamma_q(&PrecisionComplex::real(0.5, d), &q, &ctl).unwrap();
            let err = rel_error(&v, &target, 1e-300);
            assert!(err < prev, "k={k}: {err} !< {prev}");
            prev = err;
        }
    }

    #[test]
    fn rising_factorial_rules() {
        let a = PrecisionComplex::new(0.3, 0.4, D);
        let lhs = rising(&a, 7).unwrap();
        let rhs = rising(&a, 3).unwrap() * rising(&(&a + &c(3.0)), 4).unwrap();
        assert!(rel_error(&lhs, &rhs, 1e-300) < 1e-37);
        let p = rising(&a, -4).unwrap() * rising(&a.one_minus(), 4).unwrap();
        assert!(rel_error(&p, &c(1.0), 1e-300) < 1e-37);
    }

    #[test]
    fn zeta_two_at_unit_argument() {
        // 3F2(1,1,1;2,2;1) = Σ 1/(k+1)^2 = π²/6
        let spec = ClassicalSeriesSpec {
            kind: ClassicalKind::F,
            numerators: vec![c(1.0), c(1.0), c(1.0)],
            denominators: vec![c(2.0), c(2.0)],
            z: c(1.0),
        };
        let v = eval_classical(&spec, &ctl()).unwrap();
        let pi = PrecisionComplex::pi(D);
        let oracle = &pi * &pi / c(6.0);
        assert!(rel_error(&v.value, &oracle, 1e-300) < 1e-36, "{}", v.value);
    }

    #[test]
    fn gauss_sum_at_unit_argument() {
        // 2F1(a,b;c;1) = Γ(c)Γ(c-a-b)/(Γ(c-a)Γ(c-b)), slow convergence for c-a-b = 0.35
        let (a, b, cc) = (c(0.4), PrecisionComplex::new(0.25, 0.1, D), PrecisionComplex::new(1.0, 0.1, D));
        let spec = ClassicalSeriesSpec {
            kind: ClassicalKind::F,
            numerators: vec![a.clone(), b.clone()],
            denominators: vec![cc.clone()],
            z: c(1.0),
        };
        let v = eval_classical(&spec, &ctl()).unwrap();
        let oracle = gamma_product(&[cc.clone(), &cc - &a - &b], &[&cc - &a, &cc - &b]).unwrap();
        assert!(rel_error(&v.value, &oracle, 1e-300) < 1e-34, "{} vs {}", v.value, oracle);
    }

    #[test]
    fn dougall_bilateral_sum() {
        // 2H2(a,b;c,d;1) = Γ(1-a)Γ(1-b)Γ(c)Γ(d)Γ(c+d-a-b-1)/(Γ(c-a)Γ(d-a)Γ(c-b)Γ(d-b))
        let (a, b, cc, d) = (c(0.2), c(-0.3), c(1.1), PrecisionComplex::new(0.9, 0.2, D));
        let spec = ClassicalSeriesSpec {
            kind: ClassicalKind::H,
            numerators: vec![a.clone(), b.clone()],
            denominators: vec![cc.clone(), d.clone()],
            z: c(1.0),
        };
        let v = eval_classical(&spec, &ctl()).unwrap();
        let one = c(1.0);
        let oracle = gamma_product(
            &[one.clone() - &a, one.clone() - &b, cc.clone(), d.clone(), &cc + &d - &a - &b - &one],
            &[&cc - &a, &d - &a, &cc - &b, &d - &b],
        )
        .unwrap();
        assert!(rel_error(&v.value, &oracle, 1e-300) < 1e-34, "{} vs {}", v.value, oracle);
    }

    #[test]
    fn terminating_four_f_three() {
        let spec = ClassicalSeriesSpec {
            kind: ClassicalKind::F,
            numerators: vec![c(-3.0), c(0.5), c(0.7), c(1.2)],
            denominators: vec![c(1.5), c(2.5), c(0.3)],
            z: c(1.0),
        };
        let v = eval_classical(&spec, &ctl()).unwrap();
        assert_eq!(v.terms_used, 4);
        let mut direct = c(0.0);
        for k in 0..4 {
            let mut t = c(1.0);
            for x in &spec.numerators {
                t *= rising(x, k).unwrap();
            }
            for x in &spec.denominators {
                t /= rising(x, k).unwrap();
            }
            t /= rising(&c(1.0), k).unwrap();
            direct += t;
        }
        assert!(rel_error(&v.value, &direct, 1e-300) < 1e-37);
    }

    #[test]
    fn h_with_unit_denominator_is_f() {
        let nums = vec![c(0.3), c(0.45)];
        let h = eval_classical(
            &ClassicalSeriesSpec { kind: ClassicalKind::H, numerators: nums.clone(), denominators: vec![c(1.0), c(2.1)], z: c(0.5) },
            &ctl(),
        )
        .unwrap();
        let f = eval_classical(
            &ClassicalSeriesSpec { kind: ClassicalKind::F, numerators: nums, denominators: vec![c(2.1)], z: c(0.5) },
            &ctl(),
        )
        .unwrap();
        assert!(rel_error(&h.value, &f.value, 1e-300) < 1e-37);
    }
}

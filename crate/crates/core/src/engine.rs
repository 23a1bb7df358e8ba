//! Unilateral and bilateral basic hypergeometric series.
//!
//! All four series families reduce to one term-ratio recurrence anchored at
//! `t_0 = 1`. Bilateral series run a second recurrence towards `k → -∞`.
//! Zero parameters contribute a factor 1 to every Pochhammer ratio and only
//! shift the exponent of the `(-1)^k q^{C(k,2)}` factor. Very-well-poised
//! series replace the `±q√a / ±√a` pair by the weight `(1 - aq^{2k})/(1 - a)`.

use rug::{Complex, Float};

use crate::error::{Error, Result};
use crate::precision::{digits_to_bits, PrecisionComplex};
use crate::qcore::{is_negligible, positive_power_index, termination_index, QBase, TruncationControl};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesKind {
    Unilateral,
    Bilateral,
}

/// `{}_rφ_s` or `{}_rψ_s` with optional zero parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSpec {
    pub kind: SeriesKind,
    pub numerators: Vec<PrecisionComplex>,
    pub denominators: Vec<PrecisionComplex>,
    pub zero_numerators: u32,
    pub zero_denominators: u32,
    pub q: QBase,
    pub z: PrecisionComplex,
}

impl SeriesSpec {
    pub fn phi(nums: Vec<PrecisionComplex>, dens: Vec<PrecisionComplex>, q: QBase, z: PrecisionComplex) -> Self {
        SeriesSpec {
            kind: SeriesKind::Unilateral,
            numerators: nums,
            denominators: dens,
            zero_numerators: 0,
            zero_denominators: 0,
            q,
            z,
        }
    }

    pub fn psi(nums: Vec<PrecisionComplex>, dens: Vec<PrecisionComplex>, q: QBase, z: PrecisionComplex) -> Self {
        SeriesSpec {
            kind: SeriesKind::Bilateral,
            ..Self::phi(nums, dens, q, z)
        }
    }

    /// Set the zero-parameter count in the `p` convention: `p > 0` zero
    /// denominators, `p < 0` zero numerators.
    pub fn with_zeros(mut self, p: i32) -> Self {
        if p >= 0 {
            self.zero_denominators = p as u32;
        } else {
            self.zero_numerators = p.unsigned_abs();
        }
        self
    }
}

/// Very-well-poised `{}_{r+1}W_r^p(a; tail; q, z)` or `{}_rΨ_r^p(a; tail; q, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WellPoisedSpec {
    pub a: PrecisionComplex,
    pub tail: Vec<PrecisionComplex>,
    pub p: u32,
    pub q: QBase,
    pub z: PrecisionComplex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesValue {
    pub value: PrecisionComplex,
    pub terms_used: usize,
    /// Absolute bound on the neglected tail.
    pub tail_bound: Float,
}

/// Convergence class of a unilateral series.
#[derive(Clone, Debug, PartialEq)]
pub enum Convergence {
    Entire,
    Conditional(f64),
    /// Finite sum with this many terms.
    Terminating(usize),
    Divergent(String),
}

/// Convergence class of a bilateral series; the margin is the smallest
/// relative slack over the applicable inequalities (1 when none apply).
#[derive(Clone, Debug, PartialEq)]
pub enum BilateralConvergence {
    Convergent(f64),
    Divergent(String),
}

/// Normalized internal form shared by all series kinds.
struct Structure {
    nums: Vec<Complex>,
    dens: Vec<Complex>,
    zn: i64,
    zd: i64,
    bilateral: bool,
    wp: Option<Complex>,
    q: Complex,
    z: Complex,
    digits: u32,
    ln_nums: Vec<f64>,
    ln_dens: Vec<f64>,
    ln_q: f64,
    ln_z: f64,
    ln_wp: f64,
    num_pcs: Vec<PrecisionComplex>,
    den_pcs: Vec<PrecisionComplex>,
    qbase: QBase,
}

fn ln_abs(z: &Complex) -> f64 {
    Float::with_val(64, z.abs_ref()).ln().to_f64()
}

impl Structure {
    fn build(
        nums: &[PrecisionComplex],
        dens: &[PrecisionComplex],
        zn: u32,
        zd: u32,
        bilateral: bool,
        wp: Option<&PrecisionComplex>,
        q: &QBase,
        z: &PrecisionComplex,
    ) -> Structure {
        let mut digits = q.digits().max(z.digits());
        for v in nums.iter().chain(dens.iter()).chain(wp) {
            digits = digits.max(v.digits());
        }
        let prec = digits_to_bits(digits);
        let lift = |v: &PrecisionComplex| Complex::with_val(prec, v.as_complex());
        let mut zn = zn as i64;
        let mut zd = zd as i64;
        let mut n = Vec::new();
        let mut d = Vec::new();
        let mut num_pcs = Vec::new();
        let mut den_pcs = Vec::new();
        for v in nums {
            if v.is_zero() {
                zn += 1;
            } else {
                n.push(lift(v));
                num_pcs.push(v.with_digits(digits));
            }
        }
        for v in dens {
            if v.is_zero() {
                zd += 1;
            } else {
                d.push(lift(v));
                den_pcs.push(v.with_digits(digits));
            }
        }
        let ln_nums = n.iter().map(ln_abs).collect();
        let ln_dens = d.iter().map(ln_abs).collect();
        let wpc = wp.map(lift);
        let ln_wp = wpc.as_ref().map(ln_abs).unwrap_or(f64::NEG_INFINITY);
        Structure {
            nums: n,
            dens: d,
            zn,
            zd,
            bilateral,
            wp: wpc,
            q: lift(q.value()),
            z: lift(z),
            digits,
            ln_nums,
            ln_dens,
            ln_q: q.ln_abs(),
            ln_z: ln_abs(&lift(z)),
            ln_wp,
            num_pcs,
            den_pcs,
            qbase: QBase::new(q.value().with_digits(digits)).expect("validated base"),
        }
    }

    fn from_spec(spec: &SeriesSpec) -> Structure {
        Structure::build(
            &spec.numerators,
            &spec.denominators,
            spec.zero_numerators,
            spec.zero_denominators,
            spec.kind == SeriesKind::Bilateral,
            None,
            &spec.q,
            &spec.z,
        )
    }

    fn from_wp(spec: &WellPoisedSpec, bilateral: bool) -> Structure {
        let qa = spec.q.value() * &spec.a;
        let dens: Vec<PrecisionComplex> = spec
            .tail
            .iter()
            .map(|t| if t.is_zero() { PrecisionComplex::zero(t.digits()) } else { &qa / t })
            .collect();
        let mut nums = Vec::with_capacity(spec.tail.len() + 1);
        if !bilateral {
            nums.push(spec.a.clone());
        }
        nums.extend(spec.tail.iter().cloned());
        Structure::build(&nums, &dens, 0, spec.p, bilateral, Some(&spec.a), &spec.q, &spec.z)
    }

    /// Exponent of `(-1)^k q^{C(k,2)}` on the forward side.
    fn forward_exponent(&self) -> i64 {
        let r = self.nums.len() as i64 + self.zn;
        let s = self.dens.len() as i64 + self.zd;
        if self.bilateral {
            s - r
        } else {
            s - r + 1
        }
    }

    /// Power of `q^m` in the asymptotic backward ratio.
    fn backward_exponent(&self) -> i64 {
        self.zd - self.zn
    }

    fn forward_termination(&self) -> Option<usize> {
        self.num_pcs
            .iter()
            .filter_map(|a| termination_index(a, &self.qbase))
            .min()
    }

    fn forward_pole(&self) -> Option<usize> {
        self.den_pcs
            .iter()
            .filter_map(|b| termination_index(b, &self.qbase))
            .min()
    }

    /// Backward terms `t_k` vanish for `k <= -m` when a denominator is `q^m`.
    fn backward_termination(&self) -> Option<usize> {
        self.den_pcs
            .iter()
            .filter_map(|b| positive_power_index(b, &self.qbase))
            .min()
    }

    fn backward_pole(&self) -> Option<usize> {
        self.num_pcs
            .iter()
            .filter_map(|a| positive_power_index(a, &self.qbase))
            .min()
    }

    fn check_wp(&self) -> Result<()> {
        if let Some(a) = &self.wp {
            let ap = PrecisionComplex::from_complex(a.clone(), self.digits);
            let one_minus = ap.one_minus();
            if is_negligible(one_minus.as_complex(), self.digits) {
                return Err(Error::Pole("very-well-poised series with a = 1".into()));
            }
            // ±√a ∉ q^{-N0}  ⇔  a q^{2n} ≠ 1
            let q2 = self.qbase.power_base(2)?;
            if termination_index(&ap, &q2).is_some() {
                return Err(Error::Pole("very-well-poised series with ±√a in q^{-N0}".into()));
            }
        }
        Ok(())
    }

    /// ln of the modulus of the asymptotic backward ratio when `d = 0`.
    fn backward_log_ratio(&self) -> f64 {
        let mut l = -self.ln_z;
        l += self.ln_dens.iter().sum::<f64>();
        l -= self.ln_nums.iter().sum::<f64>();
        if self.wp.is_some() {
            l -= 2.0 * self.ln_q;
        }
        l
    }

    fn forward_class(&self) -> std::result::Result<Option<f64>, String> {
        // Ok(None): entire or terminating; Ok(Some(margin)); Err: divergent
        if let Some(_) = self.forward_termination() {
            return Ok(None);
        }
        let e = self.forward_exponent();
        if e > 0 {
            return Ok(None);
        }
        if e < 0 {
            return Err(format!("balancing exponent {e} < 0 and the series does not terminate"));
        }
        let zabs = self.ln_z.exp();
        if zabs < 1.0 {
            Ok(Some(1.0 - zabs))
        } else {
            Err(format!("|z| = {zabs} >= 1"))
        }
    }

    fn backward_class(&self) -> std::result::Result<Option<f64>, String> {
        if self.backward_termination().is_some() {
            return Ok(None);
        }
        let d = self.backward_exponent();
        if d > 0 {
            return Ok(None);
        }
        if d < 0 {
            return Err("zero numerator parameters make the negative side diverge".into());
        }
        let ratio = self.backward_log_ratio().exp();
        if ratio < 1.0 {
            Ok(Some(1.0 - ratio))
        } else {
            Err(format!("|b_1…b_s| / |a_1…a_r z| = {ratio} >= 1"))
        }
    }

    fn unilateral_convergence(&self) -> Convergence {
        if let Some(n) = self.forward_termination() {
            return Convergence::Terminating(n + 1);
        }
        match self.forward_class() {
            Ok(None) => Convergence::Entire,
            Ok(Some(m)) => Convergence::Conditional(m),
            Err(msg) => Convergence::Divergent(msg),
        }
    }

    fn bilateral_convergence(&self) -> BilateralConvergence {
        let f = self.forward_class();
        let b = self.backward_class();
        match (f, b) {
            (Err(m), _) | (_, Err(m)) => BilateralConvergence::Divergent(m),
            (Ok(x), Ok(y)) => BilateralConvergence::Convergent(x.unwrap_or(1.0).min(y.unwrap_or(1.0))),
        }
    }

    fn ensure_convergent(&self, ctl: &TruncationControl) -> Result<()> {
        let margin = if self.bilateral {
            match self.bilateral_convergence() {
                BilateralConvergence::Convergent(m) => m,
                BilateralConvergence::Divergent(msg) => return Err(Error::DivergentSeries(msg)),
            }
        } else {
            match self.unilateral_convergence() {
                Convergence::Entire | Convergence::Terminating(_) => 1.0,
                Convergence::Conditional(m) => m,
                Convergence::Divergent(msg) => return Err(Error::DivergentSeries(msg)),
            }
        };
        if margin < ctl.margin_floor {
            return Err(Error::DivergentSeries(format!(
                "convergence margin {margin:.3e} below floor {:.1e}",
                ctl.margin_floor
            )));
        }
        Ok(())
    }

    /// Bound on `|c_{k+1}/c_k|` valid for all `k >= n` (forward side).
    fn forward_ratio_bound(&self, n: usize) -> f64 {
        let e = self.forward_exponent();
        if e < 0 {
            return f64::INFINITY;
        }
        let nf = n as f64;
        let lqn = nf * self.ln_q;
        let mut l = self.ln_z + e as f64 * lqn;
        for la in &self.ln_nums {
            l += (1.0 + (la + lqn).exp()).ln();
        }
        for lb in &self.ln_dens {
            let x = (lb + lqn).exp();
            if x >= 1.0 {
                return f64::INFINITY;
            }
            l -= (1.0 - x).ln();
        }
        if !self.bilateral {
            l -= (1.0 - (lqn + self.ln_q).exp()).ln();
        }
        if self.wp.is_some() {
            let x = (self.ln_wp + 2.0 * lqn).exp();
            if x >= 1.0 {
                return f64::INFINITY;
            }
            l += (1.0 + x * (2.0 * self.ln_q).exp()).ln() - (1.0 - x).ln();
        }
        l.exp()
    }

    /// Bound on `|c_{-m-1}/c_{-m}|` valid for all further backward steps.
    fn backward_ratio_bound(&self, m: usize) -> f64 {
        let d = self.backward_exponent();
        if d < 0 {
            return f64::INFINITY;
        }
        let w = ((m + 1) as f64 * self.ln_q).exp();
        let mut l = -self.ln_z + d as f64 * (m + 1) as f64 * self.ln_q;
        for lb in &self.ln_dens {
            l += (lb.exp() + w).ln();
        }
        for la in &self.ln_nums {
            let x = la.exp() - w;
            if x <= 0.0 {
                return f64::INFINITY;
            }
            l -= x.ln();
        }
        if self.wp.is_some() {
            let a = self.ln_wp.exp();
            let w2 = (2.0 * m as f64 * self.ln_q).exp();
            if a <= w2 {
                return f64::INFINITY;
            }
            let q2 = (2.0 * self.ln_q).exp();
            l += (a + w2 * q2).ln() - (q2 * (a - w2)).ln();
        }
        l.exp()
    }
}

/// Running state of one side of a summation.
struct Accumulator {
    sum: Complex,
    small_run: usize,
    prev_abs: Option<Float>,
    max_abs: Float,
    terms: usize,
}

impl Accumulator {
    fn new(prec: u32) -> Self {
        Accumulator {
            sum: Complex::with_val(prec, 0),
            small_run: 0,
            prev_abs: None,
            max_abs: Float::with_val(64, 0),
            terms: 0,
        }
    }

    /// Add a term; returns the tail bound once the stopping rule is met.
    fn push(&mut self, c: &Complex, ratio_bound: f64, ctl: &TruncationControl) -> Option<Float> {
        self.sum += c;
        self.terms += 1;
        let abs_c = Float::with_val(64, c.abs_ref());
        if abs_c > self.max_abs {
            self.max_abs = abs_c.clone();
        }
        let s = Float::with_val(64, self.sum.abs_ref());
        let floor = Float::with_val(64, &ctl.tail_epsilon * &self.max_abs);
        let scale = if s > floor { s } else { floor };
        let thr = Float::with_val(64, &ctl.tail_epsilon * &scale);
        let decreasing = self.prev_abs.as_ref().map_or(true, |p| abs_c <= *p);
        if abs_c < thr && decreasing {
            self.small_run += 1;
        } else {
            self.small_run = 0;
        }
        self.prev_abs = Some(abs_c.clone());
        if self.small_run >= ctl.consecutive_small && ratio_bound < 1.0 {
            let tail = abs_c * ratio_bound / (1.0 - ratio_bound);
            if tail <= thr {
                return Some(tail);
            }
        }
        None
    }
}

fn budget(ctl: &TruncationControl, what: &str) -> Error {
    Error::Budget {
        max_terms: ctl.max_terms,
        what: what.into(),
    }
}

/// Multiply `t` by `(-x)^e` for small integer `e`.
fn mul_signed_power(t: &mut Complex, x: &Complex, e: i64) {
    for _ in 0..e.unsigned_abs() {
        if e > 0 {
            *t *= x;
        } else {
            *t /= x;
        }
    }
    if e % 2 != 0 {
        t.neg_assign();
    }
}

use rug::ops::NegAssign;

fn sum_forward(st: &Structure, ctl: &TruncationControl) -> Result<(Complex, usize, Float)> {
    let prec = digits_to_bits(st.digits);
    let stop_at = st.forward_termination();
    if let Some(p) = st.forward_pole() {
        if stop_at.map_or(true, |t| p < t) {
            return Err(Error::Pole(format!("denominator parameter equals q^-{p}")));
        }
    }
    let e = st.forward_exponent();
    let mut acc = Accumulator::new(prec);
    let mut t = Complex::with_val(prec, 1);
    let mut qk = Complex::with_val(prec, 1);
    let mut q2k = Complex::with_val(prec, 1);
    let mut k: usize = 0;
    loop {
        let c = match &st.wp {
            Some(a) => {
                let w = Complex::with_val(prec, 1 - Complex::with_val(prec, a * &q2k));
                Complex::with_val(prec, &t * &w)
            }
            None => t.clone(),
        };
        if stop_at == Some(k) {
            acc.sum += &c;
            acc.terms += 1;
            return Ok((acc.sum, acc.terms, Float::with_val(64, 0)));
        }
        let rb = if stop_at.is_some() { f64::INFINITY } else { st.forward_ratio_bound(k) };
        if let Some(tail) = acc.push(&c, rb, ctl) {
            return Ok((acc.sum, acc.terms, tail));
        }
        if k >= ctl.max_terms {
            return Err(budget(ctl, "forward series"));
        }
        // t_{k+1} = t_k ∏(1 - a q^k) / ∏(1 - b q^k) / (1 - q^{k+1}) (-q^k)^e z
        for a in &st.nums {
            let f = Complex::with_val(prec, 1 - Complex::with_val(prec, a * &qk));
            t *= &f;
        }
        for b in &st.dens {
            let f = Complex::with_val(prec, 1 - Complex::with_val(prec, b * &qk));
            t /= &f;
        }
        mul_signed_power(&mut t, &qk, e);
        t *= &st.z;
        qk *= &st.q;
        if !st.bilateral {
            let f = Complex::with_val(prec, 1 - &qk);
            t /= &f;
        }
        if st.wp.is_some() {
            q2k = Complex::with_val(prec, &qk * &qk);
        }
        k += 1;
    }
}

fn sum_backward(st: &Structure, ctl: &TruncationControl) -> Result<(Complex, usize, Float)> {
    let prec = digits_to_bits(st.digits);
    let zero = Complex::with_val(prec, 0);
    // terms t_{-1}, …, t_{-(stop-1)} survive when a denominator equals q^stop
    let stop = st.backward_termination();
    if let Some(p) = st.backward_pole() {
        if stop.map_or(true, |s| p < s) {
            return Err(Error::Pole(format!("numerator parameter equals q^{p} on the negative side")));
        }
    }
    if stop == Some(1) {
        return Ok((zero, 0, Float::with_val(64, 0)));
    }
    let e = st.forward_exponent();
    let d = st.backward_exponent();
    let mut acc = Accumulator::new(prec);
    let mut t = Complex::with_val(prec, 1);
    let mut w = Complex::with_val(prec, 1);
    let mut m: usize = 0;
    loop {
        // t_{-m-1} = t_{-m} (-1)^e ∏(w - b)/∏(w - a) w^d / z,  w = q^{m+1}
        w *= &st.q;
        m += 1;
        for b in &st.dens {
            let f = Complex::with_val(prec, &w - b);
            t *= &f;
        }
        for a in &st.nums {
            let f = Complex::with_val(prec, &w - a);
            t /= &f;
        }
        for _ in 0..d {
            t *= &w;
        }
        if e % 2 != 0 {
            t.neg_assign();
        }
        t /= &st.z;
        let c = match &st.wp {
            Some(a) => {
                // 1 - a q^{-2m}
                let w2 = Complex::with_val(prec, &w * &w);
                let f = Complex::with_val(prec, 1 - Complex::with_val(prec, a / &w2));
                Complex::with_val(prec, &t * &f)
            }
            None => t.clone(),
        };
        if let Some(s) = stop {
            acc.sum += &c;
            acc.terms += 1;
            if m + 1 >= s {
                return Ok((acc.sum, acc.terms, Float::with_val(64, 0)));
            }
            continue;
        }
        if let Some(tail) = acc.push(&c, st.backward_ratio_bound(m), ctl) {
            return Ok((acc.sum, acc.terms, tail));
        }
        if m >= ctl.max_terms {
            return Err(budget(ctl, "backward series"));
        }
    }
}

fn evaluate(st: &Structure, ctl: &TruncationControl) -> Result<SeriesValue> {
    ctl.validate()?;
    st.check_wp()?;
    if st.bilateral && st.z.real().is_zero() && st.z.imag().is_zero() {
        return Err(Error::ZeroArgument("bilateral series at z = 0".into()));
    }
    st.ensure_convergent(ctl)?;
    let (mut sum, mut terms, mut tail) = sum_forward(st, ctl)?;
    if st.bilateral {
        let (s2, n2, t2) = sum_backward(st, ctl)?;
        sum += &s2;
        terms += n2;
        tail += t2;
    }
    let mut value = PrecisionComplex::from_complex(sum, st.digits);
    if let Some(a) = &st.wp {
        let prec = digits_to_bits(st.digits);
        let den = Complex::with_val(prec, 1 - a);
        let den_abs = Float::with_val(64, den.abs_ref());
        value = value / PrecisionComplex::from_complex(den, st.digits);
        tail /= den_abs;
    }
    Ok(SeriesValue {
        value,
        terms_used: terms,
        tail_bound: tail,
    })
}

pub fn phi_converges(spec: &SeriesSpec) -> Convergence {
    Structure::from_spec(spec).unilateral_convergence()
}

pub fn psi_converges(spec: &SeriesSpec) -> BilateralConvergence {
    Structure::from_spec(spec).bilateral_convergence()
}

/// Convergence of a very-well-poised series; unilateral results are mapped to
/// the bilateral margin convention (entire and terminating give margin 1).
pub fn wp_converges(spec: &WellPoisedSpec, bilateral: bool) -> BilateralConvergence {
    let st = Structure::from_wp(spec, bilateral);
    if bilateral {
        st.bilateral_convergence()
    } else {
        match st.unilateral_convergence() {
            Convergence::Entire | Convergence::Terminating(_) => BilateralConvergence::Convergent(1.0),
            Convergence::Conditional(m) => BilateralConvergence::Convergent(m),
            Convergence::Divergent(m) => BilateralConvergence::Divergent(m),
        }
    }
}

pub fn eval_phi(spec: &SeriesSpec, ctl: &TruncationControl) -> Result<SeriesValue> {
    if spec.kind != SeriesKind::Unilateral {
        return eval_psi(spec, ctl);
    }
    evaluate(&Structure::from_spec(spec), ctl)
}

pub fn eval_psi(spec: &SeriesSpec, ctl: &TruncationControl) -> Result<SeriesValue> {
    if spec.kind != SeriesKind::Bilateral {
        return eval_phi(spec, ctl);
    }
    evaluate(&Structure::from_spec(spec), ctl)
}

pub fn eval_wp_unilateral(spec: &WellPoisedSpec, ctl: &TruncationControl) -> Result<SeriesValue> {
    evaluate(&Structure::from_wp(spec, false), ctl)
}

pub fn eval_wp_bilateral(spec: &WellPoisedSpec, ctl: &TruncationControl) -> Result<SeriesValue> {
    evaluate(&Structure::from_wp(spec, true), ctl)
}

//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use qident::catalog::Catalog;
use qident::precision::rel_error;
use qident::qcore::{qpoch_base_inverted, qpoch_inf, qpoch_n, theta, theta_addition_residual, theta_multi};
use qident::{PrecisionComplex, QBase, TruncationControl};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn catalog_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("catalog")
}

pub fn catalog() -> Catalog {
    Catalog::load(&catalog_dir()).expect("shipped catalog loads")
}

pub fn cx(re: f64, im: f64, digits: u32) -> PrecisionComplex {
    PrecisionComplex::new(re, im, digits)
}

pub fn polar(r: f64, phase: f64, digits: u32) -> PrecisionComplex {
    cx(r * phase.cos(), r * phase.sin(), digits)
}

/// Random complex point with modulus log-uniform in `[lo, hi]`.
pub fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64, digits: u32) -> PrecisionComplex {
    let r = rng.gen_range(lo.ln()..hi.ln()).exp();
    polar(r, rng.gen_range(0.0..std::f64::consts::TAU), digits)
}

pub fn draw_q(rng: &mut ChaCha8Rng, digits: u32) -> QBase {
    QBase::new(draw(rng, 0.05, 0.6, digits)).unwrap()
}

fn floor(digits: u32) -> f64 {
    10f64.powi(-(digits as i32))
}

/// Outcome of one kernel invariant over a batch of random points.
#[derive(Debug)]
pub struct InvariantRun {
    pub name: &'static str,
    pub points: usize,
    pub max_residual: f64,
}

type Check = fn(&mut ChaCha8Rng, u32) -> f64;

fn splitting(rng: &mut ChaCha8Rng, d: u32) -> f64 {
    let q = draw_q(rng, d);
    let a = draw(rng, 0.3, 1.8, d);
    let m = rng.gen_range(0..=15i64);
    let n = rng.gen_range(0..=15i64);
    let lhs = qpoch_n(&a, &q, m + n).unwrap();
    let rhs = qpoch_n(&a, &q, m).unwrap() * qpoch_n(&(q.powi(m) * &a), &q, n).unwrap();
    rel_error(&lhs, &rhs, floor(d))
}

fn finite_infinite(rng: &mut ChaCha8Rng, d: u32) -> f64 {
    let ctl = TruncationControl::for_digits(d + 10);
    let q = draw_q(rng, d);
    let a = draw(rng, 0.05, 2.0, d);
    let n = rng.gen_range(0..=20i64);
    let lhs = qpoch_n(&a, &q, n).unwrap() * qpoch_inf(&(q.powi(n) * &a), &q, &ctl).unwrap();
    let rhs = qpoch_inf(&a, &q, &ctl).unwrap();
    rel_error(&lhs, &rhs, floor(d))
}

fn negative_index(rng: &mut ChaCha8Rng, d: u32) -> f64 {
    let q = draw_q(rng, d);
    let a = draw(rng, 0.3, 1.8, d);
    let n = rng.gen_range(1..=20i64);
    let lhs = qpoch_n(&a, &q, -n).unwrap();
    let rhs = q.powi(n * (n + 1) / 2) * (-&a).powi(-n) / qpoch_n(&(q.value() / &a), &q, n).unwrap();
    rel_error(&lhs, &rhs, floor(d))
}

fn base_inversion(rng: &mut ChaCha8Rng, d: u32) -> f64 {
    let q = draw_q(rng, d);
    let a = draw(rng, 0.3, 1.8, d);
    let n = rng.gen_range(0..=20u32);
    let lhs = qpoch_base_inverted(&a, &q, n).unwrap();
    // direct product of (1 - a q^{-j})
    let mut rhs = PrecisionComplex::one(d);
    for j in 0..n as i64 {
        rhs *= (q.powi(-j) * &a).one_minus();
    }
    rel_error(&lhs, &rhs, floor(d))
}

/// `a^n (x/a;q)_n` against its limit: the residual is the excess of the error
/// over twice the first-order bound `Σ |a/(x q^j)|`, so an O(a) error gives 0.
fn critical_limit(rng: &mut ChaCha8Rng, d: u32) -> f64 {
    let q = draw_q(rng, d);
    let x = draw(rng, 0.3, 1.8, d);
    let n = rng.gen_range(1..=10i64);
    let mut worst: f64 = 0.0;
    for m in 2..=8 {
        let a = PrecisionComplex::real(10f64.powi(-m), d);
        let lhs = a.powi(n) * qpoch_n(&(&x / &a), &q, n).unwrap();
        let limit = q.powi(n * (n - 1) / 2) * (-&x).powi(n);
        let err = rel_error(&lhs, &limit, floor(d));
        let bound: f64 = (0..n).map(|j| 10f64.powi(-m) / (x.abs_f64() * q.abs_f64().powi(j as i32))).sum();
        // only once a is small against every x q^j is the first-order regime reached
        if bound < 0.1 {
            worst = worst.max(err - 2.0 * bound);
        }
    }
    worst.max(0.0)
}

fn triple_product(rng: &mut ChaCha8Rng, d: u32) -> f64 {
    let ctl = TruncationControl::for_digits(d + 10);
    let q = draw_q(rng, d);
    let z = draw(rng, 0.3, 1.8, d);
    let lhs = theta(&z, &q, &ctl).unwrap() * qpoch_inf(q.value(), &q, &ctl).unwrap();
    let mut rhs = PrecisionComplex::zero(d);
    let mz = -&z;
    for n in -80i64..=80 {
        rhs += q.powi(n * (n - 1) / 2) * mz.powi(n);
    }
    rel_error(&lhs, &rhs, floor(d))
}

fn square_split(rng: &mut ChaCha8Rng, d: u32) -> f64 {
    let ctl = TruncationControl::for_digits(d + 10);
    let q = draw_q(rng, d);
    let a = draw(rng, 0.3, 1.8, d);
    let r = q.value().sqrt();
    let lhs = qpoch_inf(&(&a * &a), &q, &ctl).unwrap();
    let mut rhs = PrecisionComplex::one(d);
    for x in [a.clone(), -&a, &r * &a, -(&r * &a)] {
        rhs *= qpoch_inf(&x, &q, &ctl).unwrap();
    }
    rel_error(&lhs, &rhs, floor(d))
}

fn theta_ratio(rng: &mut ChaCha8Rng, d: u32) -> f64 {
    let ctl = TruncationControl::for_digits(d + 10);
    let q = draw_q(rng, d);
    let a = draw(rng, 0.3, 1.8, d);
    let qa = q.value() * &a;
    let lhs = theta(&a, &q, &ctl).unwrap() / theta(&qa, &q, &ctl).unwrap();
    rel_error(&lhs, &(-&a), floor(d))
}

fn theta_addition(rng: &mut ChaCha8Rng, d: u32) -> f64 {
    let ctl = TruncationControl::for_digits(d + 10);
    let q = draw_q(rng, d);
    let [a, c, dd, e] = [0, 1, 2, 3].map(|_| draw(rng, 0.3, 1.8, d));
    let res = theta_addition_residual(&a, &c, &dd, &e, &q, &ctl).unwrap();
    // measured against the largest of the three theta products
    let qv = q.value();
    let prods = [
        [e.clone(), &e / &c, qv * &a / &dd, qv * &c / (&a * &dd)],
        [dd.clone(), &dd / &c, qv * &a / &e, qv * &c / (&a * &e)],
        [a.clone(), &c / &a, &e / &dd, &dd * &e / &c],
    ];
    let scale = prods
        .iter()
        .map(|p| theta_multi(p, &q, &ctl).unwrap().abs_f64())
        .fold(floor(d), f64::max);
    res.abs_f64() / scale
}

pub const KERNEL_CHECKS: [(&str, Check); 9] = [
    ("splitting", splitting),
    ("infinite/finite consistency", finite_infinite),
    ("negative index", negative_index),
    ("base inversion", base_inversion),
    ("critical limit", critical_limit),
    ("triple product", triple_product),
    ("square split", square_split),
    ("theta ratio", theta_ratio),
    ("theta addition", theta_addition),
];

/// Runs every kernel invariant at `points` random points each.
pub fn kernel_suite(points: usize, digits: u32, seed: u64) -> Vec<InvariantRun> {
    KERNEL_CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let max_residual = (0..points).map(|_| check(&mut rng, digits)).fold(0.0, f64::max);
            InvariantRun { name, points, max_residual }
        })
        .collect()
}

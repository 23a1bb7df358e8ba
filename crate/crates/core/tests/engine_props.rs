mod common;

use common::polar;
use proptest::prelude::*;
use qident::engine::{
    eval_phi, eval_psi, eval_wp_bilateral, eval_wp_unilateral, phi_converges, Convergence, SeriesSpec,
    WellPoisedSpec,
};
use qident::precision::rel_error;
use qident::qcore::qpoch_n;
use qident::{PrecisionComplex, QBase, TruncationControl};

const D: u32 = 40;

fn ctl(d: u32) -> TruncationControl {
    TruncationControl::for_digits(d + 10)
}

fn param() -> impl Strategy<Value = (f64, f64)> {
    (0.3f64..1.8, 0.0f64..std::f64::consts::TAU)
}

fn small() -> impl Strategy<Value = (f64, f64)> {
    (0.1f64..0.5, 0.0f64..std::f64::consts::TAU)
}

fn base() -> impl Strategy<Value = f64> {
    0.05f64..0.6
}

fn lift((r, t): (f64, f64)) -> PrecisionComplex {
    polar(r, t, D)
}

fn q_of(x: f64) -> QBase {
    QBase::from_f64(x, D).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pair_combination_is_exact(a in param(), q in base(), k in 0i64..25) {
        let (a, q) = (lift(a), q_of(q));
        let r = a.sqrt();
        let qr = q.value() * &r;
        let lhs = qpoch_n(&qr, &q, k).unwrap() * qpoch_n(&(-&qr), &q, k).unwrap()
            / (qpoch_n(&r, &q, k).unwrap() * qpoch_n(&(-&r), &q, k).unwrap());
        let rhs = (q.powi(2 * k) * &a).one_minus() / a.one_minus();
        prop_assert!(rel_error(&lhs, &rhs, 1e-40) < 1e-30);
    }

    #[test]
    fn bilateral_with_q_denominator_is_unilateral(a in param(), b in param(), c in param(), z in small(), q in base()) {
        let q = q_of(q);
        let (a, b, c, z) = (lift(a), lift(b), lift(c), lift(z));
        let phi = eval_phi(&SeriesSpec::phi(vec![a.clone(), b.clone()], vec![c.clone()], q.clone(), z.clone()), &ctl(D)).unwrap();
        let psi = eval_psi(
            &SeriesSpec::psi(vec![a, b], vec![c, q.value().clone()], q, z),
            &ctl(D),
        ).unwrap();
        prop_assert!(rel_error(&phi.value, &psi.value, 1e-40) < 1e-30);
    }

    #[test]
    fn terminating_series_reversal(a in param(), b in param(), c in param(), z in param(), q in base(), n in 0i64..12) {
        let q = q_of(q);
        let (a, b, c, z) = (lift(a), lift(b), lift(c), lift(z));
        let top = q.powi(-n);
        let spec = SeriesSpec::phi(vec![top.clone(), a.clone()], vec![b.clone(), c.clone()], q.clone(), z.clone());
        prop_assume!(matches!(phi_converges(&spec), Convergence::Terminating(_)));
        let v = eval_phi(&spec, &ctl(D)).unwrap().value;
        let mut sum = PrecisionComplex::zero(D);
        for k in (0..=n).rev() {
            let num = qpoch_n(&top, &q, k).unwrap() * qpoch_n(&a, &q, k).unwrap();
            let den = qpoch_n(q.value(), &q, k).unwrap() * qpoch_n(&b, &q, k).unwrap() * qpoch_n(&c, &q, k).unwrap();
            // e = s - r + 1 = 1
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += num / den * q.powi(k * (k - 1) / 2).mul_f64(sign) * z.powi(k);
        }
        let scale = v.abs_f64().max(1e-20);
        prop_assert!((&v - &sum).abs_f64() / scale < 1e-28);
    }

    #[test]
    fn stopping_rule_is_sound(a in param(), b in param(), c in param(), z in small(), q in base()) {
        let (a, b, c, z) = (lift(a), lift(b), lift(c), lift(z));
        let spec = |d: u32| {
            let w = |x: &PrecisionComplex| x.with_digits(d);
            SeriesSpec::phi(vec![w(&a), w(&b)], vec![w(&c)], QBase::from_f64(q, d).unwrap(), w(&z))
        };
        let coarse = eval_phi(&spec(D), &ctl(D)).unwrap();
        let fine = eval_phi(&spec(2 * D), &ctl(2 * D)).unwrap();
        let diff = (&coarse.value.with_digits(2 * D) - &fine.value).abs_f64();
        // tail bound plus rounding at the coarse precision
        let bound = coarse.tail_bound.to_f64() + coarse.value.abs_f64() * 10f64.powi(-(D as i32 - 2));
        prop_assert!(diff <= bound, "diff {diff:e} bound {bound:e}");
    }

    #[test]
    fn zero_parameters_match_literal_zeros(a in param(), b in param(), z in param(), q in base(), p in 1i32..3) {
        let q = q_of(q);
        let (a, b, z) = (lift(a), lift(b), lift(z));
        let zero = PrecisionComplex::zero(D);
        // zero denominators: literal (0;q)_k = 1 entries with the exponent bump from s
        let mut dens = vec![b.clone()];
        dens.extend((0..p).map(|_| zero.clone()));
        let literal = eval_phi(&SeriesSpec::phi(vec![a.clone()], dens, q.clone(), z.clone()), &ctl(D)).unwrap();
        let counted = eval_phi(&SeriesSpec::phi(vec![a.clone()], vec![b.clone()], q.clone(), z.clone()).with_zeros(p), &ctl(D)).unwrap();
        prop_assert!(rel_error(&literal.value, &counted.value, 1e-40) < 1e-30);
        // one zero numerator
        let zs = z.mul_f64(0.2);
        let literal = eval_phi(&SeriesSpec::phi(vec![a.clone(), zero], vec![b.clone()], q.clone(), zs.clone()), &ctl(D)).unwrap();
        let counted = eval_phi(&SeriesSpec::phi(vec![a], vec![b], q, zs).with_zeros(-1), &ctl(D)).unwrap();
        prop_assert!(rel_error(&literal.value, &counted.value, 1e-40) < 1e-30);
    }

    #[test]
    fn bilateral_zero_denominator_is_a_limit(a in param(), b in param(), z in param(), q in base()) {
        // (c;q)_k -> 1 for every integer k as c -> 0
        let d = 60;
        let q = QBase::from_f64(q, d).unwrap();
        let w = |x: (f64, f64)| polar(x.0, x.1, d);
        let (a, b, z) = (w(a), w(b), w(z));
        let tiny = PrecisionComplex::real(1e-40, d);
        let exact = eval_psi(&SeriesSpec::psi(vec![a.clone()], vec![b.clone()], q.clone(), z.clone()).with_zeros(1), &ctl(d));
        let limit = eval_psi(&SeriesSpec::psi(vec![a], vec![b, tiny], q, z), &ctl(d));
        let (exact, limit) = (exact.unwrap(), limit.unwrap());
        prop_assert!(rel_error(&exact.value, &limit.value, 1e-50) < 1e-25);
    }

    #[test]
    fn well_poised_matches_expanded_phi(a in param(), b in param(), c in param(), d in param(), q in base()) {
        let q = q_of(q);
        let (a, b, c, d) = (lift(a), lift(b), lift(c), lift(d));
        let qa = q.value() * &a;
        let z = &qa * &qa / (&b * &c * &d) ;
        prop_assume!(z.abs_f64() < 0.8);
        let r = a.sqrt();
        let qr = q.value() * &r;
        let wp = eval_wp_unilateral(
            &WellPoisedSpec { a: a.clone(), tail: vec![b.clone(), c.clone(), d.clone()], p: 0, q: q.clone(), z: z.clone() },
            &ctl(D),
        ).unwrap();
        let phi = eval_phi(
            &SeriesSpec::phi(
                vec![a.clone(), qr.clone(), -&qr, b.clone(), c.clone(), d.clone()],
                vec![r.clone(), -&r, &qa / &b, &qa / &c, &qa / &d],
                q,
                z,
            ),
            &ctl(D),
        ).unwrap();
        prop_assert!(rel_error(&wp.value, &phi.value, 1e-40) < 1e-28);
    }

    #[test]
    fn bilateral_well_poised_reduces_when_tail_hits_a(a in param(), b in param(), c in param(), q in base()) {
        let q = q_of(q);
        let (a, b, c) = (lift(a), lift(b), lift(c));
        let qa = q.value() * &a;
        let z = &qa / (&b * &c);
        prop_assume!(z.abs_f64() < 0.8 && z.abs_f64() > 0.05);
        // the bilateral series has no leading (a;q)_k/(q;q)_k, so a tail entry a supplies it
        let bi = WellPoisedSpec { a: a.clone(), tail: vec![a.clone(), b.clone(), c.clone()], p: 0, q: q.clone(), z: z.clone() };
        let uni = WellPoisedSpec { a, tail: vec![b, c], p: 0, q, z };
        let uni = eval_wp_unilateral(&uni, &ctl(D)).unwrap();
        let bi = eval_wp_bilateral(&bi, &ctl(D)).unwrap();
        prop_assert!(rel_error(&uni.value, &bi.value, 1e-40) < 1e-28);
    }
}

#[test]
fn ramanujan_one_psi_one_example() {
    // z = 0.5 would put az = 1 where both sides vanish, so take z = 0.4
    let q = q_of(0.1);
    let r = |x: f64| PrecisionComplex::real(x, D);
    let (a, b, z) = (r(2.0), r(0.3), r(0.4));
    let psi = eval_psi(&SeriesSpec::psi(vec![a.clone()], vec![b.clone()], q.clone(), z.clone()), &ctl(D)).unwrap();
    let c = ctl(D);
    let p = |x: PrecisionComplex| qident::qcore::qpoch_inf(&x, &q, &c).unwrap();
    let az = &a * &z;
    let rhs = p(q.value().clone()) * p(&b / &a) * p(az.clone()) * p(q.value() / &az)
        / (p(b.clone()) * p(q.value() / &a) * p(z.clone()) * p(&b / &az));
    assert!(rel_error(&psi.value, &rhs, 1e-40) < 1e-30);
}

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use qident::expr::{eval, expand_idem, free_symbols, parse, Expr, ParamEnv};
use qident::precision::rel_error;
use qident::verifier::{sample_point, SampleConfig};
use qident::{PrecisionComplex, QBase, TruncationControl};

#[test]
fn print_then_parse_is_identity_on_catalog() {
    let cat = common::catalog();
    for id in cat.identities() {
        for side in id.sides().into_iter().chain(id.negative_variant.as_ref()) {
            let text = side.to_string();
            let back = parse(&text).unwrap_or_else(|e| panic!("{}: {e}\n{text}", id.id));
            assert_eq!(&back, side, "{}", id.id);
        }
    }
}

#[test]
fn grammar_examples() {
    let sym = |s: &str| Expr::sym(s);
    assert_eq!(
        parse("qpoch_inf(a; q)").unwrap(),
        Expr::QPochInf { args: vec![sym("a")], base: Box::new(sym("q")) }
    );
    assert_eq!(
        parse("theta(a, q/a; q)").unwrap(),
        Expr::Theta {
            args: vec![sym("a"), Expr::Div(Box::new(sym("q")), Box::new(sym("a")))],
            base: Box::new(sym("q")),
        }
    );
    match parse("idem(e; f){ e/f }").unwrap() {
        Expr::IdemSum { pivot, alternatives, .. } => {
            assert_eq!(pivot, "e");
            assert_eq!(alternatives, vec!["f".to_string()]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(parse("qpoch_inf(a; q").is_err());
}

#[test]
fn expand_idem_shapes() {
    let e = parse("idem(x; y){ x - 2*y }").unwrap();
    assert_eq!(expand_idem(&e), parse("(x - 2*y) + (y - 2*x)").unwrap());
    let three = expand_idem(&parse("idem(l; m, n){ l/m }").unwrap());
    assert_eq!(three, parse("l/m + m/l + n/m").unwrap());
    let plain = parse("qpoch_inf(a, b; q) * theta(c; q)").unwrap();
    assert_eq!(expand_idem(&plain), plain);
}

#[test]
fn free_symbol_examples() {
    assert!(free_symbols(&parse("1").unwrap()).is_empty());
    let cat = common::catalog();
    let b1 = cat.get("B1").unwrap();
    let expect: BTreeSet<String> = ["a", "b", "q", "z"].iter().map(|s| s.to_string()).collect();
    assert_eq!(free_symbols(&b1.lhs), expect);
    let b11 = cat.get("B11").unwrap();
    let mut syms = free_symbols(&b11.rhs_forms[0]);
    syms.remove("q");
    assert_eq!(syms.into_iter().collect::<String>(), "abcdefg");
}

#[test]
fn constant_plus_symbol() {
    let env = ParamEnv::new(QBase::from_f64(0.5, 30).unwrap()).with("a", PrecisionComplex::real(2.0, 30));
    let v = eval(&parse("3 + a").unwrap(), &env, &TruncationControl::for_digits(40)).unwrap();
    assert_eq!(v.to_f64_pair(), (5.0, 0.0));
}

#[test]
fn idem_over_three_alternatives_matches_manual_expansion() {
    // the 10W9 summand of B7 as a three-term idem sum
    let cat = common::catalog();
    let b7 = cat.get("B7").unwrap();
    let digits = 40;
    let cfg = SampleConfig { digits, ..SampleConfig::default() };
    let env = sample_point(b7, &cfg, 0).unwrap().env(digits + 10).unwrap();
    let ctl = TruncationControl::for_digits(digits + 10);
    let mut found = 0;
    for side in b7.sides() {
        side.walk(&mut |node| {
            if let Expr::IdemSum { pivot, alternatives, body } = node {
                found += 1;
                let whole = eval(node, &env, &ctl).unwrap();
                let mut manual = eval(body, &env, &ctl).unwrap();
                for alt in alternatives {
                    manual += eval(&body.swap(pivot, alt), &env, &ctl).unwrap();
                }
                assert!(rel_error(&whole, &manual, 1e-40) < 1e-38);
            }
        });
    }
    assert!(found > 0, "B7 has no idem sum");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn expanding_idem_preserves_value(idx in 0usize..64, seed in 0u64..1000) {
        let cat = common::catalog();
        let with_idem: Vec<_> = cat
            .identities()
            .iter()
            .filter(|id| id.sides().iter().any(|s| s.to_string().contains("idem(")))
            .collect();
        prop_assume!(!with_idem.is_empty());
        let id = with_idem[idx % with_idem.len()];
        let digits = 30;
        let cfg = SampleConfig { seed, digits, ..SampleConfig::default() };
        let env = sample_point(id, &cfg, 0).unwrap().env(digits + 10).unwrap();
        let ctl = TruncationControl::for_digits(digits + 10);
        for side in id.sides() {
            let a = eval(side, &env, &ctl).unwrap();
            let b = eval(&expand_idem(side), &env, &ctl).unwrap();
            prop_assert!(rel_error(&a, &b, 1e-30) < 1e-30);
        }
    }

    #[test]
    fn evaluation_is_referentially_transparent(idx in 0usize..64, seed in 0u64..1000) {
        let cat = common::catalog();
        let id = &cat.identities()[idx % cat.len()];
        let digits = 25;
        let cfg = SampleConfig { seed, digits, ..SampleConfig::default() };
        let env = sample_point(id, &cfg, 0).unwrap().env(digits + 10).unwrap();
        let ctl = TruncationControl::for_digits(digits + 10);
        let a = eval(&id.lhs, &env, &ctl).unwrap();
        let b = eval(&id.lhs, &env, &ctl).unwrap();
        prop_assert_eq!(a, b);
    }
}

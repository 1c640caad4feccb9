use proptest::prelude::*;
use ramkit::model::Phase;
use ramkit::risk::{RiskState, Scope};
use ramkit::trace::{self, parse_formula, Formula};

const FACTORS: [&str; 2] = ["a", "b"];

/// Direct recursive semantics over suffixes.
fn sat(f: &Formula, tr: &[(Phase, Phase)], i: usize) -> bool {
    let n = tr.len();
    match f {
        Formula::Const(b) => *b,
        Formula::Atom(x, p) => {
            let s = tr[i];
            (if x == "a" { s.0 } else { s.1 }) == *p
        }
        Formula::Not(a) => !sat(a, tr, i),
        Formula::And(a, b) => sat(a, tr, i) && sat(b, tr, i),
        Formula::Or(a, b) => sat(a, tr, i) || sat(b, tr, i),
        Formula::Implies(a, b) => !sat(a, tr, i) || sat(b, tr, i),
        Formula::Always(a) => (i..n).all(|j| sat(a, tr, j)),
        Formula::Eventually(a) => (i..n).any(|j| sat(a, tr, j)),
        Formula::Once(a) => (0..=i).any(|j| sat(a, tr, j)),
        Formula::Until(a, b) => (i..n).any(|k| sat(b, tr, k) && (i..k).all(|j| sat(a, tr, j))),
        Formula::WeakUntil(a, b) => {
            sat(&Formula::Until(a.clone(), b.clone()), tr, i) || (i..n).all(|j| sat(a, tr, j))
        }
    }
}

fn phase() -> impl Strategy<Value = Phase> {
    prop_oneof![
        Just(Phase::Inactive),
        Just(Phase::Active),
        Just(Phase::Mitigated),
        Just(Phase::Mishap)
    ]
}

fn formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        any::<bool>().prop_map(Formula::Const),
        (prop::sample::select(FACTORS.to_vec()), phase()).prop_map(|(x, p)| Formula::Atom(x.into(), p)),
    ];
    leaf.prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            inner.clone().prop_map(Formula::always),
            inner.clone().prop_map(Formula::eventually),
            inner.clone().prop_map(Formula::once),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::until(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::weak_until(a, b)),
        ]
    })
}

fn encode(tr: &[(Phase, Phase)]) -> Vec<RiskState> {
    tr.iter()
        .map(|(a, b)| RiskState::ZERO.with_phase(0, *a).with_phase(1, *b))
        .collect()
}

fn scope() -> Scope {
    Scope::new(FACTORS.iter().map(|s| s.to_string()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn agrees_with_direct_semantics(f in formula(), tr in prop::collection::vec((phase(), phase()), 1..=8)) {
        let v = trace::evaluate(&f, &scope(), &encode(&tr)).unwrap();
        for (i, got) in v.iter().enumerate() {
            prop_assert_eq!(*got, sat(&f, &tr, i), "position {} of {}", i, f);
        }
        let verdict = trace::check_trace(&f, &scope(), &encode(&tr)).unwrap();
        prop_assert_eq!(verdict.holds, sat(&f, &tr, 0));
        prop_assert_eq!(verdict.witness_index.is_none(), verdict.holds);
    }

    #[test]
    fn display_parses_back(f in formula()) {
        prop_assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn always_witness_is_first_failure(f in formula(), tr in prop::collection::vec((phase(), phase()), 1..=8)) {
        let g = Formula::always(f.clone());
        let verdict = trace::check_trace(&g, &scope(), &encode(&tr)).unwrap();
        let first = (0..tr.len()).find(|i| !sat(&f, &tr, *i));
        prop_assert_eq!(verdict.witness_index, first);
    }
}

#[test]
fn requires_witness_on_late_activation() {
    use Phase::*;
    let f = trace::constraint_to_formula(&ramkit::Constraint::new("a", ramkit::ConstraintKind::Requires, "b"));
    let tr = [(Inactive, Inactive), (Inactive, Inactive), (Active, Inactive)];
    let v = trace::check_trace(&f, &scope(), &encode(&tr)).unwrap();
    assert_eq!(v.witness_index, Some(2));
}

#[test]
fn unknown_factor_and_empty_trace_are_errors() {
    let f = Formula::active("zz");
    assert!(trace::check_trace(&f, &scope(), &[RiskState::ZERO]).is_err());
    assert!(trace::check_trace(&Formula::Const(true), &scope(), &[]).is_err());
}

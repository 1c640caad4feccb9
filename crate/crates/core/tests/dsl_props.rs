mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ramkit::dsl::{format_process_expr, parse_model, parse_model_named, parse_process_expr, serialize_model};
use ramkit::model::{validate, MitigationClass};
use ramkit::{CausalFactor, CausalFactorModel, Constraint, ConstraintKind, EndangermentClass, ProcessExpr, Situation};

use common::*;

const NAMES: [&str; 6] = ["", "badWeather", "lowOrNo-Fuel", "say \"hi\"", "back\\slash", "zweiräd"];
const MECHANISMS: [&str; 4] = ["Ab", "spare battery", "x_1", "\"quoted\""];

fn random_dsl_model(rng: &mut ChaCha8Rng) -> CausalFactorModel {
    let mut m = CausalFactorModel::new();
    let mut ids: Vec<String> = (0..rng.gen_range(1..=6)).map(|i| format!("F{i}")).collect();
    ids.shuffle(rng);
    for id in &ids {
        let mut f = CausalFactor::new(id, EndangermentClass::ALL[rng.gen_range(0..4)])
            .named(NAMES[rng.gen_range(0..NAMES.len())]);
        f.has_mishap_phase = rng.gen_bool(0.3);
        f.re_endanger = rng.gen_bool(0.3);
        match rng.gen_range(0..3) {
            0 => f.direct = true,
            1 => f.off_repair = true,
            _ => {}
        }
        if rng.gen_bool(0.4) {
            let mech = rng.gen_bool(0.5).then(|| MECHANISMS[rng.gen_range(0..MECHANISMS.len())]);
            f = f.with_mitigation(MitigationClass::ALL[rng.gen_range(0..5)], mech);
        }
        m.add_factor(f);
    }
    let subset = |rng: &mut ChaCha8Rng| -> Vec<String> { ids.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect() };
    let atoms: Vec<String> = (0..rng.gen_range(1..=4)).map(|i| format!("s{i}")).collect();
    for a in &atoms {
        let fs = subset(rng);
        m.add_situation(Situation::atomic(a, fs.iter().map(String::as_str)));
    }
    let aspect = rng.gen_bool(0.5).then(|| {
        let fs = subset(rng);
        m.add_situation(Situation::aspect("asp", fs.iter().map(String::as_str)));
        "asp".to_string()
    });

    let mut global = std::collections::BTreeSet::new();
    for _ in 0..rng.gen_range(0..4) {
        let c = Constraint::new(
            &ids[rng.gen_range(0..ids.len())],
            ConstraintKind::ALL[rng.gen_range(0..4)],
            &ids[rng.gen_range(0..ids.len())],
        );
        if !conflicts(&global, &c) {
            global.insert(c.clone());
            m.add_constraint(c);
        }
    }

    fn expr(rng: &mut ChaCha8Rng, atoms: &[String], depth: u32) -> ProcessExpr {
        if depth == 0 || rng.gen_bool(0.3) {
            return ProcessExpr::atom(&atoms[rng.gen_range(0..atoms.len())]);
        }
        match rng.gen_range(0..3) {
            0 => ProcessExpr::seq(expr(rng, atoms, depth - 1), expr(rng, atoms, depth - 1)),
            1 => ProcessExpr::choice(expr(rng, atoms, depth - 1), expr(rng, atoms, depth - 1)),
            _ => ProcessExpr::star(expr(rng, atoms, depth - 1)),
        }
    }
    let body = expr(rng, &atoms, 3);
    m.add_process("Body", body);
    let main = match &aspect {
        Some(a) => ProcessExpr::par(ProcessExpr::atom(a), ProcessExpr::reference("Body")),
        None => ProcessExpr::seq(ProcessExpr::atom(&atoms[0]), ProcessExpr::reference("Body")),
    };
    m.add_process("Main", main);
    m.set_root("Main");
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn serialize_round_trips(seed in any::<u64>()) {
        let m = random_dsl_model(&mut seeded(seed));
        let diags = validate(&m);
        prop_assume!(diags.is_empty(), "generator produced an invalid model: {:?}", diags);
        let text = serialize_model(&m).unwrap();
        let back = parse_model(&text).map_err(|d| TestCaseError::fail(format!("{}\n{text}", d[0])))?;
        prop_assert_eq!(&back, &m);
        prop_assert!(back.factors.keys().eq(m.factors.keys()));
        prop_assert_eq!(serialize_model(&back).unwrap(), text);
    }

    #[test]
    fn process_text_round_trips(seed in any::<u64>()) {
        let m = random_dsl_model(&mut seeded(seed));
        let body = &m.processes["Body"];
        let text = format_process_expr(body);
        let back = parse_process_expr(&text, &m).map_err(|d| TestCaseError::fail(format!("{}", d[0])))?;
        prop_assert_eq!(&back, body);
    }

    #[test]
    fn validate_is_pure(seed in any::<u64>()) {
        let mut m = random_dsl_model(&mut seeded(seed));
        m.add_constraint(Constraint::new("F0", ConstraintKind::Requires, "ghost"));
        prop_assert_eq!(validate(&m), validate(&m));
        prop_assert!(!validate(&m).is_empty());
    }
}

#[test]
fn fixtures_parse_deterministically() {
    for name in fixture_names() {
        let text = fixture(&name);
        let a = parse_model_named(&text, &name);
        let b = parse_model_named(&text, &name);
        assert_eq!(a, b, "{name}");
        assert!(a.is_ok(), "{name}: {:?}", a.err());
    }
}

#[test]
fn diagnostics_are_deterministic_and_positioned() {
    let dup = "factor W class d;\nfactor W class f;\n";
    let unknown = "situation s factors {};\nprocess P = s; nope;\nroot P;\n";
    let expect = [
        (dup, "<input>:2:8: error: duplicate identifier:"),
        (unknown, "<input>:2:16: error: unknown reference:"),
    ];
    for (text, prefix) in expect {
        let a = parse_model(text).unwrap_err();
        assert_eq!(a, parse_model(text).unwrap_err());
        let msgs: Vec<String> = a.iter().map(|d| d.to_string()).collect();
        assert!(msgs.iter().any(|m| m.starts_with(prefix)), "{msgs:?}");
        for d in &a {
            assert!(d.span.line >= 1 && d.span.column >= 1 && !d.message.is_empty());
        }
    }
}

#[test]
fn unguarded_recursion_is_reported() {
    let text = "situation s factors {};\nprocess P = Q | s;\nprocess Q = P;\nroot P;\n";
    let d = parse_model(text).unwrap_err();
    assert!(d.iter().any(|d| d.message.starts_with("unguarded recursion:")), "{d:?}");
    let ok = "situation s factors {};\nprocess P = s; P;\nroot P;\n";
    assert!(parse_model(ok).is_ok());
}

#[test]
fn ascii_and_unicode_parallel_agree() {
    let base = "factor F class f;\nsituation a aspect factors {F};\nsituation b factors {};\n";
    let m1 = parse_model(&format!("{base}process P = a || b;\nroot P;\n")).unwrap();
    let m2 = parse_model(&format!("{base}process P = a ∥ b;\nroot P;\n")).unwrap();
    assert_eq!(m1, m2);
}

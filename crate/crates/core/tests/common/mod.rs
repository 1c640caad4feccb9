//! Reference implementations used by the integration tests.
//!
//! The oracle composes phase models by enumerating every phase tuple and
//! applying the constraint rules edge by edge, then keeps what is reachable
//! from the all-inactive tuple. It shares no code with the library's
//! composer beyond the model types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ramkit::model::{
    ActionKind, CausalFactor, CausalFactorModel, Constraint, ConstraintKind, EndangermentClass,
    Phase, Situation,
};
use ramkit::risk::RiskStructure;

pub type Tuple = Vec<Phase>;

/// `(source, factor index, kind, offline, target)`
pub type Edge = (Tuple, usize, ActionKind, bool, Tuple);

pub struct Oracle {
    pub states: BTreeSet<Tuple>,
    pub edges: Vec<Edge>,
}

fn all_tuples(factors: &[CausalFactor]) -> Vec<Tuple> {
    let mut out = vec![Vec::new()];
    for f in factors {
        let mut next = Vec::new();
        for t in &out {
            for p in [Phase::Inactive, Phase::Active, Phase::Mitigated, Phase::Mishap] {
                if p == Phase::Mishap && !f.has_mishap_phase {
                    continue;
                }
                let mut u = t.clone();
                u.push(p);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

fn idx(factors: &[CausalFactor], id: &str) -> usize {
    factors.iter().position(|f| f.id == id).unwrap()
}

fn activation(factors: &[CausalFactor], cs: &[Constraint], s: &Tuple, i: usize) -> Option<Tuple> {
    for c in cs {
        let (l, r) = (idx(factors, &c.left), idx(factors, &c.right));
        let blocked = match c.kind {
            ConstraintKind::Requires => l == i && s[r] != Phase::Active,
            ConstraintKind::Denies | ConstraintKind::Excludes => r == i && s[l] == Phase::Active,
            ConstraintKind::Causes => false,
        };
        if blocked {
            return None;
        }
    }
    let mut t = s.clone();
    t[i] = Phase::Active;
    let mut fired: BTreeSet<usize> = BTreeSet::from([i]);
    loop {
        let mut grew = false;
        for c in cs.iter().filter(|c| c.kind == ConstraintKind::Causes) {
            let (l, r) = (idx(factors, &c.left), idx(factors, &c.right));
            if fired.contains(&l) && t[r] == Phase::Inactive {
                t[r] = Phase::Active;
                fired.insert(r);
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    let cleared: Vec<usize> = cs
        .iter()
        .filter(|c| c.kind == ConstraintKind::Excludes)
        .filter(|c| t[idx(factors, &c.left)] == Phase::Active)
        .map(|c| idx(factors, &c.right))
        .filter(|r| matches!(t[*r], Phase::Active | Phase::Mitigated))
        .collect();
    for r in cleared {
        t[r] = Phase::Inactive;
    }
    Some(t)
}

pub fn oracle(factors: &[CausalFactor], cs: &[Constraint]) -> Oracle {
    let mut all_edges: HashMap<Tuple, Vec<Edge>> = HashMap::new();
    for s in all_tuples(factors) {
        let mut out = Vec::new();
        for (i, f) in factors.iter().enumerate() {
            let mut add = |kind: ActionKind, t: Tuple| {
                let offline = kind == ActionKind::EndMitigate && f.off_repair;
                out.push((s.clone(), i, kind, offline, t));
            };
            let with = |p: Phase| {
                let mut t = s.clone();
                t[i] = p;
                t
            };
            match s[i] {
                Phase::Inactive => {
                    if let Some(t) = activation(factors, cs, &s, i) {
                        add(ActionKind::Activate, t);
                    }
                }
                Phase::Active => {
                    add(ActionKind::StartMitigate, with(Phase::Mitigated));
                    if f.direct {
                        add(ActionKind::CompleteMitigate, with(Phase::Inactive));
                    }
                    if f.has_mishap_phase {
                        add(ActionKind::MishapStep, with(Phase::Mishap));
                    }
                }
                Phase::Mitigated => {
                    add(ActionKind::EndMitigate, with(Phase::Inactive));
                    if f.re_endanger {
                        if let Some(t) = activation(factors, cs, &s, i) {
                            add(ActionKind::Activate, t);
                        }
                    }
                }
                Phase::Mishap => {}
            }
        }
        all_edges.insert(s, out);
    }

    let zero = vec![Phase::Inactive; factors.len()];
    let mut states = BTreeSet::from([zero.clone()]);
    let mut queue = VecDeque::from([zero]);
    let mut edges = Vec::new();
    while let Some(s) = queue.pop_front() {
        for e in &all_edges[&s] {
            if states.insert(e.4.clone()) {
                queue.push_back(e.4.clone());
            }
            edges.push(e.clone());
        }
    }
    edges.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
    Oracle { states, edges }
}

pub fn tuple_of(rs: &RiskStructure, s: ramkit::RiskState) -> Tuple {
    s.phases(rs.scope.len()).collect()
}

/// The structure's states and edges in oracle form.
pub fn flatten(rs: &RiskStructure) -> Oracle {
    let states = rs.states.iter().map(|s| tuple_of(rs, *s)).collect();
    let mut edges: Vec<Edge> = rs
        .edges()
        .map(|(s, l, t)| {
            let i = rs.scope.position(&l.factor).unwrap();
            (tuple_of(rs, s), i, l.kind, l.offline, tuple_of(rs, t))
        })
        .collect();
    edges.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
    Oracle { states, edges }
}

/// Run-time mitigation successors of each state.
pub fn runtime_adjacency(o: &Oracle) -> HashMap<Tuple, Vec<Tuple>> {
    let mut adj: HashMap<Tuple, Vec<Tuple>> = HashMap::new();
    for e in &o.edges {
        if e.2.is_mitigation() && !e.3 {
            adj.entry(e.0.clone()).or_default().push(e.4.clone());
        }
    }
    adj
}

/// Length of the shortest run-time mitigation path from `from` to the zero
/// tuple, by exhaustive breadth-first search.
pub fn shortest_runtime_plan(adj: &HashMap<Tuple, Vec<Tuple>>, from: &Tuple) -> Option<usize> {
    let zero = vec![Phase::Inactive; from.len()];
    let mut seen = BTreeSet::from([from.clone()]);
    let mut frontier = vec![from.clone()];
    let mut d = 0;
    while !frontier.is_empty() {
        if frontier.contains(&zero) {
            return Some(d);
        }
        let mut next = Vec::new();
        for s in &frontier {
            for t in adj.get(s).into_iter().flatten() {
                if seen.insert(t.clone()) {
                    next.push(t.clone());
                }
            }
        }
        frontier = next;
        d += 1;
    }
    None
}

pub fn default_factor(id: &str) -> CausalFactor {
    CausalFactor::new(id, EndangermentClass::Failure)
}

pub const IDS: [&str; 5] = ["a", "b", "c", "d", "e"];

/// Single-situation model `s` over the given factors and global constraints.
pub fn single_situation(factors: &[CausalFactor], cs: &[Constraint]) -> CausalFactorModel {
    let mut m = CausalFactorModel::new();
    for f in factors {
        m.add_factor(f.clone());
    }
    m.add_situation(Situation::atomic("s", factors.iter().map(|f| f.id.as_str())));
    for c in cs {
        m.add_constraint(c.clone());
    }
    m
}

pub fn conflicts(cs: &BTreeSet<Constraint>, c: &Constraint) -> bool {
    if c.left == c.right {
        return true;
    }
    let clash = |k: ConstraintKind| cs.contains(&Constraint::new(&c.left, k, &c.right));
    match c.kind {
        ConstraintKind::Causes => clash(ConstraintKind::Denies) || clash(ConstraintKind::Excludes),
        ConstraintKind::Denies | ConstraintKind::Excludes => clash(ConstraintKind::Causes),
        ConstraintKind::Requires => false,
    }
}

/// Every constraint that could be added to `cs` without a conflict.
pub fn admissible_additions(n: usize, cs: &BTreeSet<Constraint>) -> Vec<Constraint> {
    let mut out = Vec::new();
    for l in &IDS[..n] {
        for r in &IDS[..n] {
            for k in ConstraintKind::ALL {
                let c = Constraint::new(l, k, r);
                if !cs.contains(&c) && !conflicts(cs, &c) {
                    out.push(c);
                }
            }
        }
    }
    out
}

pub struct RandomModel {
    pub factors: Vec<CausalFactor>,
    pub constraints: BTreeSet<Constraint>,
}

impl RandomModel {
    pub fn constraint_vec(&self) -> Vec<Constraint> {
        self.constraints.iter().cloned().collect()
    }

    pub fn model(&self) -> CausalFactorModel {
        single_situation(&self.factors, &self.constraint_vec())
    }
}

/// Random factor flags and up to four non-conflicting constraints over
/// `1..=max_n` factors.
pub fn random_model(rng: &mut ChaCha8Rng, max_n: usize) -> RandomModel {
    let n = rng.gen_range(1..=max_n);
    let classes = EndangermentClass::ALL;
    let factors: Vec<CausalFactor> = IDS[..n]
        .iter()
        .map(|id| {
            let mut f = CausalFactor::new(id, classes[rng.gen_range(0..4)]);
            f.has_mishap_phase = rng.gen_bool(0.3);
            f.re_endanger = rng.gen_bool(0.3);
            match rng.gen_range(0..3) {
                0 => f.direct = true,
                1 => f.off_repair = true,
                _ => {}
            }
            f
        })
        .collect();
    let mut constraints = BTreeSet::new();
    if n >= 2 {
        for _ in 0..rng.gen_range(0..=4) {
            let l = rng.gen_range(0..n);
            let r = rng.gen_range(0..n);
            let c = Constraint::new(IDS[l], ConstraintKind::ALL[rng.gen_range(0..4)], IDS[r]);
            if !conflicts(&constraints, &c) {
                constraints.insert(c);
            }
        }
    }
    RandomModel { factors, constraints }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Minimal DOT checker: a `digraph` with a quoted or plain id, a body of
/// node statements, edge statements and attribute lists, each ending in
/// `;`, with balanced quotes and brackets.
pub fn check_dot(text: &str) -> Result<(), String> {
    let toks = dot_tokens(text)?;
    let mut p = 0;
    let next = |p: &mut usize| -> Result<String, String> {
        let t = toks.get(*p).cloned().ok_or("unexpected end")?;
        *p += 1;
        Ok(t)
    };
    if next(&mut p)? != "digraph" {
        return Err("expected digraph".into());
    }
    let mut t = next(&mut p)?;
    if t != "{" {
        if !is_id(&t) {
            return Err(format!("bad graph id {t}"));
        }
        t = next(&mut p)?;
    }
    if t != "{" {
        return Err("expected {".into());
    }
    loop {
        let t = next(&mut p)?;
        if t == "}" {
            break;
        }
        if !is_id(&t) {
            return Err(format!("expected statement, found {t}"));
        }
        let mut t2 = next(&mut p)?;
        while t2 == "->" {
            let target = next(&mut p)?;
            if !is_id(&target) {
                return Err(format!("bad edge target {target}"));
            }
            t2 = next(&mut p)?;
        }
        if t2 == "[" {
            loop {
                let k = next(&mut p)?;
                if k == "]" {
                    break;
                }
                if !is_id(&k) || next(&mut p)? != "=" || !is_id(&next(&mut p)?) {
                    return Err(format!("bad attribute near {k}"));
                }
                let sep = toks.get(p).cloned().unwrap_or_default();
                if sep == "," || sep == ";" {
                    p += 1;
                }
            }
            t2 = next(&mut p)?;
        }
        if t2 != ";" {
            return Err(format!("expected ; found {t2}"));
        }
    }
    if p != toks.len() {
        return Err("trailing tokens".into());
    }
    Ok(())
}

fn is_id(t: &str) -> bool {
    t.starts_with('"') || t.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
}

fn dot_tokens(text: &str) -> Result<Vec<String>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '"' {
            let mut j = i + 1;
            while j < chars.len() && chars[j] != '"' {
                if chars[j] == '\\' {
                    j += 1;
                }
                j += 1;
            }
            if j >= chars.len() {
                return Err("unterminated string".into());
            }
            out.push(chars[i..=j].iter().collect());
            i = j + 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push("->".into());
            i += 2;
        } else if "{}[];,=".contains(c) {
            out.push(c.to_string());
            i += 1;
        } else if c.is_alphanumeric() || c == '_' || c == '.' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '.') {
                j += 1;
            }
            out.push(chars[i..j].iter().collect());
            i = j;
        } else {
            return Err(format!("unexpected character {c}"));
        }
    }
    Ok(out)
}

/// Reads a fixture file from the workspace `fixtures/` directory.
pub fn fixture(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn fixture_path(name: &str) -> String {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

pub fn fixture_names() -> Vec<String> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".ram"))
        .collect();
    names.sort();
    names
}

pub type Histogram = BTreeMap<String, usize>;

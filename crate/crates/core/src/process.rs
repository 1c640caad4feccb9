//! Driving processes over situations.
//!
//! Expressions combine situations by sequence, choice, repetition and
//! parallel composition. Parallel composition is supported in its
//! superimposition form only: one side consists of aspects, whose factors
//! (and constraints) are added to every situation on the other side.
//!
//! The successor relation between situations is derived without unfolding
//! traces: for every expression we compute whether it accepts the empty
//! run, which situations can start and end a run, and which pairs can follow
//! each other. Named processes may be mutually recursive as long as every
//! cycle passes through a situation; the per-name summaries are least
//! fixpoints.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    CausalFactorModel, Constraint, ConstraintKind, Diagnostic, Location, Phase, ProcessName,
    Severity, SituationId,
};
use crate::risk::{self, RiskState, Scope};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ProcessExpr {
    Atom(SituationId),
    Ref(ProcessName),
    Seq(Box<ProcessExpr>, Box<ProcessExpr>),
    Choice(Box<ProcessExpr>, Box<ProcessExpr>),
    Par(Box<ProcessExpr>, Box<ProcessExpr>),
    Star(Box<ProcessExpr>),
}

impl ProcessExpr {
    pub fn atom(s: &str) -> Self {
        ProcessExpr::Atom(s.to_string())
    }

    pub fn reference(p: &str) -> Self {
        ProcessExpr::Ref(p.to_string())
    }

    pub fn seq(l: ProcessExpr, r: ProcessExpr) -> Self {
        ProcessExpr::Seq(Box::new(l), Box::new(r))
    }

    pub fn choice(l: ProcessExpr, r: ProcessExpr) -> Self {
        ProcessExpr::Choice(Box::new(l), Box::new(r))
    }

    pub fn par(l: ProcessExpr, r: ProcessExpr) -> Self {
        ProcessExpr::Par(Box::new(l), Box::new(r))
    }

    pub fn star(body: ProcessExpr) -> Self {
        ProcessExpr::Star(Box::new(body))
    }

    fn refs(&self, out: &mut BTreeSet<ProcessName>) {
        match self {
            ProcessExpr::Atom(_) => {}
            ProcessExpr::Ref(p) => {
                out.insert(p.clone());
            }
            ProcessExpr::Seq(l, r) | ProcessExpr::Choice(l, r) | ProcessExpr::Par(l, r) => {
                l.refs(out);
                r.refs(out);
            }
            ProcessExpr::Star(b) => b.refs(out),
        }
    }

    fn atoms(&self, out: &mut BTreeSet<SituationId>) {
        match self {
            ProcessExpr::Atom(s) => {
                out.insert(s.clone());
            }
            ProcessExpr::Ref(_) => {}
            ProcessExpr::Seq(l, r) | ProcessExpr::Choice(l, r) | ProcessExpr::Par(l, r) => {
                l.atoms(out);
                r.atoms(out);
            }
            ProcessExpr::Star(b) => b.atoms(out),
        }
    }
}

/// Process definitions reachable from the root, in name order.
fn reachable_processes(model: &CausalFactorModel) -> Result<BTreeSet<ProcessName>> {
    let root = model.root.as_ref().ok_or(Error::NoRoot)?;
    let mut seen = BTreeSet::new();
    let mut stack = vec![root.clone()];
    while let Some(p) = stack.pop() {
        if !seen.insert(p.clone()) {
            continue;
        }
        let def = model
            .processes
            .get(&p)
            .ok_or_else(|| Error::UnknownSituation(p.clone()))?;
        let mut refs = BTreeSet::new();
        def.refs(&mut refs);
        stack.extend(refs.into_iter().filter(|r| !seen.contains(r)));
    }
    Ok(seen)
}

/// The aspects of an expression that consists only of aspects joined by
/// parallel composition, or `None` if it contains anything else.
fn aspect_set(
    model: &CausalFactorModel,
    expr: &ProcessExpr,
    visiting: &mut Vec<ProcessName>,
) -> Option<BTreeSet<SituationId>> {
    match expr {
        ProcessExpr::Atom(s) => {
            let sit = model.situations.get(s)?;
            sit.is_aspect().then(|| BTreeSet::from([s.clone()]))
        }
        ProcessExpr::Ref(p) => {
            if visiting.contains(p) {
                return None;
            }
            visiting.push(p.clone());
            let res = model
                .processes
                .get(p)
                .and_then(|def| aspect_set(model, def, visiting));
            visiting.pop();
            res
        }
        ProcessExpr::Par(l, r) => {
            let mut a = aspect_set(model, l, visiting)?;
            a.extend(aspect_set(model, r, visiting)?);
            Some(a)
        }
        _ => None,
    }
}

fn aspects_of_expr(model: &CausalFactorModel, expr: &ProcessExpr) -> Option<BTreeSet<SituationId>> {
    aspect_set(model, expr, &mut Vec::new())
}

/// For every atomic situation reachable from the root, the set of aspects
/// superimposed onto it (union over all of its occurrences).
pub fn aspect_contexts(
    model: &CausalFactorModel,
) -> Result<BTreeMap<SituationId, BTreeSet<SituationId>>> {
    let root = model.root.as_ref().ok_or(Error::NoRoot)?;
    let mut atom_ctx: BTreeMap<SituationId, BTreeSet<SituationId>> = BTreeMap::new();
    let mut proc_ctx: BTreeMap<ProcessName, BTreeSet<SituationId>> = BTreeMap::new();
    proc_ctx.insert(root.clone(), BTreeSet::new());
    let mut work = vec![root.clone()];

    while let Some(p) = work.pop() {
        let def = model
            .processes
            .get(&p)
            .ok_or_else(|| Error::UnknownSituation(p.clone()))?;
        let ctx = proc_ctx[&p].clone();
        let mut refs: Vec<(ProcessName, BTreeSet<SituationId>)> = Vec::new();
        walk_contexts(model, def, &ctx, &mut atom_ctx, &mut refs)?;
        for (r, c) in refs {
            match proc_ctx.get_mut(&r) {
                Some(existing) if c.is_subset(existing) => {}
                Some(existing) => {
                    existing.extend(c);
                    work.push(r);
                }
                None => {
                    proc_ctx.insert(r.clone(), c);
                    work.push(r);
                }
            }
        }
    }
    Ok(atom_ctx)
}

fn walk_contexts(
    model: &CausalFactorModel,
    expr: &ProcessExpr,
    ctx: &BTreeSet<SituationId>,
    atoms: &mut BTreeMap<SituationId, BTreeSet<SituationId>>,
    refs: &mut Vec<(ProcessName, BTreeSet<SituationId>)>,
) -> Result<()> {
    match expr {
        ProcessExpr::Atom(s) => {
            let sit = model.situation(s)?;
            if sit.is_aspect() {
                return Err(Error::DetachedAspect(s.clone()));
            }
            atoms.entry(s.clone()).or_default().extend(ctx.iter().cloned());
        }
        ProcessExpr::Ref(p) => refs.push((p.clone(), ctx.clone())),
        ProcessExpr::Seq(l, r) | ProcessExpr::Choice(l, r) => {
            walk_contexts(model, l, ctx, atoms, refs)?;
            walk_contexts(model, r, ctx, atoms, refs)?;
        }
        ProcessExpr::Star(b) => walk_contexts(model, b, ctx, atoms, refs)?,
        ProcessExpr::Par(l, r) => {
            let la = aspects_of_expr(model, l);
            let ra = aspects_of_expr(model, r);
            match (la, ra) {
                // A parallel block made of aspects only carries no situation.
                (Some(_), Some(_)) => {}
                (Some(a), None) => {
                    let inner = ctx.union(&a).cloned().collect();
                    walk_contexts(model, r, &inner, atoms, refs)?;
                }
                (None, Some(a)) => {
                    let inner = ctx.union(&a).cloned().collect();
                    walk_contexts(model, l, &inner, atoms, refs)?;
                }
                (None, None) => return Err(Error::UnsupportedParallel(describe(expr))),
            }
        }
    }
    Ok(())
}

fn describe(expr: &ProcessExpr) -> String {
    crate::dsl::format_process_expr(expr)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Shape {
    nullable: bool,
    first: BTreeSet<SituationId>,
    last: BTreeSet<SituationId>,
}

fn shape(model: &CausalFactorModel, expr: &ProcessExpr, env: &BTreeMap<ProcessName, Shape>) -> Shape {
    match expr {
        ProcessExpr::Atom(s) => {
            if model.situations.get(s).is_some_and(|x| x.is_aspect()) {
                Shape {
                    nullable: true,
                    ..Shape::default()
                }
            } else {
                Shape {
                    nullable: false,
                    first: BTreeSet::from([s.clone()]),
                    last: BTreeSet::from([s.clone()]),
                }
            }
        }
        ProcessExpr::Ref(p) => env.get(p).cloned().unwrap_or_default(),
        ProcessExpr::Seq(l, r) => {
            let (a, b) = (shape(model, l, env), shape(model, r, env));
            let mut first = a.first.clone();
            if a.nullable {
                first.extend(b.first.iter().cloned());
            }
            let mut last = b.last.clone();
            if b.nullable {
                last.extend(a.last.iter().cloned());
            }
            Shape {
                nullable: a.nullable && b.nullable,
                first,
                last,
            }
        }
        ProcessExpr::Choice(l, r) => {
            let (mut a, b) = (shape(model, l, env), shape(model, r, env));
            a.nullable |= b.nullable;
            a.first.extend(b.first);
            a.last.extend(b.last);
            a
        }
        ProcessExpr::Par(l, r) => {
            let (a, b) = (shape(model, l, env), shape(model, r, env));
            match (aspects_of_expr(model, l).is_some(), aspects_of_expr(model, r).is_some()) {
                (true, false) => b,
                (false, true) => a,
                // Aspect-only blocks are empty; general parallel composition
                // is rejected during validation.
                _ => Shape {
                    nullable: a.nullable && b.nullable,
                    ..Shape::default()
                },
            }
        }
        ProcessExpr::Star(b) => Shape {
            nullable: true,
            ..shape(model, b, env)
        },
    }
}

fn shape_env(
    model: &CausalFactorModel,
    procs: &BTreeSet<ProcessName>,
) -> BTreeMap<ProcessName, Shape> {
    let mut env: BTreeMap<ProcessName, Shape> =
        procs.iter().map(|p| (p.clone(), Shape::default())).collect();
    loop {
        let mut changed = false;
        for p in procs {
            let s = shape(model, &model.processes[p], &env);
            if env[p] != s {
                env.insert(p.clone(), s);
                changed = true;
            }
        }
        if !changed {
            return env;
        }
    }
}

fn follow(
    model: &CausalFactorModel,
    expr: &ProcessExpr,
    env: &BTreeMap<ProcessName, Shape>,
    edges: &mut BTreeSet<(SituationId, SituationId)>,
) {
    match expr {
        ProcessExpr::Atom(_) | ProcessExpr::Ref(_) => {}
        ProcessExpr::Seq(l, r) => {
            follow(model, l, env, edges);
            follow(model, r, env, edges);
            let (a, b) = (shape(model, l, env), shape(model, r, env));
            for x in &a.last {
                for y in &b.first {
                    edges.insert((x.clone(), y.clone()));
                }
            }
        }
        ProcessExpr::Choice(l, r) | ProcessExpr::Par(l, r) => {
            follow(model, l, env, edges);
            follow(model, r, env, edges);
        }
        ProcessExpr::Star(b) => {
            follow(model, b, env, edges);
            let s = shape(model, b, env);
            for x in &s.last {
                for y in &s.first {
                    edges.insert((x.clone(), y.clone()));
                }
            }
        }
    }
}

/// Processes that may be entered from `expr` before any situation occurs.
fn unguarded_refs(
    model: &CausalFactorModel,
    expr: &ProcessExpr,
    env: &BTreeMap<ProcessName, Shape>,
    out: &mut BTreeSet<ProcessName>,
) {
    match expr {
        ProcessExpr::Atom(_) => {}
        ProcessExpr::Ref(p) => {
            out.insert(p.clone());
        }
        ProcessExpr::Seq(l, r) => {
            unguarded_refs(model, l, env, out);
            if shape(model, l, env).nullable {
                unguarded_refs(model, r, env, out);
            }
        }
        ProcessExpr::Choice(l, r) | ProcessExpr::Par(l, r) => {
            unguarded_refs(model, l, env, out);
            unguarded_refs(model, r, env, out);
        }
        ProcessExpr::Star(b) => unguarded_refs(model, b, env, out),
    }
}

/// Names of processes lying on a cycle of unguarded references.
pub fn unguarded_cycles(model: &CausalFactorModel) -> BTreeSet<ProcessName> {
    let all: BTreeSet<ProcessName> = model
        .processes
        .iter()
        .filter(|(_, def)| {
            let mut refs = BTreeSet::new();
            def.refs(&mut refs);
            refs.iter().all(|r| model.processes.contains_key(r))
        })
        .map(|(p, _)| p.clone())
        .collect();
    let env = shape_env(model, &all);
    let graph: BTreeMap<&ProcessName, BTreeSet<ProcessName>> = all
        .iter()
        .map(|p| {
            let mut out = BTreeSet::new();
            unguarded_refs(model, &model.processes[p], &env, &mut out);
            (p, out)
        })
        .collect();

    // p is on a cycle iff p reaches itself.
    let mut cyclic = BTreeSet::new();
    for start in &all {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&ProcessName> = graph[start].iter().collect();
        while let Some(p) = stack.pop() {
            if p == start {
                cyclic.insert(start.clone());
                break;
            }
            if !seen.insert(p) {
                continue;
            }
            if let Some(next) = graph.get(p) {
                stack.extend(next.iter());
            }
        }
    }
    cyclic
}

/// Structural checks on process definitions, reported as diagnostics.
pub(crate) fn validate_processes(model: &CausalFactorModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let err = |p: &str, msg: String| Diagnostic {
        severity: Severity::Error,
        location: Location::Process(p.to_string()),
        message: msg,
    };

    if let Some(root) = &model.root {
        if !model.processes.contains_key(root) {
            out.push(err(root, format!("root process '{root}' is not declared")));
        }
    }

    let mut resolved = true;
    for (name, def) in &model.processes {
        if model.situations.contains_key(name) {
            out.push(err(
                name,
                format!("process '{name}' shares its name with a situation"),
            ));
        }
        let mut refs = BTreeSet::new();
        def.refs(&mut refs);
        for r in refs.iter().filter(|r| !model.processes.contains_key(*r)) {
            resolved = false;
            out.push(err(name, format!("process '{name}' references undeclared process '{r}'")));
        }
        let mut atoms = BTreeSet::new();
        def.atoms(&mut atoms);
        for a in atoms.iter().filter(|a| !model.situations.contains_key(*a)) {
            resolved = false;
            out.push(err(name, format!("process '{name}' references undeclared situation '{a}'")));
        }
    }
    if !resolved {
        return out;
    }

    for p in unguarded_cycles(model) {
        out.push(err(&p, format!("unguarded recursion through process '{p}'")));
    }
    if !out.is_empty() || model.root.is_none() {
        return out;
    }
    if let Err(e) = aspect_contexts(model) {
        out.push(err(model.root.as_deref().unwrap_or(""), e.to_string()));
    }
    out
}

/// Situations and the successor relation of the root process.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SituationGraph {
    pub nodes: BTreeSet<SituationId>,
    pub edges: BTreeSet<(SituationId, SituationId)>,
    /// Situations a run can start with.
    pub initial: BTreeSet<SituationId>,
}

impl SituationGraph {
    pub fn successors<'a>(&'a self, s: &'a str) -> impl Iterator<Item = &'a SituationId> + 'a {
        self.edges
            .range((s.to_string(), String::new())..)
            .take_while(move |(a, _)| a == s)
            .map(|(_, b)| b)
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges.contains(&(a.to_string(), b.to_string()))
    }
}

pub fn successor_graph(model: &CausalFactorModel) -> Result<SituationGraph> {
    let procs = reachable_processes(model)?;
    if let Some(p) = unguarded_cycles(model).into_iter().find(|p| procs.contains(p)) {
        return Err(Error::UnguardedRecursion(p));
    }
    // Rejects general parallel composition and detached aspects.
    let contexts = aspect_contexts(model)?;

    let env = shape_env(model, &procs);
    let mut edges = BTreeSet::new();
    for p in &procs {
        follow(model, &model.processes[p], &env, &mut edges);
    }
    let root = model.root.as_ref().ok_or(Error::NoRoot)?;
    Ok(SituationGraph {
        nodes: contexts.into_keys().collect(),
        edges,
        initial: env[root].first.clone(),
    })
}

/// One step of a symbolic execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioRow {
    pub step: usize,
    pub situation: SituationId,
    pub cf_count: usize,
    pub scope: Scope,
    pub initial_state: RiskState,
    pub state_count: usize,
    pub transition_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub seed: u64,
    pub steps: Vec<ScenarioRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    /// Probability of activating each in-scope factor in a sampled initial state.
    pub p_activate: f64,
    /// Attempts before falling back to the all-inactive state.
    pub max_attempts: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            p_activate: 0.5,
            max_attempts: 64,
        }
    }
}

/// Closes an assignment under `causes` and `excludes` and reports whether
/// every `requires` prerequisite of an active factor is active.
pub(crate) fn close_state(scope: &Scope, constraints: &[Constraint], state: RiskState) -> (RiskState, bool) {
    let idx = |f: &str| scope.position(f);
    let mut s = state;
    loop {
        let mut changed = false;
        for c in constraints.iter().filter(|c| c.kind == ConstraintKind::Causes) {
            if let (Some(a), Some(b)) = (idx(&c.left), idx(&c.right)) {
                if s.phase(a) == Phase::Active && s.phase(b) == Phase::Inactive {
                    s = s.with_phase(b, Phase::Active);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let snapshot = s;
    for c in constraints.iter().filter(|c| c.kind == ConstraintKind::Excludes) {
        if let (Some(a), Some(b)) = (idx(&c.left), idx(&c.right)) {
            if snapshot.phase(a) == Phase::Active
                && matches!(s.phase(b), Phase::Active | Phase::Mitigated)
            {
                s = s.with_phase(b, Phase::Inactive);
            }
        }
    }
    let consistent = constraints
        .iter()
        .filter(|c| c.kind == ConstraintKind::Requires)
        .all(|c| match (idx(&c.left), idx(&c.right)) {
            (Some(a), Some(b)) => s.phase(a) != Phase::Active || s.phase(b) == Phase::Active,
            _ => true,
        });
    (s, consistent)
}

fn sample_initial(
    scope: &Scope,
    constraints: &[Constraint],
    rng: &mut ChaCha8Rng,
    opts: &SamplingOptions,
) -> RiskState {
    for _ in 0..opts.max_attempts {
        let mut s = RiskState::ZERO;
        for i in 0..scope.len() {
            if rng.gen_bool(opts.p_activate) {
                s = s.with_phase(i, Phase::Active);
            }
        }
        let (closed, ok) = close_state(scope, constraints, s);
        if ok {
            return closed;
        }
    }
    RiskState::ZERO
}

/// Random execution of the process from `start`: each step jumps to a
/// sampled initial risk state of the current situation and records the size
/// of the risk structure reachable from it.
pub fn sample_scenario(
    model: &CausalFactorModel,
    start: &str,
    steps: usize,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<Scenario> {
    if steps < 1 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&opts.p_activate) {
        return Err(Error::InvalidArgument(format!(
            "activation probability {} outside [0, 1]",
            opts.p_activate
        )));
    }
    let graph = successor_graph(model)?;
    if !graph.nodes.contains(start) {
        return Err(Error::UnknownSituation(start.to_string()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(steps);
    let mut current = start.to_string();
    for step in 1..=steps {
        let scope = Scope::new(model.effective_factors(&current)?);
        let constraints: Vec<Constraint> = model.effective_constraints(&current)?.into_iter().collect();
        let initial = sample_initial(&scope, &constraints, &mut rng, opts);
        let rs = risk::compose_from(model, &current, initial)?;
        rows.push(ScenarioRow {
            step,
            situation: current.clone(),
            cf_count: scope.len(),
            scope,
            initial_state: initial,
            state_count: rs.state_count(),
            transition_count: rs.transition_count(),
        });
        if step == steps {
            break;
        }
        let next: Vec<&SituationId> = graph.successors(&current).collect();
        if next.is_empty() {
            break;
        }
        let pick = rng.gen_range(0..next.len() as u64) as usize;
        current = next[pick].clone();
    }
    Ok(Scenario { seed, steps: rows })
}

/// Carries a risk state across a situation change: shared factors keep their
/// phase, factors new in the target start inactive, others are dropped.
pub fn translate_state(from: &Scope, state: RiskState, to: &Scope) -> RiskState {
    let mut out = RiskState::ZERO;
    for (i, f) in to.factors().iter().enumerate() {
        if let Some(j) = from.position(f) {
            out = out.with_phase(i, state.phase(j));
        }
    }
    out
}

/// Risk states reachable by jumping from `state` in `situation` to each of
/// its successor situations.
pub fn jump_targets(
    model: &CausalFactorModel,
    situation: &str,
    state: RiskState,
) -> Result<Vec<(SituationId, RiskState)>> {
    let graph = successor_graph(model)?;
    if !graph.nodes.contains(situation) {
        return Err(Error::UnknownSituation(situation.to_string()));
    }
    let from = Scope::new(model.effective_factors(situation)?);
    graph
        .successors(situation)
        .map(|t| {
            let to = Scope::new(model.effective_factors(t)?);
            Ok((t.clone(), translate_state(&from, state, &to)))
        })
        .collect()
}

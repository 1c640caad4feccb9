use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::model::{
    self, CausalFactor, CausalFactorModel, Constraint, ConstraintKind, EndangermentClass, Location,
    MitigationClass, Situation, SituationKind,
};
use crate::process::{self, ProcessExpr};

use super::lexer::{tokenize, TokKind, Token};
use super::{DiagnosticSeverity, ParseDiagnostic, SourceSpan};

const DEFAULT_FILE: &str = "<input>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
    length: usize,
}

impl Pos {
    fn of(t: &Token) -> Self {
        Pos {
            line: t.line,
            column: t.column,
            length: t.length.max(1),
        }
    }
}

/// Process expression with names not yet resolved to situations or
/// processes.
#[derive(Debug, Clone)]
enum Raw {
    Name(String, Pos),
    Seq(Box<Raw>, Box<Raw>),
    Choice(Box<Raw>, Box<Raw>),
    Par(Box<Raw>, Box<Raw>),
    Star(Box<Raw>),
}

/// Marker for a statement abandoned after a diagnostic was recorded.
struct Abandon;

type PResult<T> = Result<T, Abandon>;

/// An identifier and where it appeared.
type Named = (String, Pos);

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    file: &'a str,
    diags: Vec<ParseDiagnostic>,

    factors: Vec<(CausalFactor, Pos)>,
    situations: Vec<(Situation, Pos, Vec<Named>)>,
    constraints: Vec<(Option<Named>, Constraint, Pos)>,
    processes: Vec<(String, Raw, Pos)>,
    root: Option<(String, Pos)>,
    names: HashMap<String, (&'static str, usize)>,
    factor_names: HashMap<String, usize>,
}

impl<'a> Parser<'a> {
    fn new(text: &str, file: &'a str) -> Self {
        let (toks, lex_errors) = tokenize(text);
        let mut p = Parser {
            toks,
            pos: 0,
            file,
            diags: Vec::new(),
            factors: Vec::new(),
            situations: Vec::new(),
            constraints: Vec::new(),
            processes: Vec::new(),
            root: None,
            names: HashMap::new(),
            factor_names: HashMap::new(),
        };
        for e in lex_errors {
            p.report(
                Pos {
                    line: e.line,
                    column: e.column,
                    length: e.length.max(1),
                },
                format!("lexical error: {}", e.message),
            );
        }
        p
    }

    fn report(&mut self, at: Pos, message: String) {
        self.diags.push(ParseDiagnostic {
            span: SourceSpan {
                file: self.file.to_string(),
                line: at.line,
                column: at.column,
                length: at.length,
            },
            severity: DiagnosticSeverity::Error,
            message,
        });
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_word(&self, w: &str) -> bool {
        matches!(&self.peek().kind, TokKind::Word(x) if x == w)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.kind != TokKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&mut self, at: &Token, msg: impl Into<String>) -> PResult<T> {
        self.report(Pos::of(at), format!("syntax error: {}", msg.into()));
        Err(Abandon)
    }

    fn expect(&mut self, kind: TokKind) -> PResult<Token> {
        let t = self.bump();
        if t.kind == kind {
            Ok(t)
        } else {
            let msg = format!("expected {}, found {}", kind.describe(), t.kind.describe());
            self.syntax(&t, msg)
        }
    }

    fn keyword(&mut self, w: &str) -> PResult<Token> {
        let t = self.bump();
        if matches!(&t.kind, TokKind::Word(x) if x == w) {
            Ok(t)
        } else {
            let msg = format!("expected '{w}', found {}", t.kind.describe());
            self.syntax(&t, msg)
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        let t = self.bump();
        match &t.kind {
            TokKind::Word(w) if w == "phi" => self.syntax(&t, "'phi' is reserved"),
            TokKind::Word(w) if w.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') => {
                Ok((w.clone(), Pos::of(&t)))
            }
            _ => {
                let msg = format!("expected an identifier, found {}", t.kind.describe());
                self.syntax(&t, msg)
            }
        }
    }

    /// Skips to just past the next `;`.
    fn recover(&mut self) {
        loop {
            match self.bump().kind {
                TokKind::Semi | TokKind::Eof => return,
                _ => {}
            }
        }
    }

    fn run(&mut self) {
        while self.peek().kind != TokKind::Eof {
            if self.statement().is_err() {
                self.recover();
            }
        }
    }

    fn statement(&mut self) -> PResult<()> {
        let t = self.bump();
        let word = match &t.kind {
            TokKind::Word(w) => w.clone(),
            other => {
                let msg = format!("expected a declaration, found {}", other.describe());
                return self.syntax(&t, msg);
            }
        };
        match word.as_str() {
            "version" => {
                let v = self.bump();
                if v.kind != TokKind::Word("1".into()) {
                    let msg = format!("unsupported format version {}", v.kind.describe());
                    return self.syntax(&v, msg);
                }
            }
            "factor" => self.factor()?,
            "situation" => self.situation()?,
            "constraint" => self.constraint()?,
            "process" => self.process()?,
            "root" => {
                let (name, pos) = self.ident()?;
                if let Some((_, prev)) = &self.root {
                    let msg = format!("duplicate identifier: root already declared at line {}", prev.line);
                    self.report(pos, msg);
                    return Err(Abandon);
                }
                self.root = Some((name, pos));
            }
            other => {
                let msg = format!("unknown declaration '{other}'");
                return self.syntax(&t, msg);
            }
        }
        self.expect(TokKind::Semi)?;
        Ok(())
    }

    fn factor(&mut self) -> PResult<()> {
        let (id, pos) = self.ident()?;
        let name = if let TokKind::Str(s) = &self.peek().kind {
            let s = s.clone();
            self.bump();
            s
        } else {
            String::new()
        };
        self.keyword("class")?;
        let t = self.bump();
        let class = match &t.kind {
            TokKind::Word(w) => EndangermentClass::from_symbol(w),
            _ => None,
        };
        let Some(class) = class else {
            let msg = format!("expected one of f, d, mu, nm, found {}", t.kind.describe());
            return self.syntax(&t, msg);
        };
        let mut f = CausalFactor::new(&id, class).named(&name);
        let mut seen = BTreeSet::new();
        loop {
            let t = self.peek().clone();
            let TokKind::Word(w) = &t.kind else { break };
            if !seen.insert(w.clone()) {
                let msg = format!("'{w}' given twice");
                return self.syntax(&t, msg);
            }
            match w.as_str() {
                "mishap" => f.has_mishap_phase = true,
                "direct" => f.direct = true,
                "offRepair" => f.off_repair = true,
                "reEndanger" => f.re_endanger = true,
                "mitigation" => {
                    self.bump();
                    let c = self.bump();
                    let class = match &c.kind {
                        TokKind::Word(w) => MitigationClass::from_keyword(w),
                        _ => None,
                    };
                    let Some(class) = class else {
                        let msg = format!(
                            "expected a mitigation class (failSafe, deescalation, protection, uncontrolled, repair), found {}",
                            c.kind.describe()
                        );
                        return self.syntax(&c, msg);
                    };
                    f.mitigation_class = class;
                    if self.peek_word("by") {
                        self.bump();
                        let m = self.bump();
                        f.mechanism = match &m.kind {
                            TokKind::Word(w) | TokKind::Str(w) => Some(w.clone()),
                            _ => {
                                let msg = format!("expected a mechanism, found {}", m.kind.describe());
                                return self.syntax(&m, msg);
                            }
                        };
                    }
                    continue;
                }
                _ => {
                    let msg = format!("unknown factor attribute '{w}'");
                    return self.syntax(&t, msg);
                }
            }
            self.bump();
        }
        if let Some(&i) = self.factor_names.get(&id) {
            let msg = format!(
                "duplicate identifier: factor '{id}' already declared at line {}",
                self.factors[i].1.line
            );
            self.report(pos, msg);
            return Err(Abandon);
        }
        self.factor_names.insert(id, self.factors.len());
        self.factors.push((f, pos));
        Ok(())
    }

    fn claim_name(&mut self, name: &str, pos: Pos, what: &'static str) -> PResult<()> {
        if let Some((kind, line)) = self.names.get(name) {
            let msg = format!("duplicate identifier: '{name}' already declared as {kind} at line {line}");
            self.report(pos, msg);
            return Err(Abandon);
        }
        self.names.insert(name.to_string(), (what, pos.line));
        Ok(())
    }

    fn situation(&mut self) -> PResult<()> {
        let (id, pos) = self.ident()?;
        let kind = if self.peek_word("aspect") {
            self.bump();
            SituationKind::Aspect
        } else {
            SituationKind::Atomic
        };
        self.keyword("factors")?;
        self.expect(TokKind::LBrace)?;
        let mut refs = Vec::new();
        if self.peek().kind != TokKind::RBrace {
            loop {
                refs.push(self.ident()?);
                if self.peek().kind == TokKind::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(TokKind::RBrace)?;
        self.claim_name(&id, pos, "situation")?;
        let sit = Situation {
            id,
            kind,
            factors: refs.iter().map(|(f, _)| f.clone()).collect(),
            constraints: BTreeSet::new(),
        };
        self.situations.push((sit, pos, refs));
        Ok(())
    }

    fn constraint(&mut self) -> PResult<()> {
        let start = self.peek().clone();
        let scope = if self.peek_word("in") {
            self.bump();
            Some(self.ident()?)
        } else {
            None
        };
        let (left, lpos) = self.ident()?;
        let t = self.bump();
        let kind = match &t.kind {
            TokKind::Word(w) => ConstraintKind::from_keyword(w),
            _ => None,
        };
        let Some(kind) = kind else {
            let msg = format!(
                "expected requires, causes, denies or excludes, found {}",
                t.kind.describe()
            );
            return self.syntax(&t, msg);
        };
        let (right, rpos) = self.ident()?;
        let c = Constraint { left, kind, right };
        let at = Pos {
            line: start.line,
            column: start.column,
            length: if lpos.line == rpos.line && rpos.column >= start.column {
                rpos.column + rpos.length - start.column
            } else {
                start.length
            },
        };
        self.constraints.push((scope, c, at));
        Ok(())
    }

    fn process(&mut self) -> PResult<()> {
        let (name, pos) = self.ident()?;
        self.expect(TokKind::Eq)?;
        let body = self.seq()?;
        self.claim_name(&name, pos, "process")?;
        self.processes.push((name, body, pos));
        Ok(())
    }

    fn seq(&mut self) -> PResult<Raw> {
        let mut l = self.choice()?;
        while self.peek().kind == TokKind::Semi && self.continues_expr() {
            self.bump();
            l = Raw::Seq(Box::new(l), Box::new(self.choice()?));
        }
        Ok(l)
    }

    /// `;` both separates sequence operands and ends a declaration; it
    /// continues the expression only if an operand follows.
    fn continues_expr(&self) -> bool {
        match &self.toks[self.pos + 1].kind {
            TokKind::LParen => true,
            TokKind::Word(w) => !matches!(
                w.as_str(),
                "version" | "factor" | "situation" | "constraint" | "process" | "root"
            ) || self.toks.get(self.pos + 2).is_some_and(|t| {
                matches!(t.kind, TokKind::Semi | TokKind::Bar | TokKind::Par | TokKind::Star | TokKind::RParen | TokKind::Eof)
            }),
            _ => false,
        }
    }

    fn choice(&mut self) -> PResult<Raw> {
        let mut l = self.par()?;
        while self.peek().kind == TokKind::Bar {
            self.bump();
            l = Raw::Choice(Box::new(l), Box::new(self.par()?));
        }
        Ok(l)
    }

    fn par(&mut self) -> PResult<Raw> {
        let mut l = self.postfix()?;
        while self.peek().kind == TokKind::Par {
            self.bump();
            l = Raw::Par(Box::new(l), Box::new(self.postfix()?));
        }
        Ok(l)
    }

    fn postfix(&mut self) -> PResult<Raw> {
        let mut e = self.primary()?;
        while self.peek().kind == TokKind::Star {
            self.bump();
            e = Raw::Star(Box::new(e));
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Raw> {
        if self.peek().kind == TokKind::LParen {
            let open = self.bump();
            let e = self.seq_in_parens()?;
            if self.peek().kind != TokKind::RParen {
                let t = self.peek().clone();
                let msg = format!("unbalanced parentheses: '(' at line {} column {} is not closed", open.line, open.column);
                return self.syntax(&t, msg);
            }
            self.bump();
            return Ok(e);
        }
        let (name, pos) = self.ident()?;
        Ok(Raw::Name(name, pos))
    }

    /// Inside parentheses `;` always continues the expression.
    fn seq_in_parens(&mut self) -> PResult<Raw> {
        let mut l = self.choice()?;
        while self.peek().kind == TokKind::Semi {
            self.bump();
            l = Raw::Seq(Box::new(l), Box::new(self.choice()?));
        }
        Ok(l)
    }
}

/// Resolves names against the declared situations and processes.
fn resolve(
    raw: &Raw,
    situations: &BTreeSet<String>,
    processes: &BTreeSet<String>,
    unknown: &mut Vec<(String, Pos)>,
) -> ProcessExpr {
    let mut r = |e: &Raw| resolve(e, situations, processes, unknown);
    match raw {
        Raw::Name(n, pos) => {
            if situations.contains(n) {
                ProcessExpr::Atom(n.clone())
            } else {
                if !processes.contains(n) {
                    unknown.push((n.clone(), *pos));
                }
                ProcessExpr::Ref(n.clone())
            }
        }
        Raw::Seq(a, b) => ProcessExpr::seq(r(a), r(b)),
        Raw::Choice(a, b) => ProcessExpr::choice(r(a), r(b)),
        Raw::Par(a, b) => ProcessExpr::par(r(a), r(b)),
        Raw::Star(a) => ProcessExpr::star(r(a)),
    }
}

fn finish(mut diags: Vec<ParseDiagnostic>) -> Vec<ParseDiagnostic> {
    diags.sort_by(|a, b| {
        (a.span.line, a.span.column).cmp(&(b.span.line, b.span.column))
    });
    diags
}

pub fn parse_model(text: &str) -> Result<CausalFactorModel, Vec<ParseDiagnostic>> {
    parse_model_named(text, DEFAULT_FILE)
}

/// Parses a model; `file` is used in diagnostic spans. A returned model
/// always passes [`model::validate`].
pub fn parse_model_named(text: &str, file: &str) -> Result<CausalFactorModel, Vec<ParseDiagnostic>> {
    let mut p = Parser::new(text, file);
    p.run();
    if !p.diags.is_empty() {
        return Err(finish(p.diags));
    }

    let mut m = CausalFactorModel::new();
    for (f, _) in &p.factors {
        m.add_factor(f.clone());
    }
    let mut unknown: Vec<(String, Pos)> = Vec::new();
    let mut unknown_msgs: Vec<(String, Pos)> = Vec::new();
    for (sit, _, refs) in &p.situations {
        for (f, pos) in refs {
            if !m.factors.contains_key(f) {
                unknown_msgs.push((format!("factor '{f}' is not declared"), *pos));
            }
        }
        m.add_situation(sit.clone());
    }
    let sit_spans: HashMap<String, Pos> = p.situations.iter().map(|(s, pos, _)| (s.id.clone(), *pos)).collect();
    let mut constraint_spans: BTreeMap<(Option<String>, Constraint), Pos> = BTreeMap::new();
    for (scope, c, pos) in &p.constraints {
        for f in [&c.left, &c.right] {
            if !m.factors.contains_key(f) {
                unknown_msgs.push((format!("factor '{f}' is not declared"), *pos));
            }
        }
        match scope {
            None => {
                m.add_constraint(c.clone());
            }
            Some((s, spos)) => match m.situations.get_mut(s) {
                Some(sit) => {
                    sit.constraints.insert(c.clone());
                }
                None => unknown_msgs.push((format!("situation '{s}' is not declared"), *spos)),
            },
        }
        constraint_spans
            .entry((scope.as_ref().map(|s| s.0.clone()), c.clone()))
            .or_insert(*pos);
    }
    let situation_ids: BTreeSet<String> = m.situations.keys().cloned().collect();
    let process_ids: BTreeSet<String> = p.processes.iter().map(|(n, _, _)| n.clone()).collect();
    for (name, raw, _) in &p.processes {
        let e = resolve(raw, &situation_ids, &process_ids, &mut unknown);
        m.add_process(name, e);
    }
    for (n, pos) in unknown {
        unknown_msgs.push((format!("'{n}' is neither a situation nor a process"), pos));
    }
    if let Some((root, pos)) = &p.root {
        if !process_ids.contains(root) {
            unknown_msgs.push((format!("root process '{root}' is not declared"), *pos));
        }
        m.set_root(root);
    }
    for (msg, pos) in unknown_msgs {
        p.report(pos, format!("unknown reference: {msg}"));
    }
    if !p.diags.is_empty() {
        return Err(finish(p.diags));
    }

    let proc_spans: HashMap<String, Pos> = p.processes.iter().map(|(n, _, pos)| (n.clone(), *pos)).collect();
    let cyclic = process::unguarded_cycles(&m);
    for name in &cyclic {
        let msg = format!("unguarded recursion: process '{name}' can recur without passing a situation");
        let pos = proc_spans[name];
        p.report(pos, msg);
    }
    if !p.diags.is_empty() {
        return Err(finish(p.diags));
    }

    let factor_spans: HashMap<String, Pos> = p.factors.iter().map(|(f, pos)| (f.id.clone(), *pos)).collect();
    let origin = Pos {
        line: 1,
        column: 1,
        length: 1,
    };
    let root_pos = p.root.as_ref().map_or(origin, |r| r.1);
    let mut problems = Vec::new();
    for d in model::validate(&m) {
        let pos = match &d.location {
            Location::Model => origin,
            Location::Factor(f) => factor_spans.get(f).copied().unwrap_or(origin),
            Location::Situation(s) => sit_spans.get(s).copied().unwrap_or(origin),
            Location::Constraint { constraint, scope } => constraint_spans
                .get(&(scope.clone(), constraint.clone()))
                .copied()
                .unwrap_or(origin),
            Location::Process(n) => proc_spans.get(n).copied().unwrap_or(root_pos),
        };
        problems.push((pos, format!("invalid model: {}: {}", d.location, d.message)));
    }
    for (pos, msg) in problems {
        p.report(pos, msg);
    }
    if !p.diags.is_empty() {
        return Err(finish(p.diags));
    }
    Ok(m)
}

/// Parses a process expression, resolving names against `model`.
pub fn parse_process_expr(text: &str, model: &CausalFactorModel) -> Result<ProcessExpr, Vec<ParseDiagnostic>> {
    let mut p = Parser::new(text, DEFAULT_FILE);
    let raw = p.seq_in_parens();
    if raw.is_ok() && p.peek().kind != TokKind::Eof {
        let t = p.peek().clone();
        let msg = if t.kind == TokKind::RParen {
            "unbalanced parentheses: unmatched ')'".to_string()
        } else {
            format!("unexpected {} after expression", t.kind.describe())
        };
        let _: PResult<()> = p.syntax(&t, msg);
    }
    let raw = match raw {
        Ok(r) if p.diags.is_empty() => r,
        _ => return Err(finish(p.diags)),
    };
    let situations: BTreeSet<String> = model.situations.keys().cloned().collect();
    let processes: BTreeSet<String> = model.processes.keys().cloned().collect();
    let mut unknown = Vec::new();
    let e = resolve(&raw, &situations, &processes, &mut unknown);
    for (n, pos) in unknown {
        p.report(pos, format!("unknown reference: '{n}' is neither a situation nor a process"));
    }
    if p.diags.is_empty() {
        Ok(e)
    } else {
        Err(finish(p.diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> CausalFactorModel {
        let mut m = CausalFactorModel::new();
        for s in ["a", "b", "c"] {
            m.add_situation(Situation::atomic(s, []));
        }
        m
    }

    fn expr(text: &str) -> ProcessExpr {
        parse_process_expr(text, &abc()).unwrap()
    }

    fn first_message(text: &str) -> String {
        parse_model(text).unwrap_err()[0].message.clone()
    }

    use ProcessExpr as P;

    #[test]
    fn precedence_of_process_operators() {
        assert_eq!(
            expr("a ; b | c"),
            P::seq(P::atom("a"), P::choice(P::atom("b"), P::atom("c")))
        );
        assert_eq!(
            expr("a ∥ b ; c"),
            P::seq(P::par(P::atom("a"), P::atom("b")), P::atom("c"))
        );
        assert_eq!(expr("(a ; b)*"), P::star(P::seq(P::atom("a"), P::atom("b"))));
        assert_eq!(
            expr("a | b || c*"),
            P::choice(P::atom("a"), P::par(P::atom("b"), P::star(P::atom("c"))))
        );
    }

    #[test]
    fn unbalanced_parentheses() {
        let d = parse_process_expr("(a ; b", &abc()).unwrap_err();
        assert!(d[0].message.starts_with("syntax error: unbalanced parentheses"));
        let d = parse_process_expr("a ; b)", &abc()).unwrap_err();
        assert!(d[0].message.contains("unbalanced"));
    }

    #[test]
    fn one_factor() {
        let m = parse_model("factor W \"badWeather\" class d;").unwrap();
        let w = &m.factors["W"];
        assert_eq!(w.name, "badWeather");
        assert_eq!(w.endangerment_class, EndangermentClass::Disturbance);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_model("").unwrap(), CausalFactorModel::new());
        assert_eq!(parse_model("# nothing\r\n").unwrap(), CausalFactorModel::new());
    }

    #[test]
    fn duplicate_factor_at_second_declaration() {
        let d = parse_model("factor W class d; factor W class f;").unwrap_err();
        assert_eq!(d.len(), 1);
        assert!(d[0].message.starts_with("duplicate identifier"));
        assert_eq!((d[0].span.line, d[0].span.column), (1, 26));
    }

    #[test]
    fn diagnostic_prefixes() {
        assert!(first_message("factor W class d $;").starts_with("lexical error:"));
        assert!(first_message("factor W class q;").starts_with("syntax error:"));
        assert!(first_message("situation s factors {X};").starts_with("unknown reference:"));
        assert!(first_message(
            "situation a factors {}; process P = P ; a; root P;"
        )
        .starts_with("unguarded recursion:"));
        assert!(first_message("factor phi class f;").contains("reserved"));
        assert!(first_message("version 2;").starts_with("syntax error:"));
    }

    #[test]
    fn errors_in_several_statements_are_all_reported() {
        let d = parse_model("factor A class x;\nfactor B klass f;\nfactor C class f;").unwrap_err();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].span.line, 2);
    }

    #[test]
    fn semicolon_ends_declaration_before_keyword() {
        let m = parse_model(
            "situation a factors {}; situation b factors {};\nprocess P = a ; b;\nroot P;",
        )
        .unwrap();
        assert_eq!(m.processes["P"], P::seq(P::atom("a"), P::atom("b")));
        assert_eq!(m.root.as_deref(), Some("P"));
    }

    #[test]
    fn conflicts_surface_as_invalid_model() {
        let d = parse_model(
            "factor C class nm; factor N class nm; constraint C causes N; constraint C excludes N;",
        )
        .unwrap_err();
        assert_eq!(d.len(), 1);
        assert!(d[0].message.starts_with("invalid model:"));
    }
}

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::{self, CausalFactor, CausalFactorModel, MitigationClass};
use crate::process::ProcessExpr;

pub(crate) const HEADER: &str = "# causal factor model";

fn prec(e: &ProcessExpr) -> u8 {
    match e {
        ProcessExpr::Seq(..) => 1,
        ProcessExpr::Choice(..) => 2,
        ProcessExpr::Par(..) => 3,
        ProcessExpr::Star(_) => 4,
        ProcessExpr::Atom(_) | ProcessExpr::Ref(_) => 5,
    }
}

fn write_expr(out: &mut String, e: &ProcessExpr, min: u8) {
    let p = prec(e);
    if p < min {
        out.push('(');
    }
    match e {
        ProcessExpr::Atom(n) | ProcessExpr::Ref(n) => out.push_str(n),
        ProcessExpr::Seq(a, b) | ProcessExpr::Choice(a, b) | ProcessExpr::Par(a, b) => {
            write_expr(out, a, p);
            out.push_str(match e {
                ProcessExpr::Seq(..) => "; ",
                ProcessExpr::Choice(..) => " | ",
                _ => " || ",
            });
            write_expr(out, b, p + 1);
        }
        ProcessExpr::Star(a) => {
            write_expr(out, a, p);
            out.push('*');
        }
    }
    if p < min {
        out.push(')');
    }
}

/// Text of a process expression with the fewest parentheses that parse back
/// to the same tree.
pub fn format_process_expr(e: &ProcessExpr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn is_word(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s != "phi"
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn factor_line(f: &CausalFactor) -> String {
    let mut s = format!("factor {}", f.id);
    if !f.name.is_empty() {
        write!(s, " {}", quote(&f.name)).unwrap();
    }
    write!(s, " class {}", f.endangerment_class.symbol()).unwrap();
    for (on, word) in [
        (f.has_mishap_phase, "mishap"),
        (f.direct, "direct"),
        (f.off_repair, "offRepair"),
        (f.re_endanger, "reEndanger"),
    ] {
        if on {
            write!(s, " {word}").unwrap();
        }
    }
    if f.mitigation_class != MitigationClass::default_for(f.endangerment_class) || f.mechanism.is_some() {
        write!(s, " mitigation {}", f.mitigation_class.keyword()).unwrap();
        if let Some(m) = &f.mechanism {
            let m = if is_word(m) { m.clone() } else { quote(m) };
            write!(s, " by {m}").unwrap();
        }
    }
    s.push(';');
    s
}

/// Canonical text of a valid model. Factors keep their declaration order,
/// which fixes the order of factors inside risk states; everything else is
/// sorted by id.
pub fn serialize_model(model: &CausalFactorModel) -> Result<String> {
    let diags = model::validate(model);
    if !diags.is_empty() {
        return Err(Error::InvalidModel(diags));
    }
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for f in model.factors.values() {
        out.push_str(&factor_line(f));
        out.push('\n');
    }
    for s in model.situations.values() {
        let factors: Vec<&str> = s.factors.iter().map(String::as_str).collect();
        writeln!(
            out,
            "situation {}{} factors {{{}}};",
            s.id,
            if s.is_aspect() { " aspect" } else { "" },
            factors.join(", ")
        )
        .unwrap();
    }
    for c in &model.global_constraints {
        writeln!(out, "constraint {c};").unwrap();
    }
    for s in model.situations.values() {
        for c in &s.constraints {
            writeln!(out, "constraint in {} {c};", s.id).unwrap();
        }
    }
    for (name, e) in &model.processes {
        writeln!(out, "process {name} = {};", format_process_expr(e)).unwrap();
    }
    if let Some(r) = &model.root {
        writeln!(out, "root {r};").unwrap();
    }
    Ok(out)
}

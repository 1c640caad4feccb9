//! Text renderings: DOT graphs, scenario tables, JSON-lines reports.
//!
//! Every rendering iterates in a fixed order and uses `\n` line endings, so
//! output is byte-identical across runs.

use std::fmt::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::CausalFactorModel;
use crate::planner::StrategyReport;
use crate::process::{Scenario, ScenarioRow, SituationGraph};
use crate::risk::{RiskState, RiskStructure, Scope};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Dot,
    Csv,
    JsonLines,
    PlainTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    pub format: RenderFormat,
    /// Red endangerments, green mitigations.
    pub color_edges: bool,
    /// Emit off-line edges (drawn dashed).
    pub include_offline: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            format: RenderFormat::Dot,
            color_edges: true,
            include_offline: true,
        }
    }
}

impl RenderOptions {
    pub fn with_format(format: RenderFormat) -> Self {
        RenderOptions {
            format,
            ..Self::default()
        }
    }
}

pub fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

const SCENARIO_HEADER: [&str; 6] = ["Step", "Situation", "#CFs", "InitialState", "#States", "#Trans"];

/// Renders a risk structure. DOT draws every state as a node (the initial
/// one as a double circle); the other formats list transitions.
pub fn render_risk_structure(rs: &RiskStructure, opts: &RenderOptions) -> String {
    let visible = rs
        .transitions
        .iter()
        .filter(|t| opts.include_offline || !rs.label(t).offline);
    match opts.format {
        RenderFormat::Dot => {
            let mut out = String::new();
            writeln!(out, "digraph \"{}\" {{", dot_escape(&rs.situation)).unwrap();
            out.push_str("  node [shape=circle];\n");
            for i in 0..rs.state_count() {
                let shape = if i == 0 { ", shape=doublecircle" } else { "" };
                writeln!(
                    out,
                    "  s{i} [label=\"{}\"{shape}];",
                    dot_escape(&rs.state_label(i as u32))
                )
                .unwrap();
            }
            for t in visible {
                let l = rs.label(t);
                let mut attrs = format!("label=\"{}\"", dot_escape(&l.to_string()));
                if opts.color_edges {
                    attrs.push_str(if l.is_endangerment() { ", color=red" } else { ", color=green" });
                }
                if l.offline {
                    attrs.push_str(", style=dashed");
                }
                writeln!(out, "  s{} -> s{} [{attrs}];", t.source, t.target).unwrap();
            }
            out.push_str("}\n");
            out
        }
        RenderFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(["source", "action", "target", "offline"]).unwrap();
            for t in visible {
                let l = rs.label(t);
                w.write_record([
                    rs.state_label(t.source),
                    l.to_string(),
                    rs.state_label(t.target),
                    l.offline.to_string(),
                ])
                .unwrap();
            }
            String::from_utf8(w.into_inner().unwrap()).expect("csv output is utf-8")
        }
        RenderFormat::PlainTable => {
            let rows: Vec<[String; 3]> = visible
                .map(|t| [rs.state_label(t.source), rs.label(t).to_string(), rs.state_label(t.target)])
                .collect();
            table(&["Source", "Action", "Target"], &rows)
        }
        RenderFormat::JsonLines => {
            let mut out = String::new();
            for t in visible {
                let f = Finding {
                    kind: "transition",
                    situation: &rs.situation,
                    state: rs.state_label(t.source),
                    detail: format!("{} -> {}", rs.label(t), rs.state_label(t.target)),
                };
                out.push_str(&serde_json::to_string(&f).expect("finding serializes"));
                out.push('\n');
            }
            out
        }
    }
}

/// DOT rendering of the successor relation between situations; situations
/// a run can start with are drawn as double circles.
pub fn render_situation_graph(g: &SituationGraph) -> String {
    let mut out = String::from("digraph \"process\" {\n  node [shape=box];\n");
    for n in &g.nodes {
        let shape = if g.initial.contains(n) { " [peripheries=2]" } else { "" };
        writeln!(out, "  \"{}\"{shape};", dot_escape(n)).unwrap();
    }
    for (a, b) in &g.edges {
        writeln!(out, "  \"{}\" -> \"{}\";", dot_escape(a), dot_escape(b)).unwrap();
    }
    out.push_str("}\n");
    out
}

fn table<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, header.to_vec());
    for r in rows {
        line(&mut out, r.iter().map(String::as_str).collect());
    }
    out
}

fn scenario_cells(r: &ScenarioRow) -> [String; 6] {
    [
        r.step.to_string(),
        r.situation.clone(),
        r.cf_count.to_string(),
        r.scope.active_label(r.initial_state),
        r.state_count.to_string(),
        r.transition_count.to_string(),
    ]
}

/// Scenario table with the columns Step, Situation, #CFs, InitialState,
/// #States, #Trans. `InitialState` concatenates the ids of the active
/// factors in declaration order, or reads `0`.
pub fn render_scenario(s: &Scenario, opts: &RenderOptions) -> Result<String> {
    let rows: Vec<[String; 6]> = s.steps.iter().map(scenario_cells).collect();
    match opts.format {
        RenderFormat::PlainTable => Ok(table(&SCENARIO_HEADER, &rows)),
        RenderFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(SCENARIO_HEADER).unwrap();
            for r in &rows {
                w.write_record(r).unwrap();
            }
            Ok(String::from_utf8(w.into_inner().unwrap()).expect("csv output is utf-8"))
        }
        RenderFormat::JsonLines => {
            let mut out = String::new();
            for (r, cells) in s.steps.iter().zip(&rows) {
                let f = Finding {
                    kind: "step",
                    situation: &r.situation,
                    state: cells[3].clone(),
                    detail: format!(
                        "step={} cfs={} states={} transitions={}",
                        cells[0], cells[2], cells[4], cells[5]
                    ),
                };
                out.push_str(&serde_json::to_string(&f).expect("finding serializes"));
                out.push('\n');
            }
            Ok(out)
        }
        RenderFormat::Dot => Err(Error::InvalidArgument("scenarios have no DOT rendering".into())),
    }
}

/// Splits a concatenation of factor ids into ids of `scope`, taken in scope
/// order.
fn split_active(scope: &Scope, label: &str) -> Option<RiskState> {
    fn go(scope: &Scope, rest: &str, from: usize, acc: RiskState) -> Option<RiskState> {
        if rest.is_empty() {
            return Some(acc);
        }
        for (i, f) in scope.factors().iter().enumerate().skip(from) {
            if let Some(tail) = rest.strip_prefix(f.as_str()) {
                let with = acc.with_phase(i, crate::model::Phase::Active);
                if let Some(s) = go(scope, tail, i + 1, with) {
                    return Some(s);
                }
            }
        }
        None
    }
    if label == "0" {
        return Some(RiskState::ZERO);
    }
    go(scope, label, 0, RiskState::ZERO)
}

/// Reads back a CSV scenario table. Scopes are recomputed from `model`.
pub fn parse_scenario_csv(text: &str, model: &CausalFactorModel) -> Result<Vec<ScenarioRow>> {
    let bad = |msg: String| Error::InvalidArgument(msg);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != SCENARIO_HEADER {
        return Err(bad(format!("unexpected scenario header {header:?}")));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("bad number '{s}': {e}")));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let situation = rec[1].to_string();
        let scope = Scope::new(model.effective_factors(&situation)?);
        let initial_state = split_active(&scope, &rec[3])
            .ok_or_else(|| bad(format!("'{}' does not match the factors of '{situation}'", &rec[3])))?;
        rows.push(ScenarioRow {
            step: num(&rec[0])?,
            cf_count: num(&rec[2])?,
            state_count: num(&rec[4])?,
            transition_count: num(&rec[5])?,
            situation,
            scope,
            initial_state,
        });
    }
    Ok(rows)
}

/// One line of the JSON-lines report.
#[derive(Debug, Clone, Serialize)]
pub struct Finding<'a> {
    pub kind: &'a str,
    pub situation: &'a str,
    pub state: String,
    pub detail: String,
}

/// JSON-lines form of a strategy report: one finding per state (its class
/// and mitigation status) and per cycle, then a summary line.
pub fn render_report(rs: &RiskStructure, report: &StrategyReport) -> String {
    let mut out = String::new();
    let mut emit = |f: Finding| {
        out.push_str(&serde_json::to_string(&f).expect("finding serializes"));
        out.push('\n');
    };
    let sit = rs.situation.as_str();
    for (kind, states, detail) in [
        ("coverable", &report.coverable, "run-time mitigation path to 0"),
        ("offRepairOnly", &report.off_repair_only, "reaches 0 only with off-line mitigation"),
        ("stranded", &report.stranded, "no mitigation path to 0"),
    ] {
        for s in states {
            emit(Finding {
                kind,
                situation: sit,
                state: rs.scope.label(*s),
                detail: detail.to_string(),
            });
        }
    }
    for c in &report.cycles {
        let path: Vec<String> = c.iter().map(|s| rs.scope.label(*s)).collect();
        emit(Finding {
            kind: "cycle",
            situation: sit,
            state: path[0].clone(),
            detail: path.join(" -> "),
        });
    }
    emit(Finding {
        kind: "summary",
        situation: sit,
        state: rs.scope.label(rs.initial()),
        detail: format!(
            "coverable={} offRepairOnly={} stranded={} cycles={}{}",
            report.coverable.len(),
            report.off_repair_only.len(),
            report.stranded.len(),
            report.cycles.len(),
            if report.truncated { " truncated" } else { "" }
        ),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CausalFactor, EndangermentClass, MitigationClass};
    use crate::risk::expand_phase_model;

    #[test]
    fn single_factor_dot() {
        let rs = expand_phase_model(&CausalFactor::new("cf", EndangermentClass::Failure));
        let dot = render_risk_structure(&rs, &RenderOptions::default());
        assert_eq!(dot.matches(" -> ").count(), 3);
        assert_eq!(dot.matches("color=red").count(), 1);
        assert_eq!(dot.matches("color=green").count(), 2);
        assert!(dot.contains("s0 [label=\"0\", shape=doublecircle];"));
    }

    #[test]
    fn mechanism_in_edge_label_and_offline_dashes() {
        let c = CausalFactor::new("C", EndangermentClass::NearMishap)
            .with_off_repair()
            .with_mitigation(MitigationClass::Protection, Some("Ab"));
        let rs = expand_phase_model(&c);
        let dot = render_risk_structure(&rs, &RenderOptions::default());
        assert!(dot.contains("prt^C_alv/Ab"));
        assert_eq!(dot.matches("style=dashed").count(), 1);
        let hidden = RenderOptions {
            include_offline: false,
            ..RenderOptions::default()
        };
        assert_eq!(render_risk_structure(&rs, &hidden).matches(" -> ").count(), 2);
    }

    #[test]
    fn splitting_prefers_a_full_match() {
        let scope = Scope::new(vec!["n".into(), "nC".into(), "C".into()]);
        let s = split_active(&scope, "nC").unwrap();
        assert_eq!(scope.active_label(s), "nC");
        let s = split_active(&scope, "nCC").unwrap();
        assert_eq!(scope.active_label(s), "nCC");
        assert!(split_active(&scope, "Cn").is_none());
    }

    #[test]
    fn empty_scenario_is_header_only() {
        let s = Scenario { seed: 0, steps: vec![] };
        let csv = render_scenario(&s, &RenderOptions::with_format(RenderFormat::Csv)).unwrap();
        assert_eq!(csv, "Step,Situation,#CFs,InitialState,#States,#Trans\n");
    }
}

//! The `ram` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dsl;
use crate::error::Error;
use crate::export::{self, Finding, RenderFormat, RenderOptions};
use crate::model::{self, CausalFactorModel};
use crate::planner::{self, ReportOptions};
use crate::process::{self, SamplingOptions};
use crate::risk;
use crate::trace;

#[derive(Debug, Parser)]
#[command(name = "ram", version, about = "Risk structures, mitigation plans and scenarios for causal factor models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and check a model.
    Validate { file: PathBuf },
    /// Build the risk structure of a situation.
    Build {
        file: PathBuf,
        #[arg(long)]
        situation: String,
        /// Write DOT to this path (`-` for standard output).
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Print state and transition counts.
        #[arg(long)]
        stats: bool,
        /// Leave out off-line transitions.
        #[arg(long)]
        hide_offline: bool,
    },
    /// Endangerment-only part of a situation's risk structure.
    Endanger {
        file: PathBuf,
        #[arg(long)]
        situation: String,
        #[arg(long)]
        dot: PathBuf,
    },
    /// Successor graph of the root process.
    Graph {
        file: PathBuf,
        #[arg(long)]
        dot: PathBuf,
    },
    /// Random execution of the root process.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        start: String,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        seed: u64,
        /// Probability of activating each factor in a sampled initial state.
        #[arg(long, default_value_t = 0.5)]
        p_activate: f64,
        /// Also write the table as CSV to this path (`-` for standard output).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Shortest run-time mitigation plan from a state back to 0.
    Plan {
        file: PathBuf,
        #[arg(long)]
        situation: String,
        /// State such as `A,~B,_C` (A active, B mitigated, C in mishap).
        #[arg(long)]
        state: String,
    },
    /// Mitigation coverage of every state, as JSON lines.
    Report {
        file: PathBuf,
        #[arg(long)]
        situation: String,
        #[arg(long, default_value_t = 100)]
        cycle_cap: usize,
        /// Also list states whose risk value exceeds this budget.
        #[arg(long)]
        budget: Option<f64>,
        /// Risk weight of a factor, `F=w`; unlisted factors weigh 1.
        #[arg(long = "weight", value_parser = parse_weight)]
        weights: Vec<(String, f64)>,
    },
    /// Check a temporal formula on random walks through a risk structure.
    Check {
        file: PathBuf,
        #[arg(long)]
        situation: String,
        /// Formula text; defaults to the translation of the situation's constraints.
        #[arg(long)]
        formula: Option<String>,
        #[arg(long)]
        walks: usize,
        #[arg(long)]
        len: usize,
        #[arg(long)]
        seed: u64,
    },
}

fn parse_weight(s: &str) -> Result<(String, f64), String> {
    let (f, w) = s.split_once('=').ok_or_else(|| format!("expected F=w, got '{s}'"))?;
    let w: f64 = w.parse().map_err(|e| format!("bad weight '{w}': {e}"))?;
    Ok((f.to_string(), w))
}

/// Failure of a command: diagnostics were reported (exit 1).
struct Failed;

type CmdResult = Result<(), Failed>;

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn fail(&mut self, msg: impl std::fmt::Display) -> Failed {
        let _ = writeln!(self.err, "error: {msg}");
        Failed
    }

    fn lib<T>(&mut self, r: Result<T, Error>) -> Result<T, Failed> {
        match r {
            Ok(v) => Ok(v),
            Err(Error::InvalidModel(diags)) => {
                for d in diags {
                    let _ = writeln!(self.err, "{d}");
                }
                Err(Failed)
            }
            Err(e) => Err(self.fail(e)),
        }
    }

    fn emit(&mut self, path: &Path, text: &str) -> CmdResult {
        if path == Path::new("-") {
            self.out.write_all(text.as_bytes()).map_err(|e| self.fail(e))
        } else {
            std::fs::write(path, text).map_err(|e| self.fail(format!("{}: {e}", path.display())))
        }
    }

    fn load(&mut self, path: &Path) -> Result<CausalFactorModel, Failed> {
        let text = std::fs::read_to_string(path).map_err(|e| self.fail(format!("{}: {e}", path.display())))?;
        dsl::parse_model_named(&text, &path.display().to_string()).map_err(|diags| {
            for d in diags {
                let _ = writeln!(self.err, "{d}");
            }
            Failed
        })
    }
}

/// Runs the command line `args` (including the program name). Returns the
/// exit code: 0 on success, 1 when diagnostics or findings were reported,
/// 2 on usage errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                2
            } else {
                let _ = out.write_all(text.as_bytes());
                0
            };
        }
    };
    let mut io = Io { out, err };
    match execute(cli.command, &mut io) {
        Ok(()) => 0,
        Err(Failed) => 1,
    }
}

fn execute(cmd: Command, io: &mut Io) -> CmdResult {
    match cmd {
        Command::Validate { file } => {
            let m = io.load(&file)?;
            let diags = model::validate(&m);
            debug_assert!(diags.is_empty());
            let _ = writeln!(
                io.out,
                "ok: {} factors, {} situations, {} processes",
                m.factors.len(),
                m.situations.len(),
                m.processes.len()
            );
            Ok(())
        }
        Command::Build {
            file,
            situation,
            dot,
            stats,
            hide_offline,
        } => {
            let m = io.load(&file)?;
            let rs = io.lib(risk::compose_situation(&m, &situation))?;
            if let Some(path) = dot {
                let opts = RenderOptions {
                    include_offline: !hide_offline,
                    ..RenderOptions::default()
                };
                io.emit(&path, &export::render_risk_structure(&rs, &opts))?;
            }
            if stats {
                let _ = writeln!(io.out, "{situation}: {}", rs.stats());
            }
            Ok(())
        }
        Command::Endanger { file, situation, dot } => {
            let m = io.load(&file)?;
            let rs = io.lib(risk::compose_situation(&m, &situation))?;
            let sub = risk::endangerment_subgraph(&rs);
            io.emit(&dot, &export::render_risk_structure(&sub, &RenderOptions::default()))
        }
        Command::Graph { file, dot } => {
            let m = io.load(&file)?;
            let g = io.lib(process::successor_graph(&m))?;
            io.emit(&dot, &export::render_situation_graph(&g))
        }
        Command::Simulate {
            file,
            start,
            steps,
            seed,
            p_activate,
            csv,
        } => {
            let m = io.load(&file)?;
            let opts = SamplingOptions {
                p_activate,
                ..SamplingOptions::default()
            };
            let s = io.lib(process::sample_scenario(&m, &start, steps, seed, &opts))?;
            let table = io.lib(export::render_scenario(&s, &RenderOptions::with_format(RenderFormat::PlainTable)))?;
            let _ = io.out.write_all(table.as_bytes());
            if let Some(path) = csv {
                let text = io.lib(export::render_scenario(&s, &RenderOptions::with_format(RenderFormat::Csv)))?;
                io.emit(&path, &text)?;
            }
            Ok(())
        }
        Command::Plan { file, situation, state } => {
            let m = io.load(&file)?;
            let rs = io.lib(risk::compose_situation(&m, &situation))?;
            let s = io.lib(rs.scope.parse_state(&state))?;
            match io.lib(planner::plan_from(&rs, s))? {
                Some(plan) => {
                    let _ = writeln!(
                        io.out,
                        "plan from {} ({} steps)",
                        rs.scope.label(plan.from),
                        plan.len()
                    );
                    for a in &plan.actions {
                        let _ = writeln!(io.out, "  {a}");
                    }
                    Ok(())
                }
                None => Err(io.fail(format!(
                    "no run-time mitigation path from {} to 0",
                    rs.scope.label(s)
                ))),
            }
        }
        Command::Report {
            file,
            situation,
            cycle_cap,
            budget,
            weights,
        } => {
            let m = io.load(&file)?;
            let rs = io.lib(risk::compose_situation(&m, &situation))?;
            let opts = ReportOptions {
                cycle_cap,
                ..ReportOptions::default()
            };
            let report = planner::strategy_report(&rs, &opts);
            let mut text = export::render_report(&rs, &report);
            if let Some(b) = budget {
                let w: BTreeMap<String, f64> = weights.into_iter().collect();
                for s in io.lib(planner::check_budget(&rs, &w, b))? {
                    let f = Finding {
                        kind: "overBudget",
                        situation: &rs.situation,
                        state: rs.scope.label(s),
                        detail: format!("risk {} exceeds budget {b}", planner::risk_value(&rs.scope, s, &w)),
                    };
                    text.push_str(&serde_json::to_string(&f).expect("finding serializes"));
                    text.push('\n');
                }
            }
            let _ = io.out.write_all(text.as_bytes());
            Ok(())
        }
        Command::Check {
            file,
            situation,
            formula,
            walks,
            len,
            seed,
        } => {
            let m = io.load(&file)?;
            let rs = io.lib(risk::compose_situation(&m, &situation))?;
            let f = match formula {
                Some(text) => io.lib(trace::parse_formula(&text))?,
                None => trace::constraints_to_formula(&io.lib(m.effective_constraints(&situation))?),
            };
            let verdicts = io.lib(trace::check_structure(&rs, &f, walks, len, seed))?;
            let failed: Vec<(usize, usize)> = verdicts
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.witness_index.map(|w| (i, w)))
                .collect();
            let _ = writeln!(io.out, "formula: {f}");
            let _ = writeln!(
                io.out,
                "walks={} holds={} violations={}",
                verdicts.len(),
                verdicts.len() - failed.len(),
                failed.len()
            );
            if let Some((walk, pos)) = failed.first() {
                let _ = writeln!(io.out, "first violation: walk {walk} at position {pos}");
                return Err(Failed);
            }
            Ok(())
        }
    }
}

//! The `.ram` text format.
//!
//! ```text
//! version 1;
//! factor W "badWeather" class d;
//! factor C "collision" class nm offRepair mitigation protection by Ab;
//! situation drive aspect factors {W, C};
//! constraint C excludes W;
//! process P0 = start; (basic || drive);
//! root P0;
//! ```
//!
//! Process operators bind, from loosest to tightest: `;`, `|`, `||` (or
//! `∥`), postfix `*`. `#` starts a comment.

mod lexer;
mod parser;
mod serialize;

use std::fmt;

use serde::Serialize;

pub use parser::{parse_model, parse_model_named, parse_process_expr};
pub use serialize::{format_process_expr, serialize_model};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SourceSpan {
    pub file: String,
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum DiagnosticSeverity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ParseDiagnostic {
    pub span: SourceSpan,
    pub severity: DiagnosticSeverity,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            DiagnosticSeverity::Error => "error",
            DiagnosticSeverity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}:{}: {sev}: {}",
            self.span.file, self.span.line, self.span.column, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum TokKind {
    Word(String),
    Str(String),
    Semi,
    Comma,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Eq,
    Bar,
    Par,
    Star,
    Eof,
}

impl TokKind {
    pub(super) fn describe(&self) -> String {
        match self {
            TokKind::Word(w) => format!("'{w}'"),
            TokKind::Str(s) => format!("string \"{s}\""),
            TokKind::Semi => "';'".into(),
            TokKind::Comma => "','".into(),
            TokKind::LBrace => "'{'".into(),
            TokKind::RBrace => "'}'".into(),
            TokKind::LParen => "'('".into(),
            TokKind::RParen => "')'".into(),
            TokKind::Eq => "'='".into(),
            TokKind::Bar => "'|'".into(),
            TokKind::Par => "'||'".into(),
            TokKind::Star => "'*'".into(),
            TokKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) struct Token {
    pub kind: TokKind,
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) struct LexError {
    pub line: usize,
    pub column: usize,
    pub length: usize,
    pub message: String,
}

/// Splits source text into tokens. Lexical errors are collected and the
/// offending character skipped, so later errors are still reported.
pub(super) fn tokenize(text: &str) -> (Vec<Token>, Vec<LexError>) {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut errs = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let start_col = col;
        let single = |kind: TokKind| Token {
            kind,
            line,
            column: start_col,
            length: 1,
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            '\r' if chars.get(i + 1) == Some(&'\n') => {
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            ';' => toks.push(single(TokKind::Semi)),
            ',' => toks.push(single(TokKind::Comma)),
            '{' => toks.push(single(TokKind::LBrace)),
            '}' => toks.push(single(TokKind::RBrace)),
            '(' => toks.push(single(TokKind::LParen)),
            ')' => toks.push(single(TokKind::RParen)),
            '=' => toks.push(single(TokKind::Eq)),
            '*' => toks.push(single(TokKind::Star)),
            '∥' => toks.push(single(TokKind::Par)),
            '|' => {
                if chars.get(i + 1) == Some(&'|') {
                    toks.push(Token {
                        kind: TokKind::Par,
                        line,
                        column: start_col,
                        length: 2,
                    });
                    i += 2;
                    col += 2;
                    continue;
                }
                toks.push(single(TokKind::Bar));
            }
            '"' => {
                let mut s = String::new();
                let mut j = i + 1;
                let mut closed = false;
                while j < chars.len() && chars[j] != '\n' {
                    match chars[j] {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' if j + 1 < chars.len() && matches!(chars[j + 1], '"' | '\\') => {
                            s.push(chars[j + 1]);
                            j += 2;
                        }
                        ch => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                let length = j - i + usize::from(closed);
                if closed {
                    toks.push(Token {
                        kind: TokKind::Str(s),
                        line,
                        column: start_col,
                        length,
                    });
                } else {
                    errs.push(LexError {
                        line,
                        column: start_col,
                        length,
                        message: "unterminated string".into(),
                    });
                }
                col += length;
                i += length;
                continue;
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                toks.push(Token {
                    kind: TokKind::Word(chars[i..j].iter().collect()),
                    line,
                    column: start_col,
                    length: j - i,
                });
                col += j - i;
                i = j;
                continue;
            }
            other => errs.push(LexError {
                line,
                column: start_col,
                length: 1,
                message: format!("unexpected character '{}'", other.escape_default()),
            }),
        }
        i += 1;
        col += 1;
    }
    toks.push(Token {
        kind: TokKind::Eof,
        line,
        column: col,
        length: 1,
    });
    (toks, errs)
}

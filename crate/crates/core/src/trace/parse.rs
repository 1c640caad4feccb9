use crate::error::{Error, Result};
use crate::model::Phase;

use super::Formula;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Not,
    And,
    Or,
    Arrow,
}

fn lex(text: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            c if c.is_whitespace() => {}
            '(' => out.push(Tok::LParen),
            ')' => out.push(Tok::RParen),
            '!' => out.push(Tok::Not),
            '&' => out.push(Tok::And),
            '|' => out.push(Tok::Or),
            '-' if matches!(chars.peek(), Some((_, '>'))) => {
                chars.next();
                out.push(Tok::Arrow);
            }
            c if c.is_alphanumeric() || c == '_' => {
                let mut end = i + c.len_utf8();
                while let Some((j, d)) = chars.peek().copied() {
                    if d.is_alphanumeric() || d == '_' {
                        end = j + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Ident(text[i..end].to_string()));
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unexpected character '{c}' at offset {i} in formula"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == word)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.bump() {
            Some(got) if got == t => Ok(()),
            got => Err(Error::InvalidArgument(format!(
                "expected {t:?} in formula, found {got:?}"
            ))),
        }
    }

    fn implication(&mut self) -> Result<Formula> {
        let l = self.disjunction()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.bump();
            return Ok(Formula::implies(l, self.implication()?));
        }
        Ok(l)
    }

    fn disjunction(&mut self) -> Result<Formula> {
        let mut l = self.conjunction()?;
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            l = Formula::or(l, self.conjunction()?);
        }
        Ok(l)
    }

    fn conjunction(&mut self) -> Result<Formula> {
        let mut l = self.until()?;
        while self.peek() == Some(&Tok::And) {
            self.bump();
            l = Formula::and(l, self.until()?);
        }
        Ok(l)
    }

    fn until(&mut self) -> Result<Formula> {
        let l = self.unary()?;
        if self.peek_ident("U") {
            self.bump();
            return Ok(Formula::until(l, self.until()?));
        }
        if self.peek_ident("W") {
            self.bump();
            return Ok(Formula::weak_until(l, self.until()?));
        }
        Ok(l)
    }

    fn unary(&mut self) -> Result<Formula> {
        match self.bump() {
            Some(Tok::Not) => Ok(Formula::not(self.unary()?)),
            Some(Tok::LParen) => {
                let f = self.implication()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Some(Tok::Ident(w)) => match w.as_str() {
                "G" => Ok(Formula::always(self.unary()?)),
                "F" => Ok(Formula::eventually(self.unary()?)),
                "O" => Ok(Formula::once(self.unary()?)),
                "true" => Ok(Formula::Const(true)),
                "false" => Ok(Formula::Const(false)),
                "active" | "inactive" | "mitigated" | "mishap" => {
                    let phase = match w.as_str() {
                        "active" => Phase::Active,
                        "inactive" => Phase::Inactive,
                        "mitigated" => Phase::Mitigated,
                        _ => Phase::Mishap,
                    };
                    self.expect(Tok::LParen)?;
                    let Some(Tok::Ident(x)) = self.bump() else {
                        return Err(Error::InvalidArgument(format!("{w}(...) needs a factor id")));
                    };
                    self.expect(Tok::RParen)?;
                    Ok(Formula::Atom(x, phase))
                }
                other => Err(Error::InvalidArgument(format!(
                    "unknown word '{other}' in formula"
                ))),
            },
            got => Err(Error::InvalidArgument(format!(
                "unexpected {got:?} in formula"
            ))),
        }
    }
}

/// Parses the text syntax produced by `Formula`'s `Display`.
///
/// Operators from loosest to tightest: `->` (right associative), `|`, `&`,
/// `U`/`W` (right associative), then the prefix operators `!`, `G`, `F`,
/// `O`. Atoms are `active(X)`, `inactive(X)`, `mitigated(X)`, `mishap(X)`,
/// `true` and `false`.
pub fn parse_formula(text: &str) -> Result<Formula> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let f = p.implication()?;
    if let Some(t) = p.peek() {
        return Err(Error::InvalidArgument(format!("trailing {t:?} in formula")));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let f = parse_formula("G active(a) -> !active(b) & inactive(c) | F mishap(d)").unwrap();
        let expect = Formula::implies(
            Formula::always(Formula::active("a")),
            Formula::or(
                Formula::and(Formula::not(Formula::active("b")), Formula::inactive("c")),
                Formula::eventually(Formula::Atom("d".into(), Phase::Mishap)),
            ),
        );
        assert_eq!(f, expect);
    }

    #[test]
    fn display_parses_back() {
        for text in [
            "G (active(a) -> O active(b))",
            "(active(a) -> active(b)) -> true",
            "active(a) U active(b) U mitigated(c)",
            "(active(a) U active(b)) W false",
            "active(a) & (active(b) | active(c))",
        ] {
            let f = parse_formula(text).unwrap();
            assert_eq!(f.to_string(), text);
            assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_formula("active(a) &").is_err());
        assert!(parse_formula("active(a) $ b").is_err());
        assert!(parse_formula("bogus(a)").is_err());
    }
}

//! Lexer and statement parser for assembly source.

use std::collections::HashSet;

use num_bigint::BigInt;

use crate::isa::{lookup_mnemonic, Mnemonic, TokenClass};

use super::{Diagnostic, Literal, Operand, ParseError, SourceProgram, Statement};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number { value: BigInt, hex_digits: Option<usize> },
    Char(u8),
    Comma,
    Colon,
    Semi,
    Bad(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
}

fn lex(source: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (index, raw_line) in source.lines().enumerate() {
        let line = index + 1;
        let text = match raw_line.find("//") {
            Some(i) => &raw_line[..i],
            None => raw_line,
        };
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line });
            match c {
                _ if c.is_whitespace() => i += 1,
                ',' => {
                    push(&mut out, Tok::Comma);
                    i += 1;
                }
                ';' => {
                    push(&mut out, Tok::Semi);
                    i += 1;
                }
                ':' => {
                    push(&mut out, Tok::Colon);
                    i += 1;
                }
                '\'' => {
                    let (tok, used) = lex_char(&chars[i..]);
                    push(&mut out, tok);
                    i += used;
                }
                _ if c.is_ascii_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    push(&mut out, Tok::Ident(chars[start..i].iter().collect()));
                }
                _ if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                    let start = i;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                        i += 1;
                    }
                    let text: String = chars[start..i].iter().collect();
                    push(&mut out, lex_number(&text));
                }
                other => {
                    push(&mut out, Tok::Bad(other.to_string()));
                    i += 1;
                }
            }
        }
    }
    out
}

fn lex_number(text: &str) -> Tok {
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let lower = body.to_ascii_lowercase();
    let (radix, digits) = if let Some(h) = lower.strip_prefix("0x") {
        (16, h)
    } else if let Some(b) = lower.strip_prefix("0b") {
        (2, b)
    } else if let Some(o) = lower.strip_prefix("0o") {
        (8, o)
    } else {
        (10, lower.as_str())
    };
    let valid = !digits.is_empty() && digits.chars().all(|c| c.is_digit(radix));
    match BigInt::parse_bytes(digits.as_bytes(), radix).filter(|_| valid) {
        Some(v) => Tok::Number {
            value: if negative { -v } else { v },
            hex_digits: (radix == 16).then_some(digits.len()),
        },
        _ => Tok::Bad(text.to_string()),
    }
}

fn lex_char(chars: &[char]) -> (Tok, usize) {
    let (c, used) = match (chars.get(1), chars.get(2), chars.get(3)) {
        (Some('\\'), Some(e), Some('\'')) => {
            let c = match e {
                'n' => '\n',
                't' => '\t',
                '0' => '\0',
                other => *other,
            };
            (c, 4)
        }
        (Some(c), Some('\''), _) => (*c, 3),
        _ => return (Tok::Bad("'".into()), 1),
    };
    match u8::try_from(u32::from(c)) {
        Ok(b) => (Tok::Char(b), used),
        Err(_) => (Tok::Bad(c.to_string()), used),
    }
}

/// `R0` … `R255`, case-insensitive.
pub(crate) fn register_token(s: &str) -> Option<Result<u8, String>> {
    let digits = s.strip_prefix(['R', 'r'])?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(digits.parse::<u8>().map_err(|_| format!("register `{s}` beyond R255")))
}

/// `X` followed by exactly two hex digits.
pub(crate) fn mask_token(s: &str) -> Option<u8> {
    let digits = s.strip_prefix(['X', 'x'])?;
    if digits.len() != 2 {
        return None;
    }
    u8::from_str_radix(digits, 16).ok()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    diagnostics: Vec<Diagnostic>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + k).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn last_line(&self) -> usize {
        self.tokens.last().map_or(1, |t| t.line)
    }

    fn error(&mut self, line: usize, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic::syntax(line, message));
    }

    /// Skips past the next `;` after an error.
    fn recover(&mut self) {
        while let Some(t) = self.next() {
            if t.tok == Tok::Semi {
                break;
            }
        }
    }

    fn operand(&mut self) -> Result<(Operand, usize), (usize, String)> {
        let t = self.next().ok_or((self.last_line(), "expected an operand before end of input".to_string()))?;
        let op = match t.tok {
            Tok::Ident(name) => {
                if let Some(r) = register_token(&name) {
                    Operand::Register(r.map_err(|m| (t.line, m))?)
                } else if let Some(m) = mask_token(&name) {
                    Operand::Mask(m)
                } else {
                    Operand::Literal(Literal::Symbol(name))
                }
            }
            Tok::Number { value, hex_digits } => Operand::Literal(Literal::Number { value, hex_digits }),
            Tok::Char(c) => Operand::Literal(Literal::Number { value: BigInt::from(c), hex_digits: None }),
            other => return Err((t.line, format!("expected an operand, found {}", describe(&other)))),
        };
        Ok((op, t.line))
    }

    fn statement(&mut self, labels: Vec<String>) -> Option<Statement> {
        let t = self.next()?;
        let line = t.line;
        let name = match t.tok {
            Tok::Ident(name) => name,
            other => {
                self.error(line, format!("expected a mnemonic, found {}", describe(&other)));
                if other != Tok::Semi {
                    self.recover();
                }
                return None;
            }
        };
        let spec = match lookup_mnemonic(&name) {
            Ok(spec) => spec,
            Err(e) => {
                self.error(line, e.to_string());
                self.recover();
                return None;
            }
        };
        let mut operands = Vec::new();
        if self.peek_at(0) != Some(&Tok::Semi) {
            loop {
                match self.operand() {
                    Ok((op, _)) => operands.push(op),
                    Err((l, m)) => {
                        self.error(l, m);
                        self.recover();
                        return None;
                    }
                }
                match self.next() {
                    Some(Token { tok: Tok::Comma, .. }) => continue,
                    Some(Token { tok: Tok::Semi, .. }) => break,
                    Some(Token { tok, line: l }) => {
                        self.error(l, format!("expected `,` or `;` after operand, found {}", describe(&tok)));
                        self.recover();
                        return None;
                    }
                    None => {
                        self.error(self.last_line(), "missing `;` at end of statement");
                        return None;
                    }
                }
            }
        } else {
            self.next();
        }
        let classes: Vec<TokenClass> = operands.iter().map(Operand::class).collect();
        match spec.select_form(&classes) {
            Ok((form, _)) => Some(Statement { labels, mnemonic: spec.mnemonic, form: form.index, operands, line }),
            Err(e) => {
                self.error(line, e.to_string());
                None
            }
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number { value, .. } => format!("number {value}"),
        Tok::Char(c) => format!("character {:?}", *c as char),
        Tok::Comma => "`,`".into(),
        Tok::Colon => "`:`".into(),
        Tok::Semi => "`;`".into(),
        Tok::Bad(s) => format!("unexpected `{s}`"),
    }
}

fn reserved(name: &str) -> bool {
    register_token(name).is_some() || mask_token(name).is_some() || name.parse::<Mnemonic>().is_ok()
}

pub fn parse(source: &str) -> Result<SourceProgram, ParseError> {
    let mut p = Parser { tokens: lex(source), pos: 0, diagnostics: Vec::new() };
    let mut statements = Vec::new();
    let mut trailing_labels = Vec::new();
    let mut seen = HashSet::new();

    while p.peek().is_some() {
        let mut labels = Vec::new();
        while let (Some(Tok::Ident(name)), Some(Tok::Colon)) = (p.peek_at(0).cloned(), p.peek_at(1)) {
            let line = p.peek().map_or(0, |t| t.line);
            p.pos += 2;
            if reserved(&name) {
                p.error(line, format!("`{name}` is reserved and cannot be a label"));
            } else if !seen.insert(name.clone()) {
                p.diagnostics.push(Diagnostic::duplicate(line, &name));
            } else {
                labels.push((name, line));
            }
        }
        if p.peek().is_none() {
            trailing_labels = labels.into_iter().map(|(n, _)| n).collect();
            break;
        }
        let names = labels.into_iter().map(|(n, _)| n).collect();
        if let Some(s) = p.statement(names) {
            statements.push(s);
        }
    }

    if p.diagnostics.is_empty() {
        Ok(SourceProgram { statements, trailing_labels })
    } else {
        Err(ParseError { diagnostics: p.diagnostics })
    }
}

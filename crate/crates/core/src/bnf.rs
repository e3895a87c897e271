//! Assignment/expression language compiled to stack-machine assembly.
//!
//! ```text
//! program    := { assignment ";" }
//! assignment := ident "=" expr
//! expr       := term { ("+" | "-") term }
//! term       := unary { ("*" | "/") unary }
//! unary      := "-" unary | atom
//! atom       := integer | ident | "(" expr ")"
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write};

use thiserror::Error;

use crate::codec::{parse, SourceProgram};
use crate::machine::MachineConfig;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BnfError {
    #[error("syntax error at {pos}: {message}")]
    ExprSyntaxError { pos: usize, message: String },
    #[error("`{name}` used at {pos} before it is assigned")]
    UseBeforeAssign { name: String, pos: usize },
    #[error("data region at word {base} does not fit {needed} words in RAM of {words}")]
    DataOutOfRange { base: u64, needed: u64, words: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "ADD",
            BinOp::Sub => "SUB",
            BinOp::Mul => "MUL",
            BinOp::Div => "DIV",
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(i64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0 => write!(f, "({v})"),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(n) => f.write_str(n),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub name: String,
    pub expr: Expr,
    pub pos: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExprProgram {
    pub statements: Vec<Assignment>,
}

impl fmt::Display for ExprProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.statements {
            writeln!(f, "{} = {};", s.name, s.expr)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Num(i64),
    Ident(String),
    Sym(char),
    End,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, BnfError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if src[i..].starts_with("//") {
            i = src[i..].find('\n').map_or(bytes.len(), |n| i + n);
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let v = src[start..i].parse().map_err(|_| BnfError::ExprSyntaxError {
                pos: start,
                message: format!("integer `{}` is too large", &src[start..i]),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if "+-*/()=;".contains(c) {
            out.push((Tok::Sym(c), i));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or(c);
            return Err(BnfError::ExprSyntaxError { pos: i, message: format!("unexpected `{ch}`") });
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, BnfError> {
        let found = match self.peek() {
            Tok::Num(v) => v.to_string(),
            Tok::Ident(n) => n.clone(),
            Tok::Sym(c) => c.to_string(),
            Tok::End => "end of input".to_string(),
        };
        Err(BnfError::ExprSyntaxError { pos: self.pos(), message: format!("expected {expected}, found `{found}`") })
    }

    fn expect(&mut self, c: char) -> Result<(), BnfError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.error(&format!("`{c}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr, BnfError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, BnfError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, BnfError> {
        if *self.peek() == Tok::Sym('-') {
            self.bump();
            // literals fold: `-5` is the constant -5
            return Ok(match self.unary()? {
                Expr::Num(v) => Expr::Num(v.wrapping_neg()),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, BnfError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Ident(n) => {
                self.bump();
                Ok(Expr::Var(n))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            _ => self.error("a number, a name or `(`"),
        }
    }
}

/// Parses a program and checks that every name is assigned before use.
pub fn parse_expr(source: &str) -> Result<ExprProgram, BnfError> {
    let mut p = Parser { toks: lex(source)?, at: 0 };
    let mut statements = Vec::new();
    let mut assigned = std::collections::HashSet::new();
    while *p.peek() != Tok::End {
        let (tok, pos) = p.bump();
        let Tok::Ident(name) = tok else {
            p.at -= 1;
            return p.error("a variable name");
        };
        p.expect('=')?;
        let start = p.at;
        let expr = p.expr()?;
        // positions of identifiers inside this expression, for diagnostics
        for (t, at) in &p.toks[start..p.at] {
            if let Tok::Ident(n) = t {
                if !assigned.contains(n) {
                    return Err(BnfError::UseBeforeAssign { name: n.clone(), pos: *at });
                }
            }
        }
        if *p.peek() != Tok::End {
            p.expect(';')?;
        }
        assigned.insert(name.clone());
        statements.push(Assignment { name, expr, pos });
    }
    Ok(ExprProgram { statements })
}

/// Compiler output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Compiled {
    pub assembly: String,
    pub source: SourceProgram,
    /// Variable → first RAM word, in order of first assignment.
    pub symbols: Vec<(String, u64)>,
}

impl Compiled {
    pub fn address(&self, name: &str) -> Option<u64> {
        self.symbols.iter().find(|(n, _)| n == name).map(|(_, a)| *a)
    }
}

/// Default start of the variable region: the upper half of RAM.
pub fn default_data_base(config: &MachineConfig) -> u64 {
    config.ram_word_count as u64 / 2
}

/// Generates stack code: operands are pushed, operators pop two and push
/// one, and each assignment pops into the variable's RAM word(s). Only R0
/// and R1 are used.
pub fn compile(program: &ExprProgram, config: &MachineConfig, data_base: Option<u64>) -> Result<Compiled, BnfError> {
    let base = data_base.unwrap_or_else(|| default_data_base(config));
    let stride = (config.register_width_bits / config.ram_word_bits).max(1) as u64;
    let mut addresses: BTreeMap<&str, u64> = BTreeMap::new();
    let mut symbols = Vec::new();
    for s in &program.statements {
        if !addresses.contains_key(s.name.as_str()) {
            let a = base + stride * symbols.len() as u64;
            addresses.insert(&s.name, a);
            symbols.push((s.name.clone(), a));
        }
    }
    let needed = stride * symbols.len() as u64;
    if base + needed > config.ram_word_count as u64 {
        return Err(BnfError::DataOutOfRange { base, needed, words: config.ram_word_count });
    }

    let mut asm = String::new();
    for s in &program.statements {
        let _ = writeln!(asm, "// {} = {}", s.name, s.expr);
        gen(&s.expr, &addresses, &mut asm);
        let _ = writeln!(asm, "POP R0;\nSTA R0, {};", addresses[s.name.as_str()]);
    }
    asm.push_str("HLT;\n");
    let source = parse(&asm).expect("generated assembly parses");
    Ok(Compiled { assembly: asm, source, symbols })
}

fn gen(e: &Expr, addresses: &BTreeMap<&str, u64>, out: &mut String) {
    match e {
        Expr::Num(v) => {
            let _ = writeln!(out, "LDI R0, {v};\nPSH R0;");
        }
        Expr::Var(n) => {
            let _ = writeln!(out, "LDA R0, {};\nPSH R0;", addresses[n.as_str()]);
        }
        Expr::Neg(inner) => {
            gen(inner, addresses, out);
            out.push_str("POP R0;\nNEG R0;\nPSH R0;\n");
        }
        Expr::Bin(op, a, b) => {
            gen(a, addresses, out);
            gen(b, addresses, out);
            let _ = writeln!(out, "POP R1;\nPOP R0;\n{} R0, R1;\nPSH R0;", op.mnemonic());
        }
    }
}

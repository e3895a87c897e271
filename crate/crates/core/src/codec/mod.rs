//! Assembler and disassembler for the variable-length instruction format.
//!
//! Operand bytes are always written most significant byte first; the
//! configured data endianness only matters once code and data reach RAM.

mod assemble;
mod capo;
mod decode;
mod numeric;
mod parse;

use std::fmt;

use num_bigint::BigInt;
use serde::Serialize;
use thiserror::Error;

use crate::isa::{ExtensionField, Mnemonic, OperandKind, TokenClass};

pub use assemble::{assemble, assemble_source, encode, AsmError, AsmErrorKind, Assembly, AsmWarning};
pub use capo::{read_capo, write_capo, CapoError, CAPO_MAGIC, CAPO_VERSION};
pub use decode::{decode_at, disassemble, disassemble_bytes, DecodeError, DecodeErrorKind, Disassembly, ListingLine};
pub use numeric::{read_numeric, render_numeric, NumericBase, NumericError};
pub use parse::parse;

/// One diagnostic produced while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub kind: DiagnosticKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    Syntax(String),
    DuplicateLabel(String),
}

impl Diagnostic {
    pub(crate) fn syntax(line: usize, message: impl Into<String>) -> Diagnostic {
        Diagnostic { line, kind: DiagnosticKind::Syntax(message.into()) }
    }

    pub(crate) fn duplicate(line: usize, name: &str) -> Diagnostic {
        Diagnostic { line, kind: DiagnosticKind::DuplicateLabel(name.to_string()) }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DiagnosticKind::Syntax(m) => write!(f, "line {}: syntax error: {m}", self.line),
            DiagnosticKind::DuplicateLabel(n) => write!(f, "line {}: duplicate label `{n}`", self.line),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Literal as written in source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    /// `hex_digits` records how many digits a hex literal was written
    /// with; it fixes the payload length of variable-length constants.
    Number { value: BigInt, hex_digits: Option<usize> },
    /// A label or named constant, resolved during assembly.
    Symbol(String),
}

impl Literal {
    pub fn int(v: i64) -> Literal {
        Literal::Number { value: BigInt::from(v), hex_digits: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Register(u8),
    Mask(u8),
    Literal(Literal),
}

impl Operand {
    pub fn class(&self) -> TokenClass {
        match self {
            Operand::Register(_) => TokenClass::Register,
            Operand::Mask(_) => TokenClass::Mask,
            Operand::Literal(_) => TokenClass::Literal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub labels: Vec<String>,
    pub mnemonic: Mnemonic,
    pub form: u8,
    pub operands: Vec<Operand>,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceProgram {
    pub statements: Vec<Statement>,
    /// Labels after the last instruction; they name the end of the code.
    pub trailing_labels: Vec<String>,
}

/// Operand of an encoded instruction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Arg {
    Register(u8),
    Mask(u8),
    /// Raw bytes, most significant first. For length-prefixed constants
    /// this is the payload only.
    Literal { kind: OperandKind, bytes: Vec<u8> },
}

impl Arg {
    pub fn literal(kind: OperandKind, value: u64, width: usize) -> Arg {
        let full = value.to_be_bytes();
        Arg::Literal { kind, bytes: full[8 - width.min(8)..].to_vec() }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Arg::Literal { .. })
    }

    /// Unsigned value; literals longer than eight bytes keep their low
    /// eight bytes.
    pub fn value(&self) -> u64 {
        match self {
            Arg::Register(r) | Arg::Mask(r) => u64::from(*r),
            Arg::Literal { bytes, .. } => bytes.iter().fold(0u64, |acc, b| acc << 8 | u64::from(*b)),
        }
    }

    /// Literal value read as two's complement over its encoded width.
    pub fn signed_value(&self) -> i64 {
        match self {
            Arg::Literal { bytes, .. } if !bytes.is_empty() && bytes.len() < 8 => {
                crate::machine::sign_extend(self.value(), bytes.len() as u32 * 8)
            }
            _ => self.value() as i64,
        }
    }

    /// Number of bytes this operand occupies in the instruction stream.
    pub fn encoded_len(&self) -> usize {
        match self {
            Arg::Register(_) | Arg::Mask(_) => 1,
            Arg::Literal { kind: OperandKind::LenImm, bytes } => 2 + bytes.len(),
            Arg::Literal { bytes, .. } => bytes.len(),
        }
    }
}

/// A fully resolved instruction: what the decoder produces and the
/// encoder consumes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub mnemonic: Mnemonic,
    pub form: u8,
    pub vector: bool,
    pub operands: Vec<Arg>,
}

impl Instruction {
    pub fn extension(&self) -> ExtensionField {
        let spec = crate::isa::isa().spec(self.mnemonic);
        let form = spec.form(self.form).expect("instruction carries a valid form");
        ExtensionField::from_flags(form, self.operands.iter().map(Arg::is_literal))
    }

    pub fn encoded_len(&self) -> usize {
        1 + usize::from(self.extension().width_bits / 8) + self.operands.iter().map(Arg::encoded_len).sum::<usize>()
    }

    /// Whether operand `i` is a code address (branch target).
    pub fn is_branch_target(&self, i: usize) -> bool {
        i == 0
            && matches!(
                self.mnemonic,
                Mnemonic::JMP | Mnemonic::BEQ | Mnemonic::BNE | Mnemonic::BLT | Mnemonic::BGE | Mnemonic::JSR
            )
    }

    /// Canonical text with branch targets rendered through `label`.
    pub fn render(&self, label: &dyn Fn(u64) -> Option<String>) -> String {
        let mut out = self.mnemonic.name().to_string();
        for (i, arg) in self.operands.iter().enumerate() {
            out.push_str(if i == 0 { " " } else { ", " });
            let text = match arg {
                Arg::Register(r) => format!("R{r}"),
                Arg::Mask(m) => format!("X{m:02X}"),
                Arg::Literal { .. } if self.is_branch_target(i) => {
                    label(arg.value()).unwrap_or_else(|| arg.value().to_string())
                }
                Arg::Literal { kind: OperandKind::Color, .. } => format!("0x{:08X}", arg.value()),
                Arg::Literal { kind: OperandKind::LenImm, bytes } => {
                    let hex: String = bytes.iter().map(|b| format!("{b:02X}")).collect();
                    format!("0x{hex}")
                }
                Arg::Literal { .. } => arg.value().to_string(),
            };
            out.push_str(&text);
        }
        out.push(';');
        out
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&|_| None))
    }
}

/// Span of one instruction inside an object image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MapEntry {
    pub offset: u32,
    pub length: u32,
    /// Source line, when the image came from source text.
    pub line: Option<usize>,
}

/// Encoded program with its symbol table and instruction map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObjectImage {
    pub bytes: Vec<u8>,
    pub entry_offset: u32,
    /// Labels in definition order.
    pub symbols: Vec<(String, u32)>,
    pub map: Vec<MapEntry>,
    /// (W in bits, A in bytes) the image was assembled for.
    pub fingerprint: [u8; 2],
}

impl ObjectImage {
    pub fn symbol(&self, name: &str) -> Option<u32> {
        self.symbols.iter().find(|(n, _)| n == name).map(|(_, o)| *o)
    }

    /// First label defined at `offset`.
    pub fn label_at(&self, offset: u32) -> Option<&str> {
        self.symbols.iter().find(|(_, o)| *o == offset).map(|(n, _)| n.as_str())
    }

    /// Source line of the instruction starting at `offset`.
    pub fn line_at(&self, offset: u32) -> Option<usize> {
        self.map.iter().find(|e| e.offset == offset).and_then(|e| e.line)
    }

    /// Offset of the first instruction assembled from `line`.
    pub fn offset_of_line(&self, line: usize) -> Option<u32> {
        self.map.iter().find(|e| e.line == Some(line)).map(|e| e.offset)
    }

    pub fn instruction_offsets(&self) -> impl Iterator<Item = u32> + '_ {
        self.map.iter().map(|e| e.offset)
    }
}

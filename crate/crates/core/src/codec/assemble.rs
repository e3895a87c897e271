//! Two-pass assembler and the shared instruction encoder.

use std::collections::HashMap;

use num_bigint::{BigInt, Sign};
use serde::Serialize;
use thiserror::Error;

use crate::isa::{isa, OperandKind};
use crate::machine::MachineConfig;
use crate::screen::named_color;

use super::{parse, Arg, Instruction, Literal, MapEntry, ObjectImage, Operand, ParseError, SourceProgram};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("operand out of range: {0}")]
    OperandOutOfRange(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Literal that did not fit its field and was reduced modulo 2^bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AsmWarning {
    pub line: usize,
    pub operand: usize,
    pub value: String,
    pub bits: usize,
}

impl std::fmt::Display for AsmWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "line {}: warning: operand {} value {} truncated to {} bits",
            self.line,
            self.operand + 1,
            self.value,
            self.bits
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    pub image: ObjectImage,
    pub warnings: Vec<AsmWarning>,
}

/// Parses then assembles. Parse diagnostics come back as
/// [`AsmErrorKind::Parse`] with the first diagnostic's line.
pub fn assemble_source(source: &str, config: &MachineConfig) -> Result<Assembly, AsmError> {
    let program = parse(source).map_err(|e| AsmError {
        line: e.diagnostics.first().map_or(0, |d| d.line),
        kind: AsmErrorKind::Parse(e),
    })?;
    assemble(&program, config)
}

fn fixed_width(kind: OperandKind, config: &MachineConfig) -> usize {
    match kind {
        OperandKind::Reg | OperandKind::Mask | OperandKind::Lit8 => 1,
        OperandKind::Lit16 => 2,
        OperandKind::Imm => config.imm_bytes(),
        OperandKind::Addr => config.addr_bytes(),
        OperandKind::Color => 4,
        OperandKind::LenImm => unreachable!("variable-length operand"),
    }
}

/// Payload length of a variable-length constant.
fn payload_len(lit: &Literal, config: &MachineConfig) -> usize {
    match lit {
        Literal::Symbol(_) => config.addr_bytes(),
        Literal::Number { hex_digits: Some(d), .. } => d.div_ceil(2).max(1),
        Literal::Number { value, .. } => minimal_bytes(value),
    }
}

/// Fewest bytes that hold `v`: unsigned for non-negative values, two's
/// complement for negative ones.
fn minimal_bytes(v: &BigInt) -> usize {
    let bits = if v.sign() == Sign::Minus { (-v - 1u8).bits() + 1 } else { v.bits() };
    (bits as usize).div_ceil(8).max(1)
}

/// `v mod 2^(8·width)` as big-endian bytes, and whether it had to wrap.
fn to_field(v: &BigInt, width: usize) -> (Vec<u8>, bool) {
    let modulus = BigInt::from(1u8) << (8 * width);
    let half = BigInt::from(1u8) << (8 * width).saturating_sub(1);
    let fits = *v < modulus && *v >= -half;
    let reduced = ((v % &modulus) + &modulus) % &modulus;
    let (_, raw) = reduced.to_bytes_be();
    let mut bytes = vec![0u8; width.saturating_sub(raw.len())];
    bytes.extend_from_slice(&raw[raw.len().saturating_sub(width)..]);
    (bytes, !fits)
}

pub fn assemble(program: &SourceProgram, config: &MachineConfig) -> Result<Assembly, AsmError> {
    let table = isa();

    // Pass 1: sizes, offsets and the symbol table.
    let mut offset = 0u32;
    let mut symbols = Vec::new();
    let mut map = Vec::new();
    for s in &program.statements {
        for l in &s.labels {
            symbols.push((l.clone(), offset));
        }
        let form = table.spec(s.mnemonic).form(s.form).expect("parser selected a valid form");
        let mut len = 1 + usize::from(form.ext_width_bits() / 8);
        for (slot, op) in form.slots.iter().zip(&s.operands) {
            let kind = slot.resolve(matches!(op, Operand::Literal(_)));
            len += match (kind, op) {
                (OperandKind::LenImm, Operand::Literal(lit)) => 2 + payload_len(lit, config),
                (k, _) => fixed_width(k, config),
            };
        }
        map.push(MapEntry { offset, length: len as u32, line: Some(s.line) });
        offset += len as u32;
    }
    for l in &program.trailing_labels {
        symbols.push((l.clone(), offset));
    }
    let lookup: HashMap<&str, u32> = symbols.iter().map(|(n, o)| (n.as_str(), *o)).collect();

    // Pass 2: resolve operands and emit.
    let mut bytes = Vec::with_capacity(offset as usize);
    let mut warnings = Vec::new();
    for s in &program.statements {
        let spec = table.spec(s.mnemonic);
        let form = spec.form(s.form).expect("parser selected a valid form");
        let mut args = Vec::with_capacity(s.operands.len());
        for (i, (slot, op)) in form.slots.iter().zip(&s.operands).enumerate() {
            let arg = match op {
                Operand::Register(r) => {
                    if usize::from(*r) >= config.spad_count {
                        return Err(AsmError {
                            line: s.line,
                            kind: AsmErrorKind::OperandOutOfRange(format!(
                                "R{r} but the SPAD has {} registers",
                                config.spad_count
                            )),
                        });
                    }
                    Arg::Register(*r)
                }
                Operand::Mask(m) => Arg::Mask(*m),
                Operand::Literal(lit) => {
                    let kind = slot.resolve(true);
                    let value = match lit {
                        Literal::Number { value, .. } => value.clone(),
                        Literal::Symbol(name) => match lookup.get(name.as_str()) {
                            Some(o) => BigInt::from(*o),
                            None => match named_color(name) {
                                Some(c) => BigInt::from(c),
                                None => {
                                    return Err(AsmError {
                                        line: s.line,
                                        kind: AsmErrorKind::UndefinedLabel(name.clone()),
                                    })
                                }
                            },
                        },
                    };
                    let width = match kind {
                        OperandKind::LenImm => {
                            let n = payload_len(lit, config);
                            if n > usize::from(u16::MAX) {
                                return Err(AsmError {
                                    line: s.line,
                                    kind: AsmErrorKind::OperandOutOfRange(format!("{n}-byte constant")),
                                });
                            }
                            n
                        }
                        k => fixed_width(k, config),
                    };
                    let (field, wrapped) = to_field(&value, width);
                    if wrapped {
                        warnings.push(AsmWarning { line: s.line, operand: i, value: value.to_string(), bits: width * 8 });
                    }
                    Arg::Literal { kind, bytes: field }
                }
            };
            args.push(arg);
        }
        let instr = Instruction { mnemonic: s.mnemonic, form: s.form, vector: form.vector, operands: args };
        bytes.extend(encode(&instr));
    }
    debug_assert_eq!(bytes.len(), offset as usize);

    Ok(Assembly {
        image: ObjectImage { bytes, entry_offset: 0, symbols, map, fingerprint: config.fingerprint() },
        warnings,
    })
}

/// Encodes one instruction: head byte, extension field, operands.
pub fn encode(instr: &Instruction) -> Vec<u8> {
    let spec = isa().spec(instr.mnemonic);
    let form = spec.form(instr.form).expect("instruction carries a valid form");
    let mut out = vec![spec.head_byte(form)];
    out.extend(instr.extension().bytes());
    for arg in &instr.operands {
        match arg {
            Arg::Register(v) | Arg::Mask(v) => out.push(*v),
            Arg::Literal { kind: OperandKind::LenImm, bytes } => {
                out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
                out.extend_from_slice(bytes);
            }
            Arg::Literal { bytes, .. } => out.extend_from_slice(bytes),
        }
    }
    out
}

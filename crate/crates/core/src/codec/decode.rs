//! Instruction decoder and canonical disassembler.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::isa::{lookup_code, ExtensionField, OperandKind};
use crate::machine::MachineConfig;

use super::{Arg, Instruction, MapEntry, ObjectImage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at offset {offset}: {kind}")]
pub struct DecodeError {
    pub offset: u64,
    pub kind: DecodeErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeErrorKind {
    #[error("unknown opcode: class {class:04b}, opcode {opcode:04b}")]
    UnknownOpcode { class: u8, opcode: u8 },
    #[error("{mnemonic} has no form {form}")]
    UnknownForm { mnemonic: String, form: u8 },
    #[error("operand kinds {kinds:08b} do not fit {mnemonic} form {form}")]
    BadOperandKinds { mnemonic: String, form: u8, kinds: u8 },
    #[error("instruction stream ends mid-instruction")]
    TruncatedInstruction,
}

/// Decodes the instruction starting at `offset`, reading bytes through
/// `fetch`. Returns the instruction and its encoded length.
pub fn decode_at(
    fetch: &dyn Fn(u64) -> Option<u8>,
    offset: u64,
    config: &MachineConfig,
) -> Result<(Instruction, usize), DecodeError> {
    let err = |kind| DecodeError { offset, kind };
    let mut pos = offset;
    let mut take = || {
        let b = fetch(pos).ok_or(err(DecodeErrorKind::TruncatedInstruction));
        pos += 1;
        b
    };

    let head = take()?;
    let (class, opcode) = (head >> 4, head & 0x0F);
    let (spec, vector) =
        lookup_code(class, opcode).map_err(|_| err(DecodeErrorKind::UnknownOpcode { class, opcode }))?;

    if spec.is_zero_operand() {
        let instr = Instruction { mnemonic: spec.mnemonic, form: spec.forms[0].index, vector, operands: Vec::new() };
        return Ok((instr, 1));
    }

    let first = take()?;
    let index = first >> 4;
    let form = spec
        .form(index)
        .filter(|f| f.vector == vector)
        .ok_or(err(DecodeErrorKind::UnknownForm { mnemonic: spec.mnemonic.to_string(), form: index }))?;
    let mut kinds = (first & 0x0F) << 4;
    if form.ext_width_bits() == 16 {
        kinds |= take()? >> 4;
    }
    let ext = ExtensionField { width_bits: form.ext_width_bits(), form_index: index, kinds };
    let bad_kinds = || DecodeErrorKind::BadOperandKinds { mnemonic: spec.mnemonic.to_string(), form: index, kinds };
    if form.arity() < 8 && kinds & (0xFFu8 >> form.arity()) != 0 {
        return Err(err(bad_kinds()));
    }

    let mut operands = Vec::with_capacity(form.arity());
    for (i, slot) in form.slots.iter().enumerate() {
        // Operands past the eighth have no flag bit; their kind is fixed.
        let literal = if i < 8 { ext.is_literal(i) } else { slot.resolve(true).is_literal() };
        let token = if literal {
            crate::isa::TokenClass::Literal
        } else if slot.resolve(false) == OperandKind::Mask {
            crate::isa::TokenClass::Mask
        } else {
            crate::isa::TokenClass::Register
        };
        if !slot.accepts(token) {
            return Err(err(bad_kinds()));
        }
        let kind = slot.resolve(literal);
        let arg = match kind {
            OperandKind::Reg => Arg::Register(take()?),
            OperandKind::Mask => Arg::Mask(take()?),
            OperandKind::LenImm => {
                let len = usize::from(u16::from_be_bytes([take()?, take()?]));
                let bytes = (0..len).map(|_| take()).collect::<Result<Vec<_>, _>>()?;
                Arg::Literal { kind, bytes }
            }
            k => {
                let width = match k {
                    OperandKind::Lit8 => 1,
                    OperandKind::Lit16 => 2,
                    OperandKind::Imm => config.imm_bytes(),
                    OperandKind::Addr => config.addr_bytes(),
                    OperandKind::Color => 4,
                    _ => unreachable!(),
                };
                let bytes = (0..width).map(|_| take()).collect::<Result<Vec<_>, _>>()?;
                Arg::Literal { kind, bytes }
            }
        };
        operands.push(arg);
    }
    let len = (pos - offset) as usize;
    Ok((Instruction { mnemonic: spec.mnemonic, form: index, vector, operands }, len))
}

/// One instruction of a disassembly listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListingLine {
    pub offset: u32,
    pub length: u32,
    pub labels: Vec<String>,
    pub instruction: Instruction,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disassembly {
    pub lines: Vec<ListingLine>,
    pub trailing_labels: Vec<String>,
}

impl Disassembly {
    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.lines.iter().map(|l| &l.instruction)
    }
}

impl fmt::Display for Disassembly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.lines {
            for l in &line.labels {
                writeln!(f, "{l}:")?;
            }
            writeln!(f, "{}", line.text)?;
        }
        for l in &self.trailing_labels {
            writeln!(f, "{l}:")?;
        }
        Ok(())
    }
}

/// Disassembles raw bytes with no symbol information.
pub fn disassemble_bytes(bytes: &[u8], config: &MachineConfig) -> Result<Disassembly, DecodeError> {
    disassemble_with(bytes, &[], config)
}

/// Canonical listing of an image. Branch targets print as the image's
/// labels; targets without one get synthesized `L<n>` names.
pub fn disassemble(image: &ObjectImage, config: &MachineConfig) -> Result<Disassembly, DecodeError> {
    disassemble_with(&image.bytes, &image.symbols, config)
}

fn disassemble_with(bytes: &[u8], symbols: &[(String, u32)], config: &MachineConfig) -> Result<Disassembly, DecodeError> {
    let fetch = |i: u64| bytes.get(i as usize).copied();
    let mut decoded = Vec::new();
    let mut offset = 0u64;
    while (offset as usize) < bytes.len() {
        let (instr, len) = decode_at(&fetch, offset, config)?;
        decoded.push((MapEntry { offset: offset as u32, length: len as u32, line: None }, instr));
        offset += len as u64;
    }
    let end = offset as u32;

    let mut names: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for (n, o) in symbols {
        names.entry(*o).or_default().push(n.clone());
    }
    let boundaries: BTreeSet<u32> = decoded.iter().map(|(e, _)| e.offset).chain([end]).collect();
    let targets: BTreeSet<u32> = decoded
        .iter()
        .flat_map(|(_, i)| {
            i.operands.iter().enumerate().filter(|(k, _)| i.is_branch_target(*k)).map(|(_, a)| a.value())
        })
        .filter_map(|v| u32::try_from(v).ok())
        .filter(|v| boundaries.contains(v) && !names.contains_key(v))
        .collect();
    let taken: BTreeSet<&str> = symbols.iter().map(|(n, _)| n.as_str()).collect();
    let mut counter = 0;
    for t in targets {
        let name = loop {
            let candidate = format!("L{counter}");
            counter += 1;
            if !taken.contains(candidate.as_str()) {
                break candidate;
            }
        };
        names.insert(t, vec![name]);
    }

    let first_names: BTreeMap<u32, String> = names.iter().map(|(o, ns)| (*o, ns[0].clone())).collect();
    let label = |v: u64| u32::try_from(v).ok().and_then(|o| first_names.get(&o)).cloned();
    let mut lines = Vec::with_capacity(decoded.len());
    for (entry, instr) in decoded {
        let text = instr.render(&label);
        lines.push(ListingLine {
            offset: entry.offset,
            length: entry.length,
            labels: names.remove(&entry.offset).unwrap_or_default(),
            instruction: instr,
            text,
        });
    }
    let trailing_labels = names.remove(&end).unwrap_or_default();
    Ok(Disassembly { lines, trailing_labels })
}

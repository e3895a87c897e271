//! The instruction repertoire.
//!
//! Every instruction starts with one byte holding a 4-bit class id and a
//! 4-bit opcode. Vector-capable mnemonics own a second opcode equal to the
//! scalar one with the most significant bit set. Unless the mnemonic takes
//! no operands, an extension field follows: one byte carrying the form index
//! in its high nibble and the register/literal flags of operands 1-4 in its
//! low nibble, plus a second byte (forms with five or more operands) whose
//! high nibble holds the flags of operands 5-8.
//!
//! The table built here is the only place the encoding is described; the
//! assembler, disassembler and execution engine all consult it.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("unknown opcode: class {class:04b}, opcode {opcode:04b}")]
    UnknownOpcode { class: u8, opcode: u8 },
    #[error("{mnemonic} has no form taking {arity} operand(s) of the given kinds")]
    NoMatchingForm { mnemonic: Mnemonic, arity: usize },
    #[error("{mnemonic} has no form {form}")]
    UnknownForm { mnemonic: Mnemonic, form: u8 },
}

/// 4-bit instruction class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Load = 0b0000,
    Store = 0b0001,
    Arith = 0b0010,
    Logic = 0b0011,
    Shift = 0b0100,
    Move = 0b0101,
    Branch = 0b0110,
    Stack = 0b0111,
    Graphics = 0b1000,
    Io = 0b1001,
    Control = 0b1111,
}

impl Class {
    pub fn id(self) -> ClassId {
        ClassId(self as u8)
    }

    pub fn from_id(id: u8) -> Option<Class> {
        Some(match id {
            0b0000 => Class::Load,
            0b0001 => Class::Store,
            0b0010 => Class::Arith,
            0b0011 => Class::Logic,
            0b0100 => Class::Shift,
            0b0101 => Class::Move,
            0b0110 => Class::Branch,
            0b0111 => Class::Stack,
            0b1000 => Class::Graphics,
            0b1001 => Class::Io,
            0b1111 => Class::Control,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ClassId(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Opcode(pub u8);

impl Opcode {
    pub fn vector_flag(self) -> bool {
        self.0 & 0b1000 != 0
    }
}

macro_rules! mnemonics {
    ($($name:ident),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
        pub enum Mnemonic { $($name),* }

        impl Mnemonic {
            pub const ALL: &'static [Mnemonic] = &[$(Mnemonic::$name),*];

            pub fn name(self) -> &'static str {
                match self { $(Mnemonic::$name => stringify!($name)),* }
            }
        }
    };
}

mnemonics! {
    LDI, LDA, LDR, LDX,
    STI, STA, STR,
    ADD, SUB, MUL, DIV, INC, DEC, NEG, CMP,
    IOR, AND, XOR, NOT,
    SHL, SHR, ROL, ROR,
    MOV, SWP, SHV,
    JMP, BEQ, BNE, BLT, BGE, JSR, RTS,
    PSH, POP,
    STF, CLF, CPF, MVF, SWF, RTF, FLF, SCF, LDF, SVF, CHF,
    INP, OUT,
    NOP, HLT,
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mnemonic {
    type Err = IsaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mnemonic::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| IsaError::UnknownMnemonic(s.to_string()))
    }
}

/// Encoded shape of a single operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperandKind {
    /// Register index, one byte.
    Reg,
    /// 8-bit register-selection mask, one byte.
    Mask,
    /// Small literal: window, layer, prefix parameter, row. One byte.
    Lit8,
    /// Screen coordinate, size or angle. Two bytes.
    Lit16,
    /// Immediate of register width (W/8 bytes).
    Imm,
    /// RAM or code address (A bytes).
    Addr,
    /// RGBA8888 color, four bytes.
    Color,
    /// Two-byte length followed by that many payload bytes.
    LenImm,
}

impl OperandKind {
    pub fn is_literal(self) -> bool {
        !matches!(self, OperandKind::Reg | OperandKind::Mask)
    }
}

/// One operand position of a form: either a fixed kind, or a register
/// that may alternatively be given as a literal of the named kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Fixed(OperandKind),
    RegOr(OperandKind),
}

impl Slot {
    /// Accepted kind flags: 0 = register/mask, 1 = literal.
    fn flags(self) -> &'static [u8] {
        match self {
            Slot::Fixed(k) if k.is_literal() => &[1],
            Slot::Fixed(_) => &[0],
            Slot::RegOr(_) => &[0, 1],
        }
    }

    /// Kind actually encoded for the given flag.
    pub fn resolve(self, literal: bool) -> OperandKind {
        match (self, literal) {
            (Slot::Fixed(k), _) => k,
            (Slot::RegOr(_), false) => OperandKind::Reg,
            (Slot::RegOr(k), true) => k,
        }
    }

    pub fn accepts(self, token: TokenClass) -> bool {
        match (self, token) {
            (Slot::Fixed(OperandKind::Reg), TokenClass::Register) => true,
            (Slot::Fixed(OperandKind::Mask), TokenClass::Mask) => true,
            (Slot::Fixed(k), TokenClass::Literal) => k.is_literal(),
            (Slot::RegOr(_), TokenClass::Register | TokenClass::Literal) => true,
            _ => false,
        }
    }
}

/// What the assembler knows about an operand before labels are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenClass {
    Register,
    Mask,
    /// Numbers, characters, labels and named constants.
    Literal,
}

impl TokenClass {
    pub fn flag(self) -> bool {
        matches!(self, TokenClass::Literal)
    }
}

/// How the engine interprets a form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Semantics {
    /// No operands.
    Nullary,
    /// Rx op= operand.
    Accumulate,
    /// Rx = op(operand2, operand3).
    ThreeAddress,
    /// Single-register in-place update.
    Unary,
    /// Rx = op(Ry).
    UnaryInto,
    /// Bitwise prefix over the bits of Ry into Rx.
    BitPrefix,
    /// Prefix combination over a masked register set.
    VectorPrefix,
    /// Scalar operation replicated over a masked register set.
    VectorUnary,
    /// Concurrent register moves driven by incidence rows.
    VectorMove,
    /// Shift/rotate of the concatenated masked registers.
    VectorShift,
    /// Field-width parameterised per-register transform (SWP/SHV).
    FieldTransform,
    /// Same, replicated over a masked register set.
    VectorFieldTransform,
    /// Memory transfer, control flow, stack, I/O and graphics: the
    /// mnemonic and form index fully determine behavior.
    Direct,
    /// Accepted by the assembler, faults at execution.
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Form {
    pub index: u8,
    pub vector: bool,
    pub slots: Vec<Slot>,
    pub semantics: Semantics,
    pub synopsis: String,
}

impl Form {
    pub fn arity(&self) -> usize {
        self.slots.len()
    }

    pub fn ext_width_bits(&self) -> u8 {
        match self.slots.len() {
            0 => 0,
            1..=4 => 8,
            _ => 16,
        }
    }

    fn matches(&self, tokens: &[TokenClass]) -> bool {
        tokens.len() == self.slots.len()
            && self.slots.iter().zip(tokens).all(|(s, t)| s.accepts(*t))
    }
}

/// Decoded or to-be-encoded extension field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtensionField {
    pub width_bits: u8,
    pub form_index: u8,
    /// Bit 7 is operand 1, bit 0 operand 8; set = literal.
    pub kinds: u8,
}

impl ExtensionField {
    pub fn bytes(&self) -> Vec<u8> {
        match self.width_bits {
            0 => Vec::new(),
            8 => vec![(self.form_index << 4) | (self.kinds >> 4)],
            _ => vec![(self.form_index << 4) | (self.kinds >> 4), (self.kinds & 0x0F) << 4],
        }
    }

    pub fn is_literal(&self, position: usize) -> bool {
        position < 8 && self.kinds & (0x80 >> position) != 0
    }

    pub fn from_flags(form: &Form, flags: impl IntoIterator<Item = bool>) -> ExtensionField {
        let kinds = flags
            .into_iter()
            .take(8)
            .enumerate()
            .fold(0u8, |acc, (i, lit)| if lit { acc | (0x80 >> i) } else { acc });
        ExtensionField { width_bits: form.ext_width_bits(), form_index: form.index, kinds }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstructionSpec {
    pub mnemonic: Mnemonic,
    pub class: Class,
    pub scalar_opcode: Opcode,
    pub vector_opcode: Option<Opcode>,
    pub forms: Vec<Form>,
}

impl InstructionSpec {
    pub fn class_id(&self) -> ClassId {
        self.class.id()
    }

    pub fn form(&self, index: u8) -> Option<&Form> {
        self.forms.iter().find(|f| f.index == index)
    }

    pub fn opcode_for(&self, form: &Form) -> Opcode {
        if form.vector {
            self.vector_opcode.expect("vector form on scalar-only mnemonic")
        } else {
            self.scalar_opcode
        }
    }

    /// Leading byte for the given form.
    pub fn head_byte(&self, form: &Form) -> u8 {
        (self.class as u8) << 4 | self.opcode_for(form).0
    }

    pub fn is_zero_operand(&self) -> bool {
        self.forms.iter().all(|f| f.slots.is_empty())
    }

    /// Picks the unique form matching the operand classes and builds its
    /// extension field.
    pub fn select_form(&self, tokens: &[TokenClass]) -> Result<(&Form, ExtensionField), IsaError> {
        let form = self
            .forms
            .iter()
            .find(|f| f.matches(tokens))
            .ok_or(IsaError::NoMatchingForm { mnemonic: self.mnemonic, arity: tokens.len() })?;
        let ext = ExtensionField::from_flags(form, tokens.iter().map(|t| t.flag()));
        Ok((form, ext))
    }
}

/// The complete repertoire with its lookup indices.
#[derive(Debug)]
pub struct Isa {
    specs: Vec<InstructionSpec>,
    by_mnemonic: HashMap<Mnemonic, usize>,
    /// (class, opcode) -> (spec index, vector mode)
    by_code: HashMap<(u8, u8), (usize, bool)>,
}

/// The shared, immutable instruction table.
pub fn isa() -> &'static Isa {
    static ISA: OnceLock<Isa> = OnceLock::new();
    ISA.get_or_init(Isa::build)
}

pub fn lookup_mnemonic(name: &str) -> Result<&'static InstructionSpec, IsaError> {
    let m: Mnemonic = name.parse()?;
    Ok(isa().spec(m))
}

/// Returns the spec and whether the opcode selects vector mode.
pub fn lookup_code(class: u8, opcode: u8) -> Result<(&'static InstructionSpec, bool), IsaError> {
    let table = isa();
    table
        .by_code
        .get(&(class, opcode))
        .map(|&(i, vector)| (&table.specs[i], vector))
        .ok_or(IsaError::UnknownOpcode { class, opcode })
}

impl Isa {
    pub fn spec(&self, m: Mnemonic) -> &InstructionSpec {
        &self.specs[self.by_mnemonic[&m]]
    }

    pub fn specs(&self) -> &[InstructionSpec] {
        &self.specs
    }

    fn build() -> Isa {
        let specs = repertoire();
        let mut by_mnemonic = HashMap::new();
        let mut by_code = HashMap::new();
        for (i, spec) in specs.iter().enumerate() {
            assert!(by_mnemonic.insert(spec.mnemonic, i).is_none(), "duplicate {}", spec.mnemonic);
            let class = spec.class as u8;
            assert!(
                by_code.insert((class, spec.scalar_opcode.0), (i, false)).is_none(),
                "code clash at {}",
                spec.mnemonic
            );
            if let Some(v) = spec.vector_opcode {
                assert_eq!(v.0, spec.scalar_opcode.0 | 0b1000, "{} vector opcode", spec.mnemonic);
                assert!(by_code.insert((class, v.0), (i, true)).is_none(), "code clash at {}", spec.mnemonic);
            }
            check_forms(spec);
        }
        Isa { specs, by_mnemonic, by_code }
    }

    /// One JSON object per (mnemonic, form), newline-delimited.
    pub fn reference_jsonl(&self) -> String {
        let mut out = String::new();
        for spec in &self.specs {
            for form in &spec.forms {
                let record = serde_json::json!({
                    "mnemonic": spec.mnemonic,
                    "class": spec.class,
                    "class_id": format!("{:04b}", spec.class as u8),
                    "opcode": format!("{:04b}", spec.opcode_for(form).0),
                    "vector": form.vector,
                    "form": form.index,
                    "extension_bits": form.ext_width_bits(),
                    "operands": form.slots,
                    "semantics": form.semantics,
                    "synopsis": form.synopsis,
                });
                out.push_str(&record.to_string());
                out.push('\n');
            }
        }
        out
    }
}

/// Forms of one mnemonic must be distinguishable by (arity, flag pattern)
/// and carry unique indices.
fn check_forms(spec: &InstructionSpec) {
    let mut seen = HashMap::new();
    for form in &spec.forms {
        assert!(form.arity() <= 9, "{} form {} too wide", spec.mnemonic, form.index);
        assert!(
            !form.vector || spec.vector_opcode.is_some(),
            "{} has a vector form but no vector opcode",
            spec.mnemonic
        );
        for pattern in flag_patterns(&form.slots) {
            if let Some(other) = seen.insert((form.arity(), pattern), form.index) {
                panic!("{} forms {} and {} overlap", spec.mnemonic, other, form.index);
            }
        }
    }
    let mut indices: Vec<_> = spec.forms.iter().map(|f| f.index).collect();
    indices.sort_unstable();
    indices.dedup();
    assert_eq!(indices.len(), spec.forms.len(), "{} duplicate form index", spec.mnemonic);
}

pub(crate) fn flag_patterns(slots: &[Slot]) -> Vec<Vec<u8>> {
    slots.iter().fold(vec![Vec::new()], |acc, slot| {
        acc.iter()
            .flat_map(|p| {
                slot.flags().iter().map(move |f| {
                    let mut next = p.clone();
                    next.push(*f);
                    next
                })
            })
            .collect()
    })
}

use OperandKind::*;
use Slot::{Fixed as F, RegOr as Or};

fn form(index: u8, slots: &[Slot], semantics: Semantics, synopsis: &str) -> Form {
    Form { index, vector: false, slots: slots.to_vec(), semantics, synopsis: synopsis.to_string() }
}

fn vform(index: u8, slots: &[Slot], semantics: Semantics, synopsis: &str) -> Form {
    Form { vector: true, ..form(index, slots, semantics, synopsis) }
}

fn nullary(synopsis: &str) -> Vec<Form> {
    vec![form(0, &[], Semantics::Nullary, synopsis)]
}

const PREFIX_SLOTS: &[Slot] = &[F(Mask), F(Mask), F(Lit8), F(Lit8), F(Lit8)];
const REPLICATE_SLOTS: &[Slot] = &[F(Imm), F(Mask), F(Lit8)];

fn binary_forms(name: &str, prefix: bool, bit_prefix: bool) -> Vec<Form> {
    let mut forms = vec![
        form(1, &[F(Reg), Or(Imm)], Semantics::Accumulate, &format!("{name} Rx, Ry/constant/label")),
        form(
            2,
            &[F(Reg), Or(Imm), Or(Imm)],
            Semantics::ThreeAddress,
            &format!("{name} Rx, Ry/constant/label, Rz/constant/label"),
        ),
    ];
    if bit_prefix {
        forms.push(form(
            3,
            &[F(Reg), F(Reg), F(Lit8), F(Lit8)],
            Semantics::BitPrefix,
            &format!("{name} Rx, Ry, domain split, direction"),
        ));
    }
    if prefix {
        forms.push(vform(
            4,
            PREFIX_SLOTS,
            Semantics::VectorPrefix,
            &format!("{name} dest mask, source mask, domain width, direction, window"),
        ));
    }
    forms
}

fn step_forms(name: &str) -> Vec<Form> {
    vec![
        form(1, &[F(Reg)], Semantics::Unary, &format!("{name} Rx")),
        form(2, &[F(Reg), Or(Imm)], Semantics::Accumulate, &format!("{name} Rx, Ry/constant")),
        vform(3, REPLICATE_SLOTS, Semantics::VectorUnary, &format!("{name} constant, mask, window")),
    ]
}

fn negate_forms(name: &str) -> Vec<Form> {
    vec![
        form(1, &[F(Reg)], Semantics::Unary, &format!("{name} Rx")),
        form(2, &[F(Reg), F(Reg)], Semantics::UnaryInto, &format!("{name} Rx, Ry")),
        vform(3, &[F(Mask), F(Lit8)], Semantics::VectorUnary, &format!("{name} mask, window")),
    ]
}

fn shift_forms(name: &str) -> Vec<Form> {
    vec![
        form(1, &[F(Reg), Or(Imm)], Semantics::Accumulate, &format!("{name} Rx, amount")),
        form(2, &[F(Reg), F(Reg), Or(Imm)], Semantics::ThreeAddress, &format!("{name} Rx, Ry, amount")),
        vform(3, REPLICATE_SLOTS, Semantics::VectorShift, &format!("{name} amount, mask, window")),
    ]
}

fn branch_forms(name: &str) -> Vec<Form> {
    vec![form(1, &[F(Addr)], Semantics::Direct, &format!("{name} label/address"))]
}

const N: Slot = Or(Lit16);
const COLOR: Slot = Or(Color);
const LAYER: Slot = F(Lit8);

fn graphics_forms(m: Mnemonic) -> Vec<Form> {
    let d = Semantics::Direct;
    match m {
        Mnemonic::STF => vec![
            form(1, &[N, N, N, COLOR], d, "STF x, y, width, color"),
            form(2, &[N, N, N, COLOR, LAYER], d, "STF x, y, width, color, layer"),
            form(3, &[N, N, N, N, COLOR, LAYER], d, "STF x, y, width, height, color, layer"),
            form(4, &[N, N, N, N, N, COLOR, LAYER], d, "STF x, y, width, height, angle, color, layer"),
            form(
                5,
                &[N, N, N, N, N, COLOR, COLOR, LAYER],
                d,
                "STF x, y, edge count, edge width, angle, interior color, border color, layer",
            ),
        ],
        Mnemonic::CLF => vec![
            form(1, &[LAYER], d, "CLF layer"),
            form(2, &[N, N, N, N, LAYER], d, "CLF x, y, width, height, layer"),
        ],
        Mnemonic::CPF | Mnemonic::MVF | Mnemonic::SWF => {
            let n = m.name();
            vec![
                form(1, &[N, N, N, N, LAYER, N, N], d, &format!("{n} x, y, width, height, layer, dest x, dest y")),
                form(
                    2,
                    &[N, N, N, N, LAYER, N, N, LAYER],
                    d,
                    &format!("{n} x, y, width, height, layer, dest x, dest y, dest layer"),
                ),
            ]
        }
        Mnemonic::RTF => vec![form(1, &[N, N, N, N, N, LAYER], d, "RTF x, y, width, height, angle, layer")],
        Mnemonic::FLF => vec![form(1, &[N, N, N, N, N, LAYER], d, "FLF x, y, width, height, axis, layer")],
        Mnemonic::SCF => vec![form(
            1,
            &[N, N, N, N, N, N, LAYER],
            d,
            "SCF x, y, width, height, numerator, denominator, layer",
        )],
        Mnemonic::LDF => vec![form(1, &[Or(Addr), N, N, LAYER], d, "LDF address, x, y, layer")],
        Mnemonic::SVF => vec![form(1, &[Or(Addr), N, N, N, N, LAYER], d, "SVF address, x, y, width, height, layer")],
        Mnemonic::CHF => vec![
            form(1, &[N, N, N, COLOR], d, "CHF x, y, character, color"),
            form(2, &[N, N, N, N, COLOR, LAYER], d, "CHF x, y, character, size, color, layer"),
        ],
        _ => unreachable!("{m} is not a graphics mnemonic"),
    }
}

fn repertoire() -> Vec<InstructionSpec> {
    use Mnemonic::*;
    use Semantics as S;

    let classes: &[(Class, &[Mnemonic])] = &[
        (Class::Load, &[LDI, LDA, LDR, LDX]),
        (Class::Store, &[STI, STA, STR]),
        (Class::Arith, &[ADD, SUB, MUL, DIV, INC, DEC, NEG, CMP]),
        (Class::Logic, &[IOR, AND, XOR, NOT]),
        (Class::Shift, &[SHL, SHR, ROL, ROR]),
        (Class::Move, &[MOV, SWP, SHV]),
        (Class::Branch, &[JMP, BEQ, BNE, BLT, BGE, JSR, RTS]),
        (Class::Stack, &[PSH, POP]),
        (Class::Graphics, &[STF, CLF, CPF, MVF, SWF, RTF, FLF, SCF, LDF, SVF, CHF]),
        (Class::Io, &[INP, OUT]),
        (Class::Control, &[NOP, HLT]),
    ];

    let mut specs = Vec::new();
    for &(class, members) in classes {
        for (code, &m) in members.iter().enumerate() {
            let n = m.name();
            let forms = match m {
                LDI => vec![
                    form(1, &[F(Reg), F(Imm)], S::Direct, "LDI Rx, constant/label"),
                    vform(2, REPLICATE_SLOTS, S::VectorUnary, "LDI constant, mask, window"),
                ],
                LDA => vec![form(1, &[F(Reg), F(Addr)], S::Direct, "LDA Rx, address")],
                LDR => vec![form(1, &[F(Reg), F(Reg)], S::Direct, "LDR Rx, Ry (address in Ry)")],
                LDX => vec![form(1, &[F(Reg), F(Reg), F(Addr)], S::Direct, "LDX Rx, Ry, offset")],
                STI => vec![form(1, &[F(Addr), F(LenImm)], S::Direct, "STI address, constant of any length")],
                STA => vec![form(1, &[F(Reg), F(Addr)], S::Direct, "STA Rx, address")],
                STR => vec![form(1, &[F(Reg), F(Reg)], S::Direct, "STR Rx, Ry (address in Ry)")],
                ADD | SUB | MUL => binary_forms(n, true, false),
                DIV => binary_forms(n, false, false),
                INC | DEC => step_forms(n),
                NEG | NOT => negate_forms(n),
                CMP => vec![
                    form(1, &[F(Reg), Or(Imm)], S::Accumulate, "CMP Rx, Ry/constant"),
                    vform(2, REPLICATE_SLOTS, S::Unsupported, "CMP constant, mask, window"),
                ],
                IOR | AND | XOR => binary_forms(n, true, true),
                SHL | SHR | ROL | ROR => shift_forms(n),
                MOV => {
                    let mut forms = vec![form(1, &[F(Reg), Or(Imm)], S::Direct, "MOV Rx, Ry/constant")];
                    for rows in 1..=8u8 {
                        let mut slots = vec![F(Lit8); rows as usize];
                        slots.push(F(Lit8));
                        forms.push(vform(
                            rows + 1,
                            &slots,
                            S::VectorMove,
                            &format!("MOV {rows} incidence row(s), window"),
                        ));
                    }
                    forms
                }
                SWP => vec![
                    form(1, &[F(Reg), F(Reg)], S::Direct, "SWP Rx, Ry"),
                    vform(2, &[F(Lit8), F(Mask), F(Lit8)], S::VectorFieldTransform, "SWP width, mask, window"),
                    form(3, &[F(Reg), F(Lit8)], S::FieldTransform, "SWP Rx, width"),
                ],
                SHV => vec![
                    form(1, &[F(Reg), F(Lit8)], S::FieldTransform, "SHV Rx, width"),
                    vform(2, &[F(Lit8), F(Mask), F(Lit8)], S::VectorFieldTransform, "SHV width, mask, window"),
                ],
                JMP | BEQ | BNE | BLT | BGE | JSR => branch_forms(n),
                RTS | NOP | HLT => nullary(n),
                PSH | POP | INP => vec![form(1, &[F(Reg)], S::Direct, &format!("{n} Rx"))],
                OUT => vec![form(1, &[Or(Imm)], S::Direct, "OUT Rx/constant")],
                STF | CLF | CPF | MVF | SWF | RTF | FLF | SCF | LDF | SVF | CHF => graphics_forms(m),
            };
            let scalar = Opcode(code as u8);
            let vector = forms.iter().any(|f| f.vector).then_some(Opcode(code as u8 | 0b1000));
            specs.push(InstructionSpec { mnemonic: m, class, scalar_opcode: scalar, vector_opcode: vector, forms });
        }
    }
    specs
}

#[cfg(test)]
mod tests {
    use super::*;
    use TokenClass::{Literal, Register};

    #[test]
    fn ior_codes_and_forms() {
        let ior = lookup_mnemonic("ior").unwrap();
        assert_eq!(ior.class_id(), ClassId(0b0011));
        assert_eq!(ior.scalar_opcode, Opcode(0b0000));
        assert_eq!(ior.vector_opcode, Some(Opcode(0b1000)));
        assert_eq!(ior.forms.len(), 4);
        let (spec, vector) = lookup_code(0b0011, 0b1000).unwrap();
        assert_eq!(spec.mnemonic, Mnemonic::IOR);
        assert!(vector);
        assert!(!lookup_code(0b0011, 0b0000).unwrap().1);
    }

    #[test]
    fn load_class_is_zero() {
        assert_eq!(lookup_mnemonic("LDI").unwrap().class_id(), ClassId(0));
    }

    #[test]
    fn hlt_has_no_extension() {
        let hlt = lookup_mnemonic("HLT").unwrap();
        assert!(hlt.is_zero_operand());
        assert_eq!(hlt.forms[0].ext_width_bits(), 0);
        assert_eq!(hlt.head_byte(&hlt.forms[0]), 0xF1);
    }

    #[test]
    fn unknown_lookups() {
        assert_eq!(lookup_mnemonic("FOO").unwrap_err(), IsaError::UnknownMnemonic("FOO".into()));
        assert!(matches!(lookup_code(0b1110, 0), Err(IsaError::UnknownOpcode { .. })));
        assert!(matches!(lookup_code(0b1111, 0b1111), Err(IsaError::UnknownOpcode { .. })));
    }

    #[test]
    fn ior_form_selection() {
        let ior = lookup_mnemonic("IOR").unwrap();
        let (f, ext) = ior.select_form(&[Register, Register]).unwrap();
        assert_eq!((f.index, ext.kinds, ext.bytes()), (1, 0, vec![0x10]));

        let (f, ext) = ior.select_form(&[Register, Literal, Literal]).unwrap();
        assert_eq!(f.index, 2);
        assert_eq!(ext.kinds, 0b0110_0000);
        assert_eq!(ext.bytes(), vec![0x26]);

        let (f, ext) = ior.select_form(&[TokenClass::Mask, TokenClass::Mask, Literal, Literal, Literal]).unwrap();
        assert_eq!(f.index, 4);
        assert!(f.vector);
        assert_eq!(ext.width_bits, 16);
        assert_eq!(ext.bytes(), vec![0x43, 0x80]);

        assert!(matches!(ior.select_form(&[Literal]), Err(IsaError::NoMatchingForm { .. })));
    }

    #[test]
    fn every_code_pair_round_trips() {
        for spec in isa().specs() {
            let (s, v) = lookup_code(spec.class as u8, spec.scalar_opcode.0).unwrap();
            assert_eq!((s.mnemonic, v), (spec.mnemonic, false));
            if let Some(op) = spec.vector_opcode {
                assert!(spec.scalar_opcode.0 < 0b1000);
                assert_eq!(op.0, spec.scalar_opcode.0 | 0b1000);
                let (s, v) = lookup_code(spec.class as u8, op.0).unwrap();
                assert_eq!((s.mnemonic, v), (spec.mnemonic, true));
            }
        }
    }

    #[test]
    fn extension_width_follows_arity() {
        for spec in isa().specs() {
            for f in &spec.forms {
                let expected = match f.arity() {
                    0 => 0,
                    1..=4 => 8,
                    _ => 16,
                };
                assert_eq!(f.ext_width_bits(), expected, "{} form {}", spec.mnemonic, f.index);
            }
        }
    }

    #[test]
    fn reference_has_one_line_per_form() {
        let text = isa().reference_jsonl();
        let forms: usize = isa().specs().iter().map(|s| s.forms.len()).sum();
        assert_eq!(text.lines().count(), forms);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["mnemonic"], "LDI");
    }
}

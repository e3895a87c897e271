//! Fetch-decode-execute over a [`MachineState`].

mod graphics;
pub mod vector;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{decode_at, Arg, DecodeError, Instruction};
use crate::isa::{isa, Mnemonic, Semantics};
use crate::machine::{
    mask, render_value, sign_extend, Flags, MachineState, MemoryError, RegisterError, StackError, TruncationWarning,
};
use crate::screen::ScreenError;

use vector::{FieldOp, PrefixOp, ShiftOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultKind {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("division by zero")]
    DivideByZero,
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error(transparent)]
    Screen(#[from] ScreenError),
    #[error("destination selects {dest} registers but source selects {src}")]
    SelectionMismatch { dest: usize, src: usize },
    #[error("domain width {domain} does not divide {selected}")]
    DomainMismatch { selected: usize, domain: usize },
    #[error("incidence row {row} ({value:08b}) has more than one bit set")]
    MalformedRow { row: usize, value: u8 },
    #[error("{0} form {1} is not supported by the engine")]
    UnsupportedForm(Mnemonic, u8),
    #[error("branch target {0} is not an instruction of the loaded program")]
    BadTarget(u64),
    #[error("PC {0} is outside the loaded program")]
    BadPc(u64),
    #[error("bad operand: {0}")]
    BadOperand(String),
}

/// Fatal error of one process.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("fault at PC {pc}{}: {kind}", .offset.map(|o| format!(" (offset {o})")).unwrap_or_default())]
pub struct Fault {
    pub pc: u64,
    pub offset: Option<u64>,
    #[serde(serialize_with = "as_text")]
    pub kind: FaultKind,
}

fn as_text<S: serde::Serializer>(k: &FaultKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&k.to_string())
}

/// Mapping between image offsets (what branch operands and return
/// addresses hold) and RAM byte addresses (what the PC holds).
pub trait CodeSpace {
    fn to_ram(&self, offset: u64) -> Option<u64>;
    fn to_image(&self, pc: u64) -> Option<u64>;
}

/// Code placed contiguously at byte address `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlatCode {
    pub base: u64,
    pub len: u64,
}

impl CodeSpace for FlatCode {
    fn to_ram(&self, offset: u64) -> Option<u64> {
        (offset <= self.len).then(|| self.base + offset)
    }

    fn to_image(&self, pc: u64) -> Option<u64> {
        pc.checked_sub(self.base).filter(|o| *o <= self.len)
    }
}

/// Instruction and cycle counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExecStats {
    pub instructions: u64,
    pub cycles: u64,
}

impl ExecStats {
    pub fn record(&mut self, cycles: u64) {
        self.instructions += 1;
        self.cycles += cycles;
    }

    /// Instructions per cycle as a reduced fraction.
    pub fn ipc_ratio(&self) -> (u64, u64) {
        let g = gcd(self.instructions, self.cycles).max(1);
        (self.instructions / g, self.cycles / g)
    }

    pub fn ipc(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.instructions as f64 / self.cycles as f64
        }
    }

    pub fn cpi(&self) -> f64 {
        if self.instructions == 0 {
            0.0
        } else {
            self.cycles as f64 / self.instructions as f64
        }
    }

    /// Modelled execution time in seconds at `clock_hz`.
    pub fn model_time_secs(&self, clock_hz: u64) -> f64 {
        self.cycles as f64 / clock_hz as f64
    }

    pub fn summary(&self, clock_hz: u64) -> StatsSummary {
        StatsSummary {
            instructions: self.instructions,
            cycles: self.cycles,
            ipc: (self.ipc() * 10_000.0).round() / 10_000.0,
            cpi: (self.cpi() * 10_000.0).round() / 10_000.0,
            clock_hz,
            model_time_s: self.model_time_secs(clock_hz),
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Serialized statistics block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatsSummary {
    pub instructions: u64,
    pub cycles: u64,
    pub ipc: f64,
    pub cpi: f64,
    pub clock_hz: u64,
    pub model_time_s: f64,
}

impl std::fmt::Display for StatsSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "instructions: {}", self.instructions)?;
        writeln!(f, "cycles:       {}", self.cycles)?;
        writeln!(f, "CPI:          {:.4}", self.cpi)?;
        writeln!(f, "IPC:          {:.4}", self.ipc)?;
        write!(f, "time:         {:.9} s at {} Hz", self.model_time_s, self.clock_hz)
    }
}

/// One executed instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub pc: u64,
    pub offset: u64,
    pub instruction: Instruction,
    pub length: usize,
    pub cycles: u64,
    pub halted: bool,
    /// (register, new value) for every register the instruction changed.
    pub changed: Vec<(usize, u64)>,
    pub warnings: Vec<TruncationWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Executed(Step),
    /// INP found the input queue empty; nothing changed.
    Blocked,
}

/// One trace line: cumulative cycles, PC, instruction, changed registers.
pub fn trace_line(step: &Step, total_cycles: u64, ms: &MachineState) -> String {
    let changes: Vec<String> = step
        .changed
        .iter()
        .map(|(r, v)| format!("R{r}={}", render_value(*v, ms.width(), ms.config.output_base)))
        .collect();
    let text = step.instruction.to_string();
    if changes.is_empty() {
        format!("{total_cycles:>8} {:08X}  {text}", step.pc)
    } else {
        format!("{total_cycles:>8} {:08X}  {text:<32} {}", step.pc, changes.join(" "))
    }
}

enum Flow {
    Next,
    Jump(u64),
    Halt,
    Block,
}

/// Executes the instruction at the PC.
pub fn step(ms: &mut MachineState, code: &dyn CodeSpace) -> Result<StepOutcome, Fault> {
    let pc = ms.ctx.pc;
    let offset = code.to_image(pc);
    let fault = |kind: FaultKind| Fault { pc, offset, kind };
    if offset.is_none() {
        return Err(fault(FaultKind::BadPc(pc)));
    }
    let endian = ms.config.endianness;
    let (instruction, length) = {
        let ram = &ms.ram;
        let fetch = |i: u64| ram.read_byte(i, endian).ok();
        decode_at(&fetch, pc, &ms.config).map_err(|e| fault(e.into()))?
    };
    let before = ms.ctx.spad.clone();
    // Under word-aligned placement the next instruction need not follow
    // byte-contiguously, so go through the image offset.
    let next_offset = offset.unwrap_or_default() + length as u64;
    let next_pc = code.to_ram(next_offset).unwrap_or(pc + length as u64);
    let mut warnings = Vec::new();
    let flow = execute(ms, &instruction, next_pc, code, &mut warnings).map_err(fault)?;

    let halted = match flow {
        Flow::Block => return Ok(StepOutcome::Blocked),
        Flow::Next => {
            ms.ctx.pc = next_pc;
            false
        }
        Flow::Jump(target) => {
            ms.ctx.pc = target;
            false
        }
        Flow::Halt => true,
    };
    let changed =
        ms.ctx.spad.iter().enumerate().filter(|(i, v)| before[*i] != **v).map(|(i, v)| (i, *v)).collect();
    let cycles = ms.config.cpi(instruction.mnemonic.name());
    Ok(StepOutcome::Executed(Step {
        pc,
        offset: offset.unwrap_or_default(),
        instruction,
        length,
        cycles,
        halted,
        changed,
        warnings,
    }))
}

fn reg_index(arg: &Arg) -> usize {
    arg.value() as usize
}

/// Register contents or literal value, unsigned.
fn operand(ms: &MachineState, arg: &Arg) -> Result<u64, FaultKind> {
    match arg {
        Arg::Register(r) => Ok(ms.reg(usize::from(*r))?),
        other => Ok(other.value() & mask(ms.width())),
    }
}

fn set_flags(ms: &mut MachineState, result: u64, carry: bool, overflow: bool) {
    let w = ms.width();
    ms.ctx.sr = Flags { z: result == 0, n: result >> (w - 1) & 1 == 1, c: carry, v: overflow };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AluOp {
    Add,
    Sub,
    Mul,
    Div,
    And,
    Ior,
    Xor,
}

/// W-bit arithmetic with condition codes: (result, carry, overflow).
fn alu(op: AluOp, a: u64, b: u64, w: u32) -> Result<(u64, bool, bool), FaultKind> {
    let m = mask(w);
    let (a, b) = (a & m, b & m);
    let (sa, sb) = (i128::from(sign_extend(a, w)), i128::from(sign_extend(b, w)));
    let min = -(1i128 << (w - 1));
    let max = (1i128 << (w - 1)) - 1;
    let fits = |v: i128| (min..=max).contains(&v);
    Ok(match op {
        AluOp::Add => {
            let full = u128::from(a) + u128::from(b);
            ((full as u64) & m, full > u128::from(m), !fits(sa + sb))
        }
        AluOp::Sub => (a.wrapping_sub(b) & m, a < b, !fits(sa - sb)),
        AluOp::Mul => {
            let full = u128::from(a) * u128::from(b);
            ((full as u64) & m, full > u128::from(m), !fits(sa * sb))
        }
        AluOp::Div => {
            if b == 0 {
                return Err(FaultKind::DivideByZero);
            }
            let q = sa / sb;
            ((q as u64) & m, false, !fits(q))
        }
        AluOp::And => (a & b, false, false),
        AluOp::Ior => (a | b, false, false),
        AluOp::Xor => (a ^ b, false, false),
    })
}

fn alu_op(m: Mnemonic) -> Option<AluOp> {
    Some(match m {
        Mnemonic::ADD | Mnemonic::INC => AluOp::Add,
        Mnemonic::SUB | Mnemonic::DEC | Mnemonic::CMP | Mnemonic::NEG => AluOp::Sub,
        Mnemonic::MUL => AluOp::Mul,
        Mnemonic::DIV => AluOp::Div,
        Mnemonic::AND => AluOp::And,
        Mnemonic::IOR => AluOp::Ior,
        Mnemonic::XOR | Mnemonic::NOT => AluOp::Xor,
        _ => return None,
    })
}

fn prefix_op(m: Mnemonic) -> Option<PrefixOp> {
    Some(match m {
        Mnemonic::ADD => PrefixOp::Add,
        Mnemonic::SUB => PrefixOp::Sub,
        Mnemonic::MUL => PrefixOp::Mul,
        Mnemonic::AND => PrefixOp::And,
        Mnemonic::IOR => PrefixOp::Ior,
        Mnemonic::XOR => PrefixOp::Xor,
        _ => return None,
    })
}

fn shift_op(m: Mnemonic) -> Option<ShiftOp> {
    Some(match m {
        Mnemonic::SHL => ShiftOp::Shl,
        Mnemonic::SHR => ShiftOp::Shr,
        Mnemonic::ROL => ShiftOp::Rol,
        Mnemonic::ROR => ShiftOp::Ror,
        _ => return None,
    })
}

fn field_op(m: Mnemonic) -> FieldOp {
    if m == Mnemonic::SHV {
        FieldOp::Shuffle
    } else {
        FieldOp::Swap
    }
}

/// Checks that every selected register exists.
fn checked_selection(ms: &MachineState, mask_byte: u64, window: u64) -> Result<Vec<usize>, FaultKind> {
    let sel = vector::selection(mask_byte as u8, window);
    if let Some(&bad) = sel.iter().find(|r| **r >= ms.ctx.spad.len()) {
        return Err(RegisterError::NoSuchRegister { index: bad, count: ms.ctx.spad.len() }.into());
    }
    Ok(sel)
}

/// Scalar single-operand transform: INC, DEC, NEG, NOT.
fn unary(ms: &mut MachineState, m: Mnemonic, v: u64, flags: bool) -> Result<u64, FaultKind> {
    let w = ms.width();
    let (r, c, o) = match m {
        Mnemonic::INC => alu(AluOp::Add, v, 1, w)?,
        Mnemonic::DEC => alu(AluOp::Sub, v, 1, w)?,
        Mnemonic::NEG => alu(AluOp::Sub, 0, v, w)?,
        Mnemonic::NOT => alu(AluOp::Xor, v, mask(w), w)?,
        other => return Err(FaultKind::UnsupportedForm(other, 0)),
    };
    if flags {
        set_flags(ms, r, c, o);
    }
    Ok(r)
}

fn execute(
    ms: &mut MachineState,
    ins: &Instruction,
    next_pc: u64,
    code: &dyn CodeSpace,
    warnings: &mut Vec<TruncationWarning>,
) -> Result<Flow, FaultKind> {
    use Mnemonic::*;
    let spec = isa().spec(ins.mnemonic);
    let form = spec.form(ins.form).ok_or(FaultKind::UnsupportedForm(ins.mnemonic, ins.form))?;
    let ops = &ins.operands;
    let w = ms.width();
    let m = ins.mnemonic;

    match form.semantics {
        Semantics::Unsupported => return Err(FaultKind::UnsupportedForm(m, ins.form)),
        Semantics::Nullary => {
            return Ok(match m {
                HLT => Flow::Halt,
                RTS => {
                    let ret = ms.ctx.stack.pop()?;
                    Flow::Jump(code.to_ram(ret).ok_or(FaultKind::BadTarget(ret))?)
                }
                _ => Flow::Next,
            })
        }
        Semantics::Accumulate | Semantics::ThreeAddress => {
            let rx = reg_index(&ops[0]);
            let (a, b) = if form.semantics == Semantics::Accumulate {
                (ms.reg(rx)?, operand(ms, &ops[1])?)
            } else {
                (operand(ms, &ops[1])?, operand(ms, &ops[2])?)
            };
            if let Some(op) = shift_op(m) {
                ms.set_reg(rx, vector::shift(op, a, b, w))?;
            } else {
                let op = alu_op(m).ok_or(FaultKind::UnsupportedForm(m, ins.form))?;
                let (r, c, o) = alu(op, a, b, w)?;
                set_flags(ms, r, c, o);
                if m != CMP {
                    ms.set_reg(rx, r)?;
                }
            }
        }
        Semantics::Unary => {
            let rx = reg_index(&ops[0]);
            let r = unary(ms, m, ms.reg(rx)?, true)?;
            ms.set_reg(rx, r)?;
        }
        Semantics::UnaryInto => {
            let r = unary(ms, m, operand(ms, &ops[1])?, true)?;
            ms.set_reg(reg_index(&ops[0]), r)?;
        }
        Semantics::BitPrefix => {
            let op = prefix_op(m).ok_or(FaultKind::UnsupportedForm(m, ins.form))?;
            let v = ms.reg(reg_index(&ops[1]))?;
            let r = vector::bit_prefix(v, ops[2].value(), ops[3].value(), op, w)?;
            ms.set_reg(reg_index(&ops[0]), r)?;
        }
        Semantics::VectorPrefix => {
            let op = prefix_op(m).ok_or(FaultKind::UnsupportedForm(m, ins.form))?;
            let window = ops[4].value();
            let dest = checked_selection(ms, ops[0].value(), window)?;
            let src = checked_selection(ms, ops[1].value(), window)?;
            if dest.len() != src.len() {
                return Err(FaultKind::SelectionMismatch { dest: dest.len(), src: src.len() });
            }
            let values = src.iter().map(|r| ms.reg(*r)).collect::<Result<Vec<_>, _>>()?;
            let out = vector::prefix_scatter(&values, ops[2].value() as usize, ops[3].value(), op, w)?;
            for (r, v) in dest.iter().zip(out) {
                ms.set_reg(*r, v)?;
            }
        }
        Semantics::VectorUnary => {
            // (constant, mask, window) or (mask, window)
            let (constant, sel) = if ops.len() == 3 {
                (Some(operand(ms, &ops[0])?), checked_selection(ms, ops[1].value(), ops[2].value())?)
            } else {
                (None, checked_selection(ms, ops[0].value(), ops[1].value())?)
            };
            for r in sel {
                let v = ms.reg(r)?;
                let out = match (m, constant) {
                    (LDI, Some(k)) => k,
                    (INC, Some(k)) => v.wrapping_add(k),
                    (DEC, Some(k)) => v.wrapping_sub(k),
                    (NEG, None) => 0u64.wrapping_sub(v),
                    (NOT, None) => !v,
                    _ => return Err(FaultKind::UnsupportedForm(m, ins.form)),
                };
                ms.set_reg(r, out)?;
            }
        }
        Semantics::VectorShift => {
            let op = shift_op(m).ok_or(FaultKind::UnsupportedForm(m, ins.form))?;
            let amount = operand(ms, &ops[0])?;
            let sel = checked_selection(ms, ops[1].value(), ops[2].value())?;
            let values = sel.iter().map(|r| ms.reg(*r)).collect::<Result<Vec<_>, _>>()?;
            for (r, v) in sel.iter().zip(vector::concat_shift(op, &values, amount, w)) {
                ms.set_reg(*r, v)?;
            }
        }
        Semantics::VectorMove => {
            let (rows, window) = ops.split_at(ops.len() - 1);
            let rows: Vec<u8> = rows.iter().map(|a| a.value() as u8).collect();
            let moves = vector::incidence_moves(&rows, window[0].value())?;
            let reads = moves.iter().map(|(_, s)| ms.reg(*s)).collect::<Result<Vec<_>, _>>()?;
            for ((d, _), v) in moves.iter().zip(reads) {
                ms.set_reg(*d, v)?;
            }
        }
        Semantics::FieldTransform => {
            let rx = reg_index(&ops[0]);
            let r = vector::field_transform(field_op(m), ms.reg(rx)?, ops[1].value(), w)?;
            ms.set_reg(rx, r)?;
        }
        Semantics::VectorFieldTransform => {
            let width = ops[0].value();
            for r in checked_selection(ms, ops[1].value(), ops[2].value())? {
                let v = vector::field_transform(field_op(m), ms.reg(r)?, width, w)?;
                ms.set_reg(r, v)?;
            }
        }
        Semantics::Direct => return direct(ms, ins, next_pc, code, warnings),
    }
    Ok(Flow::Next)
}

fn branch(code: &dyn CodeSpace, target: u64) -> Result<Flow, FaultKind> {
    Ok(Flow::Jump(code.to_ram(target).ok_or(FaultKind::BadTarget(target))?))
}

fn direct(
    ms: &mut MachineState,
    ins: &Instruction,
    next_pc: u64,
    code: &dyn CodeSpace,
    warnings: &mut Vec<TruncationWarning>,
) -> Result<Flow, FaultKind> {
    use Mnemonic::*;
    let ops = &ins.operands;
    let sr = ms.ctx.sr;
    match ins.mnemonic {
        LDI | MOV => {
            let v = operand(ms, &ops[1])?;
            ms.set_reg(reg_index(&ops[0]), v)?;
        }
        LDA | LDR | LDX => {
            let address = match ins.mnemonic {
                LDA => ops[1].value(),
                LDR => ms.reg(reg_index(&ops[1]))?,
                _ => ms.reg(reg_index(&ops[1]))?.wrapping_add(ops[2].value()),
            };
            warnings.extend(ms.load_register_from_ram(reg_index(&ops[0]), address)?);
        }
        STA | STR => {
            let address = match ins.mnemonic {
                STA => ops[1].value(),
                _ => ms.reg(reg_index(&ops[1]))?,
            };
            ms.store_register_to_ram(reg_index(&ops[0]), address)?;
        }
        STI => {
            let Arg::Literal { bytes, .. } = &ops[1] else {
                return Err(FaultKind::BadOperand("STI payload".into()));
            };
            store_payload(ms, ops[0].value(), bytes)?;
        }
        SWP => {
            let (a, b) = (reg_index(&ops[0]), reg_index(&ops[1]));
            let (va, vb) = (ms.reg(a)?, ms.reg(b)?);
            ms.set_reg(a, vb)?;
            ms.set_reg(b, va)?;
        }
        JMP => return branch(code, ops[0].value()),
        BEQ if sr.z => return branch(code, ops[0].value()),
        BNE if !sr.z => return branch(code, ops[0].value()),
        BLT if sr.n != sr.v => return branch(code, ops[0].value()),
        BGE if sr.n == sr.v => return branch(code, ops[0].value()),
        BEQ | BNE | BLT | BGE => {}
        JSR => {
            let ret = code.to_image(next_pc).ok_or(FaultKind::BadPc(next_pc))?;
            let flow = branch(code, ops[0].value())?;
            ms.ctx.stack.push(ret)?;
            return Ok(flow);
        }
        PSH => {
            let v = ms.reg(reg_index(&ops[0]))?;
            ms.ctx.stack.push(v)?;
        }
        POP => {
            let rx = reg_index(&ops[0]);
            ms.reg(rx)?;
            let v = ms.ctx.stack.pop()?;
            ms.set_reg(rx, v)?;
        }
        INP => {
            let rx = reg_index(&ops[0]);
            ms.reg(rx)?;
            match ms.input.pop_front() {
                Some(v) => ms.set_reg(rx, v)?,
                None => return Ok(Flow::Block),
            }
        }
        OUT => {
            let v = operand(ms, &ops[0])?;
            let text = render_value(v, ms.width(), ms.config.output_base);
            ms.output.push_str(&text);
            ms.output.push('\n');
        }
        STF | CLF | CPF | MVF | SWF | RTF | FLF | SCF | LDF | SVF | CHF => graphics::execute(ms, ins)?,
        other => return Err(FaultKind::UnsupportedForm(other, ins.form)),
    }
    Ok(Flow::Next)
}

/// Writes a variable-length constant starting at word `address`. The
/// payload is read as one big number and split into M-bit words ordered
/// per the configured endianness; a payload shorter than a word is
/// zero-extended into it.
fn store_payload(ms: &mut MachineState, address: u64, payload: &[u8]) -> Result<(), FaultKind> {
    let per = ms.config.ram_bytes_per_word();
    let words = payload.len().div_ceil(per).max(1);
    let mut padded = vec![0u8; words * per - payload.len()];
    padded.extend_from_slice(payload);
    if words > 1 && ms.config.endianness == crate::machine::Endianness::None {
        return Err(MemoryError::EndianUnspecified {
            value_bits: (payload.len() * 8) as u32,
            word_bits: ms.config.ram_word_bits,
        }
        .into());
    }
    ms.ram.ensure_span(address, words)?;
    for (j, chunk) in padded.chunks(per).enumerate() {
        let v = chunk.iter().fold(0u64, |acc, b| acc << 8 | u64::from(*b));
        let slot = match ms.config.endianness {
            crate::machine::Endianness::Little => words - 1 - j,
            _ => j,
        };
        ms.ram.write(address + slot as u64, v)?;
    }
    Ok(())
}

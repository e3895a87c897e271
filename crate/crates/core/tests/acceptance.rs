//! Acceptance run: one pass/fail line per criterion, non-zero exit if any
//! fails. Oracles here are written independently of the library.

use std::collections::BTreeMap;
use std::panic;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use peel_core::bnf::{compile, parse_expr};
use peel_core::codec::{assemble_source, disassemble, ObjectImage};
use peel_core::debug::{Command, Language, Session};
use peel_core::exec::{step, ExecStats, FaultKind, FlatCode, StepOutcome};
use peel_core::machine::{sign_extend, Endianness, MachineConfig, MachineState};
use peel_core::os::{DeathCause, LoadMode, ProcessState, System, Tick};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn asm(src: &str, config: &MachineConfig) -> Result<ObjectImage, String> {
    assemble_source(src, config).map(|a| a.image).map_err(|e| format!("assembly failed: {e}"))
}

/// Copies the program to RAM at byte 0 and steps it to HLT.
fn run_flat(src: &str, config: MachineConfig) -> Result<(MachineState, ExecStats), String> {
    let image = asm(src, &config)?;
    let mut ms = MachineState::new(config).map_err(|e| e.to_string())?;
    let endian = ms.config.endianness;
    for (i, b) in image.bytes.iter().enumerate() {
        ms.ram.write_byte(i as u64, *b, endian).map_err(|e| e.to_string())?;
    }
    let code = FlatCode { base: 0, len: image.bytes.len() as u64 };
    let mut stats = ExecStats::default();
    for _ in 0..1_000_000 {
        match step(&mut ms, &code).map_err(|f| format!("fault: {f}"))? {
            StepOutcome::Executed(s) => {
                stats.record(s.cycles);
                if s.halted {
                    return Ok((ms, stats));
                }
            }
            StepOutcome::Blocked => return Err("blocked on input".into()),
        }
    }
    Err("no HLT within a million instructions".into())
}

fn run(src: &str) -> Result<MachineState, String> {
    run_flat(src, MachineConfig::default()).map(|r| r.0)
}

fn ldi_all(values: &[u64]) -> String {
    values.iter().enumerate().map(|(i, v)| format!("LDI R{i}, {v}; ")).collect()
}

fn c1_prefix_golden() -> Outcome {
    let t = Instant::now();
    let ms = run("LDI R0,3; LDI R1,7; LDI R3,35; ADD X07,XD0,0,0,0; HLT;")?;
    let took = t.elapsed();
    let got = &ms.ctx.spad[5..8];
    check!(got == [3, 10, 45], "R5..R7 = {got:?}");
    check!(took < Duration::from_secs(1), "took {took:?}");
    Ok(format!("R5=3 R6=10 R7=45 in {took:?}"))
}

fn c2_subdomain_golden() -> Outcome {
    let ms = run(&format!("{}ADD XFF,XFF,2,1,0; HLT;", ldi_all(&[27, 10, 6, 3, 10, 20, 30, 40])))?;
    let got = &ms.ctx.spad[..8];
    check!(got == [37, 10, 9, 3, 30, 20, 70, 40], "R0..R7 = {got:?}");
    Ok("R0..R7 = (37,10,9,3,30,20,70,40)".into())
}

fn c3_incidence_move() -> Outcome {
    let init: Vec<u64> = (1..=16).collect();
    let ms = run(&format!("{}MOV 2,8,4,1,0; HLT;", ldi_all(&init)))?;
    let got = &ms.ctx.spad[..8];
    check!(got == [7, 5, 6, 8, 5, 6, 7, 8], "window 0: R0..R7 = {got:?}");

    // window 1: four concurrent copies, all reads before any write
    let mut expected = init.clone();
    for (dst, src) in [(8, 14), (9, 12), (10, 13), (11, 15)] {
        expected[dst] = init[src];
    }
    let vector = run(&format!("{}MOV 2,8,4,1,1; HLT;", ldi_all(&init)))?;
    check!(vector.ctx.spad == expected, "window 1: {:?} != {expected:?}", vector.ctx.spad);
    let scalar = run(&format!("{}MOV R8,R14; MOV R9,R12; MOV R10,R13; MOV R11,R15; HLT;", ldi_all(&init)))?;
    check!(vector.ctx.spad == scalar.ctx.spad, "window 1 differs from the scalar moves");
    Ok("R0..R3 = 7,5,6,8; window 1 equals the four parallel moves".into())
}

fn c4_vector_inc() -> Outcome {
    let ms = run("INC 5,XAF,0; HLT;")?;
    let set: Vec<usize> = (0..ms.ctx.spad.len()).filter(|&i| ms.ctx.spad[i] != 0).collect();
    check!(set == [0, 2, 4, 5, 6, 7], "nonzero registers {set:?}");
    check!(set.iter().all(|&i| ms.ctx.spad[i] == 5), "values {:?}", &ms.ctx.spad[..8]);
    Ok("exactly R0,R2,R4,R5,R6,R7 = 5".into())
}

#[derive(Debug, PartialEq)]
enum Expect {
    Regs(Vec<u64>),
    SelectionMismatch(usize, usize),
    DomainMismatch(usize, usize),
}

const OPS: [&str; 6] = ["ADD", "SUB", "MUL", "AND", "IOR", "XOR"];

fn apply8(op: &str, a: u64, b: u64) -> u64 {
    let r = match op {
        "ADD" => a.wrapping_add(b),
        "SUB" => a.wrapping_sub(b),
        "MUL" => a.wrapping_mul(b),
        "AND" => a & b,
        "IOR" => a | b,
        "XOR" => a ^ b,
        _ => unreachable!(),
    };
    r & 0xFF
}

/// Brute force: each destination rank folds its own run of source values
/// from scratch.
fn prefix_oracle(regs: &[u64], dest: u8, src: u8, d: usize, dir: u8, op: &str) -> Expect {
    let pick = |m: u8| -> Vec<usize> { (0..8).filter(|i| (m >> (7 - i)) & 1 == 1).collect() };
    let (ds, ss) = (pick(dest), pick(src));
    if ds.len() != ss.len() {
        return Expect::SelectionMismatch(ds.len(), ss.len());
    }
    let n = ss.len();
    let mut out = regs.to_vec();
    if n == 0 {
        return Expect::Regs(out);
    }
    let width = if d == 0 { n } else { d };
    if n % width != 0 {
        return Expect::DomainMismatch(n, d);
    }
    for k in 0..n {
        let group = k / width * width;
        let ranks: Vec<usize> = if dir == 0 { (group..=k).collect() } else { (k..group + width).rev().collect() };
        let mut acc = regs[ss[ranks[0]]];
        for &r in &ranks[1..] {
            acc = apply8(op, acc, regs[ss[r]]);
        }
        out[ds[k]] = acc;
    }
    Expect::Regs(out)
}

fn c5_prefix_oracle() -> Outcome {
    let t = Instant::now();
    let config = MachineConfig { register_width_bits: 8, ..Default::default() };
    let mut ms = MachineState::new(config.clone()).map_err(|e| e.to_string())?;
    let endian = ms.config.endianness;
    let mut rng = StdRng::seed_from_u64(5);
    let (mut cases, mut mismatches) = (0u64, Vec::new());
    for op in OPS {
        for d in [0usize, 1, 2, 4] {
            for dir in [0u8, 1] {
                let image = asm(&format!("{op} XAB, XCD, {d}, {dir}, 0;"), &config)?;
                let len = image.bytes.len();
                check!(image.bytes[len - 5..len - 3] == [0xAB, 0xCD], "unexpected layout {:02X?}", image.bytes);
                for (i, b) in image.bytes.iter().enumerate() {
                    ms.ram.write_byte(i as u64, *b, endian).unwrap();
                }
                let code = FlatCode { base: 0, len: len as u64 };
                for pair in 0..=u16::MAX {
                    let (dest, src) = ((pair >> 8) as u8, pair as u8);
                    // every pair for ADD, equal-popcount pairs for the rest
                    if op != "ADD" && dest.count_ones() != src.count_ones() {
                        continue;
                    }
                    ms.ram.write_byte(len as u64 - 5, dest, endian).unwrap();
                    ms.ram.write_byte(len as u64 - 4, src, endian).unwrap();
                    for r in ms.ctx.spad.iter_mut() {
                        *r = rng.gen_range(0..256);
                    }
                    let before = ms.ctx.spad.clone();
                    ms.ctx.pc = 0;
                    let want = prefix_oracle(&before, dest, src, d, dir, op);
                    let got = match step(&mut ms, &code) {
                        Ok(_) => Expect::Regs(ms.ctx.spad.clone()),
                        Err(f) => match f.kind {
                            FaultKind::SelectionMismatch { dest, src } => Expect::SelectionMismatch(dest, src),
                            FaultKind::DomainMismatch { selected, domain } => Expect::DomainMismatch(selected, domain),
                            other => return Err(format!("{op} X{dest:02X},X{src:02X},{d},{dir}: {other}")),
                        },
                    };
                    cases += 1;
                    if got != want && mismatches.len() < 5 {
                        mismatches.push(format!("{op} X{dest:02X},X{src:02X},{d},{dir}: {got:?} != {want:?}"));
                    }
                }
            }
        }
    }
    let took = t.elapsed();
    check!(mismatches.is_empty(), "mismatches: {}", mismatches.join("; "));
    check!(took < Duration::from_secs(60), "took {took:?}");
    Ok(format!("{cases} cases, 0 mismatches in {took:.1?}"))
}

#[derive(Clone, Copy)]
enum K {
    /// register
    R,
    /// mask
    M,
    /// one-byte literal
    B,
    /// two-byte literal
    H,
    /// register-width immediate
    I,
    /// address literal
    A,
    /// color
    C,
    /// variable-length constant
    X,
    /// branch target
    T,
    RorI,
    RorH,
    RorC,
    RorA,
}

use K::*;

const TEMPLATES: &[(&str, &[K])] = &[
    ("LDI", &[R, I]),
    ("LDI", &[I, M, B]),
    ("LDA", &[R, A]),
    ("LDR", &[R, R]),
    ("LDX", &[R, R, A]),
    ("STI", &[A, X]),
    ("STA", &[R, A]),
    ("STR", &[R, R]),
    ("ADD", &[R, RorI]),
    ("ADD", &[R, RorI, RorI]),
    ("ADD", &[M, M, B, B, B]),
    ("SUB", &[R, RorI, RorI]),
    ("SUB", &[M, M, B, B, B]),
    ("MUL", &[R, RorI]),
    ("MUL", &[M, M, B, B, B]),
    ("DIV", &[R, RorI]),
    ("DIV", &[R, RorI, RorI]),
    ("INC", &[R]),
    ("INC", &[R, RorI]),
    ("INC", &[I, M, B]),
    ("DEC", &[R, RorI]),
    ("DEC", &[I, M, B]),
    ("NEG", &[R]),
    ("NEG", &[R, R]),
    ("NEG", &[M, B]),
    ("CMP", &[R, RorI]),
    ("CMP", &[I, M, B]),
    ("IOR", &[R, RorI, RorI]),
    ("IOR", &[R, R, B, B]),
    ("AND", &[R, RorI]),
    ("AND", &[M, M, B, B, B]),
    ("XOR", &[R, R, B, B]),
    ("NOT", &[R, R]),
    ("NOT", &[M, B]),
    ("SHL", &[R, RorI]),
    ("SHR", &[R, R, RorI]),
    ("ROL", &[I, M, B]),
    ("ROR", &[R, RorI]),
    ("MOV", &[R, RorI]),
    ("MOV", &[B, B]),
    ("MOV", &[B, B, B, B, B]),
    ("MOV", &[B, B, B, B, B, B, B, B, B]),
    ("SWP", &[R, R]),
    ("SWP", &[B, M, B]),
    ("SWP", &[R, B]),
    ("SHV", &[R, B]),
    ("SHV", &[B, M, B]),
    ("JMP", &[T]),
    ("BEQ", &[T]),
    ("BNE", &[T]),
    ("BLT", &[T]),
    ("BGE", &[T]),
    ("JSR", &[T]),
    ("RTS", &[]),
    ("PSH", &[R]),
    ("POP", &[R]),
    ("STF", &[RorH, RorH, RorH, RorC]),
    ("STF", &[RorH, RorH, RorH, RorC, B]),
    ("STF", &[RorH, RorH, RorH, RorH, RorC, B]),
    ("STF", &[RorH, RorH, RorH, RorH, RorH, RorC, B]),
    ("STF", &[RorH, RorH, RorH, RorH, RorH, RorC, RorC, B]),
    ("CLF", &[B]),
    ("CLF", &[RorH, RorH, RorH, RorH, B]),
    ("CPF", &[RorH, RorH, RorH, RorH, B, RorH, RorH]),
    ("MVF", &[RorH, RorH, RorH, RorH, B, RorH, RorH, B]),
    ("SWF", &[RorH, RorH, RorH, RorH, B, RorH, RorH]),
    ("RTF", &[RorH, RorH, RorH, RorH, RorH, B]),
    ("FLF", &[RorH, RorH, RorH, RorH, RorH, B]),
    ("SCF", &[RorH, RorH, RorH, RorH, RorH, RorH, B]),
    ("LDF", &[RorA, RorH, RorH, B]),
    ("SVF", &[RorA, RorH, RorH, RorH, RorH, B]),
    ("CHF", &[RorH, RorH, RorH, RorC]),
    ("CHF", &[RorH, RorH, RorH, RorH, RorC, B]),
    ("INP", &[R]),
    ("OUT", &[RorI]),
    ("NOP", &[]),
    ("HLT", &[]),
];

fn literal(kind: K, rng: &mut StdRng) -> String {
    match kind {
        B => rng.gen_range(0..=255u32).to_string(),
        H | A => rng.gen_range(0..=0xFFFFu32).to_string(),
        I => rng.gen::<u32>().to_string(),
        C => format!("0x{:08X}", rng.gen::<u32>()),
        X => {
            let n = rng.gen_range(1..=6);
            let hex: String = (0..n).map(|_| format!("{:02X}", rng.gen::<u8>())).collect();
            format!("0x{hex}")
        }
        _ => unreachable!(),
    }
}

/// A random valid program in canonical text, one statement per line.
fn random_program(rng: &mut StdRng) -> String {
    let n = rng.gen_range(1..=40);
    // label slots: before each instruction, plus one after the last
    let mut labels: Vec<Option<String>> = (0..=n).map(|_| None).collect();
    let mut names = Vec::new();
    for (i, slot) in labels.iter_mut().enumerate() {
        if i == 0 || rng.gen_bool(0.15) {
            let name = format!("lab{i}");
            names.push(name.clone());
            *slot = Some(name);
        }
    }
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate() {
        if let Some(l) = label {
            out.push_str(&format!("{l}:\n"));
        }
        if i == n {
            break;
        }
        let (mnemonic, kinds) = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
        let operands: Vec<String> = kinds
            .iter()
            .map(|&k| match k {
                R => format!("R{}", rng.gen_range(0..16)),
                M => format!("X{:02X}", rng.gen::<u8>()),
                T => names[rng.gen_range(0..names.len())].clone(),
                RorI | RorH | RorC | RorA if rng.gen_bool(0.5) => format!("R{}", rng.gen_range(0..16)),
                RorI => literal(I, rng),
                RorH => literal(H, rng),
                RorC => literal(C, rng),
                RorA => literal(A, rng),
                k => literal(k, rng),
            })
            .collect();
        if operands.is_empty() {
            out.push_str(&format!("{mnemonic};\n"));
        } else {
            out.push_str(&format!("{mnemonic} {};\n", operands.join(", ")));
        }
    }
    out
}

fn c6_codec_round_trip() -> Outcome {
    let config = MachineConfig::default();
    let mut rng = StdRng::seed_from_u64(6);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let text = random_program(&mut rng);
        let image = asm(&text, &config).map_err(|e| format!("case {case}: {e}\n{text}"))?;
        let listing = disassemble(&image, &config).map_err(|e| format!("case {case}: {e}"))?.to_string();
        if listing != text {
            failures.push(format!("case {case}: listing differs\n{text}---\n{listing}"));
        }
        let again = asm(&listing, &config)?;
        if again.bytes != image.bytes {
            failures.push(format!("case {case}: re-assembled bytes differ"));
        }
    }
    check!(failures.is_empty(), "{} failures, first: {}", failures.len(), failures[0]);
    Ok("1000 programs, 0 failures".into())
}

fn c7_endianness() -> Outcome {
    let mut seen = Vec::new();
    for (endianness, want) in [(Endianness::Little, [0x44, 0x33, 0x22, 0x11]), (Endianness::Big, [0x11, 0x22, 0x33, 0x44])] {
        let config = MachineConfig { ram_word_bits: 8, endianness, ..Default::default() };
        let ms = run_flat("LDI R0, 0x11223344; STA R0, 100; LDA R1, 100; HLT;", config)?.0;
        let bytes: Vec<u64> = (100..104).map(|a| ms.ram.read(a).unwrap()).collect();
        check!(bytes == want, "{endianness:?}: stored {bytes:02X?}");
        check!(ms.ctx.spad[1] == 0x1122_3344, "{endianness:?}: loaded {:08X}", ms.ctx.spad[1]);
        seen.push(format!("{endianness:?} {bytes:02X?}"));
    }
    Ok(seen.join(", "))
}

const THIRTY: &str = "
start:
    LDI R0, 0;
    LDI R1, 5;
    LDI R2, 0;
again:
    ADD R2, R1;
    INC R0;
    DEC R1;
    CMP R1, 0;
    BNE again;
    STA R2, 40000;
    JSR twice;
    STA R2, 40001;
    LDI 3, XFF, 0;
    ADD X0F, XF0, 0, 0, 0;
    PSH R7;
    POP R8;
    MUL R9, R8, 7;
    XOR R10, R9, R2;
    SHL R10, 3;
    NOT R11, R10;
    OUT R9;
    MOV 2, 8, 4, 1, 0;
    STI 40010, 0x0102030405;
    LDA R12, 40010;
    SUB R13, R12, R11;
    STA R13, 40002;
    BLT skip;
    NOP;
skip:
    HLT;
twice:
    ADD R2, R2;
    RTS;
";

struct LoadedRun {
    trace: Vec<String>,
    spad: Vec<u64>,
    rest: String,
    data: Vec<u64>,
    footprint: u64,
}

fn run_loaded(image: &ObjectImage, mode: LoadMode) -> Result<LoadedRun, String> {
    let mut sys = System::new(MachineConfig::default()).map_err(|e| e.to_string())?;
    let pid = sys.spawn(image.clone(), mode, None).map_err(|e| e.to_string())?;
    sys.admit(pid).map_err(|e| e.to_string())?;
    let mut trace = Vec::new();
    sys.run(100_000, |t, _| {
        if let Tick::Ran { step, .. } = t {
            trace.push(step.instruction.to_string());
        }
    });
    let p = sys.process(pid).map_err(|e| e.to_string())?;
    if p.state != ProcessState::Dead(DeathCause::Halted) {
        return Err(format!("{mode:?} ended {:?}", p.state));
    }
    let ctx = sys.context(pid).map_err(|e| e.to_string())?;
    let rest = format!(
        "sp={} sr={:?} stack={:?} out={:?} crcs={:?} stats={:?}",
        ctx.stack.sp(),
        ctx.sr,
        ctx.stack.live(),
        sys.machine.output,
        sys.machine.vram.layer_crcs(),
        p.stats
    );
    Ok(LoadedRun {
        trace,
        spad: ctx.spad.clone(),
        rest,
        data: sys.machine.ram.words()[1000..].to_vec(),
        footprint: p.layout.footprint_words(),
    })
}

fn c8_loader_equivalence() -> Outcome {
    let image = asm(THIRTY, &MachineConfig::default())?;
    check!(image.map.len() == 30, "program has {} instructions", image.map.len());
    let aligned = run_loaded(&image, LoadMode::WordAligned)?;
    let packed = run_loaded(&image, LoadMode::Packed)?;
    check!(aligned.trace == packed.trace, "traces differ");
    check!(aligned.spad == packed.spad, "registers differ");
    check!(aligned.rest == packed.rest, "state differs: {} vs {}", aligned.rest, packed.rest);
    check!(aligned.data == packed.data, "RAM outside the code differs");
    check!(
        aligned.footprint >= packed.footprint,
        "aligned footprint {} < packed {}",
        aligned.footprint,
        packed.footprint
    );
    Ok(format!(
        "{} traced instructions equal; footprint aligned {} >= packed {} words",
        aligned.trace.len(),
        aligned.footprint,
        packed.footprint
    ))
}

const PROC_A: &str = "LDI R0, 1; LDI R1, 2; ADD R0, R1; MUL R0, 3; STA R0, 50000; HLT;";
const PROC_B: &str = "LDI R0, 7; LDI R2, 9; SUB R2, R0; PSH R2; POP R3; HLT;";

fn c9_scheduler() -> Outcome {
    let config = MachineConfig { quantum_instructions: 2, ..Default::default() };
    let (a, b) = (asm(PROC_A, &config)?, asm(PROC_B, &config)?);
    check!(a.map.len() == 6 && b.map.len() == 6, "processes are not 6 instructions");

    let solo = |image: &ObjectImage| -> Result<Vec<u64>, String> {
        let mut sys = System::new(config.clone()).map_err(|e| e.to_string())?;
        let pid = sys.spawn(image.clone(), LoadMode::Packed, None).map_err(|e| e.to_string())?;
        sys.admit(pid).map_err(|e| e.to_string())?;
        sys.run(1000, |_, _| {});
        Ok(sys.context(pid).map_err(|e| e.to_string())?.spad.clone())
    };

    let mut sys = System::new(config.clone()).map_err(|e| e.to_string())?;
    let pa = sys.spawn(a.clone(), LoadMode::Packed, None).map_err(|e| e.to_string())?;
    let pb = sys.spawn(b.clone(), LoadMode::Packed, None).map_err(|e| e.to_string())?;
    sys.admit(pa).map_err(|e| e.to_string())?;
    sys.admit(pb).map_err(|e| e.to_string())?;
    let mut order = String::new();
    sys.run(1000, |t, _| {
        if let Tick::Ran { pid, .. } = t {
            order.push(if *pid == pa { 'A' } else { 'B' });
        }
    });
    check!(order == "AABBAABBAABB", "order {order}");
    check!(sys.context(pa).unwrap().spad == solo(&a)?, "process A registers differ from its solo run");
    check!(sys.context(pb).unwrap().spad == solo(&b)?, "process B registers differ from its solo run");
    Ok(format!("order {order}; SPADs match solo runs"))
}

#[derive(Clone, Debug)]
enum Tree {
    Num(i32),
    Var(usize),
    Neg(Box<Tree>),
    Bin(char, Box<Tree>, Box<Tree>),
}

fn eval(t: &Tree, vars: &[i32]) -> i32 {
    match t {
        Tree::Num(n) => *n,
        Tree::Var(i) => vars[*i],
        Tree::Neg(x) => eval(x, vars).wrapping_neg(),
        Tree::Bin(op, l, r) => {
            let (a, b) = (eval(l, vars), eval(r, vars));
            match op {
                '+' => a.wrapping_add(b),
                '-' => a.wrapping_sub(b),
                '*' => a.wrapping_mul(b),
                '/' => a / b,
                _ => unreachable!(),
            }
        }
    }
}

fn precedence(t: &Tree) -> u8 {
    match t {
        Tree::Bin('+' | '-', ..) => 1,
        Tree::Bin(..) => 2,
        _ => 3,
    }
}

/// Source text with only the parentheses the grammar needs.
fn show(t: &Tree) -> String {
    let wrap = |s: String, yes: bool| if yes { format!("({s})") } else { s };
    match t {
        Tree::Num(n) if *n < 0 => format!("({n})"),
        Tree::Num(n) => n.to_string(),
        Tree::Var(i) => format!("v{i}"),
        Tree::Neg(x) => format!("-{}", wrap(show(x), precedence(x) < 3)),
        Tree::Bin(op, l, r) => {
            let p = precedence(t);
            format!("{} {op} {}", wrap(show(l), precedence(l) < p), wrap(show(r), precedence(r) <= p))
        }
    }
}

fn gen_tree(rng: &mut StdRng, depth: u32, nvars: usize, vars: &[i32]) -> Tree {
    if depth == 0 || rng.gen_bool(0.25) {
        return if nvars > 0 && rng.gen_bool(0.3) {
            Tree::Var(rng.gen_range(0..nvars))
        } else {
            Tree::Num(rng.gen_range(-100..=100))
        };
    }
    match rng.gen_range(0..9) {
        0 => Tree::Neg(Box::new(gen_tree(rng, depth - 1, nvars, vars))),
        k => {
            let op = ['+', '-', '*', '/'][(k as usize - 1) % 4];
            let l = gen_tree(rng, depth - 1, nvars, vars);
            let mut r = gen_tree(rng, depth - 1, nvars, vars);
            if op == '/' {
                let (a, b) = (eval(&l, vars), eval(&r, vars));
                if b == 0 || a % b != 0 || (a == i32::MIN && b == -1) {
                    // fall back to a literal that divides exactly
                    let divisors: Vec<i32> = (1..=100).filter(|d| a % d == 0).collect();
                    let d = divisors[rng.gen_range(0..divisors.len())];
                    r = Tree::Num(if rng.gen_bool(0.5) && a != i32::MIN { -d } else { d });
                }
            }
            Tree::Bin(op, Box::new(l), Box::new(r))
        }
    }
}

/// Compiles, runs and returns each variable's final RAM value.
fn run_bnf(source: &str) -> Result<BTreeMap<String, i32>, String> {
    let config = MachineConfig::default();
    let program = parse_expr(source).map_err(|e| format!("parse: {e}"))?;
    let compiled = compile(&program, &config, None).map_err(|e| format!("compile: {e}"))?;
    let ms = run_flat(&compiled.assembly, config)?.0;
    let mut out = BTreeMap::new();
    for (name, addr) in &compiled.symbols {
        let (v, _) = ms.ram.load_value(*addr, 32, ms.config.endianness).map_err(|e| e.to_string())?;
        out.insert(name.clone(), sign_extend(v, 32) as i32);
    }
    Ok(out)
}

fn c10_bnf() -> Outcome {
    let vars = run_bnf("a=10; b=20; c=-5; d=2; e=a+2*(b+c)*d;")?;
    check!(vars.get("e") == Some(&70), "e = {:?}", vars.get("e"));

    let mut rng = StdRng::seed_from_u64(10);
    for case in 0..500 {
        let count = rng.gen_range(1..=4);
        let mut values = Vec::new();
        let mut source = String::new();
        for i in 0..count {
            let t = gen_tree(&mut rng, 6, i, &values);
            values.push(eval(&t, &values));
            source.push_str(&format!("v{i} = {};\n", show(&t)));
        }
        let got = run_bnf(&source).map_err(|e| format!("case {case}: {e}\n{source}"))?;
        for (i, want) in values.iter().enumerate() {
            let v = got.get(&format!("v{i}")).copied();
            check!(v == Some(*want), "case {case}: v{i} = {v:?}, evaluator says {want}\n{source}");
        }
    }
    Ok("e = 70; 500 random programs match the evaluator".into())
}

fn c11_metrics() -> Outcome {
    let mut config = MachineConfig::default();
    config.cpi_table.insert("LDI".into(), 2);
    let hz = config.clock_hz;
    let (_, stats) = run_flat("LDI R0, 1; LDI R1, 2; LDI R2, 3; HLT;", config)?;
    check!(stats.cycles == 7 && stats.instructions == 4, "cycles {} instructions {}", stats.cycles, stats.instructions);
    let ipc = stats.ipc();
    check!((ipc - 0.5714).abs() <= 0.00005, "IPC {ipc}");
    let model = stats.model_time_secs(hz);
    check!(model == 7.0 / hz as f64, "model time {model}");
    Ok(format!("cycles 7, instructions 4, IPC {ipc:.4}, model time {model} s at {hz} Hz"))
}

const SCENE: &str = "STF 20, 30, 7, 4, 0xFF0000FF, 0; STF 21, 31, 2, 2, 0x00FF00FF, 0; CHF 22, 30, 'F', 0x0000FFFF;";

fn layer0(src: &str) -> Result<Vec<u32>, String> {
    let ms = run(&format!("{src} HLT;"))?;
    Ok(ms.vram.layer(0).iter().map(|p| p.0).collect())
}

const HELLO: &str = "CHF 8, 8, 'H', WHITE; CHF 16, 8, 'e', WHITE; CHF 24, 8, 'l', WHITE; CHF 32, 8, 'l', WHITE;
    CHF 40, 8, 'o', WHITE; CHF 48, 8, ' ', WHITE; CHF 56, 8, 'W', WHITE; CHF 64, 8, 'o', WHITE;
    CHF 72, 8, 'r', WHITE; CHF 80, 8, 'l', WHITE; CHF 88, 8, 'd', WHITE; HLT;";

fn c12_screen() -> Outcome {
    let ms = run("STF 10, 10, 5, 0xFF0000FF; HLT;")?;
    let painted = ms.vram.painted(0);
    check!(painted == 25, "STF painted {painted} pixels");
    for y in 10..15 {
        for x in 10..15 {
            check!(ms.vram.get(0, x, y).is_some_and(|p| p.0 == 0xFF00_00FF), "pixel ({x},{y}) not painted");
        }
    }

    let base = layer0(SCENE)?;
    check!(base.iter().filter(|p| **p != 0).count() > 20, "scene is empty");
    let frame = "16, 24, 24, 16";
    let round = layer0(&format!("{SCENE} SVF 30000, {frame}, 0; CLF 0; LDF 30000, 16, 24, 0;"))?;
    check!(round == base, "SVF then LDF is not pixel-exact");
    for axis in [0, 1] {
        let once = layer0(&format!("{SCENE} FLF {frame}, {axis}, 0;"))?;
        check!(once != base, "FLF axis {axis} changed nothing");
        let twice = layer0(&format!("{SCENE} FLF {frame}, {axis}, 0; FLF {frame}, {axis}, 0;"))?;
        check!(twice == base, "FLF twice on axis {axis} is not the identity");
    }
    let swapped = layer0(&format!("{SCENE} SWF {frame}, 0, 100, 100;"))?;
    check!(swapped != base, "SWF changed nothing");
    check!(layer0(&format!("{SCENE} SWF {frame}, 0, 100, 100; SWF {frame}, 0, 100, 100;"))? == base, "SWF twice");
    check!(layer0(&format!("{SCENE} RTF {frame}, 360, 0;"))? == base, "RTF 360");
    let quarter = "RTF 16, 24, 16, 16, 90, 0;";
    check!(layer0(&format!("{SCENE} {quarter}"))? != base, "RTF 90 changed nothing");
    check!(layer0(&format!("{SCENE} {}", quarter.repeat(4)))? == base, "four RTF 90 are not the identity");

    let first = run(HELLO)?;
    let second = run(HELLO)?;
    let crc = first.vram.composite().crc();
    check!(crc == second.vram.composite().crc(), "composite CRC differs between runs");
    check!(first.vram.layer_crcs() == second.vram.layer_crcs(), "layer CRCs differ between runs");
    let boxes = (0..11)
        .filter(|i| {
            let x0 = 8 + 8 * i;
            (x0..x0 + 8).any(|x| (8..16).any(|y| first.vram.get(0, x, y).is_some_and(|p| p.0 != 0)))
        })
        .count();
    check!(boxes == 10, "{boxes} non-empty glyph boxes");
    Ok(format!("25 pixels; round trips and identities exact; composite CRC {crc:08X} stable; 10 glyph boxes"))
}

const RECURSIVE: &str = "
    LDI R0, 10;
    LDI R1, 0;
    JSR total;
    HLT;
total:
    CMP R0, 0;
    BEQ done;
    ADD R1, R0;
    DEC R0;
    JSR total;
done:
    RTS;
";

fn c13_call_return() -> Outcome {
    let config = MachineConfig::default();
    let fresh = MachineState::new(config.clone()).unwrap().ctx.stack.sp();
    let (ms, stats) = run_flat(RECURSIVE, config.clone())?;
    check!(ms.ctx.spad[1] == 55, "sum = {}", ms.ctx.spad[1]);
    check!(ms.ctx.stack.sp() == fresh, "SP {} != {fresh}", ms.ctx.stack.sp());
    check!(ms.ctx.stack.is_empty(), "stack not empty");

    let mut sys = System::new(config.clone()).unwrap();
    let pid = sys.spawn(asm("RTS;", &config)?, LoadMode::Packed, None).map_err(|e| e.to_string())?;
    sys.admit(pid).unwrap();
    let tick = sys.tick();
    check!(matches!(&tick, Tick::Faulted { fault, .. } if matches!(fault.kind, FaultKind::Stack(_))), "got {tick:?}");
    let state = &sys.process(pid).unwrap().state;
    check!(matches!(state, ProcessState::Dead(DeathCause::Faulted(_))), "state {state:?}");
    check!(sys.tick() == Tick::Finished, "scheduler did not settle");
    Ok(format!("depth 10 sum 55 in {} instructions, SP restored; empty RTS faults", stats.instructions))
}

/// Runs a 20-cycle program through a session and returns the final machine
/// view with the wall time of the execute command.
fn session_run(pacing: bool) -> Result<(serde_json::Value, Duration), String> {
    let mut s = Session::new(MachineConfig::default()).map_err(|e| e.to_string())?;
    let source = format!("{}HLT;", "NOP; ".repeat(19));
    let setup = [
        Command::SetClock { hz: 100, pacing: Some(pacing) },
        Command::LoadSource { source, language: Language::Asm },
        Command::Assemble,
        Command::LoadImage { mode: LoadMode::WordAligned, base_address: None, capo: None },
        Command::Spawn { pid: 1 },
    ];
    for cmd in setup {
        let name = cmd.name();
        s.handle(cmd).response.map_err(|e| format!("{name}: {e}"))?;
    }
    let result =
        s.handle(Command::Execute { pid: None, limit: None }).response.map_err(|e| format!("execute: {e}"))?;
    check!(result["cycles"] == 20, "ran {} cycles", result["cycles"]);
    let took = Duration::from_secs_f64(result["wall_s"].as_f64().ok_or("execute reported no wall time")?);
    let snap = s.snapshot();
    check!(snap.settings.pacing == pacing, "pacing setting not applied");
    Ok((serde_json::to_value(&snap.machine).map_err(|e| e.to_string())?, took))
}

fn c14_pacing() -> Outcome {
    let (paced, took) = session_run(true)?;
    let (free, _) = session_run(false)?;
    check!(paced == free, "snapshots differ:\n{paced}\n{free}");
    let secs = took.as_secs_f64();
    check!((0.16..=0.24).contains(&secs), "paced run took {secs:.3} s");
    Ok(format!("snapshots identical; paced 20 cycles at 100 Hz took {secs:.3} s"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("vector prefix golden", c1_prefix_golden),
        ("subdomain prefix golden", c2_subdomain_golden),
        ("incidence MOV golden", c3_incidence_move),
        ("vector INC golden", c4_vector_inc),
        ("prefix oracle", c5_prefix_oracle),
        ("codec round trips", c6_codec_round_trip),
        ("endianness", c7_endianness),
        ("loader equivalence", c8_loader_equivalence),
        ("scheduler", c9_scheduler),
        ("BNF compiler", c10_bnf),
        ("metrics", c11_metrics),
        ("screen", c12_screen),
        ("call/return", c13_call_return),
        ("pacing neutrality", c14_pacing),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Property checks for the ISA tables, codec, engine and screen.

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use peel_core::codec::assemble_source;
use peel_core::exec::vector::{prefix_scatter, PrefixOp};
use peel_core::exec::{step, FlatCode, StepOutcome};
use peel_core::isa::{isa, lookup_code, lookup_mnemonic, TokenClass};
use peel_core::machine::{MachineConfig, MachineState};
use peel_core::screen::{Frame, Pixel, Vram};

/// A machine with `src` loaded at byte 0, ready to be stepped repeatedly.
struct Loaded {
    ms: MachineState,
    code: FlatCode,
}

impl Loaded {
    fn new(src: &str, config: MachineConfig) -> Loaded {
        let image = assemble_source(src, &config).unwrap().image;
        let mut ms = MachineState::new(config).unwrap();
        let endian = ms.config.endianness;
        for (i, b) in image.bytes.iter().enumerate() {
            ms.ram.write_byte(i as u64, *b, endian).unwrap();
        }
        Loaded { ms, code: FlatCode { base: 0, len: image.bytes.len() as u64 } }
    }

    /// Runs from the top until HLT; returns the cycle count.
    fn run(&mut self) -> u64 {
        self.ms.ctx.pc = 0;
        let mut cycles = 0;
        loop {
            match step(&mut self.ms, &self.code).unwrap() {
                StepOutcome::Executed(s) => {
                    cycles += s.cycles;
                    if s.halted {
                        return cycles;
                    }
                }
                StepOutcome::Blocked => panic!("blocked"),
            }
        }
    }
}

const MNEMONICS: &[&str] = &[
    "LDI", "LDA", "LDR", "LDX", "STI", "STA", "STR", "ADD", "SUB", "MUL", "DIV", "INC", "DEC", "NEG", "CMP", "IOR",
    "AND", "XOR", "NOT", "SHL", "SHR", "ROL", "ROR", "MOV", "SWP", "SHV", "JMP", "BEQ", "BNE", "BLT", "BGE", "JSR",
    "RTS", "PSH", "POP", "STF", "CLF", "CPF", "MVF", "SWF", "RTF", "FLF", "SCF", "LDF", "SVF", "CHF", "INP", "OUT",
    "NOP", "HLT",
];

#[test]
fn repertoire_resolves_and_codes_are_bijective() {
    for name in MNEMONICS {
        let spec = lookup_mnemonic(name).unwrap();
        let class = spec.class_id().0;
        let (back, vector) = lookup_code(class, spec.scalar_opcode.0).unwrap();
        assert_eq!(back.mnemonic, spec.mnemonic);
        assert!(!vector);
        if let Some(v) = spec.vector_opcode {
            assert!(spec.scalar_opcode.0 < 0b1000, "{name}");
            assert_eq!(v.0, spec.scalar_opcode.0 | 0b1000, "{name}");
            assert_eq!(lookup_code(class, v.0).unwrap().0.mnemonic, spec.mnemonic);
        }
    }
    assert_eq!(isa().specs().len(), MNEMONICS.len());
}

#[test]
fn forms_never_accept_the_same_operands() {
    let classes = [TokenClass::Register, TokenClass::Mask, TokenClass::Literal];
    for spec in isa().specs() {
        for arity in 0..=9usize {
            let forms: Vec<_> = spec.forms.iter().filter(|f| f.slots.len() == arity).collect();
            if forms.len() < 2 {
                continue;
            }
            for code in 0..3usize.pow(arity as u32) {
                let tokens: Vec<TokenClass> = (0..arity).map(|i| classes[code / 3usize.pow(i as u32) % 3]).collect();
                let accepting = forms
                    .iter()
                    .filter(|f| f.slots.iter().zip(&tokens).all(|(s, t)| s.accepts(*t)))
                    .count();
                assert!(accepting <= 1, "{} {tokens:?}", spec.mnemonic);
            }
        }
    }
}

proptest! {
    #[test]
    fn literals_wrap_to_their_field_with_one_warning(v in 0u64..(1 << 40), w in prop::sample::select(vec![8u32, 16, 32])) {
        let config = MachineConfig { register_width_bits: w, ..Default::default() };
        let asm = assemble_source(&format!("LDI R0, {v};"), &config).unwrap();
        let bytes = &asm.image.bytes[asm.image.bytes.len() - (w / 8) as usize..];
        let field = bytes.iter().fold(0u64, |acc, b| acc << 8 | u64::from(*b));
        prop_assert_eq!(field, v % (1 << w));
        prop_assert_eq!(asm.warnings.len(), usize::from(v >= 1 << w));
    }

    #[test]
    fn reversing_sources_and_direction_mirrors_the_result(
        values in prop::collection::vec(0u64..256, 1..=8),
        domain in prop::sample::select(vec![0usize, 1, 2, 4]),
        op in prop::sample::select(vec![PrefixOp::Add, PrefixOp::Sub, PrefixOp::Mul, PrefixOp::Xor]),
    ) {
        let n = values.len();
        prop_assume!(domain == 0 || n % domain == 0);
        let forward = prefix_scatter(&values, domain, 0, op, 8).unwrap();
        let reversed: Vec<u64> = values.iter().rev().copied().collect();
        let backward = prefix_scatter(&reversed, domain, 1, op, 8).unwrap();
        for k in 0..n {
            prop_assert_eq!(forward[k], backward[n - 1 - k]);
        }
    }

    #[test]
    fn vector_move_reads_every_source_first(
        rows in prop::collection::vec(prop::sample::select(vec![0u8, 1, 2, 4, 8, 16, 32, 64, 128]), 1..=8),
        window in 0u64..2,
        seed in any::<u64>(),
    ) {
        let listed: Vec<String> = rows.iter().map(u8::to_string).collect();
        let mut m = Loaded::new(&format!("MOV {}, {window}; HLT;", listed.join(", ")), MachineConfig::default());
        let mut rng = StdRng::seed_from_u64(seed);
        for r in m.ms.ctx.spad.iter_mut() {
            *r = rng.gen::<u32>().into();
        }
        let before = m.ms.ctx.spad.clone();
        m.run();

        // the row copies in a random order, all reading the pre-state
        let base = window as usize * 8;
        let mut copies: Vec<(usize, usize)> = rows
            .iter()
            .enumerate()
            .filter(|(_, row)| **row != 0)
            .map(|(r, row)| (base + r, base + row.leading_zeros() as usize))
            .collect();
        for i in (1..copies.len()).rev() {
            copies.swap(i, rng.gen_range(0..=i));
        }
        let mut expected = before.clone();
        for (dst, src) in copies {
            expected[dst] = before[src];
        }
        prop_assert_eq!(m.ms.ctx.spad.clone(), expected);
    }

    #[test]
    fn vector_inc_then_dec_restores(k in 0u64..1000, mask in any::<u8>(), window in 0u64..2, seed in any::<u64>()) {
        let src = format!("INC {k}, X{mask:02X}, {window}; DEC {k}, X{mask:02X}, {window}; HLT;");
        let mut m = Loaded::new(&src, MachineConfig::default());
        let mut rng = StdRng::seed_from_u64(seed);
        for r in m.ms.ctx.spad.iter_mut() {
            *r = rng.gen::<u32>().into();
        }
        let before = m.ms.ctx.spad.clone();
        m.run();
        prop_assert_eq!(m.ms.ctx.spad.clone(), before);
    }

    #[test]
    fn cycles_sum_the_cpi_table(
        program in prop::collection::vec(prop::sample::select(vec!["NOP", "LDI R1, 9", "ADD R1, R2", "PSH R3", "POP R3"]), 0..30),
        cpi in prop::collection::vec(1u64..6, 4),
    ) {
        let mut config = MachineConfig::default();
        for (m, c) in ["NOP", "LDI", "ADD", "HLT"].iter().zip(&cpi) {
            config.cpi_table.insert(m.to_string(), *c);
        }
        // keep pushes and pops balanced so the stack never underflows
        let mut depth = 0i32;
        let mut src = String::new();
        let mut expected = 0;
        for ins in &program {
            let ins = match *ins {
                "POP R3" if depth == 0 => "PSH R3",
                "POP R3" => { depth -= 1; "POP R3" }
                "PSH R3" => { depth += 1; "PSH R3" }
                other => other,
            };
            src.push_str(ins);
            src.push_str("; ");
            expected += config.cpi(ins.split(' ').next().unwrap());
        }
        src.push_str("HLT;");
        expected += config.cpi("HLT");
        let mut m = Loaded::new(&src, config);
        prop_assert_eq!(m.run(), expected);
    }
}

#[test]
fn flags_agree_with_wide_arithmetic() {
    let mut rng = StdRng::seed_from_u64(3);
    for op in ["ADD", "SUB", "MUL", "AND", "IOR", "XOR", "CMP"] {
        let mut m = Loaded::new(&format!("{op} R0, R1; HLT;"), MachineConfig::default());
        for _ in 0..10_000 {
            // bias towards edge values so carries and zeros show up
            let pick = |rng: &mut StdRng| match rng.gen_range(0..4) {
                0 => [0u64, 1, 0x7FFF_FFFF, 0x8000_0000, 0xFFFF_FFFF][rng.gen_range(0..5)],
                _ => u64::from(rng.gen::<u32>()),
            };
            let (a, b) = (pick(&mut rng), pick(&mut rng));
            m.ms.ctx.spad[0] = a;
            m.ms.ctx.spad[1] = b;
            m.run();
            let (sa, sb) = (i128::from(a as u32 as i32), i128::from(b as u32 as i32));
            let (ua, ub) = (i128::from(a), i128::from(b));
            let (wide, carry, signed) = match op {
                "ADD" => (ua + ub, Some(ua + ub > 0xFFFF_FFFF), Some(sa + sb)),
                "SUB" | "CMP" => (ua - ub, Some(ua < ub), Some(sa - sb)),
                "MUL" => (ua * ub, None, None),
                "AND" => (ua & ub, Some(false), None),
                "IOR" => (ua | ub, Some(false), None),
                _ => (ua ^ ub, Some(false), None),
            };
            let result = (wide & 0xFFFF_FFFF) as u64;
            let sr = m.ms.ctx.sr;
            let ctx = format!("{op} {a:#x} {b:#x}");
            assert_eq!(sr.z, result == 0, "Z {ctx}");
            assert_eq!(sr.n, result >> 31 == 1, "N {ctx}");
            if let Some(c) = carry {
                assert_eq!(sr.c, c, "C {ctx}");
            }
            if let Some(s) = signed {
                assert_eq!(sr.v, !(-(1i128 << 31)..(1i128 << 31)).contains(&s), "V {ctx}");
            }
            let kept = if op == "CMP" { a } else { result };
            assert_eq!(m.ms.ctx.spad[0], kept, "{ctx}");
        }
    }
}

#[derive(Debug, Clone)]
enum Draw {
    Fill(i64, i64, i64, i64, u32),
    Clear(i64, i64, i64, i64),
    Copy(i64, i64, i64, i64, i64, i64),
    Move(i64, i64, i64, i64, i64, i64),
    Swap(i64, i64, i64, i64, i64, i64),
    Rotate(i64, i64, i64, i64, i64),
    Flip(i64, i64, i64, i64, i64),
    Scale(i64, i64, i64, i64, i64, i64),
}

fn draw() -> impl Strategy<Value = Draw> {
    let c = || -400i64..700;
    let s = || 0i64..120;
    prop_oneof![
        (c(), c(), s(), s(), any::<u32>()).prop_map(|(x, y, w, h, p)| Draw::Fill(x, y, w, h, p)),
        (c(), c(), s(), s()).prop_map(|(x, y, w, h)| Draw::Clear(x, y, w, h)),
        (c(), c(), s(), s(), c(), c()).prop_map(|(x, y, w, h, a, b)| Draw::Copy(x, y, w, h, a, b)),
        (c(), c(), s(), s(), c(), c()).prop_map(|(x, y, w, h, a, b)| Draw::Move(x, y, w, h, a, b)),
        (c(), c(), s(), s(), c(), c()).prop_map(|(x, y, w, h, a, b)| Draw::Swap(x, y, w, h, a, b)),
        (c(), c(), s(), s(), -720i64..720).prop_map(|(x, y, w, h, a)| Draw::Rotate(x, y, w, h, a)),
        (c(), c(), s(), s(), 0i64..2).prop_map(|(x, y, w, h, a)| Draw::Flip(x, y, w, h, a)),
        (c(), c(), 0i64..40, 0i64..40, 1i64..4, 1i64..4).prop_map(|(x, y, w, h, n, d)| Draw::Scale(x, y, w, h, n, d)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graphics_clip_and_stay_on_their_layer(ops in prop::collection::vec(draw(), 1..12), layer in 0usize..8) {
        let mut v = Vram::new(320, 240, 8);
        for l in 0..8 {
            v.set_frame(Frame::new(l as i64 * 7, 3, 40, 30, l), Pixel(0x1020_30FF + l as u32)).unwrap();
        }
        let before: Vec<Vec<Pixel>> = (0..8).map(|l| v.layer(l).to_vec()).collect();
        let f = |x, y, w, h| Frame::new(x, y, w, h, layer);
        for op in ops {
            let r = match op {
                Draw::Fill(x, y, w, h, p) => v.set_frame(f(x, y, w, h), Pixel(p)),
                Draw::Clear(x, y, w, h) => v.clear_frame(f(x, y, w, h)),
                Draw::Copy(x, y, w, h, a, b) => v.copy_frame(f(x, y, w, h), a, b, layer),
                Draw::Move(x, y, w, h, a, b) => v.move_frame(f(x, y, w, h), a, b, layer),
                Draw::Swap(x, y, w, h, a, b) => v.swap_frames(f(x, y, w, h), f(a, b, w, h)),
                Draw::Rotate(x, y, w, h, a) => v.rotate_frame(f(x, y, w, h), a),
                Draw::Flip(x, y, w, h, a) => v.flip_frame(f(x, y, w, h), a),
                Draw::Scale(x, y, w, h, n, d) => v.scale_frame(f(x, y, w, h), n, d),
            };
            prop_assert!(r.is_ok(), "{:?}", r);
        }
        for (l, plane) in before.iter().enumerate() {
            if l != layer {
                prop_assert_eq!(v.layer(l), &plane[..], "layer {} changed", l);
            }
        }
    }
}

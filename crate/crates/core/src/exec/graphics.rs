//! Graphics instruction dispatch onto [`Vram`](crate::screen::Vram).

use crate::codec::{Arg, Instruction};
use crate::isa::{Mnemonic, OperandKind};
use crate::machine::{mask, sign_extend, MachineState};
use crate::screen::{Frame, Pixel};

use super::FaultKind;

/// Operand reader: register coordinates are sign-extended from W bits,
/// 16-bit literals are signed, addresses and colors are unsigned.
struct Ops<'a> {
    ms: &'a MachineState,
    args: &'a [Arg],
}

impl Ops<'_> {
    fn int(&self, i: usize) -> Result<i64, FaultKind> {
        match &self.args[i] {
            Arg::Register(r) => Ok(sign_extend(self.ms.reg(usize::from(*r))?, self.ms.width())),
            a @ Arg::Literal { kind: OperandKind::Lit16, .. } => Ok(a.signed_value()),
            a => Ok(a.value() as i64),
        }
    }

    fn unsigned(&self, i: usize) -> Result<u64, FaultKind> {
        match &self.args[i] {
            Arg::Register(r) => Ok(self.ms.reg(usize::from(*r))?),
            a => Ok(a.value()),
        }
    }

    fn color(&self, i: usize) -> Result<Pixel, FaultKind> {
        Ok(Pixel((self.unsigned(i)? & mask(32)) as u32))
    }

    fn layer(&self, i: usize) -> usize {
        self.args[i].value() as usize
    }

    fn frame(&self, first: usize, layer: usize) -> Result<Frame, FaultKind> {
        Ok(Frame::new(self.int(first)?, self.int(first + 1)?, self.int(first + 2)?, self.int(first + 3)?, layer))
    }
}

pub(super) fn execute(ms: &mut MachineState, ins: &Instruction) -> Result<(), FaultKind> {
    use Mnemonic::*;
    let o = Ops { ms, args: &ins.operands };
    let f = ins.form;
    // Gather everything first so the borrow of `ms` ends before drawing.
    let action: Box<dyn FnOnce(&mut MachineState) -> Result<(), FaultKind>> = match (ins.mnemonic, f) {
        (STF, 1 | 2) => {
            let layer = if f == 2 { o.layer(4) } else { 0 };
            let fr = Frame::new(o.int(0)?, o.int(1)?, o.int(2)?, o.int(2)?, layer);
            let c = o.color(3)?;
            Box::new(move |ms| Ok(ms.vram.set_frame(fr, c)?))
        }
        (STF, 3) => {
            let (fr, c) = (o.frame(0, o.layer(5))?, o.color(4)?);
            Box::new(move |ms| Ok(ms.vram.set_frame(fr, c)?))
        }
        (STF, 4) => {
            let (fr, angle, c) = (o.frame(0, o.layer(6))?, o.int(4)?, o.color(5)?);
            Box::new(move |ms| Ok(ms.vram.set_rotated_frame(fr, angle, c)?))
        }
        (STF, 5) => {
            let (x, y, n, edge, angle) = (o.int(0)?, o.int(1)?, o.int(2)?, o.int(3)?, o.int(4)?);
            let (ic, bc, l) = (o.color(5)?, o.color(6)?, o.layer(7));
            Box::new(move |ms| Ok(ms.vram.set_polygon(x, y, n, edge, angle, ic, bc, l)?))
        }
        (CLF, 1) => {
            let l = o.layer(0);
            Box::new(move |ms| Ok(ms.vram.clear_layer(l)?))
        }
        (CLF, 2) => {
            let fr = o.frame(0, o.layer(4))?;
            Box::new(move |ms| Ok(ms.vram.clear_frame(fr)?))
        }
        (CPF | MVF | SWF, 1 | 2) => {
            let fr = o.frame(0, o.layer(4))?;
            let (dx, dy) = (o.int(5)?, o.int(6)?);
            let dl = if f == 2 { o.layer(7) } else { fr.layer };
            match ins.mnemonic {
                CPF => Box::new(move |ms| Ok(ms.vram.copy_frame(fr, dx, dy, dl)?)),
                MVF => Box::new(move |ms| Ok(ms.vram.move_frame(fr, dx, dy, dl)?)),
                _ => {
                    let other = Frame { x: dx, y: dy, layer: dl, ..fr };
                    Box::new(move |ms| Ok(ms.vram.swap_frames(fr, other)?))
                }
            }
        }
        (RTF, 1) => {
            let (fr, angle) = (o.frame(0, o.layer(5))?, o.int(4)?);
            Box::new(move |ms| Ok(ms.vram.rotate_frame(fr, angle)?))
        }
        (FLF, 1) => {
            let (fr, axis) = (o.frame(0, o.layer(5))?, o.int(4)?);
            Box::new(move |ms| Ok(ms.vram.flip_frame(fr, axis)?))
        }
        (SCF, 1) => {
            let (fr, num, den) = (o.frame(0, o.layer(6))?, o.int(4)?, o.int(5)?);
            Box::new(move |ms| Ok(ms.vram.scale_frame(fr, num, den)?))
        }
        (LDF, 1) => {
            let (addr, x, y, l) = (o.unsigned(0)?, o.int(1)?, o.int(2)?, o.layer(3));
            Box::new(move |ms| {
                let endian = ms.config.endianness;
                ms.vram.load_frame(&ms.ram, addr, x, y, l, endian)?;
                Ok(())
            })
        }
        (SVF, 1) => {
            let addr = o.unsigned(0)?;
            let fr = o.frame(1, o.layer(5))?;
            Box::new(move |ms| {
                let endian = ms.config.endianness;
                Ok(ms.vram.save_frame(&mut ms.ram, addr, fr, endian)?)
            })
        }
        (CHF, 1) => {
            let (x, y, ch, c) = (o.int(0)?, o.int(1)?, o.int(2)?, o.color(3)?);
            Box::new(move |ms| Ok(ms.vram.draw_char(x, y, ch, 1, c, 0)?))
        }
        (CHF, 2) => {
            let (x, y, ch, size, c, l) = (o.int(0)?, o.int(1)?, o.int(2)?, o.int(3)?, o.color(4)?, o.layer(5));
            Box::new(move |ms| Ok(ms.vram.draw_char(x, y, ch, size, c, l)?))
        }
        (m, f) => return Err(FaultKind::UnsupportedForm(m, f)),
    };
    action(ms)
}

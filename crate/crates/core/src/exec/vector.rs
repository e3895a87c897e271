//! Register-set and bit-level transforms used by the vector forms.
//!
//! Everything here is a pure function over plain values so the engine and
//! the tests share no hidden state.

use num_bigint::BigUint;

use crate::machine::mask;

use super::FaultKind;

/// Combining operator of a prefix form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixOp {
    Add,
    Sub,
    Mul,
    And,
    Ior,
    Xor,
}

impl PrefixOp {
    pub fn apply(self, acc: u64, v: u64, width: u32) -> u64 {
        let m = mask(width);
        match self {
            PrefixOp::Add => acc.wrapping_add(v) & m,
            PrefixOp::Sub => acc.wrapping_sub(v) & m,
            PrefixOp::Mul => acc.wrapping_mul(v) & m,
            PrefixOp::And => acc & v,
            PrefixOp::Ior => acc | v,
            PrefixOp::Xor => acc ^ v,
        }
    }
}

/// Registers picked by `mask` inside 8-register `window`, ascending. The
/// most significant mask bit selects the lowest register of the window.
pub fn selection(mask: u8, window: u64) -> Vec<usize> {
    (0..8).filter(|i| mask & (0x80 >> i) != 0).map(|i| window as usize * 8 + i).collect()
}

/// Prefix combination over `values` (ascending source order), restarting
/// every `domain` values (`0` = one domain). Direction 0 runs ascending,
/// direction 1 descending; the result is indexed like the destination
/// registers, ascending.
pub fn prefix_scatter(
    values: &[u64],
    domain: usize,
    direction: u64,
    op: PrefixOp,
    width: u32,
) -> Result<Vec<u64>, FaultKind> {
    let n = values.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let d = if domain == 0 { n } else { domain };
    if n % d != 0 {
        return Err(FaultKind::DomainMismatch { selected: n, domain });
    }
    if direction > 1 {
        return Err(FaultKind::BadOperand(format!("prefix direction {direction}")));
    }
    let mut out = vec![0; n];
    for start in (0..n).step_by(d) {
        let order: Vec<usize> = if direction == 0 {
            (start..start + d).collect()
        } else {
            (start..start + d).rev().collect()
        };
        let mut acc = None;
        for i in order {
            let next = match acc {
                None => values[i] & mask(width),
                Some(a) => op.apply(a, values[i], width),
            };
            acc = Some(next);
            out[i] = next;
        }
    }
    Ok(out)
}

/// Prefix over the bits of `value`, split into fields of `split` bits
/// (`0` = whole register). Direction 0 scans each field from its most
/// significant bit, direction 1 from its least significant bit.
pub fn bit_prefix(value: u64, split: u64, direction: u64, op: PrefixOp, width: u32) -> Result<u64, FaultKind> {
    let field = if split == 0 { u64::from(width) } else { split };
    if u64::from(width) % field != 0 {
        return Err(FaultKind::DomainMismatch { selected: width as usize, domain: split as usize });
    }
    if direction > 1 {
        return Err(FaultKind::BadOperand(format!("prefix direction {direction}")));
    }
    let field = field as u32;
    let mut out = 0u64;
    for f in 0..width / field {
        // bit positions of this field, most significant first
        let hi = width - 1 - f * field;
        let positions: Vec<u32> = (0..field).map(|k| hi - k).collect();
        let scan: Box<dyn Iterator<Item = &u32>> =
            if direction == 0 { Box::new(positions.iter()) } else { Box::new(positions.iter().rev()) };
        let mut acc: Option<u64> = None;
        for &p in scan {
            let bit = value >> p & 1;
            let next = match acc {
                None => bit,
                Some(a) => op.apply(a, bit, 1),
            };
            acc = Some(next);
            out |= next << p;
        }
    }
    Ok(out)
}

/// Concurrent moves described by incidence rows inside `window`. Returns
/// `(destination, source)` pairs; all sources must be read before any
/// destination is written.
pub fn incidence_moves(rows: &[u8], window: u64) -> Result<Vec<(usize, usize)>, FaultKind> {
    let base = window as usize * 8;
    let mut moves = Vec::new();
    for (r, &row) in rows.iter().enumerate() {
        match row.count_ones() {
            0 => {}
            1 => moves.push((base + r, base + row.leading_zeros() as usize)),
            _ => return Err(FaultKind::MalformedRow { row: r, value: row }),
        }
    }
    Ok(moves)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftOp {
    Shl,
    Shr,
    Rol,
    Ror,
}

pub fn shift(op: ShiftOp, value: u64, amount: u64, width: u32) -> u64 {
    let m = mask(width);
    let w = u64::from(width);
    let value = value & m;
    match op {
        ShiftOp::Shl if amount >= w => 0,
        ShiftOp::Shr if amount >= w => 0,
        ShiftOp::Shl => (value << amount) & m,
        ShiftOp::Shr => value >> amount,
        ShiftOp::Rol | ShiftOp::Ror => {
            let k = amount % w;
            if k == 0 {
                return value;
            }
            let k = if op == ShiftOp::Rol { k } else { w - k };
            ((value << k) | (value >> (w - k))) & m
        }
    }
}

/// Shift or rotate of the selected registers read as one string, the
/// lowest-indexed register holding the most significant bits.
pub fn concat_shift(op: ShiftOp, values: &[u64], amount: u64, width: u32) -> Vec<u64> {
    if values.is_empty() {
        return Vec::new();
    }
    let total = values.len() as u64 * u64::from(width);
    let mut joined = BigUint::from(0u8);
    for v in values {
        joined = (joined << width) | BigUint::from(*v & mask(width));
    }
    let all = (BigUint::from(1u8) << total) - 1u8;
    let shifted = match op {
        ShiftOp::Shl if amount >= total => BigUint::from(0u8),
        ShiftOp::Shr if amount >= total => BigUint::from(0u8),
        ShiftOp::Shl => (joined << amount) & &all,
        ShiftOp::Shr => joined >> amount,
        ShiftOp::Rol | ShiftOp::Ror => {
            let k = amount % total;
            let k = if op == ShiftOp::Rol { k } else { (total - k) % total };
            if k == 0 {
                joined
            } else {
                ((&joined << k) | (&joined >> (total - k))) & &all
            }
        }
    };
    let word = BigUint::from(mask(width));
    (0..values.len())
        .map(|i| {
            let from_lsb = (values.len() - 1 - i) as u64 * u64::from(width);
            let part = (&shifted >> from_lsb) & &word;
            part.iter_u64_digits().next().unwrap_or(0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldOp {
    /// Exchange neighbouring fields: 0↔1, 2↔3, …
    Swap,
    /// Perfect shuffle: interleave the upper and lower halves.
    Shuffle,
}

/// Permutes the `field_bits`-wide fields of a register, fields counted
/// from the most significant end.
pub fn field_transform(op: FieldOp, value: u64, field_bits: u64, width: u32) -> Result<u64, FaultKind> {
    let w = u64::from(width);
    if field_bits == 0 || w % (2 * field_bits) != 0 {
        return Err(FaultKind::BadOperand(format!("field width {field_bits} for a {width}-bit register")));
    }
    let n = (w / field_bits) as usize;
    let fb = field_bits as u32;
    let fields: Vec<u64> = (0..n).map(|k| value >> (width - (k as u32 + 1) * fb) & mask(fb)).collect();
    let permuted: Vec<u64> = match op {
        FieldOp::Swap => (0..n).map(|k| fields[k ^ 1]).collect(),
        FieldOp::Shuffle => (0..n).map(|k| if k % 2 == 0 { fields[k / 2] } else { fields[n / 2 + k / 2] }).collect(),
    };
    Ok(permuted.iter().enumerate().fold(0u64, |acc, (k, f)| acc | f << (width - (k as u32 + 1) * fb)))
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number representations offered for every storage view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Base {
    Bin,
    Oct,
    Udec,
    #[serde(alias = "dec")]
    Sdec,
    Bcd,
    Hex,
    Float754,
}

impl FromStr for Base {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "bin" => Base::Bin,
            "oct" => Base::Oct,
            "udec" => Base::Udec,
            "sdec" | "dec" => Base::Sdec,
            "bcd" => Base::Bcd,
            "hex" => Base::Hex,
            "float754" | "float" => Base::Float754,
            other => return Err(format!("unknown base `{other}`")),
        })
    }
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Base::Bin => "bin",
            Base::Oct => "oct",
            Base::Udec => "udec",
            Base::Sdec => "sdec",
            Base::Bcd => "bcd",
            Base::Hex => "hex",
            Base::Float754 => "float754",
        };
        f.write_str(s)
    }
}

pub fn mask(width_bits: u32) -> u64 {
    if width_bits >= 64 {
        u64::MAX
    } else {
        (1u64 << width_bits) - 1
    }
}

/// Interprets the low `width_bits` of `value` as two's complement.
pub fn sign_extend(value: u64, width_bits: u32) -> i64 {
    if width_bits >= 64 {
        value as i64
    } else {
        let shift = 64 - width_bits;
        ((value << shift) as i64) >> shift
    }
}

/// Fixed-width text for a stored value. Total: invalid BCD nibbles render
/// as `?`, and float views of widths other than 32/64 render as `?`.
pub fn render_value(value: u64, width_bits: u32, base: Base) -> String {
    let v = value & mask(width_bits);
    let w = width_bits as usize;
    match base {
        Base::Bin => format!("{v:0w$b}"),
        Base::Oct => format!("{v:0width$o}", width = w.div_ceil(3)),
        Base::Hex => format!("{v:0width$X}", width = w / 4),
        Base::Udec => v.to_string(),
        Base::Sdec => sign_extend(v, width_bits).to_string(),
        Base::Bcd => (0..w / 4)
            .rev()
            .map(|i| match (v >> (i * 4)) & 0xF {
                d @ 0..=9 => char::from(b'0' + d as u8),
                _ => '?',
            })
            .collect(),
        Base::Float754 => match width_bits {
            32 => format!("{:?}", f32::from_bits(v as u32)),
            64 => format!("{:?}", f64::from_bits(v)),
            _ => "?".to_string(),
        },
    }
}

//! Machine code as numbers: one line per instruction, one token per byte.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::ObjectImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumericBase {
    Bin,
    Oct,
    Dec,
    Hex,
}

impl NumericBase {
    fn radix(self) -> u32 {
        match self {
            NumericBase::Bin => 2,
            NumericBase::Oct => 8,
            NumericBase::Dec => 10,
            NumericBase::Hex => 16,
        }
    }

    fn format(self, b: u8) -> String {
        match self {
            NumericBase::Bin => format!("{b:08b}"),
            NumericBase::Oct => format!("{b:03o}"),
            NumericBase::Dec => b.to_string(),
            NumericBase::Hex => format!("{b:02X}"),
        }
    }
}

impl FromStr for NumericBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bin" => Ok(NumericBase::Bin),
            "oct" => Ok(NumericBase::Oct),
            "dec" => Ok(NumericBase::Dec),
            "hex" => Ok(NumericBase::Hex),
            other => Err(format!("unknown numeric base `{other}`")),
        }
    }
}

impl fmt::Display for NumericBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NumericBase::Bin => "bin",
            NumericBase::Oct => "oct",
            NumericBase::Dec => "dec",
            NumericBase::Hex => "hex",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: `{token}` is not a byte in base {base}")]
pub struct NumericError {
    pub line: usize,
    pub token: String,
    pub base: NumericBase,
}

/// Renders each instruction of the image on its own line.
pub fn render_numeric(image: &ObjectImage, base: NumericBase) -> String {
    let mut out = String::new();
    for e in &image.map {
        let span = &image.bytes[e.offset as usize..(e.offset + e.length) as usize];
        let tokens: Vec<String> = span.iter().map(|b| base.format(*b)).collect();
        out.push_str(&tokens.join(" "));
        out.push('\n');
    }
    out
}

/// Reads machine code written as whitespace-separated byte values. Line
/// breaks carry no meaning; `//` starts a comment.
pub fn read_numeric(text: &str, base: NumericBase) -> Result<Vec<u8>, NumericError> {
    let mut bytes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_text = line.split("//").next().unwrap_or("");
        for token in line_text.split_whitespace() {
            let value = u8::from_str_radix(token, base.radix())
                .map_err(|_| NumericError { line: i + 1, token: token.to_string(), base })?;
            bytes.push(value);
        }
    }
    Ok(bytes)
}

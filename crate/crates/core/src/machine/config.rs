use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::render::Base;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    Little,
    Big,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StackDirection {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

/// Geometry and policy of one simulated machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineConfig {
    pub register_width_bits: u32,
    pub spad_count: usize,
    pub ram_word_bits: u32,
    pub ram_word_count: usize,
    pub stack_word_bits: u32,
    pub stack_depth: usize,
    pub stack_direction: StackDirection,
    pub endianness: Endianness,
    pub screen_width_px: u32,
    pub screen_height_px: u32,
    pub layer_count: usize,
    pub pixel_size: u32,
    pub clock_hz: u64,
    /// Cycles per instruction by mnemonic; absent mnemonics cost one cycle.
    pub cpi_table: BTreeMap<String, u64>,
    pub quantum_instructions: u64,
    /// Base used when OUT renders a value.
    pub output_base: Base,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            register_width_bits: 32,
            spad_count: 16,
            ram_word_bits: 32,
            ram_word_count: 65536,
            stack_word_bits: 32,
            stack_depth: 1024,
            stack_direction: StackDirection::Descending,
            endianness: Endianness::Big,
            screen_width_px: 320,
            screen_height_px: 240,
            layer_count: 8,
            pixel_size: 1,
            clock_hz: 1_000_000,
            cpi_table: BTreeMap::new(),
            quantum_instructions: 4,
            output_base: Base::Sdec,
        }
    }
}

const WIDTHS: [u32; 4] = [8, 16, 32, 64];

impl MachineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if !WIDTHS.contains(&self.register_width_bits) {
            return err(format!("register width {} not in {{8,16,32,64}}", self.register_width_bits));
        }
        if !WIDTHS.contains(&self.ram_word_bits) {
            return err(format!("RAM word width {} not in {{8,16,32,64}}", self.ram_word_bits));
        }
        if !WIDTHS.contains(&self.stack_word_bits) {
            return err(format!("stack word width {} not in {{8,16,32,64}}", self.stack_word_bits));
        }
        if !(8..=256).contains(&self.spad_count) || self.spad_count % 8 != 0 {
            return err(format!("spad_count {} must be a multiple of 8 in [8, 256]", self.spad_count));
        }
        if self.ram_word_count == 0 || self.stack_depth == 0 {
            return err("RAM and STACK sizes must be positive".into());
        }
        if self.screen_width_px == 0 || self.screen_height_px == 0 || self.pixel_size == 0 {
            return err("screen dimensions must be positive".into());
        }
        if self.layer_count == 0 {
            return err("layer_count must be at least 1".into());
        }
        if self.clock_hz == 0 || self.quantum_instructions == 0 {
            return err("clock_hz and quantum_instructions must be positive".into());
        }
        Ok(())
    }

    /// Bytes occupied by an immediate operand.
    pub fn imm_bytes(&self) -> usize {
        (self.register_width_bits / 8) as usize
    }

    /// Bytes occupied by an address operand: enough for the RAM word count.
    pub fn addr_bytes(&self) -> usize {
        let bits = usize::BITS - (self.ram_word_count.max(2) - 1).leading_zeros();
        (bits as usize).div_ceil(8).max(1)
    }

    pub fn ram_bytes_per_word(&self) -> usize {
        (self.ram_word_bits / 8) as usize
    }

    pub fn cpi(&self, mnemonic: &str) -> u64 {
        self.cpi_table.get(mnemonic).copied().unwrap_or(1)
    }

    /// Two-byte fingerprint stored in object files: (W in bits, A in bytes).
    pub fn fingerprint(&self) -> [u8; 2] {
        [self.register_width_bits as u8, self.addr_bytes() as u8]
    }
}

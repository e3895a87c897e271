//! Storage fabric of the simulated computer: SPAD registers, RAM, VRAM,
//! STACK and the control registers.

mod config;
mod memory;
mod render;
mod stack;

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

pub use config::{ConfigError, Endianness, MachineConfig, StackDirection};
pub use memory::{DirtyRange, MemoryError, Ram};
pub use render::{mask, render_value, sign_extend, Base};
pub use stack::{Stack, StackError};

use crate::screen::Vram;

/// Condition codes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Flags {
    pub z: bool,
    pub n: bool,
    pub c: bool,
    pub v: bool,
}

/// Per-process part of the machine: saved and restored on context switch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpuContext {
    pub spad: Vec<u64>,
    pub stack: Stack,
    /// Byte address in RAM of the next instruction.
    pub pc: u64,
    pub sr: Flags,
}

impl CpuContext {
    pub fn new(config: &MachineConfig) -> CpuContext {
        CpuContext {
            spad: vec![0; config.spad_count],
            stack: Stack::new(config.stack_word_bits, config.stack_depth, config.stack_direction),
            pc: 0,
            sr: Flags::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegisterError {
    #[error("register R{index} does not exist (SPAD has {count})")]
    NoSuchRegister { index: usize, count: usize },
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Non-fatal diagnostic raised while moving data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TruncationWarning {
    pub address: u64,
    pub word: u64,
    pub kept: u64,
}

#[derive(Debug, Clone)]
pub struct MachineState {
    pub config: MachineConfig,
    pub ctx: CpuContext,
    pub ram: Ram,
    pub vram: Vram,
    pub input: VecDeque<u64>,
    pub output: String,
}

impl MachineState {
    pub fn new(config: MachineConfig) -> Result<MachineState, ConfigError> {
        config.validate()?;
        Ok(MachineState {
            ctx: CpuContext::new(&config),
            ram: Ram::new(config.ram_word_bits, config.ram_word_count),
            vram: Vram::new(config.screen_width_px, config.screen_height_px, config.layer_count),
            input: VecDeque::new(),
            output: String::new(),
            config,
        })
    }

    pub fn width(&self) -> u32 {
        self.config.register_width_bits
    }

    pub fn reg(&self, index: usize) -> Result<u64, RegisterError> {
        self.ctx
            .spad
            .get(index)
            .copied()
            .ok_or(RegisterError::NoSuchRegister { index, count: self.ctx.spad.len() })
    }

    /// Writes `value mod 2^W`.
    pub fn set_reg(&mut self, index: usize, value: u64) -> Result<(), RegisterError> {
        let count = self.ctx.spad.len();
        let w = self.width();
        let slot = self.ctx.spad.get_mut(index).ok_or(RegisterError::NoSuchRegister { index, count })?;
        *slot = value & mask(w);
        Ok(())
    }

    pub fn store_register_to_ram(&mut self, index: usize, address: u64) -> Result<(), RegisterError> {
        let value = self.reg(index)?;
        let w = self.width();
        self.ram.store_value(address, value, w, self.config.endianness)?;
        Ok(())
    }

    pub fn load_register_from_ram(
        &mut self,
        index: usize,
        address: u64,
    ) -> Result<Option<TruncationWarning>, RegisterError> {
        self.reg(index)?;
        let w = self.width();
        let (value, truncated) = self.ram.load_value(address, w, self.config.endianness)?;
        self.set_reg(index, value)?;
        Ok(truncated.then(|| TruncationWarning { address, word: self.ram.read(address).unwrap_or(0), kept: value }))
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            config: self.config.clone(),
            registers: self.ctx.spad.clone(),
            control: Control { pc: self.ctx.pc, sp: self.ctx.stack.sp() as u64, sr: self.ctx.sr },
            ram: self.ram.dirty_ranges(),
            stack: self.ctx.stack.live(),
            layer_crcs: self.vram.layer_crcs(),
            output: self.output.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Control {
    pub pc: u64,
    pub sp: u64,
    pub sr: Flags,
}

/// Deep, serializable copy of one machine for observers and tests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSnapshot {
    pub config: MachineConfig,
    pub registers: Vec<u64>,
    pub control: Control,
    pub ram: Vec<DirtyRange>,
    pub stack: Vec<u64>,
    pub layer_crcs: Vec<u32>,
    pub output: String,
}

impl StateSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine(w: u32, m: u32, endian: Endianness) -> MachineState {
        MachineState::new(MachineConfig {
            register_width_bits: w,
            ram_word_bits: m,
            ram_word_count: 256,
            endianness: endian,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn register_store_and_load() {
        let mut ms = machine(32, 8, Endianness::Little);
        ms.set_reg(1, 0x1122_3344).unwrap();
        ms.store_register_to_ram(1, 100).unwrap();
        assert_eq!(&ms.ram.words()[100..104], &[0x44, 0x33, 0x22, 0x11]);
        ms.load_register_from_ram(2, 100).unwrap();
        assert_eq!(ms.reg(2).unwrap(), 0x1122_3344);
    }

    #[test]
    fn narrow_load_warns() {
        let mut ms = machine(8, 32, Endianness::Big);
        ms.ram.write(9, 0x1FF).unwrap();
        let warning = ms.load_register_from_ram(0, 9).unwrap().unwrap();
        assert_eq!(warning.kept, 0xFF);
        assert_eq!(ms.reg(0).unwrap(), 0xFF);
    }

    #[test]
    fn register_bounds_and_width() {
        let mut ms = machine(8, 8, Endianness::Big);
        assert!(matches!(ms.set_reg(16, 1), Err(RegisterError::NoSuchRegister { .. })));
        ms.set_reg(0, 300).unwrap();
        assert_eq!(ms.reg(0).unwrap(), 44);
    }

    #[test]
    fn snapshot_json_has_sections() {
        let mut ms = machine(32, 32, Endianness::Big);
        ms.ram.write(4, 9).unwrap();
        let json: serde_json::Value = serde_json::from_str(&ms.snapshot().to_json()).unwrap();
        for key in ["config", "registers", "control", "ram", "stack", "layer_crcs", "output"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["ram"][0]["start"], 4);
        assert_eq!(json["layer_crcs"].as_array().unwrap().len(), 8);
    }
}

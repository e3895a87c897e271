//! Placing object images into RAM and tracking what sits where.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::ObjectImage;
use crate::exec::CodeSpace;
use crate::machine::{MachineState, MemoryError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadMode {
    /// Every instruction starts a fresh RAM word; the rest of its last
    /// word is zero-filled.
    #[default]
    WordAligned,
    /// Instructions are concatenated byte after byte across words.
    Packed,
}

impl std::str::FromStr for LoadMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "word_aligned" | "aligned" => Ok(LoadMode::WordAligned),
            "packed" => Ok(LoadMode::Packed),
            other => Err(format!("unknown load mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub mode: LoadMode,
    /// First RAM word of the program.
    pub base_address: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("image needs {needed} words from word {base} but RAM has {words}")]
    ImageTooLarge { base: u64, needed: u64, words: usize },
    #[error("words {start}..{end} overlap program {pid}")]
    OverlapsExistingEntry { start: u64, end: u64, pid: u32 },
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// One loaded program: RAM words `start..end` (end exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoreMapEntry {
    pub pid: u32,
    pub start: u64,
    pub end: u64,
    /// RAM byte address of the entry instruction.
    pub entry: u64,
}

impl CoreMapEntry {
    pub fn words(&self) -> u64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CoreMap {
    pub entries: Vec<CoreMapEntry>,
}

impl CoreMap {
    pub fn check(&self, start: u64, end: u64) -> Result<(), LoadError> {
        match self.entries.iter().find(|e| start < e.end && e.start < end) {
            Some(e) => Err(LoadError::OverlapsExistingEntry { start, end, pid: e.pid }),
            None => Ok(()),
        }
    }

    pub fn insert(&mut self, entry: CoreMapEntry) -> Result<(), LoadError> {
        self.check(entry.start, entry.end)?;
        self.entries.push(entry);
        self.entries.sort_by_key(|e| e.start);
        Ok(())
    }

    pub fn remove(&mut self, pid: u32) {
        self.entries.retain(|e| e.pid != pid);
    }

    pub fn occupied_words(&self) -> u64 {
        self.entries.iter().map(CoreMapEntry::words).sum()
    }

    /// Lowest free gap of `words` words at or after `from`.
    pub fn first_fit(&self, from: u64, words: u64) -> u64 {
        let mut start = from;
        for e in &self.entries {
            if start + words <= e.start {
                break;
            }
            start = start.max(e.end);
        }
        start
    }
}

impl fmt::Display for CoreMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>5} {:>10} {:>10} {:>10}", "pid", "start", "end", "entry")?;
        for e in &self.entries {
            writeln!(f, "{:>5} {:>10} {:>10} {:>10}", e.pid, e.start, e.end, e.entry)?;
        }
        Ok(())
    }
}

/// Where each instruction of an image ended up in RAM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeLayout {
    to_ram: BTreeMap<u64, u64>,
    to_image: BTreeMap<u64, u64>,
    pub mode: LoadMode,
    pub start_word: u64,
    pub end_word: u64,
}

impl CodeSpace for CodeLayout {
    fn to_ram(&self, offset: u64) -> Option<u64> {
        self.to_ram.get(&offset).copied()
    }

    fn to_image(&self, pc: u64) -> Option<u64> {
        self.to_image.get(&pc).copied()
    }
}

impl CodeLayout {
    /// Computes placement without touching RAM. Returns the layout and the
    /// (image offset, RAM byte address) of every instruction.
    pub fn plan(image: &ObjectImage, options: LoadOptions, bytes_per_word: usize) -> CodeLayout {
        let per = bytes_per_word as u64;
        let base = options.base_address * per;
        let mut to_ram = BTreeMap::new();
        let mut cursor = base;
        for e in &image.map {
            to_ram.insert(u64::from(e.offset), cursor);
            cursor += u64::from(e.length);
            if options.mode == LoadMode::WordAligned {
                cursor = cursor.div_ceil(per) * per;
            }
        }
        to_ram.insert(image.bytes.len() as u64, cursor);
        let to_image = to_ram.iter().map(|(o, p)| (*p, *o)).collect();
        CodeLayout {
            to_ram,
            to_image,
            mode: options.mode,
            start_word: options.base_address,
            end_word: cursor.div_ceil(per).max(options.base_address),
        }
    }

    pub fn footprint_words(&self) -> u64 {
        self.end_word - self.start_word
    }

    /// RAM byte address of each instruction, in program order.
    pub fn instruction_addresses(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.to_ram.iter().map(|(o, p)| (*o, *p))
    }
}

/// Copies `image` into RAM and records it in `core_map` under `pid`.
pub fn load(
    image: &ObjectImage,
    options: LoadOptions,
    state: &mut MachineState,
    core_map: &mut CoreMap,
    pid: u32,
) -> Result<(CodeLayout, CoreMapEntry), LoadError> {
    let per = state.config.ram_bytes_per_word();
    let layout = CodeLayout::plan(image, options, per);
    let words = state.ram.len();
    if layout.end_word > words as u64 || options.base_address >= words as u64 {
        return Err(LoadError::ImageTooLarge {
            base: options.base_address,
            needed: layout.footprint_words(),
            words,
        });
    }
    core_map.check(layout.start_word, layout.end_word)?;

    let endian = state.config.endianness;
    for w in layout.start_word..layout.end_word {
        state.ram.write(w, 0)?;
    }
    for e in &image.map {
        let dest = layout.to_ram[&u64::from(e.offset)];
        let span = &image.bytes[e.offset as usize..(e.offset + e.length) as usize];
        for (k, b) in span.iter().enumerate() {
            state.ram.write_byte(dest + k as u64, *b, endian)?;
        }
    }
    let entry = CoreMapEntry {
        pid,
        start: layout.start_word,
        end: layout.end_word,
        entry: layout.to_ram(u64::from(image.entry_offset)).unwrap_or(layout.start_word * per as u64),
    };
    core_map.insert(entry)?;
    Ok((layout, entry))
}

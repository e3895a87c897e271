use serde::Serialize;
use thiserror::Error;

use super::config::Endianness;
use super::render::mask;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("address {address} out of range (RAM has {words} words)")]
    AddressOutOfRange { address: u64, words: usize },
    #[error("endianness `none` cannot move {value_bits}-bit values through {word_bits}-bit words")]
    EndianUnspecified { value_bits: u32, word_bits: u32 },
}

/// Word-addressed RAM of M-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ram {
    word_bits: u32,
    words: Vec<u64>,
    dirty: Vec<bool>,
}

/// Contiguous run of written words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirtyRange {
    pub start: usize,
    pub words: Vec<u64>,
}

impl Ram {
    pub fn new(word_bits: u32, word_count: usize) -> Ram {
        Ram { word_bits, words: vec![0; word_count], dirty: vec![false; word_count] }
    }

    pub fn word_bits(&self) -> u32 {
        self.word_bits
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    fn check(&self, address: u64, count: usize) -> Result<usize, MemoryError> {
        let oob = MemoryError::AddressOutOfRange { address, words: self.words.len() };
        let start = usize::try_from(address).map_err(|_| oob.clone())?;
        match start.checked_add(count) {
            Some(end) if end <= self.words.len() => Ok(start),
            _ => Err(oob),
        }
    }

    pub fn read(&self, address: u64) -> Result<u64, MemoryError> {
        let i = self.check(address, 1)?;
        Ok(self.words[i])
    }

    /// Writes `value mod 2^M`.
    pub fn write(&mut self, address: u64, value: u64) -> Result<(), MemoryError> {
        let i = self.check(address, 1)?;
        self.words[i] = value & mask(self.word_bits);
        self.dirty[i] = true;
        Ok(())
    }

    pub fn ensure_span(&self, address: u64, count: usize) -> Result<(), MemoryError> {
        self.check(address, count).map(|_| ())
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn dirty_ranges(&self) -> Vec<DirtyRange> {
        let mut out: Vec<DirtyRange> = Vec::new();
        for (i, _) in self.dirty.iter().enumerate().filter(|(_, d)| **d) {
            match out.last_mut() {
                Some(r) if r.start + r.words.len() == i => r.words.push(self.words[i]),
                _ => out.push(DirtyRange { start: i, words: vec![self.words[i]] }),
            }
        }
        out
    }

    fn bytes_per_word(&self) -> u64 {
        u64::from(self.word_bits / 8)
    }

    /// Position of byte `j` of a word counted from the most significant end
    /// under big order, from the least significant end under little order.
    fn byte_shift(&self, j: u64, endian: Endianness) -> u64 {
        match endian {
            Endianness::Little => j * 8,
            // Code bytes under `none` use big order.
            Endianness::Big | Endianness::None => (self.bytes_per_word() - 1 - j) * 8,
        }
    }

    /// Reads one byte of the byte-addressed view used for code.
    pub fn read_byte(&self, byte_address: u64, endian: Endianness) -> Result<u8, MemoryError> {
        let per = self.bytes_per_word();
        let word = self.read(byte_address / per)?;
        Ok((word >> self.byte_shift(byte_address % per, endian)) as u8)
    }

    pub fn write_byte(&mut self, byte_address: u64, byte: u8, endian: Endianness) -> Result<(), MemoryError> {
        let per = self.bytes_per_word();
        let word_address = byte_address / per;
        let shift = self.byte_shift(byte_address % per, endian);
        let word = self.read(word_address)?;
        let updated = (word & !(0xFFu64 << shift)) | (u64::from(byte) << shift);
        self.write(word_address, updated)
    }

    /// Number of consecutive words a `value_bits`-wide value occupies.
    pub fn span_for(&self, value_bits: u32) -> usize {
        (value_bits / self.word_bits).max(1) as usize
    }

    /// Stores a `value_bits`-wide value starting at `address`, splitting it
    /// into M-bit chunks in endian order when it is wider than a word and
    /// zero-extending it when narrower.
    pub fn store_value(
        &mut self,
        address: u64,
        value: u64,
        value_bits: u32,
        endian: Endianness,
    ) -> Result<(), MemoryError> {
        let value = value & mask(value_bits);
        let m = self.word_bits;
        if value_bits <= m {
            return self.write(address, value);
        }
        let chunks = self.span_for(value_bits);
        self.check(address, chunks)?;
        let order = chunk_order(chunks, endian, value_bits, m)?;
        for (slot, chunk) in order.into_iter().enumerate() {
            self.write(address + slot as u64, (value >> (chunk as u32 * m)) & mask(m))?;
        }
        Ok(())
    }

    /// Inverse of [`Ram::store_value`]. The flag is set when a wide word
    /// had to be truncated to fit `value_bits`.
    pub fn load_value(&self, address: u64, value_bits: u32, endian: Endianness) -> Result<(u64, bool), MemoryError> {
        let m = self.word_bits;
        if value_bits <= m {
            let word = self.read(address)?;
            let v = word & mask(value_bits);
            return Ok((v, v != word));
        }
        let chunks = self.span_for(value_bits);
        self.check(address, chunks)?;
        let order = chunk_order(chunks, endian, value_bits, m)?;
        let mut value = 0u64;
        for (slot, chunk) in order.into_iter().enumerate() {
            value |= self.read(address + slot as u64)? << (chunk as u32 * m);
        }
        Ok((value, false))
    }
}

/// For each consecutive word slot, the index of the chunk (0 = least
/// significant) stored there.
fn chunk_order(chunks: usize, endian: Endianness, value_bits: u32, word_bits: u32) -> Result<Vec<usize>, MemoryError> {
    match endian {
        Endianness::Little => Ok((0..chunks).collect()),
        Endianness::Big => Ok((0..chunks).rev().collect()),
        Endianness::None => Err(MemoryError::EndianUnspecified { value_bits, word_bits }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wide_register_into_byte_ram() {
        let mut ram = Ram::new(8, 256);
        ram.store_value(100, 0x1122_3344, 32, Endianness::Little).unwrap();
        assert_eq!(&ram.words()[100..104], &[0x44, 0x33, 0x22, 0x11]);
        assert_eq!(ram.load_value(100, 32, Endianness::Little).unwrap(), (0x1122_3344, false));

        ram.store_value(100, 0x1122_3344, 32, Endianness::Big).unwrap();
        assert_eq!(&ram.words()[100..104], &[0x11, 0x22, 0x33, 0x44]);
        assert_eq!(ram.load_value(100, 32, Endianness::Big).unwrap(), (0x1122_3344, false));
    }

    #[test]
    fn narrow_register_zero_extends_and_truncates() {
        let mut ram = Ram::new(32, 16);
        for endian in [Endianness::Little, Endianness::Big, Endianness::None] {
            ram.store_value(5, 0xAB, 8, endian).unwrap();
            assert_eq!(ram.read(5).unwrap(), 0x0000_00AB);
        }
        ram.write(6, 0x1FF).unwrap();
        assert_eq!(ram.load_value(6, 8, Endianness::Big).unwrap(), (0xFF, true));
    }

    #[test]
    fn none_endianness() {
        let mut ram = Ram::new(8, 16);
        assert_eq!(
            ram.store_value(0, 1, 32, Endianness::None),
            Err(MemoryError::EndianUnspecified { value_bits: 32, word_bits: 8 })
        );
        let mut ram = Ram::new(32, 16);
        ram.store_value(0, 7, 32, Endianness::None).unwrap();
        assert_eq!(ram.load_value(0, 32, Endianness::None).unwrap(), (7, false));
    }

    #[test]
    fn bounds() {
        let mut ram = Ram::new(8, 4);
        assert!(matches!(ram.store_value(2, 0, 32, Endianness::Big), Err(MemoryError::AddressOutOfRange { .. })));
        assert!(ram.read(4).is_err());
        assert!(ram.write(3, 0x1FF).is_ok());
        assert_eq!(ram.read(3).unwrap(), 0xFF);
    }

    #[test]
    fn byte_view() {
        let mut ram = Ram::new(32, 4);
        for (i, b) in [0xAAu8, 0xBB, 0xCC, 0xDD].iter().enumerate() {
            ram.write_byte(i as u64, *b, Endianness::Big).unwrap();
        }
        assert_eq!(ram.read(0).unwrap(), 0xAABB_CCDD);
        assert_eq!(ram.read_byte(1, Endianness::Big).unwrap(), 0xBB);
        assert_eq!(ram.read_byte(1, Endianness::Little).unwrap(), 0xCC);
    }

    #[test]
    fn dirty_ranges_merge() {
        let mut ram = Ram::new(16, 32);
        ram.write(3, 1).unwrap();
        ram.write(4, 2).unwrap();
        ram.write(10, 3).unwrap();
        assert_eq!(
            ram.dirty_ranges(),
            vec![DirtyRange { start: 3, words: vec![1, 2] }, DirtyRange { start: 10, words: vec![3] }]
        );
    }

    fn widths() -> impl Strategy<Value = u32> {
        prop_oneof![Just(8u32), Just(16), Just(32), Just(64)]
    }

    proptest! {
        #[test]
        fn endian_round_trip(v: u64, w in widths(), m in widths(), little: bool) {
            prop_assume!(w >= m);
            let endian = if little { Endianness::Little } else { Endianness::Big };
            let mut ram = Ram::new(m, 16);
            ram.store_value(3, v, w, endian).unwrap();
            prop_assert_eq!(ram.load_value(3, w, endian).unwrap(), (v & mask(w), false));
        }

        #[test]
        fn little_and_big_are_reversed(v: u64, w in widths(), m in widths()) {
            prop_assume!(w > m);
            let k = (w / m) as usize;
            let mut a = Ram::new(m, 16);
            let mut b = Ram::new(m, 16);
            a.store_value(0, v, w, Endianness::Little).unwrap();
            b.store_value(0, v, w, Endianness::Big).unwrap();
            let mut rev = b.words()[..k].to_vec();
            rev.reverse();
            prop_assert_eq!(&a.words()[..k], &rev[..]);
        }

        #[test]
        fn stored_words_fit_width(v: u64, w in widths(), m in widths()) {
            let mut ram = Ram::new(m, 16);
            let _ = ram.store_value(0, v, w, Endianness::Little);
            prop_assert!(ram.words().iter().all(|x| *x <= mask(m)));
        }
    }
}

use thiserror::Error;

use super::config::StackDirection;
use super::render::mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StackError {
    #[error("stack overflow")]
    Overflow,
    #[error("stack underflow")]
    Underflow,
}

/// Hardware STACK with a configurable growth direction.
///
/// A descending stack starts with `sp == depth`, decrements before writing
/// and increments after reading. An ascending stack starts at 0, writes then
/// increments, and decrements then reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stack {
    word_bits: u32,
    direction: StackDirection,
    cells: Vec<u64>,
    sp: usize,
}

impl Stack {
    pub fn new(word_bits: u32, depth: usize, direction: StackDirection) -> Stack {
        let sp = match direction {
            StackDirection::Descending => depth,
            StackDirection::Ascending => 0,
        };
        Stack { word_bits, direction, cells: vec![0; depth], sp }
    }

    pub fn sp(&self) -> usize {
        self.sp
    }

    pub fn set_sp(&mut self, sp: usize) {
        self.sp = sp.min(self.cells.len());
    }

    pub fn cells(&self) -> &[u64] {
        &self.cells
    }

    pub fn direction(&self) -> StackDirection {
        self.direction
    }

    pub fn depth(&self) -> usize {
        self.cells.len()
    }

    /// Number of values currently on the stack.
    pub fn len(&self) -> usize {
        match self.direction {
            StackDirection::Descending => self.cells.len() - self.sp,
            StackDirection::Ascending => self.sp,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The occupied cells, bottom of stack first.
    pub fn live(&self) -> Vec<u64> {
        match self.direction {
            StackDirection::Descending => self.cells[self.sp..].iter().rev().copied().collect(),
            StackDirection::Ascending => self.cells[..self.sp].to_vec(),
        }
    }

    pub fn push(&mut self, value: u64) -> Result<(), StackError> {
        let value = value & mask(self.word_bits);
        match self.direction {
            StackDirection::Descending => {
                if self.sp == 0 {
                    return Err(StackError::Overflow);
                }
                self.sp -= 1;
                self.cells[self.sp] = value;
            }
            StackDirection::Ascending => {
                if self.sp == self.cells.len() {
                    return Err(StackError::Overflow);
                }
                self.cells[self.sp] = value;
                self.sp += 1;
            }
        }
        Ok(())
    }

    pub fn pop(&mut self) -> Result<u64, StackError> {
        match self.direction {
            StackDirection::Descending => {
                if self.sp == self.cells.len() {
                    return Err(StackError::Underflow);
                }
                let v = self.cells[self.sp];
                self.sp += 1;
                Ok(v)
            }
            StackDirection::Ascending => {
                if self.sp == 0 {
                    return Err(StackError::Underflow);
                }
                self.sp -= 1;
                Ok(self.cells[self.sp])
            }
        }
    }
}

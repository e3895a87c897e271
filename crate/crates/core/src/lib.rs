//! Core of the peel simulator toolkit: a dual-mode scalar/vector ISA, its
//! assembler and disassembler, the machine model with layered screen, a
//! small operating-system layer and a debug session protocol.

pub mod bnf;
pub mod codec;
pub mod debug;
pub mod exec;
pub mod isa;
pub mod machine;
pub mod os;
pub mod screen;

pub use codec::{assemble_source, disassemble, read_capo, write_capo, ObjectImage};
pub use debug::{Command, Session};
pub use exec::{step, ExecStats, Fault, FaultKind, StepOutcome};
pub use isa::{isa, Mnemonic};
pub use machine::{Base, Endianness, MachineConfig, MachineState};
pub use os::{LoadMode, Pid, System, Tick};

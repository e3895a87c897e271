//! Debug session: the command protocol consumed by `peel serve` (over
//! WebSocket or stdio) and by the tests.
//!
//! Requests are JSON objects tagged by `"cmd"`. Every request produces one
//! response object and, for commands that change the machine, one snapshot
//! event:
//!
//! ```text
//! -> {"cmd":"step","pid":1}
//! <- {"type":"response","cmd":"step","ok":true,"result":{...}}
//! <- {"type":"event","event":"snapshot","seq":3,...}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::bnf::{compile, parse_expr, BnfError};
use crate::codec::{assemble_source, disassemble, read_capo, AsmError, CapoError, ObjectImage};
use crate::exec::{trace_line, CodeSpace, Fault, StatsSummary};
use crate::machine::{render_value, Base, DirtyRange, Flags, MachineConfig};
use crate::os::{CoreMapEntry, DeathCause, LoadMode, OsError, Pid, ProcessState, System, Tick, UserCommand};

/// Instructions one `execute` may run when the request gives no limit.
pub const DEFAULT_EXECUTE_LIMIT: u64 = 1_000_000;

/// Wall-clock pacing: holds execution back so that `cycles` cycles take
/// at least `cycles / clock_hz` seconds. Only ever delays.
#[derive(Debug, Clone, Copy)]
pub struct Pacer {
    start: Instant,
    clock_hz: u64,
    cycles: u64,
}

impl Pacer {
    pub fn new(clock_hz: u64) -> Pacer {
        Pacer { start: Instant::now(), clock_hz: clock_hz.max(1), cycles: 0 }
    }

    /// Accounts for `cycles` more cycles and sleeps until they are due.
    pub fn advance(&mut self, cycles: u64) {
        self.cycles += cycles;
        let due = Duration::from_secs_f64(self.cycles as f64 / self.clock_hz as f64);
        if let Some(wait) = due.checked_sub(self.start.elapsed()) {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    #[default]
    Asm,
    Bnf,
}

/// Where a breakpoint sits: a source line or an image byte offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakpointSpec {
    pub pid: Pid,
    #[serde(default)]
    pub line: Option<usize>,
    #[serde(default)]
    pub offset: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    LoadSource {
        source: String,
        #[serde(default)]
        language: Language,
    },
    Assemble,
    /// Loads the assembled image (or a base64 CAPO file) and creates a
    /// process in state `new`.
    LoadImage {
        #[serde(default)]
        mode: LoadMode,
        #[serde(default)]
        base_address: Option<u64>,
        #[serde(default)]
        capo: Option<String>,
    },
    /// Admits a new process to the ready queue.
    Spawn { pid: Pid },
    Step { pid: Pid },
    Execute {
        #[serde(default)]
        pid: Option<Pid>,
        #[serde(default)]
        limit: Option<u64>,
    },
    Suspend { pid: Pid },
    Resume { pid: Pid },
    SetBreakpoint(BreakpointSpec),
    ClearBreakpoint(BreakpointSpec),
    SetClock {
        hz: u64,
        #[serde(default)]
        pacing: Option<bool>,
    },
    SetCpi { mnemonic: String, cycles: u64 },
    SetBase { base: Base },
    GetSnapshot,
    GetScreen {
        #[serde(default)]
        layers: bool,
    },
    EnqueueInput { value: i64 },
    Reset,
    Stats { pid: Pid },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::LoadSource { .. } => "load_source",
            Command::Assemble => "assemble",
            Command::LoadImage { .. } => "load_image",
            Command::Spawn { .. } => "spawn",
            Command::Step { .. } => "step",
            Command::Execute { .. } => "execute",
            Command::Suspend { .. } => "suspend",
            Command::Resume { .. } => "resume",
            Command::SetBreakpoint(_) => "set_breakpoint",
            Command::ClearBreakpoint(_) => "clear_breakpoint",
            Command::SetClock { .. } => "set_clock",
            Command::SetCpi { .. } => "set_cpi",
            Command::SetBase { .. } => "set_base",
            Command::GetSnapshot => "get_snapshot",
            Command::GetScreen { .. } => "get_screen",
            Command::EnqueueInput { .. } => "enqueue_input",
            Command::Reset => "reset",
            Command::Stats { .. } => "stats",
        }
    }

    fn mutates(&self) -> bool {
        !matches!(self, Command::GetSnapshot | Command::GetScreen { .. } | Command::Stats { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no source loaded")]
    NoSource,
    #[error("nothing assembled yet")]
    NoImage,
    #[error("unknown pid {0}")]
    UnknownPid(Pid),
    #[error("line {0} holds no instruction")]
    NoInstructionAtLine(usize),
    #[error("offset {0} is not an instruction boundary")]
    NotAnInstruction(u64),
    #[error("bad CAPO payload: {0}")]
    BadPayload(String),
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Bnf(#[from] BnfError),
    #[error(transparent)]
    Capo(#[from] CapoError),
    #[error(transparent)]
    Os(OsError),
    #[error("{0}")]
    Config(String),
}

impl From<OsError> for ServiceError {
    fn from(e: OsError) -> Self {
        match e {
            OsError::NoSuchProcess(pid) => ServiceError::UnknownPid(pid),
            other => ServiceError::Os(other),
        }
    }
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Protocol(_) => "protocol_error",
            ServiceError::NoSource => "no_source",
            ServiceError::NoImage => "no_image",
            ServiceError::UnknownPid(_) => "unknown_pid",
            ServiceError::NoInstructionAtLine(_) | ServiceError::NotAnInstruction(_) => "bad_breakpoint",
            ServiceError::BadPayload(_) => "bad_payload",
            ServiceError::Asm(_) => "assembly_error",
            ServiceError::Bnf(_) => "bnf_error",
            ServiceError::Capo(_) => "capo_error",
            ServiceError::Os(_) => "os_error",
            ServiceError::Config(_) => "config_error",
        }
    }

    /// Source line the error refers to, when known.
    pub fn line(&self) -> Option<usize> {
        match self {
            ServiceError::Asm(e) => Some(e.line),
            ServiceError::NoInstructionAtLine(l) => Some(*l),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        let pos = match self {
            ServiceError::Bnf(BnfError::ExprSyntaxError { pos, .. } | BnfError::UseBeforeAssign { pos, .. }) => {
                Some(*pos)
            }
            _ => None,
        };
        json!({ "kind": self.kind(), "message": self.to_string(), "line": self.line(), "position": pos })
    }
}

/// Session-level settings that do not influence results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub clock_hz: u64,
    pub pacing: bool,
    pub base: Base,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessView {
    pub pid: Pid,
    pub state: &'static str,
    /// Wait reason or cause of death.
    pub detail: Option<String>,
    pub registers: Vec<u64>,
    /// Registers rendered in the session's number base.
    pub rendered: Vec<String>,
    pub changed_registers: Vec<usize>,
    pub pc: u64,
    pub offset: Option<u64>,
    pub line: Option<usize>,
    pub sp: u64,
    pub flags: Flags,
    pub stack: Vec<u64>,
    pub instructions_executed: u64,
    pub stats: StatsSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BreakpointView {
    pub pid: Pid,
    pub offset: u64,
    pub line: Option<usize>,
}

/// Machine-visible part of a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineView {
    pub running: Option<Pid>,
    pub ready: Vec<Pid>,
    pub processes: Vec<ProcessView>,
    pub ram: Vec<DirtyRange>,
    pub changed_ram: Vec<u64>,
    pub layer_crcs: Vec<u32>,
    pub composite_crc: u32,
    pub output: String,
    pub core_map: Vec<CoreMapEntry>,
    pub core_map_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub seq: u64,
    pub settings: Settings,
    pub breakpoints: Vec<BreakpointView>,
    /// Output produced since the previous snapshot.
    pub output_delta: String,
    pub machine: MachineView,
}

/// Result of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub command: &'static str,
    pub response: Result<Value, ServiceError>,
    pub events: Vec<Snapshot>,
}

impl Reply {
    /// Wire form: the response object followed by event objects.
    pub fn to_messages(&self) -> Vec<Value> {
        let mut out = vec![match &self.response {
            Ok(result) => json!({ "type": "response", "cmd": self.command, "ok": true, "result": result }),
            Err(e) => json!({ "type": "response", "cmd": self.command, "ok": false, "error": e.to_json() }),
        }];
        for s in &self.events {
            let mut v = serde_json::to_value(s).expect("snapshot serializes");
            if let Value::Object(m) = &mut v {
                m.insert("type".into(), "event".into());
                m.insert("event".into(), "snapshot".into());
            }
            out.push(v);
        }
        out
    }
}

pub struct Session {
    system: System,
    source: Option<String>,
    image: Option<ObjectImage>,
    breakpoints: BTreeSet<(Pid, u64)>,
    pacing: bool,
    seq: u64,
    prev_registers: BTreeMap<Pid, Vec<u64>>,
    prev_ram: Vec<u64>,
    output_mark: usize,
    /// Breakpoint the last execute stopped at; the next execute steps over it.
    stopped_at: Option<(Pid, u64)>,
}

impl Session {
    pub fn new(config: MachineConfig) -> Result<Session, ServiceError> {
        let system = System::new(config).map_err(|e| ServiceError::Config(e.to_string()))?;
        let prev_ram = system.machine.ram.words().to_vec();
        Ok(Session {
            system,
            source: None,
            image: None,
            breakpoints: BTreeSet::new(),
            pacing: false,
            seq: 0,
            prev_registers: BTreeMap::new(),
            prev_ram,
            output_mark: 0,
            stopped_at: None,
        })
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    pub fn image(&self) -> Option<&ObjectImage> {
        self.image.as_ref()
    }

    /// Handles one wire message and returns the messages to send back.
    pub fn handle_json(&mut self, text: &str) -> Vec<Value> {
        match serde_json::from_str::<Command>(text) {
            Ok(cmd) => self.handle(cmd).to_messages(),
            Err(e) => Reply { command: "unknown", response: Err(ServiceError::Protocol(e.to_string())), events: vec![] }
                .to_messages(),
        }
    }

    pub fn handle(&mut self, cmd: Command) -> Reply {
        let command = cmd.name();
        let mutates = cmd.mutates();
        let response = self.dispatch(cmd);
        let events = if mutates && response.is_ok() { vec![self.snapshot()] } else { vec![] };
        Reply { command, response, events }
    }

    fn dispatch(&mut self, cmd: Command) -> Result<Value, ServiceError> {
        match cmd {
            Command::LoadSource { source, language } => self.load_source(source, language),
            Command::Assemble => self.assemble(),
            Command::LoadImage { mode, base_address, capo } => self.load_image(mode, base_address, capo),
            Command::Spawn { pid } => {
                self.system.admit(pid)?;
                Ok(json!({ "pid": pid }))
            }
            Command::Step { pid } => self.step(pid),
            Command::Execute { pid, limit } => self.execute(pid, limit.unwrap_or(DEFAULT_EXECUTE_LIMIT)),
            Command::Suspend { pid } => {
                self.system.user_transition(pid, UserCommand::Suspend)?;
                Ok(json!({ "pid": pid }))
            }
            Command::Resume { pid } => {
                self.system.user_transition(pid, UserCommand::Resume)?;
                Ok(json!({ "pid": pid }))
            }
            Command::SetBreakpoint(spec) => {
                let at = self.resolve_breakpoint(&spec)?;
                self.breakpoints.insert((spec.pid, at));
                Ok(json!({ "pid": spec.pid, "offset": at }))
            }
            Command::ClearBreakpoint(spec) => {
                let at = self.resolve_breakpoint(&spec)?;
                let removed = self.breakpoints.remove(&(spec.pid, at));
                Ok(json!({ "pid": spec.pid, "offset": at, "removed": removed }))
            }
            Command::SetClock { hz, pacing } => {
                if hz == 0 {
                    return Err(ServiceError::Config("clock_hz must be positive".into()));
                }
                self.system.machine.config.clock_hz = hz;
                self.pacing = pacing.unwrap_or(true);
                Ok(json!({ "clock_hz": hz, "pacing": self.pacing }))
            }
            Command::SetCpi { mnemonic, cycles } => {
                let m = mnemonic.to_ascii_uppercase();
                if crate::isa::lookup_mnemonic(&m).is_err() {
                    return Err(ServiceError::Config(format!("unknown mnemonic `{mnemonic}`")));
                }
                self.system.machine.config.cpi_table.insert(m.clone(), cycles);
                Ok(json!({ "mnemonic": m, "cycles": cycles }))
            }
            Command::SetBase { base } => {
                self.system.machine.config.output_base = base;
                Ok(json!({ "base": base }))
            }
            Command::GetSnapshot => Ok(serde_json::to_value(self.snapshot()).expect("serializes")),
            Command::GetScreen { layers } => Ok(self.screen(layers)),
            Command::EnqueueInput { value } => {
                self.system.enqueue_input(value as u64);
                Ok(json!({ "queued": self.system.machine.input.len() }))
            }
            Command::Reset => {
                let config = self.system.machine.config.clone();
                let fresh = Session::new(config)?;
                let seq = self.seq;
                let (source, image, pacing) = (self.source.take(), self.image.take(), self.pacing);
                *self = Session { seq, source, image, pacing, ..fresh };
                Ok(json!({}))
            }
            Command::Stats { pid } => {
                let p = self.system.process(pid)?;
                Ok(serde_json::to_value(p.stats.summary(self.system.config().clock_hz)).expect("serializes"))
            }
        }
    }

    fn load_source(&mut self, source: String, language: Language) -> Result<Value, ServiceError> {
        let asm = match language {
            Language::Asm => {
                crate::codec::parse(&source).map_err(|e| {
                    let line = e.diagnostics.first().map_or(0, |d| d.line);
                    AsmError { line, kind: crate::codec::AsmErrorKind::Parse(e) }
                })?;
                source
            }
            Language::Bnf => {
                let program = parse_expr(&source)?;
                compile(&program, self.system.config(), None)?.assembly
            }
        };
        let lines = asm.lines().count();
        let reply = json!({ "lines": lines, "assembly": asm });
        self.source = Some(asm);
        Ok(reply)
    }

    fn assemble(&mut self) -> Result<Value, ServiceError> {
        let source = self.source.as_ref().ok_or(ServiceError::NoSource)?;
        let assembly = assemble_source(source, self.system.config())?;
        let listing = disassemble(&assembly.image, self.system.config())
            .map(|d| d.to_string())
            .unwrap_or_default();
        let warnings: Vec<String> = assembly.warnings.iter().map(|w| w.to_string()).collect();
        let reply = json!({
            "bytes": assembly.image.bytes.len(),
            "instructions": assembly.image.map.len(),
            "symbols": assembly.image.symbols,
            "listing": listing,
            "warnings": warnings,
        });
        self.image = Some(assembly.image);
        Ok(reply)
    }

    fn load_image(&mut self, mode: LoadMode, base: Option<u64>, capo: Option<String>) -> Result<Value, ServiceError> {
        let image = match capo {
            Some(b64) => {
                let data = BASE64.decode(b64.trim()).map_err(|e| ServiceError::BadPayload(e.to_string()))?;
                read_capo(&data, self.system.config())?
            }
            None => self.image.clone().ok_or(ServiceError::NoImage)?,
        };
        let pid = self.system.spawn(image, mode, base)?;
        let entry = self.system.core_map.entries.iter().find(|e| e.pid == pid).copied();
        Ok(json!({ "pid": pid, "core_map_entry": entry }))
    }

    fn resolve_breakpoint(&self, spec: &BreakpointSpec) -> Result<u64, ServiceError> {
        let p = self.system.process(spec.pid)?;
        match (spec.line, spec.offset) {
            (Some(line), _) => {
                p.image.offset_of_line(line).map(u64::from).ok_or(ServiceError::NoInstructionAtLine(line))
            }
            (None, Some(o)) => {
                if p.layout.to_ram(o).is_some() && (o as usize) < p.image.bytes.len() {
                    Ok(o)
                } else {
                    Err(ServiceError::NotAnInstruction(o))
                }
            }
            (None, None) => Err(ServiceError::Protocol("breakpoint needs `line` or `offset`".into())),
        }
    }

    fn fault_json(&self, pid: Pid, fault: &Fault) -> Value {
        let line = self
            .system
            .process(pid)
            .ok()
            .zip(fault.offset)
            .and_then(|(p, o)| u32::try_from(o).ok().and_then(|o| p.image.line_at(o)));
        json!({ "message": fault.to_string(), "pc": fault.pc, "offset": fault.offset, "line": line })
    }

    fn step(&mut self, pid: Pid) -> Result<Value, ServiceError> {
        self.stopped_at = None;
        let tick = self.system.user_transition(pid, UserCommand::Step)?;
        Ok(match tick {
            Some(Tick::Ran { step, .. }) => {
                let total = self.system.process(pid)?.stats.cycles;
                let trace = trace_line(&step, total, &self.system.machine);
                json!({
                    "pid": pid,
                    "outcome": if step.halted { "halted" } else { "executed" },
                    "instruction": step.instruction.to_string(),
                    "trace": trace,
                })
            }
            Some(Tick::Blocked { .. }) => json!({ "pid": pid, "outcome": "blocked" }),
            Some(Tick::Faulted { fault, .. }) => {
                json!({ "pid": pid, "outcome": "faulted", "fault": self.fault_json(pid, &fault) })
            }
            _ => json!({ "pid": pid, "outcome": "none" }),
        })
    }

    /// Free-runs the scheduler until every process is dead, nothing can
    /// run, a breakpoint is reached or `limit` instructions have executed.
    /// With pacing on, instruction k completes no earlier than
    /// (cycles so far) / clock_hz seconds after the start.
    fn execute(&mut self, pid: Option<Pid>, limit: u64) -> Result<Value, ServiceError> {
        if let Some(pid) = pid {
            self.system.user_transition(pid, UserCommand::Execute)?;
        }
        let started = Instant::now();
        let mut pacer = Pacer::new(self.system.config().clock_hz);
        let (mut cycles, mut executed) = (0u64, 0u64);
        let mut faults = Vec::new();
        let reason = loop {
            if executed >= limit {
                break "limit";
            }
            let Some(next) = self.system.next_to_run() else {
                break if self.system.all_dead() { "finished" } else { "idle" };
            };
            let proc = self.system.process(next)?;
            let offset = proc.layout.to_image(self.system.context(next)?.pc);
            if let Some(o) = offset {
                let key = (next, o);
                if self.breakpoints.contains(&key) && self.stopped_at != Some(key) {
                    self.system.park();
                    self.stopped_at = Some(key);
                    break "breakpoint";
                }
            }
            self.stopped_at = None;
            match self.system.tick() {
                Tick::Ran { step, .. } => {
                    cycles += step.cycles;
                    executed += 1;
                    if self.pacing {
                        pacer.advance(step.cycles);
                    }
                }
                Tick::Faulted { pid, fault } => faults.push(json!({ "pid": pid, "fault": self.fault_json(pid, &fault) })),
                Tick::Blocked { .. } => {}
                Tick::Idle => break "idle",
                Tick::Finished => break "finished",
            }
        };
        Ok(json!({
            "reason": reason,
            "instructions": executed,
            "cycles": cycles,
            "stopped_at": self.stopped_at.map(|(pid, offset)| json!({ "pid": pid, "offset": offset })),
            "faults": faults,
            "wall_s": started.elapsed().as_secs_f64(),
        }))
    }

    fn screen(&self, layers: bool) -> Value {
        let vram = &self.system.machine.vram;
        let image = vram.composite();
        let mut v = json!({
            "width": image.width,
            "height": image.height,
            "pixel_size": self.system.config().pixel_size,
            "format": "p6",
            "p6": BASE64.encode(image.to_p6()),
            "composite_crc": image.crc(),
            "layer_crcs": vram.layer_crcs(),
        });
        if layers {
            let dumps: Vec<String> = (0..vram.layer_count())
                .map(|l| {
                    let bytes: Vec<u8> = vram.layer(l).iter().flat_map(|p| p.0.to_be_bytes()).collect();
                    BASE64.encode(bytes)
                })
                .collect();
            v["layers_rgba"] = json!(dumps);
        }
        v
    }

    /// Builds the next snapshot and advances the change baseline.
    pub fn snapshot(&mut self) -> Snapshot {
        self.seq += 1;
        let sys = &self.system;
        let ms = &sys.machine;
        let cfg = &ms.config;
        let mut processes = Vec::new();
        for p in sys.processes() {
            let ctx = sys.context(p.pid).expect("listed process");
            let prev = self.prev_registers.get(&p.pid);
            let changed = ctx
                .spad
                .iter()
                .enumerate()
                .filter(|(i, v)| prev.map_or(**v != 0, |old| old.get(*i) != Some(*v)))
                .map(|(i, _)| i)
                .collect();
            let offset = p.layout.to_image(ctx.pc);
            let detail = match &p.state {
                ProcessState::Waiting(r) => Some(format!("{r:?}").to_lowercase()),
                ProcessState::Dead(DeathCause::Halted) => Some("halted".into()),
                ProcessState::Dead(DeathCause::Faulted(f)) => Some(f.to_string()),
                _ => None,
            };
            processes.push(ProcessView {
                pid: p.pid,
                state: p.state.name(),
                detail,
                registers: ctx.spad.clone(),
                rendered: ctx.spad.iter().map(|v| render_value(*v, cfg.register_width_bits, cfg.output_base)).collect(),
                changed_registers: changed,
                pc: ctx.pc,
                offset,
                line: offset.and_then(|o| u32::try_from(o).ok()).and_then(|o| p.image.line_at(o)),
                sp: ctx.stack.sp() as u64,
                flags: ctx.sr,
                stack: ctx.stack.live(),
                instructions_executed: p.stats.instructions,
                stats: p.stats.summary(cfg.clock_hz),
            });
        }
        let words = ms.ram.words();
        let changed_ram =
            words.iter().zip(&self.prev_ram).enumerate().filter(|(_, (a, b))| a != b).map(|(i, _)| i as u64).collect();
        let output_delta = ms.output.get(self.output_mark..).unwrap_or_default().to_string();

        let snapshot = Snapshot {
            seq: self.seq,
            settings: Settings { clock_hz: cfg.clock_hz, pacing: self.pacing, base: cfg.output_base },
            breakpoints: self
                .breakpoints
                .iter()
                .map(|(pid, offset)| BreakpointView {
                    pid: *pid,
                    offset: *offset,
                    line: sys
                        .process(*pid)
                        .ok()
                        .and_then(|p| u32::try_from(*offset).ok().and_then(|o| p.image.line_at(o))),
                })
                .collect(),
            output_delta,
            machine: MachineView {
                running: sys.running(),
                ready: sys.ready_queue().collect(),
                processes,
                ram: ms.ram.dirty_ranges(),
                changed_ram,
                layer_crcs: ms.vram.layer_crcs(),
                composite_crc: ms.vram.composite().crc(),
                output: ms.output.clone(),
                core_map: sys.core_map.entries.clone(),
                core_map_text: sys.core_map.to_string(),
            },
        };
        self.prev_ram.copy_from_slice(words);
        self.prev_registers =
            sys.processes().iter().map(|p| (p.pid, sys.context(p.pid).expect("listed").spad.clone())).collect();
        self.output_mark = ms.output.len();
        snapshot
    }
}

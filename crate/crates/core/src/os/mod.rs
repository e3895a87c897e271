//! Loader and round-robin multi-process scheduler.

mod loader;

use std::collections::VecDeque;
use std::mem;

use serde::Serialize;
use thiserror::Error;

use crate::codec::ObjectImage;
use crate::exec::{self, ExecStats, Fault, Step, StepOutcome};
use crate::machine::{CpuContext, MachineConfig, MachineState};

pub use loader::{load, CodeLayout, CoreMap, CoreMapEntry, LoadError, LoadMode, LoadOptions};

pub type Pid = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitReason {
    Input,
    Suspended,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "detail")]
pub enum ProcessState {
    New,
    Ready,
    Running,
    Waiting(WaitReason),
    Dead(DeathCause),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathCause {
    Halted,
    Faulted(Fault),
}

impl ProcessState {
    pub fn name(&self) -> &'static str {
        match self {
            ProcessState::New => "new",
            ProcessState::Ready => "ready",
            ProcessState::Running => "running",
            ProcessState::Waiting(_) => "waiting",
            ProcessState::Dead(_) => "dead",
        }
    }

    pub fn is_dead(&self) -> bool {
        matches!(self, ProcessState::Dead(_))
    }
}

#[derive(Debug, Clone)]
pub struct Process {
    pub pid: Pid,
    pub image: ObjectImage,
    pub layout: CodeLayout,
    pub state: ProcessState,
    /// Saved context. Stale while the process holds the CPU.
    ctx: CpuContext,
    pub stats: ExecStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OsError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("no process {0}")]
    NoSuchProcess(Pid),
    #[error("process {pid} cannot {command} while {state}")]
    IllegalTransition { pid: Pid, command: &'static str, state: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserCommand {
    Step,
    Execute,
    Suspend,
    Resume,
}

impl UserCommand {
    fn name(self) -> &'static str {
        match self {
            UserCommand::Step => "step",
            UserCommand::Execute => "execute",
            UserCommand::Suspend => "suspend",
            UserCommand::Resume => "resume",
        }
    }
}

/// What one scheduler tick did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tick {
    Ran { pid: Pid, step: Step },
    Blocked { pid: Pid },
    Faulted { pid: Pid, fault: Fault },
    /// Nothing is ready but some process is waiting.
    Idle,
    /// Every process is dead (or there are none).
    Finished,
}

/// The simulated computer with its process table.
#[derive(Debug, Clone)]
pub struct System {
    pub machine: MachineState,
    processes: Vec<Process>,
    ready: VecDeque<Pid>,
    running: Option<Pid>,
    /// Instructions executed in the current quantum.
    timer: u64,
    pub core_map: CoreMap,
    next_pid: Pid,
}

impl System {
    pub fn new(config: MachineConfig) -> Result<System, crate::machine::ConfigError> {
        Ok(System {
            machine: MachineState::new(config)?,
            processes: Vec::new(),
            ready: VecDeque::new(),
            running: None,
            timer: 0,
            core_map: CoreMap::default(),
            next_pid: 1,
        })
    }

    pub fn config(&self) -> &MachineConfig {
        &self.machine.config
    }

    /// Loads `image` and creates a process for it in state `new`. Without a
    /// base address the first free RAM gap is used.
    pub fn spawn(&mut self, image: ObjectImage, mode: LoadMode, base_address: Option<u64>) -> Result<Pid, OsError> {
        let pid = self.next_pid;
        let per = self.machine.config.ram_bytes_per_word();
        let base = match base_address {
            Some(b) => b,
            None => {
                let need = CodeLayout::plan(&image, LoadOptions { mode, base_address: 0 }, per).footprint_words();
                self.core_map.first_fit(0, need)
            }
        };
        let (layout, entry) =
            load(&image, LoadOptions { mode, base_address: base }, &mut self.machine, &mut self.core_map, pid)?;
        let mut ctx = CpuContext::new(&self.machine.config);
        ctx.pc = entry.entry;
        self.next_pid += 1;
        self.processes.push(Process { pid, image, layout, state: ProcessState::New, ctx, stats: ExecStats::default() });
        Ok(pid)
    }

    /// new → ready, enqueued at the tail.
    pub fn admit(&mut self, pid: Pid) -> Result<(), OsError> {
        let p = self.process(pid)?;
        if p.state != ProcessState::New {
            return Err(illegal(p, "admit"));
        }
        self.process_mut(pid)?.state = ProcessState::Ready;
        self.ready.push_back(pid);
        Ok(())
    }

    pub fn processes(&self) -> &[Process] {
        &self.processes
    }

    pub fn process(&self, pid: Pid) -> Result<&Process, OsError> {
        self.processes.iter().find(|p| p.pid == pid).ok_or(OsError::NoSuchProcess(pid))
    }

    fn process_mut(&mut self, pid: Pid) -> Result<&mut Process, OsError> {
        self.processes.iter_mut().find(|p| p.pid == pid).ok_or(OsError::NoSuchProcess(pid))
    }

    pub fn running(&self) -> Option<Pid> {
        self.running
    }

    pub fn ready_queue(&self) -> impl Iterator<Item = Pid> + '_ {
        self.ready.iter().copied()
    }

    /// Live context of a process: the CPU's if it is running.
    pub fn context(&self, pid: Pid) -> Result<&CpuContext, OsError> {
        if self.running == Some(pid) {
            return Ok(&self.machine.ctx);
        }
        Ok(&self.process(pid)?.ctx)
    }

    pub fn all_dead(&self) -> bool {
        self.processes.iter().all(|p| p.state.is_dead())
    }

    fn dispatch(&mut self, pid: Pid) {
        let idx = self.index(pid);
        mem::swap(&mut self.machine.ctx, &mut self.processes[idx].ctx);
        self.processes[idx].state = ProcessState::Running;
        self.running = Some(pid);
        self.timer = 0;
    }

    /// Saves the running context and moves the process to `state`.
    fn preempt(&mut self, state: ProcessState) {
        if let Some(pid) = self.running.take() {
            let idx = self.index(pid);
            mem::swap(&mut self.machine.ctx, &mut self.processes[idx].ctx);
            self.processes[idx].state = state;
            self.timer = 0;
        }
    }

    fn index(&self, pid: Pid) -> usize {
        self.processes.iter().position(|p| p.pid == pid).expect("pid in table")
    }

    /// Executes one instruction of the running process, dispatching the
    /// head of the ready queue first if the CPU is free. Context switches
    /// happen only between instructions.
    pub fn tick(&mut self) -> Tick {
        if self.running.is_none() {
            match self.ready.pop_front() {
                Some(pid) => self.dispatch(pid),
                None if self.all_dead() => return Tick::Finished,
                None => return Tick::Idle,
            }
        }
        let pid = self.running.expect("dispatched");
        let tick = self.execute_one(pid);
        if self.running == Some(pid) && self.timer >= self.machine.config.quantum_instructions {
            self.preempt(ProcessState::Ready);
            self.ready.push_back(pid);
        }
        tick
    }

    /// Runs one instruction of the process holding the CPU and applies the
    /// resulting state transition.
    fn execute_one(&mut self, pid: Pid) -> Tick {
        let idx = self.index(pid);
        match exec::step(&mut self.machine, &self.processes[idx].layout) {
            Ok(StepOutcome::Executed(step)) => {
                self.processes[idx].stats.record(step.cycles);
                self.timer += 1;
                if step.halted {
                    self.preempt(ProcessState::Dead(DeathCause::Halted));
                }
                Tick::Ran { pid, step }
            }
            Ok(StepOutcome::Blocked) => {
                self.preempt(ProcessState::Waiting(WaitReason::Input));
                Tick::Blocked { pid }
            }
            Err(fault) => {
                self.preempt(ProcessState::Dead(DeathCause::Faulted(fault.clone())));
                Tick::Faulted { pid, fault }
            }
        }
    }

    /// Ticks until every process is dead or nothing can make progress.
    /// `limit` bounds the number of ticks.
    pub fn run(&mut self, limit: u64, mut observe: impl FnMut(&Tick, &System)) -> u64 {
        let mut n = 0;
        while n < limit {
            let t = self.tick();
            if matches!(t, Tick::Finished | Tick::Idle) {
                break;
            }
            observe(&t, self);
            n += 1;
        }
        n
    }

    /// Applies a user command. `Step` executes exactly one instruction of
    /// `pid` and leaves it ready; the other commands only change states.
    pub fn user_transition(&mut self, pid: Pid, command: UserCommand) -> Result<Option<Tick>, OsError> {
        let state = self.process(pid)?.state.clone();
        let bad = |s: &System| Err(illegal(s.process(pid).expect("exists"), command.name()));
        match (command, &state) {
            (_, ProcessState::Dead(_)) => bad(self),
            (UserCommand::Step, ProcessState::New | ProcessState::Ready | ProcessState::Running) => {
                if self.running != Some(pid) {
                    if let Some(other) = self.running {
                        self.preempt(ProcessState::Ready);
                        self.ready.push_front(other);
                    }
                    let pos = self.ready.iter().position(|p| *p == pid);
                    if let Some(i) = pos {
                        self.ready.remove(i);
                    }
                    self.dispatch(pid);
                    let tick = self.execute_one(pid);
                    if self.running == Some(pid) {
                        self.preempt(ProcessState::Ready);
                        self.ready.insert(pos.unwrap_or(self.ready.len()).min(self.ready.len()), pid);
                    }
                    return Ok(Some(tick));
                }
                let tick = self.execute_one(pid);
                if self.running == Some(pid) && self.timer >= self.machine.config.quantum_instructions {
                    self.preempt(ProcessState::Ready);
                    self.ready.push_back(pid);
                }
                Ok(Some(tick))
            }
            (UserCommand::Execute, ProcessState::New) => {
                self.admit(pid)?;
                Ok(None)
            }
            (UserCommand::Execute, ProcessState::Ready | ProcessState::Running) => Ok(None),
            (UserCommand::Suspend, ProcessState::Running) => {
                self.preempt(ProcessState::Waiting(WaitReason::Suspended));
                Ok(None)
            }
            (UserCommand::Suspend, ProcessState::Ready | ProcessState::New) => {
                self.ready.retain(|p| *p != pid);
                self.process_mut(pid)?.state = ProcessState::Waiting(WaitReason::Suspended);
                Ok(None)
            }
            (UserCommand::Resume, ProcessState::Waiting(WaitReason::Suspended)) => {
                self.process_mut(pid)?.state = ProcessState::Ready;
                self.ready.push_back(pid);
                Ok(None)
            }
            _ => bad(self),
        }
    }

    /// Takes the CPU away from the running process without charging it a
    /// quantum: it goes back to the head of the ready queue.
    pub fn park(&mut self) {
        if let Some(pid) = self.running {
            self.preempt(ProcessState::Ready);
            self.ready.push_front(pid);
        }
    }

    /// The process that the next tick will execute.
    pub fn next_to_run(&self) -> Option<Pid> {
        self.running.or_else(|| self.ready.front().copied())
    }

    /// Queues a value for INP and wakes processes blocked on input.
    pub fn enqueue_input(&mut self, value: u64) {
        self.machine.input.push_back(value);
        for p in &mut self.processes {
            if p.state == ProcessState::Waiting(WaitReason::Input) {
                p.state = ProcessState::Ready;
                self.ready.push_back(p.pid);
            }
        }
    }
}

fn illegal(p: &Process, command: &'static str) -> OsError {
    OsError::IllegalTransition { pid: p.pid, command, state: p.state.name() }
}

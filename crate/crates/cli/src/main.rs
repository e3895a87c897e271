mod serve;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use peel_core::bnf::{compile, parse_expr};
use peel_core::codec::{
    assemble_source, disassemble, disassemble_bytes, read_capo, read_numeric, render_numeric, write_capo, NumericBase,
    ObjectImage, CAPO_MAGIC,
};
use peel_core::debug::Pacer;
use peel_core::exec::trace_line;
use peel_core::isa::isa;
use peel_core::machine::{Base, Endianness, MachineConfig};
use peel_core::os::{DeathCause, LoadMode, ProcessState, System, Tick};

const EXIT_FAULT: u8 = 1;
const EXIT_FILE: u8 = 3;

#[derive(Parser)]
#[command(name = "peel", version, about = "Dual-mode scalar/vector ISA simulator toolkit")]
struct Cli {
    /// Machine configuration (JSON). Overrides PEEL_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Capo,
    Hex,
    Bin,
    Oct,
    Dec,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Aligned,
    Packed,
}

#[derive(Clone, Copy, ValueEnum)]
enum EndianArg {
    Little,
    Big,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodeBase {
    Hex,
    Bin,
    Oct,
    Dec,
}

impl From<CodeBase> for NumericBase {
    fn from(b: CodeBase) -> Self {
        match b {
            CodeBase::Hex => NumericBase::Hex,
            CodeBase::Bin => NumericBase::Bin,
            CodeBase::Oct => NumericBase::Oct,
            CodeBase::Dec => NumericBase::Dec,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble a source file.
    Asm {
        input: PathBuf,
        /// Output file; numeric formats go to stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "capo")]
        emit: Emit,
    },
    /// Print the canonical source of an object file or numeric machine code.
    Disasm {
        input: PathBuf,
        /// Base of a numeric (non-CAPO) input.
        #[arg(long, value_enum, default_value = "hex")]
        base: CodeBase,
    },
    /// Run one or more programs (source, .bnf or object files) as processes.
    Run {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "aligned")]
        mode: ModeArg,
        #[arg(long, value_enum)]
        endian: Option<EndianArg>,
        /// Clock rate in Hz; execution is paced to it.
        #[arg(long)]
        clock: Option<u64>,
        #[arg(long)]
        trace: bool,
        /// Scheduler quantum in instructions.
        #[arg(long)]
        quantum: Option<u64>,
        #[arg(long)]
        stats: bool,
        /// Values for INP, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        input: Vec<i64>,
        /// Number base for OUT and trace values.
        #[arg(long)]
        base: Option<Base>,
        /// Stop after this many instructions.
        #[arg(long, default_value_t = 10_000_000)]
        limit: u64,
    },
    /// Serve the debug protocol over WebSocket (/session) or stdio.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Speak newline-delimited JSON on stdin/stdout instead.
        #[arg(long)]
        stdio: bool,
        /// Directory of static UI assets served at /.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Compile an expression program to assembly.
    Bnfc {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// First RAM word of the variable region.
        #[arg(long)]
        data_base: Option<u64>,
    },
    /// Print the instruction set reference.
    Isa {
        /// One JSON object per mnemonic.
        #[arg(long)]
        json: bool,
    },
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl std::fmt::Display) -> Failure {
    Failure { code, message: message.to_string() }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("peel: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn run_cli(cli: Cli) -> CliResult {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Cmd::Asm { input, output, emit } => asm(&config, &input, output.as_deref(), emit),
        Cmd::Disasm { input, base } => disasm(&config, &input, base.into()),
        Cmd::Run { inputs, mode, endian, clock, trace, quantum, stats, input, base, limit } => {
            let mut config = config;
            if let Some(e) = endian {
                config.endianness = match e {
                    EndianArg::Little => Endianness::Little,
                    EndianArg::Big => Endianness::Big,
                    EndianArg::None => Endianness::None,
                };
            }
            if let Some(hz) = clock {
                config.clock_hz = hz;
            }
            if let Some(q) = quantum {
                config.quantum_instructions = q;
            }
            if let Some(b) = base {
                config.output_base = b;
            }
            let mode = match mode {
                ModeArg::Aligned => LoadMode::WordAligned,
                ModeArg::Packed => LoadMode::Packed,
            };
            let opts = RunOptions { mode, pace: clock.is_some(), trace, stats, input, limit };
            run(config, &inputs, &opts)
        }
        Cmd::Serve { port, stdio, assets } => {
            if stdio {
                serve::stdio(config).map_err(|e| fail(EXIT_FILE, e))
            } else {
                serve::websocket(config, port, assets).map_err(|e| fail(EXIT_FILE, e))
            }
        }
        Cmd::Bnfc { input, output, data_base } => {
            let text = read_text(&input)?;
            let program = parse_expr(&text).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", input.display())))?;
            let compiled = compile(&program, &config, data_base).map_err(|e| fail(EXIT_FILE, e))?;
            write_out(output.as_deref(), compiled.assembly.as_bytes())
        }
        Cmd::Isa { json } => {
            let mut out = String::new();
            if json {
                out = isa().reference_jsonl();
            } else {
                for spec in isa().specs() {
                    for form in &spec.forms {
                        out.push_str(&format!(
                            "{:<4} {:02X} {} form {}  {}\n",
                            spec.mnemonic.name(),
                            spec.head_byte(form),
                            if form.vector { "vector" } else { "scalar" },
                            form.index,
                            form.synopsis
                        ));
                    }
                }
            }
            write_out(None, out.as_bytes())
        }
    }
}

fn load_config(flag: Option<&Path>) -> Result<MachineConfig, Failure> {
    let path = match flag {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os("PEEL_CONFIG").map(PathBuf::from),
    };
    let Some(path) = path else {
        return Ok(MachineConfig::default());
    };
    let text = read_text(&path)?;
    let config: MachineConfig =
        serde_json::from_str(&text).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", path.display())))?;
    config.validate().map_err(|e| fail(EXIT_FILE, format!("{}: {e}", path.display())))?;
    Ok(config)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> CliResult {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(bytes).map_err(|e| fail(EXIT_FILE, e)),
    }
}

fn assemble_file(config: &MachineConfig, path: &Path) -> Result<ObjectImage, Failure> {
    let text = read_text(path)?;
    let source = if path.extension().is_some_and(|e| e == "bnf") {
        let program = parse_expr(&text).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", path.display())))?;
        compile(&program, config, None).map_err(|e| fail(EXIT_FILE, e))?.assembly
    } else {
        text
    };
    let assembly =
        assemble_source(&source, config).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", path.display())))?;
    for w in &assembly.warnings {
        eprintln!("{}: warning: {w}", path.display());
    }
    Ok(assembly.image)
}

/// Source, .bnf or CAPO object, told apart by content and suffix.
fn load_program(config: &MachineConfig, path: &Path) -> Result<ObjectImage, Failure> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(&CAPO_MAGIC) {
        read_capo(&bytes, config).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", path.display())))
    } else {
        assemble_file(config, path)
    }
}

fn asm(config: &MachineConfig, input: &Path, output: Option<&Path>, emit: Emit) -> CliResult {
    let image = assemble_file(config, input)?;
    let base = match emit {
        Emit::Capo => {
            let out = output.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension("capo"));
            return write_out(Some(&out), &write_capo(&image));
        }
        Emit::Hex => NumericBase::Hex,
        Emit::Bin => NumericBase::Bin,
        Emit::Oct => NumericBase::Oct,
        Emit::Dec => NumericBase::Dec,
    };
    write_out(output, render_numeric(&image, base).as_bytes())
}

fn disasm(config: &MachineConfig, input: &Path, base: NumericBase) -> CliResult {
    let bytes = read_bytes(input)?;
    let listing = if bytes.starts_with(&CAPO_MAGIC) {
        let image = read_capo(&bytes, config).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", input.display())))?;
        disassemble(&image, config)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| fail(EXIT_FILE, format!("{}: not text", input.display())))?;
        let code = read_numeric(&text, base).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", input.display())))?;
        disassemble_bytes(&code, config)
    };
    let listing = listing.map_err(|e| fail(EXIT_FILE, format!("{}: {e}", input.display())))?;
    write_out(None, listing.to_string().as_bytes())
}

struct RunOptions {
    mode: LoadMode,
    pace: bool,
    trace: bool,
    stats: bool,
    input: Vec<i64>,
    limit: u64,
}

fn run(config: MachineConfig, inputs: &[PathBuf], opts: &RunOptions) -> CliResult {
    let mut sys = System::new(config.clone()).map_err(|e| fail(EXIT_FILE, e))?;
    let mut names = Vec::new();
    for path in inputs {
        let image = load_program(&config, path)?;
        let pid = sys.spawn(image, opts.mode, None).map_err(|e| fail(EXIT_FILE, format!("{}: {e}", path.display())))?;
        sys.admit(pid).map_err(|e| fail(EXIT_FILE, e))?;
        names.push((pid, path.display().to_string()));
    }
    for v in &opts.input {
        sys.enqueue_input(*v as u64);
    }

    let multi = names.len() > 1;
    let mut out = io::stdout().lock();
    let mut printed = 0;
    let mut pacer = Pacer::new(config.clock_hz);
    let mut executed = 0;
    while executed < opts.limit {
        let tick = sys.tick();
        match &tick {
            Tick::Ran { pid, step } => {
                executed += 1;
                if opts.pace {
                    pacer.advance(step.cycles);
                }
                if opts.trace {
                    let total = sys.process(*pid).map(|p| p.stats.cycles).unwrap_or_default();
                    let line = trace_line(step, total, &sys.machine);
                    let _ = if multi { writeln!(out, "[{pid}] {line}") } else { writeln!(out, "{line}") };
                }
            }
            Tick::Faulted { .. } | Tick::Blocked { .. } => {}
            Tick::Idle | Tick::Finished => break,
        }
        if sys.machine.output.len() > printed {
            let _ = out.write_all(sys.machine.output[printed..].as_bytes());
            printed = sys.machine.output.len();
        }
    }

    let mut code = 0;
    for (pid, name) in &names {
        let p = sys.process(*pid).map_err(|e| fail(EXIT_FILE, e))?;
        match &p.state {
            ProcessState::Dead(DeathCause::Halted) => {}
            ProcessState::Dead(DeathCause::Faulted(f)) => {
                let line = f.offset.and_then(|o| u32::try_from(o).ok()).and_then(|o| p.image.line_at(o));
                match line {
                    Some(l) => eprintln!("peel: {name}:{l}: {f}"),
                    None => eprintln!("peel: {name}: {f}"),
                }
                code = EXIT_FAULT;
            }
            other => {
                eprintln!("peel: {name}: stopped while {} after {} instructions", other.name(), p.stats.instructions);
                code = EXIT_FAULT;
            }
        }
        if opts.stats {
            let summary = p.stats.summary(config.clock_hz);
            if multi {
                let _ = writeln!(out, "[{pid}] {name}");
            }
            let _ = writeln!(out, "{summary}");
        }
    }
    let _ = out.flush();
    if code == 0 {
        Ok(())
    } else {
        Err(fail(code, ""))
    }
}

//! `modelsentry`: scan, disassemble, generate fixtures, verify digests.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use modelsentry::container::{find_pickle_payloads, list_entries};
use modelsentry::forge::corpus::DEFAULT_SEED;
use modelsentry::forge::emit_corpus;
use modelsentry::pickle::{disassemble_concatenated, PickleProgram, ParseLimits};
use modelsentry::policy::integrity::{verify_integrity, IntegrityManifest, IntegrityStatus};
use modelsentry::{render, scan_tree, Kind, OutputFormat, Policy, ScanOptions, Severity};

const EXIT_FINDINGS: u8 = 3;
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "modelsentry", version, about = "Static scanner for serialized ML model files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan files or directories and report findings.
    Scan {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Policy file layered over the built-in defaults.
        #[arg(long, env = "MODELSENTRY_POLICY")]
        policy: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: OutputFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Lowest severity that makes the exit code 3.
        #[arg(long, default_value = "HIGH")]
        threshold: Severity,
        #[arg(long)]
        max_entry_bytes: Option<u64>,
        #[arg(long)]
        follow_symlinks: bool,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Print the opcode listing of a pickle file or of the pickles inside an archive.
    Disasm { file: PathBuf },
    /// Write the deterministic fixture corpus and its manifest.
    Forge {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Check file digests against a `{path: "sha256:<hex>"}` manifest.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Scan { paths, policy, format, out, threshold, max_entry_bytes, follow_symlinks, jobs } => {
            let mut opts = ScanOptions { follow_symlinks, jobs, threshold, ..Default::default() };
            if let Some(n) = max_entry_bytes {
                opts.max_entry_bytes = n;
            }
            scan(&paths, policy.as_deref(), format, out.as_deref(), &opts)
        }
        Command::Disasm { file } => disasm(&file),
        Command::Forge { out, seed } => forge(&out, seed),
        Command::Verify { manifest, paths } => verify(&manifest, &paths),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("modelsentry: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn load_policy(path: Option<&Path>) -> Result<Policy> {
    let Some(path) = path else { return Ok(Policy::default_policy()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading policy {}", path.display()))?;
    Policy::from_json_str(&text).with_context(|| format!("policy {}", path.display()))
}

fn scan(paths: &[PathBuf], policy: Option<&Path>, format: OutputFormat, out: Option<&Path>, opts: &ScanOptions) -> Result<u8> {
    let policy = load_policy(policy)?;
    let report = scan_tree(paths, &policy, opts);
    let bytes = render(&report, format);
    match out {
        Some(path) => fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(&bytes)?,
    }
    Ok(report.exit_code() as u8)
}

fn print_program(out: &mut impl Write, program: &PickleProgram) -> io::Result<()> {
    for ins in &program.instructions {
        writeln!(out, "{:>8}: {:<16} {}", ins.offset, ins.mnemonic(), ins.arg)?;
    }
    Ok(())
}

fn disasm_bytes(out: &mut impl Write, data: &[u8]) -> Result<bool> {
    match disassemble_concatenated(data, &ParseLimits::default()) {
        Ok(programs) => {
            for p in &programs {
                print_program(out, p)?;
            }
            Ok(true)
        }
        Err(seg) => {
            for p in &seg.parsed {
                print_program(out, p)?;
            }
            print_program(out, &seg.partial)?;
            writeln!(out, "error: {seg}")?;
            Ok(false)
        }
    }
}

fn disasm(path: &Path) -> Result<u8> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let clean = match modelsentry::sniff(&data).kind {
        Kind::ZipArchive => {
            let mut file = File::open(path)?;
            let entries = list_entries(&mut file)?;
            let mut clean = true;
            for (entry, data) in find_pickle_payloads(&entries, &mut file, modelsentry::container::zip::DEFAULT_ENTRY_CAP) {
                writeln!(out, "== {}", entry.path)?;
                clean &= disasm_bytes(&mut out, &data?)?;
            }
            clean
        }
        Kind::PickleStream => disasm_bytes(&mut out, &data)?,
        _ => bail!("{} is not a pickle stream or archive", path.display()),
    };
    Ok(if clean { 0 } else { EXIT_ERROR })
}

fn forge(out: &Path, seed: u64) -> Result<u8> {
    let manifest = emit_corpus(out, seed).with_context(|| format!("writing corpus to {}", out.display()))?;
    let malicious = manifest.fixtures.iter().filter(|f| f.kind.is_malicious()).count();
    println!(
        "wrote {} fixtures ({malicious} malicious, {} benign) to {}",
        manifest.fixtures.len(),
        manifest.fixtures.len() - malicious,
        out.display()
    );
    Ok(0)
}

fn verify(manifest: &Path, paths: &[PathBuf]) -> Result<u8> {
    let manifest = IntegrityManifest::load(manifest).map_err(anyhow::Error::msg)?;
    let mut code = 0;
    for path in paths {
        let status = match File::open(path).and_then(|f| verify_integrity(f, path, &manifest)) {
            Ok(s) => s,
            Err(e) => {
                println!("ERROR {}: {e}", path.display());
                code = code.max(EXIT_ERROR);
                continue;
            }
        };
        match status {
            IntegrityStatus::Verified => println!("OK {}", path.display()),
            IntegrityStatus::NotListed => println!("NOT-LISTED {}", path.display()),
            IntegrityStatus::Mismatch { expected, actual } => {
                println!("MISMATCH {} expected {expected} got {actual}", path.display());
                code = EXIT_FINDINGS;
            }
        }
    }
    Ok(code)
}

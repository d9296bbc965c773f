//! `elkc`: compress and inspect tensors, benchmark codecs, and run the
//! parameter-server training simulator.

mod bench;
mod sim;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use elkc::blob::{blob_ratio, CompressedBlob};
use elkc::quant3::{ErrorContext, QuantConfig};
use elkc::tensor::{read_tensor, write_tensor};

#[derive(Debug, Parser)]
#[command(name = "elkc", version, about = "3-value + quartic + zero-run compression for training traffic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a TSR1 tensor file into a 3LC1 blob.
    Compress(CompressArgs),
    /// Decompress a 3LC1 blob into a TSR1 tensor file.
    Decompress(DecompressArgs),
    /// Measure compression and throughput on generated tensors.
    Bench(bench::BenchArgs),
    /// Run the training simulator and emit per-step CSV metrics.
    TrainSim(sim::TrainSimArgs),
    /// Print a blob's header and traffic summary.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct CompressArgs {
    #[arg(long = "in", value_name = "TSR")]
    input: PathBuf,
    #[arg(long = "out", value_name = "BLOB")]
    output: PathBuf,
    /// Sparsity multiplier, 1 <= s < 2.
    #[arg(long, default_value_t = 1.0)]
    s: f32,
    /// Store raw quartic bytes without zero-run encoding.
    #[arg(long)]
    no_zre: bool,
}

#[derive(Debug, Args)]
struct DecompressArgs {
    #[arg(long = "in", value_name = "BLOB")]
    input: PathBuf,
    #[arg(long = "out", value_name = "TSR")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(value_name = "BLOB")]
    blob: PathBuf,
}

/// Usage problems (bad flags, missing files, invalid ranges) exit with 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("no such file: {}", path.display())));
    }
    Ok(())
}

fn compress(args: CompressArgs) -> Result<()> {
    require_file(&args.input)?;
    let cfg = QuantConfig::new(args.s)?;
    let t = read_tensor(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    // file mode: a fresh context per invocation, no carried error
    let mut ctx = ErrorContext::new(t.dims().to_vec(), cfg)?;
    let blob = elkc::compress(&mut ctx, &t, !args.no_zre)?;
    blob.write(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    eprintln!(
        "{} values -> {} payload bytes ({:.1}x)",
        blob.numel(),
        blob.payload_len(),
        blob_ratio(&blob)
    );
    Ok(())
}

fn decompress(args: DecompressArgs) -> Result<()> {
    require_file(&args.input)?;
    let blob = CompressedBlob::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let t = elkc::decompress(&blob)?;
    write_tensor(&t, &args.output).with_context(|| format!("writing {}", args.output.display()))?;
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    require_file(&args.blob)?;
    let blob = CompressedBlob::read(&args.blob).with_context(|| format!("reading {}", args.blob.display()))?;
    // decode once so a corrupt payload is reported as a format error
    elkc::decompress(&blob)?;
    let summary = elkc::summarize([&blob])?;
    println!("codec          {:?}", blob.codec);
    println!("zre            {}", blob.zre_applied());
    println!("dims           {:?}", blob.dims);
    println!("elements       {}", blob.numel());
    println!("m              {}", blob.m);
    println!("header_bytes   {}", blob.header_len());
    println!("payload_bytes  {}", blob.payload_len());
    println!("ratio          {}", summary.ratio);
    println!("bits_per_value {:.6}", summary.bits_per_value);
    println!("gross_bits     {}", summary.gross_bits);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<elkc::Error>() {
        Some(elkc::Error::Format(_) | elkc::Error::Value(_) | elkc::Error::Shape { .. }) => 2,
        Some(elkc::Error::Divergence { .. }) => 3,
        Some(elkc::Error::Io(_) | elkc::Error::Config(_) | elkc::Error::Empty(_)) => 1,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Compress(a) => compress(a),
        Command::Decompress(a) => decompress(a),
        Command::Bench(a) => bench::run(a),
        Command::TrainSim(a) => sim::run(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gravtrack::config::PipelineConfig;
use gravtrack::eval::evaluate_dirs;
use gravtrack::pipeline::{dump_field, run_pipeline, Staging};
use gravtrack::synth::{synth, write_synth, Mitosis, SynthSpec};
use gravtrack::Error;

const EVAL_FILE: &str = "eval_report.toml";

#[derive(Parser, Debug)]
#[command(
    name = "gravtrack",
    about = "Gravity-field cell detection and tracking",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment and track a directory of TIFF frames.
    Run(RunArgs),
    /// Write a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Score predicted masks and tracks against ground truth.
    Eval(EvalArgs),
    /// Write the potential, force and basin maps of one frame.
    DumpField(DumpArgs),
    /// Print the version.
    Version,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frame directory; overrides `io.input`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Result directory; overrides `io.output`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; overrides `io.threads`.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write contour overlays as PNG.
    #[arg(long)]
    overlay: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    frames: usize,
    #[arg(long, default_value_t = 10)]
    blobs: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Standard deviation of the additive noise.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Division as FRAME:BLOB; repeatable.
    #[arg(long, value_parser = parse_mitosis)]
    mitosis: Vec<Mitosis>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory written by `run`.
    #[arg(long)]
    input: PathBuf,
    /// Ground-truth directory with `man_trackNNN.tif` and `man_track.txt`.
    #[arg(long)]
    gt: PathBuf,
    /// Directory to write `eval_report.toml` into.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// A single TIFF frame.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

fn parse_mitosis(s: &str) -> Result<Mitosis, String> {
    let (frame, blob) = s.split_once(':').ok_or("expected FRAME:BLOB")?;
    Ok(Mitosis {
        frame: frame.trim().parse().map_err(|e| format!("frame: {e}"))?,
        blob: blob.trim().parse().map_err(|e| format!("blob: {e}"))?,
    })
}

/// Failures that are not library errors.
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Error> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.config.as_deref())?;
    if args.threads.is_some() {
        cfg.io.threads = args.threads;
    }
    cfg.io.overlay |= args.overlay;
    let input = args
        .input
        .or_else(|| cfg.io.input.clone())
        .ok_or_else(|| Failure::Usage("no input directory; pass --input or set io.input".into()))?;
    let output = args
        .output
        .or_else(|| cfg.io.output.clone())
        .ok_or_else(|| {
            Failure::Usage("no output directory; pass --output or set io.output".into())
        })?;
    let report = run_pipeline(&cfg, &input, &output)?;
    println!(
        "{} frames, {} tracklets ({} before filtering), {:.2}s",
        report.frames, report.tracklets, report.tracklets_before_filter, report.timings.total
    );
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> Result<(), Failure> {
    let spec = SynthSpec {
        width: args.width,
        height: args.height,
        frames: args.frames,
        blobs: args.blobs,
        noise_sigma: args.noise,
        mitoses: args.mitosis,
        seed: args.seed,
        ..SynthSpec::default()
    };
    let seq = synth(&spec)?;
    write_synth(&seq, &args.output)?;
    println!(
        "{} frames written to {}",
        seq.frames.len(),
        args.output.display()
    );
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<(), Failure> {
    let report = evaluate_dirs(&args.input, &args.gt)?;
    let text = report.to_toml_string();
    print!("{text}");
    if let Some(dest) = args.output {
        let staging = Staging::new(&dest)?;
        let path = staging.path(EVAL_FILE);
        std::fs::write(&path, &text).map_err(|e| Error::Io { path, source: e })?;
        staging.commit()?;
    }
    Ok(())
}

fn dump_cmd(args: DumpArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref())?;
    let basins = dump_field(&cfg, &args.input, &args.output)?;
    println!("{} minima", basins.minima.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = std::panic::catch_unwind(|| match cli.command {
        Command::Run(a) => run(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::DumpField(a) => dump_cmd(a),
        Command::Version => {
            println!("gravtrack {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Usage(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Lib(e))) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() {
                1
            } else if e.is_data_error() {
                2
            } else {
                3
            })
        }
        // The panic message is already on stderr.
        Err(_) => ExitCode::from(3),
    }
}

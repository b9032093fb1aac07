//! `strain`: simulate the closed loop, inspect wire captures, bench the bridge
//! and probe the plant model.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use strain_core::pipeline::tools::{self, InspectError};
use strain_core::pipeline::{ingest_trace, run_simulation, write_telemetry, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "strain", version, about = "Armband-driven pneumatic sculpture control stack")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop against the simulated plant.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Simulated seconds.
        #[arg(long)]
        duration: f64,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Telemetry log path; stdout when omitted.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Decode armband notifications and bridge frames given as hex.
    Codec {
        #[command(subcommand)]
        op: CodecOp,
    },
    /// Serial bridge utilities.
    Bridge {
        #[command(subcommand)]
        op: BridgeOp,
    },
    /// Plant model utilities.
    Plant {
        #[command(subcommand)]
        op: PlantOp,
    },
}

#[derive(Subcommand)]
#[allow(clippy::enum_variant_names)]
enum CodecOp {
    DecodeEmg { hex: String },
    DecodeImu { hex: String },
    DecodeClassifier { hex: String },
    DecodeBridge { hex: String },
}

#[derive(Subcommand)]
enum BridgeOp {
    /// Encode random messages, stream them through the decoder, compare.
    LoopbackTest {
        #[arg(long, default_value_t = 1000)]
        frames: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum PlantOp {
    /// Drive one bladder through a `duration_ms,action` schedule and print CSV.
    StepResponse {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

type Describe = fn(&[u8]) -> Result<String, InspectError>;

const EXIT_FAULT: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn load_config(path: Option<&Path>) -> Result<RunConfig, PipelineError> {
    match path {
        Some(p) => RunConfig::from_file(p),
        None => Ok(RunConfig::default()),
    }
}

fn fail(err: &PipelineError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn simulate(
    config: Option<&Path>,
    trace: Option<&Path>,
    duration: f64,
    seed: Option<u64>,
    log: Option<&Path>,
) -> ExitCode {
    let mut cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    let trace = match trace.map(ingest_trace).transpose() {
        Ok(t) => t.unwrap_or_default(),
        Err(e) => return fail(&e),
    };
    let output = match run_simulation(&cfg, &trace, duration) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let written = match log {
        Some(path) => File::create(path).and_then(|f| write_telemetry(BufWriter::new(f), &output.telemetry)),
        None => write_telemetry(io::stdout().lock(), &output.telemetry),
    };
    if let Err(e) = written {
        eprintln!("error: writing telemetry: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let s = &output.summary;
    eprintln!(
        "ticks={} records={}/{} plant_time_s={:?} faulted={:?} link={} frame_errors={}",
        s.ticks,
        s.records_consumed,
        s.records_in_window,
        s.plant_time_s,
        s.faulted_channels,
        s.final_link,
        s.host_stats.errors() + s.device_stats.errors()
    );
    ExitCode::from(s.exit_code() as u8)
}

fn codec(op: &CodecOp) -> ExitCode {
    let (hex_text, describe): (&str, Describe) = match op {
        CodecOp::DecodeEmg { hex } => (hex, tools::describe_emg),
        CodecOp::DecodeImu { hex } => (hex, tools::describe_imu),
        CodecOp::DecodeClassifier { hex } => (hex, tools::describe_classifier),
        CodecOp::DecodeBridge { hex } => (hex, tools::describe_bridge),
    };
    let cleaned: String = hex_text.chars().filter(|c| !c.is_whitespace()).collect();
    let bytes = match hex::decode(&cleaned) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: invalid hex input: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match describe(&bytes) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAULT)
        }
    }
}

fn loopback(frames: u64, seed: u64) -> ExitCode {
    let r = tools::loopback_test(frames, seed);
    println!(
        "frames={} bytes={} matched={} mismatched={} max_frame_len={}",
        r.frames, r.bytes, r.matched, r.mismatched, r.max_frame_len
    );
    if r.mismatched == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAULT)
    }
}

fn step_response(config: Option<&Path>, schedule: &Path, seed: Option<u64>) -> ExitCode {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let text = match std::fs::read_to_string(schedule) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", schedule.display());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = tools::parse_schedule(&text)
        .and_then(|s| tools::step_response(&cfg.plant, &cfg.sensor, &s, seed.or(cfg.seed).unwrap_or(0)));
    match result {
        Ok(rows) => {
            let mut out = io::stdout().lock();
            let _ = out.write_all(tools::render_step_response(&rows).as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate {
            config,
            trace,
            duration,
            seed,
            log,
        } => simulate(config.as_deref(), trace.as_deref(), *duration, *seed, log.as_deref()),
        Command::Codec { op } => codec(op),
        Command::Bridge {
            op: BridgeOp::LoopbackTest { frames, seed },
        } => loopback(*frames, *seed),
        Command::Plant {
            op: PlantOp::StepResponse { config, schedule, seed },
        } => step_response(config.as_deref(), schedule, *seed),
    }
}

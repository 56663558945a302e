//! `qecmatch` command line: generate graphs and syndromes, decode, verify
//! against the exact oracle, and benchmark.
//!
//! Exit codes: 0 ok, 1 oracle mismatch, 2 bad configuration (including oracle
//! cap violations), 3 I/O failure. Log level comes from `QECMATCH_LOG`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use qecmatch::api::{Decoded, Decoder, DecoderKind};
use qecmatch::bench::{self, BenchConfig, ARTIFACT_VERSION};
use qecmatch::error::{DecoderError, OracleError};
use qecmatch::fusion::{PlanKind, Schedule};
use qecmatch::graph::{build_surface_code_graph, CodeSpec, GraphFile, ModelGraph, Syndrome};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(name = "qecmatch", version, about = "Minimum-weight perfect matching decoder for surface codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a decoding graph and sampled syndromes as JSON.
    Generate(Common),
    /// Decode sampled (or loaded) syndromes and write the results as JSON.
    Decode {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        decoder: DecoderArgs,
        /// Syndromes written by `generate`, instead of sampling.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compare decoder weights with the exact oracle; exit 1 on any mismatch.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        decoder: DecoderArgs,
        /// Skip shots with more defects than the oracle handles instead of
        /// failing.
        #[arg(long)]
        skip_large: bool,
    },
    /// Time decoding and write one CSV row per shot.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        decoder: DecoderArgs,
        #[arg(long, value_enum, default_value = "batch")]
        schedule: ScheduleArg,
        /// Virtual time units per measurement round (stream schedule).
        #[arg(long, default_value_t = 1.0)]
        cycle: f64,
    },
}

#[derive(Args)]
struct Common {
    /// Code distance, measurement rounds and error rate: `d,N,p`.
    #[arg(long, value_parser = parse_code)]
    code: CodeSpec,
    #[arg(long, default_value_t = 100)]
    shots: u64,
    #[arg(long)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecoderArgs {
    /// `parity`, `uf`, `limited:K`, `fusion`, or `fusion:KIND:M:WORKERS`.
    #[arg(long, default_value = "parity")]
    decoder: String,
    /// Fusion worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Fusion plan: `KIND,M[,h]` with KIND `balanced`, `linear` or `mixed`.
    #[arg(long, default_value = "balanced,20")]
    plan: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Batch,
    Stream,
}

enum Failure {
    Mismatch(String),
    Config(anyhow::Error),
    Io(anyhow::Error),
}

impl From<DecoderError> for Failure {
    fn from(e: DecoderError) -> Self {
        Failure::Config(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn parse_code(s: &str) -> Result<CodeSpec, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [d, n, p] = parts.as_slice() else { return Err(format!("expected d,N,p but got '{s}'")) };
    let spec = CodeSpec::new(
        d.trim().parse().map_err(|_| format!("bad distance '{d}'"))?,
        n.trim().parse().map_err(|_| format!("bad round count '{n}'"))?,
        p.trim().parse().map_err(|_| format!("bad error rate '{p}'"))?,
    );
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn parse_plan(s: &str) -> Result<(PlanKind, u32), DecoderError> {
    let bad = || DecoderError::Config(format!("bad plan '{s}', expected KIND,M[,h]"));
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let m = parts.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let kind = match (parts[0], parts.get(2)) {
        ("balanced", None) => PlanKind::Balanced,
        ("linear", None) => PlanKind::Linear,
        ("mixed", Some(h)) => PlanKind::Mixed(h.parse().map_err(|_| bad())?),
        _ => return Err(bad()),
    };
    Ok((kind, m))
}

fn decoder_kind(args: &DecoderArgs) -> Result<DecoderKind, DecoderError> {
    if args.decoder == "fusion" {
        let (plan, m) = parse_plan(&args.plan)?;
        return Ok(DecoderKind::Fusion { plan, m, workers: args.workers });
    }
    args.decoder.parse()
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display())).map_err(Failure::Io)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: &Option<PathBuf>, value: &serde_json::Value) -> Outcome {
    let mut out = open_out(path)?;
    serde_json::to_writer(&mut out, value).map_err(|e| Failure::Io(e.into()))?;
    writeln!(out).and_then(|_| out.flush()).context("write failed").map_err(Failure::Io)
}

fn meta(common: &Common, decoder: Option<DecoderKind>) -> serde_json::Value {
    json!({
        "version": ARTIFACT_VERSION,
        "code": common.code,
        "shots": common.shots,
        "seed": common.seed,
        "decoder": decoder.map(|d| d.to_string()),
    })
}

fn build_graph(code: &CodeSpec) -> Result<Arc<ModelGraph>, Failure> {
    Ok(Arc::new(build_surface_code_graph(code).map_err(DecoderError::from)?))
}

fn syndromes(graph: &ModelGraph, common: &Common) -> Vec<Syndrome> {
    (0..common.shots).map(|shot| bench::shot_syndrome(graph, common.seed, shot)).collect()
}

#[derive(Serialize, Deserialize)]
struct Generated {
    meta: serde_json::Value,
    graph: GraphFile,
    syndromes: Vec<Syndrome>,
}

fn generate(common: &Common) -> Outcome {
    let graph = build_graph(&common.code)?;
    let file = Generated { meta: meta(common, None), graph: GraphFile::from_graph(&graph), syndromes: syndromes(&graph, common) };
    info!("generated {} shots on {} vertices", common.shots, graph.vertex_count());
    write_json(&common.out, &serde_json::to_value(file).expect("generated file serializes"))
}

fn decode(common: &Common, args: &DecoderArgs, input: &Option<PathBuf>) -> Outcome {
    let kind = decoder_kind(args)?;
    let (graph, shots) = match input {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(Failure::Io)?;
            let file: Generated = serde_json::from_str(&text)
                .with_context(|| format!("{} is not a generate output", path.display()))
                .map_err(Failure::Config)?;
            let graph = Arc::new(file.graph.to_graph().map_err(DecoderError::from)?);
            (graph, file.syndromes)
        }
        None => {
            let graph = build_graph(&common.code)?;
            let shots = syndromes(&graph, common);
            (graph, shots)
        }
    };
    let mut decoder = Decoder::for_graph(graph, kind)?;
    let mut results: Vec<Decoded> = Vec::with_capacity(shots.len());
    for s in &shots {
        results.push(decoder.decode(&s.defects)?);
    }
    write_json(&common.out, &json!({ "meta": meta(common, Some(kind)), "results": results }))
}

fn verify(common: &Common, args: &DecoderArgs, skip_large: bool) -> Outcome {
    let kind = decoder_kind(args)?;
    let graph = build_graph(&common.code)?;
    let mut decoder = Decoder::for_graph(Arc::clone(&graph), kind)?;
    let (mut checked, mut skipped, mut mismatches) = (0u64, 0u64, Vec::new());
    for (shot, s) in syndromes(&graph, common).iter().enumerate() {
        match decoder.verify(&s.defects) {
            Ok(true) => checked += 1,
            Ok(false) => {
                checked += 1;
                mismatches.push(shot);
            }
            Err(DecoderError::Oracle(OracleError::TooManyDefects { .. })) if skip_large => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let report = json!({
        "meta": meta(common, Some(kind)),
        "checked": checked,
        "skipped": skipped,
        "mismatched_shots": mismatches,
    });
    write_json(&common.out, &report)?;
    if skipped > 0 {
        warn!("{skipped} shots exceeded the oracle cap and were skipped");
    }
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(Failure::Mismatch(format!("{} of {checked} shots differ from the oracle", mismatches.len())))
    }
}

fn run_bench(common: &Common, args: &DecoderArgs, schedule: ScheduleArg, cycle: f64) -> Outcome {
    let mut config = BenchConfig::new(common.code, decoder_kind(args)?, common.shots, common.seed);
    config.schedule = match schedule {
        ScheduleArg::Batch => Schedule::Batch,
        ScheduleArg::Stream => Schedule::Stream,
    };
    config.cycle_time = cycle;
    let rows = bench::run(&config)?;
    let summary = bench::summarize(&rows);
    info!("mean per-round time {:.1} ns, median {:.1} ns", summary.mean_per_round_ns, summary.median_per_round_ns);
    let mut out = open_out(&common.out)?;
    bench::write_csv(&mut out, &config, &rows).and_then(|_| out.flush()).context("write failed").map_err(Failure::Io)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QECMATCH_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(common) => generate(common),
        Command::Decode { common, decoder, input } => decode(common, decoder, input),
        Command::Verify { common, decoder, skip_large } => verify(common, decoder, *skip_large),
        Command::Bench { common, decoder, schedule, cycle } => run_bench(common, decoder, *schedule, *cycle),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

//! Seeded benchmark runs producing plot-ready CSV rows.
//!
//! Graph and decoder construction happen before the clock starts; each shot's
//! timing covers reset plus decode, not sampling.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::api::{Decoder, DecoderKind};
use crate::error::DecoderError;
use crate::fusion::Schedule;
use crate::graph::{build_surface_code_graph, sample_syndrome, CodeSpec, ModelGraph, Syndrome};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed of shot `shot` in a run seeded with `seed`.
pub fn shot_seed(seed: u64, shot: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(shot)
}

pub fn shot_syndrome(g: &ModelGraph, seed: u64, shot: u64) -> Syndrome {
    sample_syndrome(g, shot_seed(seed, shot))
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchConfig {
    pub code: CodeSpec,
    pub decoder: DecoderKind,
    pub shots: u64,
    pub seed: u64,
    pub schedule: Schedule,
    pub cycle_time: f64,
}

impl BenchConfig {
    pub fn new(code: CodeSpec, decoder: DecoderKind, shots: u64, seed: u64) -> Self {
        Self { code, decoder, shots, seed, schedule: Schedule::Batch, cycle_time: 1.0 }
    }

    pub fn validate(&self) -> Result<(), DecoderError> {
        if self.shots == 0 {
            return Err(DecoderError::Config("shot count must be at least 1".into()));
        }
        self.code.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub d: u32,
    #[serde(rename = "N")]
    pub rounds: u32,
    #[serde(rename = "M")]
    pub m: Option<u32>,
    pub decoder: String,
    pub workers: usize,
    pub seed: u64,
    pub shot: u64,
    pub defects: usize,
    pub weight: i64,
    pub t_ns: u64,
    pub per_round_ns: f64,
    pub latency_virtual: Option<f64>,
    pub fusion_times: Vec<f64>,
}

pub const CSV_HEADER: &str =
    "d,N,M,decoder,workers,seed,shot,defects,weight,T_ns,per_round_ns,latency_virtual,fusion_times";

impl BenchRow {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<String>| x.unwrap_or_default();
        let fusion = self.fusion_times.iter().map(|t| format!("{t:.6}")).collect::<Vec<_>>().join(";");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.3},{},{}",
            self.d,
            self.rounds,
            opt(self.m.map(|m| m.to_string())),
            self.decoder,
            self.workers,
            self.seed,
            self.shot,
            self.defects,
            self.weight,
            self.t_ns,
            self.per_round_ns,
            opt(self.latency_virtual.map(|l| format!("{l:.6}"))),
            fusion
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean_per_round_ns: f64,
    pub median_per_round_ns: f64,
    pub mean_latency_virtual: Option<f64>,
}

pub fn summarize(rows: &[BenchRow]) -> Summary {
    let mut per_round: Vec<f64> = rows.iter().map(|r| r.per_round_ns).collect();
    per_round.sort_by(f64::total_cmp);
    let mean = per_round.iter().sum::<f64>() / per_round.len().max(1) as f64;
    let median = match per_round.len() {
        0 => 0.0,
        n if n % 2 == 1 => per_round[n / 2],
        n => (per_round[n / 2 - 1] + per_round[n / 2]) / 2.0,
    };
    let latencies: Vec<f64> = rows.iter().filter_map(|r| r.latency_virtual).collect();
    let mean_latency = (!latencies.is_empty()).then(|| latencies.iter().sum::<f64>() / latencies.len() as f64);
    Summary { mean_per_round_ns: mean, median_per_round_ns: median, mean_latency_virtual: mean_latency }
}

/// Runs every shot of `config` on a decoder built once up front.
pub fn run(config: &BenchConfig) -> Result<Vec<BenchRow>, DecoderError> {
    config.validate()?;
    let graph = Arc::new(build_surface_code_graph(&config.code)?);
    run_on(graph, config)
}

pub fn run_on(graph: Arc<ModelGraph>, config: &BenchConfig) -> Result<Vec<BenchRow>, DecoderError> {
    config.validate()?;
    let mut decoder = Decoder::with_schedule(Arc::clone(&graph), config.decoder, config.schedule, config.cycle_time)?;
    let rounds = config.code.rounds.max(1);
    let mut rows = Vec::with_capacity(config.shots as usize);
    for shot in 0..config.shots {
        let syndrome = shot_syndrome(&graph, config.seed, shot);
        let start = Instant::now();
        let result = decoder.decode_result(&syndrome.defects)?;
        let t_ns = start.elapsed().as_nanos() as u64;
        let timing = decoder.last_timing();
        rows.push(BenchRow {
            d: config.code.d,
            rounds: config.code.rounds,
            m: decoder.leaf_size(),
            decoder: config.decoder.to_string(),
            workers: decoder.workers(),
            seed: config.seed,
            shot,
            defects: syndrome.len(),
            weight: result.primal_weight,
            t_ns,
            per_round_ns: t_ns as f64 / rounds as f64,
            latency_virtual: timing.map(|t| t.latency),
            fusion_times: timing.map(|t| t.fusion_times.clone()).unwrap_or_default(),
        });
    }
    Ok(rows)
}

/// Header lines recording configuration, seed and version, then the rows.
pub fn write_csv(out: &mut impl Write, config: &BenchConfig, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(out, "# qecmatch {ARTIFACT_VERSION}")?;
    writeln!(out, "# config {}", serde_json::to_string(config).expect("config serializes"))?;
    let s = summarize(rows);
    writeln!(
        out,
        "# summary mean_per_round_ns={:.3} median_per_round_ns={:.3}{}",
        s.mean_per_round_ns,
        s.median_per_round_ns,
        s.mean_latency_virtual.map(|l| format!(" mean_latency_virtual={l:.6}")).unwrap_or_default()
    )?;
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

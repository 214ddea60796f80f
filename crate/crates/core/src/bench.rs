//! Inference latency and throughput of frozen encoders on a fixed synthetic
//! batch, with speedup factors against a baseline.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{SpecialToken, TokenSequence};
use crate::encoder::EncoderModel;
use crate::numcore::Tape;
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub input_length: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            iterations: 1000,
            warmup: 10,
            input_length: 64,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub params: usize,
    pub config: BenchConfig,
    pub seconds_per_batch: f64,
    /// Samples per second.
    pub throughput: f64,
    pub environment: String,
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn environment_note() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{} {} cpu, {threads} hw threads, single stream",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// `[CLS]` followed by uniformly random non-special ids, no padding.
pub fn synthetic_batch(vocab_size: usize, batch_size: usize, input_length: usize, seed: u64) -> Vec<TokenSequence> {
    let mut r = rng::stream(seed, "bench_batch");
    let first = SpecialToken::ALL.len() as u32;
    (0..batch_size)
        .map(|_| {
            let mut ids = vec![SpecialToken::Cls.id()];
            ids.extend((1..input_length).map(|_| r.gen_range(first..vocab_size as u32)));
            TokenSequence {
                attention_mask: vec![1; ids.len()],
                ids,
            }
        })
        .collect()
}

/// Times `iterations` forward passes after `warmup` untimed ones.
pub fn run_benchmark(name: &str, model: &EncoderModel<f32>, config: &BenchConfig) -> Result<BenchReport> {
    if config.iterations == 0 || config.batch_size == 0 || config.input_length == 0 {
        return Err(Error::InvalidConfig("iterations, batch size and input length must be positive".into()));
    }
    if config.input_length > model.config().max_positions {
        return Err(Error::SequenceTooLong {
            len: config.input_length,
            max: model.config().max_positions,
        });
    }
    let batch = synthetic_batch(model.config().vocab_size, config.batch_size, config.input_length, config.seed);
    let forward = || -> Result<()> {
        let mut tape = Tape::new();
        let vars = model.params().bind_frozen(&mut tape);
        let out = model.forward(&mut tape, &vars, &batch)?;
        std::hint::black_box(tape.value(out));
        Ok(())
    };
    for _ in 0..config.warmup {
        forward()?;
    }
    let start = Instant::now();
    for _ in 0..config.iterations {
        forward()?;
    }
    let seconds_per_batch = start.elapsed().as_secs_f64() / config.iterations as f64;
    Ok(BenchReport {
        model: name.to_string(),
        params: model.num_params(),
        config: config.clone(),
        seconds_per_batch,
        throughput: config.batch_size as f64 / seconds_per_batch,
        environment: environment_note(),
    })
}

/// Throughput ratio against a baseline measured with the same config.
pub fn speedup_vs_baseline(report: &BenchReport, baseline: &BenchReport) -> Result<f64> {
    if report.config != baseline.config {
        return Err(Error::ConfigMismatch("benchmark configs differ".into()));
    }
    if std::ptr::eq(report, baseline) || report == baseline {
        return Ok(1.0);
    }
    Ok(report.throughput / baseline.throughput)
}

pub fn format_speedup(factor: f64) -> String {
    format!("x{factor:.1}")
}

/// Aligned table: model, params, seconds per batch, throughput, speedup.
pub fn render_table(reports: &[BenchReport], baseline: &BenchReport) -> Result<String> {
    let mut out = String::new();
    writeln!(
        out,
        "{:<12} {:>10} {:>14} {:>12} {:>8}",
        "Model", "Params", "Sec/batch", "Throughput", "Δ"
    )
    .ok();
    for r in reports {
        let speedup = speedup_vs_baseline(r, baseline)?;
        writeln!(
            out,
            "{:<12} {:>10} {:>14.6} {:>12.0} {:>8}",
            r.model,
            r.params,
            r.seconds_per_batch,
            r.throughput,
            format_speedup(speedup)
        )
        .ok();
    }
    Ok(out)
}

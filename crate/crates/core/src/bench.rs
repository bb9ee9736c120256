//! Latency microbenchmark of the three attention kernels.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::attention::{euclidean_attention, lorentz_cross_attention, oblique_attention, AttentionConfig};
use crate::error::{GeoError, Result};
use crate::linalg::Matrix;

/// Largest allowed `n * m` (one distance matrix per head).
pub const MAX_PAIRS: usize = 1 << 24;
pub const WARMUP: usize = 3;

pub const KERNELS: [&str; 3] = ["euclidean", "oblique", "lorentz"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub heads: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 256,
            m: 256,
            d: 256,
            heads: 4,
            repeats: 10,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 || self.heads == 0 || self.repeats == 0 {
            return Err(GeoError::InvalidConfig(
                "n, m, d, heads and repeats must all be at least 1".into(),
            ));
        }
        if !self.d.is_multiple_of(self.heads) {
            return Err(GeoError::InvalidConfig(format!(
                "d = {} is not divisible by {} heads",
                self.d, self.heads
            )));
        }
        match self.n.checked_mul(self.m) {
            Some(p) if p <= MAX_PAIRS => Ok(()),
            _ => Err(GeoError::SizeCap {
                n: self.n,
                m: self.m,
                cap: MAX_PAIRS,
            }),
        }
    }
}

/// Timing summary for one kernel, in nanoseconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub kernel: String,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub heads: usize,
    pub space: String,
    pub mean_ns: f64,
    pub p50_ns: f64,
    pub p95_ns: f64,
    pub repeats: usize,
}

pub const CSV_HEADER: &str = "kernel,n,m,d,heads,space,mean_ns,p50_ns,p95_ns,repeats";

impl BenchRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.kernel,
            self.n,
            self.m,
            self.d,
            self.heads,
            self.space,
            self.mean_ns,
            self.p50_ns,
            self.p95_ns,
            self.repeats
        )
    }
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize(kernel: &str, space: &str, cfg: &BenchConfig, mut samples: Vec<f64>) -> BenchRecord {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.sort_by(f64::total_cmp);
    BenchRecord {
        kernel: kernel.to_string(),
        n: cfg.n,
        m: cfg.m,
        d: cfg.d,
        heads: cfg.heads,
        space: space.to_string(),
        mean_ns: if samples.len() == 1 { samples[0] } else { mean },
        p50_ns: percentile(&samples, 50.0),
        p95_ns: percentile(&samples, 95.0),
        repeats: samples.len(),
    }
}

/// Times every kernel on the same seeded inputs: `WARMUP` untimed calls,
/// then `repeats` timed ones on a monotonic clock.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sample = |r: usize, c: usize| {
        let data: Vec<f64> = (0..r * c).map(|_| StandardNormal.sample(&mut rng)).collect();
        Matrix::new(r, c, data)
    };
    let (q, k, v) = (sample(cfg.n, cfg.d)?, sample(cfg.m, cfg.d)?, sample(cfg.m, cfg.d)?);
    let acfg = AttentionConfig {
        heads: cfg.heads,
        ..AttentionConfig::default()
    };

    let mut records = Vec::with_capacity(KERNELS.len());
    for kernel in KERNELS {
        let (space, call): (&str, &dyn Fn() -> Result<Matrix<f64>>) = match kernel {
            "euclidean" => ("euclidean", &|| euclidean_attention(&q, &k, &v, &acfg)),
            "oblique" => ("oblique", &|| oblique_attention(&q, &k, &v, &acfg)),
            _ => ("lorentz", &|| lorentz_cross_attention(&q, &k, &v, &acfg)),
        };
        for _ in 0..WARMUP {
            black_box(call()?);
        }
        let mut samples = Vec::with_capacity(cfg.repeats);
        for _ in 0..cfg.repeats {
            let start = Instant::now();
            black_box(call()?);
            samples.push(start.elapsed().as_nanos() as f64);
        }
        records.push(summarize(kernel, space, cfg, samples));
    }
    Ok(records)
}

pub fn write_csv<W: Write>(records: &[BenchRecord], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.to_csv_row())?;
    }
    Ok(())
}

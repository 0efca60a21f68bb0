//! Distributional comparison of image sets and pipeline timing statistics.
//!
//! The distribution feature is a pooled 256-bin grayscale intensity
//! histogram with additive-epsilon smoothing; divergence is the natural-log
//! Kullback-Leibler sum. This is a deliberately simple, documented feature
//! choice — it measures tonal shift, not semantic similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{process_image, PipelineConfig, StageTimings};
use crate::render::RgbImage;

pub const HISTOGRAM_BINS: usize = 256;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Smoothed, normalized intensity distribution over 8-bit grayscale values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntensityDistribution {
    bins: Vec<f64>,
    sample_count: u64,
    smoothing_epsilon: f64,
}

impl IntensityDistribution {
    /// Normalizes raw bin counts with additive-epsilon smoothing, so every
    /// probability is strictly positive.
    pub fn from_counts(counts: &[u64], epsilon: f64) -> Result<IntensityDistribution> {
        if counts.is_empty() {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        if !(epsilon > 0.0) {
            return Err(Error::invalid("smoothing epsilon must be positive"));
        }
        let total: u64 = counts.iter().sum();
        let denom = total as f64 + epsilon * counts.len() as f64;
        let bins = counts
            .iter()
            .map(|&c| (c as f64 + epsilon) / denom)
            .collect();
        Ok(IntensityDistribution {
            bins,
            sample_count: total,
            smoothing_epsilon: epsilon,
        })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn smoothing_epsilon(&self) -> f64 {
        self.smoothing_epsilon
    }
}

/// Pools all pixels of all images into one smoothed 256-bin distribution.
pub fn intensity_histogram(
    images: &[image::GrayImage],
    epsilon: f64,
) -> Result<IntensityDistribution> {
    if images.is_empty() {
        return Err(Error::invalid("need at least one image"));
    }
    let mut counts = [0u64; HISTOGRAM_BINS];
    for img in images {
        for p in img.pixels() {
            counts[p.0[0] as usize] += 1;
        }
    }
    IntensityDistribution::from_counts(&counts, epsilon)
}

/// Kullback-Leibler divergence `sum p ln(p/q)` in nats. Requires matching
/// bin counts and smoothed (all-positive) inputs.
pub fn kl_divergence(p: &IntensityDistribution, q: &IntensityDistribution) -> Result<f64> {
    if p.bins.len() != q.bins.len() {
        return Err(Error::invalid(format!(
            "bin count mismatch: {} vs {}",
            p.bins.len(),
            q.bins.len()
        )));
    }
    Ok(p.bins
        .iter()
        .zip(&q.bins)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum())
}

/// Per-stage min/max/mean wall time statistics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StageStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl StageStats {
    fn from_samples(samples: &[f64]) -> StageStats {
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        StageStats { min, max, mean }
    }
}

/// Timing summary of the three pipeline stages over repeated runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingReport {
    pub particle_count: usize,
    pub runs: usize,
    pub simulate: StageStats,
    pub rasterize: StageStats,
    pub render: StageStats,
}

impl TimingReport {
    pub fn total_mean(&self) -> f64 {
        self.simulate.mean + self.rasterize.mean + self.render.mean
    }
}

/// Runs the in-memory pipeline `runs` times on `source` with per-run seeds
/// and aggregates per-stage wall times. One warm-up run is discarded. Runs
/// execute strictly sequentially to avoid contention skew.
pub fn timing_report(cfg: &PipelineConfig, source: &RgbImage, runs: usize) -> Result<TimingReport> {
    if runs == 0 {
        return Err(Error::invalid("runs must be at least 1"));
    }
    process_image(source, cfg.seed, cfg)?; // warm-up

    let mut timings: Vec<StageTimings> = Vec::with_capacity(runs);
    for run in 0..runs {
        let seed = cfg.seed.wrapping_add(run as u64);
        timings.push(process_image(source, seed, cfg)?.timings);
    }
    let collect = |f: fn(&StageTimings) -> f64| -> Vec<f64> { timings.iter().map(f).collect() };
    Ok(TimingReport {
        particle_count: cfg.particle_count,
        runs,
        simulate: StageStats::from_samples(&collect(|t| t.simulate)),
        rasterize: StageStats::from_samples(&collect(|t| t.rasterize)),
        render: StageStats::from_samples(&collect(|t| t.render)),
    })
}

/// Timing reports over a sweep of particle counts, exposing how simulation
/// cost grows with mesh density.
pub fn timing_sweep(
    cfg: &PipelineConfig,
    source: &RgbImage,
    runs: usize,
    particle_counts: &[usize],
) -> Result<Vec<TimingReport>> {
    particle_counts
        .iter()
        .map(|&n| {
            let swept = PipelineConfig {
                particle_count: n,
                ..cfg.clone()
            };
            timing_report(&swept, source, runs)
        })
        .collect()
}

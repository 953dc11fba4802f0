//! Seeded Monte Carlo weak-error estimation on coupled grids.
//!
//! Every path draws its Brownian increments on the finest grid from a
//! ChaCha stream keyed by `(seed, path_index)`, with the word position
//! playing the role of the step counter, so any single path can be
//! regenerated in isolation. Coarser grids sum consecutive fine increments,
//! which couples all levels through common random numbers.
//!
//! Paths are simulated in fixed-size chunks on the rayon pool; per-chunk
//! statistics are merged in chunk order, so reports do not depend on the
//! number of worker threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::moments::weak_error_exact;
use crate::problems::Problem;
use crate::schemes::{run_terminal, SchemeConfig, SchemeKind};

const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub finest_n: usize,
    pub levels: Vec<usize>,
    pub antithetic: bool,
}

impl McConfig {
    pub const DEFAULT_PATHS: usize = 1_000_000;

    /// Configuration whose finest grid is the largest level.
    pub fn new(levels: Vec<usize>, n_paths: usize, seed: u64) -> Self {
        let finest_n = levels.iter().copied().max().unwrap_or(1).next_power_of_two();
        Self {
            n_paths,
            seed,
            finest_n,
            levels,
            antithetic: true,
        }
    }

    pub fn with_finest(mut self, finest_n: usize) -> Self {
        self.finest_n = finest_n;
        self
    }

    pub fn with_antithetic(mut self, antithetic: bool) -> Self {
        self.antithetic = antithetic;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.finest_n.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "finest_n = {} is not a power of two",
                self.finest_n
            )));
        }
        if self.n_paths < 100 {
            return Err(Error::InvalidConfig(format!(
                "n_paths = {} is below the minimum of 100",
                self.n_paths
            )));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(Error::InvalidConfig("antithetic sampling needs an even n_paths".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidConfig("no levels requested".into()));
        }
        if let Some(bad) = self.levels.iter().find(|&&l| l == 0 || self.finest_n % l != 0) {
            return Err(Error::InvalidConfig(format!(
                "level {bad} does not divide finest_n = {}",
                self.finest_n
            )));
        }
        Ok(())
    }

    /// Independent samples: antithetic pairs count once.
    pub fn n_samples(&self) -> usize {
        if self.antithetic {
            self.n_paths / 2
        } else {
            self.n_paths
        }
    }
}

/// Counter-based standard normal source for one path.
pub struct PathNormals {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl PathNormals {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self {
            rng,
            normal: Normal::standard(),
        }
    }

    /// Jumps to the draw at `step_index` on this path.
    pub fn seek(&mut self, step_index: u64) {
        self.rng.set_word_pos(2 * step_index as u128);
    }

    /// Inverse-CDF transform of a uniform in the open interval (0, 1).
    pub fn next_normal(&mut self) -> f64 {
        let u = ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        self.normal.inverse_cdf(u)
    }
}

/// Fine-grid increments `ΔW ~ N(0, T/finest_n)` for `path_index`.
pub fn sample_increments(cfg: &McConfig, horizon: f64, path_index: u64) -> Vec<f64> {
    let sd = (horizon / cfg.finest_n as f64).sqrt();
    let mut normals = PathNormals::new(cfg.seed, path_index);
    (0..cfg.finest_n).map(|_| sd * normals.next_normal()).collect()
}

/// Sums consecutive fine increments onto a grid of `n_steps` steps.
pub fn coarsen(fine: &[f64], n_steps: usize) -> Vec<f64> {
    let ratio = fine.len() / n_steps;
    fine.chunks_exact(ratio).map(|c| c.iter().sum()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    Mc,
    Oracle,
    PsiPrediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    /// Closed-form `E f(X_T)`.
    Exact,
    /// Implicit scheme on the finest grid, Richardson-corrected against half of it.
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub n_steps: usize,
    pub h: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub source: EstimateSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorReport {
    pub problem: String,
    pub scheme: SchemeKind,
    pub reference: f64,
    pub reference_source: ReferenceSource,
    pub levels: Vec<LevelEstimate>,
    /// Covariance of the level estimates (not of single paths); zero for
    /// noise-free sources.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariance: Vec<Vec<f64>>,
    #[serde(default)]
    pub n_samples: usize,
}

impl WeakErrorReport {
    /// Noise-free report from the moment oracle.
    pub fn from_oracle(p: &Problem, kind: SchemeKind, levels: &[usize]) -> Result<Self> {
        let reference = p.exact_terminal().ok_or_else(|| {
            Error::Unsupported(format!("problem {} has no exact terminal value", p.name))
        })?;
        let levels = levels
            .iter()
            .map(|&n| {
                let cfg = SchemeConfig::new(p, n, kind)?;
                Ok(LevelEstimate {
                    n_steps: n,
                    h: cfg.step_size(p),
                    estimate: weak_error_exact(p, &cfg)?,
                    stderr: 0.0,
                    source: EstimateSource::Oracle,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let k = levels.len();
        Ok(Self {
            problem: p.name.clone(),
            scheme: kind,
            reference,
            reference_source: ReferenceSource::Exact,
            levels,
            covariance: vec![vec![0.0; k]; k],
            n_samples: 0,
        })
    }

    pub fn level(&self, n_steps: usize) -> Option<(usize, &LevelEstimate)> {
        self.levels.iter().enumerate().find(|(_, l)| l.n_steps == n_steps)
    }
}

/// Running mean and co-moment matrix, mergeable in a fixed order.
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    comoment: Vec<Vec<f64>>,
}

impl Moments {
    fn from_samples(samples: &[Vec<f64>], dim: usize) -> Self {
        let count = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        if count > 0.0 {
            for m in &mut mean {
                *m /= count;
            }
        }
        let mut comoment = vec![vec![0.0; dim]; dim];
        for s in samples {
            for i in 0..dim {
                let di = s[i] - mean[i];
                for j in 0..dim {
                    comoment[i][j] += di * (s[j] - mean[j]);
                }
            }
        }
        Self { count, mean, comoment }
    }

    fn merge(self, other: Self) -> Self {
        if self.count == 0.0 {
            return other;
        }
        if other.count == 0.0 {
            return self;
        }
        let n = self.count + other.count;
        let dim = self.mean.len();
        let delta: Vec<f64> = (0..dim).map(|i| other.mean[i] - self.mean[i]).collect();
        let mean = (0..dim)
            .map(|i| self.mean[i] + delta[i] * other.count / n)
            .collect();
        let w = self.count * other.count / n;
        let comoment = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| self.comoment[i][j] + other.comoment[i][j] + w * delta[i] * delta[j])
                    .collect()
            })
            .collect();
        Self { count: n, mean, comoment }
    }
}

fn merge_pairwise(mut parts: Vec<Moments>) -> Moments {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// Weak errors `E f(X^N_T) − E f(X_T)` for each level in `mc.levels`, using
/// the kind and solver settings of `scheme` (its `n_steps` is ignored).
pub fn estimate_weak_error(p: &Problem, mc: &McConfig, scheme: &SchemeConfig) -> Result<WeakErrorReport> {
    mc.validate()?;
    p.validate()?;
    let level_cfgs = mc
        .levels
        .iter()
        .map(|&n| {
            let cfg = SchemeConfig { n_steps: n, ..*scheme };
            cfg.validate(p)?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let exact = p.exact_terminal();
    let surrogate_cfgs = match exact {
        Some(_) => None,
        None => {
            let largest = *mc.levels.iter().max().expect("validated non-empty");
            if mc.finest_n < 8 * largest {
                return Err(Error::InvalidConfig(format!(
                    "surrogate reference needs finest_n >= 8 x largest level ({} < {})",
                    mc.finest_n,
                    8 * largest
                )));
            }
            let implicit = SchemeConfig {
                kind: SchemeKind::Implicit,
                ..*scheme
            };
            let fine = SchemeConfig { n_steps: mc.finest_n, ..implicit };
            let half = SchemeConfig { n_steps: mc.finest_n / 2, ..implicit };
            fine.validate(p)?;
            half.validate(p)?;
            Some((fine, half))
        }
    };

    // Sample vector: one entry per level, then the reference sample.
    let dim = mc.levels.len() + 1;
    let n_samples = mc.n_samples();
    let n_chunks = n_samples.div_ceil(CHUNK);

    let evaluate = |increments: &[f64]| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(dim);
        for cfg in &level_cfgs {
            let coarse = coarsen(increments, cfg.n_steps);
            out.push(p.f(run_terminal(p, cfg, coarse)?));
        }
        out.push(match (&surrogate_cfgs, exact) {
            (Some((fine, half)), _) => {
                let f_fine = p.f(run_terminal(p, fine, increments.iter().copied())?);
                let f_half = p.f(run_terminal(p, half, coarsen(increments, half.n_steps))?);
                2.0 * f_fine - f_half
            }
            (None, Some(value)) => value,
            (None, None) => unreachable!("surrogate built when exact value is absent"),
        });
        Ok(out)
    };

    let chunks = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n_samples);
            let mut samples = Vec::with_capacity(end - start);
            for s in start..end {
                let index = s as u64;
                let mut increments = sample_increments(mc, p.horizon, index);
                let mut sample = evaluate(&increments).map_err(|e| e.on_path(index))?;
                if mc.antithetic {
                    for dw in &mut increments {
                        *dw = -*dw;
                    }
                    let mirrored = evaluate(&increments).map_err(|e| e.on_path(index))?;
                    for (a, b) in sample.iter_mut().zip(mirrored) {
                        *a = 0.5 * (*a + b);
                    }
                }
                // Level samples are centred on the same path's reference.
                let reference = sample[dim - 1];
                for v in sample.iter_mut().take(dim - 1) {
                    *v -= reference;
                }
                samples.push(sample);
            }
            Ok(Moments::from_samples(&samples, dim))
        })
        .collect::<Result<Vec<_>>>()?;

    let stats = merge_pairwise(chunks);
    let n = stats.count;
    let cov_of_mean = |i: usize, j: usize| {
        if n > 1.0 {
            stats.comoment[i][j] / (n - 1.0) / n
        } else {
            0.0
        }
    };

    let levels = level_cfgs
        .iter()
        .enumerate()
        .map(|(i, cfg)| LevelEstimate {
            n_steps: cfg.n_steps,
            h: cfg.step_size(p),
            estimate: stats.mean[i],
            stderr: cov_of_mean(i, i).max(0.0).sqrt(),
            source: EstimateSource::Mc,
        })
        .collect();
    let k = dim - 1;
    let covariance = (0..k)
        .map(|i| (0..k).map(|j| cov_of_mean(i, j)).collect())
        .collect();

    Ok(WeakErrorReport {
        problem: p.name.clone(),
        scheme: scheme.kind,
        reference: stats.mean[dim - 1],
        reference_source: if exact.is_some() {
            ReferenceSource::Exact
        } else {
            ReferenceSource::Surrogate
        },
        levels,
        covariance,
        n_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RichardsonPoint {
    /// Step of the coarser level `N`.
    pub h: f64,
    pub n_steps: usize,
    pub extrapolated_error: f64,
    pub stderr: f64,
}

/// `2·err(2N) − err(N)` for every level `N` whose refinement `2N` is present.
pub fn richardson(report: &WeakErrorReport) -> Result<Vec<RichardsonPoint>> {
    let cov = |i: usize, j: usize| {
        report
            .covariance
            .get(i)
            .and_then(|row| row.get(j))
            .copied()
            .unwrap_or_else(|| {
                if i == j {
                    report.levels[i].stderr.powi(2)
                } else {
                    0.0
                }
            })
    };
    let mut points = Vec::new();
    for (i, coarse) in report.levels.iter().enumerate() {
        if let Some((j, fine)) = report.level(2 * coarse.n_steps) {
            let variance = 4.0 * cov(j, j) + cov(i, i) - 4.0 * cov(i, j);
            points.push(RichardsonPoint {
                h: coarse.h,
                n_steps: coarse.n_steps,
                extrapolated_error: 2.0 * fine.estimate - coarse.estimate,
                stderr: variance.max(0.0).sqrt(),
            });
        }
    }
    if points.is_empty() {
        return Err(Error::UnmatchedLevels(format!(
            "no pair (N, 2N) among levels {:?}",
            report.levels.iter().map(|l| l.n_steps).collect::<Vec<_>>()
        )));
    }
    Ok(points)
}

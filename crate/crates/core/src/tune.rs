//! Exhaustive configuration search over simulated cycles.

use std::fmt::Write as _;

use crate::config::{AlgoConfig, Algorithm};
use crate::error::{Error, Result};
use crate::par;
use crate::shape::ConvShape;
use crate::sim::{simulate_config, MachineConfig, PipelineMetrics, SimMetrics};

/// Candidate values per tunable parameter. Only the parameters an algorithm
/// reads are enumerated for it, so every grid point is a distinct kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    pub tiles: Vec<usize>,
    pub out_channels_per_thread: Vec<usize>,
    pub cache_filter: Vec<bool>,
    pub transpose_output: Vec<bool>,
    pub gemm_tiles: Vec<usize>,
    /// ILP-M workgroup widths; `None` is the algorithm default.
    pub wg_channels: Vec<Option<usize>>,
    /// When set, exactly these configurations are tried instead of the grid.
    pub fixed: Option<Vec<AlgoConfig>>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            tiles: vec![2, 4, 7, 8, 14, 16],
            out_channels_per_thread: vec![1, 2, 4, 8],
            cache_filter: vec![true, false],
            transpose_output: vec![true, false],
            gemm_tiles: vec![8, 16, 32],
            wg_channels: vec![None],
            fixed: None,
        }
    }
}

impl SearchSpace {
    /// A space made of the given configurations only.
    pub fn of(configs: Vec<AlgoConfig>) -> Self {
        SearchSpace {
            fixed: Some(configs),
            ..SearchSpace::default()
        }
    }

    /// Every grid point for `algorithm`, in lexicographic order.
    pub fn candidates(&self, algorithm: Algorithm, shape: &ConvShape) -> Vec<AlgoConfig> {
        if let Some(fixed) = &self.fixed {
            let mut v: Vec<_> = fixed
                .iter()
                .filter(|c| c.algorithm == algorithm)
                .copied()
                .collect();
            v.sort();
            v.dedup();
            return v;
        }
        let base = AlgoConfig::default_for(algorithm, shape);
        let mut out = Vec::new();
        match algorithm {
            Algorithm::Oracle => out.push(base),
            Algorithm::Im2col | Algorithm::Winograd => {
                for &m in &self.gemm_tiles {
                    for &n in &self.gemm_tiles {
                        for &k in &self.gemm_tiles {
                            out.push(base.with_gemm_tiles(m, n, k));
                        }
                    }
                }
            }
            Algorithm::FusedUnroll => {
                for &tile_x in &self.tiles {
                    for &tile_y in &self.tiles {
                        for &gemm_tile_m in &self.gemm_tiles {
                            out.push(AlgoConfig {
                                tile_x,
                                tile_y,
                                gemm_tile_m,
                                ..base
                            });
                        }
                    }
                }
            }
            Algorithm::Direct => {
                for &tile_x in &self.tiles {
                    for &tile_y in &self.tiles {
                        for &o in &self.out_channels_per_thread {
                            for &cache in &self.cache_filter {
                                out.push(AlgoConfig::direct(cache, o, tile_x, tile_y));
                            }
                        }
                    }
                }
            }
            Algorithm::Ilpm => {
                for &tile_x in &self.tiles {
                    for &tile_y in &self.tiles {
                        for &t in &self.transpose_output {
                            for &w in &self.wg_channels {
                                out.push(AlgoConfig {
                                    wg_channels: w,
                                    ..AlgoConfig::ilpm(tile_x, tile_y, t)
                                });
                            }
                        }
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

/// One point of the search: its cycle count, or why it was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub config: AlgoConfig,
    pub cycles: Option<u64>,
    /// Barriers per workgroup summed over the pipeline's kernels.
    pub barriers: Option<u64>,
    pub skip_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: AlgoConfig,
    pub best_metrics: SimMetrics,
    pub best_pipeline: PipelineMetrics,
    /// Every candidate in lexicographic config order.
    pub trials: Vec<Trial>,
}

pub const AUDIT_HEADER: &str =
    "algorithm,tile_x,tile_y,out_channels_per_thread,gemm_tile_m,gemm_tile_n,gemm_tile_k,cache_filter,transpose_output,wg_channels,barriers,cycles,skip_reason";

impl TuneResult {
    /// The best trial among those with the given label (e.g. `direct_cache`).
    pub fn best_with_label(&self, label: &str) -> Option<&Trial> {
        self.trials
            .iter()
            .filter(|t| t.cycles.is_some() && t.config.label() == label)
            .min_by_key(|t| (t.cycles, t.config))
    }

    /// One CSV row per trial, header first.
    pub fn audit_csv(&self) -> String {
        let mut s = String::from(AUDIT_HEADER);
        s.push('\n');
        for t in &self.trials {
            let c = &t.config;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.label(),
                c.tile_x,
                c.tile_y,
                c.out_channels_per_thread,
                c.gemm_tile_m,
                c.gemm_tile_n,
                c.gemm_tile_k,
                c.cache_filter,
                c.transpose_output,
                c.wg_channels.map_or("auto".to_string(), |w| w.to_string()),
                t.barriers.map_or(String::new(), |b| b.to_string()),
                t.cycles.map_or(String::new(), |c| c.to_string()),
                t.skip_reason.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        s
    }
}

/// Simulates every candidate and keeps the fastest; ties go to the smallest config.
pub fn tune(
    algorithm: Algorithm,
    shape: &ConvShape,
    machine: &MachineConfig,
    space: &SearchSpace,
) -> Result<TuneResult> {
    let candidates = space.candidates(algorithm, shape);
    let outcomes = par::map(&candidates, |cfg| {
        cfg.validate(shape)
            .and_then(|_| simulate_config(cfg, shape, machine, 1))
    });
    let mut trials = Vec::with_capacity(candidates.len());
    let mut best: Option<(u64, AlgoConfig, PipelineMetrics)> = None;
    for (cfg, outcome) in candidates.into_iter().zip(outcomes) {
        match outcome {
            Ok(p) => {
                let (cycles, barriers) = (p.total.cycles, p.total.barrier_count);
                if best
                    .as_ref()
                    .is_none_or(|(c, b, _)| (cycles, cfg) < (*c, *b))
                {
                    best = Some((cycles, cfg, p));
                }
                trials.push(Trial {
                    config: cfg,
                    cycles: Some(cycles),
                    barriers: Some(barriers),
                    skip_reason: None,
                });
            }
            Err(e) => trials.push(Trial {
                config: cfg,
                cycles: None,
                barriers: None,
                skip_reason: Some(e.to_string()),
            }),
        }
    }
    let (_, best, pipeline) = best.ok_or(Error::EmptySpace)?;
    Ok(TuneResult {
        best,
        best_metrics: pipeline.total.clone(),
        best_pipeline: pipeline,
        trials,
    })
}

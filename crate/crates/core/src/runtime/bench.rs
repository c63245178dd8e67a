use std::path::Path;

use serde::Serialize;

use super::{run, Mode, PipelineConfig, RunStats, RuntimeError};
use crate::ert::ErtModel;
use crate::facedet::DetectorModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageMs {
    pub decode: f64,
    pub detect: f64,
    pub landmark: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub frames: usize,
    pub config: PipelineConfig,
    pub stage_ms: StageMs,
    pub end_to_end_ms: f64,
    pub fps: f64,
    /// Sequential end-to-end time over this configuration's.
    pub speedup: f64,
}

impl BenchReport {
    fn new(config: PipelineConfig, stats: &RunStats, baseline_ms: f64) -> Self {
        Self {
            frames: stats.frames,
            config,
            stage_ms: StageMs {
                decode: stats.mean_stage_ms.decode_ms,
                detect: stats.mean_stage_ms.detect_ms,
                landmark: stats.mean_stage_ms.landmark_ms,
            },
            end_to_end_ms: stats.end_to_end_ms,
            fps: 1000.0 / stats.end_to_end_ms,
            speedup: baseline_ms / stats.end_to_end_ms,
        }
    }
}

/// JSON list of pipeline configurations; omitted fields take defaults.
pub fn parse_grid(data: &[u8]) -> Result<Vec<PipelineConfig>, RuntimeError> {
    let grid: Vec<PipelineConfig> =
        serde_json::from_slice(data).map_err(|e| RuntimeError::InvalidConfig(format!("grid: {e}")))?;
    if grid.is_empty() {
        return Err(RuntimeError::InvalidConfig("grid is empty".into()));
    }
    for c in &grid {
        c.validate()?;
    }
    Ok(grid)
}

/// Runs the sequential baseline once, then every grid entry. Sequential
/// entries with the baseline's batch size reuse the baseline measurement.
pub fn bench(
    frames_dir: impl AsRef<Path>,
    hog: &DetectorModel,
    ert: &ErtModel,
    fps: f64,
    grid: &[PipelineConfig],
) -> Result<Vec<BenchReport>, RuntimeError> {
    let dir = frames_dir.as_ref();
    let base_cfg = grid
        .iter()
        .find(|c| c.mode == Mode::Sequential)
        .cloned()
        .unwrap_or_else(PipelineConfig::sequential);
    let base = run(dir, hog, ert, fps, &base_cfg)?.stats;
    grid.iter()
        .map(|cfg| {
            let stats = if cfg.mode == Mode::Sequential && cfg.batch_size == base_cfg.batch_size {
                base.clone()
            } else {
                run(dir, hog, ert, fps, cfg)?.stats
            };
            Ok(BenchReport::new(cfg.clone(), &stats, base.end_to_end_ms))
        })
        .collect()
}

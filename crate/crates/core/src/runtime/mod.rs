//! Frame ingestion, the detect-landmark-trace chain over a frame directory,
//! and the throughput benchmark.
//!
//! Sequential mode runs every frame through decode, detection and landmarks
//! in turn. Pipelined mode cuts the sequence into batches and runs the three
//! stages as concurrent workers joined by bounded queues; a reorder buffer
//! restores frame order, so both modes return identical results.

mod bench;
mod ingest;
mod pipeline;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blink::{self, BlinkError, BlinkTrace, FrameEars};
use crate::ert::{self, ErtError, ErtModel, EyeIndices};
use crate::facedet::{self, DetectError, Detection, DetectorModel, ScanPlan};
use crate::geom::Point;
use crate::imgio::{GrayImage, ImageError};

pub use bench::{bench, parse_grid, BenchReport, StageMs};
pub use ingest::{parse_frame_name, FrameSource};

pub const THREADS_ENV: &str = "BLINKLINE_THREADS";
/// Decode, detect and landmark.
pub const NUM_STAGES: usize = 3;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("no frame_NNNNNN.pgm files in {0}")]
    NoFrames(String),
    #[error("frame numbering gap: expected frame {expected}, found frame {found}")]
    FrameGap { expected: usize, found: usize },
    #[error("frame {index} is {found:?}, sequence is {expected:?}")]
    DimensionChange {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Ert(#[from] ErtError),
    #[error(transparent)]
    Blink(#[from] BlinkError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sequential,
    Pipelined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub batch_size: usize,
    pub detect_workers: usize,
    pub landmark_workers: usize,
    /// Bound of every inter-stage queue, in batches.
    pub queue_capacity: usize,
    pub mode: Mode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            detect_workers: 2,
            landmark_workers: 1,
            queue_capacity: 2,
            mode: Mode::Pipelined,
        }
    }
}

impl PipelineConfig {
    pub fn sequential() -> Self {
        Self {
            mode: Mode::Sequential,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.batch_size == 0 || self.detect_workers == 0 || self.landmark_workers == 0 || self.queue_capacity == 0 {
            return Err(RuntimeError::InvalidConfig(format!(
                "batch_size, worker counts and queue_capacity must be at least 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// Worker threads a pipelined run starts.
    pub fn total_workers(&self) -> usize {
        1 + self.detect_workers + self.landmark_workers
    }

    /// Shrinks the worker counts until the total fits `max_threads`, keeping
    /// one worker per stage at least.
    pub fn capped(mut self, max_threads: usize) -> Self {
        let max = max_threads.max(NUM_STAGES);
        while self.total_workers() > max {
            if self.detect_workers >= self.landmark_workers && self.detect_workers > 1 {
                self.detect_workers -= 1;
            } else {
                self.landmark_workers -= 1;
            }
        }
        self
    }

    /// Upper bound on frames held by a pipelined run at any time.
    pub fn max_resident_frames(&self) -> usize {
        (NUM_STAGES + 1) * self.queue_capacity * self.batch_size
    }
}

/// Worker cap from `BLINKLINE_THREADS`, when set to a positive integer.
pub fn thread_cap_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub decode_ms: f64,
    pub detect_ms: f64,
    pub landmark_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameResult {
    pub frame_index: usize,
    /// Post-NMS, in priority order.
    pub detections: Vec<Detection>,
    /// Highest-priority detection, fed to the landmark stage.
    pub face: Option<Detection>,
    /// Pixel-frame landmarks; present iff `face` is.
    pub landmarks: Option<Vec<Point>>,
    pub timings: StageTimings,
}

impl FrameResult {
    /// Equality of everything but the timings.
    pub fn same_output(&self, other: &FrameResult) -> bool {
        self.frame_index == other.frame_index
            && self.detections == other.detections
            && self.face == other.face
            && self.landmarks == other.landmarks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub frames: usize,
    /// Frames excluded from the means as warm-up (the first batch).
    pub warmup_frames: usize,
    pub mean_stage_ms: StageTimings,
    pub end_to_end_ms: f64,
    pub wall_ms: f64,
    /// Most frames simultaneously between decode and emission.
    pub peak_resident_frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub results: Vec<FrameResult>,
    pub trace: BlinkTrace,
    pub stats: RunStats,
}

/// Shared read-only state of one run.
pub(crate) struct Job<'a> {
    pub source: &'a FrameSource,
    pub hog: &'a DetectorModel,
    pub ert: &'a ErtModel,
    pub plan: ScanPlan,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Job<'_> {
    pub(crate) fn decode(&self, index: usize) -> Result<(GrayImage, f64), RuntimeError> {
        let t = Instant::now();
        let img = self.source.decode(index)?;
        Ok((img, ms_since(t)))
    }

    pub(crate) fn detect(&self, img: &GrayImage) -> Result<(Vec<Detection>, f64), RuntimeError> {
        let t = Instant::now();
        let dets = facedet::detect_faces_with_plan(img, self.hog, &self.plan)?;
        Ok((dets, ms_since(t)))
    }

    pub(crate) fn landmarks(&self, img: &GrayImage, face: Option<&Detection>) -> Result<(Option<Vec<Point>>, f64), RuntimeError> {
        let t = Instant::now();
        let lm = match face {
            Some(d) => Some(ert::predict_landmarks(img, &d.rect, self.ert)?.into_points()),
            None => None,
        };
        Ok((lm, ms_since(t)))
    }
}

/// Per-frame EARs; a degenerate eye leaves the frame without EAR values.
pub fn frame_ears(results: &[FrameResult], eyes: &EyeIndices) -> Result<Vec<FrameEars>, RuntimeError> {
    results
        .iter()
        .map(|r| {
            let ears = match &r.landmarks {
                Some(lm) => match blink::eye_ears(lm, eyes) {
                    Ok(e) => Some(e),
                    Err(BlinkError::DegenerateEye(_)) => None,
                    Err(e) => return Err(e.into()),
                },
                None => None,
            };
            Ok(FrameEars {
                frame_index: r.frame_index,
                face_found: r.face.is_some(),
                ears,
            })
        })
        .collect()
}

fn mean_stats(results: &[FrameResult], warmup: usize) -> StageTimings {
    let kept = &results[warmup.min(results.len().saturating_sub(1))..];
    let n = kept.len().max(1) as f64;
    let mut m = StageTimings::default();
    for r in kept {
        m.decode_ms += r.timings.decode_ms / n;
        m.detect_ms += r.timings.detect_ms / n;
        m.landmark_ms += r.timings.landmark_ms / n;
    }
    m
}

fn run_sequential(job: &Job, cfg: &PipelineConfig) -> Result<(Vec<FrameResult>, RunStats), RuntimeError> {
    let start = Instant::now();
    let n = job.source.len();
    let mut results = Vec::with_capacity(n);
    let mut e2e = Vec::with_capacity(n);
    for i in 0..n {
        let t = Instant::now();
        let (img, decode_ms) = job.decode(i)?;
        let (detections, detect_ms) = job.detect(&img)?;
        let face = detections.first().cloned();
        let (landmarks, landmark_ms) = job.landmarks(&img, face.as_ref())?;
        results.push(FrameResult {
            frame_index: i,
            detections,
            face,
            landmarks,
            timings: StageTimings {
                decode_ms,
                detect_ms,
                landmark_ms,
            },
        });
        e2e.push(ms_since(t));
    }
    let warmup = if n > cfg.batch_size { cfg.batch_size } else { 0 };
    let kept = &e2e[warmup..];
    let stats = RunStats {
        frames: n,
        warmup_frames: warmup,
        mean_stage_ms: mean_stats(&results, warmup),
        end_to_end_ms: kept.iter().sum::<f64>() / kept.len() as f64,
        wall_ms: ms_since(start),
        peak_resident_frames: 1,
    };
    Ok((results, stats))
}

/// Runs detection, landmarks and the blink trace over a frame directory.
pub fn run(
    frames_dir: impl AsRef<Path>,
    hog: &DetectorModel,
    ert: &ErtModel,
    fps: f64,
    cfg: &PipelineConfig,
) -> Result<RunOutput, RuntimeError> {
    cfg.validate()?;
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(BlinkError::InvalidFps(fps).into());
    }
    let eyes = ert.eye_indices()?;
    let source = FrameSource::open(frames_dir)?;
    let job = Job {
        source: &source,
        hog,
        ert,
        plan: ScanPlan::new(source.dims(), hog),
    };
    let (results, stats) = match cfg.mode {
        Mode::Sequential => run_sequential(&job, cfg)?,
        Mode::Pipelined => pipeline::run_pipelined(&job, cfg)?,
    };
    let ears = frame_ears(&results, &eyes)?;
    let trace = blink::build_trace(&ears, fps, blink::DEFAULT_BASELINE_QUANTILE)?;
    Ok(RunOutput { results, trace, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_checks_and_caps() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let big = PipelineConfig { detect_workers: 6, landmark_workers: 3, ..Default::default() };
        let c = big.clone().capped(4);
        assert_eq!(c.total_workers(), 4);
        assert_eq!(big.clone().capped(1).total_workers(), 3);
        assert_eq!(big.clone().capped(100), big);
        let parsed: PipelineConfig = serde_json::from_str(r#"{"mode":"sequential","batch_size":4}"#).unwrap();
        assert_eq!(parsed.mode, Mode::Sequential);
        assert_eq!(parsed.queue_capacity, 2);
        assert_eq!(PipelineConfig::default().max_resident_frames(), 4 * 2 * 16);
    }
}

//! Multi-scale HOG face detection with a bank of five linear window filters.

mod model;
mod nms;
mod scan;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Rect;
use crate::hog::{self, HogError, CELL_SIZE, NUM_FEATURES};
use crate::imgio::{self, GrayImage};

pub use model::HOG_MODEL_VERSION;
pub use nms::{nms, priority_order};
pub use scan::{score_dense, score_separable, SaliencyMap};
pub use train::{training_accuracy, train_filter, window_features, TrainConfig};

pub const WINDOW_CELLS: usize = 10;
pub const WINDOW_PX: usize = WINDOW_CELLS * CELL_SIZE;
pub const FILTER_LEN: usize = WINDOW_CELLS * WINDOW_CELLS * NUM_FEATURES;
pub const NUM_ROTATIONS: usize = 5;
pub const DEFAULT_MIN_FACE_RATIO: f64 = 0.2;
pub const DEFAULT_NMS_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("feature image {cells_w}x{cells_h} cells is smaller than the 10x10 window")]
    WindowTooLarge { cells_w: usize, cells_h: usize },
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error("model shape error: {0}")]
    Shape(String),
    #[error("model version mismatch: expected \"{expected}\", found \"{found}\"")]
    Version { expected: String, found: String },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("training needs at least one {0} example")]
    EmptyClass(&'static str),
    #[error("training example has {found} values, expected {FILTER_LEN}")]
    ExampleShape { found: usize },
}

/// One 10x10-cell linear window classifier; weights are row-major
/// `(cell_y, cell_x, feature)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFilter {
    weights: Vec<f64>,
    pub bias: f64,
}

impl LinearFilter {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self, DetectError> {
        if weights.len() != FILTER_LEN {
            return Err(DetectError::Shape(format!(
                "filter has {} weights, expected {FILTER_LEN}",
                weights.len()
            )));
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(DetectError::Shape("non-finite filter value".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros() -> Self {
        Self {
            weights: vec![0.0; FILTER_LEN],
            bias: 0.0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, dy: usize, dx: usize, f: usize) -> f64 {
        self.weights[(dy * WINDOW_CELLS + dx) * NUM_FEATURES + f]
    }

    pub fn set_weight(&mut self, dy: usize, dx: usize, f: usize, v: f64) {
        self.weights[(dy * WINDOW_CELLS + dx) * NUM_FEATURES + f] = v;
    }

    /// Score of a single window given in the same layout as the weights.
    pub fn score_window(&self, window: &[f64]) -> f64 {
        debug_assert_eq!(window.len(), FILTER_LEN);
        self.weights
            .iter()
            .zip(window)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias
    }

    /// Multiplies weights and bias by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * k).collect(),
            bias: self.bias * k,
        }
    }
}

/// Five rotation filters plus the scan parameters. Window geometry is fixed
/// at 10x10 cells of 8 pixels and a 5/6 pyramid step.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    filters: Vec<LinearFilter>,
    pub detection_threshold: f64,
    pub min_face_ratio: f64,
}

impl DetectorModel {
    pub fn new(
        filters: Vec<LinearFilter>,
        detection_threshold: f64,
        min_face_ratio: f64,
    ) -> Result<Self, DetectError> {
        if filters.len() != NUM_ROTATIONS {
            return Err(DetectError::Shape(format!(
                "model has {} filters, expected {NUM_ROTATIONS}",
                filters.len()
            )));
        }
        if !detection_threshold.is_finite() {
            return Err(DetectError::Shape("non-finite threshold".into()));
        }
        if !(0.0..=1.0).contains(&min_face_ratio) {
            return Err(DetectError::Shape(format!(
                "min_face_ratio {min_face_ratio} outside [0, 1]"
            )));
        }
        Ok(Self {
            filters,
            detection_threshold,
            min_face_ratio,
        })
    }

    /// Uses the same filter in all five rotation slots.
    pub fn replicated(filter: LinearFilter, detection_threshold: f64) -> Self {
        Self::new(
            vec![filter; NUM_ROTATIONS],
            detection_threshold,
            DEFAULT_MIN_FACE_RATIO,
        )
        .expect("replicated model is well-formed")
    }

    pub fn filters(&self) -> &[LinearFilter] {
        &self.filters
    }

    pub fn window_cells(&self) -> usize {
        WINDOW_CELLS
    }

    pub fn cell_px(&self) -> usize {
        CELL_SIZE
    }
}

/// A scored face window mapped back to original-image pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub rect: Rect,
    pub score: f64,
    pub scale_index: usize,
    pub rotation_index: usize,
}

fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Emits one detection per anchor whose score exceeds the model threshold,
/// with its window mapped back through the level's cumulative scale.
pub fn threshold_detections(
    sal: &SaliencyMap,
    model: &DetectorModel,
    scale_index: usize,
    rotation_index: usize,
) -> Vec<Detection> {
    let c = imgio::level_scale(scale_index);
    let side = round_half_up(WINDOW_PX as f64 / c);
    sal.iter()
        .filter(|&(_, _, s)| s > model.detection_threshold)
        .map(|(cx, cy, score)| Detection {
            rect: Rect::new(
                round_half_up((cx * CELL_SIZE) as f64 / c),
                round_half_up((cy * CELL_SIZE) as f64 / c),
                side,
                side,
            ),
            score,
            scale_index,
            rotation_index,
        })
        .collect()
}

/// Pyramid levels whose smallest detectable face (the 80-pixel window mapped
/// to original pixels) is at least `min_face_ratio` of the smaller image side.
pub fn eligible_scales(img_dims: (usize, usize), model: &DetectorModel, n_levels: usize) -> Vec<usize> {
    let min_face = model.min_face_ratio * img_dims.0.min(img_dims.1) as f64;
    (0..n_levels)
        .filter(|&k| {
            let face = WINDOW_PX as f64 / imgio::level_scale(k);
            // relative slack absorbs the rounding of (5/6)^k
            face >= min_face * (1.0 - 1e-12)
        })
        .collect()
}

/// Per-image-size scan layout: pyramid level sizes and the levels to scan.
/// Frame sequences of constant size compute it once.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPlan {
    pub image_dims: (usize, usize),
    pub level_dims: Vec<(usize, usize)>,
    pub levels: Vec<usize>,
}

impl ScanPlan {
    pub fn new(image_dims: (usize, usize), model: &DetectorModel) -> Self {
        let level_dims = imgio::pyramid_dims(image_dims.0, image_dims.1, WINDOW_PX);
        let levels = eligible_scales(image_dims, model, level_dims.len())
            .into_iter()
            .filter(|&k| {
                let (w, h) = level_dims[k];
                w / CELL_SIZE >= WINDOW_CELLS && h / CELL_SIZE >= WINDOW_CELLS
            })
            .collect();
        Self {
            image_dims,
            level_dims,
            levels,
        }
    }
}

/// Thresholded, pre-NMS detections of every scanned level and rotation.
pub fn raw_detections(
    img: &GrayImage,
    model: &DetectorModel,
    plan: &ScanPlan,
) -> Result<Vec<Detection>, DetectError> {
    assert_eq!(img.dims(), plan.image_dims, "scan plan built for another size");
    let Some(&deepest) = plan.levels.last() else {
        return Ok(Vec::new());
    };
    let pyramid = imgio::build_pyramid_levels(img, WINDOW_PX, deepest + 1);
    let mut dets = Vec::new();
    for &k in &plan.levels {
        let feat = hog::extract_features(&pyramid.levels[k])?;
        for (r, filter) in model.filters.iter().enumerate() {
            let sal = score_separable(&feat, filter)?;
            dets.extend(threshold_detections(&sal, model, k, r));
        }
    }
    Ok(dets)
}

pub fn detect_faces_with_plan(
    img: &GrayImage,
    model: &DetectorModel,
    plan: &ScanPlan,
) -> Result<Vec<Detection>, DetectError> {
    Ok(nms(&raw_detections(img, model, plan)?, DEFAULT_NMS_IOU))
}

/// Full detector: pyramid, features, five filters per eligible level,
/// thresholding and NMS. Output is in NMS priority order.
pub fn detect_faces(img: &GrayImage, model: &DetectorModel) -> Result<Vec<Detection>, DetectError> {
    let plan = ScanPlan::new(img.dims(), model);
    detect_faces_with_plan(img, model, &plan)
}

//! Ensemble-of-regression-trees facial landmark estimation.
//!
//! Inference starts from the mean shape placed in the face box. Each cascade
//! level aligns the mean shape to the current estimate, reads pixel pairs at
//! landmark-relative offsets, walks every tree of the level on the intensity
//! differences and adds the shrunk sum of the reached leaf deltas.

mod model;
mod shape;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point, Rect};
use crate::imgio::GrayImage;

pub use model::{ErtModel, RegressionTree, SplitNode, ERT_MODEL_VERSION, MAX_TREE_DEPTH};
pub use shape::{box_to_image, shape_similarity, similarity_transform, Shape, ShapeFrame, SimilarityTransform};
pub use train::{train_ert, ErtSample, ErtTrainConfig, TrainReport, TrainingManifest};

pub const DEFAULT_LANDMARKS: usize = 68;

#[derive(Debug, Error)]
pub enum ErtError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model shape error: {0}")]
    Shape(String),
    #[error("model version mismatch: expected \"{expected}\", found \"{found}\"")]
    Version { expected: String, found: String },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no eye-landmark mapping configured for a {0}-landmark model")]
    NoEyeMapping(usize),
    #[error("training needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("image error: {0}")]
    Image(#[from] crate::imgio::ImageError),
}

/// Six landmark indices per eye, ordered: corner, upper, upper, corner,
/// lower, lower.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EyeIndices {
    pub left: [usize; 6],
    pub right: [usize; 6],
}

impl EyeIndices {
    /// 68-point convention: left eye 36..42, right eye 42..48.
    pub const IBUG_68: EyeIndices = EyeIndices {
        left: [36, 37, 38, 39, 40, 41],
        right: [42, 43, 44, 45, 46, 47],
    };

    pub fn validate(&self, num_landmarks: usize) -> Result<(), ErtError> {
        if let Some(&i) = self.left.iter().chain(&self.right).find(|&&i| i >= num_landmarks) {
            return Err(ErtError::ShapeMismatch(format!(
                "eye landmark {i} out of range for {num_landmarks} landmarks"
            )));
        }
        Ok(())
    }
}

/// The configured mapping verbatim, or the 68-point convention when `L = 68`.
pub fn eye_indices(num_landmarks: usize, configured: Option<&EyeIndices>) -> Result<EyeIndices, ErtError> {
    match configured {
        Some(e) => {
            e.validate(num_landmarks)?;
            Ok(e.clone())
        }
        None if num_landmarks == DEFAULT_LANDMARKS => Ok(EyeIndices::IBUG_68),
        None => Err(ErtError::NoEyeMapping(num_landmarks)),
    }
}

/// Intensity at `shape[anchor] + tform(offset)` (rotation and scale only),
/// mapped through `rect`, rounded to the nearest pixel and clamped.
#[inline]
pub fn sample_intensity(
    img: &GrayImage,
    rect: &Rect,
    shape: &[Point],
    tform: &SimilarityTransform,
    anchor: usize,
    offset: Point,
) -> f64 {
    let p = box_to_image(rect, shape[anchor] + tform.apply_linear(offset));
    img.get_clamped((p.x + 0.5).floor() as i64, (p.y + 0.5).floor() as i64)
}

/// Index of the leaf reached when `intensities` yields `(I_a, I_b)` per split;
/// a node sends the walk left iff `I_a - I_b > threshold`.
pub fn traverse_leaf_index(tree: &RegressionTree, mut intensities: impl FnMut(&SplitNode) -> (f64, f64)) -> usize {
    let splits = tree.splits();
    let mut node = 0;
    while node < splits.len() {
        let s = &splits[node];
        let (a, b) = intensities(s);
        node = if a - b > s.threshold { 2 * node + 1 } else { 2 * node + 2 };
    }
    node - splits.len()
}

pub fn traverse_tree(tree: &RegressionTree, intensities: impl FnMut(&SplitNode) -> (f64, f64)) -> &[Point] {
    tree.leaf(traverse_leaf_index(tree, intensities))
}

/// Landmarks in image pixels, plus the number of intensity-difference
/// evaluations performed (exactly `T * K * F`).
pub fn predict_landmarks_counted(
    img: &GrayImage,
    rect: &Rect,
    model: &ErtModel,
) -> Result<(Shape, usize), ErtError> {
    if !(rect.w > 0.0 && rect.h > 0.0) || !rect.x.is_finite() || !rect.y.is_finite() {
        return Err(ErtError::Degenerate(format!("face box {rect:?} has no area")));
    }
    let mean = model.mean_shape();
    let mut current = mean.to_vec();
    let mut delta = vec![Point::default(); mean.len()];
    let mut evaluations = 0usize;
    for level in model.cascade() {
        let tform = similarity_transform(mean, &current).unwrap_or(SimilarityTransform::IDENTITY);
        delta.iter_mut().for_each(|d| *d = Point::default());
        for tree in level {
            let leaf = traverse_tree(tree, |s| {
                evaluations += 1;
                (
                    sample_intensity(img, rect, &current, &tform, s.anchor_a, s.offset_a),
                    sample_intensity(img, rect, &current, &tform, s.anchor_b, s.offset_b),
                )
            });
            for (d, l) in delta.iter_mut().zip(leaf) {
                *d = *d + *l;
            }
        }
        for (c, d) in current.iter_mut().zip(&delta) {
            *c = *c + *d * model.shrinkage;
        }
    }
    let shape = Shape::new(current, ShapeFrame::Normalized)?;
    Ok((shape.to_pixels(rect), evaluations))
}

pub fn predict_landmarks(img: &GrayImage, rect: &Rect, model: &ErtModel) -> Result<Shape, ErtError> {
    predict_landmarks_counted(img, rect, model).map(|(s, _)| s)
}

//! Regression-tree cascade model and its JSON file format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ErtError, EyeIndices};
use crate::geom::Point;

pub const ERT_MODEL_VERSION: &str = "ert-v1";

/// Deepest supported tree; keeps `2^depth` well inside memory.
pub const MAX_TREE_DEPTH: usize = 20;

/// Split test on the difference of two pixel intensities, each located at an
/// offset (mean-shape frame) from an anchor landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitNode {
    pub anchor_a: usize,
    pub anchor_b: usize,
    pub offset_a: Point,
    pub offset_b: Point,
    pub threshold: f64,
}

/// Complete binary tree of depth `F` in level order, with `2^F` leaves each
/// holding one shape delta of `L` points.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    depth: usize,
    num_landmarks: usize,
    splits: Vec<SplitNode>,
    leaves: Vec<Point>,
}

impl RegressionTree {
    /// `leaves` is flattened: leaf `i` occupies `i*L .. (i+1)*L`.
    pub fn new(
        depth: usize,
        num_landmarks: usize,
        splits: Vec<SplitNode>,
        leaves: Vec<Point>,
    ) -> Result<Self, ErtError> {
        if depth == 0 || depth > MAX_TREE_DEPTH {
            return Err(ErtError::Shape(format!(
                "tree depth {depth} outside 1..={MAX_TREE_DEPTH}"
            )));
        }
        let n_leaves = 1usize << depth;
        if splits.len() != n_leaves - 1 {
            return Err(ErtError::Shape(format!(
                "depth-{depth} tree has {} splits, expected {}",
                splits.len(),
                n_leaves - 1
            )));
        }
        if leaves.len() != n_leaves * num_landmarks {
            return Err(ErtError::Shape(format!(
                "depth-{depth} tree has {} leaf points, expected {} leaves of {num_landmarks}",
                leaves.len(),
                n_leaves
            )));
        }
        for s in &splits {
            if s.anchor_a >= num_landmarks || s.anchor_b >= num_landmarks {
                return Err(ErtError::Shape(format!(
                    "split anchor ({}, {}) out of range for {num_landmarks} landmarks",
                    s.anchor_a, s.anchor_b
                )));
            }
            if !(s.offset_a.is_finite() && s.offset_b.is_finite() && s.threshold.is_finite()) {
                return Err(ErtError::Shape("non-finite split parameter".into()));
            }
        }
        if leaves.iter().any(|p| !p.is_finite()) {
            return Err(ErtError::Shape("non-finite leaf delta".into()));
        }
        Ok(Self {
            depth,
            num_landmarks,
            splits,
            leaves,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_leaves(&self) -> usize {
        1 << self.depth
    }

    pub fn splits(&self) -> &[SplitNode] {
        &self.splits
    }

    pub fn leaf(&self, i: usize) -> &[Point] {
        &self.leaves[i * self.num_landmarks..(i + 1) * self.num_landmarks]
    }
}

/// Mean shape plus a rectangular `T x K` cascade of depth-`F` trees.
#[derive(Debug, Clone, PartialEq)]
pub struct ErtModel {
    mean_shape: Vec<Point>,
    cascade: Vec<Vec<RegressionTree>>,
    depth: usize,
    pub shrinkage: f64,
    eyes: Option<EyeIndices>,
}

impl ErtModel {
    pub fn new(
        mean_shape: Vec<Point>,
        cascade: Vec<Vec<RegressionTree>>,
        depth: usize,
        shrinkage: f64,
    ) -> Result<Self, ErtError> {
        let l = mean_shape.len();
        if l < 2 {
            return Err(ErtError::Shape(format!("mean shape has {l} points, need >= 2")));
        }
        if mean_shape.iter().any(|p| !p.is_finite()) {
            return Err(ErtError::Shape("non-finite mean shape".into()));
        }
        if !(shrinkage > 0.0 && shrinkage <= 1.0) {
            return Err(ErtError::Shape(format!("shrinkage {shrinkage} outside (0, 1]")));
        }
        let k = cascade.first().map_or(0, Vec::len);
        for (t, level) in cascade.iter().enumerate() {
            if level.len() != k {
                return Err(ErtError::Shape(format!(
                    "cascade level {t} has {} trees, level 0 has {k}",
                    level.len()
                )));
            }
            for tree in level {
                if tree.depth != depth || tree.num_landmarks != l {
                    return Err(ErtError::Shape(format!(
                        "tree of depth {} over {} landmarks in a depth-{depth}, {l}-landmark model",
                        tree.depth, tree.num_landmarks
                    )));
                }
            }
        }
        Ok(Self {
            mean_shape,
            cascade,
            depth,
            shrinkage,
            eyes: None,
        })
    }

    pub fn with_eye_indices(mut self, eyes: EyeIndices) -> Result<Self, ErtError> {
        eyes.validate(self.num_landmarks())?;
        self.eyes = Some(eyes);
        Ok(self)
    }

    pub fn mean_shape(&self) -> &[Point] {
        &self.mean_shape
    }

    pub fn cascade(&self) -> &[Vec<RegressionTree>] {
        &self.cascade
    }

    pub fn num_landmarks(&self) -> usize {
        self.mean_shape.len()
    }

    pub fn num_levels(&self) -> usize {
        self.cascade.len()
    }

    pub fn trees_per_level(&self) -> usize {
        self.cascade.first().map_or(0, Vec::len)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn configured_eyes(&self) -> Option<&EyeIndices> {
        self.eyes.as_ref()
    }

    /// Eye landmark indices: the configured mapping, else the 68-point convention.
    pub fn eye_indices(&self) -> Result<EyeIndices, ErtError> {
        super::eye_indices(self.num_landmarks(), self.eyes.as_ref())
    }
}

// JSON ---------------------------------------------------------------------

#[derive(Deserialize)]
struct VersionProbe {
    version: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: String,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "F")]
    f: usize,
    shrinkage: f64,
    mean_shape: Vec<[f64; 2]>,
    cascade: Vec<Vec<TreeFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eyes: Option<EyeIndices>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    splits: Vec<SplitFile>,
    leaves: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitFile {
    a: usize,
    b: usize,
    ox_a: f64,
    oy_a: f64,
    ox_b: f64,
    oy_b: f64,
    thr: f64,
}

fn pt(p: [f64; 2]) -> Point {
    Point::new(p[0], p[1])
}

impl ErtModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: ERT_MODEL_VERSION.into(),
            l: self.num_landmarks(),
            t: self.num_levels(),
            k: self.trees_per_level(),
            f: self.depth,
            shrinkage: self.shrinkage,
            mean_shape: self.mean_shape.iter().map(|p| [p.x, p.y]).collect(),
            cascade: self
                .cascade
                .iter()
                .map(|level| {
                    level
                        .iter()
                        .map(|tree| TreeFile {
                            splits: tree
                                .splits
                                .iter()
                                .map(|s| SplitFile {
                                    a: s.anchor_a,
                                    b: s.anchor_b,
                                    ox_a: s.offset_a.x,
                                    oy_a: s.offset_a.y,
                                    ox_b: s.offset_b.x,
                                    oy_b: s.offset_b.y,
                                    thr: s.threshold,
                                })
                                .collect(),
                            leaves: (0..tree.num_leaves())
                                .map(|i| tree.leaf(i).iter().map(|p| [p.x, p.y]).collect())
                                .collect(),
                        })
                        .collect()
                })
                .collect(),
            eyes: self.eyes.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json_slice(data: &[u8]) -> Result<Self, ErtError> {
        let probe: VersionProbe = serde_json::from_slice(data)?;
        if probe.version != ERT_MODEL_VERSION {
            return Err(ErtError::Version {
                expected: ERT_MODEL_VERSION.into(),
                found: probe.version,
            });
        }
        let file: ModelFile = serde_json::from_slice(data)?;
        if file.mean_shape.len() != file.l {
            return Err(ErtError::Shape(format!(
                "mean shape has {} points, L = {}",
                file.mean_shape.len(),
                file.l
            )));
        }
        if file.cascade.len() != file.t {
            return Err(ErtError::Shape(format!(
                "cascade has {} levels, T = {}",
                file.cascade.len(),
                file.t
            )));
        }
        if file.f == 0 || file.f > MAX_TREE_DEPTH {
            return Err(ErtError::Shape(format!("F = {} outside 1..={MAX_TREE_DEPTH}", file.f)));
        }
        let mut cascade = Vec::with_capacity(file.t);
        for (t, level) in file.cascade.into_iter().enumerate() {
            if level.len() != file.k {
                return Err(ErtError::Shape(format!(
                    "cascade level {t} has {} trees, K = {}",
                    level.len(),
                    file.k
                )));
            }
            let mut trees = Vec::with_capacity(level.len());
            for tree in level {
                if tree.leaves.len() != 1 << file.f {
                    return Err(ErtError::Shape(format!(
                        "tree has {} leaves, expected {}",
                        tree.leaves.len(),
                        1usize << file.f
                    )));
                }
                if let Some(bad) = tree.leaves.iter().find(|leaf| leaf.len() != file.l) {
                    return Err(ErtError::Shape(format!(
                        "leaf delta has {} points, L = {}",
                        bad.len(),
                        file.l
                    )));
                }
                let splits = tree
                    .splits
                    .into_iter()
                    .map(|s| SplitNode {
                        anchor_a: s.a,
                        anchor_b: s.b,
                        offset_a: Point::new(s.ox_a, s.oy_a),
                        offset_b: Point::new(s.ox_b, s.oy_b),
                        threshold: s.thr,
                    })
                    .collect();
                let leaves = tree.leaves.into_iter().flatten().map(pt).collect();
                trees.push(RegressionTree::new(file.f, file.l, splits, leaves)?);
            }
            cascade.push(trees);
        }
        let model = ErtModel::new(
            file.mean_shape.into_iter().map(pt).collect(),
            cascade,
            file.f,
            file.shrinkage,
        )?;
        match file.eyes {
            Some(eyes) => model.with_eye_indices(eyes),
            None => Ok(model),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ErtError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| ErtError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ErtError> {
        let path = path.as_ref();
        let data = fs::read(path).map_err(|source| ErtError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_slice(&data)
    }
}

//! Gradient-boosted training of a regression-tree cascade.
//!
//! Each level fixes the per-sample shape estimate and similarity transform at
//! level start, samples a pool of landmark-anchored pixel positions and reads
//! their intensities once. Trees are then grown greedily on the residuals,
//! and every sample's estimate moves by `nu * leaf` after each tree.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    box_to_image, similarity_transform, ErtError, ErtModel, RegressionTree, Shape, ShapeFrame, SimilarityTransform,
    SplitNode, MAX_TREE_DEPTH,
};
use crate::geom::{Point, Rect};
use crate::imgio::{load_pgm, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErtTrainConfig {
    #[serde(rename = "T")]
    pub levels: usize,
    #[serde(rename = "K")]
    pub trees_per_level: usize,
    #[serde(rename = "F")]
    pub depth: usize,
    pub shrinkage: f64,
    /// Candidate splits drawn per tree node.
    #[serde(rename = "S")]
    pub candidate_splits: usize,
    /// Pixel positions sampled per cascade level.
    pub feature_pool: usize,
    /// Margin around the mean-shape bounding box, as a fraction of its size.
    pub padding: f64,
    pub seed: u64,
}

impl Default for ErtTrainConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            trees_per_level: 50,
            depth: 3,
            shrinkage: 0.1,
            candidate_splits: 20,
            feature_pool: 200,
            padding: 0.1,
            seed: 0,
        }
    }
}

impl ErtTrainConfig {
    pub fn validate(&self) -> Result<(), ErtError> {
        let bad = |m: String| Err(ErtError::InvalidConfig(m));
        if self.levels == 0 || self.trees_per_level == 0 {
            return bad(format!("T = {} and K = {} must be positive", self.levels, self.trees_per_level));
        }
        if self.depth == 0 || self.depth > MAX_TREE_DEPTH {
            return bad(format!("F = {} outside 1..={MAX_TREE_DEPTH}", self.depth));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return bad(format!("shrinkage {} outside (0, 1]", self.shrinkage));
        }
        if self.candidate_splits == 0 {
            return bad("S must be positive".into());
        }
        if self.feature_pool < 2 {
            return bad(format!("feature pool {} must be at least 2", self.feature_pool));
        }
        if !(self.padding >= 0.0 && self.padding.is_finite()) {
            return bad(format!("padding {} must be a non-negative number", self.padding));
        }
        Ok(())
    }
}

/// One training face: image, face box and target landmarks (normalized frame).
#[derive(Debug, Clone)]
pub struct ErtSample {
    pub image: GrayImage,
    pub rect: Rect,
    pub target: Shape,
}

/// Training-set error before training and after each cascade level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean point-to-point distance in the normalized frame.
    pub mean_error: Vec<f64>,
    /// Mean squared point-to-point distance in the normalized frame.
    pub mean_sq_error: Vec<f64>,
}

fn shape_errors(current: &[Vec<Point>], targets: &[&[Point]]) -> (f64, f64) {
    let (mut sum, mut sq, mut n) = (0.0, 0.0, 0usize);
    for (c, t) in current.iter().zip(targets) {
        for (p, q) in c.iter().zip(t.iter()) {
            let d = p.dist(*q);
            sum += d;
            sq += d * d;
            n += 1;
        }
    }
    (sum / n as f64, sq / n as f64)
}

struct PoolPoint {
    anchor: usize,
    offset: Point,
}

fn sample_pool(mean: &[Point], cfg: &ErtTrainConfig, rng: &mut ChaCha8Rng) -> Vec<PoolPoint> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in mean {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let pad_x = (x1 - x0) * cfg.padding;
    let pad_y = (y1 - y0) * cfg.padding;
    (0..cfg.feature_pool)
        .map(|_| {
            let p = Point::new(
                rng.gen_range(x0 - pad_x..=x1 + pad_x),
                rng.gen_range(y0 - pad_y..=y1 + pad_y),
            );
            let anchor = (0..mean.len())
                .min_by(|&i, &j| p.dist(mean[i]).total_cmp(&p.dist(mean[j])))
                .expect("mean shape is non-empty");
            PoolPoint {
                anchor,
                offset: p - mean[anchor],
            }
        })
        .collect()
}

struct Candidate {
    a: usize,
    b: usize,
    threshold: f64,
}

/// Sum of residuals over `members` that go left under `c`, and their count.
fn left_sums(
    c: &Candidate,
    members: &[usize],
    pixels: &[Vec<f64>],
    residuals: &[Vec<Point>],
    out: &mut [Point],
) -> usize {
    out.iter_mut().for_each(|p| *p = Point::default());
    let mut n = 0;
    for &i in members {
        if pixels[i][c.a] - pixels[i][c.b] > c.threshold {
            n += 1;
            for (o, r) in out.iter_mut().zip(&residuals[i]) {
                *o = *o + *r;
            }
        }
    }
    n
}

fn sq_norm(v: &[Point]) -> f64 {
    v.iter().map(|p| p.x * p.x + p.y * p.y).sum()
}

struct TreeBuilder<'a> {
    pixels: &'a [Vec<f64>],
    residuals: &'a [Vec<Point>],
    num_landmarks: usize,
    candidates: usize,
}

impl TreeBuilder<'_> {
    /// Grows one complete tree; returns its splits, flattened leaves and the
    /// leaf index reached by every sample.
    fn grow(&self, depth: usize, pool: usize, rng: &mut ChaCha8Rng) -> (Vec<SplitNode>, Vec<Point>, Vec<usize>) {
        let l = self.num_landmarks;
        let n = self.pixels.len();
        let mut nodes: Vec<Vec<usize>> = vec![(0..n).collect()];
        let mut chosen = Vec::with_capacity((1 << depth) - 1);
        let mut left = vec![Point::default(); l];
        let mut best_left = vec![Point::default(); l];
        let mut total = vec![Point::default(); l];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(nodes.len() * 2);
            for members in nodes {
                total.iter_mut().for_each(|p| *p = Point::default());
                for &i in &members {
                    for (t, r) in total.iter_mut().zip(&self.residuals[i]) {
                        *t = *t + *r;
                    }
                }
                let mut best: Option<(f64, Candidate)> = None;
                for _ in 0..self.candidates {
                    let a = rng.gen_range(0..pool);
                    let mut b = rng.gen_range(0..pool - 1);
                    if b >= a {
                        b += 1;
                    }
                    let threshold = if members.is_empty() {
                        0.0
                    } else {
                        let s = members[rng.gen_range(0..members.len())];
                        self.pixels[s][a] - self.pixels[s][b]
                    };
                    let c = Candidate { a, b, threshold };
                    let nl = left_sums(&c, &members, self.pixels, self.residuals, &mut left);
                    let nr = members.len() - nl;
                    let mut score = 0.0;
                    if nl > 0 {
                        score += sq_norm(&left) / nl as f64;
                    }
                    if nr > 0 {
                        let right: f64 = left
                            .iter()
                            .zip(&total)
                            .map(|(lp, tp)| {
                                let d = *tp - *lp;
                                d.x * d.x + d.y * d.y
                            })
                            .sum();
                        score += right / nr as f64;
                    }
                    if best.as_ref().map_or(true, |(s, _)| score > *s) {
                        best_left.copy_from_slice(&left);
                        best = Some((score, c));
                    }
                }
                let (_, c) = best.expect("at least one candidate");
                let (l_members, r_members): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .partition(|&&i| self.pixels[i][c.a] - self.pixels[i][c.b] > c.threshold);
                next.push(l_members);
                next.push(r_members);
                chosen.push(c);
            }
            nodes = next;
        }

        let mut leaves = vec![Point::default(); nodes.len() * l];
        let mut leaf_of = vec![0usize; n];
        for (leaf, members) in nodes.iter().enumerate() {
            let out = &mut leaves[leaf * l..(leaf + 1) * l];
            for &i in members {
                leaf_of[i] = leaf;
                for (o, r) in out.iter_mut().zip(&self.residuals[i]) {
                    *o = *o + *r;
                }
            }
            if !members.is_empty() {
                let k = 1.0 / members.len() as f64;
                out.iter_mut().for_each(|o| *o = *o * k);
            }
        }
        let splits = chosen
            .into_iter()
            .map(|c| SplitNode {
                anchor_a: c.a,
                anchor_b: c.b,
                offset_a: Point::default(),
                offset_b: Point::default(),
                threshold: c.threshold,
            })
            .collect();
        (splits, leaves, leaf_of)
    }
}

/// Trains a cascade; the mean shape is the average of the targets.
pub fn train_ert(samples: &[ErtSample], cfg: &ErtTrainConfig) -> Result<(ErtModel, TrainReport), ErtError> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(ErtError::TooFewSamples(samples.len()));
    }
    let l = samples[0].target.len();
    for s in samples {
        if s.target.len() != l || s.target.frame() != ShapeFrame::Normalized {
            return Err(ErtError::ShapeMismatch(
                "training targets must share L and the normalized frame".into(),
            ));
        }
        if !(s.rect.w > 0.0 && s.rect.h > 0.0) {
            return Err(ErtError::Degenerate(format!("face box {:?} has no area", s.rect)));
        }
    }
    let targets: Vec<&[Point]> = samples.iter().map(|s| s.target.points()).collect();
    let inv_n = 1.0 / samples.len() as f64;
    let mut mean = vec![Point::default(); l];
    for t in &targets {
        for (m, p) in mean.iter_mut().zip(t.iter()) {
            *m = *m + *p;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m * inv_n);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current: Vec<Vec<Point>> = vec![mean.clone(); samples.len()];
    let (e0, s0) = shape_errors(&current, &targets);
    let mut report = TrainReport {
        mean_error: vec![e0],
        mean_sq_error: vec![s0],
    };
    let mut cascade = Vec::with_capacity(cfg.levels);
    let mut residuals: Vec<Vec<Point>> = vec![vec![Point::default(); l]; samples.len()];

    for _ in 0..cfg.levels {
        let pool = sample_pool(&mean, cfg, &mut rng);
        let pixels: Vec<Vec<f64>> = samples
            .iter()
            .zip(&current)
            .map(|(s, cur)| {
                let tform = similarity_transform(&mean, cur).unwrap_or(SimilarityTransform::IDENTITY);
                pool.iter()
                    .map(|pp| {
                        let p = box_to_image(&s.rect, cur[pp.anchor] + tform.apply_linear(pp.offset));
                        s.image
                            .get_clamped((p.x + 0.5).floor() as i64, (p.y + 0.5).floor() as i64)
                    })
                    .collect()
            })
            .collect();

        let mut level = Vec::with_capacity(cfg.trees_per_level);
        for _ in 0..cfg.trees_per_level {
            for ((r, c), t) in residuals.iter_mut().zip(&current).zip(&targets) {
                for ((ri, ci), ti) in r.iter_mut().zip(c).zip(t.iter()) {
                    *ri = *ti - *ci;
                }
            }
            let builder = TreeBuilder {
                pixels: &pixels,
                residuals: &residuals,
                num_landmarks: l,
                candidates: cfg.candidate_splits,
            };
            let (splits, leaves, leaf_of) = builder.grow(cfg.depth, pool.len(), &mut rng);
            for (cur, &leaf) in current.iter_mut().zip(&leaf_of) {
                for (c, d) in cur.iter_mut().zip(&leaves[leaf * l..(leaf + 1) * l]) {
                    *c = *c + *d * cfg.shrinkage;
                }
            }
            let splits = splits
                .into_iter()
                .map(|s| SplitNode {
                    anchor_a: pool[s.anchor_a].anchor,
                    anchor_b: pool[s.anchor_b].anchor,
                    offset_a: pool[s.anchor_a].offset,
                    offset_b: pool[s.anchor_b].offset,
                    threshold: s.threshold,
                })
                .collect();
            level.push(RegressionTree::new(cfg.depth, l, splits, leaves)?);
        }
        cascade.push(level);
        let (e, s) = shape_errors(&current, &targets);
        report.mean_error.push(e);
        report.mean_sq_error.push(s);
    }

    let model = ErtModel::new(mean, cascade, cfg.depth, cfg.shrinkage)?;
    Ok((model, report))
}

// Manifest -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: String,
    #[serde(rename = "box")]
    pub rect: [f64; 4],
    /// Pixel coordinates.
    pub landmarks: Vec<[f64; 2]>,
}

/// JSON list of `{image, box: [x, y, w, h], landmarks: [[x, y], ...]}`;
/// image paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingManifest {
    pub entries: Vec<ManifestEntry>,
}

impl TrainingManifest {
    pub fn from_json_slice(data: &[u8]) -> Result<Self, ErtError> {
        let entries: Vec<ManifestEntry> = serde_json::from_slice(data)?;
        for (i, e) in entries.iter().enumerate() {
            let [x, y, w, h] = e.rect;
            if !(w > 0.0 && h > 0.0 && x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
                return Err(ErtError::Degenerate(format!("entry {i}: box {:?} has no area", e.rect)));
            }
            if e.landmarks.len() != entries[0].landmarks.len() {
                return Err(ErtError::ShapeMismatch(format!(
                    "entry {i} has {} landmarks, entry 0 has {}",
                    e.landmarks.len(),
                    entries[0].landmarks.len()
                )));
            }
            Shape::new(e.landmarks.iter().map(|p| Point::new(p[0], p[1])).collect(), ShapeFrame::Pixel)?;
        }
        Ok(Self { entries })
    }

    /// Reads the manifest and every referenced image.
    pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<ErtSample>, ErtError> {
        let path = path.as_ref();
        let data = fs::read(path).map_err(|source| ErtError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let manifest = Self::from_json_slice(&data)?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest
            .entries
            .iter()
            .map(|e| {
                let image = load_pgm(base.join(&e.image))?;
                let rect = Rect::new(e.rect[0], e.rect[1], e.rect[2], e.rect[3]);
                let pixel = Shape::new(e.landmarks.iter().map(|p| Point::new(p[0], p[1])).collect(), ShapeFrame::Pixel)?;
                Ok(ErtSample {
                    image,
                    rect,
                    target: pixel.to_normalized(&rect),
                })
            })
            .collect()
    }
}

//! Window scoring over a feature image.
//!
//! [`score_dense`] evaluates every 10x10-cell window directly and is the
//! reference. [`score_separable`] is the production path: each of the ten
//! filter rows is applied along feature-image rows into a scratch image, and a
//! ten-tap column pass sums the scratch rows into the saliency map.

use crate::hog::{FeatureImage, NUM_FEATURES};

use super::{DetectError, LinearFilter, WINDOW_CELLS};

/// Window scores, one per anchor cell (top-left cell of the window).
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    scores: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, scores: Vec<f64>) -> Self {
        assert_eq!(scores.len(), width * height, "saliency map size");
        Self {
            width,
            height,
            scores,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, cx: usize, cy: usize) -> f64 {
        self.scores[cy * self.width + cx]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Iterates `(cx, cy, score)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.scores
            .iter()
            .enumerate()
            .map(move |(i, &s)| (i % self.width, i / self.width, s))
    }
}

fn anchor_dims(feat: &FeatureImage) -> Result<(usize, usize), DetectError> {
    if feat.cells_w() < WINDOW_CELLS || feat.cells_h() < WINDOW_CELLS {
        return Err(DetectError::WindowTooLarge {
            cells_w: feat.cells_w(),
            cells_h: feat.cells_h(),
        });
    }
    Ok((
        feat.cells_w() - WINDOW_CELLS + 1,
        feat.cells_h() - WINDOW_CELLS + 1,
    ))
}

/// Brute-force window scoring: bias plus the full 10x10x31 dot product.
pub fn score_dense(feat: &FeatureImage, filter: &LinearFilter) -> Result<SaliencyMap, DetectError> {
    let (aw, ah) = anchor_dims(feat)?;
    let w = filter.weights();
    let mut scores = Vec::with_capacity(aw * ah);
    for cy in 0..ah {
        for cx in 0..aw {
            let mut acc = 0.0;
            for dy in 0..WINDOW_CELLS {
                for dx in 0..WINDOW_CELLS {
                    for f in 0..NUM_FEATURES {
                        acc += w[(dy * WINDOW_CELLS + dx) * NUM_FEATURES + f]
                            * feat.get(cx + dx, cy + dy, f);
                    }
                }
            }
            scores.push(acc + filter.bias);
        }
    }
    Ok(SaliencyMap::new(aw, ah, scores))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Row pass for one filter row: `scratch(x, y)` is the dot product of the row
/// slice with the ten cells starting at `(x, y)`, for every feature-image row.
fn row_pass(feat: &FeatureImage, row: &[f64], aw: usize, out: &mut [f64]) {
    let span = WINDOW_CELLS * NUM_FEATURES;
    let stride = feat.cells_w() * NUM_FEATURES;
    for y in 0..feat.cells_h() {
        let line = &feat.data()[y * stride..(y + 1) * stride];
        let dst = &mut out[y * aw..(y + 1) * aw];
        for (x, d) in dst.iter_mut().enumerate() {
            let start = x * NUM_FEATURES;
            *d = dot(&line[start..start + span], row);
        }
    }
}

/// Two-pass window scoring through per-row scratch images.
pub fn score_separable(
    feat: &FeatureImage,
    filter: &LinearFilter,
) -> Result<SaliencyMap, DetectError> {
    let (aw, ah) = anchor_dims(feat)?;
    let ch = feat.cells_h();
    let span = WINDOW_CELLS * NUM_FEATURES;
    let mut scratch = vec![0.0; WINDOW_CELLS * aw * ch];
    for (r, plane) in scratch.chunks_exact_mut(aw * ch).enumerate() {
        row_pass(feat, &filter.weights()[r * span..(r + 1) * span], aw, plane);
    }
    let mut scores = vec![filter.bias; aw * ah];
    for (r, plane) in scratch.chunks_exact(aw * ch).enumerate() {
        for cy in 0..ah {
            let src = &plane[(cy + r) * aw..(cy + r + 1) * aw];
            let dst = &mut scores[cy * aw..(cy + 1) * aw];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    Ok(SaliencyMap::new(aw, ah, scores))
}

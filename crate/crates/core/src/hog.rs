//! HOG feature extraction in the 31-dimensional cell layout: gradients,
//! bilinear cell histograms, cell energies and block-normalized features.
//!
//! Feature layout per cell: `0..18` signed normalized bins, `18..27` unsigned
//! (opposite orientations folded together), `27..31` texture/energy features,
//! one per 2x2 normalization block.

use std::f64::consts::PI;

use thiserror::Error;

use crate::imgio::GrayImage;

pub const NUM_ORIENTATIONS: usize = 18;
pub const NUM_UNSIGNED: usize = NUM_ORIENTATIONS / 2;
pub const CELL_SIZE: usize = 8;
pub const NUM_FEATURES: usize = 31;

pub const NORM_EPS: f64 = 1e-10;
pub const TRUNCATION: f64 = 0.2;
pub const TEXTURE_COEFF: f64 = 0.2357;

/// Normalization block offsets `(a, b)`, in the order of texture features 27..31.
pub const BLOCK_OFFSETS: [(i64, i64); 4] = [(-1, -1), (1, -1), (-1, 1), (1, 1)];

#[derive(Debug, Error, PartialEq)]
pub enum HogError {
    #[error("image {width}x{height} too small for gradients (need at least 3x3)")]
    TooSmall { width: usize, height: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

fn orientation_table() -> [(f64, f64); NUM_ORIENTATIONS] {
    let mut t = [(0.0, 0.0); NUM_ORIENTATIONS];
    for (d, slot) in t.iter_mut().enumerate() {
        let a = 2.0 * PI * d as f64 / NUM_ORIENTATIONS as f64;
        *slot = (a.cos(), a.sin());
    }
    t
}

/// Per-pixel gradient orientation bin and magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    bins: Vec<u8>,
    magnitudes: Vec<f64>,
}

impl GradientField {
    /// Builds a field directly; bins must be `< 18` and magnitudes non-negative.
    pub fn new(
        width: usize,
        height: usize,
        bins: Vec<u8>,
        magnitudes: Vec<f64>,
    ) -> Result<Self, HogError> {
        let n = width * height;
        if bins.len() != n || magnitudes.len() != n {
            return Err(HogError::DimensionMismatch(format!(
                "{} bins / {} magnitudes for {width}x{height}",
                bins.len(),
                magnitudes.len()
            )));
        }
        if bins.iter().any(|&b| usize::from(b) >= NUM_ORIENTATIONS) {
            return Err(HogError::DimensionMismatch("orientation bin >= 18".into()));
        }
        if magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(HogError::DimensionMismatch(
                "magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            bins,
            magnitudes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bin(&self, x: usize, y: usize) -> usize {
        usize::from(self.bins[y * self.width + x])
    }

    pub fn magnitude(&self, x: usize, y: usize) -> f64 {
        self.magnitudes[y * self.width + x]
    }

    pub fn total_magnitude(&self) -> f64 {
        self.magnitudes.iter().sum()
    }
}

/// Central differences on interior pixels; the outer ring has zero magnitude.
///
/// The orientation is the index of the unit direction `2*pi*d/18` with the
/// largest dot product against the gradient; near-equal products resolve to
/// the lowest index.
pub fn compute_gradients(img: &GrayImage) -> Result<GradientField, HogError> {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return Err(HogError::TooSmall {
            width: w,
            height: h,
        });
    }
    let dirs = orientation_table();
    let px = img.pixels();
    let mut bins = vec![0u8; w * h];
    let mut magnitudes = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let gx = px[i + 1] - px[i - 1];
            let gy = px[i + w] - px[i - w];
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let tol = 1e-9 * mag;
            let mut best = f64::NEG_INFINITY;
            let mut best_d = 0;
            for (d, &(c, s)) in dirs.iter().enumerate() {
                let dot = gx * c + gy * s;
                if dot > best + tol {
                    best = dot;
                    best_d = d;
                }
            }
            bins[i] = best_d as u8;
            magnitudes[i] = mag;
        }
    }
    Ok(GradientField {
        width: w,
        height: h,
        bins,
        magnitudes,
    })
}

/// 18-bin orientation histograms over 8x8-pixel cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    cells_w: usize,
    cells_h: usize,
    hist: Vec<[f64; NUM_ORIENTATIONS]>,
}

impl CellGrid {
    pub fn zeros(cells_w: usize, cells_h: usize) -> Self {
        Self {
            cells_w,
            cells_h,
            hist: vec![[0.0; NUM_ORIENTATIONS]; cells_w * cells_h],
        }
    }

    pub fn from_histograms(
        cells_w: usize,
        cells_h: usize,
        hist: Vec<[f64; NUM_ORIENTATIONS]>,
    ) -> Result<Self, HogError> {
        if hist.len() != cells_w * cells_h {
            return Err(HogError::DimensionMismatch(format!(
                "{} histograms for {cells_w}x{cells_h} cells",
                hist.len()
            )));
        }
        Ok(Self {
            cells_w,
            cells_h,
            hist,
        })
    }

    pub fn cells_w(&self) -> usize {
        self.cells_w
    }

    pub fn cells_h(&self) -> usize {
        self.cells_h
    }

    pub fn cell(&self, cx: usize, cy: usize) -> &[f64; NUM_ORIENTATIONS] {
        &self.hist[cy * self.cells_w + cx]
    }

    pub fn total_mass(&self) -> f64 {
        self.hist.iter().flat_map(|h| h.iter()).sum()
    }

    /// Deposits `magnitude` at continuous pixel position `(px, py)` into the
    /// four cells whose centers `(8i+3.5, 8j+3.5)` bracket it. Shares falling
    /// outside the grid are dropped.
    pub fn splat(&mut self, px: f64, py: f64, bin: usize, magnitude: f64) {
        let half = (CELL_SIZE as f64 - 1.0) / 2.0;
        let fx = (px - half) / CELL_SIZE as f64;
        let fy = (py - half) / CELL_SIZE as f64;
        let ix = fx.floor();
        let iy = fy.floor();
        let vx1 = fx - ix;
        let vy1 = fy - iy;
        let xs = [(ix as i64, 1.0 - vx1), (ix as i64 + 1, vx1)];
        let ys = [(iy as i64, 1.0 - vy1), (iy as i64 + 1, vy1)];
        for &(cy, wy) in &ys {
            if cy < 0 || cy >= self.cells_h as i64 || wy == 0.0 {
                continue;
            }
            for &(cx, wx) in &xs {
                if cx < 0 || cx >= self.cells_w as i64 || wx == 0.0 {
                    continue;
                }
                self.hist[cy as usize * self.cells_w + cx as usize][bin] += magnitude * wx * wy;
            }
        }
    }
}

/// Bilinear soft-binning of every pixel's magnitude into the cell grid
/// (`floor(w/8) x floor(h/8)` cells).
pub fn histogramize(grads: &GradientField) -> CellGrid {
    let mut cells = CellGrid::zeros(grads.width / CELL_SIZE, grads.height / CELL_SIZE);
    if cells.cells_w == 0 || cells.cells_h == 0 {
        return cells;
    }
    for y in 0..grads.height {
        for x in 0..grads.width {
            let i = y * grads.width + x;
            let mag = grads.magnitudes[i];
            if mag > 0.0 {
                cells.splat(x as f64, y as f64, usize::from(grads.bins[i]), mag);
            }
        }
    }
    cells
}

/// Per-cell energy `sum_{n<9} (bin_n + bin_{n+9})^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    cells_w: usize,
    cells_h: usize,
    energy: Vec<f64>,
}

impl EnergyGrid {
    pub fn cells_w(&self) -> usize {
        self.cells_w
    }

    pub fn cells_h(&self) -> usize {
        self.cells_h
    }

    pub fn get(&self, cx: usize, cy: usize) -> f64 {
        self.energy[cy * self.cells_w + cx]
    }

    /// Energy at a possibly out-of-grid cell; outside the grid reads as 0.
    fn get_or_zero(&self, cx: i64, cy: i64) -> f64 {
        if cx < 0 || cy < 0 || cx >= self.cells_w as i64 || cy >= self.cells_h as i64 {
            0.0
        } else {
            self.energy[cy as usize * self.cells_w + cx as usize]
        }
    }
}

pub fn histogram_energy(h: &[f64; NUM_ORIENTATIONS]) -> f64 {
    (0..NUM_UNSIGNED)
        .map(|n| {
            let s = h[n] + h[n + NUM_UNSIGNED];
            s * s
        })
        .sum()
}

pub fn cell_energy(cells: &CellGrid) -> EnergyGrid {
    EnergyGrid {
        cells_w: cells.cells_w,
        cells_h: cells.cells_h,
        energy: cells.hist.iter().map(histogram_energy).collect(),
    }
}

/// Per-cell 31-feature grid, stored row-major as `(cell_y, cell_x, feature)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    cells_w: usize,
    cells_h: usize,
    data: Vec<f64>,
}

impl FeatureImage {
    pub fn new(cells_w: usize, cells_h: usize, data: Vec<f64>) -> Result<Self, HogError> {
        if data.len() != cells_w * cells_h * NUM_FEATURES {
            return Err(HogError::DimensionMismatch(format!(
                "{} values for {cells_w}x{cells_h} cells of {NUM_FEATURES} features",
                data.len()
            )));
        }
        Ok(Self {
            cells_w,
            cells_h,
            data,
        })
    }

    pub fn zeros(cells_w: usize, cells_h: usize) -> Self {
        Self {
            cells_w,
            cells_h,
            data: vec![0.0; cells_w * cells_h * NUM_FEATURES],
        }
    }

    pub fn cells_w(&self) -> usize {
        self.cells_w
    }

    pub fn cells_h(&self) -> usize {
        self.cells_h
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        let i = (cy * self.cells_w + cx) * NUM_FEATURES;
        &self.data[i..i + NUM_FEATURES]
    }

    pub fn get(&self, cx: usize, cy: usize, f: usize) -> f64 {
        self.data[(cy * self.cells_w + cx) * NUM_FEATURES + f]
    }

    pub fn set(&mut self, cx: usize, cy: usize, f: usize, v: f64) {
        self.data[(cy * self.cells_w + cx) * NUM_FEATURES + f] = v;
    }

    /// Contiguous run of `len` cells starting at `(cx, cy)` along one row.
    #[inline]
    pub fn row_span(&self, cx: usize, cy: usize, len: usize) -> &[f64] {
        let i = (cy * self.cells_w + cx) * NUM_FEATURES;
        &self.data[i..i + len * NUM_FEATURES]
    }

    /// Copies the `cells x cells` window anchored at `(cx, cy)` in `(y, x, f)` order.
    pub fn window(&self, cx: usize, cy: usize, cells: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(cells * cells * NUM_FEATURES);
        for dy in 0..cells {
            out.extend_from_slice(self.row_span(cx, cy + dy, cells));
        }
        out
    }
}

pub fn compute_features(cells: &CellGrid, energies: &EnergyGrid) -> Result<FeatureImage, HogError> {
    if cells.cells_w != energies.cells_w || cells.cells_h != energies.cells_h {
        return Err(HogError::DimensionMismatch(format!(
            "cells {}x{} vs energies {}x{}",
            cells.cells_w, cells.cells_h, energies.cells_w, energies.cells_h
        )));
    }
    let (cw, ch) = (cells.cells_w, cells.cells_h);
    let mut data = vec![0.0; cw * ch * NUM_FEATURES];
    for cy in 0..ch {
        for cx in 0..cw {
            let (x, y) = (cx as i64, cy as i64);
            let mut norms = [0.0; 4];
            for (n, &(a, b)) in norms.iter_mut().zip(BLOCK_OFFSETS.iter()) {
                let e = energies.get_or_zero(x, y)
                    + energies.get_or_zero(x + a, y)
                    + energies.get_or_zero(x, y + b)
                    + energies.get_or_zero(x + a, y + b);
                *n = 1.0 / (e + NORM_EPS).sqrt();
            }
            let h = cells.cell(cx, cy);
            let out = &mut data[(cy * cw + cx) * NUM_FEATURES..][..NUM_FEATURES];
            let mut texture = [0.0; 4];
            for d in 0..NUM_ORIENTATIONS {
                let mut sum = 0.0;
                for (t, &n) in texture.iter_mut().zip(norms.iter()) {
                    let v = (h[d] * n).min(TRUNCATION);
                    sum += v;
                    *t += v;
                }
                out[d] = 0.5 * sum;
            }
            for u in 0..NUM_UNSIGNED {
                let folded = h[u] + h[u + NUM_UNSIGNED];
                let sum: f64 = norms.iter().map(|&n| (folded * n).min(TRUNCATION)).sum();
                out[NUM_ORIENTATIONS + u] = 0.5 * sum;
            }
            for (k, t) in texture.iter().enumerate() {
                out[NUM_ORIENTATIONS + NUM_UNSIGNED + k] = TEXTURE_COEFF * t;
            }
        }
    }
    Ok(FeatureImage {
        cells_w: cw,
        cells_h: ch,
        data,
    })
}

/// Full chain: gradients, histograms, energies, features.
pub fn extract_features(img: &GrayImage) -> Result<FeatureImage, HogError> {
    let grads = compute_gradients(img)?;
    let cells = histogramize(&grads);
    let energies = cell_energy(&cells);
    compute_features(&cells, &energies)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_gradient() {
        let g = compute_gradients(&GrayImage::filled(9, 7, 42.0)).unwrap();
        assert_eq!(g.total_magnitude(), 0.0);
    }

    #[test]
    fn horizontal_ramp() {
        let img = GrayImage::from_fn(10, 6, |x, _| x as f64);
        let g = compute_gradients(&img).unwrap();
        for y in 1..5 {
            for x in 1..9 {
                assert_eq!(g.bin(x, y), 0);
                assert_eq!(g.magnitude(x, y), 2.0);
            }
        }
        assert_eq!(g.magnitude(0, 2), 0.0);
        assert_eq!(g.magnitude(9, 2), 0.0);
    }

    #[test]
    fn vertical_gradient_ties_to_lower_bin() {
        // 90 degrees sits exactly between directions 4 (80) and 5 (100)
        let img = GrayImage::from_fn(5, 5, |_, y| 10.0 * y as f64);
        assert_eq!(compute_gradients(&img).unwrap().bin(2, 2), 4);
        // 270 degrees: between 13 and 14
        let img = GrayImage::from_fn(5, 5, |_, y| 100.0 - 10.0 * y as f64);
        assert_eq!(compute_gradients(&img).unwrap().bin(2, 2), 13);
    }

    #[test]
    fn too_small() {
        assert_eq!(
            compute_gradients(&GrayImage::filled(2, 5, 0.0)),
            Err(HogError::TooSmall {
                width: 2,
                height: 5
            })
        );
    }

    #[test]
    fn splat_at_cell_center() {
        let mut cells = CellGrid::zeros(3, 3);
        cells.splat(11.5, 11.5, 7, 2.0);
        assert_eq!(cells.cell(1, 1)[7], 2.0);
        assert_eq!(cells.total_mass(), 2.0);
    }

    #[test]
    fn splat_midway_between_centers() {
        let mut cells = CellGrid::zeros(3, 3);
        cells.splat(7.5, 7.5, 3, 4.0);
        for (cx, cy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            assert_eq!(cells.cell(cx, cy)[3], 1.0);
        }
        assert_eq!(cells.total_mass(), 4.0);
    }

    #[test]
    fn splat_outside_grid_is_dropped() {
        let mut cells = CellGrid::zeros(2, 2);
        // left of the first center: only the share for cells with index >= 0 stays
        cells.splat(0.0, 3.5, 0, 1.0);
        assert!((cells.total_mass() - (1.0 - 3.5 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        assert_eq!(histogram_energy(&[0.0; 18]), 0.0);
        assert_eq!(histogram_energy(&[1.0; 18]), 36.0);
    }

    #[test]
    fn zero_histograms_give_zero_features() {
        let cells = CellGrid::zeros(4, 3);
        let f = compute_features(&cells, &cell_energy(&cells)).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_dimension_mismatch() {
        let a = CellGrid::zeros(4, 3);
        let b = cell_energy(&CellGrid::zeros(3, 3));
        assert!(matches!(
            compute_features(&a, &b),
            Err(HogError::DimensionMismatch(_))
        ));
    }
}

//! Straight-line reference implementations of the HOG stages.

#![allow(dead_code)]

use blinkline::hog::{CellGrid, GradientField, NUM_ORIENTATIONS};
use blinkline::imgio::GrayImage;

/// Nearest of the 18 directions by angle; boundaries go to the lower index.
pub fn angle_bin(gx: f64, gy: f64) -> usize {
    let theta = gy.atan2(gx).to_degrees().rem_euclid(360.0);
    let b = (theta + 10.0) / 20.0;
    let k = b.round();
    if (b - k).abs() < 1e-9 {
        let lo = (k as usize + 17) % 18;
        let hi = k as usize % 18;
        lo.min(hi)
    } else {
        b.floor() as usize % 18
    }
}

pub fn histogram_oracle(g: &GradientField) -> Vec<[f64; NUM_ORIENTATIONS]> {
    let (cw, ch) = (g.width() / 8, g.height() / 8);
    let mut out = vec![[0.0; NUM_ORIENTATIONS]; cw * ch];
    for y in 0..g.height() {
        for x in 0..g.width() {
            for j in 0..ch {
                for i in 0..cw {
                    let wx = 1.0 - (x as f64 - (8.0 * i as f64 + 3.5)).abs() / 8.0;
                    let wy = 1.0 - (y as f64 - (8.0 * j as f64 + 3.5)).abs() / 8.0;
                    if wx > 0.0 && wy > 0.0 {
                        out[j * cw + i][g.bin(x, y)] += g.magnitude(x, y) * wx * wy;
                    }
                }
            }
        }
    }
    out
}

pub fn energy_oracle(h: &[f64; 18]) -> f64 {
    (0..9).map(|n| (h[n] + h[n + 9]).powi(2)).sum()
}

pub fn feature_oracle(cells: &CellGrid) -> Vec<f64> {
    let (cw, ch) = (cells.cells_w() as i64, cells.cells_h() as i64);
    let energy = |x: i64, y: i64| {
        if x < 0 || y < 0 || x >= cw || y >= ch {
            0.0
        } else {
            energy_oracle(cells.cell(x as usize, y as usize))
        }
    };
    let mut out = Vec::new();
    for y in 0..ch {
        for x in 0..cw {
            let h = cells.cell(x as usize, y as usize);
            let norms: Vec<f64> = [(-1, -1), (1, -1), (-1, 1), (1, 1)]
                .iter()
                .map(|&(a, b)| {
                    1.0 / (energy(x, y) + energy(x + a, y) + energy(x, y + b) + energy(x + a, y + b) + 1e-10).sqrt()
                })
                .collect();
            for d in 0..18 {
                out.push(0.5 * norms.iter().map(|n| (h[d] * n).min(0.2)).sum::<f64>());
            }
            for u in 0..9 {
                out.push(0.5 * norms.iter().map(|n| ((h[u] + h[u + 9]) * n).min(0.2)).sum::<f64>());
            }
            for n in &norms {
                out.push(0.2357 * (0..18).map(|d| (h[d] * n).min(0.2)).sum::<f64>());
            }
        }
    }
    out
}

/// Central differences with a zero border: `(gx, gy)` at `(x, y)`.
pub fn gradient_oracle(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    if x == 0 || y == 0 || x + 1 == img.width() || y + 1 == img.height() {
        return (0.0, 0.0);
    }
    (img.get(x + 1, y) - img.get(x - 1, y), img.get(x, y + 1) - img.get(x, y - 1))
}

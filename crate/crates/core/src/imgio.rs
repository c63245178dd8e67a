//! Grayscale images, PGM ingestion, bilinear 5/6 downscaling and the image
//! pyramid scanned by the face detector.
//!
//! Pixels are kept as `f64` luminance in `[0, 255]` from load until save;
//! rounding to integers happens only when writing a PGM.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Numerator and denominator of the per-level pyramid scale factor.
pub const SCALE_NUM: usize = 5;
pub const SCALE_DEN: usize = 6;

/// Per-level scale factor of the pyramid (5/6).
pub const SCALE_FACTOR: f64 = SCALE_NUM as f64 / SCALE_DEN as f64;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("malformed PGM at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("truncated PGM data at byte {offset}: expected {expected} pixels, found {found}")]
    Truncated {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported PGM maxval {maxval} at byte {offset} (must be 1..=255)")]
    UnsupportedMaxval { offset: usize, maxval: u64 },
    #[error("degenerate image size {width}x{height}")]
    Degenerate { width: usize, height: usize },
    #[error("invalid image: {0}")]
    Invalid(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major luminance raster.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Builds an image after checking the dimension and value-range invariants.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Degenerate { width, height });
        }
        if width.checked_mul(height) != Some(pixels.len()) {
            return Err(ImageError::Invalid(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=255.0).contains(v)) {
            return Err(ImageError::Invalid(format!(
                "pixel {i} = {} outside [0, 255]",
                pixels[i]
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from a per-pixel function; values are clamped into `[0, 255]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                pixels.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 255.0) });
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Sets a pixel, clamping into `[0, 255]`.
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v.clamp(0.0, 255.0);
    }

    /// Nearest-pixel read with coordinates clamped into the image.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(x, y)
    }
}

// PGM ----------------------------------------------------------------------

struct HeaderCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<(u64, usize), ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        let mut value: u64 = 0;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(self.data[self.pos] - b'0')))
                .ok_or_else(|| ImageError::Malformed {
                    offset: start,
                    reason: format!("{what} overflows"),
                })?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(ImageError::Malformed {
                offset: start,
                reason: format!("expected {what}"),
            });
        }
        Ok((value, start))
    }
}

/// Decodes a binary (P5) or ASCII (P2) PGM with maxval at most 255.
pub fn decode_pgm(data: &[u8]) -> Result<GrayImage, ImageError> {
    if data.len() < 2 || data[0] != b'P' || !(data[1] == b'5' || data[1] == b'2') {
        return Err(ImageError::Malformed {
            offset: 0,
            reason: "missing P5/P2 magic".into(),
        });
    }
    let binary = data[1] == b'5';
    let mut cur = HeaderCursor { data, pos: 2 };
    let (width, w_off) = cur.number("width")?;
    let (height, h_off) = cur.number("height")?;
    let (maxval, m_off) = cur.number("maxval")?;
    if width == 0 {
        return Err(ImageError::Malformed {
            offset: w_off,
            reason: "zero width".into(),
        });
    }
    if height == 0 {
        return Err(ImageError::Malformed {
            offset: h_off,
            reason: "zero height".into(),
        });
    }
    if maxval == 0 || maxval > 255 {
        return Err(ImageError::UnsupportedMaxval {
            offset: m_off,
            maxval,
        });
    }
    let expected = usize::try_from(width)
        .ok()
        .zip(usize::try_from(height).ok())
        .and_then(|(w, h)| w.checked_mul(h))
        .ok_or_else(|| ImageError::Malformed {
            offset: w_off,
            reason: "image dimensions overflow".into(),
        })?;
    let (width, height) = (width as usize, height as usize);

    let pixels = if binary {
        // exactly one whitespace byte separates the header from the raster
        match data.get(cur.pos) {
            Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
            _ => {
                return Err(ImageError::Malformed {
                    offset: cur.pos,
                    reason: "expected whitespace before raster".into(),
                })
            }
        }
        let raster = &data[cur.pos..];
        if raster.len() < expected {
            return Err(ImageError::Truncated {
                offset: data.len(),
                expected,
                found: raster.len(),
            });
        }
        let raster = &raster[..expected];
        if let Some(i) = raster.iter().position(|&b| u64::from(b) > maxval) {
            return Err(ImageError::Malformed {
                offset: cur.pos + i,
                reason: format!("sample {} exceeds maxval {maxval}", raster[i]),
            });
        }
        raster.iter().map(|&b| f64::from(b)).collect()
    } else {
        let mut pixels = Vec::with_capacity(expected.min(data.len()));
        while pixels.len() < expected {
            cur.skip_space_and_comments();
            if cur.pos >= data.len() {
                return Err(ImageError::Truncated {
                    offset: data.len(),
                    expected,
                    found: pixels.len(),
                });
            }
            let (v, off) = cur.number("sample")?;
            if v > maxval {
                return Err(ImageError::Malformed {
                    offset: off,
                    reason: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            pixels.push(v as f64);
        }
        pixels
    };
    GrayImage::new(width, height, pixels)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pgm(&data)
}

/// Encodes as binary P5 with maxval 255, rounding each pixel to the nearest integer.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    out
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// Scaling ------------------------------------------------------------------

/// Output dimensions of one 5/6 downscale step.
pub fn downscaled_dims(width: usize, height: usize) -> (usize, usize) {
    (width * SCALE_NUM / SCALE_DEN, height * SCALE_NUM / SCALE_DEN)
}

/// Source sample positions for each destination index along one axis:
/// `(lower index, upper index, fractional weight of the upper index)`.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    let max = (src - 1) as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * ratio - 0.5).clamp(0.0, max);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Downscales by 5/6 in each dimension with center-aligned bilinear sampling.
pub fn downscale_bilinear(img: &GrayImage) -> Result<GrayImage, ImageError> {
    let (dw, dh) = downscaled_dims(img.width, img.height);
    if dw == 0 || dh == 0 {
        return Err(ImageError::Degenerate {
            width: dw,
            height: dh,
        });
    }
    let xs = axis_taps(img.width, dw);
    let ys = axis_taps(img.height, dh);
    let mut pixels = Vec::with_capacity(dw * dh);
    for &(y0, y1, fy) in &ys {
        let r0 = &img.pixels[y0 * img.width..(y0 + 1) * img.width];
        let r1 = &img.pixels[y1 * img.width..(y1 + 1) * img.width];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + fx * (r0[x1] - r0[x0]);
            let bot = r1[x0] + fx * (r1[x1] - r1[x0]);
            // convex combination; the clamp only absorbs rounding at the range ends
            pixels.push((top + fy * (bot - top)).clamp(0.0, 255.0));
        }
    }
    Ok(GrayImage {
        width: dw,
        height: dh,
        pixels,
    })
}

/// Images at successive 5/6 scales; level 0 is the input.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<GrayImage>,
    pub cumulative_scale: Vec<f64>,
}

impl Pyramid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Cumulative scale of pyramid level `k`, i.e. `(5/6)^k`.
pub fn level_scale(k: usize) -> f64 {
    SCALE_FACTOR.powi(k as i32)
}

/// Dimensions of every pyramid level for an image of the given size, without
/// touching pixels. Level 0 is always present.
pub fn pyramid_dims(width: usize, height: usize, window: usize) -> Vec<(usize, usize)> {
    let mut dims = vec![(width, height)];
    let (mut w, mut h) = (width, height);
    loop {
        let (nw, nh) = downscaled_dims(w, h);
        if nw == 0 || nh == 0 || nw < window || nh < window {
            break;
        }
        dims.push((nw, nh));
        (w, h) = (nw, nh);
    }
    dims
}

/// Repeatedly downscales while both dimensions of the next level stay at or
/// above `window`.
pub fn build_pyramid(img: &GrayImage, window: usize) -> Pyramid {
    build_pyramid_levels(img, window, usize::MAX)
}

/// Like [`build_pyramid`] but stops after `max_levels` levels.
pub fn build_pyramid_levels(img: &GrayImage, window: usize, max_levels: usize) -> Pyramid {
    let n = pyramid_dims(img.width, img.height, window).len().min(max_levels.max(1));
    let mut levels = Vec::with_capacity(n);
    levels.push(img.clone());
    for _ in 1..n {
        let next = downscale_bilinear(levels.last().expect("level 0 exists"))
            .expect("pyramid_dims only admits non-empty levels");
        levels.push(next);
    }
    let cumulative_scale = (0..n).map(level_scale).collect();
    Pyramid {
        levels,
        cumulative_scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_direct_copy() {
        let mut data = b"P5\n2 2\n255\n".to_vec();
        data.extend([0u8, 255, 128, 64]);
        let img = decode_pgm(&data).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.pixels(), &[0.0, 255.0, 128.0, 64.0]);
    }

    #[test]
    fn p2_single_pixel() {
        let img = decode_pgm(b"P2 1 1 255 7").unwrap();
        assert_eq!(img.dims(), (1, 1));
        assert_eq!(img.pixels(), &[7.0]);
    }

    #[test]
    fn p2_with_comments() {
        let img = decode_pgm(b"P2\n# a comment\n2 1\n# another\n15\n3 15\n").unwrap();
        assert_eq!(img.pixels(), &[3.0, 15.0]);
    }

    #[test]
    fn truncated_p5_reports_offset() {
        let mut data = b"P5\n4 4\n255\n".to_vec();
        data.extend([1u8; 15]);
        match decode_pgm(&data) {
            Err(ImageError::Truncated {
                expected, found, ..
            }) => assert_eq!((expected, found), (16, 15)),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn bad_maxval_and_magic() {
        assert!(matches!(
            decode_pgm(b"P5 1 1 65535 \x00\x00"),
            Err(ImageError::UnsupportedMaxval { maxval: 65535, .. })
        ));
        assert!(matches!(
            decode_pgm(b"P6 1 1 255 \x00"),
            Err(ImageError::Malformed { offset: 0, .. })
        ));
        match decode_pgm(b"P2 1 x 255 1") {
            Err(ImageError::Malformed { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sample_above_maxval_is_rejected() {
        assert!(decode_pgm(b"P2 1 1 10 11").is_err());
    }

    #[test]
    fn save_rounds_to_nearest() {
        let img = GrayImage::new(2, 1, vec![0.4, 254.6]).unwrap();
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!(back.pixels(), &[0.0, 255.0]);
        let one = GrayImage::new(1, 1, vec![7.0]).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&one)).unwrap(), one);
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 40 + y) as f64);
        save_pgm(&img, &path).unwrap();
        assert_eq!(load_pgm(&path).unwrap(), img);
        assert!(matches!(
            load_pgm(dir.path().join("missing.pgm")),
            Err(ImageError::Io { .. })
        ));
    }

    #[test]
    fn image_invariants() {
        assert!(GrayImage::new(0, 1, vec![]).is_err());
        assert!(GrayImage::new(2, 1, vec![1.0]).is_err());
        assert!(GrayImage::new(1, 1, vec![256.0]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn constant_downscale() {
        let img = GrayImage::filled(12, 12, 100.0);
        let out = downscale_bilinear(&img).unwrap();
        assert_eq!(out.dims(), (10, 10));
        assert!(out.pixels().iter().all(|&v| (v - 100.0).abs() < 1e-9));
    }

    #[test]
    fn downscale_dims_640() {
        let img = GrayImage::filled(640, 480, 0.0);
        assert_eq!(downscale_bilinear(&img).unwrap().dims(), (533, 400));
    }

    #[test]
    fn downscale_degenerate() {
        let img = GrayImage::filled(1, 5, 0.0);
        assert!(matches!(
            downscale_bilinear(&img),
            Err(ImageError::Degenerate { .. })
        ));
    }

    #[test]
    fn pyramid_examples() {
        let p = build_pyramid(&GrayImage::filled(640, 480, 10.0), 80);
        let heights: Vec<_> = p.levels.iter().map(|l| l.height()).collect();
        assert_eq!(heights, [480, 400, 333, 277, 230, 191, 159, 132, 110, 91]);
        assert_eq!(p.cumulative_scale[0], 1.0);
        assert_eq!(build_pyramid(&GrayImage::filled(80, 80, 0.0), 80).len(), 1);
        assert_eq!(build_pyramid(&GrayImage::filled(60, 60, 0.0), 80).len(), 1);
    }
}

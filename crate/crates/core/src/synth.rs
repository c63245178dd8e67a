//! Synthetic faces, frame sequences and training sets.
//!
//! Faces are drawn from a parametric 68-landmark template in face-box
//! coordinates: elliptic head, dark elliptic eyes whose height follows the
//! eyelid openness, brows, a nose bar and an elliptic mouth.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ert::{train_ert, ErtError, ErtModel, ErtSample, ErtTrainConfig, Shape, ShapeFrame};
use crate::facedet::{train_filter, window_features, DetectError, DetectorModel, TrainConfig};
use crate::geom::{Point, Rect};
use crate::imgio::{save_pgm, GrayImage, ImageError};

pub const SKIN: f64 = 190.0;
pub const EYE: f64 = 40.0;
pub const LID: f64 = 110.0;
pub const BROW: f64 = 70.0;
pub const NOSE: f64 = 130.0;
pub const MOUTH: f64 = 60.0;

const HEAD_C: (f64, f64) = (0.5, 0.52);
const HEAD_R: (f64, f64) = (0.40, 0.48);
const EYE_Y: f64 = 0.40;
const EYE_X: [f64; 2] = [0.33, 0.67];
const EYE_HW: f64 = 0.09;
const EYE_HH: f64 = 0.055;
const BROW_Y: f64 = 0.295;
const BROW_HW: f64 = 0.10;
const BROW_HH: f64 = 0.015;
const MOUTH_C: (f64, f64) = (0.5, 0.76);
const MOUTH_R: (f64, f64) = (0.14, 0.04);
const SUBSAMPLES: usize = 3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn eye_points(ex: f64, open: f64) -> [Point; 6] {
    let h = EYE_HH * open * (1.0f64 - 1.0 / 9.0).sqrt();
    let third = EYE_HW / 3.0;
    [
        Point::new(ex - EYE_HW, EYE_Y),
        Point::new(ex - third, EYE_Y - h),
        Point::new(ex + third, EYE_Y - h),
        Point::new(ex + EYE_HW, EYE_Y),
        Point::new(ex + third, EYE_Y + h),
        Point::new(ex - third, EYE_Y + h),
    ]
}

/// EAR of a template eye drawn with the given openness.
pub fn template_ear(open: f64) -> f64 {
    EYE_HH * open * (1.0f64 - 1.0 / 9.0).sqrt() / EYE_HW
}

/// The 68 template landmarks in normalized face-box coordinates.
pub fn template_landmarks(open_left: f64, open_right: f64) -> Vec<Point> {
    let mut p = Vec::with_capacity(68);
    for i in 0..17 {
        let phi = -0.25 + i as f64 * (PI + 0.5) / 16.0;
        p.push(Point::new(HEAD_C.0 - HEAD_R.0 * phi.cos(), HEAD_C.1 + HEAD_R.1 * phi.sin()));
    }
    for ex in EYE_X {
        for j in 0..5 {
            p.push(Point::new(ex - BROW_HW + j as f64 * BROW_HW / 2.0, BROW_Y));
        }
    }
    for j in 0..4 {
        p.push(Point::new(0.5, 0.42 + j as f64 * 0.06));
    }
    for j in 0..5 {
        p.push(Point::new(0.43 + j as f64 * 0.035, 0.615));
    }
    p.extend(eye_points(EYE_X[0], open_left));
    p.extend(eye_points(EYE_X[1], open_right));
    for j in 0..12 {
        let a = PI + j as f64 * 2.0 * PI / 12.0;
        p.push(Point::new(MOUTH_C.0 + MOUTH_R.0 * a.cos(), MOUTH_C.1 + MOUTH_R.1 * a.sin()));
    }
    for j in 0..8 {
        let a = PI + j as f64 * 2.0 * PI / 8.0;
        p.push(Point::new(MOUTH_C.0 + 0.10 * a.cos(), MOUTH_C.1 + 0.02 * a.sin()));
    }
    p
}

fn in_ellipse(u: f64, v: f64, c: (f64, f64), r: (f64, f64)) -> bool {
    let dx = (u - c.0) / r.0;
    let dy = (v - c.1) / r.1;
    dx * dx + dy * dy <= 1.0
}

/// Face intensity at normalized `(u, v)`, or `None` outside the head.
fn face_value(u: f64, v: f64, open: [f64; 2]) -> Option<f64> {
    if !in_ellipse(u, v, HEAD_C, HEAD_R) {
        return None;
    }
    for (ex, o) in EYE_X.iter().zip(open) {
        let hh = EYE_HH * o;
        if hh > 0.01 {
            if in_ellipse(u, v, (*ex, EYE_Y), (EYE_HW, hh)) {
                return Some(EYE);
            }
        } else if (u - ex).abs() <= EYE_HW && (v - EYE_Y).abs() <= 0.01 {
            return Some(LID);
        }
        if (u - ex).abs() <= BROW_HW && (v - BROW_Y).abs() <= BROW_HH {
            return Some(BROW);
        }
    }
    if in_ellipse(u, v, MOUTH_C, MOUTH_R) {
        return Some(MOUTH);
    }
    if ((u - 0.5).abs() <= 0.02 && (0.42..=0.62).contains(&v)) || ((u - 0.5).abs() <= 0.07 && (0.60..=0.63).contains(&v)) {
        return Some(NOSE);
    }
    Some(SKIN)
}

/// Draws a face into `rect` over the existing content, antialiased by 3x3
/// supersampling.
pub fn render_face(img: &mut GrayImage, rect: &Rect, open_left: f64, open_right: f64) {
    let (w, h) = img.dims();
    let x0 = rect.x.floor().max(0.0) as usize;
    let y0 = rect.y.floor().max(0.0) as usize;
    let x1 = (rect.right().ceil().max(0.0) as usize).min(w);
    let y1 = (rect.bottom().ceil().max(0.0) as usize).min(h);
    let n = (SUBSAMPLES * SUBSAMPLES) as f64;
    for y in y0..y1 {
        for x in x0..x1 {
            let mut inside = 0.0;
            let mut sum = 0.0;
            for sy in 0..SUBSAMPLES {
                for sx in 0..SUBSAMPLES {
                    let px = x as f64 + (sx as f64 + 0.5) / SUBSAMPLES as f64;
                    let py = y as f64 + (sy as f64 + 0.5) / SUBSAMPLES as f64;
                    let u = (px - rect.x) / rect.w;
                    let v = (py - rect.y) / rect.h;
                    if let Some(val) = face_value(u, v, [open_left, open_right]) {
                        inside += 1.0;
                        sum += val;
                    }
                }
            }
            if inside > 0.0 {
                let bg = img.get(x, y);
                img.set(x, y, bg * (1.0 - inside / n) + sum / n);
            }
        }
    }
}

/// Uniform background `base` plus independent uniform noise in `[-amp, amp]`.
pub fn noise_image(width: usize, height: usize, base: f64, amplitude: f64, rng: &mut impl Rng) -> GrayImage {
    GrayImage::from_fn(width, height, |_, _| {
        if amplitude > 0.0 {
            base + rng.gen_range(-amplitude..=amplitude)
        } else {
            base
        }
    })
}

/// Side of the square training canvases; the detector window sits centered.
pub const WINDOW_CANVAS: usize = 112;

fn canvas(rng: &mut ChaCha8Rng) -> GrayImage {
    let base = rng.gen_range(60.0..140.0);
    let amp = if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.0..6.0) };
    noise_image(WINDOW_CANVAS, WINDOW_CANVAS, base, amp, rng)
}

fn face_at(img: &mut GrayImage, cx: f64, cy: f64, side: f64, rng: &mut ChaCha8Rng) {
    let open_l = rng.gen_range(0.0..=1.0);
    let open_r = (open_l + rng.gen_range(-0.1..=0.1f64)).clamp(0.0, 1.0);
    render_face(img, &Rect::new(cx - side / 2.0, cy - side / 2.0, side, side), open_l, open_r);
}

/// Positive and negative training canvases for the window classifier.
/// Positives hold a 72 to 88 px face near the center; negatives are plain or
/// noisy backgrounds, off-center faces, faces of the wrong size and clutter.
pub fn hog_training_windows(n_pos: usize, n_neg: usize, seed: u64) -> (Vec<GrayImage>, Vec<GrayImage>) {
    let mut rng = rng(seed);
    let c = WINDOW_CANVAS as f64 / 2.0;
    let pos = (0..n_pos)
        .map(|_| {
            let mut img = canvas(&mut rng);
            let side = rng.gen_range(72.0..=88.0);
            let cx = c + rng.gen_range(-3.0..=3.0);
            let cy = c + rng.gen_range(-3.0..=3.0);
            face_at(&mut img, cx, cy, side, &mut rng);
            img
        })
        .collect();
    let neg = (0..n_neg)
        .map(|i| {
            let mut img = canvas(&mut rng);
            match i % 4 {
                0 => {}
                1 => {
                    let side = rng.gen_range(72.0..=88.0);
                    let off = |rng: &mut ChaCha8Rng| {
                        let d: f64 = rng.gen_range(24.0..=48.0);
                        if rng.gen_bool(0.5) {
                            d
                        } else {
                            -d
                        }
                    };
                    let (dx, dy) = match rng.gen_range(0..3) {
                        0 => (off(&mut rng), 0.0),
                        1 => (0.0, off(&mut rng)),
                        _ => (off(&mut rng), off(&mut rng)),
                    };
                    face_at(&mut img, c + dx, c + dy, side, &mut rng);
                }
                2 => {
                    let side = if rng.gen_bool(0.5) {
                        rng.gen_range(36.0..=56.0)
                    } else {
                        rng.gen_range(118.0..=150.0)
                    };
                    face_at(&mut img, c, c, side, &mut rng);
                }
                _ => {
                    for _ in 0..rng.gen_range(1..=3) {
                        let cx = rng.gen_range(0.0..WINDOW_CANVAS as f64);
                        let cy = rng.gen_range(0.0..WINDOW_CANVAS as f64);
                        let rx = rng.gen_range(6.0..40.0);
                        let ry = rng.gen_range(6.0..40.0);
                        let val = rng.gen_range(0.0..255.0);
                        for y in 0..WINDOW_CANVAS {
                            for x in 0..WINDOW_CANVAS {
                                if in_ellipse(x as f64 + 0.5, y as f64 + 0.5, (cx, cy), (rx, ry)) {
                                    img.set(x, y, val);
                                }
                            }
                        }
                    }
                }
            }
            img
        })
        .collect();
    (pos, neg)
}

/// Landmark training set of rendered faces with random eyelid openness.
/// The given box is the true face box jittered by up to 8% in position and
/// size; targets are the true landmarks expressed in that box.
pub fn face_samples(n: usize, seed: u64) -> Vec<ErtSample> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            let side = rng.gen_range(70.0..=110.0);
            let size = 160;
            let mut img = noise_image(size, size, rng.gen_range(60.0..140.0), rng.gen_range(0.0..4.0), &mut rng);
            let truth = Rect::new((size as f64 - side) / 2.0, (size as f64 - side) / 2.0, side, side);
            let open_l: f64 = rng.gen_range(0.0..=1.0);
            let open_r = (open_l + rng.gen_range(-0.1..=0.1f64)).clamp(0.0, 1.0);
            render_face(&mut img, &truth, open_l, open_r);
            let s = side * rng.gen_range(0.92..=1.08);
            let rect = Rect::new(
                truth.center().x - s / 2.0 + rng.gen_range(-0.08..=0.08) * side,
                truth.center().y - s / 2.0 + rng.gen_range(-0.08..=0.08) * side,
                s,
                s,
            );
            let pixel = Shape::new(
                template_landmarks(open_l, open_r)
                    .into_iter()
                    .map(|p| crate::ert::box_to_image(&truth, p))
                    .collect(),
                ShapeFrame::Pixel,
            )
            .expect("template shape is valid");
            ErtSample {
                image: img,
                rect,
                target: pixel.to_normalized(&rect),
            }
        })
        .collect()
}

/// Side of the brightness-shift task images; the face box is the whole image.
pub const SHIFT_IMAGE: usize = 64;
/// Largest landmark shift of the brightness-shift task, in box units.
pub const MAX_SHIFT: f64 = 0.1;

/// Landmark task whose answer is written in the image: the target is the
/// template shifted horizontally by `s` in `[-0.1, 0.1]`, and the left half
/// of the image has brightness `128 + 1000 s` while the right half stays 128.
pub fn brightness_shift_samples(n: usize, seed: u64) -> Vec<ErtSample> {
    let mut rng = rng(seed);
    let template = template_landmarks(1.0, 1.0);
    let half = SHIFT_IMAGE / 2;
    (0..n)
        .map(|_| {
            let s = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT);
            let b = 128.0 + 1000.0 * s;
            let image = GrayImage::from_fn(SHIFT_IMAGE, SHIFT_IMAGE, |x, _| if x < half { b } else { 128.0 });
            let target = Shape::new(
                template.iter().map(|p| Point::new(p.x + s, p.y)).collect(),
                ShapeFrame::Normalized,
            )
            .expect("template shape is valid");
            ErtSample {
                image,
                rect: Rect::new(0.0, 0.0, SHIFT_IMAGE as f64, SHIFT_IMAGE as f64),
                target,
            }
        })
        .collect()
}

/// A video of one face over a noisy background, with full blinks.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub face: Rect,
    /// `(first_frame, length)` of each blink; eyes are shut during a blink.
    pub blinks: Vec<(usize, usize)>,
    /// Frames rendered without a face.
    pub absent: Vec<usize>,
    pub noise: f64,
    pub seed: u64,
}

impl SequenceSpec {
    pub fn openness(&self, frame: usize) -> f64 {
        let shut = self.blinks.iter().any(|&(s, l)| frame >= s && frame < s + l);
        if shut {
            0.0
        } else {
            1.0
        }
    }

    pub fn render(&self, frame: usize) -> GrayImage {
        let mut rng = rng(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(frame as u64));
        let mut img = noise_image(self.width, self.height, 100.0, self.noise, &mut rng);
        if !self.absent.contains(&frame) {
            let o = self.openness(frame);
            render_face(&mut img, &self.face, o, o);
        }
        img
    }

    /// Writes `frame_000000.pgm`, `frame_000001.pgm`, ... into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), ImageError> {
        for i in 0..self.frames {
            save_pgm(&self.render(i), dir.as_ref().join(frame_file_name(i)))?;
        }
        Ok(())
    }
}

/// Detector trained on [`hog_training_windows`], one filter in all five slots.
pub fn train_demo_detector(seed: u64) -> Result<DetectorModel, DetectError> {
    let (pos, neg) = hog_training_windows(300, 600, seed);
    let pf = pos.iter().map(window_features).collect::<Result<Vec<_>, _>>()?;
    let nf = neg.iter().map(window_features).collect::<Result<Vec<_>, _>>()?;
    let filter = train_filter(&pf, &nf, &TrainConfig { seed, ..TrainConfig::default() })?;
    Ok(DetectorModel::replicated(filter, 0.0))
}

/// Landmark cascade trained on [`face_samples`].
pub fn train_demo_landmarker(seed: u64) -> Result<ErtModel, ErtError> {
    let cfg = ErtTrainConfig {
        levels: 6,
        trees_per_level: 60,
        depth: 4,
        seed,
        ..ErtTrainConfig::default()
    };
    train_ert(&face_samples(300, seed), &cfg).map(|(m, _)| m)
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

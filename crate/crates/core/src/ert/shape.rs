use serde::{Deserialize, Serialize};

use super::ErtError;
use crate::geom::{Point, Rect};

/// Coordinate frame of a [`Shape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFrame {
    /// `[0, 1]^2` relative to a face box.
    Normalized,
    /// Image pixels.
    Pixel,
}

/// A set of 2-D landmarks tagged with the frame they are expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    points: Vec<Point>,
    frame: ShapeFrame,
}

impl Shape {
    pub fn new(points: Vec<Point>, frame: ShapeFrame) -> Result<Self, ErtError> {
        if points.len() < 2 {
            return Err(ErtError::ShapeMismatch(format!(
                "shape needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(ErtError::ShapeMismatch("non-finite landmark".into()));
        }
        Ok(Self { points, frame })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn frame(&self) -> ShapeFrame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Maps a normalized shape into image pixels through `rect`.
    pub fn to_pixels(&self, rect: &Rect) -> Shape {
        debug_assert_eq!(self.frame, ShapeFrame::Normalized);
        Shape {
            points: self.points.iter().map(|&p| box_to_image(rect, p)).collect(),
            frame: ShapeFrame::Pixel,
        }
    }

    /// Maps a pixel shape into the normalized frame of `rect`.
    pub fn to_normalized(&self, rect: &Rect) -> Shape {
        debug_assert_eq!(self.frame, ShapeFrame::Pixel);
        Shape {
            points: self
                .points
                .iter()
                .map(|p| Point::new((p.x - rect.x) / rect.w, (p.y - rect.y) / rect.h))
                .collect(),
            frame: ShapeFrame::Normalized,
        }
    }
}

#[inline]
pub fn box_to_image(rect: &Rect, p: Point) -> Point {
    Point::new(rect.x + p.x * rect.w, rect.y + p.y * rect.h)
}

/// Rotation, uniform scale and translation: `p -> scale * R(rotation) p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: Point,
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        scale: 1.0,
        rotation: 0.0,
        translation: Point::new(0.0, 0.0),
    };

    /// Rotation and scale only; used for split-pixel offsets.
    #[inline]
    pub fn apply_linear(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        Point::new(
            self.scale * (c * p.x - s * p.y),
            self.scale * (s * p.x + c * p.y),
        )
    }

    pub fn apply(&self, p: Point) -> Point {
        self.apply_linear(p) + self.translation
    }

    /// `self` after `first`: `p -> self(first(p))`.
    pub fn compose(&self, first: &SimilarityTransform) -> SimilarityTransform {
        SimilarityTransform {
            scale: self.scale * first.scale,
            rotation: self.rotation + first.rotation,
            translation: self.apply(first.translation),
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv = SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: -self.rotation,
            translation: Point::default(),
        };
        let t = inv.apply_linear(self.translation);
        SimilarityTransform {
            translation: Point::new(-t.x, -t.y),
            ..inv
        }
    }
}

fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point::new(sx / n, sy / n)
}

/// Least-squares similarity transform mapping `from` onto `to`, minimizing
/// `sum |T(from_i) - to_i|^2` without reflection.
pub fn similarity_transform(from: &[Point], to: &[Point]) -> Result<SimilarityTransform, ErtError> {
    if from.len() != to.len() || from.len() < 2 {
        return Err(ErtError::ShapeMismatch(format!(
            "similarity transform between {} and {} points",
            from.len(),
            to.len()
        )));
    }
    let cf = centroid(from);
    let ct = centroid(to);
    let (mut a, mut b, mut var) = (0.0, 0.0, 0.0);
    for (f, t) in from.iter().zip(to) {
        let f = *f - cf;
        let t = *t - ct;
        a += f.x * t.x + f.y * t.y;
        b += f.x * t.y - f.y * t.x;
        var += f.x * f.x + f.y * f.y;
    }
    if !(var > 1e-300) || !var.is_finite() {
        return Err(ErtError::Degenerate("source shape has zero spread".into()));
    }
    let scale = a.hypot(b) / var;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(ErtError::Degenerate("target shape has zero spread".into()));
    }
    let rotation = b.atan2(a);
    let lin = SimilarityTransform {
        scale,
        rotation,
        translation: Point::default(),
    };
    Ok(SimilarityTransform {
        translation: ct - lin.apply_linear(cf),
        ..lin
    })
}

/// [`similarity_transform`] over tagged shapes; both must share a frame.
pub fn shape_similarity(from: &Shape, to: &Shape) -> Result<SimilarityTransform, ErtError> {
    if from.frame != to.frame {
        return Err(ErtError::ShapeMismatch("shapes are in different frames".into()));
    }
    similarity_transform(&from.points, &to.points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Point> {
        vec![
            Point::new(-1.0, -1.0),
            Point::new(1.0, -1.0),
            Point::new(1.0, 1.0),
            Point::new(-1.0, 1.0),
            Point::new(0.0, 0.5),
        ]
    }

    #[test]
    fn identity() {
        let s = square();
        let t = similarity_transform(&s, &s).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.rotation.abs() < 1e-12);
        assert!(t.translation.x.abs() < 1e-12 && t.translation.y.abs() < 1e-12);
    }

    #[test]
    fn pure_scale_about_origin() {
        let s: Vec<Point> = square()[..4].to_vec();
        let to: Vec<Point> = s.iter().map(|&p| p * 2.0).collect();
        let t = similarity_transform(&s, &to).unwrap();
        assert!((t.scale - 2.0).abs() < 1e-12);
        assert!(t.rotation.abs() < 1e-12);
        assert!(t.translation.x.abs() < 1e-12 && t.translation.y.abs() < 1e-12);
    }

    #[test]
    fn degenerate_source() {
        let s = vec![Point::new(1.0, 1.0); 3];
        let to = square()[..3].to_vec();
        assert!(matches!(similarity_transform(&s, &to), Err(ErtError::Degenerate(_))));
        assert!(similarity_transform(&s[..1], &to[..1]).is_err());
    }

    #[test]
    fn frames_must_match() {
        let a = Shape::new(square(), ShapeFrame::Normalized).unwrap();
        let b = Shape::new(square(), ShapeFrame::Pixel).unwrap();
        assert!(shape_similarity(&a, &b).is_err());
    }

    #[test]
    fn inverse_and_compose() {
        let t = SimilarityTransform {
            scale: 1.7,
            rotation: 0.4,
            translation: Point::new(3.0, -2.0),
        };
        let id = t.compose(&t.inverse());
        let p = Point::new(0.3, 0.9);
        assert!(id.apply(p).dist(p) < 1e-12);
    }
}

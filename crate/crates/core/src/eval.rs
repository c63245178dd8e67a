//! Detection and landmark accuracy metrics, and the annotation formats they read.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ert::EyeIndices;
use crate::geom::{Point, Rect};

pub const DEFAULT_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0} is undefined: zero denominator")]
    UndefinedMetric(&'static str),
    #[error("true eye centers coincide")]
    CoincidentEyes,
    #[error("landmark index {index} out of range for {len} landmarks")]
    MissingLandmark { index: usize, len: usize },
    #[error("no prediction for image {0:?}")]
    MissingPrediction(String),
    #[error("annotation file has no records")]
    EmptyAnnotations,
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DetMatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for DetMatchResult {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Greedy matching: detections in descending score order (input order on
/// ties) each claim the unclaimed truth of highest IoU, if that IoU is at
/// least `iou_min`; the lowest truth index wins IoU ties.
pub fn match_detections(dets: &[(Rect, f64)], truths: &[Rect], iou_min: f64) -> DetMatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.total_cmp(&dets[a].1));
    let mut claimed = vec![false; truths.len()];
    let mut tp = 0;
    for i in order {
        let best = truths
            .iter()
            .enumerate()
            .filter(|(j, _)| !claimed[*j])
            .map(|(j, t)| (j, dets[i].0.iou(t)))
            .filter(|&(_, iou)| iou >= iou_min)
            .fold(None, |best: Option<(usize, f64)>, c| match best {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            });
        if let Some((j, _)) = best {
            claimed[j] = true;
            tp += 1;
        }
    }
    DetMatchResult {
        tp,
        fp: dets.len() - tp,
        fn_: truths.len() - tp,
    }
}

pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// `100 * tp / (tp + fn)`, rounded to one decimal.
pub fn recall(tp: usize, fn_: usize) -> Result<f64, EvalError> {
    if tp + fn_ == 0 {
        return Err(EvalError::UndefinedMetric("recall"));
    }
    Ok(round1(100.0 * tp as f64 / (tp + fn_) as f64))
}

/// `100 * tp / (tp + fp)`, rounded to one decimal.
pub fn precision(tp: usize, fp: usize) -> Result<f64, EvalError> {
    if tp + fp == 0 {
        return Err(EvalError::UndefinedMetric("precision"));
    }
    Ok(round1(100.0 * tp as f64 / (tp + fp) as f64))
}

fn mean_point(points: &[Point], idx: &[usize; 6]) -> Result<Point, EvalError> {
    let mut s = Point::default();
    for &i in idx {
        let p = points.get(i).ok_or(EvalError::MissingLandmark {
            index: i,
            len: points.len(),
        })?;
        s = s + *p;
    }
    Ok(s * (1.0 / 6.0))
}

/// Mean over both eyes of the predicted-to-true eye-center distance, as a
/// percentage of the true inter-ocular distance. Predicted centers are the
/// means of each eye's six landmarks.
pub fn landmark_error(pred: &[Point], eyes: &EyeIndices, truth_left: Point, truth_right: Point) -> Result<f64, EvalError> {
    let iod = truth_left.dist(truth_right);
    if !(iod > 0.0) {
        return Err(EvalError::CoincidentEyes);
    }
    let l = mean_point(pred, &eyes.left)?;
    let r = mean_point(pred, &eyes.right)?;
    Ok(100.0 * (l.dist(truth_left) + r.dist(truth_right)) / (2.0 * iod))
}

// Annotation files -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedBox {
    pub id: String,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EyeAnnotation {
    pub id: String,
    pub left: Point,
    pub right: Point,
}

/// Rows of `id` plus four numbers; a first row starting with `id` is a header.
fn read_id_rows<R: Read>(input: R) -> Result<Vec<(String, [f64; 4])>, EvalError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if k == 0 && rec.get(0) == Some("id") {
            continue;
        }
        if rec.len() != 5 {
            return Err(EvalError::Parse {
                line,
                reason: format!("expected 5 fields, found {}", rec.len()),
            });
        }
        let mut v = [0.0; 4];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = rec[i + 1]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| EvalError::Parse {
                    line,
                    reason: format!("field {} is not a finite number: {:?}", i + 2, &rec[i + 1]),
                })?;
        }
        rows.push((rec[0].to_string(), v));
    }
    if rows.is_empty() {
        return Err(EvalError::EmptyAnnotations);
    }
    Ok(rows)
}

/// CSV `id,x,y,w,h`.
pub fn parse_box_annotations<R: Read>(input: R) -> Result<Vec<AnnotatedBox>, EvalError> {
    Ok(read_id_rows(input)?
        .into_iter()
        .map(|(id, v)| AnnotatedBox {
            id,
            rect: Rect::new(v[0], v[1], v[2], v[3]),
        })
        .collect())
}

/// CSV `id,lx,ly,rx,ry`.
pub fn parse_eye_annotations<R: Read>(input: R) -> Result<Vec<EyeAnnotation>, EvalError> {
    Ok(read_id_rows(input)?
        .into_iter()
        .map(|(id, v)| EyeAnnotation {
            id,
            left: Point::new(v[0], v[1]),
            right: Point::new(v[2], v[3]),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

pub fn parse_detection_records(data: &[u8]) -> Result<Vec<DetectionRecord>, EvalError> {
    Ok(serde_json::from_slice(data)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkRecord {
    pub id: String,
    pub landmarks: Vec<[f64; 2]>,
}

pub fn parse_landmark_records(data: &[u8]) -> Result<Vec<LandmarkRecord>, EvalError> {
    Ok(serde_json::from_slice(data)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub recall: f64,
    pub precision: f64,
}

impl DetectionReport {
    pub fn from_counts(c: DetMatchResult) -> Result<Self, EvalError> {
        Ok(Self {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            recall: recall(c.tp, c.fn_)?,
            precision: precision(c.tp, c.fp)?,
        })
    }
}

/// Matches per image id and sums the counts.
pub fn evaluate_detections(
    dets: &[DetectionRecord],
    truths: &[AnnotatedBox],
    iou_min: f64,
) -> DetMatchResult {
    let mut by_id: BTreeMap<&str, (Vec<(Rect, f64)>, Vec<Rect>)> = BTreeMap::new();
    for d in dets {
        by_id
            .entry(&d.id)
            .or_default()
            .0
            .push((Rect::new(d.x, d.y, d.w, d.h), d.score));
    }
    for t in truths {
        by_id.entry(&t.id).or_default().1.push(t.rect);
    }
    let mut total = DetMatchResult::default();
    for (d, t) in by_id.values() {
        total += match_detections(d, t, iou_min);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageError {
    pub id: String,
    pub error_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandmarkReport {
    pub mean_error_pct: f64,
    pub per_image: Vec<ImageError>,
}

/// Landmark error for every annotated image, in annotation order.
pub fn evaluate_landmarks(
    preds: &[LandmarkRecord],
    truths: &[EyeAnnotation],
    eyes: &EyeIndices,
) -> Result<LandmarkReport, EvalError> {
    if truths.is_empty() {
        return Err(EvalError::EmptyAnnotations);
    }
    let ids: BTreeSet<&str> = preds.iter().map(|p| p.id.as_str()).collect();
    let mut per_image = Vec::with_capacity(truths.len());
    for t in truths {
        if !ids.contains(t.id.as_str()) {
            return Err(EvalError::MissingPrediction(t.id.clone()));
        }
        let pred = preds.iter().find(|p| p.id == t.id).expect("id present");
        let points: Vec<Point> = pred.landmarks.iter().map(|p| Point::new(p[0], p[1])).collect();
        per_image.push(ImageError {
            id: t.id.clone(),
            error_pct: landmark_error(&points, eyes, t.left, t.right)?,
        });
    }
    let mean_error_pct = per_image.iter().map(|e| e.error_pct).sum::<f64>() / per_image.len() as f64;
    Ok(LandmarkReport {
        mean_error_pct,
        per_image,
    })
}

//! Eyelid closure from eye landmarks, and the per-frame blink trace.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::ert::EyeIndices;
use crate::geom::Point;

pub const DEFAULT_BASELINE_QUANTILE: f64 = 0.95;
pub const DEFAULT_CLOSURE_THRESHOLD: f64 = 0.7;
pub const DEFAULT_MIN_FRAMES: usize = 3;
pub const CSV_HEADER: [&str; 7] = [
    "frame",
    "t",
    "ear_left",
    "ear_right",
    "closure_left",
    "closure_right",
    "face_found",
];

#[derive(Debug, Error)]
pub enum BlinkError {
    #[error("degenerate eye: corner span {0} is too small")]
    DegenerateEye(f64),
    #[error("fps must be positive and finite, got {0}")]
    InvalidFps(f64),
    #[error("baseline quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("no frame with a face: eye baseline undefined")]
    NoBaseline,
    #[error("eye baseline EAR is zero")]
    ZeroBaseline,
    #[error("frame {0} appears more than once")]
    DuplicateFrame(usize),
    #[error("csv line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Eye aspect ratio `(|p2 - p6| + |p3 - p5|) / (2 |p1 - p4|)`.
pub fn eye_aspect_ratio(p: &[Point; 6]) -> Result<f64, BlinkError> {
    let span = p[0].dist(p[3]);
    if !(span > 1e-9) {
        return Err(BlinkError::DegenerateEye(span));
    }
    Ok((p[1].dist(p[5]) + p[2].dist(p[4])) / (2.0 * span))
}

/// `(left, right)` EAR of a landmark set.
pub fn eye_ears(landmarks: &[Point], eyes: &EyeIndices) -> Result<(f64, f64), BlinkError> {
    let pick = |idx: &[usize; 6]| idx.map(|i| landmarks[i]);
    Ok((eye_aspect_ratio(&pick(&eyes.left))?, eye_aspect_ratio(&pick(&eyes.right))?))
}

/// Per-frame input to [`build_trace`]; `ears` is `None` when no face was found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEars {
    pub frame_index: usize,
    pub face_found: bool,
    pub ears: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlinkSample {
    pub frame_index: usize,
    pub t: f64,
    pub ear_left: Option<f64>,
    pub ear_right: Option<f64>,
    pub closure_left: Option<f64>,
    pub closure_right: Option<f64>,
    pub face_found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlinkTrace {
    pub fps: f64,
    pub samples: Vec<BlinkSample>,
    pub baseline_left: f64,
    pub baseline_right: f64,
}

/// Linear-interpolated quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// `clamp(1 - ear / baseline, 0, 1)`.
pub fn closure(ear: f64, baseline: f64) -> f64 {
    (1.0 - ear / baseline).clamp(0.0, 1.0)
}

pub fn build_trace(frames: &[FrameEars], fps: f64, baseline_quantile: f64) -> Result<BlinkTrace, BlinkError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(BlinkError::InvalidFps(fps));
    }
    if !(0.0..=1.0).contains(&baseline_quantile) {
        return Err(BlinkError::InvalidQuantile(baseline_quantile));
    }
    let mut frames = frames.to_vec();
    frames.sort_by_key(|f| f.frame_index);
    if let Some(w) = frames.windows(2).find(|w| w[0].frame_index == w[1].frame_index) {
        return Err(BlinkError::DuplicateFrame(w[0].frame_index));
    }
    let ears: Vec<(f64, f64)> = frames.iter().filter_map(|f| f.ears).collect();
    let left: Vec<f64> = ears.iter().map(|e| e.0).collect();
    let right: Vec<f64> = ears.iter().map(|e| e.1).collect();
    let baseline_left = quantile(&left, baseline_quantile).ok_or(BlinkError::NoBaseline)?;
    let baseline_right = quantile(&right, baseline_quantile).ok_or(BlinkError::NoBaseline)?;
    if !(baseline_left > 0.0 && baseline_right > 0.0) {
        return Err(BlinkError::ZeroBaseline);
    }
    let samples = frames
        .iter()
        .map(|f| BlinkSample {
            frame_index: f.frame_index,
            t: f.frame_index as f64 / fps,
            ear_left: f.ears.map(|e| e.0),
            ear_right: f.ears.map(|e| e.1),
            closure_left: f.ears.map(|e| closure(e.0, baseline_left)),
            closure_right: f.ears.map(|e| closure(e.1, baseline_right)),
            face_found: f.face_found,
        })
        .collect();
    Ok(BlinkTrace {
        fps,
        samples,
        baseline_left,
        baseline_right,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlinkEvent {
    pub onset_frame: usize,
    pub offset_frame: usize,
    pub peak_closure: f64,
}

/// Maximal runs of consecutive frames with left-eye closure at or above
/// `threshold`, kept when at least `min_frames` long. Frames without a
/// closure value break a run.
pub fn detect_blinks(trace: &BlinkTrace, threshold: f64, min_frames: usize) -> Vec<BlinkEvent> {
    let mut events = Vec::new();
    let mut run: Option<(BlinkEvent, usize)> = None;
    let mut close = |run: &mut Option<(BlinkEvent, usize)>| {
        if let Some((ev, len)) = run.take() {
            if len >= min_frames.max(1) {
                events.push(ev);
            }
        }
    };
    for s in &trace.samples {
        let c = s.closure_left.filter(|&c| c >= threshold);
        let contiguous = run.as_ref().is_some_and(|(ev, _)| ev.offset_frame + 1 == s.frame_index);
        if !contiguous {
            close(&mut run);
        }
        match (c, run.as_mut()) {
            (Some(c), Some((ev, len))) => {
                ev.offset_frame = s.frame_index;
                ev.peak_closure = ev.peak_closure.max(c);
                *len += 1;
            }
            (Some(c), None) => {
                run = Some((
                    BlinkEvent {
                        onset_frame: s.frame_index,
                        offset_frame: s.frame_index,
                        peak_closure: c,
                    },
                    1,
                ))
            }
            (None, _) => close(&mut run),
        }
    }
    close(&mut run);
    events
}

/// Shortest decimal form of `v` rounded to 9 significant digits.
pub fn fmt_sig9(v: f64) -> String {
    let r: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{r}")
}

fn opt_field(v: Option<f64>) -> String {
    v.map(fmt_sig9).unwrap_or_default()
}

pub fn write_csv_to<W: Write>(trace: &BlinkTrace, out: W) -> Result<(), BlinkError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in &trace.samples {
        w.write_record([
            s.frame_index.to_string(),
            fmt_sig9(s.t),
            opt_field(s.ear_left),
            opt_field(s.ear_right),
            opt_field(s.closure_left),
            opt_field(s.closure_right),
            if s.face_found { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush().map_err(|source| BlinkError::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn to_csv_string(trace: &BlinkTrace) -> String {
    let mut buf = Vec::new();
    write_csv_to(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn write_csv(trace: &BlinkTrace, path: impl AsRef<Path>) -> Result<(), BlinkError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| BlinkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv_to(trace, file)
}

/// Parses a trace CSV back into samples.
pub fn read_csv_from<R: Read>(input: R) -> Result<Vec<BlinkSample>, BlinkError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(BlinkError::Parse {
            line: 1,
            reason: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut samples = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |reason: String| BlinkError::Parse { line, reason };
        let num = |i: usize| -> Result<Option<f64>, BlinkError> {
            let f = &rec[i];
            if f.is_empty() {
                return Ok(None);
            }
            f.parse::<f64>()
                .map(Some)
                .map_err(|e| err(format!("{}: {e}", CSV_HEADER[i])))
        };
        let frame_index = rec[0].parse::<usize>().map_err(|e| err(format!("frame: {e}")))?;
        let t = num(1)?.ok_or_else(|| err("t is empty".into()))?;
        let face_found = match &rec[6] {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("face_found must be 0 or 1, got {other:?}"))),
        };
        samples.push(BlinkSample {
            frame_index,
            t,
            ear_left: num(2)?,
            ear_right: num(3)?,
            closure_left: num(4)?,
            closure_right: num(5)?,
            face_found,
        });
    }
    Ok(samples)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<BlinkSample>, BlinkError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| BlinkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(v1: f64, v2: f64, h: f64) -> [Point; 6] {
        [
            Point::new(0.0, 0.0),
            Point::new(h / 3.0, -v1 / 2.0),
            Point::new(2.0 * h / 3.0, -v2 / 2.0),
            Point::new(h, 0.0),
            Point::new(2.0 * h / 3.0, v2 / 2.0),
            Point::new(h / 3.0, v1 / 2.0),
        ]
    }

    #[test]
    fn ear_examples() {
        assert_eq!(eye_aspect_ratio(&eye(2.0, 2.0, 4.0)).unwrap(), 0.5);
        assert_eq!(eye_aspect_ratio(&eye(0.0, 0.0, 4.0)).unwrap(), 0.0);
        assert!(matches!(eye_aspect_ratio(&eye(1.0, 1.0, 0.0)), Err(BlinkError::DegenerateEye(_))));
    }

    fn frames(ears: &[Option<f64>]) -> Vec<FrameEars> {
        ears.iter()
            .enumerate()
            .map(|(i, e)| FrameEars {
                frame_index: i,
                face_found: e.is_some(),
                ears: e.map(|v| (v, v)),
            })
            .collect()
    }

    #[test]
    fn constant_ear_zero_closure() {
        let t = build_trace(&frames(&[Some(0.3); 10]), 30.0, 0.95).unwrap();
        assert!(t.samples.iter().all(|s| s.closure_left == Some(0.0)));
        assert!(detect_blinks(&t, 0.7, 3).is_empty());
    }

    #[test]
    fn no_face_frames() {
        assert!(matches!(build_trace(&frames(&[None, None]), 30.0, 0.95), Err(BlinkError::NoBaseline)));
        let t = build_trace(&frames(&[Some(0.3), None]), 30.0, 0.95).unwrap();
        assert_eq!(t.samples[1].ear_left, None);
        assert!(!t.samples[1].face_found);
        let csv = to_csv_string(&t);
        assert!(csv.lines().nth(2).unwrap().starts_with("1,0.0333333333,,,,,0"));
        assert!(matches!(build_trace(&frames(&[Some(0.3)]), 0.0, 0.95), Err(BlinkError::InvalidFps(_))));
    }

    #[test]
    fn pulse_detected() {
        let mut e = vec![Some(0.3); 20];
        for v in &mut e[6..11] {
            *v = Some(0.0);
        }
        let t = build_trace(&frames(&e), 30.0, 0.95).unwrap();
        assert_eq!(t.samples[8].closure_left, Some(1.0));
        let ev = detect_blinks(&t, 0.7, 3);
        assert_eq!(
            ev,
            vec![BlinkEvent {
                onset_frame: 6,
                offset_frame: 10,
                peak_closure: 1.0
            }]
        );
        assert!(detect_blinks(&t, 0.7, 6).is_empty());
    }

    #[test]
    fn csv_round_trip_exact() {
        let t = BlinkTrace {
            fps: 25.0,
            samples: vec![BlinkSample {
                frame_index: 3,
                t: 0.12,
                ear_left: Some(0.25),
                ear_right: Some(0.3125),
                closure_left: Some(0.5),
                closure_right: Some(0.0),
                face_found: true,
            }],
            baseline_left: 0.5,
            baseline_right: 0.5,
        };
        let csv = to_csv_string(&t);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(read_csv_from(csv.as_bytes()).unwrap(), t.samples);
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.5), "0.5");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(123456.789012), "123456.789");
        assert_eq!(fmt_sig9(0.0), "0");
    }

    #[test]
    fn bad_csv() {
        assert!(read_csv_from("a,b\n1,2\n".as_bytes()).is_err());
        let bad = format!("{}\n0,0,x,,,,1\n", CSV_HEADER.join(","));
        assert!(matches!(read_csv_from(bad.as_bytes()), Err(BlinkError::Parse { .. })));
    }
}

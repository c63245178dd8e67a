//! Batched three-stage pipeline over bounded queues.
//!
//! The decode worker takes a token before reading each batch and the
//! collector returns it once the batch leaves the reorder buffer, so at most
//! `(stages + 1) * queue_capacity` batches are alive at a time.
//!
//! Only one token exists until the first batch is emitted. The warm-up batch
//! therefore runs alone, and the timed part of the run (everything after the
//! first emission) starts from an empty pipeline instead of one that has
//! already worked ahead on later batches.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::thread;
use std::time::Instant;

use crossbeam_channel::bounded;

use super::{mean_stats, ms_since, FrameResult, Job, PipelineConfig, RunStats, RuntimeError, StageTimings, NUM_STAGES};
use crate::facedet::Detection;
use crate::imgio::GrayImage;

type Msg<T> = (usize, Result<Vec<T>, RuntimeError>);

struct Decoded {
    index: usize,
    img: GrayImage,
    decode_ms: f64,
}

struct Detected {
    index: usize,
    img: GrayImage,
    detections: Vec<Detection>,
    decode_ms: f64,
    detect_ms: f64,
}

pub(super) fn run_pipelined(job: &Job, cfg: &PipelineConfig) -> Result<(Vec<FrameResult>, RunStats), RuntimeError> {
    let start = Instant::now();
    let n = job.source.len();
    let b = cfg.batch_size;
    let n_batches = n.div_ceil(b);
    let c = cfg.queue_capacity;
    let n_tokens = (NUM_STAGES + 1) * c;

    let (tok_tx, tok_rx) = bounded::<()>(n_tokens);
    tok_tx.send(()).expect("token queue has room");
    let (dec_tx, dec_rx) = bounded::<Msg<Decoded>>(c);
    let (det_tx, det_rx) = bounded::<Msg<Detected>>(c);
    let (out_tx, out_rx) = bounded::<Msg<FrameResult>>(c);
    let cancel = AtomicBool::new(false);
    let resident = AtomicUsize::new(0);
    let peak = AtomicUsize::new(0);

    let mut results: Vec<FrameResult> = Vec::with_capacity(n);
    let mut first_emit: Option<(Instant, usize)> = None;
    let mut last_emit = start;
    let mut error: Option<(usize, RuntimeError)> = None;

    thread::scope(|s| {
        let (cancel, resident, peak) = (&cancel, &resident, &peak);

        s.spawn(move || {
            for batch in 0..n_batches {
                if cancel.load(Ordering::SeqCst) || tok_rx.recv().is_err() {
                    break;
                }
                let range = batch * b..n.min((batch + 1) * b);
                let now = resident.fetch_add(range.len(), Ordering::SeqCst) + range.len();
                peak.fetch_max(now, Ordering::SeqCst);
                let res: Result<Vec<Decoded>, RuntimeError> = range
                    .map(|index| job.decode(index).map(|(img, decode_ms)| Decoded { index, img, decode_ms }))
                    .collect();
                let failed = res.is_err();
                if dec_tx.send((batch, res)).is_err() || failed {
                    break;
                }
            }
        });

        for _ in 0..cfg.detect_workers {
            let (rx, tx) = (dec_rx.clone(), det_tx.clone());
            s.spawn(move || {
                for (batch, res) in rx {
                    if cancel.load(Ordering::SeqCst) {
                        continue;
                    }
                    let res = res.and_then(|frames| {
                        frames
                            .into_iter()
                            .map(|f| {
                                job.detect(&f.img).map(|(detections, detect_ms)| Detected {
                                    index: f.index,
                                    img: f.img,
                                    detections,
                                    decode_ms: f.decode_ms,
                                    detect_ms,
                                })
                            })
                            .collect()
                    });
                    if tx.send((batch, res)).is_err() {
                        break;
                    }
                }
            });
        }
        drop((dec_rx, det_tx));

        for _ in 0..cfg.landmark_workers {
            let (rx, tx) = (det_rx.clone(), out_tx.clone());
            s.spawn(move || {
                for (batch, res) in rx {
                    if cancel.load(Ordering::SeqCst) {
                        continue;
                    }
                    let res = res.and_then(|frames| {
                        frames
                            .into_iter()
                            .map(|f| {
                                let face = f.detections.first().cloned();
                                job.landmarks(&f.img, face.as_ref()).map(|(landmarks, landmark_ms)| FrameResult {
                                    frame_index: f.index,
                                    detections: f.detections,
                                    face,
                                    landmarks,
                                    timings: StageTimings {
                                        decode_ms: f.decode_ms,
                                        detect_ms: f.detect_ms,
                                        landmark_ms,
                                    },
                                })
                            })
                            .collect()
                    });
                    if tx.send((batch, res)).is_err() {
                        break;
                    }
                }
            });
        }
        drop((det_rx, out_tx));

        let mut tok_tx = Some(tok_tx);
        let mut pending: BTreeMap<usize, Vec<FrameResult>> = BTreeMap::new();
        let mut next = 0;
        for (batch, res) in out_rx {
            match res {
                Ok(frames) => {
                    pending.insert(batch, frames);
                }
                Err(e) => {
                    cancel.store(true, Ordering::SeqCst);
                    tok_tx = None;
                    if error.as_ref().map_or(true, |(first, _)| batch < *first) {
                        error = Some((batch, e));
                    }
                }
            }
            if error.is_some() {
                continue;
            }
            while let Some(frames) = pending.remove(&next) {
                resident.fetch_sub(frames.len(), Ordering::SeqCst);
                results.extend(frames);
                last_emit = Instant::now();
                first_emit.get_or_insert((last_emit, results.len()));
                let returned = if next == 0 { n_tokens } else { 1 };
                next += 1;
                if let Some(t) = &tok_tx {
                    for _ in 0..returned {
                        let _ = t.send(());
                    }
                }
            }
        }
    });

    if let Some((_, e)) = error {
        return Err(e);
    }
    let wall_ms = ms_since(start);
    let (warmup, end_to_end_ms) = match first_emit {
        Some((t0, k)) if k < n => (k, (last_emit - t0).as_secs_f64() * 1e3 / (n - k) as f64),
        _ => (0, wall_ms / n as f64),
    };
    let stats = RunStats {
        frames: n,
        warmup_frames: warmup,
        mean_stage_ms: mean_stats(&results, warmup),
        end_to_end_ms,
        wall_ms,
        peak_resident_frames: peak.load(Ordering::SeqCst),
    };
    Ok((results, stats))
}

//! `blinkline` command-line interface.
//!
//! Each subcommand writes its artifact to `--out`, or to stdout when `--out`
//! is omitted; diagnostics go to stderr. Exit status is 0 on success, 1 on a
//! domain error (bad input data, missing files) and 2 on a usage error.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blinkline::blink::{self, BlinkError};
use blinkline::ert::{self, ErtError, ErtModel, ErtTrainConfig, TrainingManifest};
use blinkline::eval::{self, DetMatchResult, DetectionReport};
use blinkline::facedet::{self, DetectorModel, TrainConfig, DEFAULT_MIN_FACE_RATIO, NUM_ROTATIONS};
use blinkline::geom::Rect;
use blinkline::imgio::load_pgm;
use blinkline::runtime::{self, Mode, PipelineConfig, RuntimeError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "blinkline", version, about = "Face detection, landmarks and eyeblink traces from PGM frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect faces in one image.
    Detect(DetectArgs),
    /// Detect faces and place landmarks on each.
    Landmarks(LandmarksArgs),
    /// Blink trace CSV over a directory of frame_NNNNNN.pgm files.
    Trace(TraceArgs),
    /// Time sequential and pipelined runs over a frame directory.
    Bench(BenchArgs),
    /// Recall and precision of detections against annotated boxes.
    EvalDetect(EvalDetectArgs),
    /// Eye-center error of predicted landmarks.
    EvalLandmarks(EvalLandmarksArgs),
    /// Train a detector filter from positive and negative PGM windows.
    TrainHog(TrainHogArgs),
    /// Train a landmark cascade from a sample manifest.
    TrainErt(TrainErtArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// Input PGM image.
    #[arg(long)]
    image: PathBuf,
    /// Detector model JSON.
    #[arg(long)]
    hog_model: PathBuf,
    /// Output JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LandmarksArgs {
    /// Input PGM image.
    #[arg(long)]
    image: PathBuf,
    /// Detector model JSON.
    #[arg(long)]
    hog_model: PathBuf,
    /// Landmark model JSON.
    #[arg(long)]
    ert_model: PathBuf,
    /// Output JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sequential,
    Pipelined,
}

#[derive(Args)]
struct PipelineArgs {
    /// Execution mode.
    #[arg(long, value_enum, default_value = "pipelined")]
    mode: ModeArg,
    /// Frames per batch.
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Detection workers in pipelined mode.
    #[arg(long, default_value_t = 2)]
    detect_workers: usize,
    /// Landmark workers in pipelined mode.
    #[arg(long, default_value_t = 1)]
    landmark_workers: usize,
    /// Capacity of each inter-stage queue, in batches.
    #[arg(long, default_value_t = 2)]
    queue_capacity: usize,
}

#[derive(Args)]
struct TraceArgs {
    /// Directory of frame_NNNNNN.pgm files.
    #[arg(long)]
    frames_dir: PathBuf,
    /// Detector model JSON.
    #[arg(long)]
    hog_model: PathBuf,
    /// Landmark model JSON.
    #[arg(long)]
    ert_model: PathBuf,
    /// Frame rate of the sequence.
    #[arg(long, allow_negative_numbers = true)]
    fps: f64,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write detected blinks (left eye) as JSON.
    #[arg(long)]
    blinks_out: Option<PathBuf>,
    /// Closure level a blink must reach.
    #[arg(long, default_value_t = blink::DEFAULT_CLOSURE_THRESHOLD)]
    blink_threshold: f64,
    /// Shortest blink, in frames.
    #[arg(long, default_value_t = blink::DEFAULT_MIN_FRAMES)]
    min_frames: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of frame_NNNNNN.pgm files.
    #[arg(long)]
    frames_dir: PathBuf,
    /// Detector model JSON.
    #[arg(long)]
    hog_model: PathBuf,
    /// Landmark model JSON.
    #[arg(long)]
    ert_model: PathBuf,
    /// Frame rate of the sequence.
    #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
    fps: f64,
    /// JSON list of pipeline configurations (default: sequential and pipelined defaults).
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalDetectArgs {
    /// Detections JSON: [{id, x, y, w, h, score}].
    #[arg(long, requires = "annotations", required_unless_present = "tp")]
    detections: Option<PathBuf>,
    /// Annotation CSV: id,x,y,w,h.
    #[arg(long, requires = "detections")]
    annotations: Option<PathBuf>,
    /// Smallest IoU that counts as a match.
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// True positives, instead of files.
    #[arg(long, requires_all = ["fp", "fn_"], conflicts_with = "detections")]
    tp: Option<usize>,
    /// False positives, with --tp.
    #[arg(long, requires = "tp")]
    fp: Option<usize>,
    /// False negatives, with --tp.
    #[arg(long = "fn", id = "fn_", requires = "tp")]
    fn_: Option<usize>,
    /// Output JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalLandmarksArgs {
    /// Predictions JSON: [{id, landmarks: [[x, y], ...]}].
    #[arg(long)]
    pred: PathBuf,
    /// Eye-center CSV: id,lx,ly,rx,ry.
    #[arg(long)]
    truth: PathBuf,
    /// Output JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainHogArgs {
    /// Directory of positive PGM windows.
    #[arg(long)]
    positives_dir: PathBuf,
    /// Directory of negative PGM windows.
    #[arg(long)]
    negatives_dir: PathBuf,
    /// Perceptron passes over the training set.
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Perceptron step size.
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f64,
    /// Shuffling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Detection threshold stored in the model.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    threshold: f64,
    /// Smallest detectable face as a fraction of the image's shorter side.
    #[arg(long, default_value_t = DEFAULT_MIN_FACE_RATIO)]
    min_face_ratio: f64,
    /// Output model path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainErtArgs {
    /// Manifest JSON: [{image, box: [x, y, w, h], landmarks: [[x, y], ...]}].
    #[arg(long)]
    samples: PathBuf,
    /// Training configuration JSON; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed, overriding the configuration's.
    #[arg(long)]
    seed: Option<u64>,
    /// Output model path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl Failure {
    fn domain(e: impl Display) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<RuntimeError> for Failure {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::InvalidConfig(_) | RuntimeError::Blink(BlinkError::InvalidFps(_)) => {
                Failure::Usage(e.to_string())
            }
            e => Failure::domain(e),
        }
    }
}

impl From<ErtError> for Failure {
    fn from(e: ErtError) -> Self {
        match e {
            ErtError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            e => Failure::domain(e),
        }
    }
}

type CliResult = Result<(), Failure>;

fn emit(out: Option<&Path>, body: &[u8]) -> CliResult {
    match out {
        Some(path) => fs::write(path, body).map_err(|e| Failure::Domain(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body).and_then(|_| stdout.flush()).map_err(Failure::domain)
        }
    }
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> CliResult {
    let mut s = serde_json::to_string_pretty(value).map_err(Failure::domain)?;
    s.push('\n');
    emit(out, s.as_bytes())
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn check_fps(fps: f64) -> CliResult {
    if fps > 0.0 && fps.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--fps must be positive, got {fps}")))
    }
}

fn apply_thread_cap(cfg: PipelineConfig) -> PipelineConfig {
    match runtime::thread_cap_from_env() {
        Some(cap) => cfg.capped(cap),
        None => cfg,
    }
}

fn detect(a: DetectArgs) -> CliResult {
    let model = DetectorModel::load(&a.hog_model).map_err(Failure::domain)?;
    let img = load_pgm(&a.image).map_err(Failure::domain)?;
    let dets = facedet::detect_faces(&img, &model).map_err(Failure::domain)?;
    emit_json(a.out.as_deref(), &dets)
}

#[derive(Serialize)]
struct FaceLandmarks {
    #[serde(rename = "box")]
    rect: Rect,
    score: f64,
    landmarks: Vec<[f64; 2]>,
}

fn landmarks(a: LandmarksArgs) -> CliResult {
    let hog = DetectorModel::load(&a.hog_model).map_err(Failure::domain)?;
    let ert = ErtModel::load(&a.ert_model)?;
    let img = load_pgm(&a.image).map_err(Failure::domain)?;
    let faces = facedet::detect_faces(&img, &hog)
        .map_err(Failure::domain)?
        .into_iter()
        .map(|d| {
            let shape = ert::predict_landmarks(&img, &d.rect, &ert)?;
            Ok(FaceLandmarks {
                rect: d.rect,
                score: d.score,
                landmarks: shape.points().iter().map(|p| [p.x, p.y]).collect(),
            })
        })
        .collect::<Result<Vec<_>, ErtError>>()?;
    emit_json(a.out.as_deref(), &faces)
}

fn pipeline_config(p: &PipelineArgs) -> Result<PipelineConfig, Failure> {
    let cfg = PipelineConfig {
        batch_size: p.batch,
        detect_workers: p.detect_workers,
        landmark_workers: p.landmark_workers,
        queue_capacity: p.queue_capacity,
        mode: match p.mode {
            ModeArg::Sequential => Mode::Sequential,
            ModeArg::Pipelined => Mode::Pipelined,
        },
    };
    cfg.validate()?;
    Ok(apply_thread_cap(cfg))
}

fn trace(a: TraceArgs) -> CliResult {
    check_fps(a.fps)?;
    let cfg = pipeline_config(&a.pipeline)?;
    let hog = DetectorModel::load(&a.hog_model).map_err(Failure::domain)?;
    let ert = ErtModel::load(&a.ert_model)?;
    let out = runtime::run(&a.frames_dir, &hog, &ert, a.fps, &cfg)?;
    let s = &out.stats;
    eprintln!(
        "{} frames, {:.3} ms/frame end to end (decode {:.3}, detect {:.3}, landmark {:.3})",
        s.frames, s.end_to_end_ms, s.mean_stage_ms.decode_ms, s.mean_stage_ms.detect_ms, s.mean_stage_ms.landmark_ms
    );
    if let Some(path) = &a.blinks_out {
        let events = blink::detect_blinks(&out.trace, a.blink_threshold, a.min_frames);
        emit_json(Some(path), &events)?;
    }
    emit(a.out.as_deref(), blink::to_csv_string(&out.trace).as_bytes())
}

fn bench(a: BenchArgs) -> CliResult {
    check_fps(a.fps)?;
    let grid = match &a.grid {
        Some(path) => runtime::parse_grid(&read(path)?)?,
        None => vec![PipelineConfig::sequential(), PipelineConfig::default()],
    };
    let grid: Vec<PipelineConfig> = grid.into_iter().map(apply_thread_cap).collect();
    let hog = DetectorModel::load(&a.hog_model).map_err(Failure::domain)?;
    let ert = ErtModel::load(&a.ert_model)?;
    let reports = runtime::bench(&a.frames_dir, &hog, &ert, a.fps, &grid)?;
    emit_json(a.out.as_deref(), &reports)
}

fn eval_detect(a: EvalDetectArgs) -> CliResult {
    let counts = match (a.tp, a.fp, a.fn_) {
        (Some(tp), Some(fp), Some(fn_)) => DetMatchResult { tp, fp, fn_ },
        _ => {
            let (dets, anns) = match (&a.detections, &a.annotations) {
                (Some(d), Some(t)) => (d, t),
                _ => return Err(Failure::Usage("need --detections and --annotations, or --tp --fp --fn".into())),
            };
            if !(0.0..=1.0).contains(&a.iou) {
                return Err(Failure::Usage(format!("--iou must lie in [0, 1], got {}", a.iou)));
            }
            let dets = eval::parse_detection_records(&read(dets)?).map_err(Failure::domain)?;
            let truths = eval::parse_box_annotations(read(anns)?.as_slice()).map_err(Failure::domain)?;
            eval::evaluate_detections(&dets, &truths, a.iou)
        }
    };
    emit_json(a.out.as_deref(), &DetectionReport::from_counts(counts).map_err(Failure::domain)?)
}

fn eval_landmarks(a: EvalLandmarksArgs) -> CliResult {
    let preds = eval::parse_landmark_records(&read(&a.pred)?).map_err(Failure::domain)?;
    let truths = eval::parse_eye_annotations(read(&a.truth)?.as_slice()).map_err(Failure::domain)?;
    let l = preds.first().map_or(ert::DEFAULT_LANDMARKS, |p| p.landmarks.len());
    let eyes = ert::eye_indices(l, None)?;
    let report = eval::evaluate_landmarks(&preds, &truths, &eyes).map_err(Failure::domain)?;
    emit_json(a.out.as_deref(), &report)
}

fn window_features_in(dir: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Domain(format!("{}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(Failure::domain)?.path();
        if path.extension().is_some_and(|e| e == "pgm") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let img = load_pgm(p).map_err(Failure::domain)?;
            facedet::window_features(&img).map_err(|e| Failure::Domain(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn train_hog(a: TrainHogArgs) -> CliResult {
    if a.epochs == 0 || !(a.learning_rate > 0.0) {
        return Err(Failure::Usage("--epochs and --learning-rate must be positive".into()));
    }
    if !(0.0..=1.0).contains(&a.min_face_ratio) || !a.threshold.is_finite() {
        return Err(Failure::Usage("--min-face-ratio must lie in [0, 1] and --threshold be finite".into()));
    }
    let pos = window_features_in(&a.positives_dir)?;
    let neg = window_features_in(&a.negatives_dir)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        seed: a.seed,
    };
    let filter = facedet::train_filter(&pos, &neg, &cfg).map_err(Failure::domain)?;
    eprintln!(
        "{} positives, {} negatives, training accuracy {:.4}",
        pos.len(),
        neg.len(),
        facedet::training_accuracy(&filter, &pos, &neg)
    );
    let model = DetectorModel::new(vec![filter; NUM_ROTATIONS], a.threshold, a.min_face_ratio)
        .map_err(Failure::domain)?;
    emit(a.out.as_deref(), model.to_json().as_bytes())
}

fn train_ert(a: TrainErtArgs) -> CliResult {
    let mut cfg: ErtTrainConfig = match &a.config {
        Some(path) => serde_json::from_slice(&read(path)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => ErtTrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let samples = TrainingManifest::load_samples(&a.samples)?;
    let (model, report) = ert::train_ert(&samples, &cfg)?;
    for (t, e) in report.mean_error.iter().enumerate() {
        eprintln!("level {t}: mean error {e:.6}");
    }
    emit(a.out.as_deref(), model.to_json().as_bytes())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(a) => detect(a),
        Command::Landmarks(a) => landmarks(a),
        Command::Trace(a) => trace(a),
        Command::Bench(a) => bench(a),
        Command::EvalDetect(a) => eval_detect(a),
        Command::EvalLandmarks(a) => eval_landmarks(a),
        Command::TrainHog(a) => train_hog(a),
        Command::TrainErt(a) => train_ert(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

#![allow(dead_code)]

use std::sync::OnceLock;

use blinkline::ert::ErtModel;
use blinkline::facedet::DetectorModel;
use blinkline::geom::Rect;
use blinkline::synth::{self, SequenceSpec};
use tempfile::TempDir;

pub fn models() -> &'static (DetectorModel, ErtModel) {
    static MODELS: OnceLock<(DetectorModel, ErtModel)> = OnceLock::new();
    MODELS.get_or_init(|| {
        (
            synth::train_demo_detector(1).unwrap(),
            synth::train_demo_landmarker(2).unwrap(),
        )
    })
}

pub fn spec(frames: usize) -> SequenceSpec {
    SequenceSpec {
        width: 320,
        height: 240,
        frames,
        face: Rect::new(110.0, 60.0, 100.0, 100.0),
        blinks: vec![(5, 4), (20, 5)],
        absent: vec![],
        noise: 3.0,
        seed: 11,
    }
}

pub fn write(spec: &SequenceSpec) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    spec.write(dir.path()).unwrap();
    dir
}

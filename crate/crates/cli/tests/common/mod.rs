#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use blinkline::geom::Rect;
use blinkline::synth::{self, SequenceSpec};

pub struct Fixtures {
    pub hog: PathBuf,
    pub ert: PathBuf,
    /// 24 frames of a 320x240 sequence with blinks at 5 and 20.
    pub frames: PathBuf,
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blinkline"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub fn spec(frames: usize) -> SequenceSpec {
    SequenceSpec {
        width: 320,
        height: 240,
        frames,
        face: Rect::new(110.0, 60.0, 100.0, 100.0),
        blinks: vec![(5, 4), (20, 3)],
        absent: vec![],
        noise: 3.0,
        seed: 11,
    }
}

/// Models and frames shared by the tests of one test binary, kept under the
/// target directory in a subdirectory named `tag`.
pub fn fixtures(tag: &str) -> &'static Fixtures {
    static FIX: OnceLock<Fixtures> = OnceLock::new();
    FIX.get_or_init(|| {
        let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join(tag);
        let _ = fs::remove_dir_all(&root);
        fs::create_dir_all(&root).unwrap();
        let hog = root.join("hog.json");
        let ert = root.join("ert.json");
        synth::train_demo_detector(1).unwrap().save(&hog).unwrap();
        synth::train_demo_landmarker(2).unwrap().save(&ert).unwrap();
        let frames = root.join("frames");
        fs::create_dir_all(&frames).unwrap();
        spec(24).write(&frames).unwrap();
        Fixtures { hog, ert, frames }
    })
}

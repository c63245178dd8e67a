//! Eyeblink-response detection from grayscale video frames.
//!
//! The pipeline runs a multi-scale HOG face detector ([`facedet`]) on every
//! frame, places 68 facial landmarks inside the best face box with an
//! ensemble-of-regression-trees cascade ([`ert`]), and turns the six landmarks
//! of each eye into an eyelid-closure time series ([`blink`]). [`runtime`]
//! drives that chain over frame directories, sequentially or as a batched
//! multi-stage pipeline, and [`eval`] holds the accuracy metrics.

pub mod blink;
pub mod ert;
pub mod eval;
pub mod facedet;
pub mod geom;
pub mod hog;
pub mod imgio;
pub mod runtime;
pub mod synth;

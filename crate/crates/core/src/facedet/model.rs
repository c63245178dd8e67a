//! JSON persistence for [`DetectorModel`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DetectError, DetectorModel, LinearFilter, WINDOW_CELLS};
use crate::hog::CELL_SIZE;
use crate::imgio::{SCALE_DEN, SCALE_NUM};

pub const HOG_MODEL_VERSION: &str = "hog-v1";

#[derive(Deserialize)]
struct VersionProbe {
    version: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: String,
    window_cells: usize,
    cell_px: usize,
    scale_factor_num: usize,
    scale_factor_den: usize,
    min_face_ratio: f64,
    threshold: f64,
    filters: Vec<FilterFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterFile {
    weights: Vec<f64>,
    bias: f64,
}

impl DetectorModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: HOG_MODEL_VERSION.into(),
            window_cells: WINDOW_CELLS,
            cell_px: CELL_SIZE,
            scale_factor_num: SCALE_NUM,
            scale_factor_den: SCALE_DEN,
            min_face_ratio: self.min_face_ratio,
            threshold: self.detection_threshold,
            filters: self
                .filters
                .iter()
                .map(|f| FilterFile {
                    weights: f.weights.clone(),
                    bias: f.bias,
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json_slice(data: &[u8]) -> Result<Self, DetectError> {
        let probe: VersionProbe = serde_json::from_slice(data)?;
        if probe.version != HOG_MODEL_VERSION {
            return Err(DetectError::Version {
                expected: HOG_MODEL_VERSION.into(),
                found: probe.version,
            });
        }
        let file: ModelFile = serde_json::from_slice(data)?;
        if file.window_cells != WINDOW_CELLS || file.cell_px != CELL_SIZE {
            return Err(DetectError::Shape(format!(
                "window {}x{} px cells unsupported, expected {WINDOW_CELLS} cells of {CELL_SIZE} px",
                file.window_cells, file.cell_px
            )));
        }
        if file.scale_factor_num * SCALE_DEN != file.scale_factor_den * SCALE_NUM
            || file.scale_factor_den == 0
        {
            return Err(DetectError::Shape(format!(
                "scale factor {}/{} unsupported, expected {SCALE_NUM}/{SCALE_DEN}",
                file.scale_factor_num, file.scale_factor_den
            )));
        }
        let filters = file
            .filters
            .into_iter()
            .map(|f| LinearFilter::new(f.weights, f.bias))
            .collect::<Result<Vec<_>, _>>()?;
        DetectorModel::new(filters, file.threshold, file.min_face_ratio)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DetectError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| DetectError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DetectError> {
        let path = path.as_ref();
        let data = fs::read(path).map_err(|source| DetectError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_slice(&data)
    }
}

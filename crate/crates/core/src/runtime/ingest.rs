use std::fs;
use std::path::{Path, PathBuf};

use super::RuntimeError;
use crate::imgio::{load_pgm, GrayImage};

/// `frame_NNNNNN.pgm` index, if `name` has exactly that form.
pub fn parse_frame_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Ordered frame files of a directory, numbered consecutively from zero,
/// with the dimensions of the first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSource {
    paths: Vec<PathBuf>,
    dims: (usize, usize),
}

impl FrameSource {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, RuntimeError> {
        let dir = dir.as_ref();
        let io = |source| RuntimeError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut indexed = Vec::new();
        for entry in fs::read_dir(dir).map_err(io)? {
            let entry = entry.map_err(io)?;
            if let Some(i) = entry.file_name().to_str().and_then(parse_frame_name) {
                indexed.push((i, entry.path()));
            }
        }
        if indexed.is_empty() {
            return Err(RuntimeError::NoFrames(dir.display().to_string()));
        }
        indexed.sort();
        for (expected, (found, _)) in indexed.iter().enumerate() {
            if *found != expected {
                return Err(RuntimeError::FrameGap { expected, found: *found });
            }
        }
        let paths: Vec<PathBuf> = indexed.into_iter().map(|(_, p)| p).collect();
        let dims = load_pgm(&paths[0])?.dims();
        Ok(Self { paths, dims })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn path(&self, index: usize) -> &Path {
        &self.paths[index]
    }

    /// Decodes frame `index`, rejecting a size change.
    pub fn decode(&self, index: usize) -> Result<GrayImage, RuntimeError> {
        let img = load_pgm(&self.paths[index])?;
        if img.dims() != self.dims {
            return Err(RuntimeError::DimensionChange {
                index,
                expected: self.dims,
                found: img.dims(),
            });
        }
        Ok(img)
    }

    /// Decodes every frame in order.
    pub fn frames(&self) -> impl Iterator<Item = Result<GrayImage, RuntimeError>> + '_ {
        (0..self.len()).map(|i| self.decode(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_names() {
        assert_eq!(parse_frame_name("frame_000012.pgm"), Some(12));
        assert_eq!(parse_frame_name("frame_12.pgm"), None);
        assert_eq!(parse_frame_name("frame_00001a.pgm"), None);
        assert_eq!(parse_frame_name("frame_000001.png"), None);
        assert_eq!(parse_frame_name("frame_+00001.pgm"), None);
    }
}

//! Annotated frame corpora: generation, directory I/O, and content hashing.
//!
//! A corpus directory holds numbered rasters (`frame_000000.ppm`) with a
//! matching annotation file per frame (`frame_000000.xml`).

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detect::synthetic::synthesize_scene;
use crate::detect::voc;
use crate::detect::{Annotation, DetectError};
use crate::frame::{self, Frame, FrameError};
use crate::seeds;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("directory {0} holds no frames")]
    EmptyDirectory(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub frame: Frame,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledCorpus {
    pub scenes: Vec<LabeledScene>,
}

impl LabeledCorpus {
    /// Generates `n_scenes` seeded scenes, each with `n_targets` targets.
    pub fn generate(
        seed: u64,
        n_scenes: usize,
        n_targets: usize,
        width: usize,
        height: usize,
    ) -> Result<Self, DetectError> {
        let scenes = (0..n_scenes)
            .map(|i| {
                let (frame, annotations) =
                    synthesize_scene(seeds::derive(seed, 0x5ce, i as u64), n_targets, width, height)?;
                Ok(LabeledScene { frame, annotations })
            })
            .collect::<Result<Vec<_>, DetectError>>()?;
        Ok(Self { scenes })
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn frames(&self) -> Vec<Frame> {
        self.scenes.iter().map(|s| s.frame.clone()).collect()
    }

    pub fn truths(&self) -> Vec<Vec<Annotation>> {
        self.scenes.iter().map(|s| s.annotations.clone()).collect()
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for (i, scene) in self.scenes.iter().enumerate() {
            let stem = format!("frame_{i:06}");
            frame::save_raster(&scene.frame, dir.join(format!("{stem}.ppm")))?;
            let xml = voc::to_xml(&stem, &scene.annotations);
            frame::write_atomic(&dir.join(format!("{stem}.xml")), xml.as_bytes()).map_err(
                |source| CorpusError::Io {
                    path: dir.display().to_string(),
                    source,
                },
            )?;
        }
        Ok(())
    }

    /// Loads every `*.ppm` in lexical order; a sibling `.xml` supplies the
    /// annotations and may be absent for unlabeled frames.
    pub fn load_dir(dir: &Path) -> Result<Self, CorpusError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|source| CorpusError::Io {
                path: dir.display().to_string(),
                source,
            })?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "ppm"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(CorpusError::EmptyDirectory(dir.display().to_string()));
        }
        let mut scenes = Vec::with_capacity(paths.len());
        for path in paths {
            let frame = frame::load_raster(&path)?;
            let xml_path = path.with_extension("xml");
            let annotations = if xml_path.exists() {
                let xml = std::fs::read_to_string(&xml_path).map_err(|source| CorpusError::Io {
                    path: xml_path.display().to_string(),
                    source,
                })?;
                voc::parse_voc(&xml)?
            } else {
                Vec::new()
            };
            scenes.push(LabeledScene { frame, annotations });
        }
        Ok(Self { scenes })
    }

    /// SHA-256 over frame geometry, samples, and annotation boxes; stable
    /// across platforms, used for provenance stamping.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for scene in &self.scenes {
            hasher.update((scene.frame.width() as u64).to_be_bytes());
            hasher.update((scene.frame.height() as u64).to_be_bytes());
            hasher.update(scene.frame.data());
            for a in &scene.annotations {
                hasher.update(a.class_label.as_bytes());
                for v in [a.bbox.x_min, a.bbox.y_min, a.bbox.x_max, a.bbox.y_max] {
                    hasher.update(v.to_be_bytes());
                }
            }
        }
        hex_digest(hasher)
    }
}

pub(crate) fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_sized() {
        let a = LabeledCorpus::generate(7, 5, 3, 96, 72).unwrap();
        let b = LabeledCorpus::generate(7, 5, 3, 96, 72).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.scenes.iter().all(|s| s.annotations.len() == 3));
        assert_eq!(a.content_hash(), b.content_hash());
        let c = LabeledCorpus::generate(8, 5, 3, 96, 72).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = LabeledCorpus::generate(3, 4, 2, 64, 48).unwrap();
        corpus.save_dir(dir.path()).unwrap();
        let loaded = LabeledCorpus::load_dir(dir.path()).unwrap();
        assert_eq!(loaded.len(), corpus.len());
        for (a, b) in corpus.scenes.iter().zip(&loaded.scenes) {
            assert_eq!(a.frame, b.frame);
            assert_eq!(a.annotations.len(), b.annotations.len());
            for (x, y) in a.annotations.iter().zip(&b.annotations) {
                assert_eq!(x.bbox, y.bbox);
                assert_eq!(x.class_label, y.class_label);
            }
        }
        assert_eq!(corpus.content_hash(), loaded.content_hash());
    }

    #[test]
    fn empty_directory_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            LabeledCorpus::load_dir(dir.path()),
            Err(CorpusError::EmptyDirectory(_))
        ));
    }
}

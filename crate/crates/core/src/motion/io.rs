//! Motion files: one JSON record per motion, plus a corpus manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActionList, Motion, FRAME_DIM, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";
const MOTION_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MotionRecord {
    version: u32,
    id: u64,
    fps: u32,
    joints: usize,
    attrs: ActionList,
    /// Row-major `frames x joints x 3`.
    frames: Vec<f64>,
}

impl From<&Motion> for MotionRecord {
    fn from(m: &Motion) -> Self {
        Self {
            version: MOTION_FORMAT_VERSION,
            id: m.id,
            fps: m.fps,
            joints: NUM_JOINTS,
            attrs: m.attrs.clone(),
            frames: m.frames.iter().flat_map(|f| f.iter().copied()).collect(),
        }
    }
}

impl TryFrom<MotionRecord> for Motion {
    type Error = Error;

    fn try_from(r: MotionRecord) -> Result<Motion> {
        if r.version != MOTION_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported motion version {}", r.version)));
        }
        if r.joints != NUM_JOINTS || !r.frames.len().is_multiple_of(FRAME_DIM) {
            return Err(Error::ShapeMismatch(format!(
                "motion {} has {} joints and {} values",
                r.id,
                r.joints,
                r.frames.len()
            )));
        }
        let frames = r
            .frames
            .chunks_exact(FRAME_DIM)
            .map(|c| {
                let mut f = [0.0; FRAME_DIM];
                f.copy_from_slice(c);
                f
            })
            .collect();
        Motion::new(r.id, r.fps, r.attrs, frames)
    }
}

pub fn motion_to_json(m: &Motion) -> Result<String> {
    Ok(serde_json::to_string(&MotionRecord::from(m))?)
}

pub fn motion_from_json(s: &str) -> Result<Motion> {
    let r: MotionRecord = serde_json::from_str(s)?;
    r.try_into()
}

pub fn write_motion(path: &Path, m: &Motion) -> Result<()> {
    fs::write(path, motion_to_json(m)?)?;
    Ok(())
}

pub fn read_motion(path: &Path) -> Result<Motion> {
    motion_from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub file: String,
    pub sha256: String,
    pub frames: usize,
    pub attrs: ActionList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub fps: u32,
    pub motions: Vec<ManifestEntry>,
}

/// Writes every motion plus `manifest.json` into `dir`.
pub fn save_corpus(dir: &Path, motions: &[Motion]) -> Result<CorpusManifest> {
    let first = motions.first().ok_or(Error::EmptyCorpus)?;
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(motions.len());
    for m in motions {
        if m.fps != first.fps {
            return Err(Error::ShapeMismatch("corpus fps must be uniform".into()));
        }
        let file = format!("motion_{:06}.json", m.id);
        let body = motion_to_json(m)?;
        fs::write(dir.join(&file), &body)?;
        entries.push(ManifestEntry {
            id: m.id,
            file,
            sha256: sha256_hex(body.as_bytes()),
            frames: m.num_frames(),
            attrs: m.attrs.clone(),
        });
    }
    let manifest = CorpusManifest {
        version: MOTION_FORMAT_VERSION,
        fps: first.fps,
        motions: entries,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Loads a corpus in manifest order, verifying each file's hash.
pub fn load_corpus(dir: &Path) -> Result<Vec<Motion>> {
    let manifest: CorpusManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    manifest
        .motions
        .iter()
        .map(|e| {
            let body = fs::read_to_string(dir.join(&e.file))?;
            if sha256_hex(body.as_bytes()) != e.sha256 {
                return Err(Error::Format(format!("hash mismatch for {}", e.file)));
            }
            let m = motion_from_json(&body)?;
            if m.id != e.id {
                return Err(Error::Format(format!("{} holds id {}, expected {}", e.file, m.id, e.id)));
            }
            Ok(m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{synthesize_motion, ActionItem};

    #[test]
    fn motion_file_roundtrip_is_exact() {
        let spec = ActionList::single(ActionItem::parse("run,arms,relaxed,short,left_turn").unwrap());
        let mut m = synthesize_motion(&spec, 3.3, 20, 99).unwrap();
        m.id = 42;
        let back = motion_from_json(&motion_to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corpus_roundtrip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ActionList::single(ActionItem::parse("idle,head,neutral,long,in_place").unwrap());
        let motions: Vec<Motion> = (0..3)
            .map(|i| {
                let mut m = synthesize_motion(&spec, 2.0, 20, i).unwrap();
                m.id = i;
                m
            })
            .collect();
        save_corpus(dir.path(), &motions).unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap(), motions);
        fs::write(dir.path().join("motion_000001.json"), motion_to_json(&motions[0]).unwrap()).unwrap();
        assert!(load_corpus(dir.path()).is_err());
    }
}

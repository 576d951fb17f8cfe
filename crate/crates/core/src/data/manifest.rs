//! Dataset manifests and split files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::annotation::{derive_frame_labels, read_annotations, sampling_stride, AnnotationTrack};
use super::embedding::{load_embeddings, save_embeddings};
use super::synth::{synth_generate, PlantedSegment, SynthConfig, SynthSequence};
use super::{Dataset, LabeledSequence};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub video_id: String,
    /// Relative to the manifest's directory.
    pub file: PathBuf,
    pub seed: u64,
    pub split: Split,
    pub len: usize,
    pub segments: Vec<PlantedSegment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub config: SynthConfig,
    pub sequences: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_synth(cfg: &SynthConfig, seqs: &[SynthSequence]) -> Self {
        let sequences = seqs
            .iter()
            .map(|s| ManifestEntry {
                video_id: s.data.sequence.video_id.clone(),
                file: PathBuf::from(format!("{}.sede", s.data.sequence.video_id)),
                seed: s.seed,
                split: if s.test { Split::Test } else { Split::Train },
                len: s.data.len(),
                segments: s.segments.clone(),
            })
            .collect();
        Manifest {
            version: MANIFEST_VERSION,
            config: cfg.clone(),
            sequences,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported manifest version {}", m.version),
            ));
        }
        Ok(m)
    }
}

/// Generate a synthetic dataset into `dir`: one embedding file per sequence
/// plus `manifest.json`. Existing files are only replaced when `overwrite`.
pub fn write_synth_dataset(cfg: &SynthConfig, dir: &Path, overwrite: bool) -> Result<Manifest> {
    let seqs = synth_generate(cfg)?;
    let manifest = Manifest::from_synth(cfg, &seqs);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.json");
    if !overwrite {
        let mut targets = vec![manifest_path.clone()];
        targets.extend(manifest.sequences.iter().map(|e| dir.join(&e.file)));
        if let Some(existing) = targets.iter().find(|p| p.exists()) {
            return Err(Error::Config(format!(
                "{} already exists; refusing to overwrite",
                existing.display()
            )));
        }
    }
    for (entry, seq) in manifest.sequences.iter().zip(&seqs) {
        save_embeddings(&dir.join(&entry.file), &seq.data.sequence)?;
    }
    manifest.save(&manifest_path)?;
    Ok(manifest)
}

/// Load a dataset described by a manifest. Labels come from the planted
/// segments recorded in the manifest.
pub fn load_manifest_dataset(path: &Path) -> Result<Dataset> {
    let manifest = Manifest::load(path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut ds = Dataset::default();
    for entry in &manifest.sequences {
        let file = root.join(&entry.file);
        let mut seq = load_embeddings(&file)?
            .with_rates(manifest.config.native_rate, manifest.config.sample_rate);
        seq.video_id = entry.video_id.clone();
        if seq.len() != entry.len {
            return Err(Error::format(
                &file,
                format!(
                    "manifest lists {} frames, file has {}",
                    entry.len,
                    seq.len()
                ),
            ));
        }
        let mut labels = vec![0u8; seq.len()];
        for s in &entry.segments {
            if s.start > s.end || s.end >= seq.len() {
                return Err(Error::format(
                    path,
                    format!("{}: segment {s:?} out of range", entry.video_id),
                ));
            }
            labels[s.start..=s.end].fill(1);
        }
        ds.push(entry.split, LabeledSequence::new(seq, labels)?);
    }
    Ok(ds)
}

/// Explicit video-id split: `{"train": [...], "val": [...], "test": [...]}`.
/// `val` may be omitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: SplitFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let mut seen = BTreeMap::new();
        for (split, ids) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
            for id in ids {
                if let Some(prev) = seen.insert(id.clone(), split) {
                    return Err(Error::format(
                        path,
                        format!("video {id} listed in both {prev} and {split}"),
                    ));
                }
            }
        }
        Ok(s)
    }
}

/// Load real embeddings: `{embeddings_dir}/{video_id}.sede` stored at the
/// native rate, downsampled to `sample_rate`, labelled from the annotation
/// CSV. Videos without annotation rows are all-normal.
pub fn load_annotated_dataset(
    split: &SplitFile,
    embeddings_dir: &Path,
    annotations: &Path,
    native_rate: f64,
    sample_rate: f64,
) -> Result<Dataset> {
    let stride = sampling_stride(native_rate, sample_rate)?;
    let tracks = read_annotations(annotations)?;
    let empty = AnnotationTrack::default();
    let mut ds = Dataset::default();
    for (which, ids) in [
        (Split::Train, &split.train),
        (Split::Val, &split.val),
        (Split::Test, &split.test),
    ] {
        for id in ids {
            let file = embeddings_dir.join(format!("{id}.sede"));
            let native = load_embeddings(&file)?.with_rates(native_rate, native_rate);
            let mut seq = native.downsample(stride)?;
            seq.video_id = id.clone();
            let track = tracks.get(id).unwrap_or(&empty);
            let labels = derive_frame_labels(track, native_rate, sample_rate, seq.len())?;
            ds.push(which, LabeledSequence::new(seq, labels)?);
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            num_sequences: 4,
            num_test: 1,
            width: 8,
            ..Default::default()
        };
        let m = write_synth_dataset(&cfg, dir.path(), false).unwrap();
        assert_eq!(m.sequences.len(), 4);
        assert!(write_synth_dataset(&cfg, dir.path(), false).is_err());
        write_synth_dataset(&cfg, dir.path(), true).unwrap();

        let ds = load_manifest_dataset(&dir.path().join("manifest.json")).unwrap();
        assert_eq!((ds.train.len(), ds.val.len(), ds.test.len()), (3, 0, 1));
        let direct = synth_generate(&cfg).unwrap();
        for (a, b) in ds.train.iter().chain(&ds.test).zip(&direct) {
            assert_eq!(a, &b.data);
        }
    }

    #[test]
    fn split_file_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.json");
        std::fs::write(&p, r#"{"train":["a","b"],"test":["b"]}"#).unwrap();
        assert!(SplitFile::load(&p).is_err());
        std::fs::write(&p, r#"{"train":["a"],"test":["b"]}"#).unwrap();
        assert_eq!(SplitFile::load(&p).unwrap().val.len(), 0);
    }
}

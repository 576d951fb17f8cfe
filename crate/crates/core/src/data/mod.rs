//! Embedding sequences, annotations, labels and synthetic datasets.

pub mod annotation;
pub mod embedding;
pub mod manifest;
pub mod synth;

pub use annotation::{
    derive_frame_labels, read_annotations, sampling_stride, write_annotations, AnnotationRecord,
    AnnotationTrack, ErrorType,
};
pub use embedding::{
    decode_embeddings, encode_embeddings, load_embeddings, save_embeddings, EmbeddingSequence,
};
pub use manifest::{
    load_annotated_dataset, load_manifest_dataset, write_synth_dataset, Manifest, ManifestEntry,
    Split, SplitFile,
};
pub use synth::{synth_generate, DurationClass, PlantedSegment, SynthConfig, SynthSequence};

use crate::error::{Error, Result};

/// An embedding sequence with one 0/1 label per sampled frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub sequence: EmbeddingSequence,
    pub labels: Vec<u8>,
}

impl LabeledSequence {
    pub fn new(sequence: EmbeddingSequence, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != sequence.len() {
            return Err(Error::dim(
                "labels",
                format!(
                    "{} labels for {} frames of {}",
                    labels.len(),
                    sequence.len(),
                    sequence.video_id
                ),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Domain(format!("label {bad} is not 0/1")));
        }
        Ok(LabeledSequence { sequence, labels })
    }

    pub fn id(&self) -> &str {
        &self.sequence.video_id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledSequence>,
    pub val: Vec<LabeledSequence>,
    pub test: Vec<LabeledSequence>,
}

impl Dataset {
    pub fn push(&mut self, split: Split, seq: LabeledSequence) {
        match split {
            Split::Train => self.train.push(seq),
            Split::Val => self.val.push(seq),
            Split::Test => self.test.push(seq),
        }
    }

    /// Sequences used for per-epoch model selection: the validation split
    /// when present, otherwise the test split.
    pub fn selection_set(&self) -> &[LabeledSequence] {
        if self.val.is_empty() {
            &self.test
        } else {
            &self.val
        }
    }

    pub fn from_synth(seqs: Vec<SynthSequence>) -> Self {
        let mut ds = Dataset::default();
        for s in seqs {
            ds.push(if s.test { Split::Test } else { Split::Train }, s.data);
        }
        ds
    }
}

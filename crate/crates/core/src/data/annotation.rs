//! Error annotation tracks and frame-label derivation.
//!
//! CSV schema (header row required):
//! `video_id,error_type,start_frame,end_frame`, frame indices at the native
//! rate, both bounds inclusive.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error code E1..E24.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ErrorType(u8);

impl ErrorType {
    pub const COUNT: u8 = 24;

    pub fn new(code: u8) -> Result<Self> {
        if (1..=Self::COUNT).contains(&code) {
            Ok(ErrorType(code))
        } else {
            Err(Error::Config(format!("error type E{code} outside E1..E24")))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn description(self) -> &'static str {
        ERROR_DESCRIPTIONS[(self.0 - 1) as usize]
    }
}

const ERROR_DESCRIPTIONS: [&str; 24] = [
    "Multiple attempts",
    "Needle drop/slip if in tissue",
    "Instrument(s) out of view",
    "Needle out of view",
    "Tissue damage including poor/error in tissue stabilisation",
    "Incorrect angle grasping needle (not perpendicular)",
    "Incorrect position along needle",
    "Excessive force",
    "Needle does not follow the curve",
    "Needle entry incorrect angle",
    "Grasped at needle tip",
    "Suture is loosened",
    "Thread caught in instrument",
    "Knot tied is not square",
    "Inadequate number of throws",
    "Suture pulled through tissue before tying knot",
    "Incorrect distancing between needle drives",
    "Suture not pulled through between needle drives",
    "Suture entanglement",
    "Fraying the suture",
    "Snapping the suture",
    "Dangerous/poor/incorrect needle disposal",
    "Incorrect/poor camera control",
    "Incorrect/poor instrument control",
];

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.0)
    }
}

impl FromStr for ErrorType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .trim()
            .strip_prefix(['E', 'e'])
            .ok_or_else(|| Error::Config(format!("error type {s:?} must look like E7")))?;
        let code: u8 = digits
            .parse()
            .map_err(|_| Error::Config(format!("error type {s:?} must look like E7")))?;
        ErrorType::new(code)
    }
}

impl Serialize for ErrorType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ErrorType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub error_type: ErrorType,
    pub start_frame: u64,
    /// Inclusive.
    pub end_frame: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTrack {
    pub video_id: String,
    pub records: Vec<AnnotationRecord>,
}

impl AnnotationTrack {
    pub fn push(&mut self, rec: AnnotationRecord) -> Result<()> {
        if rec.start_frame > rec.end_frame {
            return Err(Error::Config(format!(
                "{}: start frame {} after end frame {}",
                self.video_id, rec.start_frame, rec.end_frame
            )));
        }
        self.records.push(rec);
        Ok(())
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CsvRow {
    video_id: String,
    error_type: String,
    start_frame: u64,
    end_frame: u64,
}

/// Read an annotation CSV, grouping records by video id.
pub fn read_annotations(path: &Path) -> Result<BTreeMap<String, AnnotationTrack>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(file, path)
}

pub fn parse_annotations<R: std::io::Read>(
    reader: R,
    path: &Path,
) -> Result<BTreeMap<String, AnnotationTrack>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["video_id", "error_type", "start_frame", "end_frame"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(
            path,
            format!(
                "header must be {}, got {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut tracks: BTreeMap<String, AnnotationTrack> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row?;
        let line = i + 2;
        let error_type = row
            .error_type
            .parse()
            .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        let track = tracks
            .entry(row.video_id.clone())
            .or_insert_with(|| AnnotationTrack {
                video_id: row.video_id.clone(),
                records: Vec::new(),
            });
        track
            .push(AnnotationRecord {
                error_type,
                start_frame: row.start_frame,
                end_frame: row.end_frame,
            })
            .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
    }
    Ok(tracks)
}

pub fn write_annotations<'a>(
    path: &Path,
    tracks: impl IntoIterator<Item = &'a AnnotationTrack>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    // csv only emits the header with the first record; write it explicitly
    // so empty files still carry the schema.
    w.write_record(["video_id", "error_type", "start_frame", "end_frame"])?;
    for t in tracks {
        for r in &t.records {
            w.write_record([
                t.video_id.clone(),
                r.error_type.to_string(),
                r.start_frame.to_string(),
                r.end_frame.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Integer stride native_rate / sample_rate.
pub fn sampling_stride(native_rate: f64, sample_rate: f64) -> Result<usize> {
    if !(native_rate > 0.0 && sample_rate > 0.0) {
        return Err(Error::Config(format!(
            "rates must be positive (native {native_rate}, sample {sample_rate})"
        )));
    }
    let ratio = native_rate / sample_rate;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Config(format!(
            "native rate {native_rate} Hz is not an integer multiple of sample rate {sample_rate} Hz"
        )));
    }
    Ok(stride as usize)
}

/// Binary labels for `len` sampled frames: frame i maps to native frame
/// i·stride and is an error iff that frame lies in any record's inclusive
/// interval.
pub fn derive_frame_labels(
    track: &AnnotationTrack,
    native_rate: f64,
    sample_rate: f64,
    len: usize,
) -> Result<Vec<u8>> {
    let stride = sampling_stride(native_rate, sample_rate)? as u64;
    let mut labels = vec![0u8; len];
    for r in &track.records {
        // sampled indices i with start ≤ i·stride ≤ end
        let first = r.start_frame.div_ceil(stride);
        let last = r.end_frame / stride;
        let mut i = first;
        while i <= last && (i as usize) < len {
            labels[i as usize] = 1;
            i += 1;
        }
    }
    Ok(labels)
}

//! Binary embedding files.
//!
//! Little-endian layout:
//! ```text
//! "SEDE" | version u32 = 1 | L u64 | D u32 | dtype u8 (0 = f32) | 3 reserved bytes
//! L·D values, row-major
//! CRC32 (IEEE) of the value payload, u32
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SEDE";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;
const HEADER_LEN: usize = 24;

/// Per-video embedding matrix (L×D, f32) with rate metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSequence {
    pub video_id: String,
    pub native_rate: f64,
    pub sample_rate: f64,
    len: usize,
    width: usize,
    data: Vec<f32>,
}

impl EmbeddingSequence {
    pub fn new(
        video_id: impl Into<String>,
        len: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if len == 0 || width == 0 {
            return Err(Error::dim(
                "embedding",
                format!("empty sequence: L={len}, D={width}"),
            ));
        }
        if data.len() != len * width {
            return Err(Error::dim(
                "embedding",
                format!("{} values for L={len}, D={width}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "embedding" });
        }
        Ok(EmbeddingSequence {
            video_id: video_id.into(),
            native_rate: 5.0,
            sample_rate: 5.0,
            len,
            width,
            data,
        })
    }

    pub fn with_rates(mut self, native_rate: f64, sample_rate: f64) -> Self {
        self.native_rate = native_rate;
        self.sample_rate = sample_rate;
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.len, self.width],
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("validated shape")
    }

    /// Keep every `stride`-th frame starting at frame 0.
    pub fn downsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("downsample stride must be positive".into()));
        }
        let rows: Vec<usize> = (0..self.len).step_by(stride).collect();
        let mut data = Vec::with_capacity(rows.len() * self.width);
        for &t in &rows {
            data.extend_from_slice(self.row(t));
        }
        Ok(EmbeddingSequence {
            video_id: self.video_id.clone(),
            native_rate: self.native_rate,
            sample_rate: self.sample_rate / stride as f64,
            len: rows.len(),
            width: self.width,
            data,
        })
    }
}

pub fn encode_embeddings(seq: &EmbeddingSequence) -> Vec<u8> {
    let payload_len = seq.data.len() * 4;
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.len as u64).to_le_bytes());
    out.extend_from_slice(&(seq.width as u32).to_le_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&[0; 3]);
    for v in &seq.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Parse an embedding file image. `path` only labels errors; the video id
/// is taken from its file stem.
pub fn decode_embeddings(bytes: &[u8], path: &Path) -> Result<EmbeddingSequence> {
    let fail = |detail: String| Error::format(path, detail);
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!(
            "truncated header: need {HEADER_LEN} bytes, have {} ({} missing)",
            bytes.len(),
            HEADER_LEN - bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail(format!("bad magic {:?}", &bytes[..4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let width = u32_at(16) as usize;
    let dtype = bytes[20];
    if dtype != DTYPE_F32 {
        return Err(fail(format!("unsupported dtype code {dtype}")));
    }
    if len == 0 || width == 0 {
        return Err(fail(format!(
            "empty sequence in header: L={len}, D={width}"
        )));
    }
    let payload_len = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_mul(width))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| fail(format!("header size L={len}, D={width} overflows")))?;
    let need = HEADER_LEN + payload_len + 4;
    if bytes.len() < need {
        return Err(fail(format!(
            "truncated payload: need {need} bytes, have {} ({} missing)",
            bytes.len(),
            need - bytes.len()
        )));
    }
    if bytes.len() > need {
        return Err(fail(format!("{} trailing bytes", bytes.len() - need)));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + payload_len];
    let stored = u32_at(HEADER_LEN + payload_len);
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(fail(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(fail("non-finite embedding value".into()));
    }
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EmbeddingSequence::new(video_id, len as usize, width, data)
}

pub fn save_embeddings(path: &Path, seq: &EmbeddingSequence) -> Result<()> {
    std::fs::write(path, encode_embeddings(seq)).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSequence> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes, path)
}

//! Seed-deterministic synthetic error-detection datasets.
//!
//! Each sequence is per-channel AR(1) smooth noise with unit stationary
//! variance. Error segments are planted by adding a dataset-wide direction
//! vector; short segments get a smaller offset plus a fast oscillation along
//! a second direction, long segments a larger constant offset. Segment
//! placement and noise use independent RNG streams, so changing the
//! signal-to-noise ratio leaves the labels untouched.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingSequence, LabeledSequence};
use crate::error::{Error, Result};

/// Segments shorter than this many sampled frames are short errors.
pub const SHORT_LIMIT_FRAMES: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationClass {
    Short,
    Long,
}

impl DurationClass {
    pub fn of(duration: usize) -> Self {
        if duration < SHORT_LIMIT_FRAMES {
            DurationClass::Short
        } else {
            DurationClass::Long
        }
    }
}

/// Ground-truth error segment, inclusive sampled-frame bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedSegment {
    pub start: usize,
    pub end: usize,
    pub class: DurationClass,
}

impl PlantedSegment {
    pub fn duration(&self) -> usize {
        self.end - self.start + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_sequences: usize,
    /// The last `num_test` sequences form the test split.
    pub num_test: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub width: usize,
    /// Expected fraction of error frames per sequence.
    pub error_fraction: f64,
    /// Probability that a planted segment is short.
    pub short_probability: f64,
    /// Inclusive duration range for short segments; must stay below 15.
    pub short_duration: (usize, usize),
    /// Inclusive duration range for long segments; must start at 15 or more.
    pub long_duration: (usize, usize),
    /// Minimum normal gap between consecutive segments.
    pub min_gap: usize,
    /// Offset amplitude in units of the noise standard deviation.
    pub snr: f64,
    /// AR(1) coefficient of the background noise, in [0, 1).
    pub smoothness: f64,
    pub native_rate: f64,
    pub sample_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            num_sequences: 25,
            num_test: 5,
            min_len: 550,
            max_len: 650,
            width: 64,
            error_fraction: 0.28,
            short_probability: 0.5,
            short_duration: (4, 14),
            long_duration: (15, 60),
            min_gap: 5,
            snr: 1.0,
            smoothness: 0.9,
            native_rate: 5.0,
            sample_rate: 5.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synth: {m}")));
        if self.num_sequences == 0 {
            return bad("num_sequences must be positive".into());
        }
        if self.num_test > self.num_sequences {
            return bad(format!(
                "num_test {} exceeds num_sequences {}",
                self.num_test, self.num_sequences
            ));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!(
                "length range [{}, {}] is invalid",
                self.min_len, self.max_len
            ));
        }
        if self.width == 0 {
            return bad("width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.error_fraction) {
            return bad(format!(
                "error_fraction {} outside [0, 1)",
                self.error_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.short_probability) {
            return bad(format!(
                "short_probability {} outside [0, 1]",
                self.short_probability
            ));
        }
        let (s0, s1) = self.short_duration;
        if s0 == 0 || s0 > s1 || s1 >= SHORT_LIMIT_FRAMES {
            return bad(format!(
                "short_duration ({s0}, {s1}) must satisfy 1 <= lo <= hi < 15"
            ));
        }
        let (l0, l1) = self.long_duration;
        if l0 < SHORT_LIMIT_FRAMES || l0 > l1 {
            return bad(format!(
                "long_duration ({l0}, {l1}) must satisfy 15 <= lo <= hi"
            ));
        }
        if l1 > self.min_len {
            return bad(format!(
                "long segments up to {l1} frames do not fit min_len {}",
                self.min_len
            ));
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return bad(format!("snr {} must be finite and non-negative", self.snr));
        }
        if !(0.0..1.0).contains(&self.smoothness) {
            return bad(format!("smoothness {} outside [0, 1)", self.smoothness));
        }
        super::annotation::sampling_stride(self.native_rate, self.sample_rate)?;
        Ok(())
    }

    /// Mean planted segment duration implied by the duration mix.
    pub fn mean_segment_duration(&self) -> f64 {
        let mid = |(a, b): (usize, usize)| (a + b) as f64 / 2.0;
        self.short_probability * mid(self.short_duration)
            + (1.0 - self.short_probability) * mid(self.long_duration)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSequence {
    pub data: LabeledSequence,
    pub seed: u64,
    pub test: bool,
    pub segments: Vec<PlantedSegment>,
}

/// Directions shared by every sequence of a dataset, scaled so each channel
/// has unit mean square.
struct Signature {
    offset: Vec<f64>,
    oscillation: Vec<f64>,
}

impl Signature {
    fn new(width: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut unit = || {
            let v: Vec<f64> = (0..width).map(|_| StandardNormal.sample(rng)).collect();
            let rms = (v.iter().map(|x| x * x).sum::<f64>() / width as f64)
                .sqrt()
                .max(1e-12);
            v.into_iter().map(|x| x / rms).collect::<Vec<_>>()
        };
        let offset = unit();
        let oscillation = unit();
        Signature {
            offset,
            oscillation,
        }
    }
}

fn sample_segments(cfg: &SynthConfig, len: usize, rng: &mut ChaCha8Rng) -> Vec<PlantedSegment> {
    let target = cfg.error_fraction * len as f64;
    let mut durations = Vec::new();
    let mut covered = 0usize;
    loop {
        let (lo, hi) = if rng.random_bool(cfg.short_probability) {
            cfg.short_duration
        } else {
            cfg.long_duration
        };
        let dur = rng.random_range(lo..=hi);
        if covered as f64 + dur as f64 / 2.0 > target {
            break;
        }
        // Keep at least min_gap normal frames between every pair.
        let gaps = durations.len() * cfg.min_gap;
        if covered + dur + gaps > len {
            break;
        }
        covered += dur;
        durations.push(dur);
    }
    if durations.is_empty() {
        return Vec::new();
    }
    let k = durations.len();
    let free = len - covered - (k - 1) * cfg.min_gap;
    // Split the free normal frames into k+1 gaps uniformly at random.
    let mut cuts: Vec<usize> = (0..k).map(|_| rng.random_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut segments = Vec::with_capacity(k);
    let mut cursor = 0usize;
    let mut prev_cut = 0usize;
    for (i, (&dur, &cut)) in durations.iter().zip(&cuts).enumerate() {
        cursor += cut - prev_cut + if i > 0 { cfg.min_gap } else { 0 };
        prev_cut = cut;
        segments.push(PlantedSegment {
            start: cursor,
            end: cursor + dur - 1,
            class: DurationClass::of(dur),
        });
        cursor += dur;
    }
    segments
}

fn render(
    cfg: &SynthConfig,
    sig: &Signature,
    len: usize,
    segments: &[PlantedSegment],
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let d = cfg.width;
    let rho = cfg.smoothness;
    let innov = (1.0 - rho * rho).sqrt();
    let mut state: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let mut out = vec![0f32; len * d];
    for t in 0..len {
        for (c, s) in state.iter_mut().enumerate() {
            if t > 0 {
                let e: f64 = StandardNormal.sample(&mut *rng);
                *s = rho * *s + innov * e;
            }
            out[t * d + c] = *s as f32;
        }
    }
    for seg in segments {
        let (amp, osc) = match seg.class {
            DurationClass::Long => (cfg.snr, 0.0),
            DurationClass::Short => (0.6 * cfg.snr, cfg.snr),
        };
        for t in seg.start..=seg.end {
            // Period of 4 frames: +1, 0, -1, 0 relative to the segment start.
            let phase = std::f64::consts::FRAC_PI_2 * (t - seg.start) as f64;
            let wave = osc * phase.cos();
            let row = &mut out[t * d..(t + 1) * d];
            for c in 0..d {
                row[c] += (amp * sig.offset[c] + wave * sig.oscillation[c]) as f32;
            }
        }
    }
    out
}

fn labels_of(len: usize, segments: &[PlantedSegment]) -> Vec<u8> {
    let mut labels = vec![0u8; len];
    for s in segments {
        labels[s.start..=s.end].fill(1);
    }
    labels
}

/// Generate one synthetic sequence. Used directly by manifest loading to
/// regenerate ground truth without touching the embedding files.
pub fn synth_sequence(cfg: &SynthConfig, index: usize, seed: u64) -> Result<SynthSequence> {
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sig = Signature::new(cfg.width, &mut master);
    let mut seg_rng = ChaCha8Rng::seed_from_u64(seed);
    let len = seg_rng.random_range(cfg.min_len..=cfg.max_len);
    let segments = sample_segments(cfg, len, &mut seg_rng);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let values = render(cfg, &sig, len, &segments, &mut noise_rng);
    let seq = EmbeddingSequence::new(format!("synth_{index:04}"), len, cfg.width, values)?
        .with_rates(cfg.native_rate, cfg.sample_rate);
    let labels = labels_of(len, &segments);
    Ok(SynthSequence {
        data: LabeledSequence::new(seq, labels)?,
        seed,
        test: index >= cfg.num_sequences - cfg.num_test,
        segments,
    })
}

/// Per-sequence seeds drawn from the master seed.
pub fn sequence_seeds(cfg: &SynthConfig) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    (0..cfg.num_sequences).map(|_| rng.next_u64()).collect()
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<SynthSequence>> {
    cfg.validate()?;
    sequence_seeds(cfg)
        .into_iter()
        .enumerate()
        .map(|(i, seed)| synth_sequence(cfg, i, seed))
        .collect()
}

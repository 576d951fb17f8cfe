//! Frame-level, instance-level and duration-stratified AUC / AP.
//!
//! Labels are 0/1 bytes (nonzero counts as an error frame). Tied scores are
//! grouped into a single threshold, so ROC-AUC equals the Mann–Whitney
//! statistic with half credit for ties.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Short errors last fewer than this many seconds.
pub const SHORT_ERROR_SECONDS: f64 = 3.0;

/// (false positives, true positives) after each distinct threshold,
/// descending by score, starting from (0, 0).
/// Cumulative (false positives, true positives) per threshold, then the
/// positive and negative totals.
type Thresholds = (Vec<(usize, usize)>, usize, usize);

fn threshold_counts(scores: &[f64], labels: &[u8]) -> Result<Thresholds> {
    if scores.len() != labels.len() {
        return Err(Error::dim(
            "metrics",
            format!("{} scores vs {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let pos = labels.iter().filter(|&&l| l != 0).count();
    let neg = labels.len() - pos;
    let mut points = vec![(0, 0)];
    let (mut fp, mut tp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp, tp));
    }
    Ok((points, pos, neg))
}

/// Area under the ROC curve by the trapezoidal rule over all distinct
/// score thresholds.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (points, pos, neg) = threshold_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC-AUC needs both classes ({pos} positives, {neg} negatives)"
        )));
    }
    let (p, n) = (pos as f64, neg as f64);
    let mut area = 0.0;
    for w in points.windows(2) {
        let (fpr0, tpr0) = (w[0].0 as f64 / n, w[0].1 as f64 / p);
        let (fpr1, tpr1) = (w[1].0 as f64 / n, w[1].1 as f64 / p);
        area += (tpr1 + tpr0) / 2.0 * (fpr1 - fpr0);
    }
    Ok(area)
}

/// Σ (Rᵢ − Rᵢ₋₁)·Pᵢ over distinct thresholds, descending.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (points, pos, _) = threshold_counts(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one positive".into(),
        ));
    }
    let p = pos as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(fp, tp) in &points[1..] {
        let recall = tp as f64 / p;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// A maximal run of frames sharing one label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorInstance {
    pub label: u8,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub mean_prob: f64,
    pub duration: usize,
}

pub fn group_instances(labels: &[u8], probs: &[f64]) -> Result<Vec<ErrorInstance>> {
    if labels.len() != probs.len() {
        return Err(Error::dim(
            "group_instances",
            format!("{} labels vs {} probabilities", labels.len(), probs.len()),
        ));
    }
    if labels.is_empty() {
        return Err(Error::dim("group_instances", "empty input"));
    }
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=labels.len() {
        if t == labels.len() || (labels[t] != 0) != (labels[start] != 0) {
            let duration = t - start;
            let mean_prob = probs[start..t].iter().sum::<f64>() / duration as f64;
            out.push(ErrorInstance {
                label: u8::from(labels[start] != 0),
                start,
                end: t - 1,
                mean_prob,
                duration,
            });
            start = t;
        }
    }
    Ok(out)
}

/// Predictions and ground truth for one video at the sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoPrediction {
    pub video_id: String,
    pub labels: Vec<u8>,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub videos: usize,
    pub frames: usize,
    pub error_frames: usize,
    pub normal_frames: usize,
    pub error_instances: usize,
    pub normal_instances: usize,
    pub short_error_instances: usize,
    pub short_error_frames: usize,
    pub long_error_instances: usize,
    pub long_error_frames: usize,
}

/// All metric slots; `None` marks a stratum where the metric is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frame_auc: Option<f64>,
    pub frame_ap: Option<f64>,
    pub instance_auc: Option<f64>,
    pub instance_ap: Option<f64>,
    pub short_auc: Option<f64>,
    pub short_ap: Option<f64>,
    pub long_auc: Option<f64>,
    pub long_ap: Option<f64>,
    pub counts: StratumCounts,
    pub sample_rate: f64,
    /// Error instances shorter than this many frames are short.
    pub short_threshold_frames: f64,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Evaluate one video.
pub fn stratified_eval(labels: &[u8], probs: &[f64], sample_rate: f64) -> Result<MetricsReport> {
    evaluate(
        &[VideoPrediction {
            video_id: String::new(),
            labels: labels.to_vec(),
            probs: probs.to_vec(),
        }],
        sample_rate,
    )
}

/// Evaluate a test set pooled over videos. Instances never span videos.
///
/// Short-error metrics use frames of error instances lasting fewer than
/// `3 · sample_rate` frames together with every normal frame; long-error
/// metrics use the remaining error instances with every normal frame.
pub fn evaluate(videos: &[VideoPrediction], sample_rate: f64) -> Result<MetricsReport> {
    if !(sample_rate > 0.0) {
        return Err(Error::Config(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    let threshold = SHORT_ERROR_SECONDS * sample_rate;
    let mut counts = StratumCounts {
        videos: videos.len(),
        ..Default::default()
    };
    let mut frame_scores = Vec::new();
    let mut frame_labels = Vec::new();
    let mut inst_scores = Vec::new();
    let mut inst_labels = Vec::new();
    let (mut short_s, mut short_l) = (Vec::new(), Vec::new());
    let (mut long_s, mut long_l) = (Vec::new(), Vec::new());

    for v in videos {
        let instances = group_instances(&v.labels, &v.probs)
            .map_err(|e| Error::Config(format!("video {}: {e}", v.video_id)))?;
        frame_scores.extend_from_slice(&v.probs);
        frame_labels.extend(v.labels.iter().map(|&l| u8::from(l != 0)));
        for inst in &instances {
            inst_scores.push(inst.mean_prob);
            inst_labels.push(inst.label);
            let frames = &v.probs[inst.start..=inst.end];
            if inst.label == 0 {
                counts.normal_instances += 1;
                counts.normal_frames += inst.duration;
                for (s, l) in [(&mut short_s, &mut short_l), (&mut long_s, &mut long_l)] {
                    s.extend_from_slice(frames);
                    l.extend(std::iter::repeat_n(0u8, frames.len()));
                }
            } else {
                counts.error_instances += 1;
                counts.error_frames += inst.duration;
                let (s, l) = if (inst.duration as f64) < threshold {
                    counts.short_error_instances += 1;
                    counts.short_error_frames += inst.duration;
                    (&mut short_s, &mut short_l)
                } else {
                    counts.long_error_instances += 1;
                    counts.long_error_frames += inst.duration;
                    (&mut long_s, &mut long_l)
                };
                s.extend_from_slice(frames);
                l.extend(std::iter::repeat_n(1u8, frames.len()));
            }
        }
    }
    counts.frames = frame_scores.len();

    let report = MetricsReport {
        frame_auc: defined(roc_auc(&frame_scores, &frame_labels))?,
        frame_ap: defined(average_precision(&frame_scores, &frame_labels))?,
        instance_auc: defined(roc_auc(&inst_scores, &inst_labels))?,
        instance_ap: defined(average_precision(&inst_scores, &inst_labels))?,
        short_auc: defined(roc_auc(&short_s, &short_l))?,
        short_ap: defined(average_precision(&short_s, &short_l))?,
        long_auc: defined(roc_auc(&long_s, &long_l))?,
        long_ap: defined(average_precision(&long_s, &long_l))?,
        counts,
        sample_rate,
        short_threshold_frames: threshold,
    };
    Ok(report)
}

/// Per-frame curve as `frame_index,probability,label` CSV.
pub fn write_probability_csv(path: &Path, labels: &[u8], probs: &[f64]) -> Result<()> {
    if labels.len() != probs.len() {
        return Err(Error::dim(
            "probability_csv",
            "labels and probabilities differ in length",
        ));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "frame_index,probability,label").map_err(io)?;
    for (i, (p, l)) in probs.iter().zip(labels).enumerate() {
        writeln!(w, "{i},{p},{l}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.8, 0.7, 0.6, 0.2], &[1, 0, 1, 0]).unwrap(), 0.75);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap(),
            1.0
        );
        let ap = average_precision(&[0.8, 0.7, 0.6, 0.2], &[1, 0, 1, 0]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert!(average_precision(&[0.1, 0.2], &[0, 0]).is_err());
    }

    #[test]
    fn grouping_example() {
        let inst = group_instances(&[0, 0, 1, 1, 0], &[0.1, 0.2, 0.8, 0.6, 0.3]).unwrap();
        let summary: Vec<_> = inst.iter().map(|i| (i.label, i.start, i.end)).collect();
        assert_eq!(summary, vec![(0, 0, 1), (1, 2, 3), (0, 4, 4)]);
        let means = [0.15, 0.7, 0.3];
        for (i, m) in inst.iter().zip(means) {
            assert!((i.mean_prob - m).abs() < 1e-12);
        }
        assert_eq!(group_instances(&[1; 7], &[0.5; 7]).unwrap().len(), 1);
        assert_eq!(group_instances(&[0, 1, 0, 1], &[0.5; 4]).unwrap().len(), 4);
        assert!(group_instances(&[], &[]).is_err());
    }

    #[test]
    fn short_stratum_holds_two_frame_error() {
        let r = stratified_eval(&[0, 0, 1, 1, 0], &[0.1, 0.2, 0.8, 0.6, 0.3], 5.0).unwrap();
        assert_eq!(r.counts.short_error_instances, 1);
        assert_eq!(r.counts.short_error_frames, 2);
        assert_eq!(r.counts.long_error_instances, 0);
        assert_eq!(r.long_auc, None);
        assert_eq!(r.long_ap, None);
        assert_eq!(r.short_auc, Some(1.0));
        assert_eq!(r.frame_auc, Some(1.0));
        assert_eq!(r.short_threshold_frames, 15.0);
    }

    #[test]
    fn undefined_renders_null() {
        let r = stratified_eval(&[0, 1, 1, 0], &[0.1, 0.9, 0.8, 0.3], 5.0).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["long_auc"].is_null());
        assert!(json["frame_auc"].is_number());
    }
}

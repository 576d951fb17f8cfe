//! Parameter and FLOP accounting.
//!
//! Conventions: a multiply-add counts as 2 FLOPs; every elementwise
//! operation (activation, gating product, exponential, bias add) counts
//! 1 FLOP per element. Convolutions are counted at full length L regardless
//! of padding, so FLOPs are exactly linear in L.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BmssConfig, ModelConfig};

pub const FLOP_CONVENTION: &str =
    "multiply-add = 2 FLOPs; elementwise op = 1 FLOP per element; convolutions counted over all L output frames";

/// Reference sequence length used when none is given.
pub const DEFAULT_REFERENCE_LEN: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub params: u64,
    pub params_k: f64,
    pub flops: u64,
    pub mflops: f64,
    pub reference_len: usize,
    pub flops_per_frame: f64,
    pub convention: String,
    pub layers: Vec<LayerCost>,
}

/// Per-frame costs: (params, flops per output frame).
fn conv(c_in: u64, c_out: u64, taps: u64) -> (u64, u64) {
    (c_in * c_out * taps + c_out, 2 * c_in * c_out * taps + c_out)
}

fn block_layers(prefix: &str, b: &BmssConfig) -> Vec<(String, u64, u64)> {
    let g = b.compression as u64;
    let d = b.d_inner as u64;
    let n = b.state_size as u64;
    let r = b.dt_rank as u64;
    let mut out = Vec::new();
    let mut push = |name: &str, (p, f): (u64, u64)| out.push((format!("{prefix}.{name}"), p, f));

    push("compress", conv(b.d_in as u64, g, 1));
    let e = b.fctf.inner as u64;
    let k = b.fctf.kernel_size as u64;
    let mut cin = g;
    for j in 0..b.fctf.depth() {
        push(&format!("fctf.dilated.{j}"), conv(cin, e, k));
        cin = e;
    }
    if b.fctf.depth() > 0 {
        push("fctf.fuse", conv(b.fctf.concat_width() as u64, g, 1));
    }
    push("in_proj", (g * 2 * d, 2 * g * 2 * d));
    let kc = b.conv_kernel as u64;
    // depthwise taps + bias, then SiLU
    push("conv", (d * kc + d, 2 * d * kc + d + d));
    push("x_proj", (d * (r + 2 * n), 2 * d * (r + 2 * n)));
    // low-rank projection + bias + softplus
    push("dt_proj", (r * d + d, 2 * r * d + d + d));
    // A = -exp(a_log) is per-parameter, not per-frame; ā = exp(Δ·A)
    push("scan.discretize", (d * n, 2 * d * n));
    // b̄u = (Δ·u)·B, h = ā·h + b̄u
    push("scan.recurrence", (0, d + d * n + 2 * d * n));
    // y = Σ C·h + D·u
    push("scan.readout", (d, 2 * d * n + 2 * d));
    // SiLU(z) and the gating product
    push("gate", (0, 2 * d));
    push("restore", conv(d, b.d_out as u64, 1));
    out
}

/// Itemized parameter counts and FLOPs at sequence length `len`.
pub fn complexity(cfg: &ModelConfig, len: usize) -> Result<ComplexityReport> {
    if len == 0 {
        return Err(Error::Config("reference length must be at least 1".into()));
    }
    let l = len as u64;
    let mut layers = Vec::new();
    for (i, b) in cfg.block_configs()?.iter().enumerate() {
        for (name, p, f) in block_layers(&format!("blocks.{i}"), b) {
            layers.push(LayerCost {
                name,
                params: p,
                flops: f * l,
            });
        }
    }
    let (p, f) = conv(cfg.final_width() as u64, 1, 1);
    // plus the sigmoid
    layers.push(LayerCost {
        name: "head".into(),
        params: p,
        flops: (f + 1) * l,
    });
    let params: u64 = layers.iter().map(|x| x.params).sum();
    let flops: u64 = layers.iter().map(|x| x.flops).sum();
    Ok(ComplexityReport {
        params,
        params_k: params as f64 / 1e3,
        flops,
        mflops: flops as f64 / 1e6,
        reference_len: len,
        flops_per_frame: flops as f64 / len as f64,
        convention: FLOP_CONVENTION.into(),
        layers,
    })
}

pub fn count_params(cfg: &ModelConfig) -> Result<u64> {
    Ok(complexity(cfg, 1)?.params)
}

pub fn estimate_flops(cfg: &ModelConfig, len: usize) -> Result<u64> {
    Ok(complexity(cfg, len)?.flops)
}

impl ComplexityReport {
    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let width = self
            .layers
            .iter()
            .map(|l| l.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>12}  {:>16}", "layer", "params", "FLOPs");
        for l in &self.layers {
            let _ = writeln!(s, "{:<width$}  {:>12}  {:>16}", l.name, l.params, l.flops);
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>12}  {:>16}",
            "total", self.params, self.flops
        );
        let _ = writeln!(
            s,
            "params {:.2}K, FLOPs {:.2}M at L={} ({:.0} FLOPs/frame; {})",
            self.params_k, self.mflops, self.reference_len, self.flops_per_frame, self.convention
        );
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Blocks,
    Compression,
    FctfDepth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: usize,
    pub params_k: f64,
    pub mflops: f64,
    pub report: ComplexityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub base: ModelConfig,
    pub reference_len: usize,
    pub rows: Vec<SweepRow>,
    /// Empty when params and FLOPs grow strictly along every axis.
    pub violations: Vec<String>,
}

/// The ablation configurations: blocks 1–5, G ∈ {16, 32, 64, 128} and
/// FCTF depth 0–5 (dilations 2, 4, …, 2^depth), each varied from `base`.
pub fn sweep_configs(base: &ModelConfig) -> Vec<(SweepAxis, usize, ModelConfig)> {
    let mut out = Vec::new();
    for n in 1..=5 {
        out.push((
            SweepAxis::Blocks,
            n,
            ModelConfig {
                num_blocks: n,
                ..base.clone()
            },
        ));
    }
    for g in [16, 32, 64, 128] {
        out.push((
            SweepAxis::Compression,
            g,
            ModelConfig {
                compression: g,
                ..base.clone()
            },
        ));
    }
    for depth in 0..=5u32 {
        let dilations = (1..=depth).map(|j| 1usize << j).collect();
        out.push((
            SweepAxis::FctfDepth,
            depth as usize,
            ModelConfig {
                dilations,
                ..base.clone()
            },
        ));
    }
    out
}

pub fn sweep_report(base: &ModelConfig, len: usize) -> Result<SweepReport> {
    let rows = sweep_configs(base)
        .into_iter()
        .map(|(axis, value, cfg)| {
            let report = complexity(&cfg, len)?;
            Ok(SweepRow {
                axis,
                value,
                params_k: report.params_k,
                mflops: report.mflops,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut violations = Vec::new();
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.axis != b.axis {
            continue;
        }
        if b.report.params <= a.report.params {
            violations.push(format!(
                "{:?} {} -> {}: params {} -> {}",
                a.axis, a.value, b.value, a.report.params, b.report.params
            ));
        }
        if b.report.flops <= a.report.flops {
            violations.push(format!(
                "{:?} {} -> {}: FLOPs {} -> {}",
                a.axis, a.value, b.value, a.report.flops, b.report.flops
            ));
        }
    }
    Ok(SweepReport {
        base: base.clone(),
        reference_len: len,
        rows,
        violations,
    })
}

impl SweepReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12}  {:>6}  {:>12}  {:>12}",
            "axis", "value", "params (K)", "FLOPs (M)"
        );
        for r in &self.rows {
            let axis = match r.axis {
                SweepAxis::Blocks => "blocks",
                SweepAxis::Compression => "G",
                SweepAxis::FctfDepth => "fctf_depth",
            };
            let _ = writeln!(
                s,
                "{axis:<12}  {:>6}  {:>12.2}  {:>12.2}",
                r.value, r.params_k, r.mflops
            );
        }
        let _ = writeln!(
            s,
            "reference L = {}; {}",
            self.reference_len, FLOP_CONVENTION
        );
        if self.violations.is_empty() {
            let _ = writeln!(s, "monotonicity: ok");
        } else {
            for v in &self.violations {
                let _ = writeln!(s, "monotonicity violation: {v}");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definitional_examples() {
        assert_eq!(conv(64, 128, 1).0, 8320);
        assert_eq!(conv(192, 1, 1).0, 193);
        // 1-tap conv over L frames: 2·L·Cin·Cout + L·Cout
        let l = 37;
        assert_eq!(conv(64, 128, 1).1 * l, 2 * l * 64 * 128 + l * 128);
    }

    #[test]
    fn analytic_count_matches_declared_shapes() {
        for cfg in sweep_configs(&ModelConfig::default())
            .into_iter()
            .map(|(_, _, c)| c)
        {
            let declared: usize = cfg
                .param_shapes()
                .unwrap()
                .iter()
                .map(|(_, s)| s.iter().product::<usize>())
                .sum();
            assert_eq!(count_params(&cfg).unwrap(), declared as u64);
        }
    }

    #[test]
    fn flops_linear_in_length() {
        let cfg = ModelConfig::default();
        assert_eq!(
            estimate_flops(&cfg, 200).unwrap(),
            2 * estimate_flops(&cfg, 100).unwrap()
        );
        assert!(complexity(&cfg, 0).is_err());
    }

    #[test]
    fn default_sweep_is_monotone() {
        let r = sweep_report(&ModelConfig::default(), DEFAULT_REFERENCE_LEN).unwrap();
        assert_eq!(r.rows.len(), 15);
        assert!(r.violations.is_empty(), "{:?}", r.violations);
    }
}

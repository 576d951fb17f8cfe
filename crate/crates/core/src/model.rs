//! The detector: bottleneck multi-scale state-space (BMSS) blocks stacked
//! hierarchically, each halving the feature width, followed by a 1-tap
//! classifier and a sigmoid.
//!
//! One block:
//! ```text
//! x (L×D_in) ─ compress 1-tap ─► f_C (L×G) ─ FCTF ─► f_FC (L×G)
//!   ─ in_proj ─► [flow | z] (L×2·d_inner)
//!   flow ─ causal depthwise conv k=4 ─ SiLU ─ selective scan ─┐
//!   z ─ SiLU ──────────────────────────────────────────────── ⊙ ─ restore 1-tap ─► y (L×D_in/2)
//! ```
//! FCTF runs dilated k=3 convolutions (G→E→E→E at dilations 2, 4, 8),
//! concatenates `[f_C, f_T1, f_T2, f_T3]` and fuses back to G with a 1-tap
//! convolution.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::{self, SelectiveParams};
use crate::tensor::{Graph, Padding, Tensor, Var};

/// How the FCTF inner channel count E is derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerChannels {
    /// E = G / 8, G being the FCTF input width.
    GOver8,
    /// E = (block input width) / 8.
    BlockInputOver8,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Embedding width D.
    pub d_model: usize,
    pub num_blocks: usize,
    /// Bottleneck width G.
    pub compression: usize,
    /// Selective-SSM state size N.
    pub state_size: usize,
    /// d_inner = expand · G.
    pub expand: usize,
    /// FCTF dilation rates; an empty list disables FCTF.
    pub dilations: Vec<usize>,
    pub fctf_kernel: usize,
    pub fctf_inner: InnerChannels,
    /// Causal depthwise conv ahead of the scan.
    pub ssm_conv_kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 1536,
            num_blocks: 3,
            compression: 64,
            state_size: 16,
            expand: 1,
            dilations: vec![2, 4, 8],
            fctf_kernel: 3,
            fctf_inner: InnerChannels::GOver8,
            ssm_conv_kernel: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FctfConfig {
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub inner: usize,
    pub channels: usize,
}

impl FctfConfig {
    pub fn depth(&self) -> usize {
        self.dilations.len()
    }

    pub fn concat_width(&self) -> usize {
        self.channels + self.depth() * self.inner
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "FCTF kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.dilations.first() == Some(&0) || self.dilations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "FCTF dilations must be positive and strictly increasing, got {:?}",
                self.dilations
            )));
        }
        if self.depth() > 0 && self.inner == 0 {
            return Err(Error::Config(
                "FCTF inner channel count resolved to 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BmssConfig {
    pub d_in: usize,
    pub compression: usize,
    pub fctf: FctfConfig,
    pub state_size: usize,
    pub d_inner: usize,
    pub d_out: usize,
    pub conv_kernel: usize,
    pub dt_rank: usize,
}

impl ModelConfig {
    /// Small widths for tests and desk-scale training.
    pub fn tiny(d_model: usize, compression: usize, state_size: usize) -> Self {
        ModelConfig {
            d_model,
            compression,
            state_size,
            ..ModelConfig::default()
        }
    }

    /// Width of block `i`'s input (0-based): D / 2^i.
    pub fn block_input(&self, i: usize) -> usize {
        self.d_model >> i
    }

    pub fn final_width(&self) -> usize {
        self.d_model >> self.num_blocks
    }

    pub fn validate(&self) -> Result<()> {
        self.block_configs().map(|_| ())
    }

    pub fn block_configs(&self) -> Result<Vec<BmssConfig>> {
        if self.num_blocks == 0 {
            return Err(Error::Config("num_blocks must be at least 1".into()));
        }
        if self.num_blocks >= usize::BITS as usize
            || !self.d_model.is_multiple_of(1usize << self.num_blocks)
        {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by 2^{}",
                self.d_model, self.num_blocks
            )));
        }
        if self.state_size == 0 || self.expand == 0 || self.compression == 0 {
            return Err(Error::Config(
                "state_size, expand and compression must be positive".into(),
            ));
        }
        if self.ssm_conv_kernel == 0 {
            return Err(Error::Config("ssm_conv_kernel must be positive".into()));
        }
        (0..self.num_blocks)
            .map(|i| {
                let d_in = self.block_input(i);
                if self.compression > d_in {
                    return Err(Error::Config(format!(
                        "compression G={} exceeds block {} input width {d_in}",
                        self.compression,
                        i + 1
                    )));
                }
                let inner = match self.fctf_inner {
                    InnerChannels::GOver8 => self.compression / 8,
                    InnerChannels::BlockInputOver8 => d_in / 8,
                    InnerChannels::Fixed(e) => e,
                };
                let fctf = FctfConfig {
                    kernel_size: self.fctf_kernel,
                    dilations: self.dilations.clone(),
                    inner,
                    channels: self.compression,
                };
                fctf.validate()?;
                let d_inner = self.expand * self.compression;
                Ok(BmssConfig {
                    d_in,
                    compression: self.compression,
                    fctf,
                    state_size: self.state_size,
                    d_inner,
                    d_out: d_in / 2,
                    conv_kernel: self.ssm_conv_kernel,
                    dt_rank: ssm::dt_rank(d_inner),
                })
            })
            .collect()
    }

    /// Every learned tensor, in initialization order.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut out = Vec::new();
        for (i, b) in self.block_configs()?.iter().enumerate() {
            let p = |s: &str| format!("blocks.{i}.{s}");
            out.push((p("compress.weight"), vec![b.compression, b.d_in, 1]));
            out.push((p("compress.bias"), vec![b.compression]));
            let mut cin = b.fctf.channels;
            for j in 0..b.fctf.depth() {
                out.push((
                    p(&format!("fctf.dilated.{j}.weight")),
                    vec![b.fctf.inner, cin, b.fctf.kernel_size],
                ));
                out.push((p(&format!("fctf.dilated.{j}.bias")), vec![b.fctf.inner]));
                cin = b.fctf.inner;
            }
            if b.fctf.depth() > 0 {
                out.push((
                    p("fctf.fuse.weight"),
                    vec![b.fctf.channels, b.fctf.concat_width(), 1],
                ));
                out.push((p("fctf.fuse.bias"), vec![b.fctf.channels]));
            }
            out.push((p("in_proj.weight"), vec![b.compression, 2 * b.d_inner]));
            out.push((p("conv.weight"), vec![b.d_inner, b.conv_kernel]));
            out.push((p("conv.bias"), vec![b.d_inner]));
            out.push((
                p("x_proj.weight"),
                vec![b.d_inner, b.dt_rank + 2 * b.state_size],
            ));
            out.push((p("dt_proj.weight"), vec![b.dt_rank, b.d_inner]));
            out.push((p("dt_proj.bias"), vec![b.d_inner]));
            out.push((p("a_log"), vec![b.d_inner, b.state_size]));
            out.push((p("d_skip"), vec![b.d_inner]));
            out.push((p("restore.weight"), vec![b.d_out, b.d_inner, 1]));
            out.push((p("restore.bias"), vec![b.d_out]));
        }
        out.push(("head.weight".into(), vec![1, self.final_width(), 1]));
        out.push(("head.bias".into(), vec![1]));
        Ok(out)
    }
}

/// Named parameter tensors, ordered by name.
pub type ParamStore = BTreeMap<String, Tensor>;

/// Parameters bound into one graph.
#[derive(Debug, Default)]
pub struct BoundParams {
    vars: HashMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Bind already-recorded nodes by name, e.g. leaves created by the caller.
impl FromIterator<(String, Var)> for BoundParams {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        BoundParams {
            vars: iter.into_iter().collect(),
        }
    }
}

pub fn bind_params(g: &mut Graph, params: &ParamStore, trainable: bool) -> Result<BoundParams> {
    let mut vars = HashMap::with_capacity(params.len());
    for (name, t) in params {
        vars.insert(name.clone(), g.leaf(t.clone(), trainable)?);
    }
    Ok(BoundParams { vars })
}

/// Fine-to-coarse temporal fusion over `f_c` (L×G).
pub fn fctf_forward(
    g: &mut Graph,
    p: &BoundParams,
    prefix: &str,
    cfg: &FctfConfig,
    f_c: Var,
) -> Result<Var> {
    if cfg.depth() == 0 {
        return Ok(f_c);
    }
    let mut parts = vec![f_c];
    let mut cur = f_c;
    for (j, &dil) in cfg.dilations.iter().enumerate() {
        let w = p.get(&format!("{prefix}.dilated.{j}.weight"))?;
        let b = p.get(&format!("{prefix}.dilated.{j}.bias"))?;
        cur = g.conv1d(cur, w, b, dil, Padding::SameSymmetric)?;
        parts.push(cur);
    }
    let cat = g.concat_channels(&parts)?;
    let w = p.get(&format!("{prefix}.fuse.weight"))?;
    let b = p.get(&format!("{prefix}.fuse.bias"))?;
    g.conv1d(cat, w, b, 1, Padding::SameSymmetric)
}

/// One BMSS block: L×D_in → L×D_in/2.
pub fn bmss_forward(
    g: &mut Graph,
    p: &BoundParams,
    prefix: &str,
    cfg: &BmssConfig,
    x: Var,
) -> Result<Var> {
    let (_, width) = g.value(x).dims2("bmss")?;
    if width != cfg.d_in {
        return Err(Error::dim(
            "bmss",
            format!("input width {width}, block expects {}", cfg.d_in),
        ));
    }
    let name = |s: &str| format!("{prefix}.{s}");
    let d = cfg.d_inner;
    let n = cfg.state_size;
    let r = cfg.dt_rank;

    let f_c = g.conv1d(
        x,
        p.get(&name("compress.weight"))?,
        p.get(&name("compress.bias"))?,
        1,
        Padding::SameSymmetric,
    )?;
    let f_fc = fctf_forward(g, p, &name("fctf"), &cfg.fctf, f_c)?;

    let xz = g.matmul(f_fc, p.get(&name("in_proj.weight"))?)?;
    let flow = g.slice_cols(xz, 0, d)?;
    let z = g.slice_cols(xz, d, 2 * d)?;

    let flow = g.depthwise_conv1d(
        flow,
        p.get(&name("conv.weight"))?,
        p.get(&name("conv.bias"))?,
        1,
        Padding::Causal,
    )?;
    let u = g.silu(flow)?;

    let proj = g.matmul(u, p.get(&name("x_proj.weight"))?)?;
    let dt_low = g.slice_cols(proj, 0, r)?;
    let b_t = g.slice_cols(proj, r, r + n)?;
    let c_t = g.slice_cols(proj, r + n, r + 2 * n)?;
    let dt = g.matmul(dt_low, p.get(&name("dt_proj.weight"))?)?;
    let dt = g.add(dt, p.get(&name("dt_proj.bias"))?)?;
    let delta = g.softplus(dt)?;
    let a = g.exp(p.get(&name("a_log"))?)?;
    let a = g.scale(a, -1.0)?;
    let y = g.selective_scan(u, delta, a, b_t, c_t, p.get(&name("d_skip"))?)?;

    let gate = g.silu(z)?;
    let gated = g.mul(y, gate)?;
    g.conv1d(
        gated,
        p.get(&name("restore.weight"))?,
        p.get(&name("restore.bias"))?,
        1,
        Padding::SameSymmetric,
    )
}

/// Per-layer receptive field of the FCTF dilated stack with kernel size 3,
/// as the closed form 2^(l+2) − 1 for layer l ∈ [1, 3].
///
/// A kernel-3 stack at dilations 2, 4, 8 actually sees 5, 13 and 29 frames
/// (1 + 2·Σ dilations); see [`measured_fctf_receptive_fields`]. The closed
/// form is kept as stated and the two are compared in the test suite.
pub fn receptive_field_formula(layer: usize) -> Result<usize> {
    if !(1..=3).contains(&layer) {
        return Err(Error::Domain(format!(
            "layer must be in 1..=3, got {layer}"
        )));
    }
    Ok((1 << (layer + 2)) - 1)
}

/// Analytic support width after each dilated layer: 1 + (k−1)·Σ dilations.
pub fn fctf_support_widths(cfg: &FctfConfig) -> Vec<usize> {
    let mut reach = 0;
    cfg.dilations
        .iter()
        .map(|&d| {
            reach += (cfg.kernel_size - 1) / 2 * d;
            2 * reach + 1
        })
        .collect()
}

/// Measure each dilated layer's receptive field by back-propagating from a
/// single output frame and counting the input frames with nonzero gradient.
pub fn measured_fctf_receptive_fields(cfg: &FctfConfig, seed: u64) -> Result<Vec<usize>> {
    let half: usize = cfg.dilations.iter().sum::<usize>() * (cfg.kernel_size / 2);
    let len = 4 * half + 9;
    let center = len / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cfg.depth());
    for layer in 0..cfg.depth() {
        let mut g = Graph::new();
        let x = g.leaf(
            Tensor::new(
                vec![len, cfg.channels],
                (0..len * cfg.channels)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )?,
            true,
        )?;
        let mut cur = x;
        let mut cin = cfg.channels;
        for &dil in &cfg.dilations[..=layer] {
            let w = g.constant(Tensor::new(
                vec![cfg.inner, cin, cfg.kernel_size],
                (0..cfg.inner * cin * cfg.kernel_size)
                    .map(|_| rng.random_range(0.1..1.0))
                    .collect(),
            )?)?;
            let b = g.constant(Tensor::zeros(&[cfg.inner]))?;
            cur = g.conv1d(cur, w, b, dil, Padding::SameSymmetric)?;
            cin = cfg.inner;
        }
        let mut mask = Tensor::zeros(&[len, cfg.inner]);
        mask.data_mut()[center * cfg.inner..(center + 1) * cfg.inner].fill(1.0);
        let mask = g.constant(mask)?;
        let picked = g.mul(cur, mask)?;
        let loss = g.sum(picked)?;
        let grads = g.backward(loss)?;
        let gx = grads.get(x).expect("input gradient");
        let touched: Vec<usize> = (0..len)
            .filter(|&t| gx.row(t).iter().any(|&v| v != 0.0))
            .collect();
        let span = match (touched.first(), touched.last()) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        };
        out.push(span);
    }
    Ok(out)
}

/// A detector instance: configuration plus its learned parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Sedmamba {
    config: ModelConfig,
    blocks: Vec<BmssConfig>,
    params: ParamStore,
}

impl Sedmamba {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let blocks = config.block_configs()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in config.param_shapes()? {
            params.insert(name, Tensor::zeros(&shape));
        }
        for (i, b) in blocks.iter().enumerate() {
            let pre = format!("blocks.{i}");
            init_conv(&mut params, &mut rng, &format!("{pre}.compress"));
            for j in 0..b.fctf.depth() {
                init_conv(&mut params, &mut rng, &format!("{pre}.fctf.dilated.{j}"));
            }
            if b.fctf.depth() > 0 {
                init_conv(&mut params, &mut rng, &format!("{pre}.fctf.fuse"));
            }
            init_linear(
                &mut params,
                &mut rng,
                &format!("{pre}.in_proj.weight"),
                b.compression,
            );
            init_conv_depthwise(&mut params, &mut rng, &format!("{pre}.conv"), b.conv_kernel);
            let sp = SelectiveParams::init_s4d_real(b.d_inner, b.state_size, &mut rng);
            params.insert(format!("{pre}.x_proj.weight"), sp.x_proj);
            params.insert(format!("{pre}.dt_proj.weight"), sp.dt_proj_weight);
            params.insert(format!("{pre}.dt_proj.bias"), sp.dt_proj_bias);
            params.insert(format!("{pre}.a_log"), sp.a_log);
            params.insert(format!("{pre}.d_skip"), sp.d_skip);
            init_conv(&mut params, &mut rng, &format!("{pre}.restore"));
        }
        init_conv(&mut params, &mut rng, "head");
        Ok(Sedmamba {
            config,
            blocks,
            params,
        })
    }

    /// Rebuild from stored parameters, checking every expected shape.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let blocks = config.block_configs()?;
        let shapes = config.param_shapes()?;
        if shapes.len() != params.len() {
            return Err(Error::Config(format!(
                "config expects {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (name, shape) in &shapes {
            match params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => t.ensure_finite("parameters")?,
                Some(t) => {
                    return Err(Error::dim(
                        "parameters",
                        format!("{name} has shape {:?}, expected {shape:?}", t.shape()),
                    ))
                }
                None => return Err(Error::Config(format!("missing parameter {name}"))),
            }
        }
        Ok(Sedmamba {
            config,
            blocks,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn block_configs(&self) -> &[BmssConfig] {
        &self.blocks
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Record the forward pass for embeddings `x` (L×D); returns P (L×1).
    pub fn forward(&self, g: &mut Graph, p: &BoundParams, x: Var) -> Result<Var> {
        let (_, width) = g.value(x).dims2("model")?;
        if width != self.config.d_model {
            return Err(Error::dim(
                "model",
                format!(
                    "embedding width {width}, model expects {}",
                    self.config.d_model
                ),
            ));
        }
        let mut h = x;
        for (i, b) in self.blocks.iter().enumerate() {
            h = bmss_forward(g, p, &format!("blocks.{i}"), b, h)?;
        }
        let logits = g.conv1d(
            h,
            p.get("head.weight")?,
            p.get("head.bias")?,
            1,
            Padding::SameSymmetric,
        )?;
        g.sigmoid(logits)
    }

    /// Per-frame error probabilities for one sequence.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::inference();
        let p = bind_params(&mut g, &self.params, false)?;
        let xv = g.constant(x.clone())?;
        let out = self.forward(&mut g, &p, xv)?;
        Ok(g.value(out).data().to_vec())
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn init_conv(params: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str) {
    let w = params
        .get_mut(&format!("{prefix}.weight"))
        .expect("weight declared");
    let fan_in = w.shape()[1] * w.shape()[2];
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = w.numel();
    w.data_mut().copy_from_slice(&uniform(rng, n, bound));
    let b = params
        .get_mut(&format!("{prefix}.bias"))
        .expect("bias declared");
    let n = b.numel();
    b.data_mut().copy_from_slice(&uniform(rng, n, bound));
}

fn init_conv_depthwise(params: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, taps: usize) {
    let bound = 1.0 / (taps as f64).sqrt();
    for suffix in ["weight", "bias"] {
        let t = params
            .get_mut(&format!("{prefix}.{suffix}"))
            .expect("declared");
        let n = t.numel();
        t.data_mut().copy_from_slice(&uniform(rng, n, bound));
    }
}

fn init_linear(params: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize) {
    let t = params.get_mut(name).expect("declared");
    let n = t.numel();
    t.data_mut()
        .copy_from_slice(&uniform(rng, n, 1.0 / (fan_in as f64).sqrt()));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_values() {
        assert_eq!(receptive_field_formula(1).unwrap(), 7);
        assert_eq!(receptive_field_formula(2).unwrap(), 15);
        assert_eq!(receptive_field_formula(3).unwrap(), 31);
        assert!(receptive_field_formula(0).is_err());
        assert!(receptive_field_formula(4).is_err());
    }

    #[test]
    fn block_widths_halve() {
        let cfg = ModelConfig::default();
        let blocks = cfg.block_configs().unwrap();
        let widths: Vec<_> = blocks.iter().map(|b| (b.d_in, b.d_out)).collect();
        assert_eq!(widths, vec![(1536, 768), (768, 384), (384, 192)]);
        assert!(blocks.iter().all(|b| b.fctf.inner == 8));
        assert_eq!(blocks[0].dt_rank, 4);
    }

    #[test]
    fn config_rejections() {
        let bad_div = ModelConfig {
            d_model: 20,
            num_blocks: 3,
            ..ModelConfig::default()
        };
        assert!(matches!(bad_div.validate(), Err(Error::Config(_))));
        let big_g = ModelConfig::tiny(64, 32, 4);
        assert!(big_g.validate().is_err(), "block 3 input 16 < G 32");
        let non_increasing = ModelConfig {
            dilations: vec![2, 2],
            ..ModelConfig::tiny(64, 16, 4)
        };
        assert!(non_increasing.validate().is_err());
        let even = ModelConfig {
            fctf_kernel: 4,
            ..ModelConfig::tiny(64, 16, 4)
        };
        assert!(even.validate().is_err());
        assert!(ModelConfig::tiny(64, 16, 4).validate().is_ok());
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let err = serde_json::from_str::<ModelConfig>(r#"{"d_model": 64, "bogus": 1}"#);
        assert!(err.is_err());
        let ok: ModelConfig = serde_json::from_str(
            r#"{"d_model": 64, "compression": 8, "fctf_inner": {"fixed": 2}}"#,
        )
        .unwrap();
        assert_eq!(ok.fctf_inner, InnerChannels::Fixed(2));
        assert_eq!(ok.num_blocks, 3);
    }

    #[test]
    fn support_widths() {
        let cfg = FctfConfig {
            kernel_size: 3,
            dilations: vec![2, 4, 8],
            inner: 2,
            channels: 4,
        };
        assert_eq!(fctf_support_widths(&cfg), vec![5, 13, 29]);
        assert_eq!(
            measured_fctf_receptive_fields(&cfg, 3).unwrap(),
            vec![5, 13, 29]
        );
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::tiny(32, 8, 4);
        let a = Sedmamba::new(cfg.clone(), 1).unwrap();
        let b = Sedmamba::new(cfg.clone(), 1).unwrap();
        let c = Sedmamba::new(cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
    }
}

//! Helpers shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sedmamba_core::model::{BoundParams, ModelConfig, Sedmamba};
use sedmamba_core::tensor::{Graph, Padding, Tensor, Var};
use sedmamba_core::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Largest relative error between analytic and central-difference
/// gradients over all `inputs`.
///
/// `build` records a computation on fresh leaves and returns any tensor;
/// the checked scalar is `Σ out ⊙ R` for a fixed random `R`, so every
/// output entry contributes. The error for one input is
/// `‖g_analytic − g_numeric‖∞ / max(‖g_analytic‖∞, ‖g_numeric‖∞, 1e−8)`.
pub fn fd_max_rel_error<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    fd_stats(inputs, build)
        .into_iter()
        .map(|s| s.rel_error)
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug)]
pub struct FdStat {
    pub rel_error: f64,
    /// max(‖g_analytic‖∞, ‖g_numeric‖∞), to spot vacuous checks.
    pub scale: f64,
}

/// Per-input statistics; see [`fd_max_rel_error`].
pub fn fd_stats<F>(inputs: &[Tensor], build: F) -> Vec<FdStat>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let weights = {
        let mut g = Graph::inference();
        let vars: Vec<Var> = inputs
            .iter()
            .map(|t| g.constant(t.clone()).unwrap())
            .collect();
        let out = build(&mut g, &vars).unwrap();
        let shape = g.value(out).shape().to_vec();
        uniform(&mut rng(0xfd), &shape, -1.0, 1.0)
    };
    let objective = |g: &mut Graph, vars: &[Var]| -> Var {
        let out = build(g, vars).unwrap();
        let w = g.constant(weights.clone()).unwrap();
        let prod = g.mul(out, w).unwrap();
        g.sum(prod).unwrap()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.leaf(t.clone(), true).unwrap())
        .collect();
    let loss = objective(&mut g, &vars);
    let grads = g.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();

    let eval = |perturbed: &[Tensor]| -> f64 {
        let mut g = Graph::inference();
        let vars: Vec<Var> = perturbed
            .iter()
            .map(|t| g.constant(t.clone()).unwrap())
            .collect();
        let loss = objective(&mut g, &vars);
        g.value(loss).data()[0]
    };
    let mut errors = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let x = input.data()[k];
            let h = 1e-6 * x.abs().max(1.0);
            work[i].data_mut()[k] = x + h;
            let up = eval(&work);
            work[i].data_mut()[k] = x - h;
            let down = eval(&work);
            work[i].data_mut()[k] = x;
            *slot = (up - down) / (2.0 * h);
        }
        let a = analytic[i].data();
        let inf = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0f64, |m, x| m.max(x.abs()));
        let diff = inf(&mut a.iter().zip(&numeric).map(|(p, q)| p - q));
        let scale = inf(&mut a.iter().copied()).max(inf(&mut numeric.iter().copied()));
        errors.push(FdStat {
            rel_error: diff / scale.max(1e-8),
            scale,
        });
    }
    errors
}

/// One named finite-difference case per graph op and configuration, plus
/// the tiny full model. Returns (name, max relative error).
pub fn gradient_suite() -> Vec<(String, f64)> {
    let mut r = rng(7);
    let mut out = Vec::new();
    let mut push = |name: &str, err: f64| out.push((name.to_string(), err));

    push(
        "matmul",
        fd_max_rel_error(
            &[
                uniform(&mut r, &[5, 4], -1.0, 1.0),
                uniform(&mut r, &[4, 3], -1.0, 1.0),
            ],
            |g, v| g.matmul(v[0], v[1]),
        ),
    );
    for padding in [Padding::SameSymmetric, Padding::Causal, Padding::None] {
        for dilation in [1, 2, 3] {
            for taps in [1, 3] {
                let inputs = [
                    uniform(&mut r, &[11, 3], -1.0, 1.0),
                    uniform(&mut r, &[2, 3, taps], -1.0, 1.0),
                    uniform(&mut r, &[2], -1.0, 1.0),
                ];
                push(
                    &format!("conv1d {padding:?} d={dilation} k={taps}"),
                    fd_max_rel_error(&inputs, |g, v| {
                        g.conv1d(v[0], v[1], v[2], dilation, padding)
                    }),
                );
            }
        }
    }
    for padding in [Padding::Causal, Padding::SameSymmetric] {
        for dilation in [1, 2] {
            let taps = if padding == Padding::Causal { 4 } else { 3 };
            let inputs = [
                uniform(&mut r, &[9, 3], -1.0, 1.0),
                uniform(&mut r, &[3, taps], -1.0, 1.0),
                uniform(&mut r, &[3], -1.0, 1.0),
            ];
            push(
                &format!("depthwise_conv1d {padding:?} d={dilation} k={taps}"),
                fd_max_rel_error(&inputs, |g, v| {
                    g.depthwise_conv1d(v[0], v[1], v[2], dilation, padding)
                }),
            );
        }
    }
    let x = uniform(&mut r, &[4, 3], -2.0, 2.0);
    push(
        "silu",
        fd_max_rel_error(std::slice::from_ref(&x), |g, v| g.silu(v[0])),
    );
    push(
        "sigmoid",
        fd_max_rel_error(std::slice::from_ref(&x), |g, v| g.sigmoid(v[0])),
    );
    push(
        "softplus",
        fd_max_rel_error(std::slice::from_ref(&x), |g, v| g.softplus(v[0])),
    );
    push(
        "exp",
        fd_max_rel_error(std::slice::from_ref(&x), |g, v| g.exp(v[0])),
    );
    push(
        "scale",
        fd_max_rel_error(std::slice::from_ref(&x), |g, v| g.scale(v[0], -1.7)),
    );
    for (label, rhs) in [("same", vec![4, 3]), ("row", vec![3]), ("scalar", vec![1])] {
        let inputs = [x.clone(), uniform(&mut r, &rhs, -1.0, 1.0)];
        push(
            &format!("add {label}"),
            fd_max_rel_error(&inputs, |g, v| g.add(v[0], v[1])),
        );
        push(
            &format!("mul {label}"),
            fd_max_rel_error(&inputs, |g, v| g.mul(v[0], v[1])),
        );
    }
    push(
        "concat_channels",
        fd_max_rel_error(
            &[
                uniform(&mut r, &[5, 2], -1.0, 1.0),
                uniform(&mut r, &[5, 3], -1.0, 1.0),
                uniform(&mut r, &[5, 1], -1.0, 1.0),
            ],
            |g, v| g.concat_channels(v),
        ),
    );
    push(
        "slice_cols",
        fd_max_rel_error(std::slice::from_ref(&x), |g, v| g.slice_cols(v[0], 1, 3)),
    );
    push(
        "sum",
        fd_max_rel_error(std::slice::from_ref(&x), |g, v| g.sum(v[0])),
    );
    push(
        "mean",
        fd_max_rel_error(std::slice::from_ref(&x), |g, v| g.mean(v[0])),
    );
    let probs = uniform(&mut r, &[6, 1], 0.1, 0.9);
    let labels = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    push(
        "bce",
        fd_max_rel_error(&[probs], |g, v| g.bce(v[0], &labels, 1e-7)),
    );

    for (len, d, n) in [(8, 2, 4), (5, 1, 1), (7, 3, 2)] {
        let inputs = [
            uniform(&mut r, &[len, d], -1.0, 1.0),
            uniform(&mut r, &[len, d], 0.05, 0.8),
            uniform(&mut r, &[d, n], -2.0, -0.2),
            uniform(&mut r, &[len, n], -1.0, 1.0),
            uniform(&mut r, &[len, n], -1.0, 1.0),
            uniform(&mut r, &[d], -1.0, 1.0),
        ];
        push(
            &format!("selective_scan L={len} d={d} N={n}"),
            fd_max_rel_error(&inputs, |g, v| {
                g.selective_scan(v[0], v[1], v[2], v[3], v[4], v[5])
            }),
        );
    }

    push("tiny model", tiny_model_fd());
    out
}

/// Finite differences over every parameter tensor of a tiny model and its
/// input, through the BCE loss.
///
/// A tensor whose gradient is below 1e−6 counts as a failure (error 1), so
/// a saturated model cannot pass vacuously.
pub fn tiny_model_fd() -> f64 {
    tiny_model_fd_by_tensor()
        .into_iter()
        .map(|(_, s)| if s.scale > 1e-6 { s.rel_error } else { 1.0 })
        .fold(0.0, f64::max)
}

pub fn tiny_model_fd_by_tensor() -> Vec<(String, FdStat)> {
    let cfg = ModelConfig::tiny(32, 8, 2);
    let model = well_conditioned_tiny_model(cfg, 3);
    let names: Vec<String> = model.params().keys().cloned().collect();
    let len = 10;
    let x = uniform(&mut rng(11), &[len, 32], -1.0, 1.0);
    let labels: Vec<f64> = (0..len)
        .map(|t| f64::from(u8::from((3..7).contains(&t))))
        .collect();
    let mut inputs: Vec<Tensor> = model.params().values().cloned().collect();
    inputs.push(x);
    let errors = fd_stats(&inputs, |g, v| {
        let bound: BoundParams = names.iter().cloned().zip(v.iter().copied()).collect();
        let probs = model.forward(g, &bound, v[names.len()])?;
        g.bce(probs, &labels, 1e-7)
    });
    names
        .into_iter()
        .chain(["input".to_string()])
        .zip(errors)
        .collect()
}

/// Random O(1) parameters for a gradient check. At the training init the
/// small Δ and 1/√fan-in weights shrink gradients reaching the first block
/// to 1e−9..1e−13, below what central differences can resolve, so the
/// check uses parameters where every path carries a measurable signal.
/// Weight scale relative to unit-variance fan-in init. The block is
/// polynomial in its input (B, C and the gate all depend on it), so below
/// about 1.1 the signal dies out over three blocks and above about 1.3 the
/// head saturates.
const GAIN: f64 = 1.2;

pub fn well_conditioned_tiny_model(cfg: ModelConfig, seed: u64) -> Sedmamba {
    let mut r = rng(seed);
    let params = cfg
        .param_shapes()
        .unwrap()
        .into_iter()
        .map(|(name, shape)| {
            let fan_in: usize = match shape.len() {
                3 => shape[1] * shape[2],
                2 if name.ends_with("conv.weight") => shape[1],
                2 => shape[0],
                _ => 1,
            };
            let t = if name.ends_with("dt_proj.bias") || name.ends_with("a_log") {
                uniform(&mut r, &shape, -0.5, 0.5)
            } else if name.ends_with("d_skip") {
                uniform(&mut r, &shape, 0.5, 1.5)
            } else if name.ends_with(".bias") {
                uniform(&mut r, &shape, -0.3, 0.3)
            } else {
                let bound = GAIN * (3.0 / fan_in as f64).sqrt();
                uniform(&mut r, &shape, -bound, bound)
            };
            (name, t)
        })
        .collect();
    Sedmamba::from_params(cfg, params).unwrap()
}

/// Mann–Whitney AUC by enumerating every positive/negative pair.
pub fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] == 0 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// AP by thresholding at every distinct score and counting directly.
pub fn brute_ap(scores: &[f64], labels: &[u8]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let pos = labels.iter().filter(|&&l| l != 0).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= t {
                if l != 0 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

pub mod ssm_cases {
    use super::{rng, uniform};
    use rand::Rng;
    use sedmamba_core::ssm::{
        discretize, lti_recurrence, selective_scan_chunked, selective_scan_fast,
        selective_scan_reference, ssm_kernel, DiscreteLtiParams, LtiParams, ScanInputs,
    };
    use sedmamba_core::tensor::Tensor;

    /// Max |recurrence − convolution| over `count` random stable systems,
    /// cycling L through 1, 8 and 64.
    pub fn lti_equivalence(count: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for i in 0..count {
            let len = [1, 8, 64][i % 3];
            let n = r.random_range(1..=16);
            let p = LtiParams::stable(
                (0..n).map(|_| r.random_range(-3.0..-0.01)).collect(),
                (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
                (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
                r.random_range(0.01..1.0),
            )
            .unwrap();
            let d = discretize(&p).unwrap();
            let x: Vec<f64> = (0..len).map(|_| r.random_range(-1.0..1.0)).collect();
            let rec = lti_recurrence(&d, &p.c, &x).unwrap();
            let conv = ssm_kernel(&d, &p.c, len)
                .unwrap()
                .causal_convolve(&x)
                .unwrap();
            for (a, b) in rec.iter().zip(&conv) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn random_scan(
        r: &mut rand_chacha::ChaCha8Rng,
        len: usize,
        d: usize,
        n: usize,
    ) -> (ScanInputs, Tensor) {
        let inputs = ScanInputs {
            delta: uniform(r, &[len, d], 1e-3, 0.5),
            a: uniform(r, &[d, n], -4.0, -0.05),
            b: uniform(r, &[len, n], -1.0, 1.0),
            c: uniform(r, &[len, n], -1.0, 1.0),
            d_skip: uniform(r, &[d], -1.0, 1.0),
        };
        (inputs, uniform(r, &[len, d], -1.0, 1.0))
    }

    fn rel(fast: &Tensor, reference: &Tensor) -> f64 {
        let scale = reference
            .data()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        fast.max_abs_diff(reference) / scale
    }

    /// Max relative error (‖fast − ref‖∞ / ‖ref‖∞) of the default fast scan
    /// and of a random short chunking, over `count` instances with
    /// L ≤ 256, N = 16, d_inner ≤ 128.
    pub fn fast_vs_reference(count: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..count {
            let len = r.random_range(1..=256);
            let d = r.random_range(1..=128);
            let (inputs, u) = random_scan(&mut r, len, d, 16);
            let reference = selective_scan_reference(&inputs, &u).unwrap();
            let fast = selective_scan_fast(&inputs, &u).unwrap();
            let chunked = selective_scan_chunked(&inputs, &u, r.random_range(1..=64)).unwrap();
            worst = worst
                .max(rel(&fast, &reference))
                .max(rel(&chunked, &reference));
        }
        worst
    }

    /// Constant Δ, B, C with zero skip: the scan must equal the LTI
    /// recurrence with Ā = exp(ΔA), B̄ = Δ·B. Returns the max abs error.
    pub fn time_invariant_reduction(count: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for i in 0..count {
            let len = r.random_range(1..=64);
            let n = if i % 2 == 0 {
                1
            } else {
                r.random_range(1..=16)
            };
            let a: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..-0.01)).collect();
            let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            let dt = r.random_range(0.01..1.0);
            let x: Vec<f64> = (0..len).map(|_| r.random_range(-1.0..1.0)).collect();
            let inputs = ScanInputs {
                delta: Tensor::full(&[len, 1], dt),
                a: Tensor::new(vec![1, n], a.clone()).unwrap(),
                b: Tensor::new(
                    vec![len, n],
                    b.iter().copied().cycle().take(len * n).collect(),
                )
                .unwrap(),
                c: Tensor::new(
                    vec![len, n],
                    c.iter().copied().cycle().take(len * n).collect(),
                )
                .unwrap(),
                d_skip: Tensor::zeros(&[1]),
            };
            let u = Tensor::new(vec![len, 1], x.clone()).unwrap();
            let lti = DiscreteLtiParams {
                a_bar: a.iter().map(|v| (dt * v).exp()).collect(),
                b_bar: b.iter().map(|v| dt * v).collect(),
            };
            let expect = lti_recurrence(&lti, &c, &x).unwrap();
            for scan in [
                selective_scan_reference(&inputs, &u),
                selective_scan_fast(&inputs, &u),
            ] {
                for (p, q) in scan.unwrap().data().iter().zip(&expect) {
                    worst = worst.max((p - q).abs());
                }
            }
        }
        worst
    }
}

/// Max |implementation − brute force| for AUC and AP over `count` random
/// instances; half of them draw scores from a coarse grid to force ties.
pub fn metric_oracles(count: usize, seed: u64) -> f64 {
    use sedmamba_core::metrics::{average_precision, roc_auc};
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < count {
        let n = r.random_range(2..=200);
        let labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.4))).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            continue;
        }
        let coarse = done % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    f64::from(r.random_range(0..5u8)) / 4.0
                } else {
                    r.random()
                }
            })
            .collect();
        worst = worst
            .max((roc_auc(&scores, &labels).unwrap() - brute_auc(&scores, &labels)).abs())
            .max((average_precision(&scores, &labels).unwrap() - brute_ap(&scores, &labels)).abs());
        done += 1;
    }
    worst
}

/// Outcome of the protocol-fidelity check on synthetic data.
#[derive(Debug)]
pub struct ProtocolCheck {
    pub planted_short: usize,
    pub planted_long: usize,
    pub report: sedmamba_core::metrics::MetricsReport,
    pub problems: Vec<String>,
}

/// Generate synthetic sequences, score them with noisy label-correlated
/// probabilities, and compare the evaluator's instance grouping, instance
/// means and short/long strata against the generator's planted segments.
pub fn protocol_fidelity(seed: u64) -> ProtocolCheck {
    use sedmamba_core::data::synth::{synth_generate, DurationClass, SynthConfig};
    use sedmamba_core::metrics::{evaluate, group_instances, VideoPrediction};
    let cfg = SynthConfig {
        seed,
        num_sequences: 10,
        num_test: 0,
        width: 4,
        ..Default::default()
    };
    let seqs = synth_generate(&cfg).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let mut problems = Vec::new();
    let (mut planted_short, mut planted_long, mut planted_frames) = (0, 0, 0);
    let mut videos = Vec::new();
    for s in &seqs {
        let labels = s.data.labels.clone();
        let probs: Vec<f64> = labels
            .iter()
            .map(|&l| (0.3 * f64::from(l) + r.random_range(0.0..0.7)).clamp(0.0, 1.0))
            .collect();
        let instances = group_instances(&labels, &probs).unwrap();
        let errors: Vec<_> = instances.iter().filter(|i| i.label == 1).collect();
        if errors.len() != s.segments.len() {
            problems.push(format!(
                "{}: {} error instances, {} planted",
                s.data.id(),
                errors.len(),
                s.segments.len()
            ));
        }
        for (inst, seg) in errors.iter().zip(&s.segments) {
            if (inst.start, inst.end) != (seg.start, seg.end) {
                problems.push(format!(
                    "{}: instance {}..={} vs planted {seg:?}",
                    s.data.id(),
                    inst.start,
                    inst.end
                ));
            }
            let mean = probs[seg.start..=seg.end].iter().sum::<f64>() / seg.duration() as f64;
            if (inst.mean_prob - mean).abs() > 1e-12 {
                problems.push(format!(
                    "{}: instance mean {} vs {mean}",
                    s.data.id(),
                    inst.mean_prob
                ));
            }
        }
        for seg in &s.segments {
            planted_frames += seg.duration();
            match seg.class {
                DurationClass::Short => planted_short += 1,
                DurationClass::Long => planted_long += 1,
            }
        }
        videos.push(VideoPrediction {
            video_id: s.data.id().to_string(),
            labels,
            probs,
        });
    }
    let report = evaluate(&videos, cfg.sample_rate).unwrap();
    let c = &report.counts;
    if (c.short_error_instances, c.long_error_instances) != (planted_short, planted_long) {
        problems.push(format!(
            "strata {}/{} vs planted {planted_short}/{planted_long}",
            c.short_error_instances, c.long_error_instances
        ));
    }
    if c.error_frames != planted_frames
        || c.short_error_frames + c.long_error_frames != planted_frames
    {
        problems.push(format!(
            "error frames {} vs planted {planted_frames}",
            c.error_frames
        ));
    }
    if report.short_threshold_frames != 15.0 {
        problems.push(format!(
            "short threshold {} frames at 5 Hz",
            report.short_threshold_frames
        ));
    }
    for (name, v) in [
        ("frame_auc", report.frame_auc),
        ("frame_ap", report.frame_ap),
        ("instance_auc", report.instance_auc),
        ("instance_ap", report.instance_ap),
        ("short_auc", report.short_auc),
        ("short_ap", report.short_ap),
        ("long_auc", report.long_auc),
        ("long_ap", report.long_ap),
    ] {
        if v.is_none() {
            problems.push(format!("{name} missing"));
        }
    }
    ProtocolCheck {
        planted_short,
        planted_long,
        report,
        problems,
    }
}

//! Selective-scan kernels on raw slices.
//!
//! Per channel `c` and state index `n`:
//!   ā = exp(Δ[t,c]·A[c,n]),  b̄ = Δ[t,c]·B[t,n]
//!   h[c,n] ← ā·h[c,n] + b̄·u[t,c]
//!   y[t,c] = Σₙ C[t,n]·h[c,n] + D[c]·u[t,c]
//!
//! All three forward variants evaluate `ā·h + b̄·u` and the output sum in
//! the same floating-point order, so a single-chunk run of the chunked
//! variant reproduces the reference bit for bit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanDims {
    pub len: usize,
    pub channels: usize,
    pub state: usize,
}

impl ScanDims {
    pub fn check(
        u: &Tensor,
        delta: &Tensor,
        a: &Tensor,
        b: &Tensor,
        c: &Tensor,
        d: &Tensor,
    ) -> Result<Self> {
        let (len, channels) = u.dims2("selective_scan")?;
        let (ac, state) = a.dims2("selective_scan")?;
        if state == 0 {
            return Err(Error::dim("selective_scan", "state size must be positive"));
        }
        let bad = |what: &str, got: &[usize], want: &[usize]| {
            Err(Error::dim(
                "selective_scan",
                format!("{what} has shape {got:?}, expected {want:?}"),
            ))
        };
        if delta.shape() != [len, channels] {
            return bad("delta", delta.shape(), &[len, channels]);
        }
        if ac != channels {
            return bad("A", a.shape(), &[channels, state]);
        }
        if b.shape() != [len, state] {
            return bad("B", b.shape(), &[len, state]);
        }
        if c.shape() != [len, state] {
            return bad("C", c.shape(), &[len, state]);
        }
        if d.shape() != [channels] {
            return bad("D", d.shape(), &[channels]);
        }
        Ok(ScanDims {
            len,
            channels,
            state,
        })
    }
}

pub struct ScanArgs<'a> {
    pub dims: ScanDims,
    pub u: &'a [f64],
    pub delta: &'a [f64],
    pub a: &'a [f64],
    pub b: &'a [f64],
    pub c: &'a [f64],
    pub d: &'a [f64],
}

impl ScanArgs<'_> {
    #[inline]
    fn step(&self, t: usize, ch: usize, n: usize, h: f64) -> f64 {
        let ScanDims {
            channels, state, ..
        } = self.dims;
        let dt = self.delta[t * channels + ch];
        let a_bar = (dt * self.a[ch * state + n]).exp();
        let b_bar = dt * self.b[t * state + n];
        a_bar * h + b_bar * self.u[t * channels + ch]
    }

    #[inline]
    fn readout(&self, t: usize, ch: usize, h: &[f64]) -> f64 {
        let ScanDims {
            channels, state, ..
        } = self.dims;
        let mut y = 0.0;
        for n in 0..state {
            y += self.c[t * state + n] * h[n];
        }
        y + self.d[ch] * self.u[t * channels + ch]
    }
}

/// Plain sequential scan: time outer, channels inner.
pub fn forward_reference(args: &ScanArgs) -> Vec<f64> {
    let ScanDims {
        len,
        channels,
        state,
    } = args.dims;
    let mut h = vec![0.0; channels * state];
    let mut y = vec![0.0; len * channels];
    for t in 0..len {
        for ch in 0..channels {
            let hc = &mut h[ch * state..(ch + 1) * state];
            for (n, hn) in hc.iter_mut().enumerate() {
                *hn = args.step(t, ch, n, *hn);
            }
            y[t * channels + ch] = args.readout(t, ch, hc);
        }
    }
    y
}

/// Reference scan that also returns every hidden state, laid out
/// `[t][channel][n]`, for use by [`backward`].
pub fn forward_with_states(args: &ScanArgs) -> (Vec<f64>, Vec<f64>) {
    let ScanDims {
        len,
        channels,
        state,
    } = args.dims;
    let width = channels * state;
    let mut states = vec![0.0; len * width];
    let mut y = vec![0.0; len * channels];
    for t in 0..len {
        let (prev, cur) = states.split_at_mut(t * width);
        let cur = &mut cur[..width];
        let prev = (t > 0).then(|| &prev[(t - 1) * width..]);
        for ch in 0..channels {
            for n in 0..state {
                let h = prev.map_or(0.0, |p| p[ch * state + n]);
                cur[ch * state + n] = args.step(t, ch, n, h);
            }
            y[t * channels + ch] = args.readout(t, ch, &cur[ch * state..(ch + 1) * state]);
        }
    }
    (y, states)
}

/// Chunked scan. Each channel's sequence is cut into chunks of `chunk`
/// steps; chunks are scanned independently from a zero state while tracking
/// the running decay product, then the chunk carries are combined
/// left-to-right and folded back in: h_t = local_t + decay_t ⊙ carry_in.
/// Channels and chunks run in parallel; the combine order is fixed.
pub fn forward_chunked(args: &ScanArgs, chunk: usize) -> Vec<f64> {
    let ScanDims { len, channels, .. } = args.dims;
    let chunk = chunk.max(1);
    let per_channel: Vec<Vec<f64>> = (0..channels)
        .into_par_iter()
        .map(|ch| scan_channel_chunked(args, ch, chunk))
        .collect();
    let mut y = vec![0.0; len * channels];
    for (ch, ys) in per_channel.iter().enumerate() {
        for t in 0..len {
            y[t * channels + ch] = ys[t];
        }
    }
    y
}

struct ChunkScan {
    local: Vec<f64>,
    decay: Vec<f64>,
}

fn scan_channel_chunked(args: &ScanArgs, ch: usize, chunk: usize) -> Vec<f64> {
    let ScanDims { len, state, .. } = args.dims;
    let starts: Vec<usize> = (0..len).step_by(chunk).collect();

    let local: Vec<ChunkScan> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + chunk).min(len);
            let mut h = vec![0.0; state];
            let mut p = vec![1.0; state];
            let mut local = Vec::with_capacity((e - s) * state);
            let mut decay = Vec::with_capacity((e - s) * state);
            let channels = args.dims.channels;
            for t in s..e {
                let dt = args.delta[t * channels + ch];
                for n in 0..state {
                    h[n] = args.step(t, ch, n, h[n]);
                    p[n] *= (dt * args.a[ch * state + n]).exp();
                }
                local.extend_from_slice(&h);
                decay.extend_from_slice(&p);
            }
            ChunkScan { local, decay }
        })
        .collect();

    let mut carries = Vec::with_capacity(starts.len());
    let mut carry = vec![0.0; state];
    for cs in &local {
        carries.push(carry.clone());
        let last = cs.local.len() - state;
        for n in 0..state {
            carry[n] = cs.local[last + n] + cs.decay[last + n] * carry[n];
        }
    }

    let pieces: Vec<Vec<f64>> = starts
        .par_iter()
        .zip(local.par_iter())
        .zip(carries.par_iter())
        .map(|((&s, cs), carry)| {
            let steps = cs.local.len() / state;
            let mut out = Vec::with_capacity(steps);
            let mut h = vec![0.0; state];
            for i in 0..steps {
                for n in 0..state {
                    h[n] = cs.local[i * state + n] + cs.decay[i * state + n] * carry[n];
                }
                out.push(args.readout(s + i, ch, &h));
            }
            out
        })
        .collect();
    pieces.concat()
}

pub struct ScanGrads {
    pub u: Vec<f64>,
    pub delta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

/// Reverse-mode sweep given the stored states and the output gradient.
pub fn backward(args: &ScanArgs, states: &[f64], grad_y: &[f64]) -> ScanGrads {
    let ScanDims {
        len,
        channels,
        state,
    } = args.dims;
    let width = channels * state;
    let mut g = ScanGrads {
        u: vec![0.0; len * channels],
        delta: vec![0.0; len * channels],
        a: vec![0.0; channels * state],
        b: vec![0.0; len * state],
        c: vec![0.0; len * state],
        d: vec![0.0; channels],
    };
    for ch in 0..channels {
        // dL/dh_{t+1} · ā_{t+1}, carried backwards
        let mut carry = vec![0.0; state];
        for t in (0..len).rev() {
            let idx = t * channels + ch;
            let gy = grad_y[idx];
            let u = args.u[idx];
            let dt = args.delta[idx];
            g.d[ch] += gy * u;
            g.u[idx] += gy * args.d[ch];
            let h_t = &states[t * width + ch * state..t * width + (ch + 1) * state];
            for n in 0..state {
                let a = args.a[ch * state + n];
                let bn = args.b[t * state + n];
                let a_bar = (dt * a).exp();
                let h_prev = if t > 0 {
                    states[(t - 1) * width + ch * state + n]
                } else {
                    0.0
                };
                g.c[t * state + n] += gy * h_t[n];
                let gh = carry[n] + gy * args.c[t * state + n];
                let g_abar = gh * h_prev;
                let g_bbar = gh * u;
                g.delta[idx] += g_abar * a_bar * a + g_bbar * bn;
                g.a[ch * state + n] += g_abar * a_bar * dt;
                g.b[t * state + n] += g_bbar * dt;
                g.u[idx] += gh * dt * bn;
                carry[n] = gh * a_bar;
            }
        }
    }
    g
}

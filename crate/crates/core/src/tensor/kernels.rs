//! Raw slice kernels shared by the graph ops. Shapes are validated by callers.

/// C (m×n) = beta·C + A (m×k) · B (k×n), arbitrary element strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_off: usize,
    (rsa, csa): (usize, usize),
    b: &[f64],
    b_off: usize,
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    c_off: usize,
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta != 1.0 {
            for i in 0..m {
                for j in 0..n {
                    c[c_off + i * rsc + j * csc] *= beta;
                }
            }
        }
        return;
    }
    debug_assert!(a_off + (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(b_off + (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!(c_off + (m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the debug assertions above bound every access; callers derive
    // offsets and strides from validated shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr().add(a_off),
            rsa as isize,
            csa as isize,
            b.as_ptr().add(b_off),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr().add(c_off),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Row-major matmul: a (m×k) · b (k×n).
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    gemm(
        m,
        k,
        n,
        a,
        0,
        (k, 1),
        b,
        0,
        (n, 1),
        0.0,
        &mut out,
        0,
        (n, 1),
    );
    out
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub len_in: usize,
    pub len_out: usize,
    pub taps: usize,
    pub dilation: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    /// Output rows `t0..t1` that read input rows `t0 + offset..` for tap `j`.
    pub fn tap_range(&self, j: usize) -> Option<(usize, usize, usize)> {
        let offset = (j * self.dilation) as isize - self.pad_left as isize;
        let t0 = (-offset).max(0) as usize;
        let t1 = (self.len_out as isize).min(self.len_in as isize - offset);
        if t1 <= t0 as isize {
            return None;
        }
        let src0 = (t0 as isize + offset) as usize;
        Some((t0, t1 as usize, src0))
    }
}

/// Dense conv: signal (L×ci), kernel (co×ci×k), bias (co) → (L'×co).
pub(crate) fn conv1d_forward(
    g: ConvGeom,
    ci: usize,
    co: usize,
    signal: &[f64],
    kernel: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len_out * co);
    for _ in 0..g.len_out {
        out.extend_from_slice(bias);
    }
    let k = g.taps;
    for j in 0..k {
        if let Some((t0, t1, s0)) = g.tap_range(j) {
            gemm(
                t1 - t0,
                ci,
                co,
                signal,
                s0 * ci,
                (ci, 1),
                kernel,
                j,
                (k, ci * k),
                1.0,
                &mut out,
                t0 * co,
                (co, 1),
            );
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward(
    g: ConvGeom,
    ci: usize,
    co: usize,
    signal: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    mut grad_signal: Option<&mut [f64]>,
    mut grad_kernel: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
) {
    let k = g.taps;
    for j in 0..k {
        let Some((t0, t1, s0)) = g.tap_range(j) else {
            continue;
        };
        let rows = t1 - t0;
        if let Some(gs) = grad_signal.as_deref_mut() {
            gemm(
                rows,
                co,
                ci,
                grad_out,
                t0 * co,
                (co, 1),
                kernel,
                j,
                (ci * k, k),
                1.0,
                gs,
                s0 * ci,
                (ci, 1),
            );
        }
        if let Some(gk) = grad_kernel.as_deref_mut() {
            gemm(
                co,
                rows,
                ci,
                grad_out,
                t0 * co,
                (1, co),
                signal,
                s0 * ci,
                (ci, 1),
                1.0,
                gk,
                j,
                (ci * k, k),
            );
        }
    }
    if let Some(gb) = grad_bias {
        for row in grad_out.chunks_exact(co) {
            for (b, g) in gb.iter_mut().zip(row) {
                *b += g;
            }
        }
    }
}

/// Depthwise conv: signal (L×c), kernel (c×k), bias (c).
pub(crate) fn depthwise_forward(
    g: ConvGeom,
    c: usize,
    signal: &[f64],
    kernel: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.len_out * c);
    for _ in 0..g.len_out {
        out.extend_from_slice(bias);
    }
    for j in 0..g.taps {
        if let Some((t0, t1, s0)) = g.tap_range(j) {
            for (r, t) in (t0..t1).enumerate() {
                let src = &signal[(s0 + r) * c..(s0 + r + 1) * c];
                let dst = &mut out[t * c..(t + 1) * c];
                for ch in 0..c {
                    dst[ch] += src[ch] * kernel[ch * g.taps + j];
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn depthwise_backward(
    g: ConvGeom,
    c: usize,
    signal: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    mut grad_signal: Option<&mut [f64]>,
    mut grad_kernel: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
) {
    for j in 0..g.taps {
        let Some((t0, t1, s0)) = g.tap_range(j) else {
            continue;
        };
        for (r, t) in (t0..t1).enumerate() {
            let src = (s0 + r) * c;
            let go = &grad_out[t * c..(t + 1) * c];
            if let Some(gs) = grad_signal.as_deref_mut() {
                for ch in 0..c {
                    gs[src + ch] += go[ch] * kernel[ch * g.taps + j];
                }
            }
            if let Some(gk) = grad_kernel.as_deref_mut() {
                for ch in 0..c {
                    gk[ch * g.taps + j] += go[ch] * signal[src + ch];
                }
            }
        }
    }
    if let Some(gb) = grad_bias {
        for row in grad_out.chunks_exact(c) {
            for (b, g) in gb.iter_mut().zip(row) {
                *b += g;
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow for large |x|.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

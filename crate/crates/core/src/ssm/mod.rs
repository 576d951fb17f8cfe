//! State-space machinery: zero-order-hold discretization, the LTI
//! recurrence and its convolution kernel, and the input-dependent
//! selective scan.
//!
//! The state matrix is diagonal throughout, so every LTI quantity is a
//! length-N vector.

pub mod scan;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Continuous diagonal LTI system `h' = A h + B x`, `y = C h` with timescale Δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub delta: f64,
}

impl LtiParams {
    /// Validated constructor requiring every A entry < 0 and Δ > 0.
    pub fn stable(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, delta: f64) -> Result<Self> {
        if a.len() != b.len() || a.len() != c.len() || a.is_empty() {
            return Err(Error::dim(
                "lti_params",
                format!("A/B/C lengths {}/{}/{}", a.len(), b.len(), c.len()),
            ));
        }
        if let Some(x) = a.iter().find(|&&x| !(x < 0.0)) {
            return Err(Error::Domain(format!("unstable diagonal entry A = {x}")));
        }
        if !(delta > 0.0) {
            return Err(Error::Domain(format!(
                "timescale must be positive, got {delta}"
            )));
        }
        Ok(LtiParams { a, b, c, delta })
    }

    pub fn state_size(&self) -> usize {
        self.a.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLtiParams {
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
}

/// φ₁(z) = (eᶻ − 1)/z, with φ₁(0) = 1.
pub fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// Zero-order hold: Ā = exp(ΔA), B̄ = (ΔA)⁻¹(exp(ΔA) − I)·ΔB = Δ·φ₁(ΔA)·B.
pub fn discretize(p: &LtiParams) -> Result<DiscreteLtiParams> {
    if !(p.delta > 0.0) {
        return Err(Error::Domain(format!(
            "timescale must be positive, got {}",
            p.delta
        )));
    }
    if p.a.len() != p.b.len() {
        return Err(Error::dim("discretize", "A and B lengths differ"));
    }
    let a_bar = p.a.iter().map(|&a| (p.delta * a).exp()).collect();
    let b_bar =
        p.a.iter()
            .zip(&p.b)
            .map(|(&a, &b)| p.delta * phi1(p.delta * a) * b)
            .collect();
    Ok(DiscreteLtiParams { a_bar, b_bar })
}

/// hₜ = Ā hₜ₋₁ + B̄ xₜ, yₜ = C hₜ, with h₋₁ = 0.
pub fn lti_recurrence(d: &DiscreteLtiParams, c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_lti_dims(d, c)?;
    let mut h = vec![0.0; c.len()];
    let mut y = Vec::with_capacity(x.len());
    for &xt in x {
        let mut yt = 0.0;
        for n in 0..h.len() {
            h[n] = d.a_bar[n] * h[n] + d.b_bar[n] * xt;
            yt += c[n] * h[n];
        }
        y.push(yt);
    }
    Ok(y)
}

/// Taps K̄[i] = C·Āⁱ·B̄ of the equivalent causal convolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmKernel(pub Vec<f64>);

pub fn ssm_kernel(d: &DiscreteLtiParams, c: &[f64], len: usize) -> Result<SsmKernel> {
    check_lti_dims(d, c)?;
    if len == 0 {
        return Err(Error::Domain("kernel length must be at least 1".into()));
    }
    let mut power: Vec<f64> = d.b_bar.clone();
    let mut taps = Vec::with_capacity(len);
    for _ in 0..len {
        taps.push(c.iter().zip(&power).map(|(c, p)| c * p).sum());
        for (p, a) in power.iter_mut().zip(&d.a_bar) {
            *p *= a;
        }
    }
    Ok(SsmKernel(taps))
}

impl SsmKernel {
    /// yₜ = Σ_{i ≤ t} K̄[i]·xₜ₋ᵢ. The kernel must be at least as long as `x`.
    pub fn causal_convolve(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.0.len() < x.len() {
            return Err(Error::dim(
                "causal_convolve",
                format!("kernel of {} taps for {} samples", self.0.len(), x.len()),
            ));
        }
        Ok((0..x.len())
            .map(|t| (0..=t).map(|i| self.0[i] * x[t - i]).sum())
            .collect())
    }
}

fn check_lti_dims(d: &DiscreteLtiParams, c: &[f64]) -> Result<()> {
    if d.a_bar.len() != d.b_bar.len() || d.a_bar.len() != c.len() {
        return Err(Error::dim(
            "lti",
            format!(
                "Ā/B̄/C lengths {}/{}/{}",
                d.a_bar.len(),
                d.b_bar.len(),
                c.len()
            ),
        ));
    }
    Ok(())
}

/// Per-step selective-scan inputs for one sequence.
///
/// `delta` and `b`/`c` vary with time; `a` is the (negative) diagonal state
/// matrix per channel and `d_skip` the per-channel skip gain.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanInputs {
    pub delta: Tensor,
    pub a: Tensor,
    pub b: Tensor,
    pub c: Tensor,
    pub d_skip: Tensor,
}

impl ScanInputs {
    fn args<'a>(&'a self, u: &'a Tensor) -> Result<scan::ScanArgs<'a>> {
        let dims = scan::ScanDims::check(u, &self.delta, &self.a, &self.b, &self.c, &self.d_skip)?;
        if let Some(dt) = self.delta.data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Domain(format!(
                "scan timescale must be positive, got {dt}"
            )));
        }
        Ok(scan::ScanArgs {
            dims,
            u: u.data(),
            delta: self.delta.data(),
            a: self.a.data(),
            b: self.b.data(),
            c: self.c.data(),
            d: self.d_skip.data(),
        })
    }
}

/// Sequential selective scan of `u` (L×d_inner).
pub fn selective_scan_reference(inputs: &ScanInputs, u: &Tensor) -> Result<Tensor> {
    let args = inputs.args(u)?;
    let y = Tensor::new(u.shape().to_vec(), scan::forward_reference(&args))?;
    y.ensure_finite("selective_scan")?;
    Ok(y)
}

/// Chunk-parallel selective scan with the default chunk length.
pub fn selective_scan_fast(inputs: &ScanInputs, u: &Tensor) -> Result<Tensor> {
    selective_scan_chunked(inputs, u, scan::DEFAULT_CHUNK)
}

pub fn selective_scan_chunked(inputs: &ScanInputs, u: &Tensor, chunk: usize) -> Result<Tensor> {
    let args = inputs.args(u)?;
    let y = Tensor::new(u.shape().to_vec(), scan::forward_chunked(&args, chunk))?;
    y.ensure_finite("selective_scan")?;
    Ok(y)
}

/// Rank of the low-rank Δ projection for a given inner width.
pub fn dt_rank(d_inner: usize) -> usize {
    d_inner.div_ceil(16)
}

pub const DT_MIN: f64 = 1e-3;
pub const DT_MAX: f64 = 1e-1;

/// Learned selective-SSM parameters for one block.
///
/// Shapes: `a_log` d_inner×N (A = −exp(a_log)), `x_proj` d_inner×(r+2N)
/// mapping to [Δ_low | B | C], `dt_proj_weight` r×d_inner,
/// `dt_proj_bias` d_inner, `d_skip` d_inner.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectiveParams {
    pub a_log: Tensor,
    pub x_proj: Tensor,
    pub dt_proj_weight: Tensor,
    pub dt_proj_bias: Tensor,
    pub d_skip: Tensor,
}

impl SelectiveParams {
    /// S4D-real initialization: A[c, n] = −(n + 1), Δ bias placing
    /// softplus(bias) log-uniformly in [1e−3, 1e−1], small random B/C
    /// projections and unit skip gain.
    pub fn init_s4d_real<R: Rng>(d_inner: usize, state: usize, rng: &mut R) -> Self {
        let rank = dt_rank(d_inner);
        let a_log = (0..d_inner)
            .flat_map(|_| (0..state).map(|n| ((n + 1) as f64).ln()))
            .collect();
        let x_bound = 1.0 / (d_inner as f64).sqrt();
        let x_proj = (0..d_inner * (rank + 2 * state))
            .map(|_| rng.random_range(-x_bound..x_bound))
            .collect();
        let dt_bound = 1.0 / (rank as f64).sqrt();
        let dt_proj_weight = (0..rank * d_inner)
            .map(|_| rng.random_range(-dt_bound..dt_bound))
            .collect();
        let dt_proj_bias = (0..d_inner)
            .map(|_| {
                let log_dt = rng.random_range(DT_MIN.ln()..DT_MAX.ln());
                inverse_softplus(log_dt.exp())
            })
            .collect();
        SelectiveParams {
            a_log: Tensor::new(vec![d_inner, state], a_log).expect("a_log shape"),
            x_proj: Tensor::new(vec![d_inner, rank + 2 * state], x_proj).expect("x_proj shape"),
            dt_proj_weight: Tensor::new(vec![rank, d_inner], dt_proj_weight)
                .expect("dt_proj shape"),
            dt_proj_bias: Tensor::vector(dt_proj_bias),
            d_skip: Tensor::full(&[d_inner], 1.0),
        }
    }

    pub fn d_inner(&self) -> usize {
        self.a_log.shape()[0]
    }

    pub fn state_size(&self) -> usize {
        self.a_log.shape()[1]
    }

    /// A = −exp(a_log).
    pub fn a(&self) -> Tensor {
        let data = self.a_log.data().iter().map(|v| -v.exp()).collect();
        Tensor::new(self.a_log.shape().to_vec(), data).expect("same shape")
    }

    /// Compute the per-step scan inputs for `u` (L×d_inner).
    pub fn realize(&self, u: &Tensor) -> Result<ScanInputs> {
        let (len, d_inner) = u.dims2("realize")?;
        if d_inner != self.d_inner() {
            return Err(Error::dim(
                "realize",
                format!("input width {d_inner}, params expect {}", self.d_inner()),
            ));
        }
        let rank = self.dt_proj_weight.shape()[0];
        let n = self.state_size();
        let width = rank + 2 * n;
        let proj =
            crate::tensor::kernels::matmul(u.data(), self.x_proj.data(), len, d_inner, width);
        let mut low = Vec::with_capacity(len * rank);
        let mut b = Vec::with_capacity(len * n);
        let mut c = Vec::with_capacity(len * n);
        for row in proj.chunks_exact(width) {
            low.extend_from_slice(&row[..rank]);
            b.extend_from_slice(&row[rank..rank + n]);
            c.extend_from_slice(&row[rank + n..]);
        }
        let dt =
            crate::tensor::kernels::matmul(&low, self.dt_proj_weight.data(), len, rank, d_inner);
        let bias = self.dt_proj_bias.data();
        let delta = dt
            .iter()
            .enumerate()
            .map(|(i, v)| crate::tensor::kernels::softplus(v + bias[i % d_inner]))
            .collect();
        Ok(ScanInputs {
            delta: Tensor::new(vec![len, d_inner], delta)?,
            a: self.a(),
            b: Tensor::new(vec![len, n], b)?,
            c: Tensor::new(vec![len, n], c)?,
            d_skip: self.d_skip.clone(),
        })
    }
}

/// x such that softplus(x) = y, for y > 0.
pub fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn discretize_closed_form() {
        let p =
            LtiParams::stable(vec![-1.0], vec![1.0], vec![1.0], std::f64::consts::LN_2).unwrap();
        let d = discretize(&p).unwrap();
        assert!((d.a_bar[0] - 0.5).abs() < 1e-15);
        assert!((d.b_bar[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn discretize_zero_a_limit() {
        let p = LtiParams {
            a: vec![0.0],
            b: vec![2.0],
            c: vec![1.0],
            delta: 0.5,
        };
        let d = discretize(&p).unwrap();
        assert_eq!(d.a_bar[0], 1.0);
        assert_eq!(d.b_bar[0], 1.0);
    }

    #[test]
    fn discretize_small_delta() {
        let p = LtiParams::stable(vec![-1.0], vec![1.0], vec![1.0], 1e-8).unwrap();
        let d = discretize(&p).unwrap();
        assert!((d.a_bar[0] - (1.0 - 1e-8)).abs() < 1e-12);
        assert!((d.b_bar[0] - 1e-8).abs() < 1e-12);
    }

    #[test]
    fn discretize_rejects_nonpositive_delta() {
        let p = LtiParams {
            a: vec![-1.0],
            b: vec![1.0],
            c: vec![1.0],
            delta: 0.0,
        };
        assert!(matches!(discretize(&p), Err(Error::Domain(_))));
        assert!(LtiParams::stable(vec![0.0], vec![1.0], vec![1.0], 1.0).is_err());
        assert!(LtiParams::stable(vec![-1.0], vec![1.0], vec![1.0], -1.0).is_err());
    }

    #[test]
    fn recurrence_unrolled() {
        let d = DiscreteLtiParams {
            a_bar: vec![0.5],
            b_bar: vec![0.5],
        };
        let y = lti_recurrence(&d, &[1.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(y, vec![0.5, 0.75, 0.875]);
        assert_eq!(lti_recurrence(&d, &[1.0], &[0.0; 4]).unwrap(), vec![0.0; 4]);
        let zero_b = DiscreteLtiParams {
            a_bar: vec![0.5],
            b_bar: vec![0.0],
        };
        assert_eq!(
            lti_recurrence(&zero_b, &[1.0], &[3.0, -1.0]).unwrap(),
            vec![0.0; 2]
        );
    }

    #[test]
    fn kernel_powers() {
        let d = DiscreteLtiParams {
            a_bar: vec![0.5],
            b_bar: vec![0.5],
        };
        assert_eq!(ssm_kernel(&d, &[1.0], 3).unwrap().0, vec![0.5, 0.25, 0.125]);
        let memoryless = DiscreteLtiParams {
            a_bar: vec![0.0],
            b_bar: vec![2.0],
        };
        assert_eq!(
            ssm_kernel(&memoryless, &[1.5], 4).unwrap().0,
            vec![3.0, 0.0, 0.0, 0.0]
        );
        assert!(ssm_kernel(&d, &[1.0], 0).is_err());
    }

    #[test]
    fn s4d_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = SelectiveParams::init_s4d_real(8, 4, &mut rng);
        for c in 0..8 {
            let row: Vec<f64> = (0..4).map(|n| p.a().at2(c, n)).collect();
            for (n, v) in row.iter().enumerate() {
                assert!((v + (n + 1) as f64).abs() < 1e-12);
            }
        }
        for &b in p.dt_proj_bias.data() {
            let dt = crate::tensor::kernels::softplus(b);
            assert!(
                (DT_MIN * (1.0 - 1e-9)..=DT_MAX * (1.0 + 1e-9)).contains(&dt),
                "{dt}"
            );
        }
        assert_eq!(p.d_skip.data(), &[1.0; 8]);
        assert_eq!(p.x_proj.shape(), &[8, dt_rank(8) + 8]);
        assert_eq!(dt_rank(128), 8);
        assert_eq!(dt_rank(64), 4);
        assert_eq!(dt_rank(17), 2);
    }

    #[test]
    fn inverse_softplus_roundtrip() {
        for y in [1e-4, 1e-3, 0.05, 1.0, 20.0] {
            let x = inverse_softplus(y);
            assert!((crate::tensor::kernels::softplus(x) - y).abs() / y < 1e-10);
        }
    }
}

//! Complex-baseband system model: signal composition, uplink transmission,
//! coarse estimation, real/complex reshaping, QPSK mapping, and the NMSE/BER
//! metric definitions.
//!
//! Conventions used throughout the crate:
//! - `h` (downlink CSI) and `d` (uplink user data, UL-US) are row vectors,
//!   stored as `Array1<Complex64>` of lengths `N` and `M`.
//! - `g` (uplink CSI) is a column vector of length `N`.
//! - the received block `r` is `N x M`.
//! - noise is circular complex Gaussian; `sigma2` is the variance of a full
//!   complex entry, so real and imaginary parts carry `sigma2 / 2` each.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Physical-layer parameter bundle shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    /// Number of BS antennas; also the downlink-CSI length `N`.
    pub n_bs: usize,
    /// Frame length (UL-US length) `M`; must be a power of two.
    pub m_frame: usize,
    /// Power proportional coefficient in `[0, 1]`.
    pub rho: f64,
    /// Per-user transmit power.
    pub e_u: f64,
    /// Link-noise variance per complex entry.
    pub sigma2: f64,
}

impl LinkConfig {
    pub fn new(n_bs: usize, m_frame: usize, rho: f64, e_u: f64, sigma2: f64) -> Result<Self> {
        let cfg = Self { n_bs, m_frame, rho, e_u, sigma2 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bs < 1 || self.n_bs > self.m_frame {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= N <= M, got N={}, M={}",
                self.n_bs, self.m_frame
            )));
        }
        if !self.m_frame.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "M must be a power of two for Walsh codes, got {}",
                self.m_frame
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho must lie in [0,1], got {}", self.rho)));
        }
        if !(self.e_u > 0.0) {
            return Err(Error::InvalidConfig(format!("e_u must be positive, got {}", self.e_u)));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma2 must be non-negative, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// Replaces `sigma2` with the value implied by an SNR in dB.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.sigma2 = snr_to_sigma2(snr_db, self.e_u);
        self
    }

    /// Amplitude weight of the spread CSI component, `sqrt(rho * E / N)`.
    pub fn csi_scale(&self) -> f64 {
        (self.rho * self.e_u / self.n_bs as f64).sqrt()
    }

    /// Amplitude weight of the data component, `sqrt((1 - rho) * E)`.
    pub fn ulus_scale(&self) -> f64 {
        ((1.0 - self.rho) * self.e_u).sqrt()
    }
}

/// Walsh spreading matrix `P` (`M x N`, entries +-1) together with its
/// block-diagonal real lift `blockdiag(P, P)` (`2M x 2N`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingMatrix {
    p: Array2<f64>,
    p_lifted: Array2<f64>,
}

impl SpreadingMatrix {
    /// Builds the pair from a raw sign matrix, checking that every entry is
    /// exactly +-1 and that `P^T P = M * I` holds in integer arithmetic.
    pub fn from_signs(p: Array2<f64>) -> Result<Self> {
        let (m, n) = p.dim();
        if n < 1 || n > m {
            return Err(Error::InvalidConfig(format!(
                "spreading matrix needs 1 <= N <= M, got {m} x {n}"
            )));
        }
        if p.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidConfig("spreading matrix entries must be +-1".into()));
        }
        let signs: Vec<i64> = p.iter().map(|&v| v as i64).collect();
        for a in 0..n {
            for b in a..n {
                let dot: i64 = (0..m).map(|k| signs[k * n + a] * signs[k * n + b]).sum();
                let want = if a == b { m as i64 } else { 0 };
                if dot != want {
                    return Err(Error::InvalidConfig(format!(
                        "columns {a} and {b} are not orthogonal: P^T P entry {dot}, want {want}"
                    )));
                }
            }
        }
        let p_lifted = Self::lift(&p);
        Ok(Self { p, p_lifted })
    }

    fn lift(p: &Array2<f64>) -> Array2<f64> {
        let (m, n) = p.dim();
        let mut out = Array2::zeros((2 * m, 2 * n));
        for i in 0..m {
            for j in 0..n {
                out[[i, j]] = p[[i, j]];
                out[[m + i, n + j]] = p[[i, j]];
            }
        }
        out
    }

    pub fn p(&self) -> &Array2<f64> {
        &self.p
    }

    /// The `2M x 2N` block-diagonal lift used by the real-valued pipeline.
    pub fn lifted(&self) -> &Array2<f64> {
        &self.p_lifted
    }

    /// Code length `M`.
    pub fn code_len(&self) -> usize {
        self.p.nrows()
    }

    /// Number of codes `N`.
    pub fn n_codes(&self) -> usize {
        self.p.ncols()
    }
}

/// One transmission instance.
#[derive(Debug, Clone)]
pub struct Frame {
    /// Downlink CSI, row vector of length `N`.
    pub h: Array1<Complex64>,
    /// Uplink CSI, column vector of length `N`.
    pub g: Array1<Complex64>,
    /// Bernoulli source bits, length `2M`.
    pub bits: Vec<u8>,
    /// QPSK UL-US, row vector of length `M`, unit symbol energy.
    pub d: Array1<Complex64>,
    /// Composed transmit signal, length `M`.
    pub x: Array1<Complex64>,
    /// Received block, `N x M`.
    pub r: Array2<Complex64>,
}

/// Network-facing real-valued triple for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSample {
    /// Re/Im stack of the coarse estimate, length `2M`.
    pub x_tilde: Array1<f64>,
    /// Re/Im stack of the true downlink CSI, length `2N`.
    pub h_label: Array1<f64>,
    /// Re/Im stack of the true UL-US, length `2M`.
    pub d_label: Array1<f64>,
}

/// Composes the transmit signal: `sqrt(rho E / N) * h P^T + sqrt((1-rho) E) * d`.
pub fn spread_superimpose(
    h: &Array1<Complex64>,
    d: &Array1<Complex64>,
    p: &SpreadingMatrix,
    cfg: &LinkConfig,
) -> Result<Array1<Complex64>> {
    let (m, n) = p.p().dim();
    if h.len() != n || d.len() != m || n != cfg.n_bs || m != cfg.m_frame {
        return Err(Error::DimensionMismatch(format!(
            "spread_superimpose: h={}, d={}, P={}x{}, cfg N={}, M={}",
            h.len(),
            d.len(),
            m,
            n,
            cfg.n_bs,
            cfg.m_frame
        )));
    }
    let c_h = cfg.csi_scale();
    let c_d = cfg.ulus_scale();
    let pm = p.p();
    let mut x = Array1::zeros(m);
    for j in 0..m {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            acc += h[i] * pm[[j, i]];
        }
        x[j] = c_h * acc + c_d * d[j];
    }
    Ok(x)
}

/// Sends `x` over the uplink: returns `g x + noise` with i.i.d. circular
/// complex Gaussian noise of per-entry variance `sigma2`.
pub fn uplink_transmit<R: Rng + ?Sized>(
    x: &Array1<Complex64>,
    g: &Array1<Complex64>,
    sigma2: f64,
    rng: &mut R,
) -> Result<Array2<Complex64>> {
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidConfig(format!("sigma2 must be non-negative, got {sigma2}")));
    }
    let n = g.len();
    let m = x.len();
    let comp_std = (sigma2 / 2.0).sqrt();
    let mut r = Array2::zeros((n, m));
    for a in 0..n {
        for j in 0..m {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            r[[a, j]] = g[a] * x[j] + Complex64::new(re * comp_std, im * comp_std);
        }
    }
    Ok(r)
}

/// Removes the uplink channel with the pseudo-inverse `g^H / ||g||^2`,
/// yielding `x + g^dagger * noise`.
pub fn coarse_estimate(r: &Array2<Complex64>, g: &Array1<Complex64>) -> Result<Array1<Complex64>> {
    let (n, m) = r.dim();
    if g.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "coarse_estimate: r is {n} x {m} but g has length {}",
            g.len()
        )));
    }
    let g_norm2: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    if g_norm2 <= 0.0 {
        return Err(Error::Singular("coarse_estimate: uplink channel vector is zero".into()));
    }
    let mut x_hat = Array1::zeros(m);
    for j in 0..m {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..n {
            acc += g[a].conj() * r[[a, j]];
        }
        x_hat[j] = acc / g_norm2;
    }
    Ok(x_hat)
}

/// Stacks a complex vector as `[Re(v), Im(v)]`.
pub fn complex_to_real_stack(v: ArrayView1<'_, Complex64>) -> Array1<f64> {
    let l = v.len();
    let mut w = Array1::zeros(2 * l);
    for (i, z) in v.iter().enumerate() {
        w[i] = z.re;
        w[l + i] = z.im;
    }
    w
}

/// Inverse of [`complex_to_real_stack`]; rejects odd-length input.
pub fn real_to_complex(w: ArrayView1<'_, f64>) -> Result<Array1<Complex64>> {
    if w.len() % 2 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "real_to_complex needs an even length, got {}",
            w.len()
        )));
    }
    let l = w.len() / 2;
    Ok(Array1::from_iter((0..l).map(|i| Complex64::new(w[i], w[l + i]))))
}

/// Noise variance for a target SNR in dB: `sigma2 = E * 10^(-snr/10)`.
pub fn snr_to_sigma2(snr_db: f64, e_u: f64) -> f64 {
    e_u * 10f64.powf(-snr_db / 10.0)
}

/// Normalized MSE of one estimate against one truth vector.
pub fn nmse_sample(truth: ArrayView1<'_, f64>, est: ArrayView1<'_, f64>) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::DimensionMismatch(format!(
            "nmse: truth has length {}, estimate {}",
            truth.len(),
            est.len()
        )));
    }
    let denom: f64 = truth.iter().map(|v| v * v).sum();
    if denom <= 0.0 {
        return Err(Error::Singular("nmse: zero-norm truth vector".into()));
    }
    let num: f64 = truth.iter().zip(est.iter()).map(|(t, e)| (t - e) * (t - e)).sum();
    Ok(num / denom)
}

/// Batch NMSE: mean over rows of `||truth - est||^2 / ||truth||^2`.
pub fn nmse(truth: &Array2<f64>, est: &Array2<f64>) -> Result<f64> {
    if truth.dim() != est.dim() {
        return Err(Error::DimensionMismatch(format!(
            "nmse: truth is {:?}, estimate {:?}",
            truth.dim(),
            est.dim()
        )));
    }
    if truth.nrows() == 0 {
        return Err(Error::InvalidConfig("nmse: empty batch".into()));
    }
    let mut acc = 0.0;
    for (t, e) in truth.axis_iter(Axis(0)).zip(est.axis_iter(Axis(0))) {
        acc += nmse_sample(t, e)?;
    }
    Ok(acc / truth.nrows() as f64)
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Gray-mapped unit-energy QPSK. Bit pair `(a, b)` maps the first bit to the
/// imaginary sign and the second to the real sign:
/// `00 -> (+1+j)/sqrt(2)`, `01 -> (-1+j)/sqrt(2)`,
/// `11 -> (-1-j)/sqrt(2)`, `10 -> (+1-j)/sqrt(2)`.
pub fn qpsk_modulate(bits: &[u8]) -> Result<Array1<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "qpsk_modulate needs an even bit count, got {}",
            bits.len()
        )));
    }
    Ok(Array1::from_iter(bits.chunks_exact(2).map(|pair| {
        let re = if pair[1] == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
        let im = if pair[0] == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
        Complex64::new(re, im)
    })))
}

/// Per-quadrant hard decision, inverse of [`qpsk_modulate`] on clean symbols.
pub fn qpsk_demodulate(symbols: ArrayView1<'_, Complex64>) -> Vec<u8> {
    let mut bits = Vec::with_capacity(2 * symbols.len());
    for z in symbols.iter() {
        bits.push(if z.im < 0.0 { 1 } else { 0 });
        bits.push(if z.re < 0.0 { 1 } else { 0 });
    }
    bits
}

/// Fraction of differing bits.
pub fn ber(a: &[u8], b: &[u8]) -> f64 {
    assert_eq!(a.len(), b.len(), "ber: bit sequences must have equal length");
    if a.is_empty() {
        return 0.0;
    }
    let errs = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
    errs as f64 / a.len() as f64
}

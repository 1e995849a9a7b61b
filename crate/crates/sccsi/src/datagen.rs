//! Reproducible generation of spreading codes, channels, bits, frames, and
//! real-valued training/testing datasets.
//!
//! Every frame is generated from its own deterministic RNG stream derived
//! from `(base_seed, frame_index)` (see [`frame_seed`]), so datasets are a
//! pure function of `(count, link, snr_db, seed)` and generation can be
//! sharded across workers without changing the result: a single-threaded run
//! reproduces any shard by reusing the same per-frame seeds.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::link::{
    complex_to_real_stack, coarse_estimate, qpsk_modulate, snr_to_sigma2, spread_superimpose,
    uplink_transmit, Frame, LinkConfig, RealSample, SpreadingMatrix,
};

/// Ordered collection of network-facing samples drawn at one SNR.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<RealSample>,
    pub link: LinkConfig,
    pub snr_db: f64,
    pub seed: u64,
    pub count: usize,
}

impl Dataset {
    /// Inputs as a `count x 2M` matrix (row per sample).
    pub fn x_matrix(&self) -> Array2<f64> {
        stack_rows(self.samples.iter().map(|s| &s.x_tilde))
    }

    /// CSI labels as a `count x 2N` matrix.
    pub fn h_matrix(&self) -> Array2<f64> {
        stack_rows(self.samples.iter().map(|s| &s.h_label))
    }

    /// UL-US labels as a `count x 2M` matrix.
    pub fn d_matrix(&self) -> Array2<f64> {
        stack_rows(self.samples.iter().map(|s| &s.d_label))
    }
}

fn stack_rows<'a, I: ExactSizeIterator<Item = &'a Array1<f64>>>(rows: I) -> Array2<f64> {
    let n = rows.len();
    let mut out: Option<Array2<f64>> = None;
    for (i, row) in rows.enumerate() {
        let m = out.get_or_insert_with(|| Array2::zeros((n, row.len())));
        m.row_mut(i).assign(row);
    }
    out.unwrap_or_else(|| Array2::zeros((0, 0)))
}

/// First `n` columns of the order-`m` Sylvester Walsh-Hadamard matrix.
pub fn walsh_matrix(m: usize, n: usize) -> Result<SpreadingMatrix> {
    if m == 0 || !m.is_power_of_two() {
        return Err(Error::InvalidConfig(format!("Walsh code length must be a power of two, got {m}")));
    }
    if n < 1 || n > m {
        return Err(Error::InvalidConfig(format!("need 1 <= n <= m, got n={n}, m={m}")));
    }
    // Sylvester recursion on sign entries: H_1 = [1], H_2k = [[H, H], [H, -H]].
    let mut h = vec![1i8];
    let mut size = 1;
    while size < m {
        let mut next = vec![0i8; 4 * size * size];
        for i in 0..size {
            for j in 0..size {
                let v = h[i * size + j];
                next[i * 2 * size + j] = v;
                next[i * 2 * size + size + j] = v;
                next[(size + i) * 2 * size + j] = v;
                next[(size + i) * 2 * size + size + j] = -v;
            }
        }
        h = next;
        size *= 2;
    }
    let p = Array2::from_shape_fn((m, n), |(i, j)| h[i * m + j] as f64);
    SpreadingMatrix::from_signs(p)
}

/// i.i.d. circular complex Gaussian vector with per-entry variance `1/n`.
pub fn gen_channel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array1<Complex64> {
    let comp_std = (1.0 / (2.0 * n as f64)).sqrt();
    Array1::from_iter((0..n).map(|_| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * comp_std, im * comp_std)
    }))
}

/// Draws one frame and its network-facing real triple.
///
/// Draw order within the RNG stream is fixed: bits, h, g, noise.
pub fn gen_frame<R: Rng + ?Sized>(
    cfg: &LinkConfig,
    p: &SpreadingMatrix,
    rng: &mut R,
) -> Result<(Frame, RealSample)> {
    cfg.validate()?;
    let bits: Vec<u8> = (0..2 * cfg.m_frame).map(|_| rng.random_range(0..2u8)).collect();
    let d = qpsk_modulate(&bits)?;
    let h = gen_channel(cfg.n_bs, rng);
    let g = gen_channel(cfg.n_bs, rng);
    let x = spread_superimpose(&h, &d, p, cfg)?;
    let r = uplink_transmit(&x, &g, cfg.sigma2, rng)?;
    let x_hat = coarse_estimate(&r, &g)?;
    let sample = RealSample {
        x_tilde: complex_to_real_stack(x_hat.view()),
        h_label: complex_to_real_stack(h.view()),
        d_label: complex_to_real_stack(d.view()),
    };
    Ok((Frame { h, g, bits, d, x, r }, sample))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the RNG stream for frame `index` under `base` -- the documented
/// sharding scheme: `splitmix64(base XOR splitmix64(index + 1))`.
pub fn frame_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(1)))
}

/// RNG for one frame under the sharding scheme.
pub fn frame_rng(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(frame_seed(base, index))
}

/// Generates `count` independent frames at the given SNR, reproducibly from
/// `seed`. `cfg.sigma2` is ignored and replaced by the SNR-implied value.
pub fn gen_dataset(count: usize, cfg: &LinkConfig, snr_db: f64, seed: u64) -> Result<Dataset> {
    if count < 1 {
        return Err(Error::InvalidConfig("dataset count must be at least 1".into()));
    }
    let link = LinkConfig { sigma2: snr_to_sigma2(snr_db, cfg.e_u), ..*cfg };
    link.validate()?;
    let p = walsh_matrix(link.m_frame, link.n_bs)?;
    let samples: Vec<RealSample> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = frame_rng(seed, i);
            gen_frame(&link, &p, &mut rng).map(|(_, s)| s)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { samples, link, snr_db, seed, count })
}

/// Generates `count` full frames (with channel state) at the given SNR; used
/// by receiver evaluation where `g` and the source bits are needed.
pub fn gen_frames(count: usize, link: &LinkConfig, p: &SpreadingMatrix, seed: u64) -> Result<Vec<(Frame, RealSample)>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = frame_rng(seed, i);
            gen_frame(link, p, &mut rng)
        })
        .collect()
}

const DATASET_MAGIC: &[u8; 6] = b"SCCSI1";

/// Writes the flat binary container (little-endian f64 payload) plus a
/// sidecar text manifest at `<path>.manifest`.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&(ds.link.n_bs as u32).to_le_bytes())?;
    w.write_all(&(ds.link.m_frame as u32).to_le_bytes())?;
    w.write_all(&ds.link.rho.to_le_bytes())?;
    w.write_all(&ds.link.e_u.to_le_bytes())?;
    w.write_all(&ds.snr_db.to_le_bytes())?;
    w.write_all(&(ds.count as u64).to_le_bytes())?;
    w.write_all(&ds.seed.to_le_bytes())?;
    for s in &ds.samples {
        for v in s.x_tilde.iter().chain(s.h_label.iter()).chain(s.d_label.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;

    let manifest = format!(
        "format: SCCSI1 flat binary, little-endian f64 samples\n\
         layout: 6-byte magic, u32 n, u32 m, f64 rho, f64 e_u, f64 snr_db, u64 count, u64 seed,\n\
         then count blocks of (x_tilde[2m], h_label[2n], d_label[2m])\n\
         n: {}\nm: {}\nrho: {}\ne_u: {}\nsnr_db: {}\ncount: {}\nseed: {}\n",
        ds.link.n_bs, ds.link.m_frame, ds.link.rho, ds.link.e_u, ds.snr_db, ds.count, ds.seed
    );
    let mut manifest_path = path.as_os_str().to_owned();
    manifest_path.push(".manifest");
    std::fs::write(manifest_path, manifest)?;
    Ok(())
}

fn read_exact_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_exact_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_exact_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Reads a container written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format(format!(
            "bad dataset magic {:?}, expected {:?}",
            magic, DATASET_MAGIC
        )));
    }
    let n = read_exact_u32(&mut r)? as usize;
    let m = read_exact_u32(&mut r)? as usize;
    let rho = read_exact_f64(&mut r)?;
    let e_u = read_exact_f64(&mut r)?;
    let snr_db = read_exact_f64(&mut r)?;
    let count = read_exact_u64(&mut r)? as usize;
    let seed = read_exact_u64(&mut r)?;
    let link = LinkConfig::new(n, m, rho, e_u, snr_to_sigma2(snr_db, e_u))
        .map_err(|e| Error::Format(format!("dataset header invalid: {e}")))?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut read_vec = |len: usize| -> Result<Array1<f64>> {
            let mut v = Array1::zeros(len);
            for i in 0..len {
                v[i] = read_exact_f64(&mut r)?;
            }
            Ok(v)
        };
        samples.push(RealSample {
            x_tilde: read_vec(2 * m)?,
            h_label: read_vec(2 * n)?,
            d_label: read_vec(2 * m)?,
        });
    }
    // Trailing bytes mean the header lied about the sample count.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("dataset has trailing bytes beyond declared count".into()));
    }
    Ok(Dataset { samples, link, snr_db, seed, count })
}

//! Versioned binary checkpoints.
//!
//! Byte layout (all integers and floats little-endian):
//!
//! ```text
//! magic   7 bytes  "SCCSIM1"
//! version u32      currently 1
//! n       u32      BS antennas / CSI length
//! m       u32      frame length
//! link    f64 x3   rho, e_u, sigma2 (training-time noise variance)
//! meta    f64, u64, u64         train_snr_db, seed, dataset_size
//! hyper   f64 x5, u64, u64      lr, beta1, beta2, adam_eps, l2_lambda,
//!                               batch_size, max_iters
//! p_lifted f64 x (2m * 2n)      row-major
//! subnets: CSI-NET1, DET-NET1, CSI-NET2, DET-NET2, each as
//!   w1 (hidden*in), b1 (hidden), w2 (out*hidden), b2 (out),
//!   bn_in:     gamma, beta, running_mean, running_var (in each), momentum, eps
//!   bn_hidden: gamma, beta, running_mean, running_var (hidden each), momentum, eps
//! ```
//!
//! CSI subnets have in = out = 2N, hidden = 16N; detection subnets use 2M
//! and 16M. A reload therefore reconstructs every tensor shape from (n, m)
//! alone, and any size inconsistency surfaces as a format error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::link::LinkConfig;
use crate::nn::{BatchNormState, SubnetParams, TrainHyper};
use crate::unfolded::{TrainMeta, UnfoldedModel};

const MAGIC: &[u8; 7] = b"SCCSIM1";
const VERSION: u32 = 1;

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn slice(&mut self, v: &[f64]) -> Result<()> {
        for x in v {
            self.f64(*x)?;
        }
        Ok(())
    }
    fn bn(&mut self, bn: &BatchNormState) -> Result<()> {
        self.slice(bn.gamma.as_slice().unwrap())?;
        self.slice(bn.beta.as_slice().unwrap())?;
        self.slice(bn.running_mean.as_slice().unwrap())?;
        self.slice(bn.running_var.as_slice().unwrap())?;
        self.f64(bn.momentum)?;
        self.f64(bn.eps)
    }
    fn subnet(&mut self, net: &SubnetParams) -> Result<()> {
        self.slice(net.w1.as_slice().unwrap())?;
        self.slice(net.b1.as_slice().unwrap())?;
        self.slice(net.w2.as_slice().unwrap())?;
        self.slice(net.b2.as_slice().unwrap())?;
        self.bn(&net.bn_in)?;
        self.bn(&net.bn_hidden)
    }
}

/// Writes a lossless checkpoint; `save -> load -> save` is byte-identical.
pub fn save_model(model: &UnfoldedModel, path: &Path) -> Result<()> {
    model.validate().map_err(|e| Error::InvalidConfig(format!("refusing to save: {e}")))?;
    let mut w = Writer { inner: BufWriter::new(File::create(path)?) };
    w.inner.write_all(MAGIC)?;
    w.u32(VERSION)?;
    w.u32(model.link.n_bs as u32)?;
    w.u32(model.link.m_frame as u32)?;
    w.f64(model.link.rho)?;
    w.f64(model.link.e_u)?;
    w.f64(model.link.sigma2)?;
    w.f64(model.train_meta.train_snr_db)?;
    w.u64(model.train_meta.seed)?;
    w.u64(model.train_meta.dataset_size as u64)?;
    let h = &model.train_meta.hyper;
    w.f64(h.lr)?;
    w.f64(h.beta1)?;
    w.f64(h.beta2)?;
    w.f64(h.adam_eps)?;
    w.f64(h.l2_lambda)?;
    w.u64(h.batch_size as u64)?;
    w.u64(h.max_iters as u64)?;
    w.slice(model.p_lifted.as_slice().unwrap())?;
    for net in [&model.csi_net1, &model.det_net1, &model.csi_net2, &model.det_net2] {
        w.subnet(net)?;
    }
    w.inner.flush()?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn vec1(&mut self, len: usize) -> Result<Array1<f64>> {
        let mut v = Array1::zeros(len);
        for i in 0..len {
            v[i] = self.f64()?;
        }
        Ok(v)
    }
    fn mat(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let mut m = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                m[[i, j]] = self.f64()?;
            }
        }
        Ok(m)
    }
    fn bn(&mut self, features: usize) -> Result<BatchNormState> {
        let gamma = self.vec1(features)?;
        let beta = self.vec1(features)?;
        let running_mean = self.vec1(features)?;
        let running_var = self.vec1(features)?;
        let momentum = self.f64()?;
        let eps = self.f64()?;
        if !(eps > 0.0) || running_var.iter().any(|&v| v < 0.0) {
            return Err(Error::Format("checkpoint carries invalid batch-norm state".into()));
        }
        Ok(BatchNormState { gamma, beta, running_mean, running_var, momentum, eps })
    }
    fn subnet(&mut self, input: usize, hidden: usize, output: usize) -> Result<SubnetParams> {
        Ok(SubnetParams {
            w1: self.mat(hidden, input)?,
            b1: self.vec1(hidden)?,
            w2: self.mat(output, hidden)?,
            b2: self.vec1(output)?,
            bn_in: self.bn(input)?,
            bn_hidden: self.bn(hidden)?,
        })
    }
}

/// Reads a checkpoint written by [`save_model`].
pub fn load_model(path: &Path) -> Result<UnfoldedModel> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };
    let mut magic = [0u8; 7];
    r.inner.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}, expected {MAGIC:?}")));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let n = r.u32()? as usize;
    let m = r.u32()? as usize;
    let rho = r.f64()?;
    let e_u = r.f64()?;
    let sigma2 = r.f64()?;
    let link = LinkConfig::new(n, m, rho, e_u, sigma2)
        .map_err(|e| Error::Format(format!("checkpoint header invalid: {e}")))?;
    let train_snr_db = r.f64()?;
    let seed = r.u64()?;
    let dataset_size = r.u64()? as usize;
    let hyper = TrainHyper {
        lr: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        adam_eps: r.f64()?,
        l2_lambda: r.f64()?,
        batch_size: r.u64()? as usize,
        max_iters: r.u64()? as usize,
    };
    let p_lifted = r.mat(2 * m, 2 * n)?;
    let csi_net1 = r.subnet(2 * n, 16 * n, 2 * n)?;
    let det_net1 = r.subnet(2 * m, 16 * m, 2 * m)?;
    let csi_net2 = r.subnet(2 * n, 16 * n, 2 * n)?;
    let det_net2 = r.subnet(2 * m, 16 * m, 2 * m)?;

    // A truncated file fails above with UnexpectedEof; trailing garbage
    // means the dimension header is inconsistent with the payload.
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(Error::Format(
            "checkpoint has trailing bytes beyond the declared tensors".into(),
        ));
    }

    let model = UnfoldedModel {
        csi_net1,
        det_net1,
        csi_net2,
        det_net2,
        link,
        p_lifted,
        train_meta: TrainMeta { train_snr_db, seed, dataset_size, hyper },
    };
    model.validate().map_err(|e| Error::Format(format!("checkpoint inconsistent: {e}")))?;
    Ok(model)
}

//! Four-subnet multi-task receiver and its subnet-by-subnet training.
//!
//! The network unfolds two iterations of the estimate-and-cancel receiver:
//! CSI-NET1, DET-NET1, CSI-NET2, and DET-NET2 are cascaded, with the
//! parameter-free interference-reduction steps (despreading and the two
//! cancellation formulas) inserted between them as fixed expert knowledge.
//! The input is the real-stacked coarse estimate `x~`; neither the uplink
//! channel nor the noise variance is ever given to the network.
//!
//! Training runs one stage at a time: the subnet under training uses
//! batch-statistics normalization, while every earlier subnet stays frozen
//! (parameters *and* running statistics) and is evaluated in inference mode.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::link::{LinkConfig, SpreadingMatrix};
use crate::nn::{adam_step, mse_grad, mse_loss, AdamState, SubnetKind, SubnetParams, TrainHyper};

/// Provenance of a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMeta {
    pub train_snr_db: f64,
    pub seed: u64,
    pub dataset_size: usize,
    pub hyper: TrainHyper,
}

/// The ordered subnet quadruple plus the link it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedModel {
    pub csi_net1: SubnetParams,
    pub det_net1: SubnetParams,
    pub csi_net2: SubnetParams,
    pub det_net2: SubnetParams,
    pub link: LinkConfig,
    /// Block-diagonal spreading lift, `2M x 2N`.
    pub p_lifted: Array2<f64>,
    pub train_meta: TrainMeta,
}

/// The four training stages, in cascade order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Csi1,
    Det1,
    Csi2,
    Det2,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Csi1, Stage::Det1, Stage::Csi2, Stage::Det2];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Csi1 => "CSI-NET1",
            Stage::Det1 => "DET-NET1",
            Stage::Csi2 => "CSI-NET2",
            Stage::Det2 => "DET-NET2",
        }
    }
}

impl UnfoldedModel {
    /// Fresh model with the prescribed layer sizes and initialization, drawn
    /// from a seeded stream in cascade order.
    pub fn init(link: LinkConfig, p: &SpreadingMatrix, seed: u64) -> Result<Self> {
        link.validate()?;
        if p.code_len() != link.m_frame || p.n_codes() != link.n_bs {
            return Err(Error::DimensionMismatch(format!(
                "spreading matrix is {}x{}, link expects {}x{}",
                p.code_len(),
                p.n_codes(),
                link.m_frame,
                link.n_bs
            )));
        }
        let mut rng = crate::datagen::frame_rng(seed, u64::MAX - 1);
        let n = link.n_bs;
        let m = link.m_frame;
        Ok(Self {
            csi_net1: SubnetParams::init(SubnetKind::Csi { n }, &mut rng),
            det_net1: SubnetParams::init(SubnetKind::Det { m }, &mut rng),
            csi_net2: SubnetParams::init(SubnetKind::Csi { n }, &mut rng),
            det_net2: SubnetParams::init(SubnetKind::Det { m }, &mut rng),
            link,
            p_lifted: p.lifted().clone(),
            // dataset_size 0 marks a model that has not been trained yet.
            train_meta: TrainMeta {
                train_snr_db: 0.0,
                seed,
                dataset_size: 0,
                hyper: TrainHyper::default(),
            },
        })
    }

    /// Checks subnet dimensions and the lift against the link config.
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        let n = self.link.n_bs;
        let m = self.link.m_frame;
        for (name, net, size) in [
            ("CSI-NET1", &self.csi_net1, n),
            ("DET-NET1", &self.det_net1, m),
            ("CSI-NET2", &self.csi_net2, n),
            ("DET-NET2", &self.det_net2, m),
        ] {
            if net.input_dim() != 2 * size
                || net.hidden_dim() != 16 * size
                || net.output_dim() != 2 * size
            {
                return Err(Error::DimensionMismatch(format!(
                    "{name}: layers {}/{}/{} do not match the 2x/16x/2x rule for size {size}",
                    net.input_dim(),
                    net.hidden_dim(),
                    net.output_dim()
                )));
            }
        }
        if self.p_lifted.dim() != (2 * m, 2 * n) {
            return Err(Error::DimensionMismatch(format!(
                "lifted spreading matrix is {:?}, expected ({}, {})",
                self.p_lifted.dim(),
                2 * m,
                2 * n
            )));
        }
        let signs: Vec<i64> = self.p_lifted.iter().map(|&v| v as i64).collect();
        let cols = 2 * n;
        for a in 0..cols {
            for b in a..cols {
                let dot: i64 = (0..2 * m).map(|k| signs[k * cols + a] * signs[k * cols + b]).sum();
                let want = if a == b { m as i64 } else { 0 };
                if dot != want {
                    return Err(Error::InvalidConfig(
                        "lifted spreading matrix violates code orthogonality".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn subnet(&self, stage: Stage) -> &SubnetParams {
        match stage {
            Stage::Csi1 => &self.csi_net1,
            Stage::Det1 => &self.det_net1,
            Stage::Csi2 => &self.csi_net2,
            Stage::Det2 => &self.det_net2,
        }
    }

    fn subnet_mut(&mut self, stage: Stage) -> &mut SubnetParams {
        match stage {
            Stage::Csi1 => &mut self.csi_net1,
            Stage::Det1 => &mut self.det_net1,
            Stage::Csi2 => &mut self.csi_net2,
            Stage::Det2 => &mut self.det_net2,
        }
    }

    /// Input of the given stage's subnet for a batch of `x~` rows, obtained
    /// by running every earlier subnet frozen in inference mode.
    pub fn stage_input(&self, stage: Stage, x: &Array2<f64>) -> Result<Array2<f64>> {
        let link = self.link;
        let t1 = despread_real_batch(x, &self.p_lifted);
        if stage == Stage::Csi1 {
            return Ok(t1);
        }
        let h1 = self.csi_net1.forward_infer(&t1)?;
        let d1_in = reduce_csi_batch(x, &h1, &self.p_lifted, &link);
        if stage == Stage::Det1 {
            return Ok(d1_in);
        }
        let d1 = self.det_net1.forward_infer(&d1_in)?;
        let h2_in = reduce_ulus_batch(x, &d1, &self.p_lifted, &link);
        if stage == Stage::Csi2 {
            return Ok(h2_in);
        }
        let h2 = self.csi_net2.forward_infer(&h2_in)?;
        Ok(reduce_csi_batch(x, &h2, &self.p_lifted, &link))
    }

    /// Full inference pass: the final CSI estimate (`B x 2N`) and UL-US
    /// estimate (`B x 2M`).
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let trace = self.forward_trace(x)?;
        Ok((trace.h_hat2, trace.d_hat2))
    }

    /// Inference pass exposing every stage input and output.
    pub fn forward_trace(&self, x: &Array2<f64>) -> Result<ForwardTrace> {
        self.trace_with_link(x, &self.link)
    }

    /// Inference under a different operating point (e.g. a test-time power
    /// split): the interference-reduction constants come from `link`, which
    /// the receiver knows, while the subnet weights stay as trained.
    pub fn forward_with_link(
        &self,
        x: &Array2<f64>,
        link: &LinkConfig,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        if link.n_bs != self.link.n_bs || link.m_frame != self.link.m_frame {
            return Err(Error::DimensionMismatch(format!(
                "operating link is ({}, {}), model expects ({}, {})",
                link.n_bs, link.m_frame, self.link.n_bs, self.link.m_frame
            )));
        }
        let trace = self.trace_with_link(x, link)?;
        Ok((trace.h_hat2, trace.d_hat2))
    }

    fn trace_with_link(&self, x: &Array2<f64>, link: &LinkConfig) -> Result<ForwardTrace> {
        let despread_input = despread_real_batch(x, &self.p_lifted);
        let h_hat1 = self.csi_net1.forward_infer(&despread_input)?;
        let det1_input = reduce_csi_batch(x, &h_hat1, &self.p_lifted, link);
        let d_hat1 = self.det_net1.forward_infer(&det1_input)?;
        let csi2_input = reduce_ulus_batch(x, &d_hat1, &self.p_lifted, link);
        let h_hat2 = self.csi_net2.forward_infer(&csi2_input)?;
        let det2_input = reduce_csi_batch(x, &h_hat2, &self.p_lifted, link);
        let d_hat2 = self.det_net2.forward_infer(&det2_input)?;
        Ok(ForwardTrace {
            despread_input,
            h_hat1,
            det1_input,
            d_hat1,
            csi2_input,
            h_hat2,
            det2_input,
            d_hat2,
        })
    }
}

/// Every intermediate of one inference pass, in processing order.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub despread_input: Array2<f64>,
    pub h_hat1: Array2<f64>,
    pub det1_input: Array2<f64>,
    pub d_hat1: Array2<f64>,
    pub csi2_input: Array2<f64>,
    pub h_hat2: Array2<f64>,
    pub det2_input: Array2<f64>,
    pub d_hat2: Array2<f64>,
}

/// Despreads one stacked vector: `P~^T x~` (no `1/M` factor; the input
/// normalization of the consuming subnet absorbs the scale).
pub fn despread_real(x_tilde: &Array1<f64>, p_lifted: &Array2<f64>) -> Array1<f64> {
    p_lifted.t().dot(x_tilde)
}

/// Removes the spread CSI estimate: `x~ - sqrt(rho E / N) P~ h^`.
pub fn reduce_csi_interference(
    x_tilde: &Array1<f64>,
    h_hat: &Array1<f64>,
    p_lifted: &Array2<f64>,
    cfg: &LinkConfig,
) -> Array1<f64> {
    x_tilde - &(cfg.csi_scale() * &p_lifted.dot(h_hat))
}

/// Removes the data estimate and despreads, producing the next CSI-stage
/// input: `P~^T (x~ - sqrt((1-rho) E) d^)`.
pub fn reduce_ulus_interference(
    x_tilde: &Array1<f64>,
    d_hat: &Array1<f64>,
    p_lifted: &Array2<f64>,
    cfg: &LinkConfig,
) -> Array1<f64> {
    p_lifted.t().dot(&(x_tilde - &(cfg.ulus_scale() * d_hat)))
}

fn despread_real_batch(x: &Array2<f64>, p_lifted: &Array2<f64>) -> Array2<f64> {
    x.dot(p_lifted)
}

fn reduce_csi_batch(
    x: &Array2<f64>,
    h_hat: &Array2<f64>,
    p_lifted: &Array2<f64>,
    cfg: &LinkConfig,
) -> Array2<f64> {
    x - &(cfg.csi_scale() * &h_hat.dot(&p_lifted.t()))
}

fn reduce_ulus_batch(
    x: &Array2<f64>,
    d_hat: &Array2<f64>,
    p_lifted: &Array2<f64>,
    cfg: &LinkConfig,
) -> Array2<f64> {
    (x - &(cfg.ulus_scale() * d_hat)).dot(p_lifted)
}

/// Dataset policy across the four stages: one shared set (default) or a
/// fresh draw per stage.
#[derive(Debug, Clone, Copy)]
pub enum StageData<'a> {
    Shared(&'a Dataset),
    PerStage(&'a [Dataset; 4]),
}

impl<'a> StageData<'a> {
    fn for_stage(&self, idx: usize) -> &'a Dataset {
        match self {
            StageData::Shared(ds) => ds,
            StageData::PerStage(sets) => &sets[idx],
        }
    }
}

/// Reported (penalty-free) loss of every iteration of one stage.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: Stage,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub stages: Vec<StageReport>,
}

/// Trains exactly one subnet against its stage labels, with every earlier
/// subnet frozen. Batches walk shuffled epochs of the dataset.
pub fn train_stage<R: Rng + ?Sized>(
    model: &mut UnfoldedModel,
    stage: Stage,
    ds: &Dataset,
    hyper: &TrainHyper,
    rng: &mut R,
) -> Result<StageReport> {
    hyper.validate()?;
    if ds.samples.is_empty() {
        return Err(Error::InvalidConfig("training dataset is empty".into()));
    }
    if ds.link.n_bs != model.link.n_bs || ds.link.m_frame != model.link.m_frame {
        return Err(Error::DimensionMismatch(format!(
            "dataset link ({}, {}) does not match model link ({}, {})",
            ds.link.n_bs, ds.link.m_frame, model.link.n_bs, model.link.m_frame
        )));
    }

    // The frozen prefix is a deterministic per-sample map, so its output for
    // the whole dataset is computed once per stage.
    let x_all = ds.x_matrix();
    let inputs = stage_input_chunked(model, stage, &x_all)?;
    let labels = match stage {
        Stage::Csi1 | Stage::Csi2 => ds.h_matrix(),
        Stage::Det1 | Stage::Det2 => ds.d_matrix(),
    };

    let count = inputs.nrows();
    let batch = hyper.batch_size.min(count);
    let mut order: Vec<usize> = (0..count).collect();
    let mut pos = count; // trigger a shuffle on the first iteration
    let mut adam = AdamState::new(model.subnet(stage));
    let mut losses = Vec::with_capacity(hyper.max_iters);

    for _ in 0..hyper.max_iters {
        if pos + batch > count {
            order.shuffle(rng);
            pos = 0;
        }
        let idx = &order[pos..pos + batch];
        pos += batch;
        let x_b = inputs.select(Axis(0), idx);
        let t_b = labels.select(Axis(0), idx);

        let net = model.subnet_mut(stage);
        let (y, cache) = net.forward_train(&x_b)?;
        losses.push(mse_loss(&y, &t_b));
        let upstream = mse_grad(&y, &t_b);
        let (grads, _) = net.backward(&cache, &upstream, hyper.l2_lambda)?;
        adam_step(net, &grads, &mut adam, hyper);
    }
    Ok(StageReport { stage, losses })
}

/// Runs prefix inference in row chunks to bound the transient hidden-layer
/// allocations.
fn stage_input_chunked(
    model: &UnfoldedModel,
    stage: Stage,
    x_all: &Array2<f64>,
) -> Result<Array2<f64>> {
    const CHUNK: usize = 2048;
    let rows = x_all.nrows();
    let mut out: Option<Array2<f64>> = None;
    let mut start = 0;
    while start < rows {
        let end = (start + CHUNK).min(rows);
        let part =
            model.stage_input(stage, &x_all.slice(ndarray::s![start..end, ..]).to_owned())?;
        let dst = out.get_or_insert_with(|| Array2::zeros((rows, part.ncols())));
        dst.slice_mut(ndarray::s![start..end, ..]).assign(&part);
        start = end;
    }
    Ok(out.expect("dataset checked non-empty"))
}

/// Trains the four subnets in cascade order and returns the trained model
/// with its provenance filled in.
pub fn train_subnet_by_subnet<R: Rng + ?Sized>(
    data: StageData<'_>,
    mut model: UnfoldedModel,
    hyper: &TrainHyper,
    rng: &mut R,
) -> Result<(UnfoldedModel, TrainReport)> {
    let mut stages = Vec::with_capacity(4);
    for (idx, stage) in Stage::ALL.into_iter().enumerate() {
        let ds = data.for_stage(idx);
        stages.push(train_stage(&mut model, stage, ds, hyper, rng)?);
    }
    let first = data.for_stage(0);
    model.train_meta.train_snr_db = first.snr_db;
    model.train_meta.dataset_size = first.count;
    model.train_meta.hyper = *hyper;
    Ok((model, TrainReport { stages }))
}

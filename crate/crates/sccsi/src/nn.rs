//! Minimal dense-network engine: three-layer subnets with batch
//! normalization and swish activation, manual backpropagation, Adam, and L2
//! regularization.
//!
//! A subnet computes `W2 * BN(swish(W1 * BN(x) + b1)) + b2` row-wise over a
//! batch. Batch normalization is applied to the input layer and to the
//! post-activation hidden output; the input and output layers themselves are
//! linear. Train mode normalizes by batch statistics (biased `1/B` variance)
//! and updates running statistics; inference normalizes by the running
//! statistics, so a frozen subnet is a deterministic per-sample function.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Default running-average decay of the batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.99;
/// Default variance floor.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Learnable affine pair plus running statistics for one normalized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        Self::with_eps(features, BN_EPS)
    }

    pub fn with_eps(features: usize, eps: f64) -> Self {
        assert!(eps > 0.0, "batch-norm eps must be positive");
        Self {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            momentum: BN_MOMENTUM,
            eps,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }
}

/// Values cached by a train-mode normalization pass, needed by its backward.
#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn check_features(x: &Array2<f64>, state: &BatchNormState, what: &str) -> Result<()> {
    if x.ncols() != state.features() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: batch has {} features, state expects {}",
            x.ncols(),
            state.features()
        )));
    }
    Ok(())
}

/// Train-mode forward: normalize by batch mean/variance, apply gamma/beta,
/// and fold the batch statistics into the running averages.
pub fn bn_forward_train(
    x: &Array2<f64>,
    state: &mut BatchNormState,
) -> Result<(Array2<f64>, BnCache)> {
    check_features(x, state, "bn_forward_train")?;
    if x.nrows() < 2 {
        return Err(Error::InvalidConfig(
            "bn_forward_train: need at least 2 samples (variance is degenerate)".into(),
        ));
    }
    let mu = x.mean_axis(Axis(0)).unwrap();
    let centered = x - &mu;
    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
    let inv_std = var.mapv(|v| 1.0 / (v + state.eps).sqrt());
    let x_hat = &centered * &inv_std;
    let y = &x_hat * &state.gamma + &state.beta;

    let m = state.momentum;
    state.running_mean = m * &state.running_mean + (1.0 - m) * &mu;
    state.running_var = m * &state.running_var + (1.0 - m) * &var;

    Ok((y, BnCache { x_hat, inv_std }))
}

/// Inference forward: normalize by the running statistics.
pub fn bn_forward_infer(x: &Array2<f64>, state: &BatchNormState) -> Result<Array2<f64>> {
    check_features(x, state, "bn_forward_infer")?;
    let inv_std = state.running_var.mapv(|v| 1.0 / (v + state.eps).sqrt());
    Ok((x - &state.running_mean) * &inv_std * &state.gamma + &state.beta)
}

/// Backward through a train-mode normalization (biased-variance convention).
pub fn bn_backward(
    cache: &BnCache,
    gamma: &Array1<f64>,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let dy_xhat = dy * &cache.x_hat;
    let dgamma = dy_xhat.sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    let mean_dy = dy.mean_axis(Axis(0)).unwrap();
    let mean_dy_xhat = dy_xhat.mean_axis(Axis(0)).unwrap();
    let dx = (dy - &mean_dy - &cache.x_hat * &mean_dy_xhat) * &(gamma * &cache.inv_std);
    (dx, dgamma, dbeta)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x / (1 + exp(-x))`; safe for |x| up to at least 1e3.
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Derivative of [`swish`]: `s(x) * (1 + x * (1 - s(x)))` with `s = sigmoid`.
pub fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Weights, biases, and batch-norm state for one three-layer subnet.
#[derive(Debug, Clone, PartialEq)]
pub struct SubnetParams {
    /// Hidden-layer weights, `hidden x in`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// Output-layer weights, `out x hidden`.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub bn_in: BatchNormState,
    pub bn_hidden: BatchNormState,
}

/// Which receiver stage a subnet implements; fixes its layer sizes and the
/// initialization variances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubnetKind {
    /// CSI estimation subnet: layers `2N / 16N / 2N`.
    Csi { n: usize },
    /// UL-US detection subnet: layers `2M / 16M / 2M`.
    Det { m: usize },
}

impl SubnetParams {
    /// General constructor: `W1 ~ N(0, w1_var)`, `W2 ~ N(0, w2_var)`, biases
    /// zero, gamma one, beta zero, running statistics (0, 1).
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        w1_var: f64,
        w2_var: f64,
        rng: &mut R,
    ) -> Self {
        let n1 = Normal::new(0.0, w1_var.sqrt()).unwrap();
        let n2 = Normal::new(0.0, w2_var.sqrt()).unwrap();
        Self {
            w1: Array2::from_shape_fn((hidden, input), |_| n1.sample(rng)),
            b1: Array1::zeros(hidden),
            w2: Array2::from_shape_fn((output, hidden), |_| n2.sample(rng)),
            b2: Array1::zeros(output),
            bn_in: BatchNormState::new(input),
            bn_hidden: BatchNormState::new(hidden),
        }
    }

    /// Initialization for a receiver stage: CSI subnets draw `W1` with
    /// variance `1/(8N)` and `W2` with `1/N`; detection subnets use `1/(8M)`
    /// and `1/M`.
    pub fn init<R: Rng + ?Sized>(kind: SubnetKind, rng: &mut R) -> Self {
        match kind {
            SubnetKind::Csi { n } => {
                Self::new(2 * n, 16 * n, 2 * n, 1.0 / (8.0 * n as f64), 1.0 / n as f64, rng)
            }
            SubnetKind::Det { m } => {
                Self::new(2 * m, 16 * m, 2 * m, 1.0 / (8.0 * m as f64), 1.0 / m as f64, rng)
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    fn check_input(&self, x: &Array2<f64>, what: &str) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: batch has {} features, subnet expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Deterministic per-sample forward using running statistics.
    pub fn forward_infer(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x, "forward_infer")?;
        let x1 = bn_forward_infer(x, &self.bn_in)?;
        let z = x1.dot(&self.w1.t()) + &self.b1;
        let a = z.mapv(swish);
        let a1 = bn_forward_infer(&a, &self.bn_hidden)?;
        Ok(a1.dot(&self.w2.t()) + &self.b2)
    }

    /// Batch-statistics forward; returns the cache consumed by
    /// [`Self::backward`] and updates the running statistics as a side
    /// effect.
    pub fn forward_train(&mut self, x: &Array2<f64>) -> Result<(Array2<f64>, SubnetCache)> {
        self.check_input(x, "forward_train")?;
        let (x1, bn_in_cache) = bn_forward_train(x, &mut self.bn_in)?;
        let z = x1.dot(&self.w1.t()) + &self.b1;
        let a = z.mapv(swish);
        let (a1, bn_hidden_cache) = bn_forward_train(&a, &mut self.bn_hidden)?;
        let y = a1.dot(&self.w2.t()) + &self.b2;
        Ok((y, SubnetCache { bn_in: bn_in_cache, x1, z, bn_hidden: bn_hidden_cache, a1 }))
    }

    /// Exact gradients of the batch loss plus `l2_lambda * w` on the weight
    /// matrices (the penalty never touches biases or gamma/beta). Also
    /// returns the gradient with respect to the input batch.
    pub fn backward(
        &self,
        cache: &SubnetCache,
        upstream: &Array2<f64>,
        l2_lambda: f64,
    ) -> Result<(ParamTensors, Array2<f64>)> {
        if upstream.ncols() != self.output_dim() || upstream.nrows() != cache.a1.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "backward: upstream is {:?}, expected ({}, {})",
                upstream.dim(),
                cache.a1.nrows(),
                self.output_dim()
            )));
        }
        let mut dw2 = upstream.t().dot(&cache.a1);
        if l2_lambda != 0.0 {
            dw2 += &(l2_lambda * &self.w2);
        }
        let db2 = upstream.sum_axis(Axis(0));

        let da1 = upstream.dot(&self.w2);
        let (da, dgamma_h, dbeta_h) = bn_backward(&cache.bn_hidden, &self.bn_hidden.gamma, &da1);
        let dz = &da * &cache.z.mapv(swish_grad);

        let mut dw1 = dz.t().dot(&cache.x1);
        if l2_lambda != 0.0 {
            dw1 += &(l2_lambda * &self.w1);
        }
        let db1 = dz.sum_axis(Axis(0));

        let dx1 = dz.dot(&self.w1);
        let (dx, dgamma_in, dbeta_in) = bn_backward(&cache.bn_in, &self.bn_in.gamma, &dx1);

        Ok((
            ParamTensors {
                w1: dw1,
                b1: db1,
                w2: dw2,
                b2: db2,
                gamma_in: dgamma_in,
                beta_in: dbeta_in,
                gamma_hidden: dgamma_h,
                beta_hidden: dbeta_h,
            },
            dx,
        ))
    }

    /// Mutable flat views of every trainable tensor, in checkpoint order.
    pub fn params_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.bn_in.gamma.as_slice_mut().unwrap(),
            self.bn_in.beta.as_slice_mut().unwrap(),
            self.bn_hidden.gamma.as_slice_mut().unwrap(),
            self.bn_hidden.beta.as_slice_mut().unwrap(),
        ]
    }
}

/// Cached intermediates from one train-mode forward pass.
#[derive(Debug, Clone)]
pub struct SubnetCache {
    bn_in: BnCache,
    x1: Array2<f64>,
    z: Array2<f64>,
    bn_hidden: BnCache,
    a1: Array2<f64>,
}

/// One tensor per trainable parameter of a subnet; used for gradients and
/// for the Adam moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensors {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub gamma_in: Array1<f64>,
    pub beta_in: Array1<f64>,
    pub gamma_hidden: Array1<f64>,
    pub beta_hidden: Array1<f64>,
}

impl ParamTensors {
    pub fn zeros_like(p: &SubnetParams) -> Self {
        Self {
            w1: Array2::zeros(p.w1.dim()),
            b1: Array1::zeros(p.b1.len()),
            w2: Array2::zeros(p.w2.dim()),
            b2: Array1::zeros(p.b2.len()),
            gamma_in: Array1::zeros(p.bn_in.features()),
            beta_in: Array1::zeros(p.bn_in.features()),
            gamma_hidden: Array1::zeros(p.bn_hidden.features()),
            beta_hidden: Array1::zeros(p.bn_hidden.features()),
        }
    }

    /// Flat views in the same order as [`SubnetParams::params_mut`].
    pub fn slices(&self) -> [&[f64]; 8] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.gamma_in.as_slice().unwrap(),
            self.beta_in.as_slice().unwrap(),
            self.gamma_hidden.as_slice().unwrap(),
            self.beta_hidden.as_slice().unwrap(),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.gamma_in.as_slice_mut().unwrap(),
            self.beta_in.as_slice_mut().unwrap(),
            self.gamma_hidden.as_slice_mut().unwrap(),
            self.beta_hidden.as_slice_mut().unwrap(),
        ]
    }
}

/// First/second-moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ParamTensors,
    pub v: ParamTensors,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &SubnetParams) -> Self {
        Self { m: ParamTensors::zeros_like(params), v: ParamTensors::zeros_like(params), t: 0 }
    }
}

/// Training hyper-parameters for one subnet stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub max_iters: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.99,
            beta2: 0.999,
            adam_eps: 1e-8,
            l2_lambda: 1e-4,
            batch_size: 200,
            max_iters: 15_000,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.adam_eps > 0.0) || !(self.l2_lambda >= 0.0) {
            return Err(Error::InvalidConfig("adam_eps must be > 0 and l2_lambda >= 0".into()));
        }
        Ok(())
    }
}

/// One bias-corrected Adam step over every tensor of a subnet:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(
    params: &mut SubnetParams,
    grads: &ParamTensors,
    state: &mut AdamState,
    hyper: &TrainHyper,
) {
    state.t += 1;
    let bc1 = 1.0 - hyper.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(state.t as i32);
    let theta = params.params_mut();
    let m = state.m.slices_mut();
    let v = state.v.slices_mut();
    let g = grads.slices();
    for (((theta, m), v), g) in theta.into_iter().zip(m).zip(v).zip(g) {
        assert_eq!(theta.len(), g.len(), "adam_step: gradient shape mismatch");
        for i in 0..theta.len() {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.adam_eps);
        }
    }
}

/// Mean over the batch of squared Euclidean errors. This is the reported
/// loss; the L2 penalty joins the optimization objective only.
pub fn mse_loss(pred: &Array2<f64>, label: &Array2<f64>) -> f64 {
    assert_eq!(pred.dim(), label.dim(), "mse_loss: shape mismatch");
    let diff = pred - label;
    diff.mapv(|v| v * v).sum() / pred.nrows() as f64
}

/// Gradient of [`mse_loss`] with respect to the predictions.
pub fn mse_grad(pred: &Array2<f64>, label: &Array2<f64>) -> Array2<f64> {
    assert_eq!(pred.dim(), label.dim(), "mse_grad: shape mismatch");
    (pred - label) * (2.0 / pred.nrows() as f64)
}

/// `l2_lambda / 2 * (||W1||^2 + ||W2||^2)`; its gradient is `l2_lambda * W`.
pub fn l2_penalty(params: &SubnetParams, l2_lambda: f64) -> f64 {
    0.5 * l2_lambda * (params.w1.mapv(|v| v * v).sum() + params.w2.mapv(|v| v * v).sum())
}

pub mod gradcheck {
    //! Finite-difference gradient oracle. Deliberately independent of the
    //! backpropagation path: it only ever calls the forward pass.

    use super::*;

    /// Objective the oracle differentiates: train-mode forward on a scratch
    /// clone (running-stat side effects discarded) plus the L2 penalty.
    pub fn objective(net: &SubnetParams, x: &Array2<f64>, label: &Array2<f64>, lambda: f64) -> f64 {
        let mut scratch = net.clone();
        let (y, _) = scratch.forward_train(x).unwrap();
        mse_loss(&y, label) + l2_penalty(&scratch, lambda)
    }

    /// Central finite differences over every trainable tensor.
    pub fn fd_gradients(
        net: &SubnetParams,
        x: &Array2<f64>,
        label: &Array2<f64>,
        lambda: f64,
        step: f64,
    ) -> ParamTensors {
        let mut out = ParamTensors::zeros_like(net);
        for k in 0..8 {
            let len = out.slices()[k].len();
            for i in 0..len {
                let mut plus = net.clone();
                plus.params_mut()[k][i] += step;
                let mut minus = net.clone();
                minus.params_mut()[k][i] -= step;
                let f_plus = objective(&plus, x, label, lambda);
                let f_minus = objective(&minus, x, label, lambda);
                out.slices_mut()[k][i] = (f_plus - f_minus) / (2.0 * step);
            }
        }
        out
    }

    /// Worst-case relative deviation between two gradient sets; entries below
    /// 1e-3 in both are compared absolutely against that floor.
    pub fn max_relative_error(analytic: &ParamTensors, numeric: &ParamTensors) -> f64 {
        let mut worst = 0.0f64;
        for (a, n) in analytic.slices().into_iter().zip(numeric.slices()) {
            for (&ga, &gn) in a.iter().zip(n.iter()) {
                let denom = ga.abs().max(gn.abs()).max(1e-3);
                worst = worst.max((ga - gn).abs() / denom);
            }
        }
        worst
    }
}

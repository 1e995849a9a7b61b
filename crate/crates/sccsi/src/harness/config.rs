//! JSON experiment configuration.
//!
//! Schema (all keys required):
//!
//! ```json
//! {
//!   "link":  { "n": 8, "m": 64, "rho": 0.2, "e_u": 1.0 },
//!   "train": { "snr_db": 5.0, "samples": 20000, "batch": 200, "iters": 3000,
//!              "lr": 1e-3, "beta1": 0.99, "beta2": 0.999,
//!              "l2_lambda": 1e-4, "seed": 17 },
//!   "eval":  { "snr_db_list": [0,2,4,6,8,10,12,14],
//!              "rho_list": [0.05, 0.1, 0.15, 0.2],
//!              "max_samples": 10000, "min_bit_errors": 1000,
//!              "high_snr_threshold_db": 10.0 }
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{snr_to_sigma2, LinkConfig};
use crate::nn::TrainHyper;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub n: usize,
    pub m: usize,
    pub rho: f64,
    pub e_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub snr_db: f64,
    pub samples: usize,
    pub batch: usize,
    pub iters: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub snr_db_list: Vec<f64>,
    pub rho_list: Vec<f64>,
    pub max_samples: usize,
    pub min_bit_errors: u64,
    pub high_snr_threshold_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub link: LinkSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    /// Desk-scale profile: small enough to train and sweep on a laptop CPU
    /// in minutes. The learning rate is raised to 1e-3 to fit the shortened
    /// 3000-iteration stage budget.
    pub fn desk() -> Self {
        Self {
            link: LinkSection { n: 8, m: 64, rho: 0.2, e_u: 1.0 },
            train: TrainSection {
                snr_db: 5.0,
                samples: 20_000,
                batch: 200,
                iters: 3_000,
                lr: 1e-3,
                beta1: 0.99,
                beta2: 0.999,
                l2_lambda: 1e-4,
                seed: 17,
            },
            eval: EvalSection {
                snr_db_list: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
                rho_list: vec![0.05, 0.10, 0.15, 0.20],
                max_samples: 10_000,
                min_bit_errors: 1_000,
                high_snr_threshold_db: 10.0,
            },
        }
    }

    /// Full-scale profile (M = 512, N = 64, 200k samples, 15k iterations per
    /// subnet). Expect hours of CPU time.
    pub fn paper_scale() -> Self {
        Self {
            link: LinkSection { n: 64, m: 512, rho: 0.2, e_u: 1.0 },
            train: TrainSection {
                snr_db: 5.0,
                samples: 200_000,
                batch: 200,
                iters: 15_000,
                lr: 1e-4,
                beta1: 0.99,
                beta2: 0.999,
                l2_lambda: 1e-4,
                seed: 17,
            },
            eval: EvalSection {
                snr_db_list: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
                rho_list: vec![0.05, 0.10, 0.15, 0.20],
                max_samples: 200_000,
                min_bit_errors: 1_000,
                high_snr_threshold_db: 10.0,
            },
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.link_config(self.train.snr_db)?;
        self.hyper().validate()?;
        if self.eval.snr_db_list.is_empty() {
            return Err(Error::InvalidConfig("eval.snr_db_list must not be empty".into()));
        }
        if self.eval.rho_list.is_empty() {
            return Err(Error::InvalidConfig("eval.rho_list must not be empty".into()));
        }
        for &rho in &self.eval.rho_list {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::InvalidConfig(format!("eval rho {rho} outside [0, 1]")));
            }
        }
        if self.eval.min_bit_errors < 1 {
            return Err(Error::InvalidConfig("eval.min_bit_errors must be at least 1".into()));
        }
        if self.eval.max_samples < 1 {
            return Err(Error::InvalidConfig("eval.max_samples must be at least 1".into()));
        }
        if self.train.samples < 1 {
            return Err(Error::InvalidConfig("train.samples must be at least 1".into()));
        }
        Ok(())
    }

    /// Link parameters at the training power split with the noise variance
    /// implied by `snr_db`.
    pub fn link_config(&self, snr_db: f64) -> Result<LinkConfig> {
        LinkConfig::new(
            self.link.n,
            self.link.m,
            self.link.rho,
            self.link.e_u,
            snr_to_sigma2(snr_db, self.link.e_u),
        )
    }

    pub fn hyper(&self) -> TrainHyper {
        TrainHyper {
            lr: self.train.lr,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            l2_lambda: self.train.l2_lambda,
            batch_size: self.train.batch,
            max_iters: self.train.iters,
            ..TrainHyper::default()
        }
    }
}

//! Link-level simulator and learning lab for CSI feedback over superimposed
//! coding.
//!
//! A user spreads its downlink CSI with Walsh codes, superimposes it on the
//! uplink data sequence, and the base station recovers both. Two receivers
//! are provided:
//!
//! - [`baseline`]: the iterative MMSE estimate-and-cancel receiver, which
//!   needs perfect knowledge of the uplink channel and the noise variance;
//! - [`unfolded`]: a four-subnet multi-task network that unfolds two receiver
//!   iterations, keeps the interference-reduction steps as fixed expert
//!   knowledge, and sees only a coarse channel-free estimate (no noise
//!   knowledge at all). It is trained subnet by subnet with the from-scratch
//!   engine in [`nn`].
//!
//! [`datagen`] produces reproducible frames and datasets, and [`harness`]
//! adds configuration, NMSE/BER sweeps with CSV output, and checkpoint I/O.
//!
//! The `examples/` directory holds one runnable program per capability; the
//! `sccsi` binary exposes `train`, `sweep`, and `baseline` subcommands for
//! scripted use.
//!
//! ```
//! use sccsi::link::LinkConfig;
//! use sccsi::datagen::{gen_frames, walsh_matrix};
//! use sccsi::baseline::run_baseline;
//!
//! let link = LinkConfig::new(4, 16, 0.2, 1.0, 0.0).unwrap().with_snr_db(5.0);
//! let p = walsh_matrix(16, 4).unwrap();
//! let frames = gen_frames(8, &link, &p, 1).unwrap();
//! let out = run_baseline(&frames[0].0.r, &frames[0].0.g, &p, &link, 3).unwrap();
//! assert_eq!(out.h_est.len(), 4);
//! ```

pub mod baseline;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod link;
pub mod nn;
pub mod unfolded;

pub use error::{Error, Result};

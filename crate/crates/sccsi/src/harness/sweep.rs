//! NMSE/BER sweeps over (SNR, rho) grids with a reproducible stopping rule
//! and schema-stable CSV output.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use crate::datagen::{frame_rng, gen_frame, walsh_matrix};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::link::{
    complex_to_real_stack, nmse_sample, qpsk_demodulate, real_to_complex, snr_to_sigma2,
    LinkConfig,
};
use crate::unfolded::UnfoldedModel;

/// Receiver under test.
#[derive(Clone, Copy)]
pub enum ReceiverKind<'a> {
    Baseline { iters: usize },
    Unfolded(&'a UnfoldedModel),
}

impl ReceiverKind<'_> {
    pub fn tag(&self) -> &'static str {
        match self {
            ReceiverKind::Baseline { .. } => "baseline",
            ReceiverKind::Unfolded(_) => "unfolded",
        }
    }
}

/// One sweep point. `seed`, `samples_used`, and the config reproduce every
/// statistical field exactly; `wall_time_s` is informational.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub snr_db: f64,
    pub rho: f64,
    pub method: String,
    pub nmse: f64,
    pub ber: f64,
    pub samples_used: u64,
    pub bit_errors: u64,
    pub wall_time_s: f64,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const EVAL_STREAM_TAG: u64 = 0x5343_4353_4931_4556; // evaluation stream marker

/// Per-point seed: a tagged hash chain over (base, snr, rho), disjoint from
/// the training streams. Both receivers at a point share the same frames.
pub fn point_seed(base_seed: u64, snr_db: f64, rho: f64) -> u64 {
    let mut s = splitmix64(base_seed ^ EVAL_STREAM_TAG);
    s = splitmix64(s ^ snr_db.to_bits());
    splitmix64(s ^ rho.to_bits())
}

/// Evaluates one receiver at one (SNR, rho) operating point.
///
/// Low SNR (at or below the threshold): exactly `max_samples` frames. High
/// SNR: frames accumulate until `min_bit_errors` bit errors are seen, capped
/// at `max_samples`.
pub fn evaluate_point(
    rx: ReceiverKind<'_>,
    link: &LinkConfig,
    snr_db: f64,
    max_samples: usize,
    min_bit_errors: u64,
    high_snr: bool,
    seed: u64,
) -> Result<MetricsRow> {
    link.validate()?;
    if let ReceiverKind::Unfolded(model) = rx {
        if model.link.n_bs != link.n_bs || model.link.m_frame != link.m_frame {
            return Err(Error::DimensionMismatch(format!(
                "model is ({}, {}), sweep point is ({}, {})",
                model.link.n_bs, model.link.m_frame, link.n_bs, link.m_frame
            )));
        }
    }
    let p = walsh_matrix(link.m_frame, link.n_bs)?;
    let start = Instant::now();

    const CHUNK: usize = 512;
    let mut nmse_acc = 0.0;
    let mut bit_errors = 0u64;
    let mut bits_total = 0u64;
    let mut samples = 0usize;

    while samples < max_samples {
        let todo = CHUNK.min(max_samples - samples);
        // Frames derive from (seed, frame index): chunked parallel generation
        // is bit-identical to a sequential pass.
        let frames: Vec<_> = (samples as u64..(samples + todo) as u64)
            .into_par_iter()
            .map(|i| gen_frame(link, &p, &mut frame_rng(seed, i)))
            .collect::<Result<_>>()?;

        match rx {
            ReceiverKind::Baseline { iters } => {
                let results: Vec<(f64, u64)> = frames
                    .par_iter()
                    .map(|(frame, sample)| -> Result<(f64, u64)> {
                        let res = crate::baseline::run_baseline(&frame.r, &frame.g, &p, link, iters)?;
                        let est = complex_to_real_stack(res.h_est.view());
                        let ratio = nmse_sample(sample.h_label.view(), est.view())?;
                        let bits = qpsk_demodulate(res.d_est.view());
                        let errs =
                            bits.iter().zip(frame.bits.iter()).filter(|(a, b)| a != b).count();
                        Ok((ratio, errs as u64))
                    })
                    .collect::<Result<_>>()?;
                for (ratio, errs) in results {
                    nmse_acc += ratio;
                    bit_errors += errs;
                }
            }
            ReceiverKind::Unfolded(model) => {
                let mut x = Array2::zeros((todo, 2 * link.m_frame));
                for (i, (_, sample)) in frames.iter().enumerate() {
                    x.row_mut(i).assign(&sample.x_tilde);
                }
                let (h_hat, d_hat) = model.forward_with_link(&x, link)?;
                for (i, (frame, sample)) in frames.iter().enumerate() {
                    nmse_acc += nmse_sample(sample.h_label.view(), h_hat.row(i))?;
                    let d_soft = real_to_complex(d_hat.row(i))?;
                    let bits = qpsk_demodulate(d_soft.view());
                    bit_errors +=
                        bits.iter().zip(frame.bits.iter()).filter(|(a, b)| a != b).count() as u64;
                }
            }
        }
        bits_total += (todo * 2 * link.m_frame) as u64;
        samples += todo;
        if high_snr && bit_errors >= min_bit_errors {
            break;
        }
    }

    Ok(MetricsRow {
        snr_db,
        rho: link.rho,
        method: rx.tag().to_string(),
        nmse: nmse_acc / samples as f64,
        ber: bit_errors as f64 / bits_total as f64,
        samples_used: samples as u64,
        bit_errors,
        wall_time_s: start.elapsed().as_secs_f64(),
        seed,
    })
}

/// Full (SNR, rho) grid for one receiver; one row per pair. Both receivers
/// evaluated with the same config see identical frames at each point.
pub fn sweep(rx: ReceiverKind<'_>, cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.eval.snr_db_list.len() * cfg.eval.rho_list.len());
    for &snr_db in &cfg.eval.snr_db_list {
        for &rho in &cfg.eval.rho_list {
            let link = LinkConfig::new(
                cfg.link.n,
                cfg.link.m,
                rho,
                cfg.link.e_u,
                snr_to_sigma2(snr_db, cfg.link.e_u),
            )?;
            let seed = point_seed(cfg.train.seed, snr_db, rho);
            let high_snr = snr_db > cfg.eval.high_snr_threshold_db;
            rows.push(evaluate_point(
                rx,
                &link,
                snr_db,
                cfg.eval.max_samples,
                cfg.eval.min_bit_errors,
                high_snr,
                seed,
            )?);
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "snr_db,rho,method,nmse,ber,samples_used,bit_errors,wall_time_s,seed";

fn format_row(row: &MetricsRow) -> String {
    let mut s = String::new();
    // `{}` on f64 prints the shortest representation that round-trips, so
    // re-parsed rows compare bit-identically.
    let _ = write!(
        s,
        "{},{},{},{},{},{},{},{},{}",
        row.snr_db,
        row.rho,
        row.method,
        row.nmse,
        row.ber,
        row.samples_used,
        row.bit_errors,
        row.wall_time_s,
        row.seed
    );
    s
}

/// Appends rows to a CSV file, writing the fixed header first when the file
/// is new or empty.
pub fn append_rows(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let need_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if need_header {
        writeln!(f, "{CSV_HEADER}")?;
    }
    for row in rows {
        writeln!(f, "{}", format_row(row))?;
    }
    Ok(())
}

/// Parses a CSV produced by [`append_rows`].
pub fn parse_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "bad CSV header {:?}, expected {CSV_HEADER:?}",
                other
            )))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(Error::Format(format!(
                "line {}: expected 9 fields, got {}",
                lineno + 2,
                parts.len()
            )));
        }
        let field = |i: usize| -> Result<f64> {
            parts[i]
                .parse()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))
        };
        rows.push(MetricsRow {
            snr_db: field(0)?,
            rho: field(1)?,
            method: parts[2].to_string(),
            nmse: field(3)?,
            ber: field(4)?,
            samples_used: parts[5]
                .parse()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?,
            bit_errors: parts[6]
                .parse()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?,
            wall_time_s: field(7)?,
            seed: parts[8]
                .parse()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?,
        });
    }
    Ok(rows)
}

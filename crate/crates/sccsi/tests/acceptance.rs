//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (visible with `cargo test --test acceptance --
//! --nocapture`). Criteria 6-8 share one desk-scale trained model, built on
//! first use.

use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use sccsi::baseline::{cancel_csi, csi_mmse_coefficient, despread, run_baseline};
use sccsi::datagen::{frame_rng, gen_channel, gen_dataset, gen_frame, walsh_matrix};
use sccsi::harness::{
    append_rows, evaluate_point, parse_metrics_csv, point_seed, sweep, ExperimentConfig,
    MetricsRow, ReceiverKind,
};
use sccsi::link::{
    complex_to_real_stack, nmse, nmse_sample, qpsk_modulate, spread_superimpose, uplink_transmit,
    LinkConfig,
};
use sccsi::nn::{
    adam_step, bn_forward_train, gradcheck, mse_grad, AdamState, BatchNormState, ParamTensors,
    SubnetParams, TrainHyper,
};
use sccsi::unfolded::{train_subnet_by_subnet, StageData, UnfoldedModel};

// ---------------------------------------------------------------------------
// Criterion 1: algebraic exactness of the degenerate power splits.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_algebraic_exactness() {
    let mut worst_h = 0.0f64;
    let cfg_h = LinkConfig::new(8, 64, 1.0, 1.0, 0.0).unwrap();
    let p = walsh_matrix(64, 8).unwrap();
    for i in 0..20 {
        let (frame, _) = gen_frame(&cfg_h, &p, &mut frame_rng(9001, i)).unwrap();
        let res = run_baseline(&frame.r, &frame.g, &p, &cfg_h, 1).unwrap();
        let num: f64 = (&res.h_est - &frame.h).iter().map(|z| z.norm_sqr()).sum();
        let den: f64 = frame.h.iter().map(|z| z.norm_sqr()).sum();
        worst_h = worst_h.max((num / den).sqrt());
    }
    assert!(worst_h <= 1e-10, "CSI relative error {worst_h}");

    let mut worst_d = 0.0f64;
    let cfg_d = LinkConfig::new(8, 64, 0.0, 1.0, 0.0).unwrap();
    for i in 0..20 {
        let (frame, _) = gen_frame(&cfg_d, &p, &mut frame_rng(9002, i)).unwrap();
        let res = run_baseline(&frame.r, &frame.g, &p, &cfg_d, 1).unwrap();
        let num: f64 = (&res.d_est - &frame.d).iter().map(|z| z.norm_sqr()).sum();
        let den: f64 = frame.d.iter().map(|z| z.norm_sqr()).sum();
        worst_d = worst_d.max((num / den).sqrt());
    }
    assert!(worst_d <= 1e-10, "UL-US relative error {worst_d}");
    println!(
        "ACCEPTANCE 1 algebraic exactness: PASS (max rel err: CSI {worst_h:.2e}, UL-US {worst_d:.2e})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: Walsh orthogonality in exact integer arithmetic up to 1024.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_walsh_exactness() {
    // The Gram matrix of the first n columns is the leading n x n block of
    // the full Gram matrix, so checking n = m covers every n <= m.
    let mut m = 2usize;
    while m <= 1024 {
        let p = walsh_matrix(m, m).unwrap();
        let signs: Vec<i64> = p.p().iter().map(|&v| v as i64).collect();
        assert!(p.p().iter().all(|&v| v == 1.0 || v == -1.0));
        for a in 0..m {
            for b in a..m {
                let dot: i64 = (0..m).map(|k| signs[k * m + a] * signs[k * m + b]).sum();
                let want = if a == b { m as i64 } else { 0 };
                assert_eq!(dot, want, "m={m}, columns {a},{b}");
            }
        }
        m *= 2;
    }
    assert!(walsh_matrix(12, 3).is_err());
    assert!(walsh_matrix(8, 9).is_err());
    println!("ACCEPTANCE 2 Walsh exactness: PASS (all power-of-two sizes through 1024)");
}

// ---------------------------------------------------------------------------
// Criterion 3: the closed-form MMSE coefficients equal the empirical
// MSE-minimizing scalars within 2%.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_mmse_coefficient_oracle() {
    // The CSI coefficient is the Bayes-optimal scalar when the CSI entries
    // have unit variance, so the oracle draws them that way; the data-side
    // coefficient is validated on frames with the CSI term exactly
    // cancelled, where it is optimal for any CSI law. One fixed uplink
    // channel; 2e5 Monte-Carlo frames.
    let cfg = LinkConfig::new(4, 16, 0.2, 1.0, 0.0).unwrap().with_snr_db(5.0);
    let p = walsh_matrix(16, 4).unwrap();
    let g = gen_channel(4, &mut frame_rng(3100, u64::MAX));
    let g_norm2: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    let frames = 200_000u64;

    use rayon::prelude::*;
    let partials: Vec<[f64; 4]> = (0..frames)
        .into_par_iter()
        .map(|i| {
            let mut rng = frame_rng(3101, i);
            let bits: Vec<u8> = (0..32).map(|_| rng.random_range(0..2u8)).collect();
            let d = qpsk_modulate(&bits).unwrap();
            let h = gen_channel(4, &mut rng).mapv(|z| z * 2.0); // unit-variance entries
            let x = spread_superimpose(&h, &d, &p, &cfg).unwrap();
            let r = uplink_transmit(&x, &g, cfg.sigma2, &mut rng).unwrap();

            let z = despread(&r, &p);
            let mut acc = [0.0f64; 4];
            for j in 0..4 {
                let mut y = Complex64::new(0.0, 0.0);
                for a in 0..4 {
                    y += g[a].conj() * z[[a, j]];
                }
                acc[0] += (y.conj() * h[j]).re;
                acc[1] += y.norm_sqr();
            }
            let r_clean = cancel_csi(&r, &g, &h, &p, &cfg).unwrap();
            for j in 0..16 {
                let mut y = Complex64::new(0.0, 0.0);
                for a in 0..4 {
                    y += g[a].conj() * r_clean[[a, j]];
                }
                acc[2] += (y.conj() * d[j]).re;
                acc[3] += y.norm_sqr();
            }
            acc
        })
        .collect();

    let mut tot = [0.0f64; 4];
    for pt in partials {
        for k in 0..4 {
            tot[k] += pt[k];
        }
    }
    let alpha_h = tot[0] / tot[1];
    let c_h = csi_mmse_coefficient(g_norm2, &cfg);
    let dev_h = (alpha_h - c_h).abs() / c_h;

    let alpha_d = tot[2] / tot[3];
    let c_d =
        ((1.0 - cfg.rho) * cfg.e_u).sqrt() / ((1.0 - cfg.rho) * cfg.e_u * g_norm2 + cfg.sigma2);
    let dev_d = (alpha_d - c_d).abs() / c_d;

    assert!(dev_h < 0.02, "CSI coefficient: empirical {alpha_h}, closed form {c_h}");
    assert!(dev_d < 0.02, "data coefficient: empirical {alpha_d}, closed form {c_d}");
    println!(
        "ACCEPTANCE 3 MMSE coefficient oracle: PASS (CSI dev {:.3}%, data dev {:.3}%)",
        100.0 * dev_h,
        100.0 * dev_d
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: backprop matches central finite differences on 10 random
// subnet configurations.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_gradient_fidelity() {
    let mut seeder = frame_rng(4100, 0);
    let mut worst = 0.0f64;
    for case in 0..10 {
        let input = seeder.random_range(2..=6usize);
        let hidden = seeder.random_range(4..=12usize);
        let output = seeder.random_range(2..=6usize);
        let batch = seeder.random_range(4..=8usize);
        let lambda = [0.0, 1e-4, 1e-3][case % 3];

        let mut rng = frame_rng(4101, case as u64);
        let net = SubnetParams::new(input, hidden, output, 0.3, 0.3, &mut rng);
        let x = Array2::from_shape_fn((batch, input), |_| StandardNormal.sample(&mut rng));
        let label = Array2::from_shape_fn((batch, output), |_| StandardNormal.sample(&mut rng));

        let (y, cache) = net.clone().forward_train(&x).unwrap();
        let upstream = mse_grad(&y, &label);
        let (analytic, _) = net.backward(&cache, &upstream, lambda).unwrap();
        let numeric = gradcheck::fd_gradients(&net, &x, &label, lambda, 1e-5);
        let err = gradcheck::max_relative_error(&analytic, &numeric);
        worst = worst.max(err);
        assert!(
            err <= 1e-4,
            "case {case} (in={input}, hidden={hidden}, out={output}, batch={batch}): {err}"
        );
    }
    println!("ACCEPTANCE 4 gradient fidelity: PASS (worst of 10 configs {worst:.2e})");
}

// ---------------------------------------------------------------------------
// Criterion 5: hand-computed Adam trace to 1e-12 and train-mode
// normalization statistics to 1e-9.
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_adam_and_bn_unit_oracles() {
    // Two-step scalar Adam trace, replayed with plain scalar arithmetic.
    let hyper = TrainHyper { lr: 1e-4, beta1: 0.99, beta2: 0.999, ..Default::default() };
    let mut rng = frame_rng(5100, 0);
    let mut net = SubnetParams::new(1, 1, 1, 0.1, 0.1, &mut rng);
    net.b2[0] = 0.25;
    let mut state = AdamState::new(&net);
    let (mut theta, mut m, mut v) = (0.25f64, 0.0f64, 0.0f64);
    let mut worst_adam = 0.0f64;
    for (t, g) in [(1, 0.3f64), (2, -0.12f64)] {
        let mut grads = ParamTensors::zeros_like(&net);
        grads.b2[0] = g;
        adam_step(&mut net, &grads, &mut state, &hyper);
        m = 0.99 * m + 0.01 * g;
        v = 0.999 * v + 0.001 * g * g;
        let m_hat = m / (1.0 - 0.99f64.powi(t));
        let v_hat = v / (1.0 - 0.999f64.powi(t));
        theta -= 1e-4 * m_hat / (v_hat.sqrt() + 1e-8);
        worst_adam = worst_adam.max((net.b2[0] - theta).abs());
    }
    assert!(worst_adam < 1e-12, "Adam trace deviation {worst_adam}");

    // Train-mode normalization statistics. The variance floor biases the
    // output variance by eps / var, so the metrological check uses a floor
    // far below the 1e-9 tolerance.
    let x = Array2::from_shape_fn((64, 5), |_| StandardNormal.sample(&mut rng));
    let mut bn = BatchNormState::with_eps(5, 1e-13);
    let (y, _) = bn_forward_train(&x, &mut bn).unwrap();
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    for col in y.columns() {
        let mean = col.sum() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
        worst_mean = worst_mean.max(mean.abs());
        worst_var = worst_var.max((var - 1.0).abs());
    }
    assert!(worst_mean <= 1e-9, "per-feature mean {worst_mean}");
    assert!(worst_var <= 1e-9, "per-feature variance deviation {worst_var}");
    println!(
        "ACCEPTANCE 5 Adam/BN unit oracles: PASS (Adam dev {worst_adam:.2e}, BN mean {worst_mean:.2e}, BN var dev {worst_var:.2e})"
    );
}

// ---------------------------------------------------------------------------
// Shared desk-scale artifacts for criteria 6-8.
// ---------------------------------------------------------------------------

struct DeskArtifacts {
    cfg: ExperimentConfig,
    model: UnfoldedModel,
    /// NMSE of the frozen first CSI pass on the 5 dB test set.
    stage1_nmse: f64,
    nn_nmse: f64,
    nn_ber: f64,
    base_nmse: f64,
    base_ber: f64,
}

static DESK: OnceLock<DeskArtifacts> = OnceLock::new();

fn desk() -> &'static DeskArtifacts {
    DESK.get_or_init(|| {
        let cfg = ExperimentConfig::desk();
        let link = cfg.link_config(cfg.train.snr_db).unwrap();
        let p = walsh_matrix(link.m_frame, link.n_bs).unwrap();
        let dataset =
            gen_dataset(cfg.train.samples, &link, cfg.train.snr_db, cfg.train.seed).unwrap();
        let hyper = cfg.hyper();
        let model = UnfoldedModel::init(link, &p, cfg.train.seed).unwrap();
        let (model, _) = train_subnet_by_subnet(
            StageData::Shared(&dataset),
            model,
            &hyper,
            &mut frame_rng(cfg.train.seed, u64::MAX - 2),
        )
        .unwrap();

        // Evaluation on fresh frames at the training operating point; both
        // receivers see the same frames.
        let eval_seed = point_seed(cfg.train.seed, cfg.train.snr_db, link.rho);
        let nn_row = evaluate_point(
            ReceiverKind::Unfolded(&model),
            &link,
            cfg.train.snr_db,
            10_000,
            u64::MAX,
            false,
            eval_seed,
        )
        .unwrap();
        let base_row = evaluate_point(
            ReceiverKind::Baseline { iters: 3 },
            &link,
            cfg.train.snr_db,
            10_000,
            u64::MAX,
            false,
            eval_seed,
        )
        .unwrap();

        // First-pass CSI quality on the same frames.
        let test = gen_dataset(10_000, &link, cfg.train.snr_db, eval_seed).unwrap();
        let trace = model.forward_trace(&test.x_matrix()).unwrap();
        let labels = test.h_matrix();
        let stage1_nmse = nmse(&labels, &trace.h_hat1).unwrap();

        DeskArtifacts {
            cfg,
            model,
            stage1_nmse,
            nn_nmse: nn_row.nmse,
            nn_ber: nn_row.ber,
            base_nmse: base_row.nmse,
            base_ber: base_row.ber,
        }
    })
}

// ---------------------------------------------------------------------------
// Criterion 6: desk-scale training beats/matches the 3-iteration baseline.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_desk_training_vs_baseline() {
    let d = desk();
    assert!(
        d.nn_nmse <= 1.1 * d.base_nmse,
        "NMSE: unfolded {} vs baseline {} (limit 1.1x)",
        d.nn_nmse,
        d.base_nmse
    );
    assert!(
        d.nn_ber <= 1.5 * d.base_ber,
        "BER: unfolded {} vs baseline {} (limit 1.5x)",
        d.nn_ber,
        d.base_ber
    );
    println!(
        "ACCEPTANCE 6 desk training: PASS (NMSE {:.4} vs baseline {:.4} = {:.2}x; BER {:.5} vs {:.5} = {:.2}x)",
        d.nn_nmse,
        d.base_nmse,
        d.nn_nmse / d.base_nmse,
        d.nn_ber,
        d.base_ber,
        d.nn_ber / d.base_ber
    );
}

#[test]
fn desk_second_pass_refines_first_pass() {
    let d = desk();
    assert!(
        d.nn_nmse <= d.stage1_nmse,
        "final CSI NMSE {} should not exceed the first-pass NMSE {}",
        d.nn_nmse,
        d.stage1_nmse
    );
    println!(
        "desk refinement: PASS (first pass {:.4} -> final {:.4})",
        d.stage1_nmse, d.nn_nmse
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: a model trained at 5 dB generalizes monotonically over
// 0..14 dB (Spearman rank correlation <= -0.9 between SNR and NMSE).
// ---------------------------------------------------------------------------

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let mut ranks = vec![0.0; vals.len()];
        for (r, &i) in idx.iter().enumerate() {
            ranks[i] = r as f64;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let d2: f64 = rx.iter().zip(ry.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn criterion_7_snr_generalization_trend() {
    let d = desk();
    let mut cfg = d.cfg.clone();
    cfg.eval.rho_list = vec![0.2];
    cfg.eval.max_samples = 20_000;
    let rows = sweep(ReceiverKind::Unfolded(&d.model), &cfg).unwrap();
    assert_eq!(rows.len(), 8);
    let snrs: Vec<f64> = rows.iter().map(|r| r.snr_db).collect();
    let nmses: Vec<f64> = rows.iter().map(|r| r.nmse).collect();
    let rho_s = spearman(&snrs, &nmses);
    assert!(
        rho_s <= -0.9,
        "Spearman(SNR, NMSE) = {rho_s}, NMSE curve: {nmses:?}"
    );
    println!(
        "ACCEPTANCE 7 SNR generalization: PASS (Spearman {rho_s:.3}, NMSE {:?})",
        nmses.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: power-split robustness protocol completes with full CSV, and
// baseline BER at 10 dB is non-increasing as the test split shrinks.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_ppc_robustness_protocol() {
    let d = desk();
    let mut cfg = d.cfg.clone();
    cfg.eval.rho_list = vec![0.05, 0.10, 0.15];
    cfg.eval.max_samples = 10_000;

    let mut rows = sweep(ReceiverKind::Baseline { iters: 3 }, &cfg).unwrap();
    rows.extend(sweep(ReceiverKind::Unfolded(&d.model), &cfg).unwrap());
    assert_eq!(rows.len(), 2 * 8 * 3, "one row per (method, snr, rho)");

    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("ppc.csv");
    append_rows(&csv_path, &rows).unwrap();
    let parsed = parse_metrics_csv(&csv_path).unwrap();
    assert_eq!(parsed, rows, "CSV round trip");

    // Baseline BER at 10 dB, 1e4 frames per point, across descending splits.
    let mut bers = Vec::new();
    for &rho in &[0.20, 0.15, 0.10, 0.05] {
        let link = LinkConfig::new(8, 64, rho, 1.0, 0.0).unwrap().with_snr_db(10.0);
        let row = evaluate_point(
            ReceiverKind::Baseline { iters: 3 },
            &link,
            10.0,
            10_000,
            u64::MAX,
            false,
            point_seed(cfg.train.seed, 10.0, rho),
        )
        .unwrap();
        bers.push(row.ber);
    }
    for w in bers.windows(2) {
        assert!(
            w[1] <= w[0],
            "baseline BER must not increase as rho shrinks: {bers:?}"
        );
    }
    println!(
        "ACCEPTANCE 8 PPC robustness: PASS ({} CSV rows; baseline BER at 10 dB over rho 0.20->0.05: {:?})",
        rows.len(),
        bers.iter().map(|v| (v * 1e5).round() / 1e5).collect::<Vec<_>>()
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: metrics rows are reproducible bit-for-bit from their recorded
// seed (wall time is informational and excluded).
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_reproducibility() {
    let link = LinkConfig::new(2, 8, 0.2, 1.0, 0.0).unwrap().with_snr_db(6.0);
    let p = walsh_matrix(8, 2).unwrap();
    let model = UnfoldedModel::init(link, &p, 909).unwrap();

    for rx in [ReceiverKind::Baseline { iters: 3 }, ReceiverKind::Unfolded(&model)] {
        let seed = point_seed(909, 6.0, 0.2);
        let a = evaluate_point(rx, &link, 6.0, 500, u64::MAX, false, seed).unwrap();
        let b = evaluate_point(rx, &link, 6.0, 500, u64::MAX, false, seed).unwrap();
        assert_eq!(a.nmse.to_bits(), b.nmse.to_bits(), "{} nmse", a.method);
        assert_eq!(a.ber.to_bits(), b.ber.to_bits(), "{} ber", a.method);
        assert_eq!(a.samples_used, b.samples_used);
        assert_eq!(a.bit_errors, b.bit_errors);
        assert_eq!(a.seed, b.seed);

        // The CSV layer preserves the exact float values.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("row.csv");
        append_rows(&path, std::slice::from_ref(&a)).unwrap();
        let back: Vec<MetricsRow> = parse_metrics_csv(&path).unwrap();
        assert_eq!(back[0].nmse.to_bits(), a.nmse.to_bits());
        assert_eq!(back[0].ber.to_bits(), a.ber.to_bits());
        assert_eq!(back[0].seed, a.seed);
    }
    println!("ACCEPTANCE 9 reproducibility: PASS (both receivers, bit-identical rows)");
}

// ---------------------------------------------------------------------------
// Cross-module sanity used by several criteria above: the lifted composition
// identity that ties the real pipeline to the complex one.
// ---------------------------------------------------------------------------

#[test]
fn lifted_composition_identity_holds_on_noiseless_frames() {
    let link = LinkConfig::new(8, 64, 0.2, 1.0, 0.0).unwrap();
    let p = walsh_matrix(64, 8).unwrap();
    for i in 0..10 {
        let (frame, sample) = gen_frame(&link, &p, &mut frame_rng(7007, i)).unwrap();
        let want = link.csi_scale() * p.lifted().dot(&sample.h_label)
            + link.ulus_scale() * &sample.d_label;
        let err = (&sample.x_tilde - &want).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "frame {i}: {err}");
        // And the stacked labels match the complex fields.
        assert_eq!(complex_to_real_stack(frame.h.view()), sample.h_label);
    }
}

// Keep the unused-import lint honest: nmse_sample is exercised indirectly
// through evaluate_point, but the identity below pins its definition at the
// acceptance level too.
#[test]
fn nmse_sample_definition() {
    let t = Array1::from_vec(vec![2.0, 0.0]);
    let e = Array1::from_vec(vec![1.0, 0.0]);
    assert_eq!(nmse_sample(t.view(), e.view()).unwrap(), 0.25);
}

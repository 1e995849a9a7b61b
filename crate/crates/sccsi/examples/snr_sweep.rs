//! NMSE/BER versus SNR for both receivers, written as CSV and SVG charts.
//! Trains a reduced model first, so expect a couple of minutes.
//!
//! ```sh
//! cargo run --release --example snr_sweep
//! ```

use sccsi::datagen::{frame_rng, gen_dataset, walsh_matrix};
use sccsi::harness::plot::{write_svg, PlotMetric};
use sccsi::harness::{append_rows, sweep, ExperimentConfig, ReceiverKind};
use sccsi::nn::TrainHyper;
use sccsi::unfolded::{train_subnet_by_subnet, StageData, UnfoldedModel};

fn main() {
    let mut cfg = ExperimentConfig::desk();
    cfg.link.n = 4;
    cfg.link.m = 32;
    cfg.train.samples = 8_000;
    cfg.train.iters = 1_500;
    cfg.eval.rho_list = vec![0.2];
    cfg.eval.max_samples = 4_000;

    let link = cfg.link_config(cfg.train.snr_db).unwrap();
    let p = walsh_matrix(link.m_frame, link.n_bs).unwrap();
    println!("training reduced model (N=4, M=32) ...");
    let train_set = gen_dataset(cfg.train.samples, &link, cfg.train.snr_db, cfg.train.seed).unwrap();
    let hyper = TrainHyper { lr: cfg.train.lr, max_iters: cfg.train.iters, ..Default::default() };
    let model = UnfoldedModel::init(link, &p, cfg.train.seed).unwrap();
    let (trained, _) = train_subnet_by_subnet(
        StageData::Shared(&train_set),
        model,
        &hyper,
        &mut frame_rng(cfg.train.seed, u64::MAX - 2),
    )
    .unwrap();

    println!("sweeping {:?} dB ...", cfg.eval.snr_db_list);
    let mut rows = sweep(ReceiverKind::Baseline { iters: 3 }, &cfg).unwrap();
    rows.extend(sweep(ReceiverKind::Unfolded(&trained), &cfg).unwrap());

    println!("{:>7} {:>10} {:>11} {:>11}", "snr_db", "method", "nmse", "ber");
    for row in &rows {
        println!("{:>7} {:>10} {:>11.5} {:>11.5}", row.snr_db, row.method, row.nmse, row.ber);
    }

    let out_dir = std::env::temp_dir();
    let csv = out_dir.join("sccsi_snr_sweep.csv");
    let _ = std::fs::remove_file(&csv);
    append_rows(&csv, &rows).unwrap();
    write_svg(&out_dir.join("sccsi_snr_sweep_nmse.svg"), &rows, PlotMetric::Nmse, "NMSE vs SNR")
        .unwrap();
    write_svg(&out_dir.join("sccsi_snr_sweep_ber.svg"), &rows, PlotMetric::Ber, "BER vs SNR")
        .unwrap();
    println!("\nwrote {} plus matching _nmse.svg / _ber.svg charts", csv.display());
}

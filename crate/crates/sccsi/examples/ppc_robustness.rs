//! Power-split robustness protocol: a model trained at rho = 0.2 is tested
//! at rho in {0.05, 0.10, 0.15, 0.20} across the SNR grid. Trains a reduced
//! model first (couple of minutes).
//!
//! ```sh
//! cargo run --release --example ppc_robustness
//! ```

use sccsi::datagen::{frame_rng, gen_dataset, walsh_matrix};
use sccsi::harness::{append_rows, sweep, ExperimentConfig, ReceiverKind};
use sccsi::nn::TrainHyper;
use sccsi::unfolded::{train_subnet_by_subnet, StageData, UnfoldedModel};

fn main() {
    let mut cfg = ExperimentConfig::desk();
    cfg.link.n = 4;
    cfg.link.m = 32;
    cfg.train.samples = 8_000;
    cfg.train.iters = 1_500;
    cfg.eval.snr_db_list = vec![0.0, 5.0, 10.0];
    cfg.eval.rho_list = vec![0.05, 0.10, 0.15, 0.20];
    cfg.eval.max_samples = 4_000;

    let link = cfg.link_config(cfg.train.snr_db).unwrap();
    let p = walsh_matrix(link.m_frame, link.n_bs).unwrap();
    println!("training at rho = {} ...", link.rho);
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

    println!("testing at rho in {:?} ...", cfg.eval.rho_list);
    let mut rows = sweep(ReceiverKind::Baseline { iters: 3 }, &cfg).unwrap();
    rows.extend(sweep(ReceiverKind::Unfolded(&trained), &cfg).unwrap());

    for &snr in &cfg.eval.snr_db_list {
        println!("\nSNR {snr} dB:");
        println!("{:>6} {:>10} {:>11} {:>11}", "rho", "method", "nmse", "ber");
        for row in rows.iter().filter(|r| r.snr_db == snr) {
            println!("{:>6} {:>10} {:>11.5} {:>11.5}", row.rho, row.method, row.nmse, row.ber);
        }
    }

    let csv = std::env::temp_dir().join("sccsi_ppc_robustness.csv");
    let _ = std::fs::remove_file(&csv);
    append_rows(&csv, &rows).unwrap();
    println!("\nwrote {}", csv.display());
}

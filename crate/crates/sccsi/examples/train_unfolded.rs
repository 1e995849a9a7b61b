//! End-to-end demo at a reduced size: train the four subnets sequentially,
//! compare against the iterative baseline, and round-trip a checkpoint.
//!
//! Takes roughly a minute.
//!
//! ```sh
//! cargo run --release --example train_unfolded
//! ```

use sccsi::baseline::run_baseline;
use sccsi::datagen::{frame_rng, gen_dataset, gen_frames, walsh_matrix};
use sccsi::harness::{load_model, save_model};
use sccsi::link::{complex_to_real_stack, nmse, nmse_sample, LinkConfig};
use sccsi::nn::TrainHyper;
use sccsi::unfolded::{train_subnet_by_subnet, StageData, UnfoldedModel};

fn main() {
    let link = LinkConfig::new(4, 32, 0.2, 1.0, 0.0).unwrap().with_snr_db(5.0);
    let p = walsh_matrix(32, 4).unwrap();

    println!("generating 8000 training samples at 5 dB ...");
    let train_set = gen_dataset(8_000, &link, 5.0, 100).unwrap();

    let hyper = TrainHyper { lr: 1e-3, batch_size: 200, max_iters: 1_500, ..Default::default() };
    let model = UnfoldedModel::init(link, &p, 101).unwrap();
    println!("training subnet by subnet ({} iterations each) ...", hyper.max_iters);
    let (trained, report) =
        train_subnet_by_subnet(StageData::Shared(&train_set), model, &hyper, &mut frame_rng(102, 0))
            .unwrap();
    for stage in &report.stages {
        println!(
            "  {:<9} loss {:>10.4e} -> {:>10.4e}",
            stage.stage.name(),
            stage.losses[0],
            stage.losses.last().unwrap()
        );
    }

    // Fresh frames for evaluation.
    let frames = gen_frames(4_000, &link, &p, 103).unwrap();
    let x = ndarray::Array2::from_shape_fn((frames.len(), 64), |(i, j)| frames[i].1.x_tilde[j]);
    let labels = ndarray::Array2::from_shape_fn((frames.len(), 8), |(i, j)| frames[i].1.h_label[j]);
    let (h_hat, _) = trained.forward(&x).unwrap();
    let nn_nmse = nmse(&labels, &h_hat).unwrap();

    let mut base_nmse = 0.0;
    for (frame, sample) in &frames {
        let res = run_baseline(&frame.r, &frame.g, &p, &link, 3).unwrap();
        let est = complex_to_real_stack(res.h_est.view());
        base_nmse += nmse_sample(sample.h_label.view(), est.view()).unwrap();
    }
    base_nmse /= frames.len() as f64;

    println!("\nCSI recovery at 5 dB over {} fresh frames:", frames.len());
    println!("  unfolded network NMSE : {nn_nmse:.4}");
    println!("  baseline (3 it) NMSE  : {base_nmse:.4}");

    // Checkpoint round trip.
    let dir = std::env::temp_dir().join("sccsi_example_ckpt.bin");
    save_model(&trained, &dir).unwrap();
    let reloaded = load_model(&dir).unwrap();
    let (h_again, _) = reloaded.forward(&x).unwrap();
    assert_eq!(h_hat, h_again, "reloaded model must reproduce identical outputs");
    println!("\ncheckpoint round trip OK ({} )", dir.display());
}

//! Iterative MMSE receiver on Monte-Carlo frames: NMSE/BER per iteration
//! count at one operating point.
//!
//! ```sh
//! cargo run --release --example baseline_receiver
//! ```

use sccsi::baseline::run_baseline;
use sccsi::datagen::{gen_frames, walsh_matrix};
use sccsi::link::{complex_to_real_stack, nmse_sample, qpsk_demodulate, LinkConfig};

fn main() {
    let link = LinkConfig::new(8, 64, 0.2, 1.0, 0.0).unwrap().with_snr_db(5.0);
    let p = walsh_matrix(64, 8).unwrap();
    let frames = gen_frames(5_000, &link, &p, 42).unwrap();
    println!(
        "N={}, M={}, rho={}, 5 dB, {} frames",
        link.n_bs,
        link.m_frame,
        link.rho,
        frames.len()
    );
    println!("{:>6} {:>12} {:>12}", "iters", "NMSE", "BER");

    for iters in 1..=4 {
        let mut nmse_acc = 0.0;
        let mut errs = 0usize;
        let mut bits = 0usize;
        for (frame, sample) in &frames {
            let res = run_baseline(&frame.r, &frame.g, &p, &link, iters).unwrap();
            let est = complex_to_real_stack(res.h_est.view());
            nmse_acc += nmse_sample(sample.h_label.view(), est.view()).unwrap();
            let decided = qpsk_demodulate(res.d_est.view());
            errs += decided.iter().zip(frame.bits.iter()).filter(|(a, b)| a != b).count();
            bits += frame.bits.len();
        }
        println!(
            "{iters:>6} {:>12.5} {:>12.5}",
            nmse_acc / frames.len() as f64,
            errs as f64 / bits as f64
        );
    }
}

//! Walsh code construction and the spread/despread identities.
//!
//! ```sh
//! cargo run --release --example walsh_spreading
//! ```

use ndarray::Array1;
use sccsi::datagen::{frame_rng, gen_channel, walsh_matrix};
use sccsi::link::{complex_to_real_stack, qpsk_modulate, spread_superimpose, LinkConfig};
use sccsi::unfolded::despread_real;

fn main() {
    let p = walsh_matrix(8, 3).unwrap();
    println!("Walsh spreading matrix P (M=8 rows, N=3 codes):");
    for row in p.p().rows() {
        let signs: Vec<&str> = row.iter().map(|&v| if v > 0.0 { "+" } else { "-" }).collect();
        println!("  [{}]", signs.join(" "));
    }

    // Exact code orthogonality in integer arithmetic.
    let signs: Vec<i64> = p.p().iter().map(|&v| v as i64).collect();
    println!("\nP^T P (integer arithmetic):");
    for a in 0..3 {
        let row: Vec<i64> = (0..3)
            .map(|b| (0..8).map(|k| signs[k * 3 + a] * signs[k * 3 + b]).sum())
            .collect();
        println!("  {row:?}");
    }

    // Compose a frame signal and recover the CSI direction by despreading.
    let cfg = LinkConfig::new(3, 8, 0.2, 1.0, 0.0).unwrap();
    let mut rng = frame_rng(7, 0);
    let h = gen_channel(3, &mut rng);
    let bits: Vec<u8> = (0..16).map(|_| rand::Rng::random_range(&mut rng, 0..2u8)).collect();
    let d = qpsk_modulate(&bits).unwrap();
    let x = spread_superimpose(&h, &d, &p, &cfg).unwrap();

    let x_tilde = complex_to_real_stack(x.view());
    let h_tilde = complex_to_real_stack(h.view());
    let despread = despread_real(&x_tilde, p.lifted());
    let scale = 8.0 * cfg.csi_scale(); // M * sqrt(rho E / N)
    let csi_direction: Array1<f64> = despread.mapv(|v| v / scale);

    println!("\nnoiseless composition, then despread / (M sqrt(rho E / N)):");
    println!("  true h~      : {:?}", h_tilde.to_vec());
    println!("  recovered    : {:?}", csi_direction.to_vec());
    println!("  (differences are the data term leaking through the code subspace)");
}

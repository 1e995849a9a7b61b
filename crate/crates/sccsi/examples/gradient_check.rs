//! Backpropagation vs central finite differences on a random subnet.
//!
//! ```sh
//! cargo run --release --example gradient_check
//! ```

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sccsi::nn::{gradcheck, mse_grad, SubnetParams};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = SubnetParams::new(4, 8, 4, 0.2, 0.2, &mut rng);
    let x = Array2::from_shape_fn((8, 4), |_| StandardNormal.sample(&mut rng));
    let label = Array2::from_shape_fn((8, 4), |_| StandardNormal.sample(&mut rng));
    let lambda = 1e-3;

    let (y, cache) = net.clone().forward_train(&x).unwrap();
    let upstream = mse_grad(&y, &label);
    let (analytic, _) = net.backward(&cache, &upstream, lambda).unwrap();
    let numeric = gradcheck::fd_gradients(&net, &x, &label, lambda, 1e-5);

    let names = ["w1", "b1", "w2", "b2", "gamma_in", "beta_in", "gamma_hidden", "beta_hidden"];
    println!("{:>14} {:>10} {:>14}", "tensor", "params", "max rel err");
    for ((name, a), n) in names.iter().zip(analytic.slices()).zip(numeric.slices()) {
        let mut worst = 0.0f64;
        for (&ga, &gn) in a.iter().zip(n.iter()) {
            let denom = ga.abs().max(gn.abs()).max(1e-3);
            worst = worst.max((ga - gn).abs() / denom);
        }
        println!("{name:>14} {:>10} {worst:>14.3e}", a.len());
    }
    let overall = gradcheck::max_relative_error(&analytic, &numeric);
    println!("\noverall max relative error: {overall:.3e}");
    assert!(overall <= 1e-4);
    println!("backpropagation agrees with the finite-difference oracle");
}

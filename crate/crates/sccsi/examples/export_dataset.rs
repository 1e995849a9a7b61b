//! Dataset export to the flat binary container (plus text manifest) and a
//! verified reload.
//!
//! ```sh
//! cargo run --release --example export_dataset
//! ```

use sccsi::datagen::{gen_dataset, read_dataset, write_dataset};
use sccsi::link::LinkConfig;

fn main() {
    let link = LinkConfig::new(8, 64, 0.2, 1.0, 0.0).unwrap();
    let ds = gen_dataset(1_000, &link, 5.0, 2024).unwrap();
    println!(
        "generated {} samples: x~ in R^{}, h~ in R^{}, d~ in R^{}",
        ds.count,
        ds.samples[0].x_tilde.len(),
        ds.samples[0].h_label.len(),
        ds.samples[0].d_label.len()
    );

    let path = std::env::temp_dir().join("sccsi_dataset.bin");
    write_dataset(&ds, &path).unwrap();
    let bytes = std::fs::metadata(&path).unwrap().len();
    println!("wrote {} ({bytes} bytes) and sidecar manifest", path.display());

    let back = read_dataset(&path).unwrap();
    assert_eq!(back.samples, ds.samples);
    assert_eq!(back.seed, ds.seed);
    println!(
        "reload verified: count={}, snr={} dB, seed={}",
        back.count, back.snr_db, back.seed
    );

    let manifest = {
        let mut p = path.as_os_str().to_owned();
        p.push(".manifest");
        std::path::PathBuf::from(p)
    };
    println!("\nmanifest:\n{}", std::fs::read_to_string(manifest).unwrap());
}

//! Desk-scale Fashion-MNIST run: fetch the dataset if needed, then train a
//! 1-layer tensor-kernel network under the standard protocol (Adam 2e-4,
//! batch 100, per-epoch test evaluation, best-epoch selection).
//!
//! ```bash
//! # ~10-15 minutes on a multicore desktop:
//! cargo run --release -p tacnn --example train_fashion_mnist -- 1 20
//! # kernels and epochs are positional; defaults are 1 kernel, 20 epochs
//! ```

use std::path::PathBuf;
use tacnn::cli::{cmd_fetch, cmd_train, PartialConfig, RunConfig};
use tacnn::data_io::DEFAULT_BASE_URL;

fn main() -> tacnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let kernels: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);

    let data_dir = PathBuf::from("data");
    cmd_fetch(DEFAULT_BASE_URL, &data_dir)?;

    let config = RunConfig::resolve(PartialConfig {
        kernels: Some(vec![kernels]),
        epochs: Some(epochs),
        seeds: Some(vec![0]),
        data_dir: Some(data_dir),
        out_dir: Some(PathBuf::from("runs")),
        ..Default::default()
    })?;
    let outcome = cmd_train(&config)?;
    let best = outcome.per_seed[0].best_test_acc;
    println!(
        "\n1-layer, {kernels} kernel(s), {epochs} epochs: best test accuracy {:.2}%",
        100.0 * best
    );
    println!("metrics: {}", outcome.run_dir.join("seed0/metrics.csv").display());
    Ok(())
}

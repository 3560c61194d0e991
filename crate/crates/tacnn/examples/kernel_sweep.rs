//! Miniature accuracy-vs-kernel-count sweep on synthetic data, comparing
//! tensor kernels against the plain-convolution baseline at equal kernel
//! counts. The real sweep over Fashion-MNIST is `tacnn bench`.
//!
//! ```bash
//! cargo run --release -p tacnn --example kernel_sweep
//! ```

use std::path::PathBuf;
use tacnn::cli::{cmd_train, PartialConfig, RunConfig};
use tacnn::data_io::{synthetic_raw_dataset, write_split, Split};
use tacnn::layers::ConvFamily;

fn main() -> tacnn::Result<()> {
    let root = PathBuf::from("target/kernel_sweep_demo");
    let _ = std::fs::remove_dir_all(&root);
    let data_dir = root.join("data");
    write_split(&data_dir, Split::Train, &synthetic_raw_dataset(10, 150, 1))?;
    write_split(&data_dir, Split::Test, &synthetic_raw_dataset(10, 30, 2))?;

    println!(
        "{:<8} {:<8} {:>10} {:>10}",
        "family", "kernels", "params", "best_acc"
    );
    for family in [ConvFamily::Tensor, ConvFamily::Baseline] {
        for kernels in [1usize, 2, 4] {
            let config = RunConfig::resolve(PartialConfig {
                model: Some(family),
                kernels: Some(vec![kernels]),
                epochs: Some(6),
                batch_size: Some(50),
                learning_rate: Some(5e-4),
                seeds: Some(vec![0]),
                data_dir: Some(data_dir.clone()),
                out_dir: Some(root.join(format!("runs-{}-{kernels}", family.as_str()))),
                deterministic: Some(true),
                ..Default::default()
            })?;
            let outcome = cmd_train(&config)?;
            println!(
                "{:<8} {:<8} {:>10} {:>10.4}",
                family.as_str(),
                kernels,
                outcome.parameter_total,
                outcome.per_seed[0].best_test_acc
            );
        }
    }
    println!("\n(plot-ready CSVs for the full grid come from `tacnn bench --sweep ...`)");
    Ok(())
}

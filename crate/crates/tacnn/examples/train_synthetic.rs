//! End-to-end training demo with no dataset download: generate a synthetic
//! striped 28x28 dataset, train a small tensor-kernel network, checkpoint
//! it, and score the checkpoint again from disk.
//!
//! ```bash
//! cargo run --release -p tacnn --example train_synthetic
//! ```

use std::path::PathBuf;
use tacnn::cli::{cmd_train, evaluate_checkpoint, PartialConfig, RunConfig};
use tacnn::data_io::{synthetic_raw_dataset, write_split, Split};
use tacnn::precision::Precision;

fn main() -> tacnn::Result<()> {
    let root = PathBuf::from("target/train_synthetic_demo");
    let _ = std::fs::remove_dir_all(&root);
    let data_dir = root.join("data");
    write_split(&data_dir, Split::Train, &synthetic_raw_dataset(10, 200, 1))?;
    write_split(&data_dir, Split::Test, &synthetic_raw_dataset(10, 40, 2))?;

    let config = RunConfig::resolve(PartialConfig {
        kernels: Some(vec![2]),
        epochs: Some(8),
        batch_size: Some(100),
        learning_rate: Some(5e-4),
        seeds: Some(vec![0, 1]),
        data_dir: Some(data_dir.clone()),
        out_dir: Some(root.join("runs")),
        deterministic: Some(true),
        ..Default::default()
    })?;
    let outcome = cmd_train(&config)?;

    println!("\nrun directory: {}", outcome.run_dir.display());
    println!("per-seed best accuracies: {:?}", outcome.best_accuracies());

    // the best checkpoint reproduces the recorded accuracy
    let best = outcome.run_dir.join("seed0/best.ckpt");
    let (acc, loss) = evaluate_checkpoint(&best, &data_dir, Split::Test, Precision::F32, 2)?;
    println!("reloaded seed0 best.ckpt: accuracy {acc:.4}, mean loss {loss:.4}");
    Ok(())
}

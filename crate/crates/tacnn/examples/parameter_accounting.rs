//! Exact parameter accounting across the benchmark grid: 1-layer tensor and
//! baseline nets at kernel counts 2^0..2^11, plus the 2-layer variants.
//! The fully-connected head dominates both families, which is why the
//! tensor net's exponentially larger conv stage barely moves the total.
//!
//! ```bash
//! cargo run --release -p tacnn --example parameter_accounting
//! ```

use tacnn::layers::{ConvFamily, ModelSpec};

fn spec(family: ConvFamily, kernels: &[usize]) -> tacnn::Result<ModelSpec> {
    ModelSpec::conv_net(family, (1, 28, 28), kernels, 3, 1, 128, 10)
}

fn main() -> tacnn::Result<()> {
    println!(
        "{:<8} {:<10} {:>12} {:>12} {:>12}",
        "family", "kernels", "conv params", "dense params", "total"
    );
    for m in 0..=11u32 {
        let k = 2usize.pow(m);
        for family in [ConvFamily::Tensor, ConvFamily::Baseline] {
            let breakdown = spec(family, &[k])?.parameter_count();
            let conv: usize = breakdown
                .stages
                .iter()
                .filter(|s| s.label.contains("conv"))
                .map(|s| s.params)
                .sum();
            let dense: usize = breakdown
                .stages
                .iter()
                .filter(|s| s.label.contains("dense"))
                .map(|s| s.params)
                .sum();
            println!(
                "{:<8} {:<10} {:>12} {:>12} {:>12}",
                family.as_str(),
                k,
                conv,
                dense,
                breakdown.total
            );
        }
    }

    println!("\n2-layer tensor nets:");
    for k in [16usize, 32, 64] {
        let breakdown = spec(ConvFamily::Tensor, &[k, k])?.parameter_count();
        let label = format!("{k}x{k}");
        println!("{:<8} {:<10} total {:>12}", "tacnn", label, breakdown.total);
        for stage in &breakdown.stages {
            println!("    {:<8} {:>12}", stage.label, stage.params);
        }
    }
    Ok(())
}

//! The core primitive, step by step: encode pixels into local 2-vectors,
//! form a patch state, and contract it with a tensor kernel.
//!
//! ```bash
//! cargo run --release -p tacnn --example encode_and_contract
//! ```

use tacnn::encoding::{encode_pixel, extract_patch, FeaturePlane, PatchGeometry};
use tacnn::tensor_core::{
    basis_weight, contract, grad_coefficients, grad_pixels, Configuration, PatchState,
    TensorKernel,
};

fn main() -> tacnn::Result<()> {
    // Each pixel x in [0,1] becomes the 2-vector (x, 1-x).
    for x in [0.0, 0.25, 1.0] {
        let (a, b) = encode_pixel(x)?;
        println!("encode({x}) = ({a}, {b})");
    }

    // A 2-pixel patch and a fully explicit order-2 kernel. Coefficients are
    // indexed by configuration bits, first pixel at the most significant bit.
    let patch = PatchState::from_pixels(&[0.5, 0.25])?;
    let kernel = TensorKernel::new(2, vec![1.0, 2.0, 3.0, 4.0])?;
    println!("\ncontract = {}", contract(&patch, &kernel)?);

    // The contraction is a weighted average: basis weights are nonnegative
    // and sum to one.
    for bits in 0..4u32 {
        let config = Configuration::new(bits, 2)?;
        println!("beta(s={bits:02b}) = {}", basis_weight(&patch, config)?);
    }
    let beta = grad_coefficients(&patch);
    println!("sum of basis weights = {}", beta.iter().sum::<f64>());

    // Exact derivatives with respect to coefficients and pixels.
    println!("d contract / d c = {beta:?}");
    println!("d contract / d x = {:?}", grad_pixels(&patch, &kernel)?);

    // The same machinery over a full plane: a 3x3 window slides over a 4x4
    // image, giving a 2x2 output grid of order-9 contractions.
    let image = FeaturePlane::new(4, 4, (0..16).map(|i| i as f64 / 15.0).collect())?;
    let geometry = PatchGeometry::new(3, 1, 4, 4)?;
    let window_kernel = TensorKernel::constant(9, 1.0)?;
    println!("\n3x3 sliding window over a 4x4 image:");
    for row in 0..geometry.output_height() {
        for col in 0..geometry.output_width() {
            let patch = extract_patch(&image, (row, col), &geometry)?;
            let y = contract(&patch, &window_kernel)?;
            println!("  position ({row},{col}) -> {y:.6} (all-ones kernel, so exactly 1)");
        }
    }
    Ok(())
}

//! Run the oracle suites: brute-force contraction equivalence, basis-weight
//! invariants, and finite-difference gradient checks up to full 1- and
//! 2-layer models.
//!
//! ```bash
//! cargo run --release -p tacnn --example gradient_verification
//! ```
//!
//! The same suites back the `tacnn gradcheck` command.

use tacnn::oracle::suites;

fn main() -> tacnn::Result<()> {
    let seed = 7;
    let reports = vec![
        suites::contract_equivalence(seed, 200)?,
        suites::basis_normalization(seed, 100)?,
        suites::multilinearity(seed, 200)?,
        suites::coefficient_gradients(seed, 20)?,
        suites::pixel_gradients(seed, 20)?,
        suites::normalization_gradient(seed, 20)?,
        suites::normalization_range(seed, 500)?,
        suites::model_gradients(1, seed)?,
        suites::model_gradients(2, seed)?,
    ];
    for report in &reports {
        println!("{}", report.summary_line());
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed == 0 {
        println!("all {} suites passed", reports.len());
        Ok(())
    } else {
        Err(tacnn::Error::Numeric {
            context: "gradient_verification".into(),
            message: format!("{failed} suites failed"),
        })
    }
}

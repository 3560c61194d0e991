//! Independent brute-force references and finite-difference checks.
//!
//! Everything here is intentionally naive: term-by-term enumeration and
//! central differences, sharing no computational code with the production
//! paths it certifies. All checks run in f64. Used by tests and by the
//! `gradcheck` CLI command.

use crate::encoding::{FeaturePlane, PatchGeometry};
use crate::error::{Error, Result};
use crate::tensor_core::{PatchState, TensorKernel};

/// Enumeration cost guard: 2^16 terms is the most the oracle will sum.
pub const MAX_BRUTE_FORCE_ORDER: usize = 16;

/// Denominator floor for comparisons against central differences. With step
/// h = 1e-5 in f64, truncation (~h^2) and rounding (~eps/h) cap the
/// certifiable absolute agreement near 1e-10 no matter how exact the
/// analytic gradient is, so entries smaller than this floor are held to an
/// absolute standard of floor * tolerance instead of a pure ratio.
pub const FD_DENOMINATOR_FLOOR: f64 = 1e-4;

/// Worst-case summary of one verification suite.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub suite: String,
    pub cases: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub worst_case: String,
    pub tolerance: f64,
    denominator_floor: f64,
}

impl OracleReport {
    /// Report for exactly-computable comparisons (both routes limited only
    /// by f64 rounding).
    pub fn new(suite: impl Into<String>, tolerance: f64) -> Self {
        OracleReport {
            suite: suite.into(),
            cases: 0,
            max_abs_err: 0.0,
            max_rel_err: 0.0,
            worst_case: String::from("none"),
            tolerance,
            denominator_floor: 1e-12,
        }
    }

    /// Report for comparisons against finite differences; uses
    /// [`FD_DENOMINATOR_FLOOR`].
    pub fn against_finite_differences(suite: impl Into<String>, tolerance: f64) -> Self {
        OracleReport {
            denominator_floor: FD_DENOMINATOR_FLOOR,
            ..OracleReport::new(suite, tolerance)
        }
    }

    /// Record one comparison; keeps the worst relative error seen.
    pub fn record(&mut self, expected: f64, actual: f64, location: impl FnOnce() -> String) {
        self.record_with_scale(expected, actual, 0.0, location);
    }

    /// Record a comparison whose operands are sums that may cancel below
    /// the rounding noise of their own terms. `scale` is the magnitude of
    /// the summands (e.g. sum of |terms|); the denominator is floored at
    /// 1e-3 * scale so the tolerance asserts agreement in ulps of the
    /// computation rather than an unattainable ratio on a cancelled value.
    pub fn record_with_scale(
        &mut self,
        expected: f64,
        actual: f64,
        scale: f64,
        location: impl FnOnce() -> String,
    ) {
        self.cases += 1;
        let abs = (expected - actual).abs();
        let denom = expected
            .abs()
            .max(actual.abs())
            .max(self.denominator_floor)
            .max(1e-3 * scale);
        let rel = abs / denom;
        if abs > self.max_abs_err {
            self.max_abs_err = abs;
        }
        if rel > self.max_rel_err {
            self.max_rel_err = rel;
            self.worst_case = format!(
                "{} (expected {expected:.12e}, actual {actual:.12e})",
                location()
            );
        }
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}: {} | {} cases | max abs {:.3e} | max rel {:.3e} | tol {:.1e} | worst: {}",
            self.suite,
            if self.passed() { "PASS" } else { "FAIL" },
            self.cases,
            self.max_abs_err,
            self.max_rel_err,
            self.tolerance,
            self.worst_case
        )
    }
}

/// |a - b| / max(|a|, |b|, 1e-12).
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Literal 2^N-term evaluation of the patch/kernel inner product.
///
/// Independent of the folding implementation: each term's basis weight is
/// rebuilt from scratch by walking the configuration bits.
pub fn brute_force_contract(patch: &PatchState<f64>, kernel: &TensorKernel<f64>) -> Result<f64> {
    Ok(brute_force_contract_scaled(patch, kernel)?.0)
}

/// [`brute_force_contract`] plus the sum of absolute term magnitudes, the
/// natural scale against which rounding in either route should be judged.
pub fn brute_force_contract_scaled(
    patch: &PatchState<f64>,
    kernel: &TensorKernel<f64>,
) -> Result<(f64, f64)> {
    let n = patch.order();
    if n != kernel.order() {
        return Err(Error::dimension("oracle contract order", kernel.order(), n));
    }
    if n > MAX_BRUTE_FORCE_ORDER {
        return Err(Error::Guard {
            message: format!("order {n} exceeds brute-force guard {MAX_BRUTE_FORCE_ORDER}"),
        });
    }
    let coeffs = kernel.coefficients();
    let mut total = 0.0;
    let mut scale = 0.0;
    for s in 0..(1usize << n) {
        let mut weight = 1.0;
        for (k, &(a, b)) in patch.locals().iter().enumerate() {
            // pixel k+1 sits at bit n-(k+1)
            let bit = (s >> (n - k - 1)) & 1;
            weight *= if bit == 0 { a } else { b };
        }
        let term = coeffs[s] * weight;
        total += term;
        scale += term.abs();
    }
    Ok((total, scale))
}

/// Central finite differences of a scalar function, step `h` per coordinate.
pub fn finite_diff<F>(f: F, point: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut grads = Vec::with_capacity(point.len());
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        probe[i] = point[i] + step;
        let plus = f(&probe)?;
        probe[i] = point[i] - step;
        let minus = f(&probe)?;
        probe[i] = point[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::numeric(
                "finite_diff",
                format!("non-finite evaluation at coordinate {i}"),
            ));
        }
        grads.push((plus - minus) / (2.0 * step));
    }
    Ok(grads)
}

/// Single-channel tensor convolution evaluated position-by-position with
/// [`brute_force_contract`]. Certifies the layer forward path.
pub fn reference_single_layer_forward(
    image: &FeaturePlane<f64>,
    kernels: &[TensorKernel<f64>],
    geometry: &PatchGeometry,
) -> Result<Vec<FeaturePlane<f64>>> {
    let mut outputs = Vec::with_capacity(kernels.len());
    for kernel in kernels {
        let mut plane = FeaturePlane::zeros(geometry.output_height(), geometry.output_width());
        for row in 0..geometry.output_height() {
            for col in 0..geometry.output_width() {
                let patch = crate::encoding::extract_patch(image, (row, col), geometry)?;
                let y = brute_force_contract(&patch, kernel)?;
                plane.set(row, col, y);
            }
        }
        outputs.push(plane);
    }
    Ok(outputs)
}

/// Ready-made verification suites over random instances, shared by the
/// `gradcheck` command and the acceptance tests. Each returns an
/// [`OracleReport`] whose `passed()` reflects the suite tolerance.
pub mod suites {
    use super::{finite_diff, OracleReport};
    use crate::encoding::{normalize_backward, normalize_channel, FeaturePlane};
    use crate::layers::{ConvFamily, Model, ModelSpec};
    use crate::rng::stream_rng;
    use crate::tensor_core::{
        basis_weight, contract, grad_coefficients, grad_pixels, Configuration, PatchState,
        TensorKernel,
    };
    use crate::training::cross_entropy;
    use crate::Result;
    use rand::Rng;

    fn random_patch<R: Rng>(n: usize, rng: &mut R) -> PatchState<f64> {
        let pixels: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        PatchState::from_pixels(&pixels).expect("pixels drawn in range")
    }

    fn random_kernel<R: Rng>(n: usize, rng: &mut R) -> TensorKernel<f64> {
        let coeffs: Vec<f64> = (0..(1usize << n)).map(|_| rng.gen_range(-2.0..2.0)).collect();
        TensorKernel::new(n, coeffs).expect("finite coefficients")
    }

    /// Folding contraction vs. term-by-term enumeration, orders 1..=9.
    /// Signed coefficients can cancel the sum below the rounding noise of
    /// its own terms, so each comparison is scale-guarded by the term
    /// magnitude (see [`OracleReport::record_with_scale`]).
    pub fn contract_equivalence(seed: u64, instances_per_order: usize) -> Result<OracleReport> {
        let mut report = OracleReport::new("contract vs enumeration", 1e-12);
        for n in 1..=9usize {
            let mut rng = stream_rng(seed, "oracle-contract", n as u64);
            for case in 0..instances_per_order {
                let patch = random_patch(n, &mut rng);
                let kernel = random_kernel(n, &mut rng);
                let fast = contract(&patch, &kernel)?;
                let (slow, scale) = super::brute_force_contract_scaled(&patch, &kernel)?;
                report.record_with_scale(slow, fast, scale, || format!("order {n}, case {case}"));
            }
        }
        Ok(report)
    }

    /// d(contract)/d(coefficients) against central finite differences.
    pub fn coefficient_gradients(seed: u64, instances: usize) -> Result<OracleReport> {
        let mut report =
            OracleReport::against_finite_differences("coefficient gradients vs finite differences", 1e-6);
        let mut rng = stream_rng(seed, "oracle-coeff-grad", 0);
        for case in 0..instances {
            let n = rng.gen_range(1..=9usize);
            let patch = random_patch(n, &mut rng);
            let kernel = random_kernel(n, &mut rng);
            let analytic = grad_coefficients(&patch);
            let numeric = finite_diff(
                |c| contract(&patch, &TensorKernel::new(n, c.to_vec())?),
                kernel.coefficients(),
                1e-5,
            )?;
            for (idx, (a, m)) in analytic.iter().zip(numeric).enumerate() {
                report.record(m, *a, || format!("case {case}, order {n}, coefficient {idx}"));
            }
        }
        Ok(report)
    }

    /// d(contract)/d(pixels) against central finite differences.
    pub fn pixel_gradients(seed: u64, instances: usize) -> Result<OracleReport> {
        let mut report =
            OracleReport::against_finite_differences("pixel gradients vs finite differences", 1e-6);
        let mut rng = stream_rng(seed, "oracle-pixel-grad", 0);
        for case in 0..instances {
            let n = rng.gen_range(1..=9usize);
            // keep pixels away from the [0,1] boundary so probes stay valid
            let pixels: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
            let patch = PatchState::from_pixels(&pixels)?;
            let kernel = random_kernel(n, &mut rng);
            let analytic = grad_pixels(&patch, &kernel)?;
            let numeric = finite_diff(
                |p| contract(&PatchState::from_pixels(p)?, &kernel),
                &pixels,
                1e-5,
            )?;
            for (idx, (a, m)) in analytic.iter().zip(numeric).enumerate() {
                report.record(m, *a, || format!("case {case}, order {n}, pixel {idx}"));
            }
        }
        Ok(report)
    }

    /// Reverse-mode normalization derivative against finite differences.
    pub fn normalization_gradient(seed: u64, instances: usize) -> Result<OracleReport> {
        let mut report = OracleReport::against_finite_differences(
            "normalization backward vs finite differences",
            1e-6,
        );
        let mut rng = stream_rng(seed, "oracle-norm-grad", 0);
        for case in 0..instances {
            let raw_values: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let upstream_values: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let raw = FeaturePlane::new(4, 4, raw_values.clone())?;
            let upstream = FeaturePlane::new(4, 4, upstream_values.clone())?;
            let analytic = normalize_backward(&raw, &upstream)?;
            let numeric = finite_diff(
                |v| {
                    let out = normalize_channel(&FeaturePlane::new(4, 4, v.to_vec())?)?;
                    Ok(out
                        .values()
                        .iter()
                        .zip(&upstream_values)
                        .map(|(z, g)| z * g)
                        .sum())
                },
                &raw_values,
                1e-5,
            )?;
            for (idx, (a, m)) in analytic.values().iter().zip(numeric).enumerate() {
                report.record(m, *a, || format!("case {case}, position {idx}"));
            }
        }
        Ok(report)
    }

    /// Every parameter of a full conv-flatten-dense model against finite
    /// differences of the cross-entropy loss, on an 8x8 synthetic input.
    pub fn model_gradients(conv_layers: usize, seed: u64) -> Result<OracleReport> {
        let kernels: Vec<usize> = vec![2; conv_layers];
        let spec = ModelSpec::conv_net(ConvFamily::Tensor, (1, 8, 8), &kernels, 3, 1, 128, 10)?;
        let mut report = OracleReport::against_finite_differences(
            format!("{conv_layers}-layer model gradients vs finite differences"),
            1e-5,
        );
        let mut rng = stream_rng(seed, "oracle-model-grad", conv_layers as u64);
        let pixels: Vec<f64> = (0..64).map(|_| rng.gen::<f64>()).collect();
        let image = FeaturePlane::new(8, 8, pixels)?;
        let label = 3usize;

        let model = Model::<f64>::init(spec, seed)?;
        let (logits, trace) = model.forward_traced(std::slice::from_ref(&image))?;
        let (_, logit_grad) = cross_entropy(&logits, label)?;
        let analytic = model.backward(&trace, &logit_grad)?.flat();

        let mut probe = model.clone();
        let step = 1e-5;
        for idx in 0..model.param_count() {
            let base = model.param(idx).expect("index in range");
            probe.set_param(idx, base + step);
            let plus = {
                let l = probe.forward(std::slice::from_ref(&image))?;
                cross_entropy(&l, label)?.0
            };
            probe.set_param(idx, base - step);
            let minus = {
                let l = probe.forward(std::slice::from_ref(&image))?;
                cross_entropy(&l, label)?.0
            };
            probe.set_param(idx, base);
            let numeric = (plus - minus) / (2.0 * step);
            report.record(numeric, analytic[idx], || format!("parameter {idx}"));
        }
        Ok(report)
    }

    /// Basis weights sum to one and stay in [0,1]; checked against
    /// per-configuration products.
    pub fn basis_normalization(seed: u64, instances: usize) -> Result<OracleReport> {
        let mut report = OracleReport::new("basis-weight normalization", 1e-12);
        let mut rng = stream_rng(seed, "oracle-basis", 0);
        for case in 0..instances {
            let n = rng.gen_range(1..=9usize);
            let patch = random_patch(n, &mut rng);
            let beta = grad_coefficients(&patch);
            let sum: f64 = beta.iter().sum();
            report.record(1.0, sum, || format!("case {case}, order {n}, sum"));
            for (bits, b) in beta.iter().enumerate() {
                if !(0.0..=1.0).contains(b) {
                    report.record(0.0, *b, || format!("case {case}, config {bits} out of range"));
                }
            }
            // spot-check a few entries against the direct product route
            for _ in 0..4 {
                let bits = rng.gen_range(0..(1u32 << n));
                let direct = basis_weight(&patch, Configuration::new(bits, n)?)?;
                report.record(direct, beta[bits as usize], || {
                    format!("case {case}, config {bits}")
                });
            }
        }
        Ok(report)
    }

    /// Holding all pixels but one fixed, the contraction is affine in the
    /// remaining pixel: the midpoint output equals the endpoint average.
    pub fn multilinearity(seed: u64, instances: usize) -> Result<OracleReport> {
        let mut report = OracleReport::new("per-pixel multilinearity", 1e-12);
        let mut rng = stream_rng(seed, "oracle-multilinear", 0);
        for case in 0..instances {
            let n = rng.gen_range(1..=9usize);
            let pixels: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let kernel = random_kernel(n, &mut rng);
            let k = rng.gen_range(0..n);
            let at = |x: f64| -> Result<f64> {
                let mut p = pixels.clone();
                p[k] = x;
                contract(&PatchState::from_pixels(&p)?, &kernel)
            };
            let lo = at(0.0)?;
            let mid = at(0.5)?;
            let hi = at(1.0)?;
            report.record((lo + hi) / 2.0, mid, || format!("case {case}, order {n}, pixel {k}"));
        }
        Ok(report)
    }

    /// Normalized outputs always land strictly inside (0,1).
    pub fn normalization_range(seed: u64, instances: usize) -> Result<OracleReport> {
        let mut report = OracleReport::new("normalization range contract", 0.5);
        let mut rng = stream_rng(seed, "oracle-norm-range", 0);
        for case in 0..instances {
            let h = rng.gen_range(1..=8usize);
            let w = rng.gen_range(1..=8usize);
            let values: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1e3..1e3)).collect();
            let out = normalize_channel(&FeaturePlane::new(h, w, values)?)?;
            for (idx, z) in out.values().iter().enumerate() {
                let ok = *z > 0.0 && *z < 1.0;
                report.record(1.0, if ok { 1.0 } else { 0.0 }, || {
                    format!("case {case}, position {idx}, value {z}")
                });
            }
        }
        Ok(report)
    }
}

//! Dense order-N tensor kernels and the contraction primitive.
//!
//! A kernel of order N holds one real coefficient per binary configuration
//! of its N-pixel receptive window (2^N in total). A patch is the list of
//! per-pixel local 2-vectors `(x, 1-x)`. Contracting the two yields
//!
//! ```text
//! y = sum_s c(s) * prod_k a_k^(1-s_k) * b_k^(s_k)
//! ```
//!
//! which is an expectation of `c` under a product Bernoulli measure, hence
//! multilinear in the pixels and bounded by `max_s |c(s)|`.
//!
//! Contraction is performed by sequential index folding: the coefficient
//! table is contracted against one local 2-vector at a time, halving each
//! step, for a total multiply-add cost of about 2^(N+1) instead of the
//! N*2^N of term-by-term enumeration. The enumeration route exists only in
//! [`crate::oracle`].
//!
//! Bit convention: pixel k (1-based, row-major over the window) occupies bit
//! N-k of the configuration index, i.e. the first pixel is the most
//! significant bit. Checkpoints, gradients, and oracle tests all assume this
//! fixed ordering.

use crate::error::{Error, Result};
use crate::precision::Real;

/// Largest supported kernel order; 2^30 coefficients is already far past
/// anything trainable here.
pub const MAX_ORDER: usize = 30;

/// One binary configuration `s = (s_1, ..., s_N)` packed with pixel 1 at the
/// most significant of the N bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Configuration {
    bits: u32,
}

impl Configuration {
    pub fn new(bits: u32, order: usize) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::dimension("configuration order", format!("1..={MAX_ORDER}"), order));
        }
        if u64::from(bits) >= 1u64 << order {
            return Err(Error::dimension(
                "configuration bits",
                format!("< 2^{order}"),
                bits,
            ));
        }
        Ok(Configuration { bits })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    /// s_k for pixel k (1-based).
    pub fn bit(self, k: usize, order: usize) -> u8 {
        ((self.bits >> (order - k)) & 1) as u8
    }

    pub fn all_zeros() -> Self {
        Configuration { bits: 0 }
    }

    pub fn all_ones(order: usize) -> Result<Self> {
        Configuration::new(((1u64 << order) - 1) as u32, order)
    }
}

/// The N encoded local 2-vectors `(a_k, b_k) = (x_k, 1-x_k)` of one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchState<T: Real> {
    locals: Vec<(T, T)>,
}

impl<T: Real> PatchState<T> {
    /// Encode a pixel list into a patch state. Every pixel must lie in [0,1].
    pub fn from_pixels(pixels: &[T]) -> Result<Self> {
        let mut locals = Vec::with_capacity(pixels.len());
        for &x in pixels {
            if !(x >= T::zero() && x <= T::one()) {
                return Err(Error::Encoding { value: x.as_f64() });
            }
            locals.push((x, T::one() - x));
        }
        Ok(PatchState { locals })
    }

    pub fn order(&self) -> usize {
        self.locals.len()
    }

    pub fn locals(&self) -> &[(T, T)] {
        &self.locals
    }

    pub(crate) fn locals_mut(&mut self) -> &mut Vec<(T, T)> {
        &mut self.locals
    }

    pub(crate) fn empty() -> Self {
        PatchState { locals: Vec::new() }
    }
}

/// Dense order-N coefficient table representing one superposition-state
/// kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorKernel<T: Real> {
    order: usize,
    coefficients: Vec<T>,
}

impl<T: Real> TensorKernel<T> {
    pub fn new(order: usize, coefficients: Vec<T>) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::dimension("kernel order", format!("1..={MAX_ORDER}"), order));
        }
        let expected = 1usize << order;
        if coefficients.len() != expected {
            return Err(Error::dimension(
                "kernel coefficient count",
                expected,
                coefficients.len(),
            ));
        }
        if let Some(bad) = coefficients.iter().find(|c| !c.is_finite()) {
            return Err(Error::numeric(
                "kernel coefficients",
                format!("non-finite coefficient {bad}"),
            ));
        }
        Ok(TensorKernel { order, coefficients })
    }

    /// Kernel with `c(s) = value` for every configuration.
    pub fn constant(order: usize, value: T) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::dimension("kernel order", format!("1..={MAX_ORDER}"), order));
        }
        Ok(TensorKernel {
            order,
            coefficients: vec![value; 1 << order],
        })
    }

    /// Kernel that is 1 at `config` and 0 elsewhere.
    pub fn delta(order: usize, config: Configuration) -> Result<Self> {
        let mut kernel = TensorKernel::constant(order, T::zero())?;
        Configuration::new(config.bits(), order)?;
        kernel.coefficients[config.bits() as usize] = T::one();
        Ok(kernel)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [T] {
        &mut self.coefficients
    }
}

fn check_orders<T: Real>(patch: &PatchState<T>, kernel: &TensorKernel<T>) -> Result<()> {
    if patch.order() != kernel.order() {
        return Err(Error::dimension(
            "contract order",
            kernel.order(),
            patch.order(),
        ));
    }
    Ok(())
}

/// Inner product between a patch state and a kernel state.
///
/// Sequential index folding: the table is contracted with pixel 1's local
/// vector first (most significant bit), halving in place each step.
pub fn contract<T: Real>(patch: &PatchState<T>, kernel: &TensorKernel<T>) -> Result<T> {
    check_orders(patch, kernel)?;
    let mut scratch = Vec::new();
    Ok(contract_table(patch.locals(), kernel.coefficients(), &mut scratch))
}

/// Folding core over a raw coefficient table; `scratch` is reused across
/// calls on the hot path.
pub(crate) fn contract_table<T: Real>(locals: &[(T, T)], table: &[T], scratch: &mut Vec<T>) -> T {
    debug_assert_eq!(table.len(), 1usize << locals.len());
    scratch.clear();
    scratch.extend_from_slice(table);
    let mut len = scratch.len();
    for &(a, b) in locals {
        let half = len / 2;
        for i in 0..half {
            scratch[i] = a * scratch[i] + b * scratch[i + half];
        }
        len = half;
    }
    scratch[0]
}

/// Basis weight `beta(r, s)` of one configuration: the product of the
/// selected per-pixel factors. Always in [0,1].
pub fn basis_weight<T: Real>(patch: &PatchState<T>, config: Configuration) -> Result<T> {
    let n = patch.order();
    Configuration::new(config.bits(), n)?;
    let mut product = T::one();
    for (k, &(a, b)) in patch.locals().iter().enumerate() {
        let factor = if config.bit(k + 1, n) == 0 { a } else { b };
        product = product * factor;
    }
    Ok(product)
}

/// Gradient of [`contract`] with respect to every coefficient: the full
/// basis-weight vector, indexed by configuration. Entries are nonnegative
/// and sum to 1.
pub fn grad_coefficients<T: Real>(patch: &PatchState<T>) -> Vec<T> {
    let mut out = Vec::new();
    beta_table(patch.locals(), &mut out);
    out
}

/// Fill `out` with the 2^N basis weights by repeated doubling; pixel 1 lands
/// on the most significant bit.
pub(crate) fn beta_table<T: Real>(locals: &[(T, T)], out: &mut Vec<T>) {
    let n = locals.len();
    out.clear();
    out.resize(1 << n, T::zero());
    out[0] = T::one();
    let mut len = 1usize;
    for &(a, b) in locals {
        for i in (0..len).rev() {
            let e = out[i];
            out[2 * i] = e * a;
            out[2 * i + 1] = e * b;
        }
        len *= 2;
    }
}

/// Gradient of [`contract`] with respect to each pixel value.
///
/// Uses one downward sweep of partial folds (pixel 1 inward) and one upward
/// sweep of suffix basis tables, so all N derivatives cost about as much as
/// three full contractions.
pub fn grad_pixels<T: Real>(patch: &PatchState<T>, kernel: &TensorKernel<T>) -> Result<Vec<T>> {
    check_orders(patch, kernel)?;
    let mut scratch = PixelGradScratch::default();
    let mut out = vec![T::zero(); patch.order()];
    grad_pixels_table(patch.locals(), kernel.coefficients(), &mut scratch, &mut out);
    Ok(out)
}

/// Reusable buffers for [`grad_pixels_table`].
#[derive(Debug, Default)]
pub(crate) struct PixelGradScratch<T: Real> {
    prefix: Vec<Vec<T>>,
    suffix: Vec<Vec<T>>,
}

/// `out[k-1] = d contract / d x_k` for the patch given by `locals` and the
/// coefficient `table`.
pub(crate) fn grad_pixels_table<T: Real>(
    locals: &[(T, T)],
    table: &[T],
    scratch: &mut PixelGradScratch<T>,
    out: &mut [T],
) {
    let n = locals.len();
    debug_assert_eq!(table.len(), 1usize << n);
    debug_assert_eq!(out.len(), n);

    // prefix[m] = table folded with pixels 1..=m, indexed by s_{m+1}..s_N.
    scratch.prefix.resize_with(n, Vec::new);
    scratch.prefix[0].clear();
    scratch.prefix[0].extend_from_slice(table);
    for m in 1..n {
        let (done, rest) = scratch.prefix.split_at_mut(m);
        let prev = &done[m - 1];
        let half = prev.len() / 2;
        let (a, b) = locals[m - 1];
        let next = &mut rest[0];
        next.clear();
        next.resize(half, T::zero());
        for i in 0..half {
            next[i] = a * prev[i] + b * prev[i + half];
        }
    }

    // suffix[k-1] = basis weights of pixels k+1..=N, indexed by
    // s_{k+1}..s_N. suffix[n-1] is the empty product [1].
    scratch.suffix.resize_with(n, Vec::new);
    scratch.suffix[n - 1].clear();
    scratch.suffix[n - 1].push(T::one());
    for k in (1..n).rev() {
        let (head, tail) = scratch.suffix.split_at_mut(k);
        let prev = &tail[0];
        let half = prev.len();
        let (a, b) = locals[k];
        let next = &mut head[k - 1];
        next.clear();
        next.resize(half * 2, T::zero());
        for i in 0..half {
            next[i] = a * prev[i];
            next[i + half] = b * prev[i];
        }
    }

    // d/dx_k replaces pixel k's factor with (+1, -1) and contracts the rest.
    for k in 1..=n {
        let folded = &scratch.prefix[k - 1];
        let half = folded.len() / 2;
        let weights = &scratch.suffix[k - 1];
        debug_assert_eq!(weights.len(), half);
        let mut acc = T::zero();
        for i in 0..half {
            acc = acc + (folded[i] - folded[i + half]) * weights[i];
        }
        out[k - 1] = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(pixels: &[f64]) -> PatchState<f64> {
        PatchState::from_pixels(pixels).unwrap()
    }

    #[test]
    fn contract_two_pixel_worked_example() {
        let p = patch(&[0.5, 0.25]);
        let k = TensorKernel::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = contract(&p, &k).unwrap();
        assert!((y - 2.75).abs() < 1e-15);
    }

    #[test]
    fn contract_all_ones_kernel_is_unity() {
        let p = patch(&[0.3, 0.9, 0.0, 1.0, 0.5]);
        let k = TensorKernel::constant(5, 1.0).unwrap();
        let y = contract(&p, &k).unwrap();
        assert!((y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn contract_delta_all_zeros_is_pixel_product() {
        let pixels = [0.7, 0.2, 0.9];
        let p = patch(&pixels);
        let k = TensorKernel::delta(3, Configuration::all_zeros()).unwrap();
        let y = contract(&p, &k).unwrap();
        let expected: f64 = pixels.iter().product();
        assert!((y - expected).abs() < 1e-15);
    }

    #[test]
    fn contract_rejects_order_mismatch() {
        let p = patch(&[0.5, 0.5]);
        let k = TensorKernel::constant(3, 1.0).unwrap();
        assert!(matches!(contract(&p, &k), Err(Error::Dimension { .. })));
    }

    #[test]
    fn basis_weight_single_pixel() {
        let p = patch(&[0.3]);
        let s0 = Configuration::new(0, 1).unwrap();
        let s1 = Configuration::new(1, 1).unwrap();
        assert!((basis_weight(&p, s0).unwrap() - 0.3).abs() < 1e-15);
        assert!((basis_weight(&p, s1).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn basis_weight_saturated_pixels() {
        let p = patch(&[1.0, 1.0, 1.0]);
        for bits in 0u32..8 {
            let c = Configuration::new(bits, 3).unwrap();
            let w = basis_weight(&p, c).unwrap();
            if bits == 0 {
                assert_eq!(w, 1.0);
            } else {
                assert_eq!(w, 0.0);
            }
        }
    }

    #[test]
    fn basis_weight_mixed_configuration() {
        // s = (0,1) picks x_1 and (1 - x_2).
        let p = patch(&[0.5, 0.25]);
        let c = Configuration::new(0b01, 2).unwrap();
        assert!((basis_weight(&p, c).unwrap() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn grad_coefficients_single_pixel() {
        let g = grad_coefficients(&patch(&[0.3]));
        assert_eq!(g.len(), 2);
        assert!((g[0] - 0.3).abs() < 1e-15);
        assert!((g[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn grad_coefficients_two_pixels() {
        let g = grad_coefficients(&patch(&[0.5, 0.25]));
        let expected = [0.125, 0.375, 0.125, 0.375];
        for (a, b) in g.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn grad_coefficients_black_pixels_load_all_ones_config() {
        for n in 1..=6 {
            let g = grad_coefficients(&patch(&vec![0.0; n]));
            for (idx, w) in g.iter().enumerate() {
                if idx == (1 << n) - 1 {
                    assert_eq!(*w, 1.0);
                } else {
                    assert_eq!(*w, 0.0);
                }
            }
        }
    }

    #[test]
    fn grad_coefficients_sum_to_one() {
        let g = grad_coefficients(&patch(&[0.11, 0.93, 0.4, 0.77, 0.05]));
        let sum: f64 = g.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(g.iter().all(|w| (0.0..=1.0).contains(w)));
    }

    #[test]
    fn grad_pixels_single_pixel_is_coefficient_difference() {
        let p = patch(&[0.42]);
        let k = TensorKernel::new(1, vec![2.5, -1.5]).unwrap();
        let g = grad_pixels(&p, &k).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn grad_pixels_two_pixel_worked_example() {
        // y(x1, x2) = 4 - 2*x1 - x2 for c = (1,2,3,4), so the gradient is
        // (-2, -1) everywhere.
        let p = patch(&[0.5, 0.25]);
        let k = TensorKernel::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = grad_pixels(&p, &k).unwrap();
        assert!((g[0] + 2.0).abs() < 1e-12);
        assert!((g[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn grad_pixels_constant_kernel_is_zero() {
        let p = patch(&[0.1, 0.6, 0.8, 0.33]);
        let k = TensorKernel::constant(4, 1.0).unwrap();
        for g in grad_pixels(&p, &k).unwrap() {
            assert!(g.abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_rejects_wrong_length_and_non_finite() {
        assert!(TensorKernel::new(3, vec![0.0; 7]).is_err());
        assert!(TensorKernel::new(1, vec![f64::NAN, 0.0]).is_err());
        assert!(TensorKernel::<f64>::new(0, vec![1.0]).is_err());
    }

    #[test]
    fn patch_rejects_out_of_range_pixels() {
        assert!(matches!(
            PatchState::from_pixels(&[0.5, 1.2]),
            Err(Error::Encoding { .. })
        ));
        assert!(matches!(
            PatchState::from_pixels(&[-0.1]),
            Err(Error::Encoding { .. })
        ));
    }

    #[test]
    fn configuration_bit_convention_pixel_one_is_msb() {
        let c = Configuration::new(0b100, 3).unwrap();
        assert_eq!(c.bit(1, 3), 1);
        assert_eq!(c.bit(2, 3), 0);
        assert_eq!(c.bit(3, 3), 0);
    }

    #[test]
    fn expectation_bound_holds() {
        let p = patch(&[0.2, 0.8, 0.5, 0.9]);
        let k = TensorKernel::new(
            4,
            (0..16).map(|i| (i as f64) - 7.5).collect::<Vec<_>>(),
        )
        .unwrap();
        let y = contract(&p, &k).unwrap();
        assert!(y.abs() <= 7.5 + 1e-12);
    }
}

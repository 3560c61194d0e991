//! Feature encoding, patch extraction, and inter-layer normalization.
//!
//! Pixels in [0,1] are mapped to local 2-vectors `(x, 1-x)`; a window of N
//! pixels becomes a [`PatchState`]. Between convolution layers, each raw
//! output channel is standardized over its spatial positions (per sample,
//! per channel, population std) and pushed through a sigmoid so the next
//! layer again sees values in (0,1).

use crate::error::{Error, Result};
use crate::precision::Real;
use crate::tensor_core::PatchState;

/// Divisor guard added to the standard deviation before standardizing.
pub const NORM_EPSILON: f64 = 1e-8;

/// One H x W real-valued channel, stored row-major.
///
/// Planes flowing *into* a tensor convolution must hold values in [0,1]
/// (enforced at patch-encoding time); raw convolution outputs use the same
/// container with unbounded values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlane<T: Real> {
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Real> FeaturePlane<T> {
    pub fn new(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::dimension(
                "feature plane size",
                height * width,
                values.len(),
            ));
        }
        Ok(FeaturePlane { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        FeaturePlane {
            height,
            width,
            values: vec![T::zero(); height * width],
        }
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        FeaturePlane {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.values[row * self.width + col] = value;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Window/stride arithmetic for a valid (unpadded) convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    window: usize,
    stride: usize,
    input_height: usize,
    input_width: usize,
}

impl PatchGeometry {
    pub fn new(window: usize, stride: usize, input_height: usize, input_width: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::dimension("patch geometry", "window, stride >= 1", format!("window {window}, stride {stride}")));
        }
        if window > input_height.min(input_width) {
            return Err(Error::dimension(
                "patch window",
                format!("<= min({input_height}, {input_width})"),
                window,
            ));
        }
        Ok(PatchGeometry {
            window,
            stride,
            input_height,
            input_width,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn input_height(&self) -> usize {
        self.input_height
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_height(&self) -> usize {
        (self.input_height - self.window) / self.stride + 1
    }

    pub fn output_width(&self) -> usize {
        (self.input_width - self.window) / self.stride + 1
    }

    /// Pixels per patch (the kernel order N = L^2).
    pub fn patch_len(&self) -> usize {
        self.window * self.window
    }
}

/// Per-channel standardization statistics used by the inter-layer mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub mean: f64,
    pub std: f64,
    pub epsilon: f64,
}

/// Map one pixel in [0,1] to its local 2-vector `(x, 1-x)`.
pub fn encode_pixel<T: Real>(x: T) -> Result<(T, T)> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::Encoding { value: x.as_f64() });
    }
    Ok((x, T::one() - x))
}

/// Encode the L x L window at output-grid `position` into a patch state.
/// Pixels are read row-major, so pixel k = 1 is the window's top-left.
pub fn extract_patch<T: Real>(
    plane: &FeaturePlane<T>,
    position: (usize, usize),
    geometry: &PatchGeometry,
) -> Result<PatchState<T>> {
    let mut patch = PatchState::empty();
    extract_patch_into(plane, position, geometry, &mut patch)?;
    Ok(patch)
}

/// Same as [`extract_patch`] but reuses the patch's local buffer.
pub(crate) fn extract_patch_into<T: Real>(
    plane: &FeaturePlane<T>,
    position: (usize, usize),
    geometry: &PatchGeometry,
    patch: &mut PatchState<T>,
) -> Result<()> {
    let (row, col) = position;
    if row >= geometry.output_height() || col >= geometry.output_width() {
        return Err(Error::dimension(
            "patch position",
            format!("< ({}, {})", geometry.output_height(), geometry.output_width()),
            format!("({row}, {col})"),
        ));
    }
    if plane.height() != geometry.input_height() || plane.width() != geometry.input_width() {
        return Err(Error::dimension(
            "plane shape",
            format!("{}x{}", geometry.input_height(), geometry.input_width()),
            format!("{}x{}", plane.height(), plane.width()),
        ));
    }
    let top = row * geometry.stride();
    let left = col * geometry.stride();
    let locals = patch.locals_mut();
    locals.clear();
    for r in top..top + geometry.window() {
        for c in left..left + geometry.window() {
            locals.push(encode_pixel(plane.get(r, c))?);
        }
    }
    Ok(())
}

/// Plane statistics over all spatial positions: mean and population std.
pub fn channel_stats<T: Real>(plane: &FeaturePlane<T>) -> NormalizationStats {
    let n = plane.values().len() as f64;
    let mean = plane.values().iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = plane
        .values()
        .iter()
        .map(|v| {
            let d = v.as_f64() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    NormalizationStats {
        mean,
        std: var.sqrt(),
        epsilon: NORM_EPSILON,
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Standardize a raw channel over its spatial positions and apply a sigmoid,
/// yielding values strictly in (0,1) for the next layer.
pub fn normalize_channel<T: Real>(raw: &FeaturePlane<T>) -> Result<FeaturePlane<T>> {
    if raw.values().is_empty() {
        return Err(Error::dimension("normalize_channel input", ">= 1 element", 0));
    }
    let stats = channel_stats(raw);
    let denom = stats.std + stats.epsilon;
    let mut out = FeaturePlane::zeros(raw.height(), raw.width());
    for (dst, src) in out.values_mut().iter_mut().zip(raw.values()) {
        let z = sigmoid((src.as_f64() - stats.mean) / denom);
        *dst = T::from_f64(z);
    }
    Ok(out)
}

/// Exact reverse-mode derivative of [`normalize_channel`], propagating
/// through the sigmoid, the standardization, and the dependence of mean and
/// std on every element.
pub fn normalize_backward<T: Real>(
    raw: &FeaturePlane<T>,
    upstream: &FeaturePlane<T>,
) -> Result<FeaturePlane<T>> {
    if !raw.same_shape(upstream) {
        return Err(Error::dimension(
            "normalize_backward shapes",
            format!("{}x{}", raw.height(), raw.width()),
            format!("{}x{}", upstream.height(), upstream.width()),
        ));
    }
    let stats = channel_stats(raw);
    let n = raw.values().len() as f64;
    let denom = stats.std + stats.epsilon;

    // h_i = dL/du_i where u_i = (y_i - mean) / (std + eps)
    let mut h = Vec::with_capacity(raw.values().len());
    let mut h_sum = 0.0;
    let mut h_dot_centered = 0.0;
    for (y, g) in raw.values().iter().zip(upstream.values()) {
        let centered = y.as_f64() - stats.mean;
        let z = sigmoid(centered / denom);
        let hi = g.as_f64() * z * (1.0 - z);
        h.push(hi);
        h_sum += hi;
        h_dot_centered += hi * centered;
    }

    // dL/dy_j = h_j/d - H/(n d) - (y_j - mean) * G / (n * std * d^2);
    // at std == 0 every centered value is zero, so the last term vanishes.
    let std_term = if stats.std > 0.0 {
        h_dot_centered / (n * stats.std * denom * denom)
    } else {
        0.0
    };
    let mut out = FeaturePlane::zeros(raw.height(), raw.width());
    for ((dst, y), hi) in out.values_mut().iter_mut().zip(raw.values()).zip(&h) {
        let centered = y.as_f64() - stats.mean;
        let grad = hi / denom - h_sum / (n * denom) - centered * std_term;
        *dst = T::from_f64(grad);
    }
    Ok(out)
}

//! Layer implementations: tensor convolution, baseline convolution, dense,
//! and flatten, each with a matching exact backward pass.
//!
//! Parameters are stored flat per layer. Tensor-convolution kernels for the
//! channel pair `(i, o)` live at block index `i * out_channels + o`; dense
//! and baseline weights are row-major over (out, in).

mod checkpoint;
mod model;

pub use checkpoint::{
    load_checkpoint, read_checkpoint_spec, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use model::{
    ConvFamily, ForwardTrace, LayerSpec, Model, ModelGrad, ModelSpec, ParameterBreakdown,
    StageCount,
};

use crate::encoding::{extract_patch_into, FeaturePlane, PatchGeometry};
use crate::error::{Error, Result};
use crate::precision::Real;
use crate::tensor_core::{
    beta_table, contract_table, grad_pixels_table, PatchState, PixelGradScratch, TensorKernel,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "none" => Ok(Activation::None),
            other => Err(Error::config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Convolution layer whose kernels are dense order-L^2 tensors, one per
/// (input channel, output channel) pair.
#[derive(Debug, Clone)]
pub struct TensorConvLayer<T: Real> {
    in_channels: usize,
    out_channels: usize,
    geometry: PatchGeometry,
    /// in * out * 2^(L^2) coefficients; pair (i, o) at i * out + o.
    coeffs: Vec<T>,
}

/// Gradients produced by [`TensorConvLayer::backward`].
#[derive(Debug)]
pub struct TensorConvGrads<T: Real> {
    /// Same layout as the layer's coefficient block.
    pub coeffs: Vec<T>,
    /// One plane per input channel; `None` when not requested.
    pub inputs: Option<Vec<FeaturePlane<T>>>,
}

impl<T: Real> TensorConvLayer<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, geometry: PatchGeometry) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::dimension(
                "tensor conv channels",
                ">= 1",
                format!("{in_channels}x{out_channels}"),
            ));
        }
        let order = geometry.patch_len();
        if order > crate::tensor_core::MAX_ORDER {
            return Err(Error::dimension(
                "tensor conv order",
                format!("<= {}", crate::tensor_core::MAX_ORDER),
                order,
            ));
        }
        let table_len = 1usize << order;
        Ok(TensorConvLayer {
            in_channels,
            out_channels,
            geometry,
            coeffs: vec![T::zero(); in_channels * out_channels * table_len],
        })
    }

    /// Standard-normal coefficient init; outputs stay O(1) because each
    /// contraction is an expectation of the coefficients.
    pub fn init<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        geometry: PatchGeometry,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_channels, out_channels, geometry)?;
        for c in layer.coeffs.iter_mut() {
            let draw: f64 = StandardNormal.sample(rng);
            *c = T::from_f64(draw);
        }
        Ok(layer)
    }

    /// Build from explicit kernels, checking count and order.
    pub fn from_kernels(
        in_channels: usize,
        out_channels: usize,
        geometry: PatchGeometry,
        kernels: &[TensorKernel<T>],
    ) -> Result<Self> {
        if kernels.len() != in_channels * out_channels {
            return Err(Error::dimension(
                "tensor conv kernel count",
                in_channels * out_channels,
                kernels.len(),
            ));
        }
        let order = geometry.patch_len();
        let mut layer = Self::zeros(in_channels, out_channels, geometry)?;
        let table_len = 1usize << order;
        for (idx, kernel) in kernels.iter().enumerate() {
            if kernel.order() != order {
                return Err(Error::dimension("tensor kernel order", order, kernel.order()));
            }
            layer.coeffs[idx * table_len..(idx + 1) * table_len]
                .copy_from_slice(kernel.coefficients());
        }
        Ok(layer)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn geometry(&self) -> &PatchGeometry {
        &self.geometry
    }

    pub fn order(&self) -> usize {
        self.geometry.patch_len()
    }

    fn table_len(&self) -> usize {
        1usize << self.order()
    }

    /// Coefficient table of the kernel for channel pair (i, o).
    pub fn kernel_table(&self, in_channel: usize, out_channel: usize) -> &[T] {
        let t = self.table_len();
        let idx = in_channel * self.out_channels + out_channel;
        &self.coeffs[idx * t..(idx + 1) * t]
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    fn check_inputs(&self, inputs: &[FeaturePlane<T>]) -> Result<()> {
        if inputs.len() != self.in_channels {
            return Err(Error::dimension(
                "tensor conv input channels",
                self.in_channels,
                inputs.len(),
            ));
        }
        for plane in inputs {
            if plane.height() != self.geometry.input_height()
                || plane.width() != self.geometry.input_width()
            {
                return Err(Error::dimension(
                    "tensor conv input plane",
                    format!("{}x{}", self.geometry.input_height(), self.geometry.input_width()),
                    format!("{}x{}", plane.height(), plane.width()),
                ));
            }
        }
        Ok(())
    }

    /// Raw output planes: for every output channel and grid position, the
    /// sum over input channels of the patch/kernel contraction.
    pub fn forward(&self, inputs: &[FeaturePlane<T>]) -> Result<Vec<FeaturePlane<T>>> {
        self.check_inputs(inputs)?;
        let (out_h, out_w) = (self.geometry.output_height(), self.geometry.output_width());
        let mut outputs = vec![FeaturePlane::zeros(out_h, out_w); self.out_channels];
        let mut patch = PatchState::empty();
        let mut fold = Vec::new();
        for (i, plane) in inputs.iter().enumerate() {
            for row in 0..out_h {
                for col in 0..out_w {
                    extract_patch_into(plane, (row, col), &self.geometry, &mut patch)?;
                    for (o, out) in outputs.iter_mut().enumerate() {
                        let y = contract_table(patch.locals(), self.kernel_table(i, o), &mut fold);
                        let prev = out.get(row, col);
                        out.set(row, col, prev + y);
                    }
                }
            }
        }
        Ok(outputs)
    }

    /// Coefficient gradients and, when `want_input_grads`, gradients with
    /// respect to the input planes (scatter-accumulated over windows).
    pub fn backward(
        &self,
        inputs: &[FeaturePlane<T>],
        upstream: &[FeaturePlane<T>],
        want_input_grads: bool,
    ) -> Result<TensorConvGrads<T>> {
        self.check_inputs(inputs)?;
        let (out_h, out_w) = (self.geometry.output_height(), self.geometry.output_width());
        if upstream.len() != self.out_channels {
            return Err(Error::dimension(
                "tensor conv upstream channels",
                self.out_channels,
                upstream.len(),
            ));
        }
        for plane in upstream {
            if plane.height() != out_h || plane.width() != out_w {
                return Err(Error::dimension(
                    "tensor conv upstream plane",
                    format!("{out_h}x{out_w}"),
                    format!("{}x{}", plane.height(), plane.width()),
                ));
            }
        }

        let table_len = self.table_len();
        let order = self.order();
        let window = self.geometry.window();
        let stride = self.geometry.stride();
        let mut coeff_grads = vec![T::zero(); self.coeffs.len()];
        let mut input_grads = if want_input_grads {
            Some(vec![
                FeaturePlane::zeros(
                    self.geometry.input_height(),
                    self.geometry.input_width()
                );
                self.in_channels
            ])
        } else {
            None
        };

        let mut patch = PatchState::empty();
        let mut beta = Vec::new();
        let mut combined = vec![T::zero(); table_len];
        let mut pixel_grads = vec![T::zero(); order];
        let mut scratch = PixelGradScratch::default();

        for (i, plane) in inputs.iter().enumerate() {
            for row in 0..out_h {
                for col in 0..out_w {
                    extract_patch_into(plane, (row, col), &self.geometry, &mut patch)?;
                    beta_table(patch.locals(), &mut beta);
                    for o in 0..self.out_channels {
                        let g = upstream[o].get(row, col);
                        if g == T::zero() {
                            continue;
                        }
                        let pair = i * self.out_channels + o;
                        let block = &mut coeff_grads[pair * table_len..(pair + 1) * table_len];
                        for (dst, w) in block.iter_mut().zip(&beta) {
                            *dst = *dst + g * *w;
                        }
                    }
                    if let Some(grads) = input_grads.as_mut() {
                        // the pixel gradient is linear in the kernel, so all
                        // output channels collapse into one combined table
                        for c in combined.iter_mut() {
                            *c = T::zero();
                        }
                        for o in 0..self.out_channels {
                            let g = upstream[o].get(row, col);
                            if g == T::zero() {
                                continue;
                            }
                            for (dst, c) in combined.iter_mut().zip(self.kernel_table(i, o)) {
                                *dst = *dst + g * *c;
                            }
                        }
                        grad_pixels_table(patch.locals(), &combined, &mut scratch, &mut pixel_grads);
                        let (top, left) = (row * stride, col * stride);
                        for (k, pg) in pixel_grads.iter().enumerate() {
                            let (dr, dc) = (k / window, k % window);
                            let prev = grads[i].get(top + dr, left + dc);
                            grads[i].set(top + dr, left + dc, prev + *pg);
                        }
                    }
                }
            }
        }

        Ok(TensorConvGrads {
            coeffs: coeff_grads,
            inputs: input_grads,
        })
    }
}

/// Plain cross-correlation layer used as the like-for-like CNN baseline.
#[derive(Debug, Clone)]
pub struct BaselineConvLayer<T: Real> {
    in_channels: usize,
    out_channels: usize,
    geometry: PatchGeometry,
    /// out * in * L * L, row-major.
    weights: Vec<T>,
    biases: Vec<T>,
}

/// Gradients produced by [`BaselineConvLayer::backward`].
#[derive(Debug)]
pub struct BaselineConvGrads<T: Real> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
    pub inputs: Option<Vec<FeaturePlane<T>>>,
}

impl<T: Real> BaselineConvLayer<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, geometry: PatchGeometry) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::dimension(
                "baseline conv channels",
                ">= 1",
                format!("{in_channels}x{out_channels}"),
            ));
        }
        let w = geometry.window();
        Ok(BaselineConvLayer {
            in_channels,
            out_channels,
            geometry,
            weights: vec![T::zero(); out_channels * in_channels * w * w],
            biases: vec![T::zero(); out_channels],
        })
    }

    /// Fan-in-scaled uniform init, bound 1/sqrt(in * L^2).
    pub fn init<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        geometry: PatchGeometry,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_channels, out_channels, geometry)?;
        let fan_in = in_channels * geometry.patch_len();
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        for w in layer.weights.iter_mut() {
            *w = T::from_f64(dist.sample(rng));
        }
        for b in layer.biases.iter_mut() {
            *b = T::from_f64(dist.sample(rng));
        }
        Ok(layer)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn geometry(&self) -> &PatchGeometry {
        &self.geometry
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[T] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [T] {
        &mut self.biases
    }

    pub(crate) fn blocks_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.weights, &mut self.biases)
    }

    fn weight(&self, o: usize, i: usize, dr: usize, dc: usize) -> T {
        let w = self.geometry.window();
        self.weights[((o * self.in_channels + i) * w + dr) * w + dc]
    }

    fn check_inputs(&self, inputs: &[FeaturePlane<T>]) -> Result<()> {
        if inputs.len() != self.in_channels {
            return Err(Error::dimension(
                "baseline conv input channels",
                self.in_channels,
                inputs.len(),
            ));
        }
        for plane in inputs {
            if plane.height() != self.geometry.input_height()
                || plane.width() != self.geometry.input_width()
            {
                return Err(Error::dimension(
                    "baseline conv input plane",
                    format!("{}x{}", self.geometry.input_height(), self.geometry.input_width()),
                    format!("{}x{}", plane.height(), plane.width()),
                ));
            }
        }
        Ok(())
    }

    /// Standard valid cross-correlation plus bias.
    pub fn forward(&self, inputs: &[FeaturePlane<T>]) -> Result<Vec<FeaturePlane<T>>> {
        self.check_inputs(inputs)?;
        let (out_h, out_w) = (self.geometry.output_height(), self.geometry.output_width());
        let window = self.geometry.window();
        let stride = self.geometry.stride();
        let mut outputs = Vec::with_capacity(self.out_channels);
        for o in 0..self.out_channels {
            let mut plane = FeaturePlane::zeros(out_h, out_w);
            for row in 0..out_h {
                for col in 0..out_w {
                    let (top, left) = (row * stride, col * stride);
                    let mut acc = self.biases[o];
                    for (i, input) in inputs.iter().enumerate() {
                        for dr in 0..window {
                            for dc in 0..window {
                                acc = acc
                                    + self.weight(o, i, dr, dc) * input.get(top + dr, left + dc);
                            }
                        }
                    }
                    plane.set(row, col, acc);
                }
            }
            outputs.push(plane);
        }
        Ok(outputs)
    }

    pub fn backward(
        &self,
        inputs: &[FeaturePlane<T>],
        upstream: &[FeaturePlane<T>],
        want_input_grads: bool,
    ) -> Result<BaselineConvGrads<T>> {
        self.check_inputs(inputs)?;
        let (out_h, out_w) = (self.geometry.output_height(), self.geometry.output_width());
        if upstream.len() != self.out_channels {
            return Err(Error::dimension(
                "baseline conv upstream channels",
                self.out_channels,
                upstream.len(),
            ));
        }
        let window = self.geometry.window();
        let stride = self.geometry.stride();
        let mut grad_w = vec![T::zero(); self.weights.len()];
        let mut grad_b = vec![T::zero(); self.out_channels];
        let mut grad_x = if want_input_grads {
            Some(vec![
                FeaturePlane::zeros(
                    self.geometry.input_height(),
                    self.geometry.input_width()
                );
                self.in_channels
            ])
        } else {
            None
        };

        for o in 0..self.out_channels {
            if upstream[o].height() != out_h || upstream[o].width() != out_w {
                return Err(Error::dimension(
                    "baseline conv upstream plane",
                    format!("{out_h}x{out_w}"),
                    format!("{}x{}", upstream[o].height(), upstream[o].width()),
                ));
            }
            for row in 0..out_h {
                for col in 0..out_w {
                    let g = upstream[o].get(row, col);
                    if g == T::zero() {
                        continue;
                    }
                    grad_b[o] = grad_b[o] + g;
                    let (top, left) = (row * stride, col * stride);
                    for (i, input) in inputs.iter().enumerate() {
                        for dr in 0..window {
                            for dc in 0..window {
                                let widx =
                                    ((o * self.in_channels + i) * window + dr) * window + dc;
                                grad_w[widx] = grad_w[widx] + g * input.get(top + dr, left + dc);
                                if let Some(gx) = grad_x.as_mut() {
                                    let prev = gx[i].get(top + dr, left + dc);
                                    gx[i].set(top + dr, left + dc, prev + g * self.weights[widx]);
                                }
                            }
                        }
                    }
                }
            }
        }

        Ok(BaselineConvGrads {
            weights: grad_w,
            biases: grad_b,
            inputs: grad_x,
        })
    }
}

/// Fully connected layer with an optional ReLU.
#[derive(Debug, Clone)]
pub struct DenseLayer<T: Real> {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    /// out x in, row-major.
    weights: Vec<T>,
    biases: Vec<T>,
}

/// Gradients produced by [`DenseLayer::backward`].
#[derive(Debug)]
pub struct DenseGrads<T: Real> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
    pub input: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::dimension("dense dims", ">= 1", format!("{in_dim}->{out_dim}")));
        }
        Ok(DenseLayer {
            in_dim,
            out_dim,
            activation,
            weights: vec![T::zero(); out_dim * in_dim],
            biases: vec![T::zero(); out_dim],
        })
    }

    /// Fan-in-scaled uniform init, bound 1/sqrt(in_dim).
    pub fn init<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_dim, out_dim, activation)?;
        let bound = 1.0 / (in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        for w in layer.weights.iter_mut() {
            *w = T::from_f64(dist.sample(rng));
        }
        for b in layer.biases.iter_mut() {
            *b = T::from_f64(dist.sample(rng));
        }
        Ok(layer)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[T] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [T] {
        &mut self.biases
    }

    pub(crate) fn blocks_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.weights, &mut self.biases)
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.in_dim {
            return Err(Error::dimension("dense input", self.in_dim, input.len()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_cached(input)?.0)
    }

    /// Returns (activated output, pre-activation) for the backward pass.
    pub fn forward_cached(&self, input: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        self.check_input(input)?;
        let mut preact = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                acc = acc + *w * *x;
            }
            preact.push(acc);
        }
        let out = match self.activation {
            Activation::None => preact.clone(),
            Activation::Relu => preact.iter().map(|z| z.max(T::zero())).collect(),
        };
        Ok((out, preact))
    }

    pub fn backward(&self, input: &[T], preact: &[T], upstream: &[T]) -> Result<DenseGrads<T>> {
        self.check_input(input)?;
        if upstream.len() != self.out_dim || preact.len() != self.out_dim {
            return Err(Error::dimension("dense upstream", self.out_dim, upstream.len()));
        }
        let mut grad_w = vec![T::zero(); self.weights.len()];
        let mut grad_b = vec![T::zero(); self.out_dim];
        let mut grad_x = vec![T::zero(); self.in_dim];
        for o in 0..self.out_dim {
            let dz = match self.activation {
                Activation::None => upstream[o],
                Activation::Relu => {
                    if preact[o] > T::zero() {
                        upstream[o]
                    } else {
                        T::zero()
                    }
                }
            };
            if dz == T::zero() {
                continue;
            }
            grad_b[o] = dz;
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad_w[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] = dz * input[i];
                grad_x[i] = grad_x[i] + dz * row[i];
            }
        }
        Ok(DenseGrads {
            weights: grad_w,
            biases: grad_b,
            input: grad_x,
        })
    }
}

/// Concatenate channels in channel-major, then row-major spatial order.
pub fn flatten_forward<T: Real>(planes: &[FeaturePlane<T>]) -> Vec<T> {
    let mut out = Vec::new();
    for plane in planes {
        out.extend_from_slice(plane.values());
    }
    out
}

/// Undo [`flatten_forward`] on a gradient vector.
pub fn flatten_backward<T: Real>(
    grad: &[T],
    channels: usize,
    height: usize,
    width: usize,
) -> Result<Vec<FeaturePlane<T>>> {
    let plane_len = height * width;
    if grad.len() != channels * plane_len {
        return Err(Error::dimension(
            "flatten gradient",
            channels * plane_len,
            grad.len(),
        ));
    }
    let mut planes = Vec::with_capacity(channels);
    for ch in 0..channels {
        let values = grad[ch * plane_len..(ch + 1) * plane_len].to_vec();
        planes.push(FeaturePlane::new(height, width, values)?);
    }
    Ok(planes)
}

/// Elementwise ReLU over a plane.
pub fn relu_plane<T: Real>(plane: &FeaturePlane<T>) -> FeaturePlane<T> {
    let mut out = plane.clone();
    for v in out.values_mut() {
        *v = v.max(T::zero());
    }
    out
}

/// Backward of [`relu_plane`] given the pre-activation plane.
pub fn relu_plane_backward<T: Real>(
    preact: &FeaturePlane<T>,
    upstream: &FeaturePlane<T>,
) -> FeaturePlane<T> {
    let mut out = upstream.clone();
    for (g, z) in out.values_mut().iter_mut().zip(preact.values()) {
        if *z <= T::zero() {
            *g = T::zero();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{finite_diff, relative_error};
    use crate::tensor_core::Configuration;

    fn geom(window: usize, h: usize, w: usize) -> PatchGeometry {
        PatchGeometry::new(window, 1, h, w).unwrap()
    }

    #[test]
    fn tensor_conv_all_ones_kernel_gives_unit_plane() {
        let layer = TensorConvLayer::from_kernels(
            1,
            1,
            geom(3, 5, 5),
            &[TensorKernel::constant(9, 1.0).unwrap()],
        )
        .unwrap();
        let input = FeaturePlane::filled(5, 5, 0.37f64);
        let out = layer.forward(&[input]).unwrap();
        assert_eq!(out.len(), 1);
        for &v in out[0].values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tensor_conv_delta_kernel_on_half_plane() {
        let layer = TensorConvLayer::from_kernels(
            1,
            1,
            geom(3, 4, 4),
            &[TensorKernel::delta(9, Configuration::all_zeros()).unwrap()],
        )
        .unwrap();
        let input = FeaturePlane::filled(4, 4, 0.5f64);
        let out = layer.forward(&[input]).unwrap();
        for &v in out[0].values() {
            assert!((v - 0.5f64.powi(9)).abs() < 1e-15);
        }
    }

    #[test]
    fn tensor_conv_channel_sum_is_additive() {
        let mut rng = crate::rng::stream_rng(5, "test-init", 0);
        let single = TensorConvLayer::<f64>::init(1, 2, geom(3, 5, 5), &mut rng).unwrap();
        // duplicate the same kernels across two input channels
        let kernels: Vec<TensorKernel<f64>> = (0..2)
            .flat_map(|_| {
                (0..2).map(|o| TensorKernel::new(9, single.kernel_table(0, o).to_vec()).unwrap())
            })
            .collect();
        let double = TensorConvLayer::from_kernels(2, 2, geom(3, 5, 5), &kernels).unwrap();
        let plane = FeaturePlane::new(5, 5, (0..25).map(|i| i as f64 / 25.0).collect()).unwrap();
        let one = single.forward(std::slice::from_ref(&plane)).unwrap();
        let two = double.forward(&[plane.clone(), plane]).unwrap();
        for (a, b) in one.iter().zip(&two) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((2.0 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_conv_zero_upstream_zero_grads() {
        let mut rng = crate::rng::stream_rng(6, "test-init", 0);
        let layer = TensorConvLayer::<f64>::init(1, 2, geom(3, 4, 4), &mut rng).unwrap();
        let input = FeaturePlane::filled(4, 4, 0.4f64);
        let upstream = vec![FeaturePlane::zeros(2, 2); 2];
        let grads = layer.backward(&[input], &upstream, true).unwrap();
        assert!(grads.coeffs.iter().all(|g| *g == 0.0));
        for plane in grads.inputs.unwrap() {
            assert!(plane.values().iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn tensor_conv_single_position_upstream_recovers_basis_vector() {
        let mut rng = crate::rng::stream_rng(7, "test-init", 0);
        let layer = TensorConvLayer::<f64>::init(1, 1, geom(3, 4, 4), &mut rng).unwrap();
        let values: Vec<f64> = (0..16).map(|i| (i as f64 * 0.9 + 1.0) / 16.0).collect();
        let input = FeaturePlane::new(4, 4, values).unwrap();
        let mut upstream = FeaturePlane::zeros(2, 2);
        upstream.set(1, 0, 1.0);
        let grads = layer.backward(&[input.clone()], &[upstream], false).unwrap();
        let patch = crate::encoding::extract_patch(&input, (1, 0), layer.geometry()).unwrap();
        let beta = crate::tensor_core::grad_coefficients(&patch);
        for (g, b) in grads.coeffs.iter().zip(&beta) {
            assert!((g - b).abs() < 1e-15);
        }
    }

    #[test]
    fn tensor_conv_gradients_match_finite_differences() {
        let mut rng = crate::rng::stream_rng(8, "test-init", 0);
        let layer = TensorConvLayer::<f64>::init(1, 2, geom(3, 6, 6), &mut rng).unwrap();
        let pixels: Vec<f64> = (0..36).map(|i| ((i * 13 % 29) as f64 + 0.5) / 30.0).collect();
        let input = FeaturePlane::new(6, 6, pixels.clone()).unwrap();
        // deterministic upstream weights
        let upstream: Vec<FeaturePlane<f64>> = (0..2)
            .map(|o| {
                FeaturePlane::new(
                    4,
                    4,
                    (0..16).map(|i| ((i + o * 3) as f64 - 7.0) / 9.0).collect(),
                )
                .unwrap()
            })
            .collect();
        let grads = layer.backward(&[input.clone()], &upstream, true).unwrap();

        // loss = sum over outputs of upstream * forward
        let loss_of_coeffs = |c: &[f64]| -> crate::Result<f64> {
            let mut probe = layer.clone();
            probe.coeffs_mut().copy_from_slice(c);
            let outs = probe.forward(std::slice::from_ref(&input))?;
            Ok(outs
                .iter()
                .zip(&upstream)
                .map(|(out, u)| {
                    out.values()
                        .iter()
                        .zip(u.values())
                        .map(|(y, g)| y * g)
                        .sum::<f64>()
                })
                .sum())
        };
        let numeric = finite_diff(loss_of_coeffs, layer.coeffs(), 1e-5).unwrap();
        for (a, n) in grads.coeffs.iter().zip(numeric) {
            assert!(relative_error(*a, n) < 1e-6, "coeff grad {a} vs {n}");
        }

        let loss_of_pixels = |p: &[f64]| -> crate::Result<f64> {
            let plane = FeaturePlane::new(6, 6, p.to_vec())?;
            let outs = layer.forward(&[plane])?;
            Ok(outs
                .iter()
                .zip(&upstream)
                .map(|(out, u)| {
                    out.values()
                        .iter()
                        .zip(u.values())
                        .map(|(y, g)| y * g)
                        .sum::<f64>()
                })
                .sum())
        };
        let numeric = finite_diff(loss_of_pixels, &pixels, 1e-5).unwrap();
        let analytic = &grads.inputs.unwrap()[0];
        for (a, n) in analytic.values().iter().zip(numeric) {
            assert!(relative_error(*a, n) < 1e-6, "pixel grad {a} vs {n}");
        }
    }

    #[test]
    fn baseline_conv_zero_weights_yield_bias_plane() {
        let mut layer = BaselineConvLayer::<f64>::zeros(1, 1, geom(3, 5, 5)).unwrap();
        layer.biases_mut()[0] = 0.75;
        let input = FeaturePlane::filled(5, 5, 0.3f64);
        let out = layer.forward(&[input]).unwrap();
        for &v in out[0].values() {
            assert_eq!(v, 0.75);
        }
    }

    #[test]
    fn baseline_conv_impulse_reproduces_kernel_footprint() {
        let mut layer = BaselineConvLayer::<f64>::zeros(1, 1, geom(3, 5, 5)).unwrap();
        for (idx, w) in layer.weights_mut().iter_mut().enumerate() {
            *w = idx as f64 + 1.0; // 1..9 row-major
        }
        let mut input = FeaturePlane::zeros(5, 5);
        input.set(2, 2, 1.0f64);
        let out = layer.forward(&[input]).unwrap();
        // cross-correlation shows the flipped footprint around the impulse
        let expected = [[9.0, 8.0, 7.0], [6.0, 5.0, 4.0], [3.0, 2.0, 1.0]];
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(out[0].get(r, c), expected[r][c]);
            }
        }
    }

    #[test]
    fn baseline_conv_gradients_match_finite_differences() {
        let mut rng = crate::rng::stream_rng(9, "test-init", 0);
        let layer = BaselineConvLayer::<f64>::init(2, 2, geom(3, 5, 5), &mut rng).unwrap();
        let planes: Vec<FeaturePlane<f64>> = (0..2)
            .map(|i| {
                FeaturePlane::new(
                    5,
                    5,
                    (0..25).map(|j| ((j * 7 + i * 11) % 19) as f64 / 19.0).collect(),
                )
                .unwrap()
            })
            .collect();
        let upstream: Vec<FeaturePlane<f64>> = (0..2)
            .map(|o| {
                FeaturePlane::new(
                    3,
                    3,
                    (0..9).map(|j| (((j * 7 + o * 3) % 11) as f64 - 4.8) / 7.0).collect(),
                )
                .unwrap()
            })
            .collect();
        let grads = layer.backward(&planes, &upstream, true).unwrap();

        let loss = |w: &[f64], b: &[f64], x0: &[f64]| -> f64 {
            let mut probe = layer.clone();
            probe.weights_mut().copy_from_slice(w);
            probe.biases_mut().copy_from_slice(b);
            let mut inputs = planes.clone();
            inputs[0] = FeaturePlane::new(5, 5, x0.to_vec()).unwrap();
            let outs = probe.forward(&inputs).unwrap();
            outs.iter()
                .zip(&upstream)
                .map(|(out, u)| {
                    out.values()
                        .iter()
                        .zip(u.values())
                        .map(|(y, g)| y * g)
                        .sum::<f64>()
                })
                .sum()
        };

        let numeric_w = finite_diff(
            |w| Ok(loss(w, layer.biases(), planes[0].values())),
            layer.weights(),
            1e-5,
        )
        .unwrap();
        for (a, n) in grads.weights.iter().zip(numeric_w) {
            assert!(relative_error(*a, n) < 1e-6);
        }
        let numeric_b = finite_diff(
            |b| Ok(loss(layer.weights(), b, planes[0].values())),
            layer.biases(),
            1e-5,
        )
        .unwrap();
        for (a, n) in grads.biases.iter().zip(numeric_b) {
            assert!(relative_error(*a, n) < 1e-6);
        }
        let numeric_x = finite_diff(
            |x| Ok(loss(layer.weights(), layer.biases(), x)),
            planes[0].values(),
            1e-5,
        )
        .unwrap();
        let analytic_x = &grads.inputs.unwrap()[0];
        for (a, n) in analytic_x.values().iter().zip(numeric_x) {
            assert!(relative_error(*a, n) < 1e-6);
        }
    }

    #[test]
    fn dense_identity_passthrough() {
        let mut layer = DenseLayer::<f64>::zeros(3, 3, Activation::None).unwrap();
        for i in 0..3 {
            layer.weights_mut()[i * 3 + i] = 1.0;
        }
        let out = layer.forward(&[0.5, -1.5, 2.0]).unwrap();
        assert_eq!(out, vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn dense_relu_clamps_and_zeroes_gradient() {
        let mut layer = DenseLayer::<f64>::zeros(1, 2, Activation::Relu).unwrap();
        layer.weights_mut().copy_from_slice(&[1.0, -1.0]);
        let (out, preact) = layer.forward_cached(&[2.0]).unwrap();
        assert_eq!(out, vec![2.0, 0.0]);
        let grads = layer.backward(&[2.0], &preact, &[1.0, 1.0]).unwrap();
        assert_eq!(grads.weights, vec![2.0, 0.0]);
        assert_eq!(grads.biases, vec![1.0, 0.0]);
        assert_eq!(grads.input, vec![1.0]);
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = crate::rng::stream_rng(10, "test-init", 0);
        let layer = DenseLayer::<f64>::init(4, 3, Activation::Relu, &mut rng).unwrap();
        let input = vec![0.3, -0.7, 1.2, 0.05];
        let upstream = vec![0.5, -1.0, 0.25];
        let (_, preact) = layer.forward_cached(&input).unwrap();
        let grads = layer.backward(&input, &preact, &upstream).unwrap();

        let loss = |w: &[f64], b: &[f64], x: &[f64]| -> f64 {
            let mut probe = layer.clone();
            probe.weights_mut().copy_from_slice(w);
            probe.biases_mut().copy_from_slice(b);
            let out = probe.forward(x).unwrap();
            out.iter().zip(&upstream).map(|(y, g)| y * g).sum()
        };
        let numeric_w =
            finite_diff(|w| Ok(loss(w, layer.biases(), &input)), layer.weights(), 1e-5).unwrap();
        for (a, n) in grads.weights.iter().zip(numeric_w) {
            assert!(relative_error(*a, n) < 1e-6);
        }
        let numeric_x =
            finite_diff(|x| Ok(loss(layer.weights(), layer.biases(), x)), &input, 1e-5).unwrap();
        for (a, n) in grads.input.iter().zip(numeric_x) {
            assert!(relative_error(*a, n) < 1e-6);
        }
    }

    #[test]
    fn flatten_is_channel_major_then_row_major() {
        let p1 = FeaturePlane::new(2, 2, vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let p2 = FeaturePlane::new(2, 2, vec![5.0f64, 6.0, 7.0, 8.0]).unwrap();
        let flat = flatten_forward(&[p1, p2]);
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let planes = flatten_backward(&flat, 2, 2, 2).unwrap();
        assert_eq!(planes[0].values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(planes[1].values(), &[5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn layer_constructors_reject_bad_shapes() {
        assert!(TensorConvLayer::<f64>::zeros(0, 1, geom(3, 5, 5)).is_err());
        assert!(DenseLayer::<f64>::zeros(0, 5, Activation::None).is_err());
        let kernels = vec![TensorKernel::constant(9, 1.0).unwrap()];
        assert!(TensorConvLayer::from_kernels(2, 1, geom(3, 5, 5), &kernels).is_err());
        let wrong_order = vec![TensorKernel::constant(4, 1.0).unwrap()];
        assert!(TensorConvLayer::from_kernels(1, 1, geom(3, 5, 5), &wrong_order).is_err());
    }
}

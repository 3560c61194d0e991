//! Architecture description, model assembly, and the end-to-end
//! forward/backward chain.
//!
//! The conv stage wiring follows the multilayer construction: every tensor
//! convolution output is standardized and squashed (see
//! [`crate::encoding::normalize_channel`]) before feeding the *next*
//! convolution layer; the last convolution's raw output goes straight into
//! flatten. Baseline convolutions get a ReLU instead, both between layers
//! and before flatten.

use super::{
    flatten_backward, flatten_forward, relu_plane, relu_plane_backward, Activation,
    BaselineConvLayer, DenseLayer, TensorConvLayer,
};
use crate::encoding::{normalize_backward, normalize_channel, FeaturePlane, PatchGeometry};
use crate::error::{Error, Result};
use crate::precision::Real;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvFamily {
    Tensor,
    Baseline,
}

impl ConvFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ConvFamily::Tensor => "tacnn",
            ConvFamily::Baseline => "cnn",
        }
    }
}

impl std::str::FromStr for ConvFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tacnn" => Ok(ConvFamily::Tensor),
            "cnn" => Ok(ConvFamily::Baseline),
            other => Err(Error::config(format!("unknown model family '{other}' (expected tacnn or cnn)"))),
        }
    }
}

/// One layer in an architecture description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    TensorConv {
        in_channels: usize,
        out_channels: usize,
        window: usize,
        stride: usize,
    },
    BaselineConv {
        in_channels: usize,
        out_channels: usize,
        window: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    },
}

/// Ordered layer list plus input/output contract. Architectures follow the
/// pattern `conv+ flatten dense+` with a homogeneous conv family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

/// Per-stage parameter counts with an exact total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterBreakdown {
    pub stages: Vec<StageCount>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageCount {
    pub label: String,
    pub params: usize,
}

impl ModelSpec {
    /// Conv-stage chain (ending in flatten + one hidden layer + classifier)
    /// for either family. `kernels[i]` is the output channel count of conv
    /// layer i; layer i+1 therefore holds `kernels[i] * kernels[i+1]` tensor
    /// kernels.
    pub fn conv_net(
        family: ConvFamily,
        input: (usize, usize, usize),
        kernels: &[usize],
        window: usize,
        stride: usize,
        hidden: usize,
        classes: usize,
    ) -> Result<ModelSpec> {
        let (input_channels, input_height, input_width) = input;
        if kernels.is_empty() {
            return Err(Error::config("at least one conv layer is required"));
        }
        if kernels.iter().any(|&k| k == 0) {
            return Err(Error::config("kernel counts must be >= 1"));
        }
        let mut layers = Vec::new();
        let mut channels = input_channels;
        let (mut h, mut w) = (input_height, input_width);
        for &out in kernels {
            let geometry = PatchGeometry::new(window, stride, h, w)?;
            layers.push(match family {
                ConvFamily::Tensor => LayerSpec::TensorConv {
                    in_channels: channels,
                    out_channels: out,
                    window,
                    stride,
                },
                ConvFamily::Baseline => LayerSpec::BaselineConv {
                    in_channels: channels,
                    out_channels: out,
                    window,
                    stride,
                },
            });
            channels = out;
            h = geometry.output_height();
            w = geometry.output_width();
        }
        layers.push(LayerSpec::Flatten);
        let flat = channels * h * w;
        layers.push(LayerSpec::Dense {
            in_dim: flat,
            out_dim: hidden,
            activation: Activation::Relu,
        });
        layers.push(LayerSpec::Dense {
            in_dim: hidden,
            out_dim: classes,
            activation: Activation::None,
        });
        let spec = ModelSpec {
            input_channels,
            input_height,
            input_width,
            classes,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn conv_family(&self) -> Option<ConvFamily> {
        self.layers.iter().find_map(|l| match l {
            LayerSpec::TensorConv { .. } => Some(ConvFamily::Tensor),
            LayerSpec::BaselineConv { .. } => Some(ConvFamily::Baseline),
            _ => None,
        })
    }

    pub fn conv_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::TensorConv { .. } | LayerSpec::BaselineConv { .. }))
            .count()
    }

    /// Check layer pattern and shape chaining.
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.input_channels == 0 {
            return Err(Error::config("classes and input channels must be >= 1"));
        }
        let mut saw_flatten = false;
        let mut saw_dense = false;
        let mut conv_layers = 0usize;
        let mut family: Option<ConvFamily> = None;
        let mut channels = self.input_channels;
        let (mut h, mut w) = (self.input_height, self.input_width);
        let mut flat_dim = 0usize;

        for (idx, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::TensorConv { in_channels, out_channels, window, stride }
                | LayerSpec::BaselineConv { in_channels, out_channels, window, stride } => {
                    if saw_flatten || saw_dense {
                        return Err(Error::config(format!("layer {idx}: conv after flatten")));
                    }
                    let this_family = match layer {
                        LayerSpec::TensorConv { .. } => ConvFamily::Tensor,
                        _ => ConvFamily::Baseline,
                    };
                    match family {
                        None => family = Some(this_family),
                        Some(f) if f != this_family => {
                            return Err(Error::config(format!(
                                "layer {idx}: mixed conv families are not supported"
                            )))
                        }
                        _ => {}
                    }
                    if *in_channels != channels {
                        return Err(Error::dimension(
                            format!("layer {idx} input channels"),
                            channels,
                            in_channels,
                        ));
                    }
                    let geometry = PatchGeometry::new(*window, *stride, h, w)?;
                    channels = *out_channels;
                    h = geometry.output_height();
                    w = geometry.output_width();
                    conv_layers += 1;
                }
                LayerSpec::Flatten => {
                    if saw_flatten {
                        return Err(Error::config(format!("layer {idx}: second flatten")));
                    }
                    if conv_layers == 0 {
                        return Err(Error::config(format!("layer {idx}: flatten before any conv")));
                    }
                    saw_flatten = true;
                    flat_dim = channels * h * w;
                }
                LayerSpec::Dense { in_dim, out_dim, .. } => {
                    if !saw_flatten {
                        return Err(Error::config(format!("layer {idx}: dense before flatten")));
                    }
                    if *in_dim != flat_dim {
                        return Err(Error::dimension(
                            format!("layer {idx} dense input"),
                            flat_dim,
                            in_dim,
                        ));
                    }
                    flat_dim = *out_dim;
                    saw_dense = true;
                }
            }
        }
        if !saw_flatten || !saw_dense {
            return Err(Error::config("architecture must end with flatten + dense stages"));
        }
        if flat_dim != self.classes {
            return Err(Error::dimension("final dense output", self.classes, flat_dim));
        }
        Ok(())
    }

    /// Exact per-stage parameter counts: tensor conv in*out*2^(L^2),
    /// baseline conv out*(in*L^2+1), dense out*(in+1).
    pub fn parameter_count(&self) -> ParameterBreakdown {
        let mut stages = Vec::new();
        let mut total = 0usize;
        let mut conv_idx = 0usize;
        let mut dense_idx = 0usize;
        for layer in &self.layers {
            let (label, params) = match layer {
                LayerSpec::TensorConv { in_channels, out_channels, window, .. } => {
                    conv_idx += 1;
                    (
                        format!("tconv{conv_idx}"),
                        in_channels * out_channels * (1usize << (window * window)),
                    )
                }
                LayerSpec::BaselineConv { in_channels, out_channels, window, .. } => {
                    conv_idx += 1;
                    (
                        format!("conv{conv_idx}"),
                        out_channels * (in_channels * window * window + 1),
                    )
                }
                LayerSpec::Flatten => continue,
                LayerSpec::Dense { in_dim, out_dim, .. } => {
                    dense_idx += 1;
                    (format!("dense{dense_idx}"), out_dim * (in_dim + 1))
                }
            };
            total += params;
            stages.push(StageCount { label, params });
        }
        ParameterBreakdown { stages, total }
    }

    /// Compact single-line architecture descriptor, parseable by
    /// [`ModelSpec::parse_descriptor`]. Stored in checkpoints.
    pub fn descriptor(&self) -> String {
        let mut parts = Vec::new();
        for layer in &self.layers {
            parts.push(match layer {
                LayerSpec::TensorConv { in_channels, out_channels, window, stride } => {
                    format!("tconv:{in_channels}:{out_channels}:{window}:{stride}")
                }
                LayerSpec::BaselineConv { in_channels, out_channels, window, stride } => {
                    format!("conv:{in_channels}:{out_channels}:{window}:{stride}")
                }
                LayerSpec::Flatten => "flatten".to_string(),
                LayerSpec::Dense { in_dim, out_dim, activation } => {
                    format!("dense:{in_dim}:{out_dim}:{}", activation.as_str())
                }
            });
        }
        format!(
            "input={}x{}x{} classes={} layers={}",
            self.input_channels,
            self.input_height,
            self.input_width,
            self.classes,
            parts.join(",")
        )
    }

    pub fn parse_descriptor(text: &str) -> Result<ModelSpec> {
        let mut input = None;
        let mut classes = None;
        let mut layers = None;
        for token in text.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::config(format!("bad descriptor token '{token}'")))?;
            match key {
                "input" => {
                    let dims: Vec<usize> = value
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::config(format!("bad input dims '{value}'")))?;
                    if dims.len() != 3 {
                        return Err(Error::config(format!("input dims must be CxHxW, got '{value}'")));
                    }
                    input = Some((dims[0], dims[1], dims[2]));
                }
                "classes" => {
                    classes = Some(
                        value
                            .parse::<usize>()
                            .map_err(|_| Error::config(format!("bad class count '{value}'")))?,
                    );
                }
                "layers" => {
                    let mut parsed = Vec::new();
                    for item in value.split(',') {
                        let fields: Vec<&str> = item.split(':').collect();
                        let layer = match fields[0] {
                            "flatten" => LayerSpec::Flatten,
                            "tconv" | "conv" if fields.len() == 5 => {
                                let nums: Vec<usize> = fields[1..]
                                    .iter()
                                    .map(|f| f.parse::<usize>())
                                    .collect::<std::result::Result<_, _>>()
                                    .map_err(|_| {
                                        Error::config(format!("bad conv fields '{item}'"))
                                    })?;
                                if fields[0] == "tconv" {
                                    LayerSpec::TensorConv {
                                        in_channels: nums[0],
                                        out_channels: nums[1],
                                        window: nums[2],
                                        stride: nums[3],
                                    }
                                } else {
                                    LayerSpec::BaselineConv {
                                        in_channels: nums[0],
                                        out_channels: nums[1],
                                        window: nums[2],
                                        stride: nums[3],
                                    }
                                }
                            }
                            "dense" if fields.len() == 4 => LayerSpec::Dense {
                                in_dim: fields[1].parse().map_err(|_| {
                                    Error::config(format!("bad dense fields '{item}'"))
                                })?,
                                out_dim: fields[2].parse().map_err(|_| {
                                    Error::config(format!("bad dense fields '{item}'"))
                                })?,
                                activation: Activation::parse(fields[3])?,
                            },
                            other => {
                                return Err(Error::config(format!("unknown layer '{other}'")))
                            }
                        };
                        parsed.push(layer);
                    }
                    layers = Some(parsed);
                }
                other => return Err(Error::config(format!("unknown descriptor key '{other}'"))),
            }
        }
        let (input_channels, input_height, input_width) =
            input.ok_or_else(|| Error::config("descriptor missing input="))?;
        let spec = ModelSpec {
            input_channels,
            input_height,
            input_width,
            classes: classes.ok_or_else(|| Error::config("descriptor missing classes="))?,
            layers: layers.ok_or_else(|| Error::config("descriptor missing layers="))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

enum LayerNode<T: Real> {
    TensorConv(TensorConvLayer<T>),
    BaselineConv(BaselineConvLayer<T>),
    Flatten,
    Dense(DenseLayer<T>),
}

/// A spec plus its parameters.
pub struct Model<T: Real> {
    spec: ModelSpec,
    nodes: Vec<LayerNode<T>>,
}

/// Per-block gradients aligned with [`Model::param_blocks`].
#[derive(Debug, Clone)]
pub struct ModelGrad<T: Real> {
    blocks: Vec<Vec<T>>,
}

impl<T: Real> ModelGrad<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        ModelGrad {
            blocks: model
                .param_blocks()
                .iter()
                .map(|b| vec![T::zero(); b.len()])
                .collect(),
        }
    }

    pub fn blocks(&self) -> &[Vec<T>] {
        &self.blocks
    }

    #[cfg(test)]
    pub(crate) fn blocks_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.blocks
    }

    pub fn add_assign(&mut self, other: &ModelGrad<T>) {
        for (dst, src) in self.blocks.iter_mut().zip(&other.blocks) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *d + *s;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for block in self.blocks.iter_mut() {
            for v in block.iter_mut() {
                *v = *v * factor;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Flat read access in block order, for tests and gradient checks.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for b in &self.blocks {
            out.extend_from_slice(b);
        }
        out
    }
}

/// Stage-by-stage record of one forward pass, consumed by
/// [`Model::backward`].
pub struct ForwardTrace<T: Real> {
    stages: Vec<Stage<T>>,
}

enum Stage<T: Real> {
    Conv {
        layer: usize,
        inputs: Vec<FeaturePlane<T>>,
    },
    Normalize {
        raw: Vec<FeaturePlane<T>>,
    },
    Relu {
        preact: Vec<FeaturePlane<T>>,
    },
    Flatten {
        channels: usize,
        height: usize,
        width: usize,
    },
    Dense {
        layer: usize,
        input: Vec<T>,
        preact: Vec<T>,
    },
}

impl<T: Real> Model<T> {
    /// Zero-parameter model for the given spec.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let nodes = Self::build_nodes(&spec, None)?;
        Ok(Model { spec, nodes })
    }

    /// Initialize from the `init` sub-stream of `seed`: standard-normal
    /// tensor coefficients, fan-in-scaled uniform weights elsewhere. Draws
    /// happen in f64 so f32 and f64 models start from identical values.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream_rng(seed, "init", 0);
        let nodes = Self::build_nodes(&spec, Some(&mut rng))?;
        Ok(Model { spec, nodes })
    }

    fn build_nodes(
        spec: &ModelSpec,
        mut rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> Result<Vec<LayerNode<T>>> {
        let mut nodes = Vec::with_capacity(spec.layers.len());
        let (mut h, mut w) = (spec.input_height, spec.input_width);
        for layer in &spec.layers {
            let node = match layer {
                LayerSpec::TensorConv { in_channels, out_channels, window, stride } => {
                    let geometry = PatchGeometry::new(*window, *stride, h, w)?;
                    let built = match rng.as_deref_mut() {
                        Some(r) => TensorConvLayer::init(*in_channels, *out_channels, geometry, r)?,
                        None => TensorConvLayer::zeros(*in_channels, *out_channels, geometry)?,
                    };
                    h = geometry.output_height();
                    w = geometry.output_width();
                    LayerNode::TensorConv(built)
                }
                LayerSpec::BaselineConv { in_channels, out_channels, window, stride } => {
                    let geometry = PatchGeometry::new(*window, *stride, h, w)?;
                    let built = match rng.as_deref_mut() {
                        Some(r) => {
                            BaselineConvLayer::init(*in_channels, *out_channels, geometry, r)?
                        }
                        None => BaselineConvLayer::zeros(*in_channels, *out_channels, geometry)?,
                    };
                    h = geometry.output_height();
                    w = geometry.output_width();
                    LayerNode::BaselineConv(built)
                }
                LayerSpec::Flatten => LayerNode::Flatten,
                LayerSpec::Dense { in_dim, out_dim, activation } => {
                    let built = match rng.as_deref_mut() {
                        Some(r) => DenseLayer::init(*in_dim, *out_dim, *activation, r)?,
                        None => DenseLayer::zeros(*in_dim, *out_dim, *activation)?,
                    };
                    LayerNode::Dense(built)
                }
            };
            nodes.push(node);
        }
        Ok(nodes)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn check_input(&self, input: &[FeaturePlane<T>]) -> Result<()> {
        if input.len() != self.spec.input_channels {
            return Err(Error::dimension(
                "model input channels",
                self.spec.input_channels,
                input.len(),
            ));
        }
        for plane in input {
            if plane.height() != self.spec.input_height || plane.width() != self.spec.input_width {
                return Err(Error::dimension(
                    "model input plane",
                    format!("{}x{}", self.spec.input_height, self.spec.input_width),
                    format!("{}x{}", plane.height(), plane.width()),
                ));
            }
        }
        Ok(())
    }

    /// Class logits for one sample.
    pub fn forward(&self, input: &[FeaturePlane<T>]) -> Result<Vec<T>> {
        Ok(self.forward_traced(input)?.0)
    }

    /// Logits plus the per-stage trace needed for [`Model::backward`].
    pub fn forward_traced(&self, input: &[FeaturePlane<T>]) -> Result<(Vec<T>, ForwardTrace<T>)> {
        self.check_input(input)?;
        let mut stages = Vec::new();
        let mut planes: Vec<FeaturePlane<T>> = input.to_vec();
        let mut vector: Vec<T> = Vec::new();
        let last_conv = self
            .spec
            .layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::TensorConv { .. } | LayerSpec::BaselineConv { .. }))
            .expect("validated spec has conv layers");

        for (idx, node) in self.nodes.iter().enumerate() {
            match node {
                LayerNode::TensorConv(layer) => {
                    let raw = layer.forward(&planes)?;
                    stages.push(Stage::Conv {
                        layer: idx,
                        inputs: std::mem::take(&mut planes),
                    });
                    if idx < last_conv {
                        let mut normalized = Vec::with_capacity(raw.len());
                        for plane in &raw {
                            normalized.push(normalize_channel(plane)?);
                        }
                        stages.push(Stage::Normalize { raw });
                        planes = normalized;
                    } else {
                        planes = raw;
                    }
                }
                LayerNode::BaselineConv(layer) => {
                    let raw = layer.forward(&planes)?;
                    stages.push(Stage::Conv {
                        layer: idx,
                        inputs: std::mem::take(&mut planes),
                    });
                    let activated: Vec<FeaturePlane<T>> = raw.iter().map(relu_plane).collect();
                    stages.push(Stage::Relu { preact: raw });
                    planes = activated;
                }
                LayerNode::Flatten => {
                    let channels = planes.len();
                    let height = planes[0].height();
                    let width = planes[0].width();
                    vector = flatten_forward(&planes);
                    stages.push(Stage::Flatten {
                        channels,
                        height,
                        width,
                    });
                    planes.clear();
                }
                LayerNode::Dense(layer) => {
                    let (out, preact) = layer.forward_cached(&vector)?;
                    stages.push(Stage::Dense {
                        layer: idx,
                        input: std::mem::take(&mut vector),
                        preact,
                    });
                    vector = out;
                }
            }
        }
        Ok((vector, ForwardTrace { stages }))
    }

    /// Walk the trace backwards from a logit gradient, producing one
    /// gradient block per parameter block.
    pub fn backward(&self, trace: &ForwardTrace<T>, logit_grad: &[T]) -> Result<ModelGrad<T>> {
        if logit_grad.len() != self.spec.classes {
            return Err(Error::dimension("logit gradient", self.spec.classes, logit_grad.len()));
        }
        let mut grad = ModelGrad::zeros_like(self);
        let block_spans = self.layer_block_spans();
        let mut vector_grad: Vec<T> = logit_grad.to_vec();
        let mut plane_grads: Vec<FeaturePlane<T>> = Vec::new();

        for (pos, stage) in trace.stages.iter().enumerate().rev() {
            match stage {
                Stage::Dense { layer, input, preact } => {
                    let LayerNode::Dense(dense) = &self.nodes[*layer] else {
                        return Err(Error::numeric("backward", "trace/layer mismatch"));
                    };
                    let grads = dense.backward(input, preact, &vector_grad)?;
                    let (start, _) = block_spans[*layer];
                    grad.blocks[start] = grads.weights;
                    grad.blocks[start + 1] = grads.biases;
                    vector_grad = grads.input;
                }
                Stage::Flatten { channels, height, width } => {
                    plane_grads = flatten_backward(&vector_grad, *channels, *height, *width)?;
                    vector_grad.clear();
                }
                Stage::Relu { preact } => {
                    plane_grads = preact
                        .iter()
                        .zip(&plane_grads)
                        .map(|(z, g)| relu_plane_backward(z, g))
                        .collect();
                }
                Stage::Normalize { raw } => {
                    let mut back = Vec::with_capacity(raw.len());
                    for (r, g) in raw.iter().zip(&plane_grads) {
                        back.push(normalize_backward(r, g)?);
                    }
                    plane_grads = back;
                }
                Stage::Conv { layer, inputs } => {
                    let want_input = pos > 0;
                    match &self.nodes[*layer] {
                        LayerNode::TensorConv(conv) => {
                            let grads = conv.backward(inputs, &plane_grads, want_input)?;
                            let (start, _) = block_spans[*layer];
                            grad.blocks[start] = grads.coeffs;
                            plane_grads = grads.inputs.unwrap_or_default();
                        }
                        LayerNode::BaselineConv(conv) => {
                            let grads = conv.backward(inputs, &plane_grads, want_input)?;
                            let (start, _) = block_spans[*layer];
                            grad.blocks[start] = grads.weights;
                            grad.blocks[start + 1] = grads.biases;
                            plane_grads = grads.inputs.unwrap_or_default();
                        }
                        _ => return Err(Error::numeric("backward", "trace/layer mismatch")),
                    }
                }
            }
        }
        Ok(grad)
    }

    /// (first block index, block count) per layer.
    fn layer_block_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::with_capacity(self.nodes.len());
        let mut next = 0usize;
        for node in &self.nodes {
            let count = match node {
                LayerNode::TensorConv(_) => 1,
                LayerNode::BaselineConv(_) => 2,
                LayerNode::Dense(_) => 2,
                LayerNode::Flatten => 0,
            };
            spans.push((next, count));
            next += count;
        }
        spans
    }

    /// All parameter blocks in layer order.
    pub fn param_blocks(&self) -> Vec<&[T]> {
        let mut blocks = Vec::new();
        for node in &self.nodes {
            match node {
                LayerNode::TensorConv(l) => blocks.push(l.coeffs()),
                LayerNode::BaselineConv(l) => {
                    blocks.push(l.weights());
                    blocks.push(l.biases());
                }
                LayerNode::Dense(l) => {
                    blocks.push(l.weights());
                    blocks.push(l.biases());
                }
                LayerNode::Flatten => {}
            }
        }
        blocks
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut blocks: Vec<&mut [T]> = Vec::new();
        for node in self.nodes.iter_mut() {
            match node {
                LayerNode::TensorConv(l) => blocks.push(l.coeffs_mut()),
                LayerNode::BaselineConv(l) => {
                    let (w, b) = l.blocks_mut();
                    blocks.push(w);
                    blocks.push(b);
                }
                LayerNode::Dense(l) => {
                    let (w, b) = l.blocks_mut();
                    blocks.push(w);
                    blocks.push(b);
                }
                LayerNode::Flatten => {}
            }
        }
        blocks
    }

    pub fn param_count(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }

    /// Flat-index parameter access for finite-difference probing.
    pub fn param(&self, mut index: usize) -> Option<T> {
        for block in self.param_blocks() {
            if index < block.len() {
                return Some(block[index]);
            }
            index -= block.len();
        }
        None
    }

    pub fn set_param(&mut self, mut index: usize, value: T) -> bool {
        for block in self.param_blocks_mut() {
            if index < block.len() {
                block[index] = value;
                return true;
            }
            index -= block.len();
        }
        false
    }
}

impl<T: Real> Clone for Model<T> {
    fn clone(&self) -> Self {
        let mut cloned = Model::zeros(self.spec.clone()).expect("spec already validated");
        for (dst, src) in cloned.param_blocks_mut().into_iter().zip(self.param_blocks()) {
            dst.copy_from_slice(src);
        }
        cloned
    }
}

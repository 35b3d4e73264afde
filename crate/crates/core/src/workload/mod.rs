//! Network descriptions and their per-layer work and traffic.

mod footprint;
mod layer;

pub use footprint::{conv_output_values, network_memory_footprint, Footprint, Regime};
pub use layer::{
    layer_params, layer_workload, network_workload, training_step_ops, LayerWorkload, Pass, GRADIENT_ACCUMULATION_BYTES,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("unknown network {name:?}; available: {available}")]
    UnknownNetwork { name: String, available: String },
    #[error("cannot parse network description: {0}")]
    Parse(String),
    #[error("layer {path}: {msg}")]
    Shape { path: String, msg: String },
}

/// `[channels, rows, columns]`.
pub type Shape = [usize; 3];

/// One number or a `[rows, columns]` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Pair {
    Square(usize),
    Rect([usize; 2]),
}

impl Pair {
    pub fn rows(&self) -> usize {
        match *self {
            Pair::Square(v) => v,
            Pair::Rect([r, _]) => r,
        }
    }

    pub fn cols(&self) -> usize {
        match *self {
            Pair::Square(v) => v,
            Pair::Rect([_, c]) => c,
        }
    }
}

impl Default for Pair {
    fn default() -> Self {
        Pair::Square(0)
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        out_channels: usize,
        kernel: Pair,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: Pair,
    },
    Linear {
        out_features: usize,
    },
    Maxpool {
        kernel: Pair,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: Pair,
    },
    Avgpool {
        kernel: Pair,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: Pair,
    },
    Relu,
    Lrn,
    Batchnorm,
    Softmax,
    /// Branches see the same input; outputs stack along channels.
    Concat {
        branches: Vec<Vec<LayerSpec>>,
    },
    /// `body(x) + shortcut(x)`. Without a shortcut the identity is
    /// subsampled and zero-extended to the body's shape.
    ResidualAdd {
        body: Vec<LayerSpec>,
        #[serde(default)]
        shortcut: Option<Vec<LayerSpec>>,
    },
    /// One time step of a four-gate recurrent cell over a batch.
    LstmCell {
        hidden: usize,
        batch: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub repeat: usize,
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

impl LayerSpec {
    pub fn new(kind: LayerKind) -> Self {
        LayerSpec { kind, repeat: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

/// A layer with its input and output shapes fixed. Containers appear
/// after their children.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedLayer {
    pub path: String,
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
}

impl ResolvedLayer {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Linear { .. } => "linear",
            LayerKind::Maxpool { .. } => "maxpool",
            LayerKind::Avgpool { .. } => "avgpool",
            LayerKind::Relu => "relu",
            LayerKind::Lrn => "lrn",
            LayerKind::Batchnorm => "batchnorm",
            LayerKind::Softmax => "softmax",
            LayerKind::Concat { .. } => "concat",
            LayerKind::ResidualAdd { .. } => "residual_add",
            LayerKind::LstmCell { .. } => "lstm_cell",
        }
    }
}

const BUILTIN: [(&str, &str); 7] = [
    ("alexnet", include_str!("../../networks/alexnet.json")),
    ("googlenet", include_str!("../../networks/googlenet.json")),
    ("inception_v3", include_str!("../../networks/inception_v3.json")),
    ("resnet34", include_str!("../../networks/resnet34.json")),
    ("resnet50", include_str!("../../networks/resnet50.json")),
    ("resnet152", include_str!("../../networks/resnet152.json")),
    ("lstm512", include_str!("../../networks/lstm512.json")),
];

/// The six convolutional benchmark networks.
pub const CNN_NAMES: [&str; 6] = ["alexnet", "googlenet", "inception_v3", "resnet34", "resnet50", "resnet152"];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        let net: NetworkSpec = serde_json::from_str(text).map_err(|e| WorkloadError::Parse(e.to_string()))?;
        net.resolve()?;
        Ok(net)
    }

    pub fn builtin(name: &str) -> Result<Self, WorkloadError> {
        let text = BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| WorkloadError::UnknownNetwork {
                name: name.to_string(),
                available: builtin_names().join(", "),
            })?;
        Self::from_json(text)
    }

    pub fn output_shape(&self) -> Result<Shape, WorkloadError> {
        Ok(self.resolve()?.last().map_or(self.input, |l| l.output))
    }

    /// Walks the description, expanding repeats and checking that shapes
    /// chain.
    pub fn resolve(&self) -> Result<Vec<ResolvedLayer>, WorkloadError> {
        if self.input.contains(&0) {
            return Err(WorkloadError::Shape {
                path: self.name.clone(),
                msg: format!("empty input shape {:?}", self.input),
            });
        }
        let mut out = Vec::new();
        resolve_seq(&self.layers, self.input, &self.name, &mut out)?;
        Ok(out)
    }
}

fn resolve_seq(layers: &[LayerSpec], mut shape: Shape, prefix: &str, out: &mut Vec<ResolvedLayer>) -> Result<Shape, WorkloadError> {
    for (i, l) in layers.iter().enumerate() {
        if l.repeat == 0 {
            return Err(WorkloadError::Shape {
                path: format!("{prefix}/{i}"),
                msg: "repeat must be at least 1".into(),
            });
        }
        for r in 0..l.repeat {
            let path = if l.repeat == 1 {
                format!("{prefix}/{i}")
            } else {
                format!("{prefix}/{i}.{r}")
            };
            shape = resolve_layer(&l.kind, shape, &path, out)?;
        }
    }
    Ok(shape)
}

fn window_out(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (stride > 0 && k > 0 && len + 2 * pad >= k).then(|| (len + 2 * pad - k) / stride + 1)
}

fn resolve_layer(kind: &LayerKind, input: Shape, path: &str, out: &mut Vec<ResolvedLayer>) -> Result<Shape, WorkloadError> {
    let err = |msg: String| WorkloadError::Shape {
        path: path.to_string(),
        msg,
    };
    let [c, h, w] = input;
    let output = match kind {
        LayerKind::Conv {
            out_channels,
            kernel,
            stride,
            pad,
        } => {
            let ho = window_out(h, kernel.rows(), *stride, pad.rows());
            let wo = window_out(w, kernel.cols(), *stride, pad.cols());
            match (ho, wo) {
                (Some(ho), Some(wo)) if *out_channels > 0 => [*out_channels, ho, wo],
                _ => return Err(err(format!("convolution does not fit input {input:?}"))),
            }
        }
        LayerKind::Maxpool { kernel, stride, pad } | LayerKind::Avgpool { kernel, stride, pad } => {
            if pad.rows() >= kernel.rows() || pad.cols() >= kernel.cols() {
                return Err(err("pooling padding must be smaller than the window".into()));
            }
            match (
                window_out(h, kernel.rows(), *stride, pad.rows()),
                window_out(w, kernel.cols(), *stride, pad.cols()),
            ) {
                (Some(ho), Some(wo)) => [c, ho, wo],
                _ => return Err(err(format!("pooling window does not fit input {input:?}"))),
            }
        }
        LayerKind::Linear { out_features } if *out_features > 0 => [*out_features, 1, 1],
        LayerKind::Linear { .. } => return Err(err("linear layer without outputs".into())),
        LayerKind::Relu | LayerKind::Lrn | LayerKind::Batchnorm | LayerKind::Softmax => input,
        LayerKind::Concat { branches } => {
            if branches.is_empty() {
                return Err(err("concat without branches".into()));
            }
            let mut shapes = Vec::new();
            for (b, br) in branches.iter().enumerate() {
                shapes.push(resolve_seq(br, input, &format!("{path}/b{b}"), out)?);
            }
            let [_, h0, w0] = shapes[0];
            if shapes.iter().any(|s| s[1] != h0 || s[2] != w0) {
                return Err(err(format!("branch outputs disagree spatially: {shapes:?}")));
            }
            [shapes.iter().map(|s| s[0]).sum(), h0, w0]
        }
        LayerKind::ResidualAdd { body, shortcut } => {
            let y = resolve_seq(body, input, &format!("{path}/body"), out)?;
            match shortcut {
                Some(sc) => {
                    let s = resolve_seq(sc, input, &format!("{path}/shortcut"), out)?;
                    if s != y {
                        return Err(err(format!("shortcut {s:?} does not match body {y:?}")));
                    }
                }
                None => {
                    if y[0] < c || y[1] > h || y[2] > w {
                        return Err(err(format!("identity shortcut cannot map {input:?} to {y:?}")));
                    }
                }
            }
            y
        }
        LayerKind::LstmCell { hidden, batch } => {
            if *hidden == 0 || *batch == 0 {
                return Err(err("empty recurrent cell".into()));
            }
            [*hidden, 1, 1]
        }
    };
    out.push(ResolvedLayer {
        path: path.to_string(),
        kind: kind.clone(),
        input,
        output,
    });
    Ok(output)
}

//! Work and external-memory traffic of one layer on one cluster.

use serde::{Deserialize, Serialize};

use super::{LayerKind, NetworkSpec, ResolvedLayer, Shape, WorkloadError};
use crate::cluster::{ScheduleVolume, TCDM_BYTES};
use crate::kernels::{conv_traffic, plan_conv_tiles, ConvPass, ConvSpec, KernelError};

/// Bytes moved per parameter when a gradient is added to its accumulator:
/// the accumulator is read and written and the fresh gradient read.
pub const GRADIENT_ACCUMULATION_BYTES: u64 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    Inference,
    /// Forward pass of a training step; keeps what the backward pass needs.
    Forward,
    Backward,
}

/// `d_head` must arrive before compute starts and `d_tail` leaves after it
/// ends; `d_par` overlaps compute.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerWorkload {
    pub macs: u64,
    /// Non-multiply operations such as comparisons and additions.
    pub ops: u64,
    pub d_head: u64,
    pub d_par: u64,
    pub d_tail: u64,
    pub param_bytes: u64,
    pub act_bytes: u64,
}

impl LayerWorkload {
    pub fn dma_bytes(&self) -> u64 {
        self.d_head + self.d_par + self.d_tail
    }

    /// Issued operations: one per MAC plus the element operations.
    pub fn compute_ops(&self) -> u64 {
        self.macs + self.ops
    }

    /// Two per MAC, one per element operation.
    pub fn flops(&self) -> u64 {
        2 * self.macs + self.ops
    }

    pub fn add(&mut self, o: &LayerWorkload) {
        self.macs += o.macs;
        self.ops += o.ops;
        self.d_head += o.d_head;
        self.d_par += o.d_par;
        self.d_tail += o.d_tail;
        self.param_bytes += o.param_bytes;
        self.act_bytes += o.act_bytes;
    }
}

fn elems(s: Shape) -> u64 {
    (s[0] * s[1] * s[2]) as u64
}

/// Parameter count, biases included.
pub fn layer_params(layer: &ResolvedLayer) -> u64 {
    let fan_in = elems(layer.input);
    match layer.kind {
        LayerKind::Conv {
            out_channels, kernel, ..
        } => (out_channels * (layer.input[0] * kernel.rows() * kernel.cols() + 1)) as u64,
        LayerKind::Linear { out_features } => out_features as u64 * (fan_in + 1),
        LayerKind::Batchnorm => 2 * layer.input[0] as u64,
        LayerKind::LstmCell { hidden, .. } => 4 * hidden as u64 * (fan_in + hidden as u64 + 1),
        _ => 0,
    }
}

fn conv_spec(layer: &ResolvedLayer) -> Result<ConvSpec, KernelError> {
    let LayerKind::Conv {
        out_channels,
        kernel,
        stride,
        pad,
    } = layer.kind
    else {
        unreachable!("conv_spec on a non-convolution")
    };
    let [c, h, w] = layer.input;
    ConvSpec::rect(c, h, w, out_channels, (kernel.rows(), kernel.cols()), stride, (pad.rows(), pad.cols()))
}

fn planned_traffic(spec: &ConvSpec) -> Result<ScheduleVolume, KernelError> {
    conv_traffic(spec, &plan_conv_tiles(spec, TCDM_BYTES)?)
}

fn conv_workload(layer: &ResolvedLayer, pass: Pass) -> Result<LayerWorkload, KernelError> {
    let spec = conv_spec(layer)?;
    let fwd = planned_traffic(&spec)?;
    let params = layer_params(layer);
    if pass != Pass::Backward {
        return Ok(LayerWorkload {
            macs: spec.forward_macs(),
            ops: 0,
            d_head: fwd.head_bytes,
            d_par: fwd.parallel_bytes,
            d_tail: fwd.tail_bytes,
            param_bytes: 4 * params,
            act_bytes: 4 * spec.output_len() as u64,
        });
    }

    // Δx is a stride-1 full correlation of Δy with the flipped kernel
    let transposed = ConvSpec::rect(
        spec.c_out,
        spec.out_h(),
        spec.out_w(),
        spec.c_in,
        (spec.k_h, spec.k_w),
        1,
        (spec.k_h - 1, spec.k_w - 1),
    )?;
    let bd = planned_traffic(&transposed)?;
    // the full correlation overshoots Δx when strided; only Δx is written
    let dx_bytes = 4 * spec.input_len() as u64;
    let full_bytes = 4 * transposed.output_len() as u64;
    let bd_tail = bd.tail_bytes * dx_bytes / full_bytes;
    let bd_par = bd.parallel_bytes - (full_bytes - bd.tail_bytes) + (dx_bytes - bd_tail);

    // Δw: the forward input stream plus Δy in place of the weights
    let plan = plan_conv_tiles(&spec, TCDM_BYTES)?;
    let weights = 4 * spec.weight_len() as u64;
    let last_group = spec.c_out - (plan.groups(&spec) - 1) * plan.out_channels;
    let dw_tail = 4 * (last_group * spec.c_in * spec.taps()) as u64;
    let bw_head = fwd.head_bytes - weights + fwd.tail_bytes;
    let bw_par = fwd.parallel_bytes + weights - dw_tail;

    Ok(LayerWorkload {
        macs: spec.macs(ConvPass::BackwardData) + spec.macs(ConvPass::BackwardWeight),
        // bias gradient reduction and accumulation
        ops: spec.output_len() as u64 + params,
        d_head: bd.head_bytes + bw_head,
        d_par: bd_par + bw_par + GRADIENT_ACCUMULATION_BYTES * params,
        d_tail: bd_tail + dw_tail,
        param_bytes: 4 * params,
        act_bytes: dx_bytes,
    })
}

fn window(kind: &LayerKind) -> u64 {
    match kind {
        LayerKind::Maxpool { kernel, .. } | LayerKind::Avgpool { kernel, .. } => (kernel.rows() * kernel.cols()) as u64,
        _ => 1,
    }
}

/// Work of one layer instance. Containers report only their own merge;
/// their children appear as separate resolved layers.
pub fn layer_workload(layer: &ResolvedLayer, pass: Pass) -> Result<LayerWorkload, WorkloadError> {
    let x = elems(layer.input);
    let y = elems(layer.output);
    let params = layer_params(layer);
    let bwd = pass == Pass::Backward;
    let act_bytes = 4 * if bwd { x } else { y };
    let base = LayerWorkload {
        param_bytes: 4 * params,
        act_bytes,
        ..LayerWorkload::default()
    };
    let streamed = |ops: u64, macs: u64, bytes: u64| LayerWorkload {
        macs,
        ops,
        d_par: bytes,
        ..base
    };
    let w = match &layer.kind {
        LayerKind::Conv { .. } => conv_workload(layer, pass).map_err(|e| WorkloadError::Shape {
            path: layer.path.clone(),
            msg: e.to_string(),
        })?,
        LayerKind::Linear { .. } => {
            let weights = 4 * x * y;
            match pass {
                Pass::Inference | Pass::Forward => LayerWorkload {
                    macs: x * y,
                    ops: y,
                    d_head: 4 * x,
                    d_par: weights + 4 * y,
                    d_tail: 4 * y,
                    ..base
                },
                Pass::Backward => LayerWorkload {
                    macs: 2 * x * y,
                    ops: y + params,
                    d_head: 4 * (x + y),
                    d_par: weights + GRADIENT_ACCUMULATION_BYTES * params,
                    d_tail: 4 * x,
                    ..base
                },
            }
        }
        LayerKind::LstmCell { hidden, batch } => {
            let (h, b) = (*hidden as u64, *batch as u64);
            let gemm = b * 4 * h * (x + h);
            let weights = 4 * params;
            match pass {
                Pass::Inference | Pass::Forward => LayerWorkload {
                    macs: gemm,
                    ops: 8 * b * h,
                    d_head: 4 * b * (x + h),
                    d_par: weights + 4 * b * h,
                    d_tail: 8 * b * h,
                    ..base
                },
                Pass::Backward => LayerWorkload {
                    macs: 2 * gemm,
                    ops: 12 * b * h + params,
                    d_head: 4 * b * 6 * h,
                    d_par: weights + 4 * b * (x + h) + GRADIENT_ACCUMULATION_BYTES * params,
                    d_tail: 4 * b * (x + h),
                    ..base
                },
            }
        }
        LayerKind::Maxpool { .. } => {
            let k = window(&layer.kind);
            match pass {
                Pass::Inference => streamed(y * k, 0, 4 * (x + y)),
                // second sweep finds the argmax, whose index is stored
                Pass::Forward => streamed(2 * y * k, 0, 4 * (x + 2 * y)),
                Pass::Backward => streamed(y, 0, 8 * y + 4 * x),
            }
        }
        LayerKind::Avgpool { .. } => streamed(0, y * window(&layer.kind), 4 * (x + y)),
        LayerKind::Relu => match pass {
            Pass::Backward => streamed(x, 0, 12 * x),
            _ => streamed(x, 0, 8 * x),
        },
        LayerKind::Lrn => match pass {
            Pass::Backward => streamed(6 * x, 0, 12 * x),
            _ => streamed(4 * x, 0, 8 * x),
        },
        LayerKind::Batchnorm => match pass {
            Pass::Backward => streamed(4 * x + params, 0, 12 * x + GRADIENT_ACCUMULATION_BYTES * params),
            _ => streamed(2 * x, 0, 8 * x),
        },
        LayerKind::Softmax => match pass {
            Pass::Backward => streamed(2 * x, 0, 12 * x),
            _ => streamed(3 * x, 0, 8 * x),
        },
        LayerKind::Concat { .. } => streamed(0, 0, 8 * y),
        LayerKind::ResidualAdd { .. } => match pass {
            Pass::Backward => streamed(0, 0, 8 * y),
            _ => streamed(y, 0, 12 * y),
        },
    };
    Ok(w)
}

/// Work of one layer in each pass of a network, in execution order.
pub fn network_workload(net: &NetworkSpec, pass: Pass) -> Result<Vec<(ResolvedLayer, LayerWorkload)>, WorkloadError> {
    let mut layers = net.resolve()?;
    if pass == Pass::Backward {
        layers.reverse();
    }
    layers
        .into_iter()
        .map(|l| layer_workload(&l, pass).map(|w| (l, w)))
        .collect()
}

/// Multiply-accumulates of one training step on one image.
pub fn training_step_ops(net: &NetworkSpec) -> Result<u64, WorkloadError> {
    let mut total = 0;
    for pass in [Pass::Forward, Pass::Backward] {
        total += network_workload(net, pass)?.iter().map(|(_, w)| w.macs).sum::<u64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{LayerSpec, Pair};
    use proptest::prelude::*;

    fn single(input: Shape, kind: LayerKind) -> ResolvedLayer {
        let net = NetworkSpec {
            name: "t".into(),
            input,
            layers: vec![LayerSpec::new(kind)],
        };
        net.resolve().unwrap().pop().unwrap()
    }

    fn conv(out: usize, k: usize, stride: usize, pad: usize) -> LayerKind {
        LayerKind::Conv {
            out_channels: out,
            kernel: Pair::Square(k),
            stride,
            pad: Pair::Square(pad),
        }
    }

    /// Counts multiply-accumulates that touch a real input element or a
    /// padding cell by walking the loop nest.
    fn loop_nest_macs(input: Shape, out: usize, kh: usize, kw: usize, stride: usize, ph: usize, pw: usize) -> u64 {
        let [c, h, w] = input;
        let mut n = 0u64;
        for _o in 0..out {
            let mut oy = 0;
            while oy * stride + kh <= h + 2 * ph {
                let mut ox = 0;
                while ox * stride + kw <= w + 2 * pw {
                    n += (c * kh * kw) as u64;
                    ox += 1;
                }
                oy += 1;
            }
        }
        n
    }

    #[test]
    fn pointwise_conv_macs() {
        let l = single([256, 28, 28], conv(64, 1, 1, 0));
        let w = layer_workload(&l, Pass::Inference).unwrap();
        assert_eq!(w.macs, 28 * 28 * 64 * 256);
        assert_eq!(w.param_bytes, 4 * (64 * 256 + 64));
    }

    #[test]
    fn relu_streams_twice_its_size() {
        let l = single([4, 5, 6], LayerKind::Relu);
        let w = layer_workload(&l, Pass::Inference).unwrap();
        assert_eq!((w.macs, w.ops, w.d_par, w.d_head, w.d_tail), (0, 120, 960, 0, 0));
    }

    #[test]
    fn training_conv_is_about_three_inferences() {
        let l = single([64, 56, 56], conv(192, 3, 1, 1));
        let inf = layer_workload(&l, Pass::Inference).unwrap().macs;
        let bwd = layer_workload(&l, Pass::Backward).unwrap().macs;
        let ratio = (inf + bwd) as f64 / inf as f64;
        // border taps of the flipped kernel fall outside Δy
        assert!((ratio - 3.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn empty_network_has_no_work() {
        let net = NetworkSpec {
            name: "empty".into(),
            input: [1, 1, 1],
            layers: vec![],
        };
        assert_eq!(training_step_ops(&net).unwrap(), 0);
    }

    #[test]
    fn dma_split_is_consistent_for_builtins() {
        for name in super::super::builtin_names() {
            let net = NetworkSpec::builtin(name).unwrap();
            for pass in [Pass::Inference, Pass::Forward, Pass::Backward] {
                for (l, w) in network_workload(&net, pass).unwrap() {
                    assert_eq!(w.dma_bytes(), w.d_head + w.d_par + w.d_tail, "{}", l.path);
                    if matches!(l.kind, LayerKind::Conv { .. }) {
                        assert!(w.d_head > 0 && w.d_tail > 0, "{}", l.path);
                    }
                }
            }
        }
    }

    #[test]
    fn lstm_cell_gemm() {
        let net = NetworkSpec::builtin("lstm512").unwrap();
        let l = net.resolve().unwrap().pop().unwrap();
        let w = layer_workload(&l, Pass::Forward).unwrap();
        assert_eq!(w.macs, 32 * 4 * 512 * 1024);
        assert_eq!(w.param_bytes, 4 * (4 * 512 * 1024 + 4 * 512));
    }

    proptest! {
        #[test]
        fn conv_macs_match_loop_nest(
            c in 1usize..6, h in 3usize..14, w in 3usize..14, out in 1usize..5,
            kh in 1usize..4, kw in 1usize..4, stride in 1usize..4, ph in 0usize..2, pw in 0usize..2,
        ) {
            let kind = LayerKind::Conv {
                out_channels: out,
                kernel: Pair::Rect([kh, kw]),
                stride,
                pad: Pair::Rect([ph, pw]),
            };
            let l = single([c, h, w], kind);
            let wl = layer_workload(&l, Pass::Inference).unwrap();
            prop_assert_eq!(wl.macs, loop_nest_macs([c, h, w], out, kh, kw, stride, ph, pw));
            let b = layer_workload(&l, Pass::Backward).unwrap();
            prop_assert!(b.macs >= wl.macs);
            prop_assert!(b.d_par >= GRADIENT_ACCUMULATION_BYTES * layer_params(&l));
        }
    }
}

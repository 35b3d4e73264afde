//! Memory held during inference and training.

use serde::{Deserialize, Serialize};

use super::layer::layer_params;
use super::{LayerKind, NetworkSpec, WorkloadError};

const MIB: f64 = 1024.0 * 1024.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Inference,
    /// Training on single images; gradients update the weights directly.
    TrainBs1,
    /// Mini-batch training; gradients sum in a parameter-sized accumulator.
    TrainBsN,
}

/// Sizes in MiB, all values float32.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub params: f64,
    pub activations: f64,
    pub accumulator: f64,
    pub total: f64,
}

/// How many copies of a layer's output training keeps: the value and its
/// gradient, or only one for average pooling whose backward needs no
/// input. In-place layers reuse their input buffer.
fn training_copies(kind: &LayerKind) -> u64 {
    match kind {
        LayerKind::Conv { .. } | LayerKind::Linear { .. } | LayerKind::Maxpool { .. } | LayerKind::Concat { .. } => 2,
        LayerKind::LstmCell { .. } => 2,
        LayerKind::Avgpool { .. } => 1,
        _ => 0,
    }
}

pub fn network_memory_footprint(net: &NetworkSpec, regime: Regime) -> Result<Footprint, WorkloadError> {
    let layers = net.resolve()?;
    let params: u64 = layers.iter().map(layer_params).sum();
    let size = |s: [usize; 3]| (s[0] * s[1] * s[2]) as u64;
    let values = match regime {
        Regime::Inference => layers.iter().map(|l| size(l.output)).max().unwrap_or(0),
        _ => layers.iter().map(|l| training_copies(&l.kind) * size(l.output)).sum(),
    };
    let params = 4.0 * params as f64 / MIB;
    let activations = 4.0 * values as f64 / MIB;
    let accumulator = if regime == Regime::TrainBsN { params } else { 0.0 };
    Ok(Footprint {
        params,
        activations,
        accumulator,
        total: params + activations + accumulator,
    })
}

/// Largest single convolution output and the sum over all convolution
/// outputs, in values.
pub fn conv_output_values(net: &NetworkSpec) -> Result<(u64, u64), WorkloadError> {
    let sizes: Vec<u64> = net
        .resolve()?
        .iter()
        .filter(|l| matches!(l.kind, LayerKind::Conv { .. }))
        .map(|l| (l.output[0] * l.output[1] * l.output[2]) as u64)
        .collect();
    Ok((sizes.iter().copied().max().unwrap_or(0), sizes.iter().sum()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{builtin_names, LayerSpec, Pair};

    #[test]
    fn single_scalar_conv() {
        let net = NetworkSpec {
            name: "one".into(),
            input: [1, 1, 1],
            layers: vec![LayerSpec::new(LayerKind::Conv {
                out_channels: 1,
                kernel: Pair::Square(1),
                stride: 1,
                pad: Pair::Square(0),
            })],
        };
        let f = network_memory_footprint(&net, Regime::Inference).unwrap();
        // weight plus bias
        assert_eq!(f.params * MIB, 8.0);
    }

    #[test]
    fn identities_hold_for_builtins() {
        for name in builtin_names() {
            let net = NetworkSpec::builtin(name).unwrap();
            let inf = network_memory_footprint(&net, Regime::Inference).unwrap();
            let bs1 = network_memory_footprint(&net, Regime::TrainBs1).unwrap();
            let bsn = network_memory_footprint(&net, Regime::TrainBsN).unwrap();
            assert_eq!(bsn.total - bs1.total, bs1.params, "{name}");
            assert!(bs1.activations >= inf.activations, "{name}");
        }
    }

    #[test]
    fn resnet34_convolution_outputs() {
        let (peak, sum) = conv_output_values(&NetworkSpec::builtin("resnet34").unwrap()).unwrap();
        assert!((peak as f64 / 803e3 - 1.0).abs() < 0.005, "{peak}");
        assert!((sum as f64 / 3560e3 - 1.0).abs() < 0.005, "{sum}");
    }

    #[test]
    fn reference_accounting() {
        // independently tallied from the layer lists
        let want = [
            ("alexnet", 237.95, 5.96),
            ("googlenet", 26.70, 44.87),
            ("resnet34", 176.21, 28.72),
            ("resnet50", 178.71, 71.02),
            ("resnet152", 310.64, 158.30),
            ("inception_v3", 90.86, 101.84),
        ];
        for (name, p, a) in want {
            let f = network_memory_footprint(&NetworkSpec::builtin(name).unwrap(), Regime::TrainBs1).unwrap();
            assert!((f.params - p).abs() < 0.01, "{name} params {}", f.params);
            assert!((f.activations - a).abs() < 0.01, "{name} activations {}", f.activations);
        }
    }
}

//! Command counts of a convolution on a per-pixel streamer versus the
//! nested-loop co-processor.

use serde::{Deserialize, Serialize};

use crate::kernels::{conv_offloads, ConvSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Offloader {
    /// Streams one dot product per command.
    Ns,
    Ntx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffloadCount {
    pub offloads: u64,
    pub cycles_per_offload: u64,
}

pub fn offload_counts(spec: &ConvSpec, by: Offloader) -> OffloadCount {
    match by {
        Offloader::Ns => OffloadCount {
            offloads: (spec.out_h() * spec.out_w() * spec.c_out) as u64,
            cycles_per_offload: (spec.taps() * spec.c_in) as u64,
        },
        Offloader::Ntx => {
            let s = conv_offloads(spec);
            OffloadCount {
                offloads: s.offloads,
                cycles_per_offload: s.iterations_per_offload,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffloadRow {
    pub layer: String,
    pub ns: OffloadCount,
    pub ntx: OffloadCount,
}

/// Representative layers of the benchmark networks, from the stem down to
/// a late pointwise layer.
pub fn offload_layers() -> Vec<(String, ConvSpec)> {
    let layers = [
        (3, 224, 64, 7, 2, 3),
        (64, 56, 192, 3, 1, 1),
        (256, 28, 64, 1, 1, 0),
        (512, 14, 192, 1, 1, 0),
    ];
    layers
        .iter()
        .map(|&(c, hw, o, k, s, p)| {
            let spec = ConvSpec::new(c, hw, hw, o, k, s, p).expect("fixed layer geometry is valid");
            let name = format!("{k}x{k}x{c} -> {}x{}x{o}", spec.out_h(), spec.out_w());
            (name, spec)
        })
        .collect()
}

pub fn offload_table() -> Vec<OffloadRow> {
    offload_layers()
        .into_iter()
        .map(|(layer, spec)| OffloadRow {
            layer,
            ns: offload_counts(&spec, Offloader::Ns),
            ntx: offload_counts(&spec, Offloader::Ntx),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stem_layer() {
        let (_, spec) = &offload_layers()[0];
        assert_eq!(spec.out_h(), 112);
        let ns = offload_counts(spec, Offloader::Ns);
        assert_eq!((ns.offloads, ns.cycles_per_offload), (112 * 112 * 64, 7 * 7 * 3));
    }

    proptest! {
        #[test]
        fn total_work_is_invariant(c in 1usize..64, hw in 4usize..40, o in 1usize..64, k in 1usize..4, s in 1usize..3) {
            let spec = ConvSpec::new(c, hw, hw, o, k, s, k / 2).unwrap();
            let ns = offload_counts(&spec, Offloader::Ns);
            let ntx = offload_counts(&spec, Offloader::Ntx);
            prop_assert_eq!(ns.offloads * ns.cycles_per_offload, ntx.offloads * ntx.cycles_per_offload);
            prop_assert_eq!(ntx.offloads, o as u64);
        }
    }
}

//! Training primitives lowered to NTX commands and tile schedules.

pub mod conv;
pub mod linear;
pub mod optim;
pub mod pool;
pub mod relu;
pub mod softmax;
pub mod strided;
pub mod tiling;

pub use conv::{
    backward_data_commands, backward_weight_commands, conv_backward_data, conv_backward_weight, conv_forward,
    conv_offloads, forward_commands, ConvPass, ConvSpec, OffloadSummary,
};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use optim::{optimizer_step, Hyper, OptimizerKind, OptimizerState, StepReport};
pub use pool::{maxpool_backward, maxpool_forward, MaxPoolOutput, PoolSpec};
pub use relu::{relu_backward, relu_forward};
pub use softmax::softmax;
pub use strided::{decompose_strided_backward, PhaseDecomposition, StridePhase};
pub use tiling::{conv_traffic, lower_conv, plan_conv_tiles, run_conv_tiled, ConvDram, TilePlan, TileFootprint};

use crate::cluster::ClusterError;
use crate::ntx::{FpFlags, NtxCommand, NtxError, VecMemory, WordMemory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("tile needs {needed} bytes but the scratchpad budget is {budget}; try {suggestion:?}")]
    TileTooLarge {
        needed: usize,
        budget: usize,
        suggestion: Option<tiling::TilePlan>,
    },
    #[error("index {index} outside tensor of {len} elements")]
    IndexFault { index: u32, len: usize },
    #[error(transparent)]
    Ntx(#[from] NtxError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Aggregate cost of a batch of commands run on one co-processor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct KernelStats {
    pub commands: u64,
    pub iterations: u64,
    pub cycles: u64,
    pub flags: FpFlags,
}

impl KernelStats {
    pub fn absorb(&mut self, other: KernelStats) {
        self.commands += other.commands;
        self.iterations += other.iterations;
        self.cycles += other.cycles;
        self.flags.invalid |= other.flags.invalid;
    }
}

/// Result tensor plus what it cost to produce.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelRun {
    pub output: Vec<f32>,
    pub stats: KernelStats,
}

/// Word-aligned regions packed back to back; returns byte offsets.
pub(crate) fn pack(lens: &[usize]) -> (Vec<u32>, usize) {
    let mut offs = Vec::with_capacity(lens.len());
    let mut top = 0usize;
    for &n in lens {
        offs.push(top as u32);
        top += 4 * n.max(1);
    }
    (offs, top)
}

pub(crate) fn run_commands<M: WordMemory>(mem: &mut M, cmds: &[NtxCommand]) -> Result<KernelStats, KernelError> {
    let mut stats = KernelStats::default();
    for c in cmds {
        c.check_addresses(mem.capacity())?;
        let out = c.execute(mem)?;
        stats.commands += 1;
        stats.iterations += out.iterations;
        stats.cycles += out.cycles;
        stats.flags.invalid |= out.flags.invalid;
    }
    Ok(stats)
}

pub(crate) fn memory_with(len: usize, fills: &[(u32, &[f32])]) -> VecMemory {
    let mut m = VecMemory::new(len);
    for (addr, data) in fills {
        m.write_slice(*addr, data);
    }
    m
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<(), KernelError> {
    if got != want {
        return Err(KernelError::Shape(format!("{what}: expected {want} elements, got {got}")));
    }
    Ok(())
}

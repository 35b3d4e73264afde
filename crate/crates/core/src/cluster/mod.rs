//! One processing cluster: banked scratchpad, DMA engine, control core and
//! eight co-processors.

pub mod dma;
pub mod schedule;
pub mod sim;
pub mod tcdm;
pub mod trace;

pub use dma::{dma_execute, zero_pad_rows, DmaDescriptor, DmaDirection, DmaReport, PadRegion, DMA_BYTES_PER_CYCLE, DRAM_LATENCY};
pub use schedule::{command_footprint, staging_writes, Cluster, Phase, ScheduleVolume, TileSchedule};
pub use sim::simulate;
pub use tcdm::{bank_of, simulate_streams, tcdm_arbitrate, BankArbiter, Dram, Request, StreamStats, Tcdm, TCDM_BANKS, TCDM_BYTES};
pub use trace::{ClusterTrace, Transition, Unit, UnitState};

use serde::{Deserialize, Serialize};

use crate::ntx::NtxError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("DMA error: {0}")]
    Dma(String),
    #[error("dependency violation: {0}")]
    Dependency(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("simulation did not finish within {0} cycles")]
    Timeout(u64),
    #[error(transparent)]
    Ntx(#[from] NtxError),
}

/// Structural and timing parameters of a cluster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub ntx_count: usize,
    pub tcdm_bytes: usize,
    pub banks: usize,
    pub dram_latency: u64,
    /// Core cycles to program one DMA descriptor.
    pub dma_program_cycles: u64,
    /// Core cycles per staging register write and per issue.
    pub register_write_cycles: u64,
    pub max_cycles: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            ntx_count: 8,
            tcdm_bytes: TCDM_BYTES,
            banks: TCDM_BANKS,
            dram_latency: DRAM_LATENCY,
            dma_program_cycles: 10,
            register_write_cycles: 1,
            max_cycles: 200_000_000,
        }
    }
}

impl ClusterConfig {
    /// Requester ids: three ports per co-processor, then DMA, then core.
    pub fn requesters(&self) -> usize {
        3 * self.ntx_count + 2
    }

    pub fn dma_requester(&self) -> usize {
        3 * self.ntx_count
    }

    pub fn core_requester(&self) -> usize {
        3 * self.ntx_count + 1
    }
}

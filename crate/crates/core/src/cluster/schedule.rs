//! Tile schedules and their sequential (functional) meaning.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::dma::{dma_execute, zero_pad_rows, DmaDescriptor, DmaDirection, PadRegion};
use super::{ClusterConfig, ClusterError, Dram, Tcdm};
use crate::ntx::{FpFlags, NtxCommand, WordMemory};

/// One step of a double-buffered schedule.
///
/// Head transfers complete before the commands issue, parallel transfers
/// overlap the commands and tail transfers start after they complete.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub head: Vec<DmaDescriptor>,
    pub zero_pad: Vec<PadRegion>,
    /// (co-processor index, command)
    pub commands: Vec<(usize, NtxCommand)>,
    pub parallel: Vec<DmaDescriptor>,
    pub tail: Vec<DmaDescriptor>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TileSchedule {
    pub phases: Vec<Phase>,
}

/// Work and traffic of a schedule, split the way the analytical model
/// expects.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleVolume {
    pub iterations: u64,
    pub commands: u64,
    pub head_bytes: u64,
    pub parallel_bytes: u64,
    pub tail_bytes: u64,
}

impl ScheduleVolume {
    pub fn dma_bytes(&self) -> u64 {
        self.head_bytes + self.parallel_bytes + self.tail_bytes
    }
}

fn overlaps(a: &Range<u32>, b: &Range<u32>) -> bool {
    a.start < b.end && b.start < a.end
}

/// Scratchpad bytes a command may touch.
pub fn command_footprint(cmd: &NtxCommand) -> Vec<Range<u32>> {
    let (ra, rb) = cmd.opcode.reads();
    [ra, rb, true]
        .iter()
        .zip(&cmd.agu)
        .filter(|(used, _)| **used)
        .map(|(_, agu)| {
            let (lo, hi) = agu.address_range(&cmd.hwl);
            lo.max(0) as u32..(hi + 4).max(0) as u32
        })
        .collect()
}

impl TileSchedule {
    pub fn volume(&self) -> ScheduleVolume {
        let mut v = ScheduleVolume::default();
        for p in &self.phases {
            v.head_bytes += p.head.iter().map(DmaDescriptor::bytes).sum::<u64>();
            v.parallel_bytes += p.parallel.iter().map(DmaDescriptor::bytes).sum::<u64>();
            v.tail_bytes += p.tail.iter().map(DmaDescriptor::bytes).sum::<u64>();
            v.iterations += p.commands.iter().map(|(_, c)| c.hwl.iterations()).sum::<u64>();
            v.commands += p.commands.len() as u64;
        }
        v
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &DmaDescriptor> {
        self.phases
            .iter()
            .flat_map(|p| p.head.iter().chain(&p.parallel).chain(&p.tail))
    }

    /// Checks addresses and the ordering assumptions of double buffering.
    pub fn validate(&self, cfg: &ClusterConfig, dram_bytes: usize) -> Result<(), ClusterError> {
        let mut prev_loads: Vec<Range<u32>> = Vec::new();
        for (k, p) in self.phases.iter().enumerate() {
            for d in p.head.iter().chain(&p.parallel).chain(&p.tail) {
                d.validate(cfg.tcdm_bytes, dram_bytes)?;
            }
            let mut footprint = Vec::new();
            for (ntx, cmd) in &p.commands {
                if *ntx >= cfg.ntx_count {
                    return Err(ClusterError::Schedule(format!(
                        "phase {k}: co-processor {ntx} does not exist"
                    )));
                }
                cmd.check_addresses(cfg.tcdm_bytes)?;
                footprint.extend(command_footprint(cmd));
            }
            for d in &p.parallel {
                for r in d.tcdm_ranges() {
                    if let Some(f) = footprint.iter().find(|f| overlaps(f, &r)) {
                        return Err(ClusterError::Dependency(format!(
                            "phase {k}: parallel transfer {r:?} overlaps command operands {f:?}"
                        )));
                    }
                }
            }
            let live: Vec<Range<u32>> = p
                .head
                .iter()
                .flat_map(|d| d.tcdm_ranges().collect::<Vec<_>>())
                .chain(prev_loads.iter().cloned())
                .collect();
            for region in &p.zero_pad {
                for c in region.cells() {
                    if let Some(r) = live.iter().find(|r| r.contains(&c)) {
                        return Err(ClusterError::Dependency(format!(
                            "phase {k}: padding cell {c} overlaps live buffer {r:?}"
                        )));
                    }
                }
            }
            prev_loads = p
                .parallel
                .iter()
                .filter(|d| d.direction == DmaDirection::ToTcdm)
                .flat_map(|d| d.tcdm_ranges().collect::<Vec<_>>())
                .collect();
        }
        Ok(())
    }

    /// Applies every phase in order: head, padding, commands, parallel,
    /// tail.
    pub fn execute_sequential(&self, tcdm: &mut Tcdm, dram: &mut Dram) -> Result<FpFlags, ClusterError> {
        let mut flags = FpFlags::default();
        for p in &self.phases {
            for d in &p.head {
                dma_execute(d, tcdm, dram)?;
            }
            for region in &p.zero_pad {
                zero_pad_rows(tcdm, region, &[])?;
            }
            for (_, cmd) in &p.commands {
                let out = cmd.execute(tcdm)?;
                flags.invalid |= out.flags.invalid;
            }
            for d in p.parallel.iter().chain(&p.tail) {
                dma_execute(d, tcdm, dram)?;
            }
        }
        Ok(flags)
    }
}

/// Distinct staging registers between two command configurations.
pub fn staging_writes(from: &NtxCommand, to: &NtxCommand) -> u64 {
    let mut n = 0;
    n += from
        .hwl
        .bounds
        .iter()
        .zip(&to.hwl.bounds)
        .filter(|(a, b)| a != b)
        .count() as u64;
    let levels = |c: &NtxCommand| (c.hwl.outer_level, c.hwl.init_level, c.hwl.store_level);
    n += (levels(from) != levels(to)) as u64;
    n += (from.opcode != to.opcode) as u64;
    n += (from.init != to.init) as u64;
    for (a, b) in from.agu.iter().zip(&to.agu) {
        n += (a.base != b.base) as u64;
        n += a.steps.iter().zip(&b.steps).filter(|(x, y)| x != y).count() as u64;
    }
    n
}

/// The cluster memory system plus its configuration.
#[derive(Clone, Debug)]
pub struct Cluster {
    pub config: ClusterConfig,
    pub tcdm: Tcdm,
    pub dram: Dram,
}

impl Cluster {
    pub fn new(config: ClusterConfig, dram: Dram) -> Self {
        Cluster {
            tcdm: Tcdm::new(config.tcdm_bytes, config.banks),
            config,
            dram,
        }
    }

    /// Validates, applies the functional effects and simulates timing.
    pub fn run_tile_schedule(&mut self, ts: &TileSchedule) -> Result<super::ClusterTrace, ClusterError> {
        ts.validate(&self.config, self.dram.capacity())?;
        let flags = ts.execute_sequential(&mut self.tcdm, &mut self.dram)?;
        let mut trace = super::sim::simulate(ts, &self.config)?;
        trace.flags = flags;
        Ok(trace)
    }
}

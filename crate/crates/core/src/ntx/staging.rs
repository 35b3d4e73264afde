//! Command staging registers, shadow copy and issue queue.

use super::command::{CommandOutcome, NtxCommand};
use super::{NtxError, WordMemory};

/// Where an issued command landed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IssueSlot {
    Running,
    Queued,
}

/// Live configuration registers plus the snapshots taken at issue.
#[derive(Clone, Debug, Default)]
pub struct StagingArea {
    live: NtxCommand,
    running: Option<NtxCommand>,
    pending: Option<NtxCommand>,
}

impl StagingArea {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn live(&self) -> &NtxCommand {
        &self.live
    }

    /// Live registers persist across commands.
    pub fn live_mut(&mut self) -> &mut NtxCommand {
        &mut self.live
    }

    pub fn running(&self) -> Option<&NtxCommand> {
        self.running.as_ref()
    }

    pub fn pending(&self) -> Option<&NtxCommand> {
        self.pending.as_ref()
    }

    pub fn is_busy(&self) -> bool {
        self.running.is_some()
    }

    /// Snapshots the live registers. At most one command waits behind the
    /// running one.
    pub fn issue(&mut self) -> Result<IssueSlot, NtxError> {
        if self.running.is_none() {
            self.running = Some(self.live);
            Ok(IssueSlot::Running)
        } else if self.pending.is_none() {
            self.pending = Some(self.live);
            Ok(IssueSlot::Queued)
        } else {
            Err(NtxError::Backpressure)
        }
    }

    /// Retires the running command and promotes the queued one.
    pub fn retire(&mut self) -> Option<NtxCommand> {
        let done = self.running.take();
        self.running = self.pending.take();
        done
    }
}

/// Writes the same field in every staging area, as through the broadcast
/// alias of the register file.
pub fn broadcast<F: Fn(&mut NtxCommand)>(areas: &mut [StagingArea], write: F) {
    for area in areas {
        write(area.live_mut());
    }
}

/// One co-processor: staging area plus accounting.
#[derive(Clone, Debug, Default)]
pub struct Ntx {
    pub staging: StagingArea,
    pub busy_cycles: u64,
    pub commands: u64,
}

impl Ntx {
    pub fn new() -> Self {
        Self::default()
    }

    /// Executes the running command and promotes the queued one.
    pub fn step<M: WordMemory + ?Sized>(
        &mut self,
        mem: &mut M,
    ) -> Result<Option<CommandOutcome>, NtxError> {
        let Some(cmd) = self.staging.running().copied() else {
            return Ok(None);
        };
        let out = cmd.execute(mem);
        self.staging.retire();
        let out = out?;
        self.busy_cycles += out.cycles;
        self.commands += 1;
        Ok(Some(out))
    }

    /// Runs until both the running and queued commands are retired.
    pub fn drain<M: WordMemory + ?Sized>(
        &mut self,
        mem: &mut M,
    ) -> Result<Vec<CommandOutcome>, NtxError> {
        let mut outs = Vec::new();
        while let Some(o) = self.step(mem)? {
            outs.push(o);
        }
        Ok(outs)
    }
}

//! Cycle-level record of one schedule run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ntx::FpFlags;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Unit {
    Core,
    Dma,
    Ntx(usize),
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Unit::Core => write!(f, "core"),
            Unit::Dma => write!(f, "dma"),
            Unit::Ntx(i) => write!(f, "ntx{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitState {
    Idle,
    /// Core writing descriptors or staging registers.
    Program,
    /// Core storing padding words.
    Pad,
    /// Core waiting on a transfer, a command or queue space.
    Wait,
    /// DMA waiting for the first word from external memory.
    Latency,
    Transfer,
    Compute,
    Stall,
    Drain,
}

impl UnitState {
    pub fn as_str(&self) -> &'static str {
        match self {
            UnitState::Idle => "idle",
            UnitState::Program => "program",
            UnitState::Pad => "pad",
            UnitState::Wait => "wait",
            UnitState::Latency => "latency",
            UnitState::Transfer => "transfer",
            UnitState::Compute => "compute",
            UnitState::Stall => "stall",
            UnitState::Drain => "drain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub cycle: u64,
    pub unit: Unit,
    pub state: UnitState,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterTrace {
    pub cycles: u64,
    pub core_busy: u64,
    /// Cycles with a transfer ready to move data, stalled or not.
    pub dma_busy: u64,
    /// Per co-processor: computing, stalled on a bank or draining.
    pub ntx_busy: Vec<u64>,
    pub ntx_iterations: u64,
    pub dma_bytes: u64,
    pub requests_offered: u64,
    pub requests_granted: u64,
    pub requests_stalled: u64,
    /// Burst sizes in bytes, one per transferred row.
    pub bursts: Vec<u32>,
    pub transitions: Vec<Transition>,
    /// Cycle at which each phase's tail completed.
    pub phase_end: Vec<u64>,
    pub flags: FpFlags,
}

impl ClusterTrace {
    pub fn busy_fraction(&self, unit: Unit) -> f64 {
        if self.cycles == 0 {
            return 0.0;
        }
        let busy = match unit {
            Unit::Core => self.core_busy,
            Unit::Dma => self.dma_busy,
            Unit::Ntx(i) => self.ntx_busy.get(i).copied().unwrap_or(0),
        };
        busy as f64 / self.cycles as f64
    }

    /// Iterations per co-processor busy cycle.
    pub fn measured_eta_c(&self) -> f64 {
        let busy: u64 = self.ntx_busy.iter().sum();
        if busy == 0 {
            1.0
        } else {
            self.ntx_iterations as f64 / busy as f64
        }
    }

    /// Bytes moved per peak-rate byte slot while the DMA was busy.
    pub fn measured_eta_d(&self) -> f64 {
        if self.dma_busy == 0 {
            1.0
        } else {
            self.dma_bytes as f64 / (super::DMA_BYTES_PER_CYCLE * self.dma_busy) as f64
        }
    }

    pub fn burst_histogram(&self) -> BTreeMap<u32, u64> {
        let mut h = BTreeMap::new();
        for &b in &self.bursts {
            *h.entry(b).or_insert(0) += 1;
        }
        h
    }

    /// Fraction of bytes carried by bursts of at least `min_bytes`.
    pub fn byte_fraction_in_bursts(&self, min_bytes: u32) -> f64 {
        let total: u64 = self.bursts.iter().map(|&b| b as u64).sum();
        if total == 0 {
            return 0.0;
        }
        let big: u64 = self.bursts.iter().filter(|&&b| b >= min_bytes).map(|&b| b as u64).sum();
        big as f64 / total as f64
    }

    pub fn transitions_csv(&self) -> String {
        let mut s = String::from("cycle,unit,state\n");
        for t in &self.transitions {
            let _ = writeln!(s, "{},{},{}", t.cycle, t.unit, t.state.as_str());
        }
        s
    }

    pub fn bursts_csv(&self) -> String {
        let mut s = String::from("bytes,count\n");
        for (b, n) in self.burst_histogram() {
            let _ = writeln!(s, "{b},{n}");
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let rows: [(&str, f64); 9] = [
            ("cycles", self.cycles as f64),
            ("ntx_iterations", self.ntx_iterations as f64),
            ("dma_bytes", self.dma_bytes as f64),
            ("core_busy_fraction", self.busy_fraction(Unit::Core)),
            ("dma_busy_fraction", self.busy_fraction(Unit::Dma)),
            ("eta_c", self.measured_eta_c()),
            ("eta_d", self.measured_eta_d()),
            ("requests_stalled", self.requests_stalled as f64),
            ("bytes_in_bursts_ge_32", self.byte_fraction_in_bursts(32)),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_statistics() {
        let t = ClusterTrace {
            bursts: vec![96, 96, 88, 16],
            ..Default::default()
        };
        assert_eq!(t.burst_histogram().get(&96), Some(&2));
        let f = t.byte_fraction_in_bursts(32);
        assert!((f - 280.0 / 296.0).abs() < 1e-12);
        assert!(t.bursts_csv().starts_with("bytes,count\n16,1\n"));
    }

    #[test]
    fn efficiencies() {
        let t = ClusterTrace {
            cycles: 100,
            ntx_busy: vec![50, 50],
            ntx_iterations: 80,
            dma_busy: 40,
            dma_bytes: 128,
            ..Default::default()
        };
        assert_eq!(t.measured_eta_c(), 0.8);
        assert_eq!(t.measured_eta_d(), 0.8);
        assert_eq!(t.busy_fraction(Unit::Ntx(1)), 0.5);
    }
}

//! Cube architecture parameters, technology nodes and named presets.

use serde::{Deserialize, Serialize};

use super::PerfError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TechNode {
    /// 28 nm logic on a 50 nm DRAM stack.
    #[serde(rename = "28nm")]
    N28,
    /// 14 nm logic on a 30 nm DRAM stack.
    #[serde(rename = "14nm")]
    N14,
}

/// Area of the cube's logic at 28 nm: a fixed part plus one slice per
/// cluster, fitted to the 16- and 64-cluster layouts.
const AREA_FIXED_MM2: f64 = 1.0 / 3.0;
const AREA_PER_CLUSTER_MM2: f64 = 30.5 / 48.0;

impl TechNode {
    /// Lowest and highest clock of the voltage-frequency sweep, Hz.
    pub fn freq_range(self) -> (f64, f64) {
        match self {
            TechNode::N28 => (0.1e9, 2.5e9),
            TechNode::N14 => (0.14e9, 3.5e9),
        }
    }

    /// Factor on the DRAM power of the 28 nm stack.
    pub fn dram_factor(self) -> f64 {
        match self {
            TechNode::N28 => 1.0,
            TechNode::N14 => 0.87,
        }
    }

    pub fn area_factor(self) -> f64 {
        match self {
            TechNode::N28 => 1.0,
            TechNode::N14 => 0.4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TechNode::N28 => "28nm",
            TechNode::N14 => "14nm",
        }
    }
}

/// A cube of `clusters` processing clusters sharing one DRAM stack. All
/// rates refer to the co-processor clock `freq_hz`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub clusters: usize,
    pub ntx_per_cluster: usize,
    /// Peak multiply-accumulates per cycle per cluster.
    pub macs_per_cycle: f64,
    /// Peak DMA bytes per cycle per cluster.
    pub bytes_per_cycle: f64,
    pub freq_hz: f64,
    pub eta_compute: f64,
    pub eta_dma: f64,
    pub node: TechNode,
    /// All-in cluster energy per cycle, J.
    pub energy_per_cycle: f64,
    /// Internal cube bandwidth ceiling, B/s.
    pub max_bandwidth: f64,
}

pub const NOMINAL_FREQ_HZ: f64 = 1.5e9;
pub const NOMINAL_ENERGY_PER_CYCLE: f64 = 165e-12;

impl ArchConfig {
    /// 28 nm cube at the nominal operating point.
    pub fn nominal(clusters: usize) -> Self {
        ArchConfig {
            clusters,
            ntx_per_cluster: 8,
            macs_per_cycle: 8.0,
            bytes_per_cycle: 4.0,
            freq_hz: NOMINAL_FREQ_HZ,
            eta_compute: 0.84,
            eta_dma: 0.87,
            node: TechNode::N28,
            energy_per_cycle: NOMINAL_ENERGY_PER_CYCLE,
            max_bandwidth: 320e9,
        }
    }

    /// Parses names such as `ntx64-28nm` or `ntx128-14nm`.
    pub fn preset(name: &str) -> Result<Self, PerfError> {
        let bad = || PerfError::UnknownPreset(name.to_string());
        let rest = name.strip_prefix("ntx").ok_or_else(bad)?;
        let (k, node) = rest.split_once('-').ok_or_else(bad)?;
        let clusters: usize = k.parse().map_err(|_| bad())?;
        if !clusters.is_power_of_two() || !(16..=512).contains(&clusters) {
            return Err(bad());
        }
        match node {
            "28nm" if clusters <= 64 => Ok(Self::nominal(clusters)),
            "14nm" => tech_scale(&Self::nominal(clusters)),
            _ => Err(bad()),
        }
    }

    pub fn preset_names() -> Vec<String> {
        let mut v: Vec<String> = [16, 32, 64].iter().map(|k| format!("ntx{k}-28nm")).collect();
        v.extend([16, 32, 64, 128, 256, 512].iter().map(|k| format!("ntx{k}-14nm")));
        v
    }

    pub fn name(&self) -> String {
        format!("ntx{}-{}", self.clusters, self.node.label())
    }

    pub fn validate(&self) -> Result<(), PerfError> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if self.clusters == 0 || self.ntx_per_cluster == 0 {
            return Err(PerfError::Invalid("cube without clusters".into()));
        }
        if !unit(self.eta_compute) || !unit(self.eta_dma) {
            return Err(PerfError::Invalid("utilization efficiencies must lie in (0, 1]".into()));
        }
        if !(self.freq_hz > 0.0) {
            return Err(PerfError::Invalid(format!("clock {} Hz is not positive", self.freq_hz)));
        }
        if !(self.macs_per_cycle > 0.0 && self.bytes_per_cycle > 0.0 && self.energy_per_cycle > 0.0 && self.max_bandwidth > 0.0) {
            return Err(PerfError::Invalid("rates, energy and bandwidth ceiling must be positive".into()));
        }
        Ok(())
    }

    /// Peak throughput, FLOP/s.
    pub fn peak_flops(&self) -> f64 {
        2.0 * self.macs_per_cycle * self.clusters as f64 * self.freq_hz
    }

    pub fn area_mm2(&self) -> f64 {
        (AREA_FIXED_MM2 + AREA_PER_CLUSTER_MM2 * self.clusters as f64) * self.node.area_factor()
    }

    pub fn cluster_power(&self) -> f64 {
        self.energy_per_cycle * self.freq_hz
    }
}

/// Moves a 28 nm configuration to 14 nm: 1.4× faster, 0.7× the energy.
pub fn tech_scale(a: &ArchConfig) -> Result<ArchConfig, PerfError> {
    if a.node != TechNode::N28 {
        return Err(PerfError::Invalid("only 28 nm configurations can be scaled".into()));
    }
    Ok(ArchConfig {
        freq_hz: a.freq_hz * 1.4,
        energy_per_cycle: a.energy_per_cycle * 0.7,
        node: TechNode::N14,
        ..*a
    })
}

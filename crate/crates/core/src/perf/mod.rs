//! Analytical timing, power and efficiency of a cube.

mod arch;
mod offload;
mod timing;
mod vfs;

pub use arch::{tech_scale, ArchConfig, TechNode, NOMINAL_ENERGY_PER_CYCLE, NOMINAL_FREQ_HZ};
pub use offload::{offload_counts, offload_layers, offload_table, OffloadCount, OffloadRow, Offloader};
pub use timing::{
    cube_metrics, dram_power, evaluate_network, kernel_timing, CubeMetrics, KernelTiming, LayerReport, Mode,
    NetworkReport, PowerAccounting,
};
pub use vfs::{
    default_grid, network_efficiencies, operating_point, optimal_config, reference_tile, vfs_sweep, voltage_at, VfsPoint,
    VfsSweep, POWER_BUDGET_W, V_MAX, V_MIN, V_NOMINAL,
};

use crate::workload::WorkloadError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerfError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown configuration {0:?}; expected ntx<K>-28nm (K = 16, 32, 64) or ntx<K>-14nm (K = 16..512)")]
    UnknownPreset(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

/// Sustained throughput per watt of board power, FLOP/s/W.
pub fn gpu_efficiency(time_per_image_s: f64, tdp_w: f64, flops_per_image: f64) -> Result<f64, PerfError> {
    if !(time_per_image_s > 0.0 && tdp_w > 0.0 && flops_per_image > 0.0) {
        return Err(PerfError::Invalid("time, power and work must be positive".into()));
    }
    Ok(flops_per_image / time_per_image_s / tdp_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gpu_efficiency_arithmetic() {
        assert!((gpu_efficiency(0.01, 100.0, 1e9).unwrap() - 1e9).abs() < 1e-3);
        assert_eq!(gpu_efficiency(0.01, 100.0, 0.5e9).unwrap() * 2.0, gpu_efficiency(0.01, 100.0, 1e9).unwrap());
        assert!(gpu_efficiency(0.0, 100.0, 1.0).is_err());
    }
}

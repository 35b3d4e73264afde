//! Cluster timing, cube bandwidth and power, and whole-network evaluation.

use serde::{Deserialize, Serialize};

use super::{ArchConfig, PerfError, TechNode};
use crate::workload::{network_workload, LayerWorkload, NetworkSpec, Pass};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTiming {
    pub compute_s: f64,
    pub dma_parallel_s: f64,
    pub dma_serial_s: f64,
    pub cluster_s: f64,
    /// Bytes per second one cluster draws from DRAM.
    pub cluster_bandwidth: f64,
    pub cluster_power: f64,
}

/// Time of `w` on one cluster with double buffering hiding the parallel
/// transfers behind compute.
pub fn kernel_timing(w: &LayerWorkload, a: &ArchConfig) -> Result<KernelTiming, PerfError> {
    a.validate()?;
    let f = a.freq_hz;
    let dma_rate = a.eta_dma * a.bytes_per_cycle * f;
    let compute_s = w.compute_ops() as f64 / (a.eta_compute * a.macs_per_cycle * f);
    let dma_parallel_s = w.d_par as f64 / dma_rate;
    let dma_serial_s = (w.d_head + w.d_tail) as f64 / dma_rate;
    let cluster_s = compute_s.max(dma_parallel_s) + dma_serial_s;
    Ok(KernelTiming {
        compute_s,
        dma_parallel_s,
        dma_serial_s,
        cluster_s,
        cluster_bandwidth: if cluster_s > 0.0 { w.dma_bytes() as f64 / cluster_s } else { 0.0 },
        cluster_power: a.cluster_power(),
    })
}

/// Power of the DRAM stack serving `bandwidth` bytes per second.
pub fn dram_power(bandwidth: f64, node: TechNode) -> f64 {
    (7.9 + 0.0215 * bandwidth / 1e9) * node.dram_factor()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeMetrics {
    /// B/s.
    pub bandwidth: f64,
    pub time_s: f64,
    pub power_w: f64,
    /// FLOP/s/W.
    pub efficiency: f64,
    pub flops: f64,
}

/// Work split evenly over all clusters; above the bandwidth ceiling the
/// run stretches until it fits.
pub fn cube_metrics(w: &LayerWorkload, a: &ArchConfig) -> Result<CubeMetrics, PerfError> {
    let t = kernel_timing(w, a)?;
    let k = a.clusters as f64;
    let mut bandwidth = k * t.cluster_bandwidth;
    let mut time_s = t.cluster_s / k;
    if bandwidth > a.max_bandwidth {
        time_s *= bandwidth / a.max_bandwidth;
        bandwidth = a.max_bandwidth;
    }
    let power_w = dram_power(bandwidth, a.node) + k * t.cluster_power;
    let flops = w.flops() as f64;
    let efficiency = if time_s > 0.0 { flops / (power_w * time_s) } else { 0.0 };
    Ok(CubeMetrics {
        bandwidth,
        time_s,
        power_w,
        efficiency,
        flops,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerAccounting {
    /// The whole run draws the power of its most bandwidth-hungry layer,
    /// as a provisioned supply would.
    #[default]
    PeakBandwidth,
    /// Energy integrated layer by layer.
    PerLayer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Inference,
    /// Forward and backward pass of one image.
    Training,
}

impl Mode {
    pub fn passes(self) -> &'static [Pass] {
        match self {
            Mode::Inference => &[Pass::Inference],
            Mode::Training => &[Pass::Forward, Pass::Backward],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub path: String,
    pub kind: String,
    pub pass: Pass,
    pub metrics: CubeMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub network: String,
    pub arch: String,
    pub mode: Mode,
    pub layers: Vec<LayerReport>,
    /// Bandwidth is the run average; power follows the accounting rule.
    pub total: CubeMetrics,
    pub peak_bandwidth: f64,
    pub energy_j: f64,
}

pub fn evaluate_network(net: &NetworkSpec, a: &ArchConfig, mode: Mode, accounting: PowerAccounting) -> Result<NetworkReport, PerfError> {
    a.validate()?;
    let mut layers = Vec::new();
    let mut bytes = 0.0;
    for &pass in mode.passes() {
        for (l, w) in network_workload(net, pass)? {
            bytes += w.dma_bytes() as f64;
            layers.push(LayerReport {
                kind: l.kind_name().to_string(),
                path: l.path,
                pass,
                metrics: cube_metrics(&w, a)?,
            });
        }
    }
    // folded from +0.0; an empty f64 sum is -0.0
    let time_s = layers.iter().fold(0.0, |t, l| t + l.metrics.time_s);
    let flops = layers.iter().fold(0.0, |f, l| f + l.metrics.flops);
    let peak_bandwidth = layers.iter().map(|l| l.metrics.bandwidth).fold(0.0, f64::max);
    let energy_j = match accounting {
        PowerAccounting::PeakBandwidth => (dram_power(peak_bandwidth, a.node) + a.clusters as f64 * a.cluster_power()) * time_s,
        PowerAccounting::PerLayer => layers.iter().fold(0.0, |e, l| e + l.metrics.power_w * l.metrics.time_s),
    };
    let positive = time_s > 0.0;
    let total = CubeMetrics {
        bandwidth: if positive { bytes / time_s } else { 0.0 },
        time_s,
        power_w: if positive { energy_j / time_s } else { 0.0 },
        efficiency: if positive { flops / energy_j } else { 0.0 },
        flops,
    };
    Ok(NetworkReport {
        network: net.name.clone(),
        arch: a.name(),
        mode,
        layers,
        total,
        peak_bandwidth,
        energy_j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn work(macs: u64, head: u64, par: u64, tail: u64) -> LayerWorkload {
        LayerWorkload {
            macs,
            d_head: head,
            d_par: par,
            d_tail: tail,
            ..LayerWorkload::default()
        }
    }

    #[test]
    fn compute_time_arithmetic() {
        let a = ArchConfig {
            freq_hz: 1e9,
            ..ArchConfig::nominal(1)
        };
        let t = kernel_timing(&work(8_000_000, 0, 0, 0), &a).unwrap();
        assert!((t.compute_s - 1.0 / 0.84e3).abs() < 1e-12);
        assert!((t.compute_s * 1e3 - 1.19).abs() < 0.005);
    }

    #[test]
    fn no_overlap_adds_up() {
        let a = ArchConfig::nominal(4);
        let t = kernel_timing(&work(1000, 400, 0, 600), &a).unwrap();
        assert_eq!(t.cluster_s, t.compute_s + t.dma_serial_s);
    }

    #[test]
    fn dram_power_points() {
        assert_eq!(dram_power(0.0, TechNode::N28), 7.9);
        assert!((dram_power(51.2e9, TechNode::N28) - 9.0).abs() < 0.005);
        assert!((dram_power(100e9, TechNode::N14) - 8.7435).abs() < 1e-9);
    }

    #[test]
    fn zero_clock_is_rejected() {
        let a = ArchConfig {
            freq_hz: 0.0,
            ..ArchConfig::nominal(1)
        };
        assert!(kernel_timing(&work(1, 0, 0, 0), &a).is_err());
    }

    #[test]
    fn empty_network_reports_zero() {
        let net = NetworkSpec {
            name: "empty".into(),
            input: [1, 1, 1],
            layers: vec![],
        };
        let r = evaluate_network(&net, &ArchConfig::nominal(64), Mode::Training, PowerAccounting::default()).unwrap();
        assert!(r.layers.is_empty());
        assert!(r.total.time_s == 0.0 && r.total.time_s.is_sign_positive());
        assert_eq!(r.total.efficiency, 0.0);
    }

    proptest! {
        #[test]
        fn efficiency_identity_and_cap(macs in 1u64..1u64 << 32, head in 0u64..1 << 20, par in 0u64..1 << 30, tail in 0u64..1 << 20, k in 0u32..10, mhz in 100u32..2500) {
            let a = ArchConfig { clusters: 1 << k, freq_hz: mhz as f64 * 1e6, ..ArchConfig::nominal(1) };
            let w = work(macs, head, par, tail);
            let m = cube_metrics(&w, &a).unwrap();
            prop_assert!(m.bandwidth <= a.max_bandwidth * (1.0 + 1e-12));
            let rel = (m.efficiency * m.power_w * m.time_s - 2.0 * macs as f64).abs() / (2.0 * macs as f64);
            prop_assert!(rel < 1e-12);
            let uncapped = ArchConfig { max_bandwidth: f64::MAX, ..a };
            let u = cube_metrics(&w, &uncapped).unwrap();
            if u.bandwidth <= a.max_bandwidth {
                prop_assert_eq!(u.time_s, m.time_s);
            }
        }

        #[test]
        fn doubling_clusters_halves_compute_bound_time(macs in 1u64 << 20..1u64 << 32, k in 0u32..5) {
            let a = ArchConfig { clusters: 1 << k, ..ArchConfig::nominal(1) };
            let b = ArchConfig { clusters: 2 << k, ..a };
            let w = work(macs, 0, macs / 8, 0);
            let (ta, tb) = (cube_metrics(&w, &a).unwrap(), cube_metrics(&w, &b).unwrap());
            prop_assume!(tb.bandwidth < b.max_bandwidth);
            prop_assert!((ta.time_s / tb.time_s - 2.0).abs() < 1e-12);
        }

        #[test]
        fn power_rises_and_time_falls_with_clock(lo in 100u32..2400, step in 1u32..100) {
            let w = work(1 << 24, 4096, 1 << 20, 4096);
            let a = ArchConfig { freq_hz: lo as f64 * 1e6, ..ArchConfig::nominal(16) };
            let b = ArchConfig { freq_hz: (lo + step) as f64 * 1e6, ..a };
            let (ma, mb) = (cube_metrics(&w, &a).unwrap(), cube_metrics(&w, &b).unwrap());
            prop_assert!(mb.power_w > ma.power_w);
            prop_assert!(mb.time_s <= ma.time_s);
        }
    }
}

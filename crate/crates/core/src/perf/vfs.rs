//! Voltage-frequency sweep of a cube and its most efficient point.

use serde::{Deserialize, Serialize};

use super::{cube_metrics, evaluate_network, ArchConfig, CubeMetrics, Mode, PerfError, PowerAccounting};
use crate::workload::{LayerWorkload, NetworkSpec, CNN_NAMES};

pub const V_MIN: f64 = 0.6;
pub const V_MAX: f64 = 1.2;
/// Voltage at which the nominal per-cycle energy holds.
pub const V_NOMINAL: f64 = 1.0;
/// Grid spacing of [`default_grid`], Hz.
pub const GRID_STEP_HZ: f64 = 5e6;
pub const POWER_BUDGET_W: f64 = 25.0;

/// One 3×3 convolution tile in the steady state of a double-buffered
/// stream: two input channels of 10×24, eight output channels of 8×22 and
/// their weights, all moved while neighbouring tiles compute.
pub fn reference_tile() -> LayerWorkload {
    LayerWorkload {
        macs: 8 * 8 * 22 * 2 * 9,
        d_par: 4 * (2 * 10 * 24 + 8 * 2 * 9 + 8 * 8 * 22),
        ..LayerWorkload::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VfsPoint {
    pub freq_hz: f64,
    pub voltage: f64,
    pub energy_per_cycle: f64,
    pub metrics: CubeMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VfsSweep {
    pub points: Vec<VfsPoint>,
    /// Index of the most efficient point; the first on ties.
    pub optimum: usize,
}

impl VfsSweep {
    pub fn best(&self) -> &VfsPoint {
        &self.points[self.optimum]
    }
}

/// Supply voltage, linear in the clock across the node's range.
pub fn voltage_at(a: &ArchConfig, freq_hz: f64) -> f64 {
    let (lo, hi) = a.node.freq_range();
    V_MIN + (V_MAX - V_MIN) * (freq_hz - lo) / (hi - lo)
}

/// `a` moved to `freq_hz` with its per-cycle energy scaled by V².
pub fn operating_point(a: &ArchConfig, nominal_energy: f64, freq_hz: f64) -> Result<ArchConfig, PerfError> {
    let (lo, hi) = a.node.freq_range();
    if !(lo..=hi).contains(&freq_hz) {
        return Err(PerfError::Invalid(format!(
            "{:.3} GHz outside the {} range {:.2}-{:.2} GHz",
            freq_hz / 1e9,
            a.node.label(),
            lo / 1e9,
            hi / 1e9
        )));
    }
    let v = voltage_at(a, freq_hz) / V_NOMINAL;
    Ok(ArchConfig {
        freq_hz,
        energy_per_cycle: nominal_energy * v * v,
        ..*a
    })
}

pub fn default_grid(a: &ArchConfig) -> Vec<f64> {
    let (lo, hi) = a.node.freq_range();
    let n = ((hi - lo) / GRID_STEP_HZ).round() as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Evaluates `w` at every clock of `grid`. `a.energy_per_cycle` is taken
/// as the energy at the nominal voltage.
pub fn vfs_sweep(w: &LayerWorkload, a: &ArchConfig, grid: &[f64]) -> Result<VfsSweep, PerfError> {
    if grid.is_empty() {
        return Err(PerfError::Invalid("empty frequency grid".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &f in grid {
        let p = operating_point(a, a.energy_per_cycle, f)?;
        points.push(VfsPoint {
            freq_hz: f,
            voltage: voltage_at(a, f),
            energy_per_cycle: p.energy_per_cycle,
            metrics: cube_metrics(w, &p)?,
        });
    }
    let optimum = (0..points.len()).fold(0, |best, i| {
        if points[i].metrics.efficiency > points[best].metrics.efficiency {
            i
        } else {
            best
        }
    });
    Ok(VfsSweep { points, optimum })
}

/// The configuration at its reference-tile optimum.
pub fn optimal_config(a: &ArchConfig) -> Result<ArchConfig, PerfError> {
    let sweep = vfs_sweep(&reference_tile(), a, &default_grid(a))?;
    operating_point(a, a.energy_per_cycle, sweep.best().freq_hz)
}

/// Training efficiency of each benchmark network at `a`, FLOP/s/W, and
/// their geometric mean.
pub fn network_efficiencies(a: &ArchConfig) -> Result<(Vec<(String, f64)>, f64), PerfError> {
    let mut rows = Vec::new();
    for name in CNN_NAMES {
        let net = NetworkSpec::builtin(name)?;
        let r = evaluate_network(&net, a, Mode::Training, PowerAccounting::default())?;
        rows.push((name.to_string(), r.total.efficiency));
    }
    let log_mean = rows.iter().map(|(_, e)| e.ln()).sum::<f64>() / rows.len() as f64;
    Ok((rows, log_mean.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voltage_endpoints() {
        let a = ArchConfig::nominal(16);
        assert!((voltage_at(&a, 0.1e9) - 0.6).abs() < 1e-12);
        assert!((voltage_at(&a, 2.5e9) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn single_point_grid_is_its_own_optimum() {
        let a = ArchConfig::nominal(32);
        let s = vfs_sweep(&reference_tile(), &a, &[1.0e9]).unwrap();
        assert_eq!(s.optimum, 0);
        assert_eq!(s.best().freq_hz, 1.0e9);
    }

    #[test]
    fn out_of_range_clock_is_rejected() {
        assert!(vfs_sweep(&reference_tile(), &ArchConfig::nominal(16), &[3.0e9]).is_err());
    }

    #[test]
    fn energy_scales_with_voltage_squared() {
        let a = ArchConfig::nominal(16);
        let s = vfs_sweep(&reference_tile(), &a, &default_grid(&a)).unwrap();
        for p in &s.points {
            let want = a.energy_per_cycle * p.voltage * p.voltage;
            assert!((p.energy_per_cycle - want).abs() <= 1e-12 * want);
        }
        assert_eq!(s.points.len(), 481);
    }
}

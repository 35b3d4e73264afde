//! Data-parallel training on an N×N mesh of cubes with a systolic weight
//! update in four waves.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub side: usize,
    /// B/s per link.
    pub link_bandwidth: f64,
    /// Per-hop latency, s.
    pub hop_latency: f64,
    pub weight_bytes: f64,
    pub cube_power: f64,
    /// Power of the active links during a pass.
    pub link_power: f64,
    /// Training time of one image on one cube, s.
    pub step_time_per_image: f64,
    /// Time to power a link up or down, s.
    pub link_wake_time: f64,
}

/// Sixteen lanes at 30.72 Gb/s.
pub const LINK_BANDWIDTH: f64 = 61.44e9;
/// The rounded per-link figure often quoted for the same links.
pub const LINK_BANDWIDTH_NOMINAL: f64 = 60e9;

impl MeshConfig {
    pub fn new(side: usize) -> Self {
        MeshConfig {
            side,
            link_bandwidth: LINK_BANDWIDTH,
            hop_latency: 20e-6,
            weight_bytes: 300e6,
            cube_power: 21.0,
            link_power: 8.0,
            step_time_per_image: 8.69e-3,
            link_wake_time: 50e-3,
        }
    }

    pub fn cubes(&self) -> usize {
        self.side * self.side
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.side == 0 {
            return Err("mesh side must be at least 1".into());
        }
        if !(self.link_bandwidth > 0.0 && self.step_time_per_image > 0.0) {
            return Err("link bandwidth and step time must be positive".into());
        }
        let non_negative = [self.hop_latency, self.weight_bytes, self.cube_power, self.link_power, self.link_wake_time];
        if non_negative.iter().any(|v| !(*v >= 0.0)) {
            return Err("latency, sizes and powers must not be negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshTiming {
    pub transfer_s: f64,
    pub pass_s: f64,
    pub update_s: f64,
    pub step_s: f64,
    pub total_s: f64,
    pub speedup: f64,
    pub parallel_efficiency: f64,
    /// Fewer images than cubes; some cubes sit idle.
    pub idle_cubes: bool,
}

pub fn mesh_time(m: &MeshConfig, batch: usize) -> MeshTiming {
    let n = m.side as f64;
    let transfer_s = m.weight_bytes / m.link_bandwidth;
    let pass_s = transfer_s + n * m.hop_latency;
    let update_s = 4.0 * pass_s;
    let step_s = m.step_time_per_image * batch as f64 / (n * n);
    let total_s = update_s + step_s;
    let speedup = m.step_time_per_image * batch as f64 / total_s;
    MeshTiming {
        transfer_s,
        pass_s,
        update_s,
        step_s,
        total_s,
        speedup,
        parallel_efficiency: speedup / (n * n),
        idle_cubes: batch < m.cubes(),
    }
}

/// Energies in J; `update_j` is per cube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshEnergy {
    pub pass_j: f64,
    pub link_wake_j: f64,
    pub update_j: f64,
    pub step_total_j: f64,
    pub total_j: f64,
    pub energy_efficiency: f64,
}

pub fn mesh_energy(m: &MeshConfig, batch: usize) -> MeshEnergy {
    let t = mesh_time(m, batch);
    let cubes = m.cubes() as f64;
    let pass_j = t.pass_s * (m.cube_power + m.link_power);
    // two links woken and put back to sleep
    let link_wake_j = 2.0 * m.link_power * m.link_wake_time;
    let update_j = 4.0 * pass_j + link_wake_j;
    let step_total_j = t.step_s * m.cube_power * cubes;
    let total_j = step_total_j + cubes * update_j;
    MeshEnergy {
        pass_j,
        link_wake_j,
        update_j,
        step_total_j,
        total_j,
        energy_efficiency: m.step_time_per_image * batch as f64 * m.cube_power / total_j,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshRow {
    pub side: usize,
    pub batch: usize,
    pub speedup: f64,
    pub parallel_efficiency: f64,
    pub energy_efficiency: f64,
}

/// Every (side, batch) pair, side-major.
pub fn mesh_grid(base: &MeshConfig, sides: &[usize], batches: &[usize]) -> Vec<MeshRow> {
    let mut rows = Vec::with_capacity(sides.len() * batches.len());
    for &side in sides {
        let m = MeshConfig { side, ..*base };
        for &batch in batches {
            let t = mesh_time(&m, batch);
            rows.push(MeshRow {
                side,
                batch,
                speedup: t.speedup,
                parallel_efficiency: t.parallel_efficiency,
                energy_efficiency: mesh_energy(&m, batch).energy_efficiency,
            });
        }
    }
    rows
}

/// Powers of two from 256 to 8192.
pub fn default_batches() -> Vec<usize> {
    (8..=13).map(|e| 1usize << e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_image_per_cube_flags_nothing() {
        assert!(!mesh_time(&MeshConfig::new(4), 16).idle_cubes);
        assert!(mesh_time(&MeshConfig::new(4), 15).idle_cubes);
    }

    #[test]
    fn free_communication_scales_perfectly() {
        let m = MeshConfig {
            hop_latency: 0.0,
            weight_bytes: 0.0,
            link_wake_time: 0.0,
            ..MeshConfig::new(7)
        };
        let t = mesh_time(&m, 4900);
        assert_eq!(t.update_s, 0.0);
        assert!((t.speedup - 49.0).abs() < 1e-9);
    }

    #[test]
    fn single_cube_approaches_full_efficiency() {
        let m = MeshConfig::new(1);
        let small = mesh_energy(&m, 256).energy_efficiency;
        let large = mesh_energy(&m, 1 << 24).energy_efficiency;
        assert!(small < large && large < 1.0 && large > 0.999);
    }

    proptest! {
        #[test]
        fn efficiencies_are_bounded_and_monotone(side in 1usize..24, e in 0u32..14) {
            let batch = (side * side) << e;
            let m = MeshConfig::new(side);
            let (t, en) = (mesh_time(&m, batch), mesh_energy(&m, batch));
            prop_assert!(t.speedup <= (side * side) as f64);
            prop_assert!(t.parallel_efficiency > 0.0 && t.parallel_efficiency <= 1.0);
            let (t2, en2) = (mesh_time(&m, 2 * batch), mesh_energy(&m, 2 * batch));
            prop_assert!(t2.parallel_efficiency > t.parallel_efficiency);
            prop_assert!(en2.energy_efficiency > en.energy_efficiency);
            let wider = MeshConfig::new(side + 1);
            prop_assert!(mesh_time(&wider, batch).parallel_efficiency < t.parallel_efficiency);
            prop_assert!(mesh_energy(&wider, batch).energy_efficiency < en.energy_efficiency);
        }
    }
}

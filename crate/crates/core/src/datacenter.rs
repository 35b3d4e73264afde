//! Replacing the accelerators of a GPU server with memory cubes.

use serde::{Deserialize, Serialize};

pub const HOURS_PER_YEAR: f64 = 8760.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerBaseline {
    pub total_power_w: f64,
    pub gpu_power_w: f64,
    /// FLOP/s.
    pub gpu_peak: f64,
    pub dram_gb: f64,
    pub dram_w_per_16gb: f64,
    /// Host DRAM power no longer needed once the cubes hold the data.
    pub dram_savings_w: f64,
    /// Facility overhead applied to every saved watt.
    pub pue_factor: f64,
    pub price_per_kwh: f64,
}

impl Default for ServerBaseline {
    fn default() -> Self {
        ServerBaseline {
            total_power_w: 3200.0,
            gpu_power_w: 2400.0,
            gpu_peak: 84.8e12,
            dram_gb: 512.0,
            dram_w_per_16gb: 6.0,
            dram_savings_w: 128.0,
            pue_factor: 1.12,
            price_per_kwh: 0.1104,
        }
    }
}

impl ServerBaseline {
    /// DRAM power from the installed capacity, an alternative to the
    /// quoted savings.
    pub fn dram_power_from_capacity(&self) -> f64 {
        self.dram_gb / 16.0 * self.dram_w_per_16gb
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.gpu_power_w < self.total_power_w) {
            return Err("accelerator power must be below the server total".into());
        }
        if !(self.pue_factor >= 1.0) {
            return Err("the facility factor must be at least 1".into());
        }
        if !(self.gpu_peak > 0.0 && self.price_per_kwh >= 0.0 && self.dram_savings_w >= 0.0) {
            return Err("peak must be positive, price and savings non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeOffer {
    pub name: String,
    /// FLOP/s.
    pub peak: f64,
    pub power_w: f64,
    pub dram_gb: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SameCompute,
    SameTdp,
}

impl CubeOffer {
    /// The 128-cluster 14 nm cube at the operating point used for each
    /// scenario.
    pub fn ntx128(scenario: Scenario) -> Self {
        CubeOffer {
            name: "ntx128".into(),
            peak: 2.007e12,
            power_w: match scenario {
                Scenario::SameCompute => 20.0,
                Scenario::SameTdp => 18.6,
            },
            dram_gb: 8.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.peak > 0.0 && self.power_w > 0.0 && self.dram_gb > 0.0) {
            return Err(format!("cube {:?} needs positive peak, power and capacity", self.name));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SameCompute {
    pub cubes: u64,
    pub cube_power_w: f64,
    pub saved_w: f64,
    /// Server power before over after.
    pub reduction: f64,
    pub dollars_per_year: f64,
}

/// The fewest cubes matching the accelerators' peak.
pub fn same_compute(b: &ServerBaseline, c: &CubeOffer) -> SameCompute {
    let cubes = (b.gpu_peak / c.peak).ceil().max(1.0) as u64;
    let cube_power_w = cubes as f64 * c.power_w;
    let saved_w = b.gpu_power_w + b.dram_savings_w - cube_power_w;
    SameCompute {
        cubes,
        cube_power_w,
        saved_w,
        reduction: b.total_power_w / (b.total_power_w - saved_w),
        dollars_per_year: saved_w * b.pue_factor * HOURS_PER_YEAR / 1000.0 * b.price_per_kwh,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SameTdp {
    pub cubes: u64,
    /// FLOP/s.
    pub total_peak: f64,
    pub speedup: f64,
}

/// As many cubes as fit the accelerators' power budget.
pub fn same_tdp(b: &ServerBaseline, c: &CubeOffer, budget_w: f64) -> Result<SameTdp, String> {
    if c.power_w > budget_w {
        return Err(format!("one cube draws {} W, more than the {budget_w} W budget", c.power_w));
    }
    // tolerate budgets that are an exact multiple up to rounding
    let cubes = (budget_w / c.power_w * (1.0 + 1e-12)).floor() as u64;
    let total_peak = cubes as f64 * c.peak;
    Ok(SameTdp {
        cubes,
        total_peak,
        speedup: total_peak / b.gpu_peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matching_peak_needs_one_cube() {
        let b = ServerBaseline::default();
        let c = CubeOffer {
            peak: b.gpu_peak,
            ..CubeOffer::ntx128(Scenario::SameCompute)
        };
        assert_eq!(same_compute(&b, &c).cubes, 1);
    }

    #[test]
    fn dollars_unit_identity() {
        let b = ServerBaseline {
            gpu_power_w: 1000.0,
            dram_savings_w: 0.0,
            pue_factor: 1.0,
            price_per_kwh: 1.0,
            gpu_peak: 1.0,
            ..ServerBaseline::default()
        };
        let c = CubeOffer {
            name: "x".into(),
            peak: 1.0,
            power_w: 0.0,
            dram_gb: 1.0,
        };
        // one kilowatt for a year at one dollar per kWh
        assert!((same_compute(&b, &c).dollars_per_year - 8760.0).abs() < 1e-6);
    }

    #[test]
    fn capacity_rule_differs_from_quoted_savings() {
        let b = ServerBaseline::default();
        assert_eq!(b.dram_power_from_capacity(), 192.0);
        assert_ne!(b.dram_power_from_capacity(), b.dram_savings_w);
    }

    #[test]
    fn budget_below_one_cube_is_an_error() {
        let b = ServerBaseline::default();
        assert!(same_tdp(&b, &CubeOffer::ntx128(Scenario::SameTdp), 10.0).is_err());
    }

    proptest! {
        #[test]
        fn cube_count_is_minimal(peak in 0.1f64..50.0, gpu in 1.0f64..500.0) {
            let b = ServerBaseline { gpu_peak: gpu * 1e12, ..ServerBaseline::default() };
            let c = CubeOffer { peak: peak * 1e12, ..CubeOffer::ntx128(Scenario::SameCompute) };
            let n = same_compute(&b, &c).cubes as f64;
            prop_assert!(n * c.peak >= b.gpu_peak * (1.0 - 1e-12));
            prop_assert!(n == 1.0 || (n - 1.0) * c.peak < b.gpu_peak);
        }

        #[test]
        fn reduction_above_one_iff_power_saved(power in 1.0f64..100.0) {
            let b = ServerBaseline::default();
            let c = CubeOffer { power_w: power, ..CubeOffer::ntx128(Scenario::SameCompute) };
            let r = same_compute(&b, &c);
            prop_assert_eq!(r.reduction > 1.0, r.saved_w > 0.0);
        }

        #[test]
        fn doubling_budget_doubles_cubes(per_cube in 1u32..100, multiple in 1u32..100) {
            let b = ServerBaseline::default();
            let c = CubeOffer { power_w: per_cube as f64, ..CubeOffer::ntx128(Scenario::SameTdp) };
            let budget = (per_cube * multiple) as f64;
            let one = same_tdp(&b, &c, budget).unwrap().cubes;
            prop_assert_eq!(same_tdp(&b, &c, 2.0 * budget).unwrap().cubes, 2 * one);
        }
    }
}

//! Published reference rows for the model command.

use serde::Serialize;

use ntxsim::perf::{Mode, NetworkReport};

/// Relative tolerance of every reference row.
pub const TOLERANCE: f64 = 0.15;

#[derive(Clone, Copy, Debug)]
pub struct Reference {
    pub quantity: &'static str,
    pub want: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub check: &'static str,
    pub got: f64,
    pub want: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Rows for a network on a preset at its nominal clock.
pub fn rows(network: &str, arch: &str, mode: Mode) -> Vec<Reference> {
    let r = |quantity, want| Reference { quantity, want };
    match (network, arch, mode) {
        ("googlenet", "ntx16-28nm", Mode::Training) => vec![r("time_ms", 34.8), r("eff_gflops_w", 21.0)],
        ("googlenet", "ntx64-28nm", Mode::Training) => vec![r("time_ms", 8.69), r("eff_gflops_w", 38.3)],
        ("googlenet", "ntx16-28nm", Mode::Inference) => vec![r("time_ms", 11.3), r("eff_gflops_w", 21.4)],
        ("googlenet", "ntx64-28nm", Mode::Inference) => vec![r("time_ms", 2.83), r("eff_gflops_w", 39.1)],
        _ => Vec::new(),
    }
}

pub fn compare(rows: &[Reference], report: &NetworkReport) -> Vec<Check> {
    rows.iter()
        .map(|r| {
            let got = match r.quantity {
                "time_ms" => report.total.time_s * 1e3,
                "eff_gflops_w" => report.total.efficiency / 1e9,
                other => unreachable!("unknown reference quantity {other}"),
            };
            Check {
                check: r.quantity,
                got,
                want: r.want,
                tolerance: TOLERANCE,
                pass: (got - r.want).abs() <= TOLERANCE * r.want,
            }
        })
        .collect()
}

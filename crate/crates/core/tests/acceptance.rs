//! One line per acceptance criterion with the tolerance it was judged by.
//!
//! Criteria listed in `KNOWN_RED` are reported as FAIL and do not fail the
//! test; any other failure does, and so does a known red turning green.

use ntxsim::cluster::TCDM_BYTES;
use ntxsim::datacenter::{same_compute, same_tdp, CubeOffer, Scenario, ServerBaseline};
use ntxsim::kernels::{conv_traffic, plan_conv_tiles, run_conv_tiled, ConvSpec};
use ntxsim::mesh::{mesh_energy, mesh_time, MeshConfig};
use ntxsim::perf::{
    default_grid, evaluate_network, network_efficiencies, offload_table, operating_point, reference_tile, vfs_sweep,
    ArchConfig, Mode, PowerAccounting, POWER_BUDGET_W,
};
use ntxsim::verify::{conv_precision_check, run_functional_suite, strided_sweep, SuiteOptions};
use ntxsim::workload::{network_memory_footprint, NetworkSpec, Regime};

/// ResNet-50 activations land at +5.8% under the shared accounting rule.
const KNOWN_RED: &[u32] = &[4];

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn within(got: f64, want: f64, rel: f64) -> bool {
    (got - want).abs() <= rel * want.abs()
}

fn offloads() -> Outcome {
    let want = [
        (802_816, 147, 64, 1_843_968),
        (602_112, 576, 192, 1_806_336),
        (50_176, 256, 64, 200_704),
        (37_632, 512, 192, 100_352),
    ];
    let rows = offload_table();
    let got: Vec<_> = rows
        .iter()
        .map(|r| (r.ns.offloads, r.ns.cycles_per_offload, r.ntx.offloads, r.ntx.cycles_per_offload))
        .collect();
    Outcome {
        id: 1,
        name: "offload table (exact)",
        pass: got == want,
        detail: format!("{got:?}"),
    }
}

fn functional() -> Outcome {
    let report = run_functional_suite(&SuiteOptions::default());
    let (cases, sweep_failures) = strided_sweep(report.seed, 5, 4);
    Outcome {
        id: 2,
        name: "randomized functional equivalence",
        pass: report.passed() && report.instances == 500 && sweep_failures.is_empty(),
        detail: format!(
            "{} instances, {} bit-exact, {} gradient checks (max rel err {:.2e} <= 1e-3), {} optimizer, {} strided cases, failures {:?}",
            report.instances,
            report.bit_exact_checks,
            report.gradient_checks,
            report.max_gradient_error,
            report.optimizer_checks,
            cases,
            report.failures.iter().chain(&sweep_failures).take(3).collect::<Vec<_>>()
        ),
    }
}

fn precision() -> Outcome {
    let r = conv_precision_check(SuiteOptions::default().seed);
    let bound = 2f64.powi(-23);
    Outcome {
        id: 3,
        name: "accumulator precision",
        pass: r.ntx_max_rel <= bound && r.ntx_max_rel < r.sequential_max_rel,
        detail: format!(
            "{} outputs: NTX max rel {:.3e} (<= {:.3e}), sequential f32 {:.3e}",
            r.outputs, r.ntx_max_rel, bound, r.sequential_max_rel
        ),
    }
}

fn footprints() -> Outcome {
    let table = [
        ("alexnet", 232.5, 6.0, 238.5, 471.0),
        ("googlenet", 26.7, 46.5, 73.2, 99.8),
        ("inception_v3", 90.8, 99.2, 190.0, 280.8),
        ("resnet34", 176.2, 28.3, 204.5, 380.6),
        ("resnet50", 174.6, 67.1, 241.7, 416.3),
        ("resnet152", 306.4, 154.4, 460.7, 767.1),
    ];
    let mut pass = true;
    let mut misses = Vec::new();
    for (name, p, a, bs1, bsn) in table {
        let net = NetworkSpec::builtin(name).unwrap();
        let one = network_memory_footprint(&net, Regime::TrainBs1).unwrap();
        let many = network_memory_footprint(&net, Regime::TrainBsN).unwrap();
        if many.total - one.total != one.params {
            pass = false;
            misses.push(format!("{name}: BS>1 - BS=1 != params"));
        }
        for (what, got, want) in [("param", one.params, p), ("act", one.activations, a), ("bs1", one.total, bs1), ("bsn", many.total, bsn)] {
            if !within(got, want, 0.05) {
                pass = false;
                misses.push(format!("{name} {what} {got:.1} vs {want} ({:+.1}%)", 100.0 * (got / want - 1.0)));
            }
        }
    }
    Outcome {
        id: 4,
        name: "memory footprints (+-5%, BS>1 - BS=1 = param exact)",
        pass,
        detail: if misses.is_empty() { "all 24 values in range".into() } else { misses.join("; ") },
    }
}

fn ns_comparison() -> Outcome {
    let net = NetworkSpec::builtin("googlenet").unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, train_ms, train_eff, inf_ms) in [(16, 34.8, 21.0, 11.3), (64, 8.69, 38.3, 2.83)] {
        let a = ArchConfig::nominal(k);
        let t = evaluate_network(&net, &a, Mode::Training, PowerAccounting::default()).unwrap();
        let i = evaluate_network(&net, &a, Mode::Inference, PowerAccounting::default()).unwrap();
        let (tm, te, im) = (t.total.time_s * 1e3, t.total.efficiency / 1e9, i.total.time_s * 1e3);
        pass &= within(tm, train_ms, 0.15) && within(te, train_eff, 0.15) && within(im, inf_ms, 0.15);
        parts.push(format!(
            "ntx{k}: train {tm:.2} ms (want {train_ms}) {te:.1} GFLOP/s/W (want {train_eff}), infer {im:.2} ms (want {inf_ms})"
        ));
    }
    Outcome {
        id: 5,
        name: "GoogLeNet vs NS comparison (+-15%)",
        pass,
        detail: parts.join("; "),
    }
}

fn mesh() -> Outcome {
    let m16 = MeshConfig::new(16);
    let t16 = mesh_time(&m16, 8192);
    let e16 = mesh_energy(&m16, 8192);
    let t8 = mesh_time(&MeshConfig::new(8), 8192);
    let t12 = mesh_time(&MeshConfig::new(12), 8192);
    let e8 = mesh_energy(&MeshConfig::new(8), 8192).energy_efficiency;
    let e12 = mesh_energy(&MeshConfig::new(12), 8192).energy_efficiency;
    let checks = [
        within(t16.pass_s, 5.20e-3, 0.005),
        within(t16.update_s, 20.8e-3, 0.005),
        within(t8.speedup, 62.8, 0.01),
        within(t12.speedup, 138.0, 0.01),
        (e8 - 0.943).abs() <= 0.003,
        (e12 - 0.881).abs() <= 0.003,
        within(e16.pass_j, 0.1509, 0.005),
        within(e16.link_wake_j, 0.800, 0.005),
        within(e16.update_j, 1.403, 0.005),
    ];
    Outcome {
        id: 6,
        name: "mesh scaling (+-0.5% times/energies, +-1% speedup, +-0.3 pp)",
        pass: checks.iter().all(|&c| c),
        detail: format!(
            "T_pass {:.3} ms, T_update {:.2} ms, speedup {:.1}/{:.1}, energy eff {:.1}%/{:.1}%, E_pass {:.1} mJ, E_wake {:.0} mJ, E_update {:.3} J",
            t16.pass_s * 1e3,
            t16.update_s * 1e3,
            t8.speedup,
            t12.speedup,
            e8 * 100.0,
            e12 * 100.0,
            e16.pass_j * 1e3,
            e16.link_wake_j * 1e3,
            e16.update_j
        ),
    }
}

fn datacenter() -> Outcome {
    let b = ServerBaseline::default();
    let sc = same_compute(&b, &CubeOffer::ntx128(Scenario::SameCompute));
    let st = same_tdp(&b, &CubeOffer::ntx128(Scenario::SameTdp), b.gpu_power_w).unwrap();
    let round1 = |v: f64| (v * 10.0).round() / 10.0;
    let pass = sc.cubes == 43
        && (sc.cube_power_w - 860.0).abs() < 1e-9
        && round1(sc.reduction) == 2.1
        && (sc.dollars_per_year - 1808.0).abs() <= 5.0
        && st.cubes == 129
        && round1(st.total_peak / 1e12) == 258.9
        && round1(st.speedup) == 3.1;
    Outcome {
        id: 7,
        name: "data-center scenarios",
        pass,
        detail: format!(
            "same compute: {} cubes, {:.0} W, {:.2}x, ${:.1}/yr (factor {}); same TDP: {} cubes, {:.1} TFLOP/s, {:.2}x",
            sc.cubes,
            sc.cube_power_w,
            sc.reduction,
            sc.dollars_per_year,
            b.pue_factor,
            st.cubes,
            st.total_peak / 1e12,
            st.speedup
        ),
    }
}

fn vfs() -> Outcome {
    let rows: [(&str, f64); 9] = [
        ("ntx16-28nm", 2.30),
        ("ntx32-28nm", 1.70),
        ("ntx64-28nm", 1.30),
        ("ntx16-14nm", 3.08),
        ("ntx32-14nm", 2.24),
        ("ntx64-14nm", 1.68),
        ("ntx128-14nm", 0.98),
        ("ntx256-14nm", 0.56),
        ("ntx512-14nm", 0.28),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut previous: Option<(ntxsim::perf::TechNode, f64)> = None;
    let mut gm = 0.0;
    for (name, want_ghz) in rows {
        let a = ArchConfig::preset(name).unwrap();
        let sweep = vfs_sweep(&reference_tile(), &a, &default_grid(&a)).unwrap();
        let best = sweep.best();
        let ghz = best.freq_hz / 1e9;
        pass &= best.metrics.power_w <= POWER_BUDGET_W;
        pass &= within(ghz, want_ghz, 0.25);
        if let Some((node, f)) = previous {
            if node == a.node {
                pass &= ghz <= f;
            }
        }
        previous = Some((a.node, ghz));
        if name == "ntx64-14nm" {
            let at = operating_point(&a, a.energy_per_cycle, best.freq_hz).unwrap();
            gm = network_efficiencies(&at).unwrap().1 / 1e9;
        }
        parts.push(format!("{name} {ghz:.2} GHz/{:.1} W", best.metrics.power_w));
    }
    pass &= within(gm, 54.9, 0.15);
    Outcome {
        id: 8,
        name: "VFS optima (P <= 25 W, monotone, +-25% GHz, geo mean +-15%)",
        pass,
        detail: format!("{}; ntx64-14nm geo mean {gm:.1} GFLOP/s/W (want 54.9)", parts.join(", ")),
    }
}

fn reference_spec() -> ConvSpec {
    ConvSpec::new(2, 10, 24, 8, 3, 1, 0).unwrap()
}

fn pattern(n: usize, m: usize) -> Vec<f32> {
    (0..n).map(|i| (i % m) as f32 - (m / 2) as f32).collect()
}

fn bursts() -> Outcome {
    let spec = reference_spec();
    let plan = plan_conv_tiles(&spec, TCDM_BYTES).unwrap();
    let (_, trace) = run_conv_tiled(&spec, &plan, &pattern(spec.input_len(), 7), &pattern(spec.weight_len(), 5), &[0.0; 8]).unwrap();
    let frac = trace.byte_fraction_in_bursts(32);
    Outcome {
        id: 9,
        name: "burst histogram of the 3x3 tile (>= 90% of bytes in bursts >= 32 B)",
        pass: frac >= 0.90,
        detail: format!("{:.1}% of {} bytes; histogram {:?}", 100.0 * frac, trace.dma_bytes, trace.burst_histogram()),
    }
}

fn cluster_model() -> Outcome {
    let kernels = [
        reference_spec(),
        ConvSpec::new(16, 16, 16, 16, 3, 1, 1).unwrap(),
        ConvSpec::new(32, 14, 14, 32, 1, 1, 0).unwrap(),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in kernels {
        let plan = plan_conv_tiles(&spec, TCDM_BYTES).unwrap();
        let (_, trace) = run_conv_tiled(&spec, &plan, &pattern(spec.input_len(), 7), &pattern(spec.weight_len(), 5), &vec![0.0; spec.c_out]).unwrap();
        let v = conv_traffic(&spec, &plan).unwrap();
        let (eta_c, eta_d) = (trace.measured_eta_c(), trace.measured_eta_d());
        let compute = v.iterations as f64 / (eta_c * 8.0);
        let overlapped = v.parallel_bytes as f64 / (eta_d * 4.0);
        let serial = (v.head_bytes + v.tail_bytes) as f64 / (eta_d * 4.0);
        let model = compute.max(overlapped) + serial;
        let ratio = model / trace.cycles as f64;
        pass &= (ratio - 1.0).abs() <= 0.05;
        parts.push(format!(
            "{}x{}x{}->{}: model {model:.0} vs sim {} cycles ({:+.1}%)",
            spec.k_h,
            spec.k_w,
            spec.c_in,
            spec.c_out,
            trace.cycles,
            100.0 * (ratio - 1.0)
        ));
    }
    Outcome {
        id: 10,
        name: "analytical cluster time vs simulation (+-5%)",
        pass,
        detail: parts.join("; "),
    }
}

fn main() {
    let outcomes = [
        offloads(),
        functional(),
        precision(),
        footprints(),
        ns_comparison(),
        mesh(),
        datacenter(),
        vfs(),
        bursts(),
        cluster_model(),
    ];
    let mut unexpected = Vec::new();
    for o in &outcomes {
        let known = KNOWN_RED.contains(&o.id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("[{tag}] {:>2} {}: {}", o.id, o.name, o.detail);
        if o.pass == known {
            unexpected.push(o.id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("criteria with an unexpected outcome: {unexpected:?}");
        std::process::exit(1);
    }
}

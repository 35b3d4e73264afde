use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ntxsim::cluster::TCDM_BYTES;
use ntxsim::datacenter::{same_compute, same_tdp, CubeOffer, Scenario, ServerBaseline};
use ntxsim::kernels::{plan_conv_tiles, run_conv_tiled, ConvSpec};
use ntxsim::mesh::{default_batches, mesh_energy, mesh_grid, mesh_time, MeshConfig, MeshEnergy, MeshTiming};
use ntxsim::perf::{
    default_grid, evaluate_network, network_efficiencies, offload_table, operating_point, optimal_config, reference_tile,
    vfs_sweep, ArchConfig, Mode, NetworkReport, PowerAccounting,
};
use ntxsim::verify::{conv_precision_check, run_functional_suite, strided_sweep, PrecisionReport, SuiteOptions, SuiteReport};
use ntxsim::workload::NetworkSpec;

mod golden;

const SEED_ENV: &str = "NTXSIM_SEED";

#[derive(Parser)]
#[command(name = "ntxsim", version, about = "Simulator and analytical model of a near-memory DNN training accelerator")]
struct Cli {
    /// Output format; grids default to csv, reports to json.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Train,
    Inference,
}

#[derive(Clone, Copy, ValueEnum)]
enum AccountingArg {
    Peak,
    PerLayer,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    SameCompute,
    SameTdp,
}

#[derive(Clone, Copy, ValueEnum)]
enum DramSavings {
    /// The quoted 128 W.
    Quoted,
    /// Installed capacity at 6 W per 16 GB.
    Capacity,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceView {
    Summary,
    Transitions,
    Bursts,
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized equivalence, gradient, decomposition and precision suites.
    Verify {
        /// Overridden by NTXSIM_SEED when set.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        instances: usize,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Evaluate a network on a cube configuration.
    Model {
        /// Built-in name or path to a JSON description.
        #[arg(long)]
        network: String,
        /// Preset such as ntx64-28nm, or path to a JSON configuration.
        #[arg(long, default_value = "ntx64-28nm")]
        arch: String,
        #[arg(long, value_enum, default_value = "train")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "peak")]
        accounting: AccountingArg,
        /// Run at the configuration's most efficient clock.
        #[arg(long)]
        optimal: bool,
        /// Compare totals against the published reference rows.
        #[arg(long)]
        golden: bool,
    },
    /// Command counts of four representative convolutions.
    Offloads,
    /// Voltage-frequency sweep of the reference tile.
    Sweep {
        #[arg(long, default_value = "ntx64-28nm")]
        arch: String,
        /// One row per preset: optimum, area, peak and network efficiencies.
        #[arg(long)]
        summary: bool,
    },
    /// Data-parallel scaling over a mesh of cubes.
    Mesh {
        /// JSON mesh configuration; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Largest mesh side of the grid.
        #[arg(long, default_value_t = 16)]
        max_side: usize,
        /// Batch sizes; defaults to 256 through 8192.
        #[arg(long, value_delimiter = ',')]
        batches: Vec<usize>,
        /// Link bandwidth in GB/s.
        #[arg(long)]
        link_gbps: Option<f64>,
        /// With --batch, report one mesh in detail.
        #[arg(long, requires = "batch")]
        side: Option<usize>,
        #[arg(long, requires = "side")]
        batch: Option<usize>,
    },
    /// Replace a GPU server's accelerators with cubes.
    Datacenter {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        /// ntx128 or a JSON cube description.
        #[arg(long, default_value = "ntx128")]
        cube_config: String,
        /// JSON server description.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        pue_factor: Option<f64>,
        #[arg(long, value_enum)]
        dram_savings: Option<DramSavings>,
        /// Power budget for same-tdp, W; defaults to the accelerators' power.
        #[arg(long)]
        budget_w: Option<f64>,
    },
    /// Simulate one tiled convolution on a cluster.
    Trace {
        /// c_in,h,w,c_out,kernel,stride,pad; defaults to the 3x3 reference tile.
        #[arg(long, value_delimiter = ',')]
        conv: Vec<usize>,
        /// Overridden by NTXSIM_SEED when set.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "summary")]
        view: TraceView,
        /// Also write summary.csv, transitions.csv and bursts.csv here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

enum Failure {
    /// Bad arguments or inputs; exit 2.
    Usage(String),
    /// A check ran and did not hold; exit 1.
    Check(String),
}

type Outcome = Result<String, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn seed(flag: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn csv_rows<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_network(arg: &str) -> Result<NetworkSpec, Failure> {
    if arg.ends_with(".json") || Path::new(arg).is_file() {
        let text = std::fs::read_to_string(arg).map_err(|e| usage(format!("{arg}: {e}")))?;
        NetworkSpec::from_json(&text).map_err(usage)
    } else {
        NetworkSpec::builtin(arg).map_err(usage)
    }
}

fn load_arch(arg: &str) -> Result<ArchConfig, Failure> {
    let a: ArchConfig = if arg.ends_with(".json") || Path::new(arg).is_file() {
        read_json(Path::new(arg))?
    } else {
        ArchConfig::preset(arg).map_err(usage)?
    };
    a.validate().map_err(usage)?;
    Ok(a)
}

#[derive(Serialize)]
struct VerifyReport {
    suite: SuiteReport,
    strided_shapes: usize,
    strided_failures: Vec<String>,
    precision: PrecisionReport,
    precision_bound: f64,
    passed: bool,
}

#[derive(Serialize)]
struct VerifyRow {
    suite: &'static str,
    checks: usize,
    failures: usize,
}

fn cmd_verify(format: Format, seed: u64, instances: usize, inject_fault: bool) -> Outcome {
    let suite = run_functional_suite(&SuiteOptions {
        seed,
        instances,
        inject_fault,
    });
    let (strided_shapes, strided_failures) = strided_sweep(seed, 5, 4);
    let precision = conv_precision_check(seed);
    let precision_bound = 2f64.powi(-23);
    let precision_ok = precision.ntx_max_rel <= precision_bound && precision.ntx_max_rel < precision.sequential_max_rel;
    let passed = suite.passed() && strided_failures.is_empty() && precision_ok;
    let report = VerifyReport {
        strided_shapes,
        strided_failures,
        precision,
        precision_bound,
        passed,
        suite,
    };
    let text = match format {
        Format::Json => json(&report),
        Format::Csv => csv_rows(&[
            VerifyRow {
                suite: "bit_exact",
                checks: report.suite.bit_exact_checks,
                failures: report.suite.failures.iter().filter(|f| !f.contains("gradient")).count(),
            },
            VerifyRow {
                suite: "gradient",
                checks: report.suite.gradient_checks,
                failures: report.suite.failures.iter().filter(|f| f.contains("gradient")).count(),
            },
            VerifyRow {
                suite: "optimizer",
                checks: report.suite.optimizer_checks,
                failures: 0,
            },
            VerifyRow {
                suite: "strided_decomposition",
                checks: report.strided_shapes,
                failures: report.strided_failures.len(),
            },
            VerifyRow {
                suite: "accumulator_precision",
                checks: report.precision.outputs,
                failures: usize::from(!precision_ok),
            },
        ]),
    };
    if passed {
        Ok(text)
    } else {
        print!("{text}");
        let mut named: Vec<String> = report.suite.failures.clone();
        named.extend(report.strided_failures.iter().cloned());
        if !precision_ok {
            named.push("accumulator precision".into());
        }
        Err(Failure::Check(format!("verification failed: {}", named.join("; "))))
    }
}

#[derive(Serialize)]
struct ModelRow<'a> {
    layer: &'a str,
    kind: &'a str,
    pass: &'a str,
    time_s: f64,
    bandwidth_gbps: f64,
    power_w: f64,
    eff_gflops_w: f64,
}

#[derive(Serialize)]
struct ModelOutput {
    report: NetworkReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    golden: Option<Vec<golden::Check>>,
}

fn cmd_model(format: Format, network: &str, arch: &str, mode: ModeArg, accounting: AccountingArg, optimal: bool, check: bool) -> Outcome {
    let net = load_network(network)?;
    let mut a = load_arch(arch)?;
    if optimal {
        a = optimal_config(&a).map_err(usage)?;
    }
    let mode = match mode {
        ModeArg::Train => Mode::Training,
        ModeArg::Inference => Mode::Inference,
    };
    let accounting = match accounting {
        AccountingArg::Peak => PowerAccounting::PeakBandwidth,
        AccountingArg::PerLayer => PowerAccounting::PerLayer,
    };
    let report = evaluate_network(&net, &a, mode, accounting).map_err(usage)?;
    let checks = if check {
        let reference = ArchConfig::preset(&a.name()).ok().filter(|p| *p == a);
        let rows = reference.map(|_| golden::rows(&net.name, &a.name(), mode)).unwrap_or_default();
        if rows.is_empty() {
            return Err(usage(format!(
                "no reference rows for {} on {} in {mode:?} mode; golden rows exist for googlenet on ntx16-28nm and ntx64-28nm",
                net.name,
                a.name()
            )));
        }
        Some(golden::compare(&rows, &report))
    } else {
        None
    };
    let failed = checks.as_ref().is_some_and(|c| c.iter().any(|c| !c.pass));
    let text = match format {
        Format::Json => json(&ModelOutput {
            report,
            golden: checks,
        }),
        Format::Csv => {
            let mut rows: Vec<ModelRow> = report
                .layers
                .iter()
                .map(|l| ModelRow {
                    layer: &l.path,
                    kind: &l.kind,
                    pass: match l.pass {
                        ntxsim::workload::Pass::Inference => "inference",
                        ntxsim::workload::Pass::Forward => "forward",
                        ntxsim::workload::Pass::Backward => "backward",
                    },
                    time_s: l.metrics.time_s,
                    bandwidth_gbps: l.metrics.bandwidth / 1e9,
                    power_w: l.metrics.power_w,
                    eff_gflops_w: l.metrics.efficiency / 1e9,
                })
                .collect();
            rows.push(ModelRow {
                layer: "total",
                kind: "",
                pass: "",
                time_s: report.total.time_s,
                bandwidth_gbps: report.total.bandwidth / 1e9,
                power_w: report.total.power_w,
                eff_gflops_w: report.total.efficiency / 1e9,
            });
            let mut s = csv_rows(&rows);
            if let Some(c) = &checks {
                s.push('\n');
                s.push_str(&csv_rows(c));
            }
            s
        }
    };
    if failed {
        print!("{text}");
        return Err(Failure::Check("golden comparison outside tolerance".into()));
    }
    Ok(text)
}

#[derive(Serialize)]
struct OffloadCsv<'a> {
    layer: &'a str,
    ns_offloads: u64,
    ns_cycles_per_offload: u64,
    ntx_offloads: u64,
    ntx_cycles_per_offload: u64,
}

fn cmd_offloads(format: Format) -> Outcome {
    let table = offload_table();
    Ok(match format {
        Format::Json => json(&table),
        Format::Csv => csv_rows(
            &table
                .iter()
                .map(|r| OffloadCsv {
                    layer: &r.layer,
                    ns_offloads: r.ns.offloads,
                    ns_cycles_per_offload: r.ns.cycles_per_offload,
                    ntx_offloads: r.ntx.offloads,
                    ntx_cycles_per_offload: r.ntx.cycles_per_offload,
                })
                .collect::<Vec<_>>(),
        ),
    })
}

#[derive(Serialize)]
struct SweepRow {
    #[serde(rename = "f_GHz")]
    f_ghz: f64,
    #[serde(rename = "V")]
    v: f64,
    #[serde(rename = "T_s")]
    t_s: f64,
    #[serde(rename = "B_GBps")]
    b_gbps: f64,
    #[serde(rename = "P_W")]
    p_w: f64,
    #[serde(rename = "eff_GFLOPsW")]
    eff: f64,
    optimum: bool,
}

#[derive(Serialize)]
struct SummaryRow {
    config: String,
    area_mm2: f64,
    f_opt_ghz: f64,
    power_w: f64,
    peak_tflops: f64,
    alexnet: f64,
    googlenet: f64,
    inception_v3: f64,
    resnet34: f64,
    resnet50: f64,
    resnet152: f64,
    geo_mean: f64,
}

fn cmd_sweep(format: Format, arch: &str, summary: bool) -> Outcome {
    if summary {
        let mut rows = Vec::new();
        for name in ArchConfig::preset_names() {
            let a = ArchConfig::preset(&name).map_err(usage)?;
            let sweep = vfs_sweep(&reference_tile(), &a, &default_grid(&a)).map_err(usage)?;
            let best = sweep.best();
            let at = operating_point(&a, a.energy_per_cycle, best.freq_hz).map_err(usage)?;
            let (nets, gm) = network_efficiencies(&at).map_err(usage)?;
            let e: Vec<f64> = nets.iter().map(|(_, e)| e / 1e9).collect();
            rows.push(SummaryRow {
                config: name,
                area_mm2: a.area_mm2(),
                f_opt_ghz: best.freq_hz / 1e9,
                power_w: best.metrics.power_w,
                peak_tflops: at.peak_flops() / 1e12,
                alexnet: e[0],
                googlenet: e[1],
                inception_v3: e[2],
                resnet34: e[3],
                resnet50: e[4],
                resnet152: e[5],
                geo_mean: gm / 1e9,
            });
        }
        return Ok(match format {
            Format::Json => json(&rows),
            Format::Csv => csv_rows(&rows),
        });
    }
    let a = load_arch(arch)?;
    let sweep = vfs_sweep(&reference_tile(), &a, &default_grid(&a)).map_err(usage)?;
    Ok(match format {
        Format::Json => json(&sweep),
        Format::Csv => csv_rows(
            &sweep
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| SweepRow {
                    f_ghz: p.freq_hz / 1e9,
                    v: p.voltage,
                    t_s: p.metrics.time_s,
                    b_gbps: p.metrics.bandwidth / 1e9,
                    p_w: p.metrics.power_w,
                    eff: p.metrics.efficiency / 1e9,
                    optimum: i == sweep.optimum,
                })
                .collect::<Vec<_>>(),
        ),
    })
}

#[derive(Serialize)]
struct MeshDetail {
    config: MeshConfig,
    batch: usize,
    timing: MeshTiming,
    energy: MeshEnergy,
}

#[derive(Serialize)]
struct MeshCsv {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "L_B")]
    l_b: usize,
    speedup: f64,
    parallel_eff: f64,
    energy_eff: f64,
}

fn cmd_mesh(
    format: Option<Format>,
    config: Option<&Path>,
    max_side: usize,
    batches: Vec<usize>,
    link_gbps: Option<f64>,
    side: Option<usize>,
    batch: Option<usize>,
) -> Outcome {
    let mut base = match config {
        Some(p) => read_json::<MeshConfig>(p)?,
        None => MeshConfig::new(1),
    };
    if let Some(g) = link_gbps {
        base.link_bandwidth = g * 1e9;
    }
    if let (Some(side), Some(batch)) = (side, batch) {
        let m = MeshConfig { side, ..base };
        m.validate().map_err(usage)?;
        if batch == 0 {
            return Err(usage("batch must be at least 1"));
        }
        let timing = mesh_time(&m, batch);
        if timing.idle_cubes {
            eprintln!("warning: batch {batch} leaves cubes of the {side}x{side} mesh idle");
        }
        let detail = MeshDetail {
            config: m,
            batch,
            timing,
            energy: mesh_energy(&m, batch),
        };
        return Ok(match format.unwrap_or(Format::Json) {
            Format::Json => json(&detail),
            Format::Csv => csv_rows(&[MeshCsv {
                n: side,
                l_b: batch,
                speedup: timing.speedup,
                parallel_eff: timing.parallel_efficiency,
                energy_eff: detail.energy.energy_efficiency,
            }]),
        });
    }
    if max_side == 0 {
        return Err(usage("--max-side must be at least 1"));
    }
    base.validate().map_err(usage)?;
    let batches = if batches.is_empty() { default_batches() } else { batches };
    if batches.contains(&0) {
        return Err(usage("batch sizes must be at least 1"));
    }
    let sides: Vec<usize> = (1..=max_side).collect();
    let rows = mesh_grid(&base, &sides, &batches);
    Ok(match format.unwrap_or(Format::Csv) {
        Format::Json => json(&rows),
        Format::Csv => csv_rows(
            &rows
                .iter()
                .map(|r| MeshCsv {
                    n: r.side,
                    l_b: r.batch,
                    speedup: r.speedup,
                    parallel_eff: r.parallel_efficiency,
                    energy_eff: r.energy_efficiency,
                })
                .collect::<Vec<_>>(),
        ),
    })
}

#[derive(Serialize)]
struct DatacenterReport<T: Serialize> {
    scenario: Scenario,
    baseline: ServerBaseline,
    cube: CubeOffer,
    result: T,
}

#[derive(Serialize)]
struct KeyValue {
    key: String,
    value: serde_json::Value,
}

fn flatten(v: &serde_json::Value, prefix: &str, out: &mut Vec<KeyValue>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(v, &key, out);
            }
        }
        other => out.push(KeyValue {
            key: prefix.to_string(),
            value: other.clone(),
        }),
    }
}

fn scalar_report<T: Serialize>(format: Format, v: &T) -> String {
    match format {
        Format::Json => json(v),
        Format::Csv => {
            let mut rows = Vec::new();
            flatten(&serde_json::to_value(v).expect("reports serialize"), "", &mut rows);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"]).expect("in-memory writer");
            for r in rows {
                let value = match r.value {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                w.write_record([r.key, value]).expect("in-memory writer");
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
        }
    }
}

fn cmd_datacenter(
    format: Format,
    scenario: ScenarioArg,
    cube_config: &str,
    baseline: Option<&Path>,
    pue_factor: Option<f64>,
    dram_savings: Option<DramSavings>,
    budget_w: Option<f64>,
) -> Outcome {
    let scenario = match scenario {
        ScenarioArg::SameCompute => Scenario::SameCompute,
        ScenarioArg::SameTdp => Scenario::SameTdp,
    };
    let mut b = match baseline {
        Some(p) => read_json::<ServerBaseline>(p)?,
        None => ServerBaseline::default(),
    };
    if let Some(f) = pue_factor {
        b.pue_factor = f;
    }
    match dram_savings {
        Some(DramSavings::Capacity) => b.dram_savings_w = b.dram_power_from_capacity(),
        Some(DramSavings::Quoted) => b.dram_savings_w = ServerBaseline::default().dram_savings_w,
        None => {}
    }
    b.validate().map_err(usage)?;
    let cube = match cube_config {
        "ntx128" => CubeOffer::ntx128(scenario),
        path if Path::new(path).is_file() || path.ends_with(".json") => read_json::<CubeOffer>(Path::new(path))?,
        other => return Err(usage(format!("unknown cube {other:?}; use ntx128 or a JSON file"))),
    };
    cube.validate().map_err(usage)?;
    Ok(match scenario {
        Scenario::SameCompute => scalar_report(
            format,
            &DatacenterReport {
                scenario,
                result: same_compute(&b, &cube),
                baseline: b,
                cube,
            },
        ),
        Scenario::SameTdp => {
            let result = same_tdp(&b, &cube, budget_w.unwrap_or(b.gpu_power_w)).map_err(usage)?;
            scalar_report(
                format,
                &DatacenterReport {
                    scenario,
                    result,
                    baseline: b,
                    cube,
                },
            )
        }
    })
}

#[derive(Serialize)]
struct TraceSummary {
    conv: ConvSpec,
    cycles: u64,
    ntx_iterations: u64,
    dma_bytes: u64,
    eta_c: f64,
    eta_d: f64,
    bytes_in_bursts_ge_32: f64,
    bursts: std::collections::BTreeMap<u32, u64>,
}

fn cmd_trace(format: Format, conv: &[usize], seed: u64, view: TraceView, out_dir: Option<&Path>) -> Outcome {
    use rand::{Rng, SeedableRng};
    let spec = match conv {
        [] => ConvSpec::new(2, 10, 24, 8, 3, 1, 0),
        &[c, h, w, o, k, s, p] => ConvSpec::new(c, h, w, o, k, s, p),
        _ => return Err(usage("--conv takes seven values")),
    }
    .map_err(usage)?;
    let plan = plan_conv_tiles(&spec, TCDM_BYTES).map_err(usage)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut data = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect() };
    let (x, w, b) = (data(spec.input_len()), data(spec.weight_len()), data(spec.c_out));
    let (_, trace) = run_conv_tiled(&spec, &plan, &x, &w, &b).map_err(usage)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
        for (name, body) in [
            ("summary.csv", trace.summary_csv()),
            ("transitions.csv", trace.transitions_csv()),
            ("bursts.csv", trace.bursts_csv()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(match format {
        Format::Json => json(&TraceSummary {
            conv: spec,
            cycles: trace.cycles,
            ntx_iterations: trace.ntx_iterations,
            dma_bytes: trace.dma_bytes,
            eta_c: trace.measured_eta_c(),
            eta_d: trace.measured_eta_d(),
            bytes_in_bursts_ge_32: trace.byte_fraction_in_bursts(32),
            bursts: trace.burst_histogram(),
        }),
        Format::Csv => match view {
            TraceView::Summary => trace.summary_csv(),
            TraceView::Transitions => trace.transitions_csv(),
            TraceView::Bursts => trace.bursts_csv(),
        },
    })
}

fn run(cli: Cli) -> Outcome {
    let fmt = |default| cli.format.unwrap_or(default);
    match cli.command {
        Command::Verify {
            seed: s,
            instances,
            inject_fault,
        } => cmd_verify(fmt(Format::Json), seed(s)?, instances, inject_fault),
        Command::Model {
            network,
            arch,
            mode,
            accounting,
            optimal,
            golden,
        } => cmd_model(fmt(Format::Csv), &network, &arch, mode, accounting, optimal, golden),
        Command::Offloads => cmd_offloads(fmt(Format::Csv)),
        Command::Sweep { arch, summary } => cmd_sweep(fmt(Format::Csv), &arch, summary),
        Command::Mesh {
            config,
            max_side,
            batches,
            link_gbps,
            side,
            batch,
        } => cmd_mesh(cli.format, config.as_deref(), max_side, batches, link_gbps, side, batch),
        Command::Datacenter {
            scenario,
            cube_config,
            baseline,
            pue_factor,
            dram_savings,
            budget_w,
        } => cmd_datacenter(fmt(Format::Json), scenario, &cube_config, baseline.as_deref(), pue_factor, dram_savings, budget_w),
        Command::Trace {
            conv,
            seed: s,
            view,
            out_dir,
        } => cmd_trace(fmt(Format::Csv), &conv, seed(s)?, view, out_dir.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

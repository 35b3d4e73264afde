//! Randomized functional suite comparing every kernel with its oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::exact::same_value;
use super::oracle::*;
use crate::kernels::*;

/// Bound on `‖analytic − numeric‖∞ / ‖numeric‖∞`.
pub const GRADIENT_TOLERANCE: f64 = 1e-3;
const FD_STEP: f64 = 1e-3;
/// Coordinates probed per finite-difference check.
const PROBES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    pub instances: usize,
    /// Perturbs one result so callers can exercise the failure path.
    pub inject_fault: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 0,
            instances: 500,
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub instances: usize,
    pub bit_exact_checks: usize,
    pub gradient_checks: usize,
    pub optimizer_checks: usize,
    pub max_gradient_error: f64,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Case {
    ConvForward,
    ConvBackwardData,
    ConvBackwardWeight,
    ConvTiled,
    Pool,
    Relu,
    Optimizer,
    ConvGradient,
    PoolGradient,
    ReluGradient,
    LinearGradient,
}

const CASES: [Case; 11] = [
    Case::ConvForward,
    Case::ConvBackwardData,
    Case::ConvBackwardWeight,
    Case::ConvTiled,
    Case::Pool,
    Case::Relu,
    Case::Optimizer,
    Case::ConvGradient,
    Case::PoolGradient,
    Case::ReluGradient,
    Case::LinearGradient,
];

/// Values spread over several binades so rounding differences surface.
fn values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let m: f32 = rng.gen_range(-1.0..1.0);
            m * (2.0f32).powi(rng.gen_range(-6..4))
        })
        .collect()
}

fn random_conv(rng: &mut ChaCha8Rng) -> ConvSpec {
    loop {
        let (kh, kw) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let pad = (rng.gen_range(0..kh), rng.gen_range(0..kw));
        let (h, w) = (rng.gen_range(1..=9), rng.gen_range(1..=9));
        let s = rng.gen_range(1..=4);
        if let Ok(spec) = ConvSpec::rect(rng.gen_range(1..=4), h, w, rng.gen_range(1..=4), (kh, kw), s, pad) {
            return spec;
        }
    }
}

fn random_pool(rng: &mut ChaCha8Rng) -> PoolSpec {
    loop {
        let window = rng.gen_range(2..=3);
        let spec = PoolSpec {
            pad: rng.gen_range(0..window),
            ..PoolSpec::new(rng.gen_range(1..=3), rng.gen_range(2..=8), rng.gen_range(2..=8), window, rng.gen_range(1..=2))
        };
        if spec.validate().is_ok() {
            return spec;
        }
    }
}

fn first_mismatch(got: &[f32], want: &[f32]) -> Option<usize> {
    if got.len() != want.len() {
        return Some(got.len().min(want.len()));
    }
    got.iter().zip(want).position(|(&a, &b)| !same_value(a, b))
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative infinity-norm error of `analytic` at `probes` against central
/// differences of `loss`.
fn gradient_error(analytic: &[f32], point: &[f64], probes: &[usize], loss: impl Fn(&[f64]) -> f64) -> f64 {
    let mut p = point.to_vec();
    let (mut err, mut norm) = (0.0f64, 0.0f64);
    for &i in probes {
        let orig = p[i];
        p[i] = orig + FD_STEP;
        let up = loss(&p);
        p[i] = orig - FD_STEP;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        err = err.max((analytic[i] as f64 - numeric).abs());
        norm = norm.max(numeric.abs());
    }
    if norm == 0.0 {
        err
    } else {
        err / norm
    }
}

fn probes(rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    if len <= PROBES {
        (0..len).collect()
    } else {
        (0..PROBES).map(|_| rng.gen_range(0..len)).collect()
    }
}

/// Runs `instances` randomized cases. Deterministic for a given seed.
pub fn run_functional_suite(opts: &SuiteOptions) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = SuiteReport {
        seed: opts.seed,
        instances: opts.instances,
        ..Default::default()
    };
    for n in 0..opts.instances {
        let case = CASES[n % CASES.len()];
        let fault = opts.inject_fault && n == opts.instances / 2;
        if let Err(e) = run_case(case, &mut rng, fault, &mut report) {
            report.failures.push(format!("instance {n} ({case:?}): {e}"));
        }
    }
    report
}

fn run_case(case: Case, rng: &mut ChaCha8Rng, fault: bool, report: &mut SuiteReport) -> Result<(), String> {
    let err = |e: KernelError| e.to_string();
    let exact = |got: Vec<f32>, want: Vec<f32>, report: &mut SuiteReport| {
        report.bit_exact_checks += 1;
        let mut got = got;
        if fault && !got.is_empty() {
            got[0] = f32::from_bits(got[0].to_bits() ^ 1);
        }
        match first_mismatch(&got, &want) {
            None => Ok(()),
            Some(i) => Err(format!("element {i}: {:?} vs oracle {:?}", got.get(i), want.get(i))),
        }
    };
    let grad = |e: f64, report: &mut SuiteReport| {
        report.gradient_checks += 1;
        let e = if fault { 1.0 } else { e };
        report.max_gradient_error = report.max_gradient_error.max(e);
        if e <= GRADIENT_TOLERANCE {
            Ok(())
        } else {
            Err(format!("gradient error {e:.3e}"))
        }
    };
    match case {
        Case::ConvForward => {
            let spec = random_conv(rng);
            let (x, w, b) = (values(rng, spec.input_len()), values(rng, spec.weight_len()), values(rng, spec.c_out));
            let got = conv_forward(&spec, &x, &w, &b).map_err(err)?.output;
            exact(got, conv_forward_exact(&spec, &x, &w, &b), report)
        }
        Case::ConvBackwardData => {
            let spec = random_conv(rng);
            let (dy, w) = (values(rng, spec.output_len()), values(rng, spec.weight_len()));
            let got = conv_backward_data(&spec, &dy, &w).map_err(err)?.output;
            exact(got, conv_backward_data_stuffed(&spec, &dy, &w), report)
        }
        Case::ConvBackwardWeight => {
            let spec = random_conv(rng);
            let (x, dy) = (values(rng, spec.input_len()), values(rng, spec.output_len()));
            let got = conv_backward_weight(&spec, &x, &dy).map_err(err)?.output;
            exact(got, conv_backward_weight_exact(&spec, &x, &dy), report)
        }
        Case::ConvTiled => {
            // small budgets force row tiles and input-channel chunks
            let spec = ConvSpec::new(
                rng.gen_range(1..=12),
                rng.gen_range(4..=12),
                rng.gen_range(4..=12),
                rng.gen_range(1..=10),
                rng.gen_range(1..=3),
                rng.gen_range(1..=2),
                0,
            )
            .map_err(err)?;
            let spec = ConvSpec {
                pad_h: rng.gen_range(0..spec.k_h),
                pad_w: rng.gen_range(0..spec.k_w),
                ..spec
            };
            let budget = rng.gen_range(2048..16384);
            let plan = plan_conv_tiles(&spec, budget).map_err(err)?;
            let (x, w, b) = (values(rng, spec.input_len()), values(rng, spec.weight_len()), values(rng, spec.c_out));
            let (got, _) = run_conv_tiled(&spec, &plan, &x, &w, &b).map_err(err)?;
            exact(got, conv_forward_chunked_exact(&spec, &x, &w, &b, plan.in_channels), report)
        }
        Case::Pool => {
            let spec = random_pool(rng);
            let x = values(rng, spec.input_len());
            let out = maxpool_forward(&spec, &x).map_err(err)?;
            let (y, idx) = maxpool_reference(&spec, &x);
            if out.indices != idx {
                return Err("argmax indices differ from brute force".into());
            }
            exact(out.y, y, report)
        }
        Case::Relu => {
            let n = rng.gen_range(1..300);
            let mut x = values(rng, n);
            x[0] = 0.0;
            let dy = values(rng, n);
            let y = relu_forward(&x).map_err(err)?.output;
            exact(y, x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(), report)?;
            let dx = relu_backward(&x, &dy).map_err(err)?.output;
            exact(dx, x.iter().zip(&dy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(), report)
        }
        Case::Optimizer => {
            let kind = OptimizerKind::ALL[rng.gen_range(0..4)];
            let n = rng.gen_range(1..700);
            let theta = values(rng, n);
            let hyper = Hyper::default();
            let mut state = OptimizerState::new(theta.clone(), hyper);
            let mut oracle = OptimizerF64::new(&theta);
            report.optimizer_checks += 1;
            for _ in 0..3 {
                let g = values(rng, n);
                optimizer_step(kind, &mut state, &g).map_err(err)?;
                oracle.step(kind, &hyper, &g);
            }
            if fault {
                state.theta[0] += 1.0;
            }
            // one rounding per stored value plus the special-function error
            for (i, (&t, &r)) in state.theta.iter().zip(&oracle.theta).enumerate() {
                let tol = 8.0 * f32::EPSILON as f64 * r.abs() + 3.0 * 2f64.powi(-16) * hyper.learning_rate as f64;
                if (t as f64 - r).abs() > tol {
                    return Err(format!("{kind:?} parameter {i}: {t} vs {r}"));
                }
            }
            Ok(())
        }
        Case::ConvGradient => {
            let spec = random_conv(rng);
            let (x, w, b) = (values(rng, spec.input_len()), values(rng, spec.weight_len()), values(rng, spec.c_out));
            let r = values(rng, spec.output_len());
            let (xd, wd, bd, rd) = (to_f64(&x), to_f64(&w), to_f64(&b), to_f64(&r));
            let dx = conv_backward_data(&spec, &r, &w).map_err(err)?.output;
            let dw = conv_backward_weight(&spec, &x, &r).map_err(err)?.output;
            let px = probes(rng, x.len());
            let pw = probes(rng, w.len());
            let ex = gradient_error(&dx, &xd, &px, |p| dot(&conv_forward_f64(&spec, p, &wd, &bd), &rd));
            let ew = gradient_error(&dw, &wd, &pw, |p| dot(&conv_forward_f64(&spec, &xd, p, &bd), &rd));
            grad(ex.max(ew), report)
        }
        Case::PoolGradient => {
            let spec = random_pool(rng);
            // distinct values spaced well beyond the step
            let mut x: Vec<f32> = (0..spec.input_len()).map(|i| i as f32 * 0.05).collect();
            for i in (1..x.len()).rev() {
                x.swap(i, rng.gen_range(0..=i));
            }
            let r = values(rng, spec.output_len());
            let out = maxpool_forward(&spec, &x).map_err(err)?;
            let dx = maxpool_backward(&r, &out.indices, x.len()).map_err(err)?;
            let rd = to_f64(&r);
            let pts = probes(rng, x.len());
            grad(gradient_error(&dx, &to_f64(&x), &pts, |p| dot(&maxpool_f64(&spec, p), &rd)), report)
        }
        Case::ReluGradient => {
            let n = rng.gen_range(1..200);
            let x: Vec<f32> = values(rng, n).iter().map(|&v| if v.abs() < 0.01 { 0.5 } else { v }).collect();
            let r = values(rng, n);
            let dx = relu_backward(&x, &r).map_err(err)?.output;
            let rd = to_f64(&r);
            let pts = probes(rng, n);
            let e = gradient_error(&dx, &to_f64(&x), &pts, |p| p.iter().zip(&rd).map(|(&v, &g)| v.max(0.0) * g).sum());
            grad(e, report)
        }
        Case::LinearGradient => {
            let (n_in, n_out) = (rng.gen_range(1..40), rng.gen_range(1..20));
            let (x, w, b) = (values(rng, n_in), values(rng, n_in * n_out), values(rng, n_out));
            let r = values(rng, n_out);
            let g = linear_backward(&x, &w, &r).map_err(err)?;
            let (xd, wd, bd, rd) = (to_f64(&x), to_f64(&w), to_f64(&b), to_f64(&r));
            let px = probes(rng, n_in);
            let pw = probes(rng, n_in * n_out);
            let pb = probes(rng, n_out);
            let ex = gradient_error(&g.dx, &xd, &px, |p| dot(&linear_f64(p, &wd, &bd), &rd));
            let ew = gradient_error(&g.dw, &wd, &pw, |p| dot(&linear_f64(&xd, p, &bd), &rd));
            let eb = gradient_error(&g.db, &bd, &pb, |p| dot(&linear_f64(&xd, &wd, p), &rd));
            grad(ex.max(ew).max(eb), report)
        }
    }
}

/// Strided backward-data lowering against the zero-stuffed oracle for
/// every kernel size up to `max_kernel` and stride up to `max_stride`.
/// Returns the number of shapes checked and any mismatches.
pub fn strided_sweep(seed: u64, max_kernel: usize, max_stride: usize) -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut checked, mut failures) = (0, Vec::new());
    for k in 1..=max_kernel {
        for s in 1..=max_stride {
            for pad in 0..k {
                for _ in 0..2 {
                    let h = rng.gen_range(k.saturating_sub(2 * pad).max(1)..=k + 2 * s + 3);
                    let w = rng.gen_range(k.saturating_sub(2 * pad).max(1)..=k + 2 * s + 3);
                    let Ok(spec) = ConvSpec::new(rng.gen_range(1..=3), h, w, rng.gen_range(1..=3), k, s, pad) else {
                        continue;
                    };
                    let dy = values(&mut rng, spec.output_len());
                    let wt = values(&mut rng, spec.weight_len());
                    checked += 1;
                    match conv_backward_data(&spec, &dy, &wt) {
                        Ok(run) => {
                            if let Some(i) = first_mismatch(&run.output, &conv_backward_data_stuffed(&spec, &dy, &wt)) {
                                failures.push(format!("k={k} s={s} pad={pad} {h}x{w}: element {i}"));
                            }
                        }
                        Err(e) => failures.push(format!("k={k} s={s} pad={pad}: {e}")),
                    }
                }
            }
        }
    }
    (checked, failures)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    /// Largest relative error of the NTX result against double precision.
    pub ntx_max_rel: f64,
    /// Same for left-to-right f32 accumulation.
    pub sequential_max_rel: f64,
    pub outputs: usize,
}

/// A 3×3 convolution over 64 input channels, NTX against double precision.
pub fn conv_precision_check(seed: u64) -> PrecisionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ConvSpec::new(64, 8, 8, 4, 3, 1, 1).expect("valid shape");
    let x: Vec<f32> = (0..spec.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w: Vec<f32> = (0..spec.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = vec![0.0f32; spec.c_out];
    let ntx = conv_forward(&spec, &x, &w, &b).expect("conv runs").output;
    let seq = conv_forward_sequential_f32(&spec, &x, &w, &b);
    let reference = conv_forward_f64(&spec, &to_f64(&x), &to_f64(&w), &to_f64(&b));
    let rel = |v: &[f32]| {
        v.iter()
            .zip(&reference)
            .filter(|(_, &r)| r != 0.0)
            .map(|(&a, &r)| ((a as f64 - r) / r).abs())
            .fold(0.0, f64::max)
    };
    PrecisionReport {
        ntx_max_rel: rel(&ntx),
        sequential_max_rel: rel(&seq),
        outputs: ntx.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_suite_passes() {
        let r = run_functional_suite(&SuiteOptions {
            seed: 3,
            instances: 44,
            inject_fault: false,
        });
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(r.gradient_checks, 16);
    }

    #[test]
    fn injected_fault_is_caught() {
        let r = run_functional_suite(&SuiteOptions {
            seed: 3,
            instances: 22,
            inject_fault: true,
        });
        assert_eq!(r.failures.len(), 1);
    }

    #[test]
    fn small_sweep() {
        let (n, f) = strided_sweep(1, 3, 3);
        assert!(n > 0);
        assert!(f.is_empty(), "{f:?}");
    }

    #[test]
    fn precision_bound() {
        let p = conv_precision_check(9);
        assert!(p.ntx_max_rel <= 2f64.powi(-23));
        assert!(p.ntx_max_rel <= p.sequential_max_rel);
    }
}

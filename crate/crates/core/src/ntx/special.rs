//! Division, square roots, exponential and logarithm built from NTX
//! vector commands, with the controller core preparing seeds and
//! exponent fields.
//!
//! Cycle costs are in NTX clock cycles. Each command costs its iterations,
//! the pipeline drain and the staging writes needed to configure it.

use serde::{Deserialize, Serialize};

use super::command::{AccInit, CommandOutcome, FpFlags, NtxCommand, Opcode};
use super::hwl::{AguConfig, HwlConfig};
use super::{NtxError, VecMemory, WordMemory};

/// Staging-register writes for an elementwise command plus the issue.
pub const CONFIG_CYCLES: u64 = 10;
/// Core cycles per element to build an 8-bit reciprocal or rsqrt seed.
pub const SEED_CYCLES: u64 = 14;
/// Core cycles per element to round x/ln2 and handle special inputs.
pub const EXP_SPLIT_CYCLES: u64 = 10;
/// Core cycles per element to assemble the two power-of-two scale words.
pub const EXP_SCALE_CYCLES: u64 = 8;
/// Core cycles per element to split mantissa and exponent.
pub const LOG_SPLIT_CYCLES: u64 = 12;

const SCRATCH_BYTES: usize = 128 * 1024;
/// Elements processed per pass so all temporaries fit the scratchpad.
const CHUNK: usize = 512;

const LN2_HI: f32 = 0.693_145_75;
const LN2_LO: f32 = 1.428_606_8e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecialFn {
    Div,
    Sqrt,
    Rsqrt,
    Exp,
    Log,
}

impl SpecialFn {
    pub const ALL: [SpecialFn; 5] = [
        SpecialFn::Div,
        SpecialFn::Sqrt,
        SpecialFn::Rsqrt,
        SpecialFn::Exp,
        SpecialFn::Log,
    ];
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpecialOutput {
    pub values: Vec<f32>,
    pub cycles: u64,
    /// Set when any element was outside the function's domain.
    pub domain_error: bool,
}

impl SpecialOutput {
    pub fn cycles_per_element(&self) -> f64 {
        self.cycles as f64 / self.values.len().max(1) as f64
    }
}

/// Contiguous f32 vector in the scratchpad.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vector {
    pub addr: u32,
    pub len: usize,
}

#[derive(Clone, Copy, Debug)]
pub enum Operand {
    Vec(Vector),
    Scalar(f32),
    None,
}

/// A scratchpad plus one NTX driven with elementwise commands.
#[derive(Clone, Debug)]
pub struct VectorUnit {
    mem: VecMemory,
    top: u32,
    pub cycles: u64,
    pub flags: FpFlags,
    pub commands: u64,
}

impl Default for VectorUnit {
    fn default() -> Self {
        Self::new()
    }
}

impl VectorUnit {
    pub fn new() -> Self {
        VectorUnit {
            mem: VecMemory::new(SCRATCH_BYTES),
            top: 0,
            cycles: 0,
            flags: FpFlags::default(),
            commands: 0,
        }
    }

    pub fn mark(&self) -> u32 {
        self.top
    }

    pub fn release(&mut self, mark: u32) {
        self.top = mark;
    }

    pub fn alloc(&mut self, len: usize) -> Vector {
        let addr = self.top;
        self.top += 4 * len.max(1) as u32;
        assert!(
            self.top as usize <= SCRATCH_BYTES,
            "vector unit scratchpad exhausted"
        );
        Vector { addr, len }
    }

    /// Places data in the scratchpad without charging cycles.
    pub fn upload(&mut self, data: &[f32]) -> Vector {
        let v = self.alloc(data.len());
        self.mem.write_slice(v.addr, data);
        v
    }

    pub fn download(&self, v: Vector) -> Vec<f32> {
        self.mem.read_slice(v.addr, v.len)
    }

    /// Core-side per-element work: reads `v`, writes the mapped values.
    pub fn core_map(&mut self, v: Vector, cycles_per_elem: u64, f: impl Fn(f32) -> f32) -> Vector {
        let out = self.alloc(v.len);
        for i in 0..v.len {
            let x = self.mem.read_f32(v.addr + 4 * i as u32);
            self.mem.write_f32(out.addr + 4 * i as u32, f(x));
        }
        self.cycles += cycles_per_elem * v.len as u64;
        out
    }

    pub fn charge_core(&mut self, cycles: u64) {
        self.cycles += cycles;
    }

    fn operand_agu(&mut self, o: Operand) -> AguConfig {
        match o {
            Operand::Vec(v) => AguConfig::with_steps(v.addr as i64, &[4]),
            Operand::Scalar(x) => {
                let s = self.alloc(1);
                self.mem.write_f32(s.addr, x);
                AguConfig::with_steps(s.addr as i64, &[0])
            }
            Operand::None => AguConfig::default(),
        }
    }

    /// Issues one elementwise command writing `out`.
    pub fn run_into(&mut self, op: Opcode, a: Operand, b: Operand, init: AccInit, out: Vector) {
        let mark = self.mark();
        let hwl = HwlConfig::elementwise(&[out.len as u32]).expect("elementwise bound");
        let agu = [
            self.operand_agu(a),
            self.operand_agu(b),
            AguConfig::with_steps(out.addr as i64, &[4]),
        ];
        let cmd = NtxCommand::new(op, hwl, agu, init);
        let res = cmd.execute(&mut self.mem).expect("vector unit addresses are in range");
        // scalar operands are dead after the command
        self.release(mark);
        self.cycles += res.cycles + CONFIG_CYCLES;
        self.flags.invalid |= res.flags.invalid;
        self.commands += 1;
    }

    /// Runs an arbitrary command against the scratchpad and charges it.
    pub fn execute(&mut self, cmd: &NtxCommand) -> Result<CommandOutcome, NtxError> {
        let res = cmd.execute(&mut self.mem)?;
        self.cycles += res.cycles + CONFIG_CYCLES;
        self.flags.invalid |= res.flags.invalid;
        self.commands += 1;
        Ok(res)
    }

    /// Reduces the operand streams to one value with a single store.
    pub fn reduce(&mut self, op: Opcode, a: Operand, b: Operand, init: AccInit, len: usize) -> f32 {
        let mark = self.mark();
        let out = self.alloc(1);
        let hwl = HwlConfig::new(&[len as u32, 1], 1, 1).expect("reduction bound");
        let agu = [self.operand_agu(a), self.operand_agu(b), AguConfig::with_steps(out.addr as i64, &[0])];
        self.execute(&NtxCommand::new(op, hwl, agu, init))
            .expect("vector unit addresses are in range");
        let v = self.mem.read_f32(out.addr);
        self.release(mark);
        v
    }

    /// cx·x + cy·y with one rounding per element. The read stream hops
    /// between the two vectors and the coefficient pair is replayed per
    /// element.
    pub fn lincomb2(&mut self, x: Vector, cx: f32, y: Vector, cy: f32) -> Vector {
        assert_eq!(x.len, y.len, "operand lengths differ");
        let out = self.alloc(x.len);
        let mark = self.mark();
        let coeff = self.upload(&[cx, cy]);
        let d = y.addr as i64 - x.addr as i64;
        let hwl = HwlConfig::new(&[2, x.len as u32], 1, 1).expect("lincomb bound");
        let agu = [
            AguConfig::with_steps(x.addr as i64, &[d, 4 - d]),
            AguConfig::with_steps(coeff.addr as i64, &[4, -4]),
            AguConfig::with_steps(out.addr as i64, &[0, 4]),
        ];
        self.execute(&NtxCommand::new(Opcode::Mac, hwl, agu, AccInit::Const(0.0)))
            .expect("vector unit addresses are in range");
        self.release(mark);
        out
    }

    pub fn run(&mut self, op: Opcode, a: Operand, b: Operand, init: AccInit, len: usize) -> Vector {
        let out = self.alloc(len);
        self.run_into(op, a, b, init, out);
        out
    }

    pub fn vmult(&mut self, a: Operand, b: Operand, len: usize) -> Vector {
        self.run(Opcode::Vmult, a, b, AccInit::Const(0.0), len)
    }

    pub fn vadd(&mut self, a: Operand, b: Operand, len: usize) -> Vector {
        self.run(Opcode::Vadd, a, b, AccInit::Const(0.0), len)
    }

    /// out = c + a·b with a single rounding.
    pub fn fma_const(&mut self, c: f32, a: Operand, b: Operand, len: usize) -> Vector {
        self.run(Opcode::Mac, a, b, AccInit::Const(c), len)
    }

    /// acc += a·b in place.
    pub fn accumulate(&mut self, acc: Vector, a: Operand, b: Operand) {
        self.run_into(Opcode::Mac, a, b, AccInit::FromOutput, acc);
    }

    pub fn copy(&mut self, a: Vector) -> Vector {
        self.run(Opcode::Copy, Operand::Vec(a), Operand::None, AccInit::Const(0.0), a.len)
    }

    pub fn fill(&mut self, value: f32, len: usize) -> Vector {
        self.run(Opcode::Memset, Operand::None, Operand::None, AccInit::Const(value), len)
    }

    /// Newton-Raphson reciprocal of `d`, seeded by the core.
    pub fn reciprocal(&mut self, d: Vector) -> Vector {
        let n = d.len;
        let nd = self.vmult(Operand::Vec(d), Operand::Scalar(-1.0), n);
        let mut y = self.core_map(d, SEED_CYCLES, recip_seed);
        for _ in 0..3 {
            let e = self.fma_const(2.0, Operand::Vec(nd), Operand::Vec(y), n);
            y = self.vmult(Operand::Vec(y), Operand::Vec(e), n);
        }
        y
    }

    /// num / den with a final residual correction.
    pub fn divide(&mut self, num: Vector, den: Vector) -> Vector {
        let n = num.len;
        let y = self.reciprocal(den);
        let nd = self.vmult(Operand::Vec(den), Operand::Scalar(-1.0), n);
        let q = self.vmult(Operand::Vec(num), Operand::Vec(y), n);
        let r = self.copy(num);
        self.accumulate(r, Operand::Vec(nd), Operand::Vec(q));
        self.accumulate(q, Operand::Vec(r), Operand::Vec(y));
        q
    }

    pub fn rsqrt(&mut self, x: Vector) -> Vector {
        let n = x.len;
        let hx = self.vmult(Operand::Vec(x), Operand::Scalar(-0.5), n);
        let mut y = self.core_map(x, SEED_CYCLES, rsqrt_seed);
        for _ in 0..3 {
            let t = self.vmult(Operand::Vec(hx), Operand::Vec(y), n);
            let e = self.fma_const(1.5, Operand::Vec(t), Operand::Vec(y), n);
            y = self.vmult(Operand::Vec(y), Operand::Vec(e), n);
        }
        y
    }

    pub fn sqrt(&mut self, x: Vector) -> Vector {
        let y = self.rsqrt(x);
        self.vmult(Operand::Vec(x), Operand::Vec(y), x.len)
    }

    pub fn exp(&mut self, x: Vector) -> Vector {
        let n = x.len;
        let t = self.vmult(Operand::Vec(x), Operand::Scalar(std::f32::consts::LOG2_E), n);
        let k = self.core_map(t, EXP_SPLIT_CYCLES, |t| t.round());
        let r = self.copy(x);
        self.accumulate(r, Operand::Vec(k), Operand::Scalar(-LN2_HI));
        self.accumulate(r, Operand::Vec(k), Operand::Scalar(-LN2_LO));
        let coeffs = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0, 1.0 / 720.0f32];
        let mut p = self.fill(coeffs[6], n);
        for &c in coeffs[..6].iter().rev() {
            p = self.fma_const(c, Operand::Vec(r), Operand::Vec(p), n);
        }
        let lo = self.core_map(k, EXP_SCALE_CYCLES / 2, |k| pow2((k as i32).div_euclid(2)));
        let hi = self.core_map(k, EXP_SCALE_CYCLES / 2, |k| {
            let k = k as i32;
            pow2(k - k.div_euclid(2))
        });
        let y = self.vmult(Operand::Vec(p), Operand::Vec(lo), n);
        self.vmult(Operand::Vec(y), Operand::Vec(hi), n)
    }

    pub fn log(&mut self, x: Vector) -> Vector {
        let n = x.len;
        let m = self.core_map(x, LOG_SPLIT_CYCLES / 2, |x| split_log(x).0);
        let e = self.core_map(x, LOG_SPLIT_CYCLES / 2, |x| split_log(x).1);
        let num = self.vadd(Operand::Vec(m), Operand::Scalar(-1.0), n);
        let den = self.vadd(Operand::Vec(m), Operand::Scalar(1.0), n);
        let s = self.divide(num, den);
        let z = self.vmult(Operand::Vec(s), Operand::Vec(s), n);
        let coeffs: [f32; 7] = [
            1.0,
            1.0 / 3.0,
            1.0 / 5.0,
            1.0 / 7.0,
            1.0 / 9.0,
            1.0 / 11.0,
            1.0 / 13.0,
        ];
        let mut p = self.fill(coeffs[6], n);
        for &c in coeffs[..6].iter().rev() {
            p = self.fma_const(c, Operand::Vec(z), Operand::Vec(p), n);
        }
        let s2 = self.vmult(Operand::Vec(s), Operand::Scalar(2.0), n);
        let y = self.vmult(Operand::Vec(s2), Operand::Vec(p), n);
        self.accumulate(y, Operand::Vec(e), Operand::Scalar(LN2_HI));
        self.accumulate(y, Operand::Vec(e), Operand::Scalar(LN2_LO));
        y
    }
}

fn pow2(k: i32) -> f32 {
    // k within [-150, 128] after core-side clamping
    if k >= -126 {
        f32::from_bits(((k + 127) as u32) << 23)
    } else {
        f32::from_bits(1u32 << (k + 149).max(0))
    }
}

/// Normalizes a finite positive value into (mantissa, exponent) with
/// mantissa in [sqrt(1/2), sqrt(2)).
fn split_log(x: f32) -> (f32, f32) {
    let (mut m, mut e) = frexp(x);
    if m < std::f32::consts::FRAC_1_SQRT_2 {
        m *= 2.0;
        e -= 1;
    }
    (m, e as f32)
}

/// x = m·2^e with m in [0.5, 1).
fn frexp(x: f32) -> (f32, i32) {
    let bits = x.to_bits();
    let exp = ((bits >> 23) & 0xff) as i32;
    if exp == 0 {
        let (m, e) = frexp(x * 2f32.powi(64));
        return (m, e - 64);
    }
    let m = f32::from_bits((bits & 0x807f_ffff) | (126 << 23));
    (m, exp - 126)
}

/// 1/x to about 9 bits: exponent negation plus a 256-entry mantissa table.
fn recip_seed(x: f32) -> f32 {
    let (m, e) = frexp(x.abs());
    let idx = ((m * 512.0) as u32).clamp(256, 511) - 256;
    let mid = 1.0 + (idx as f64 + 0.5) / 256.0;
    let r = ((1.0 / mid) * 512.0).round() / 512.0;
    let y = (r as f32) * pow2_wide(1 - e);
    y.copysign(x)
}

/// 1/sqrt(x) to about 9 bits from exponent parity and 8 mantissa bits.
fn rsqrt_seed(x: f32) -> f32 {
    let (m, e) = frexp(x);
    // x = m·2^e, fold to m' in [0.25, 1) with an even exponent
    let (m, e) = if e % 2 != 0 { (m * 0.5, e + 1) } else { (m, e) };
    let idx = ((m * 1024.0) as u32).clamp(256, 1023) >> 2;
    let mid = (idx as f64 * 4.0 + 2.0) / 1024.0;
    let r = ((1.0 / mid.sqrt()) * 256.0).round() / 256.0;
    (r as f32) * pow2_wide(-e / 2)
}

fn pow2_wide(k: i32) -> f32 {
    (2.0f64).powi(k) as f32
}

fn chunked(
    inputs: &[&[f32]],
    run: impl Fn(&mut VectorUnit, &[Vector]) -> Vector,
) -> (Vec<f32>, u64) {
    let n = inputs[0].len();
    let mut values = Vec::with_capacity(n);
    let mut cycles = 0;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let mut vu = VectorUnit::new();
        let vecs: Vec<Vector> = inputs.iter().map(|x| vu.upload(&x[start..end])).collect();
        let out = run(&mut vu, &vecs);
        values.extend(vu.download(out));
        cycles += vu.cycles;
        start = end;
    }
    (values, cycles)
}

/// Evaluates a unary special function on a batch. Out-of-domain lanes are
/// replaced by the core before the NTX runs and patched afterwards.
pub fn special_function(kind: SpecialFn, inputs: &[f32]) -> SpecialOutput {
    assert!(kind != SpecialFn::Div, "use divide() for two operands");
    let mut domain_error = false;
    let mut patch: Vec<Option<f32>> = vec![None; inputs.len()];
    // subnormal roots are taken on x·2^64 and rescaled by the core
    let mut rescale = vec![1.0f32; inputs.len()];
    let safe: Vec<f32> = inputs
        .iter()
        .zip(patch.iter_mut())
        .zip(rescale.iter_mut())
        .map(|((&x, p), post)| {
            let special = match kind {
                SpecialFn::Sqrt | SpecialFn::Rsqrt => {
                    if x.is_nan() || x < 0.0 {
                        domain_error = true;
                        Some(f32::NAN)
                    } else if x == 0.0 {
                        Some(if kind == SpecialFn::Sqrt { x } else { f32::INFINITY.copysign(x) })
                    } else if x.is_infinite() {
                        Some(if kind == SpecialFn::Sqrt { x } else { 0.0 })
                    } else {
                        None
                    }
                }
                SpecialFn::Exp => {
                    if x.is_nan() {
                        domain_error = true;
                        Some(f32::NAN)
                    } else if x > 88.8 {
                        Some(f32::INFINITY)
                    } else if x < -104.0 {
                        Some(0.0)
                    } else {
                        None
                    }
                }
                SpecialFn::Log => {
                    if x.is_nan() || x < 0.0 {
                        domain_error = true;
                        Some(f32::NAN)
                    } else if x == 0.0 {
                        Some(f32::NEG_INFINITY)
                    } else if x.is_infinite() {
                        Some(x)
                    } else {
                        None
                    }
                }
                SpecialFn::Div => unreachable!(),
            };
            *p = special;
            if special.is_some() {
                1.0
            } else if x.is_subnormal() && matches!(kind, SpecialFn::Sqrt | SpecialFn::Rsqrt) {
                *post = if kind == SpecialFn::Sqrt { 2f32.powi(-32) } else { 2f32.powi(32) };
                x * 2f32.powi(64)
            } else {
                x
            }
        })
        .collect();
    let (mut values, cycles) = chunked(&[&safe], |vu, v| match kind {
        SpecialFn::Sqrt => vu.sqrt(v[0]),
        SpecialFn::Rsqrt => vu.rsqrt(v[0]),
        SpecialFn::Exp => vu.exp(v[0]),
        SpecialFn::Log => vu.log(v[0]),
        SpecialFn::Div => unreachable!(),
    });
    for ((v, p), post) in values.iter_mut().zip(patch).zip(rescale) {
        if let Some(p) = p {
            *v = p;
        } else {
            *v *= post;
        }
    }
    SpecialOutput {
        values,
        cycles,
        domain_error,
    }
}

/// Elementwise num/den. Zero or non-finite denominators and non-finite
/// numerators give NaN and raise the domain flag.
pub fn divide(num: &[f32], den: &[f32]) -> SpecialOutput {
    assert_eq!(num.len(), den.len(), "operand lengths differ");
    let mut domain_error = false;
    let mut bad = vec![false; num.len()];
    let (sn, sd): (Vec<f32>, Vec<f32>) = num
        .iter()
        .zip(den)
        .zip(bad.iter_mut())
        .map(|((&a, &b), bad)| {
            // reciprocals of tiny denominators leave the float range
            if !a.is_finite() || !b.is_finite() || b == 0.0 || b.abs() < f32::MIN_POSITIVE * 4.0 {
                *bad = true;
                domain_error |= !b.is_finite() || !a.is_finite() || b == 0.0;
                (1.0, 1.0)
            } else {
                (a, b)
            }
        })
        .unzip();
    let (mut values, cycles) = chunked(&[&sn, &sd], |vu, v| vu.divide(v[0], v[1]));
    for (i, v) in values.iter_mut().enumerate() {
        if bad[i] {
            let (a, b) = (num[i], den[i]);
            *v = if a.is_finite() && b.is_finite() && b != 0.0 {
                // handled by the core in double precision
                (a as f64 / b as f64) as f32
            } else {
                f32::NAN
            };
        }
    }
    SpecialOutput {
        values,
        cycles,
        domain_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1.0 / (1 << 20) as f64;

    #[test]
    fn lincomb_rounds_once() {
        let mut vu = VectorUnit::new();
        let x = vu.upload(&[1.0, 3.0, 1e8]);
        let y = vu.upload(&[2.0, -1.0, 1.0]);
        let z = vu.lincomb2(x, 0.5, y, -4.0);
        assert_eq!(vu.download(z), vec![-7.5, 5.5, 5e7 - 4.0]);
        assert_eq!(vu.commands, 1);
    }

    #[test]
    fn reductions() {
        let mut vu = VectorUnit::new();
        let x = vu.upload(&[1.0, 5.0, -2.0, 5.0]);
        let m = vu.reduce(Opcode::Max, Operand::Vec(x), Operand::None, AccInit::Const(f32::NEG_INFINITY), 4);
        assert_eq!(m, 5.0);
        let s = vu.reduce(Opcode::Mac, Operand::Vec(x), Operand::Scalar(1.0), AccInit::Const(0.0), 4);
        assert_eq!(s, 9.0);
        assert_eq!(vu.mark(), 16);
    }

    fn max_rel(got: &[f32], want: impl Fn(usize) -> f64) -> f64 {
        got.iter()
            .enumerate()
            .map(|(i, &g)| {
                let w = want(i);
                ((g as f64 - w) / w).abs()
            })
            .fold(0.0, f64::max)
    }

    fn batch(lo: f32, hi: f32, n: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    }

    #[test]
    fn one_over_one_is_exact() {
        let out = divide(&[1.0], &[1.0]);
        assert_eq!(out.values, vec![1.0]);
        assert!(!out.domain_error);
    }

    #[test]
    fn sqrt_of_four() {
        let out = special_function(SpecialFn::Sqrt, &[4.0]);
        assert!(((out.values[0] as f64 - 2.0) / 2.0).abs() <= TOL);
    }

    #[test]
    fn exp_batch_accuracy_and_cost() {
        let xs = batch(-5.0, 5.0, 64, 1);
        let out = special_function(SpecialFn::Exp, &xs);
        let err = max_rel(&out.values, |i| (xs[i] as f64).exp());
        assert!(err <= TOL, "max rel err {err:e}");
        let cpe = out.cycles_per_element();
        assert!((30.0..=100.0).contains(&cpe), "{cpe} cycles/element");
    }

    #[test]
    fn all_functions_within_tolerance_and_cycle_window() {
        let xs = batch(0.01, 100.0, 256, 2);
        let ys = batch(-50.0, 50.0, 256, 3);
        for kind in SpecialFn::ALL {
            let (out, want): (SpecialOutput, Box<dyn Fn(usize) -> f64>) = match kind {
                SpecialFn::Div => (divide(&ys, &xs), Box::new(|i| ys[i] as f64 / xs[i] as f64)),
                SpecialFn::Sqrt => (special_function(kind, &xs), Box::new(|i| (xs[i] as f64).sqrt())),
                SpecialFn::Rsqrt => (
                    special_function(kind, &xs),
                    Box::new(|i| 1.0 / (xs[i] as f64).sqrt()),
                ),
                SpecialFn::Exp => {
                    let e = batch(-20.0, 20.0, 256, 4);
                    let w: Vec<f64> = e.iter().map(|&x| (x as f64).exp()).collect();
                    (special_function(kind, &e), Box::new(move |i| w[i]))
                }
                SpecialFn::Log => (special_function(kind, &xs), Box::new(|i| (xs[i] as f64).ln())),
            };
            let err = max_rel(&out.values, want);
            assert!(err <= TOL, "{kind:?}: {err:e}");
            let cpe = out.cycles_per_element();
            assert!((20.0..=150.0).contains(&cpe), "{kind:?}: {cpe}");
        }
    }

    #[test]
    fn domain_violations_flagged() {
        let d = divide(&[1.0, 2.0], &[0.0, 4.0]);
        assert!(d.values[0].is_nan());
        assert_eq!(d.values[1], 0.5);
        assert!(d.domain_error);
        let s = special_function(SpecialFn::Sqrt, &[-1.0, 0.0, 9.0]);
        assert!(s.values[0].is_nan());
        assert_eq!(s.values[1], 0.0);
        assert!(s.domain_error);
        let l = special_function(SpecialFn::Log, &[-2.0, 1.0]);
        assert!(l.values[0].is_nan());
        assert_eq!(l.values[1], 0.0);
        let e = special_function(SpecialFn::Exp, &[1000.0, -1000.0, 0.0]);
        assert_eq!(e.values, vec![f32::INFINITY, 0.0, 1.0]);
        assert!(!e.domain_error);
    }

    #[test]
    fn extreme_magnitudes() {
        let xs = [1e-30f32, 3e-38, 1e30, 7.5e37, 1.5e-44];
        let out = special_function(SpecialFn::Rsqrt, &xs);
        let err = max_rel(&out.values, |i| 1.0 / (xs[i] as f64).sqrt());
        assert!(err <= TOL, "{err:e}");
        let out = special_function(SpecialFn::Log, &xs);
        let err = max_rel(&out.values, |i| (xs[i] as f64).ln());
        assert!(err <= TOL, "{err:e}");
        let den = [1e30f32, -3e-37, 2.0];
        let out = divide(&[1.0, 1.0, -7.0], &den);
        let err = max_rel(&out.values, |i| [1.0, 1.0, -7.0][i] / den[i] as f64);
        assert!(err <= TOL, "{err:e}");
    }

    #[test]
    fn exp_near_range_limits() {
        let xs = [88.0f32, -87.0, -100.0, 0.5];
        let out = special_function(SpecialFn::Exp, &xs);
        for (i, &x) in xs.iter().enumerate() {
            let want = (x as f64).exp();
            let got = out.values[i] as f64;
            if want < f32::MIN_POSITIVE as f64 {
                // subnormal results lose relative precision by construction
                assert!((got - want).abs() <= f32::from_bits(1) as f64 * 2.0);
            } else {
                assert!(((got - want) / want).abs() <= TOL, "{x}");
            }
        }
    }
}

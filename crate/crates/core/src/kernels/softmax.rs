//! Row-wise softmax with max subtraction, using the iterative exponential
//! and division.

use super::{KernelError, KernelRun, KernelStats};
use crate::ntx::special::{divide, special_function, Operand, SpecialFn, VectorUnit};
use crate::ntx::{AccInit, Opcode};

/// Softmax of each consecutive row of `row_len` values.
pub fn softmax(x: &[f32], row_len: usize) -> Result<KernelRun, KernelError> {
    if row_len == 0 || x.len() % row_len != 0 {
        return Err(KernelError::Shape(format!("{} values do not form rows of {row_len}", x.len())));
    }
    let mut output = Vec::with_capacity(x.len());
    let mut stats = KernelStats::default();
    for row in x.chunks(row_len) {
        let mut vu = VectorUnit::new();
        let v = vu.upload(row);
        let max = vu.reduce(Opcode::Max, Operand::Vec(v), Operand::None, AccInit::Const(f32::NEG_INFINITY), row_len);
        let shifted = vu.vadd(Operand::Vec(v), Operand::Scalar(-max), row_len);
        let e = special_function(SpecialFn::Exp, &vu.download(shifted));
        let ev = vu.upload(&e.values);
        let sum = vu.reduce(Opcode::Mac, Operand::Vec(ev), Operand::Scalar(1.0), AccInit::Const(0.0), row_len);
        let p = divide(&e.values, &vec![sum; row_len]);
        stats.commands += vu.commands;
        stats.iterations += 3 * row_len as u64;
        stats.cycles += vu.cycles + e.cycles + p.cycles;
        stats.flags.invalid |= vu.flags.invalid || e.domain_error || p.domain_error;
        output.extend(p.values);
    }
    Ok(KernelRun { output, stats })
}

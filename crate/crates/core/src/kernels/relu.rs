//! Rectifier forward and backward as single elementwise commands.

use super::{check_len, memory_with, pack, run_commands, KernelError, KernelRun};
use crate::ntx::{AccInit, AguConfig, HwlConfig, NtxCommand, Opcode, WordMemory, MAX_BOUND};

/// Elementwise nest over `n` elements split into rows of at most the loop
/// bound.
fn nest(n: usize) -> Result<HwlConfig, KernelError> {
    let row = n.clamp(1, MAX_BOUND as usize);
    if n % row != 0 {
        return Err(KernelError::Shape(format!("{n} elements do not split into rows of {row}")));
    }
    Ok(HwlConfig::elementwise(&[row as u32, (n / row) as u32])?)
}

fn unit(base: u32) -> AguConfig {
    AguConfig::with_steps(base as i64, &[4, 4])
}

/// y = max(x, 0).
pub fn relu_forward(x: &[f32]) -> Result<KernelRun, KernelError> {
    let (offs, total) = pack(&[x.len(), x.len()]);
    let mut mem = memory_with(total, &[(offs[0], x)]);
    let cmd = NtxCommand::new(
        Opcode::Relu,
        nest(x.len())?,
        [unit(offs[0]), AguConfig::default(), unit(offs[1])],
        AccInit::Const(0.0),
    );
    let stats = run_commands(&mut mem, &[cmd])?;
    Ok(KernelRun {
        output: mem.read_slice(offs[1], x.len()),
        stats,
    })
}

/// dx = dy where x > 0, else 0.
pub fn relu_backward(x: &[f32], dy: &[f32]) -> Result<KernelRun, KernelError> {
    check_len("gradient", dy.len(), x.len())?;
    let (offs, total) = pack(&[x.len(), x.len(), x.len()]);
    let mut mem = memory_with(total, &[(offs[0], x), (offs[1], dy)]);
    let cmd = NtxCommand::new(
        Opcode::ThreshMask,
        nest(x.len())?,
        [unit(offs[0]), unit(offs[1]), unit(offs[2])],
        AccInit::Const(0.0),
    );
    let stats = run_commands(&mut mem, &[cmd])?;
    Ok(KernelRun {
        output: mem.read_slice(offs[2], x.len()),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_cases() {
        let x = [-1.0, 2.0, 0.0, -0.0];
        assert_eq!(relu_forward(&x).unwrap().output, vec![0.0, 2.0, 0.0, 0.0]);
        let dx = relu_backward(&x, &[7.0, 3.0, 5.0, 5.0]).unwrap().output;
        assert_eq!(dx, vec![0.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn one_command_per_call() {
        let x: Vec<f32> = (0..100).map(|i| i as f32 - 50.0).collect();
        let r = relu_forward(&x).unwrap();
        assert_eq!(r.stats.commands, 1);
        assert_eq!(r.stats.iterations, 100);
    }
}

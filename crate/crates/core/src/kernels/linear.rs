//! Fully connected layer: `y = W·x + b` with `W` stored `[out][in]`.

use super::{check_len, memory_with, pack, run_commands, KernelError, KernelRun, KernelStats};
use crate::ntx::{AccInit, AguConfig, HwlConfig, NtxCommand, Opcode, WordMemory};

fn agu(base: u32, strides: &[i64], hwl: &HwlConfig) -> Result<AguConfig, KernelError> {
    Ok(AguConfig::from_strides(base as i64, strides, hwl)?)
}

/// The bias is copied into the output first and the dot products
/// accumulate onto it, so each output is rounded once.
pub fn linear_forward(x: &[f32], w: &[f32], b: &[f32]) -> Result<KernelRun, KernelError> {
    let (n_in, n_out) = (x.len(), b.len());
    check_len("weights", w.len(), n_in * n_out)?;
    let (offs, total) = pack(&[n_in, n_in * n_out, n_out, n_out]);
    let mut mem = memory_with(total, &[(offs[0], x), (offs[1], w), (offs[2], b)]);
    let copy_hwl = HwlConfig::elementwise(&[n_out as u32])?;
    let copy = NtxCommand::new(
        Opcode::Copy,
        copy_hwl,
        [agu(offs[2], &[4], &copy_hwl)?, AguConfig::default(), agu(offs[3], &[4], &copy_hwl)?],
        AccInit::Const(0.0),
    );
    let hwl = HwlConfig::new(&[n_in as u32, n_out as u32], 1, 1)?;
    let mac = NtxCommand::new(
        Opcode::Mac,
        hwl,
        [
            agu(offs[1], &[4, 4 * n_in as i64], &hwl)?,
            agu(offs[0], &[4, 0], &hwl)?,
            agu(offs[3], &[0, 4], &hwl)?,
        ],
        AccInit::FromOutput,
    );
    let stats = run_commands(&mut mem, &[copy, mac])?;
    Ok(KernelRun {
        output: mem.read_slice(offs[3], n_out),
        stats,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads {
    pub dx: Vec<f32>,
    /// `[out][in]`, outer product of the output gradient and the input.
    pub dw: Vec<f32>,
    pub db: Vec<f32>,
    pub stats: KernelStats,
}

pub fn linear_backward(x: &[f32], w: &[f32], dy: &[f32]) -> Result<LinearGrads, KernelError> {
    let (n_in, n_out) = (x.len(), dy.len());
    check_len("weights", w.len(), n_in * n_out)?;
    let (offs, total) = pack(&[n_in, n_in * n_out, n_out, n_in, n_in * n_out]);
    let mut mem = memory_with(total, &[(offs[0], x), (offs[1], w), (offs[2], dy)]);
    let ni = n_in as i64;
    let dx_hwl = HwlConfig::new(&[n_out as u32, n_in as u32], 1, 1)?;
    let dx = NtxCommand::new(
        Opcode::Mac,
        dx_hwl,
        [
            agu(offs[1], &[4 * ni, 4], &dx_hwl)?,
            agu(offs[2], &[4, 0], &dx_hwl)?,
            agu(offs[3], &[0, 4], &dx_hwl)?,
        ],
        AccInit::Const(0.0),
    );
    let dw_hwl = HwlConfig::elementwise(&[n_in as u32, n_out as u32])?;
    let dw = NtxCommand::new(
        Opcode::Outerp,
        dw_hwl,
        [
            agu(offs[0], &[4, 0], &dw_hwl)?,
            agu(offs[2], &[0, 4], &dw_hwl)?,
            agu(offs[4], &[4, 4 * ni], &dw_hwl)?,
        ],
        AccInit::Const(0.0),
    );
    let stats = run_commands(&mut mem, &[dx, dw])?;
    Ok(LinearGrads {
        dx: mem.read_slice(offs[3], n_in),
        dw: mem.read_slice(offs[4], n_in * n_out),
        db: dy.to_vec(),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_layer() {
        let x = [1.0, 2.0, 3.0];
        let w = [1.0, 0.0, -1.0, 2.0, 2.0, 2.0];
        let y = linear_forward(&x, &w, &[0.5, -1.0]).unwrap();
        assert_eq!(y.output, vec![-1.5, 11.0]);
        let g = linear_backward(&x, &w, &[1.0, 2.0]).unwrap();
        assert_eq!(g.dx, vec![5.0, 4.0, 3.0]);
        assert_eq!(g.dw, vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(g.db, vec![1.0, 2.0]);
    }
}

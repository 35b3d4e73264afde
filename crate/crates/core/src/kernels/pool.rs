//! Max pooling: window maxima and first-occurrence argmax on the NTX, the
//! backward scatter-add on the controller core.

use serde::{Deserialize, Serialize};

use super::{check_len, memory_with, pack, run_commands, KernelError, KernelStats};
use crate::kernels::conv::padded;
use crate::ntx::{AccInit, AguConfig, HwlConfig, NtxCommand, Opcode, WordMemory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub window: usize,
    pub stride: usize,
    pub pad: usize,
}

impl PoolSpec {
    pub fn new(channels: usize, h: usize, w: usize, window: usize, stride: usize) -> Self {
        PoolSpec {
            channels,
            h,
            w,
            window,
            stride,
            pad: 0,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if [self.channels, self.h, self.w, self.window, self.stride].contains(&0)
            || self.window > self.h + 2 * self.pad
            || self.window > self.w + 2 * self.pad
            || self.pad >= self.window
        {
            return Err(KernelError::Shape(format!("invalid pooling {self:?}")));
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.window) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.window) / self.stride + 1
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.h * self.w
    }

    pub fn output_len(&self) -> usize {
        self.channels * self.out_h() * self.out_w()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxPoolOutput {
    pub y: Vec<f32>,
    /// Flat input index of each window's first maximum.
    pub indices: Vec<u32>,
    pub stats: KernelStats,
}

/// Window maxima and their flat input indices. Padding cells hold -inf.
pub fn maxpool_forward(spec: &PoolSpec, x: &[f32]) -> Result<MaxPoolOutput, KernelError> {
    spec.validate()?;
    check_len("input", x.len(), spec.input_len())?;
    let mut xp = padded(x, spec.channels, spec.h, spec.w, spec.pad, spec.pad);
    let (hp, wp) = (spec.h + 2 * spec.pad, spec.w + 2 * spec.pad);
    if spec.pad > 0 {
        for c in 0..spec.channels {
            for r in 0..hp {
                for col in 0..wp {
                    let interior = (spec.pad..spec.pad + spec.h).contains(&r) && (spec.pad..spec.pad + spec.w).contains(&col);
                    if !interior {
                        xp[(c * hp + r) * wp + col] = f32::NEG_INFINITY;
                    }
                }
            }
        }
    }
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let (offs, total) = pack(&[xp.len(), spec.output_len(), spec.output_len()]);
    let mut mem = memory_with(total, &[(offs[0], &xp)]);
    let k = spec.window as u32;
    let hwl = HwlConfig::new(&[k, k, wo as u32, ho as u32], 2, 2)?;
    let (s, wpi) = (spec.stride as i64, wp as i64);
    let mut cmds = Vec::with_capacity(2 * spec.channels);
    for op in [Opcode::Max, Opcode::Argmax] {
        let out = if op == Opcode::Max { offs[1] } else { offs[2] };
        for c in 0..spec.channels {
            let a = AguConfig::from_strides((offs[0] + (4 * c * hp * wp) as u32) as i64, &[4, 4 * wpi, 4 * s, 4 * s * wpi], &hwl)?;
            let o = AguConfig::from_strides((out + (4 * c * ho * wo) as u32) as i64, &[0, 0, 4, 4 * wo as i64], &hwl)?;
            cmds.push(NtxCommand::new(op, hwl, [a, AguConfig::default(), o], AccInit::Const(f32::NEG_INFINITY)));
        }
    }
    let stats = run_commands(&mut mem, &cmds)?;
    let y = mem.read_slice(offs[1], spec.output_len());
    let mut indices = Vec::with_capacity(spec.output_len());
    for c in 0..spec.channels {
        for oy in 0..ho {
            for ox in 0..wo {
                let i = (c * ho + oy) * wo + ox;
                let win = mem.load(offs[2] + 4 * i as u32) as usize;
                let (ky, kx) = (win / spec.window, win % spec.window);
                // first maxima of finite inputs never sit in the padding
                let iy = (oy * spec.stride + ky).saturating_sub(spec.pad).min(spec.h - 1);
                let ix = (ox * spec.stride + kx).saturating_sub(spec.pad).min(spec.w - 1);
                indices.push(((c * spec.h + iy) * spec.w + ix) as u32);
            }
        }
    }
    Ok(MaxPoolOutput { y, indices, stats })
}

/// Scatters each output gradient to its recorded index, adding on
/// collisions.
pub fn maxpool_backward(dy: &[f32], indices: &[u32], input_len: usize) -> Result<Vec<f32>, KernelError> {
    check_len("indices", indices.len(), dy.len())?;
    let mut dx = vec![0.0f32; input_len];
    for (&g, &i) in dy.iter().zip(indices) {
        let slot = dx.get_mut(i as usize).ok_or(KernelError::IndexFault {
            index: i,
            len: input_len,
        })?;
        *slot += g;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two() {
        let spec = PoolSpec::new(1, 2, 2, 2, 2);
        let out = maxpool_forward(&spec, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(out.y, vec![4.0]);
        assert_eq!(out.indices, vec![3]);
        assert_eq!(maxpool_backward(&[5.0], &out.indices, 4).unwrap(), vec![0.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn overlapping_windows_add() {
        // stride-1 windows both find the maximum at index 1
        let spec = PoolSpec::new(1, 2, 3, 2, 1);
        let x = [0.0, 9.0, 0.0, 0.0, 0.0, 0.0];
        let out = maxpool_forward(&spec, &x).unwrap();
        assert_eq!(out.indices, vec![1, 1]);
        let dx = maxpool_backward(&[2.0, 3.0], &out.indices, 6).unwrap();
        assert_eq!(dx[1], 5.0);
    }

    #[test]
    fn ties_pick_first_cell() {
        let spec = PoolSpec::new(1, 4, 4, 2, 2);
        let out = maxpool_forward(&spec, &[1.0; 16]).unwrap();
        assert_eq!(out.indices, vec![0, 2, 8, 10]);
    }

    #[test]
    fn padded_windows_ignore_padding() {
        let spec = PoolSpec {
            pad: 1,
            ..PoolSpec::new(1, 3, 3, 3, 2)
        };
        let x = [-5.0, -4.0, -3.0, -2.0, -1.0, -6.0, -7.0, -8.0, -9.0];
        let out = maxpool_forward(&spec, &x).unwrap();
        assert_eq!(out.y, vec![-1.0, -1.0, -1.0, -1.0]);
        assert!(out.indices.iter().all(|&i| i == 4));
    }

    #[test]
    fn bad_index_faults() {
        assert_eq!(
            maxpool_backward(&[1.0], &[7], 4),
            Err(KernelError::IndexFault { index: 7, len: 4 })
        );
    }

    proptest! {
        #[test]
        fn scatter_conserves_mass(vals in prop::collection::vec(-8i32..8, 36), grads in prop::collection::vec(-8i32..8, 25)) {
            let spec = PoolSpec::new(1, 6, 6, 2, 1);
            let x: Vec<f32> = vals.iter().map(|&v| v as f32).collect();
            let out = maxpool_forward(&spec, &x).unwrap();
            let dy: Vec<f32> = grads.iter().map(|&v| v as f32).collect();
            let dx = maxpool_backward(&dy, &out.indices, 36).unwrap();
            prop_assert_eq!(dx.iter().sum::<f32>(), dy.iter().sum::<f32>());
            for (i, &idx) in out.indices.iter().enumerate() {
                prop_assert_eq!(x[idx as usize], out.y[i]);
            }
        }
    }
}

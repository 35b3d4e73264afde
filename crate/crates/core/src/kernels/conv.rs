//! Convolution forward, backward-data and backward-weight lowerings.
//!
//! Tensors are dense row-major: activations `[C][H][W]`, weights
//! `[C_out][C_in][K_h][K_w]`. Every output element is produced by a single
//! command iteration range, so it is rounded exactly once.

use serde::{Deserialize, Serialize};

use super::strided::PhaseDecomposition;
use super::{check_len, memory_with, pack, run_commands, KernelError, KernelRun};
use crate::ntx::{AccInit, AguConfig, HwlConfig, NtxCommand, Opcode, WordMemory, MAX_BOUND};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvPass {
    Forward,
    BackwardData,
    BackwardWeight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub pass: ConvPass,
}

impl ConvSpec {
    /// Square-kernel forward convolution.
    pub fn new(c_in: usize, h: usize, w: usize, c_out: usize, k: usize, stride: usize, pad: usize) -> Result<Self, KernelError> {
        let s = ConvSpec {
            c_in,
            h,
            w,
            c_out,
            k_h: k,
            k_w: k,
            stride,
            pad_h: pad,
            pad_w: pad,
            pass: ConvPass::Forward,
        };
        s.validate()?;
        Ok(s)
    }

    /// Rectangular kernel and per-axis padding, as `(rows, columns)`.
    pub fn rect(
        c_in: usize,
        h: usize,
        w: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: usize,
        pad: (usize, usize),
    ) -> Result<Self, KernelError> {
        let s = ConvSpec {
            k_h: kernel.0,
            k_w: kernel.1,
            pad_h: pad.0,
            pad_w: pad.1,
            ..ConvSpec::new(c_in, h, w, c_out, 1, stride, 0)?
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_pass(mut self, pass: ConvPass) -> Self {
        self.pass = pass;
        self
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if [self.c_in, self.h, self.w, self.c_out, self.k_h, self.k_w, self.stride]
            .contains(&0)
        {
            return Err(KernelError::Shape(format!("zero-sized dimension in {self:?}")));
        }
        if self.h + 2 * self.pad_h < self.k_h || self.w + 2 * self.pad_w < self.k_w {
            return Err(KernelError::Shape(format!(
                "kernel {}x{} larger than padded input {}x{}",
                self.k_h,
                self.k_w,
                self.h + 2 * self.pad_h,
                self.w + 2 * self.pad_w
            )));
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad_h - self.k_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad_w - self.k_w) / self.stride + 1
    }

    pub fn padded_h(&self) -> usize {
        self.h + 2 * self.pad_h
    }

    pub fn padded_w(&self) -> usize {
        self.w + 2 * self.pad_w
    }

    pub fn input_len(&self) -> usize {
        self.c_in * self.h * self.w
    }

    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.k_h * self.k_w
    }

    pub fn output_len(&self) -> usize {
        self.c_out * self.out_h() * self.out_w()
    }

    pub fn taps(&self) -> usize {
        self.k_h * self.k_w
    }

    /// Multiply-accumulates of the forward pass, padding taps included.
    pub fn forward_macs(&self) -> u64 {
        (self.output_len() * self.c_in * self.taps()) as u64
    }

    /// Iterations issued by the lowering of `pass`.
    pub fn macs(&self, pass: ConvPass) -> u64 {
        match pass {
            ConvPass::Forward | ConvPass::BackwardWeight => self.forward_macs(),
            ConvPass::BackwardData => {
                let d = PhaseDecomposition::new(self.k_h, self.k_w, self.stride);
                d.phases
                    .iter()
                    .map(|p| {
                        let (_, ny) = PhaseDecomposition::rows_for(p.residue.0, self.pad_h, self.stride, self.h);
                        let (_, nx) = PhaseDecomposition::rows_for(p.residue.1, self.pad_w, self.stride, self.w);
                        (p.taps_y.len() * p.taps_x.len() * ny * nx * self.c_out * self.c_in) as u64
                    })
                    .sum()
            }
        }
    }
}

/// Commands and per-command work of the forward lowering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffloadSummary {
    pub offloads: u64,
    pub iterations_per_offload: u64,
}

/// One command per output channel covering the full output plane and the
/// whole reduction.
pub fn conv_offloads(spec: &ConvSpec) -> OffloadSummary {
    OffloadSummary {
        offloads: spec.c_out as u64,
        iterations_per_offload: (spec.out_h() * spec.out_w() * spec.c_in * spec.taps()) as u64,
    }
}

fn bounded(active: &[usize], init: u8, store: u8) -> Result<HwlConfig, KernelError> {
    if let Some(b) = active.iter().find(|&&b| b as u64 > MAX_BOUND as u64) {
        return Err(KernelError::Shape(format!("loop bound {b} exceeds {MAX_BOUND}")));
    }
    let v: Vec<u32> = active.iter().map(|&b| b as u32).collect();
    Ok(HwlConfig::new(&v, init, store)?)
}

fn agu(base: u32, strides: &[i64], hwl: &HwlConfig) -> Result<AguConfig, KernelError> {
    Ok(AguConfig::from_strides(base as i64, strides, hwl)?)
}

/// Forward commands over a zero-padded input at `x`, weights at `w` and
/// the output at `y`.
pub fn forward_commands(spec: &ConvSpec, x: u32, w: u32, y: u32, bias: &[f32]) -> Result<Vec<NtxCommand>, KernelError> {
    spec.validate()?;
    check_len("bias", bias.len(), spec.c_out)?;
    let (hp, wp) = (spec.padded_h() as i64, spec.padded_w() as i64);
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let (kh, kw, s) = (spec.k_h as i64, spec.k_w as i64, spec.stride as i64);
    let hwl = bounded(&[spec.k_w, spec.k_h, spec.c_in, wo, ho], 3, 3)?;
    (0..spec.c_out)
        .map(|j| {
            Ok(NtxCommand::new(
                Opcode::Mac,
                hwl,
                [
                    agu(x, &[4, 4 * wp, 4 * wp * hp, 4 * s, 4 * s * wp], &hwl)?,
                    agu(w + (4 * j * spec.c_in * spec.taps()) as u32, &[4, 4 * kw, 4 * kw * kh, 0, 0], &hwl)?,
                    agu(y + (4 * j * ho * wo) as u32, &[0, 0, 0, 4, 4 * wo as i64], &hwl)?,
                ],
                AccInit::Const(bias[j]),
            ))
        })
        .collect()
}

pub(crate) fn padded(x: &[f32], channels: usize, h: usize, w: usize, pad_h: usize, pad_w: usize) -> Vec<f32> {
    let (hp, wp) = (h + 2 * pad_h, w + 2 * pad_w);
    let mut out = vec![0.0; channels * hp * wp];
    for c in 0..channels {
        for r in 0..h {
            let src = &x[(c * h + r) * w..(c * h + r + 1) * w];
            let dst = (c * hp + r + pad_h) * wp + pad_w;
            out[dst..dst + w].copy_from_slice(src);
        }
    }
    out
}

/// y = conv(x, w) + bias on one co-processor.
pub fn conv_forward(spec: &ConvSpec, x: &[f32], w: &[f32], bias: &[f32]) -> Result<KernelRun, KernelError> {
    spec.validate()?;
    check_len("input", x.len(), spec.input_len())?;
    check_len("weights", w.len(), spec.weight_len())?;
    let xp = padded(x, spec.c_in, spec.h, spec.w, spec.pad_h, spec.pad_w);
    let (offs, total) = pack(&[xp.len(), w.len(), spec.output_len()]);
    let mut mem = memory_with(total, &[(offs[0], &xp), (offs[1], w)]);
    let cmds = forward_commands(spec, offs[0], offs[1], offs[2], bias)?;
    let stats = run_commands(&mut mem, &cmds)?;
    Ok(KernelRun {
        output: mem.read_slice(offs[2], spec.output_len()),
        stats,
    })
}

/// Margin of zeros around each gradient plane so that every phase reads
/// in bounds.
fn dy_margin(spec: &ConvSpec) -> usize {
    spec.k_h.max(spec.k_w) + spec.pad_h.max(spec.pad_w)
}

/// Backward-data commands: one per (input channel, stride phase). The
/// gradient at `dy` carries a zero margin of `dy_margin` on every side.
pub fn backward_data_commands(spec: &ConvSpec, dy: u32, w: u32, dx: u32) -> Result<Vec<NtxCommand>, KernelError> {
    spec.validate()?;
    let m = dy_margin(spec);
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let (hq, wq) = ((ho + 2 * m) as i64, (wo + 2 * m) as i64);
    let s = spec.stride;
    let (kh, kw) = (spec.k_h as i64, spec.k_w as i64);
    let dec = PhaseDecomposition::new(spec.k_h, spec.k_w, s);
    let mut cmds = Vec::new();
    for c in 0..spec.c_in {
        for p in &dec.phases {
            let (iy0, ny) = PhaseDecomposition::rows_for(p.residue.0, spec.pad_h, s, spec.h);
            let (ix0, nx) = PhaseDecomposition::rows_for(p.residue.1, spec.pad_w, s, spec.w);
            if ny == 0 || nx == 0 {
                continue;
            }
            let out_base = dx + (4 * (c * spec.h * spec.w + iy0 * spec.w + ix0)) as u32;
            let out_row = 4 * (s * spec.w) as i64;
            if p.is_empty() {
                // no tap reaches these rows: the gradient is zero
                let hwl = bounded(&[nx, ny], 0, 0)?;
                cmds.push(NtxCommand::new(
                    Opcode::Memset,
                    hwl,
                    [AguConfig::default(), AguConfig::default(), agu(out_base, &[4 * s as i64, out_row], &hwl)?],
                    AccInit::Const(0.0),
                ));
                continue;
            }
            let (my, mx) = p.kernel_size();
            let qy0 = (iy0 + spec.pad_h - p.residue.0) / s;
            let qx0 = (ix0 + spec.pad_w - p.residue.1) / s;
            let hwl = bounded(&[mx, my, spec.c_out, nx, ny], 3, 3)?;
            let dy_base = dy + (4 * ((qy0 + m) * wq as usize + qx0 + m)) as u32;
            let w_base = w + (4 * (c * spec.taps() + p.residue.0 * spec.k_w + p.residue.1)) as u32;
            let si = s as i64;
            cmds.push(NtxCommand::new(
                Opcode::Mac,
                hwl,
                [
                    agu(dy_base, &[-4, -4 * wq, 4 * hq * wq, 4, 4 * wq], &hwl)?,
                    agu(w_base, &[4 * si, 4 * si * kw, 4 * kw * kh * spec.c_in as i64, 0, 0], &hwl)?,
                    agu(out_base, &[0, 0, 0, 4 * si, out_row], &hwl)?,
                ],
                AccInit::Const(0.0),
            ));
        }
    }
    Ok(cmds)
}

/// Input gradient: the output gradient convolved with the flipped kernel,
/// with the stride handled by phase decomposition.
pub fn conv_backward_data(spec: &ConvSpec, dy: &[f32], w: &[f32]) -> Result<KernelRun, KernelError> {
    spec.validate()?;
    check_len("output gradient", dy.len(), spec.output_len())?;
    check_len("weights", w.len(), spec.weight_len())?;
    let m = dy_margin(spec);
    let dyp = padded(dy, spec.c_out, spec.out_h(), spec.out_w(), m, m);
    let (offs, total) = pack(&[dyp.len(), w.len(), spec.input_len()]);
    let mut mem = memory_with(total, &[(offs[0], &dyp), (offs[1], w)]);
    let cmds = backward_data_commands(spec, offs[0], offs[1], offs[2])?;
    let stats = run_commands(&mut mem, &cmds)?;
    Ok(KernelRun {
        output: mem.read_slice(offs[2], spec.input_len()),
        stats,
    })
}

/// Backward-weight commands: one per output channel, reducing over the
/// output plane. The input at `x` is zero-padded.
pub fn backward_weight_commands(spec: &ConvSpec, x: u32, dy: u32, dw: u32) -> Result<Vec<NtxCommand>, KernelError> {
    spec.validate()?;
    let (hp, wp) = (spec.padded_h() as i64, spec.padded_w() as i64);
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let (kh, kw, s) = (spec.k_h as i64, spec.k_w as i64, spec.stride as i64);
    let hwl = bounded(&[wo, ho, spec.k_w, spec.k_h, spec.c_in], 2, 2)?;
    (0..spec.c_out)
        .map(|j| {
            Ok(NtxCommand::new(
                Opcode::Mac,
                hwl,
                [
                    agu(x, &[4 * s, 4 * s * wp, 4, 4 * wp, 4 * hp * wp], &hwl)?,
                    agu(dy + (4 * j * ho * wo) as u32, &[4, 4 * wo as i64, 0, 0, 0], &hwl)?,
                    agu(dw + (4 * j * spec.c_in * spec.taps()) as u32, &[0, 0, 4, 4 * kw, 4 * kw * kh], &hwl)?,
                ],
                AccInit::Const(0.0),
            ))
        })
        .collect()
}

/// Weight gradient: the input correlated with the output gradient.
pub fn conv_backward_weight(spec: &ConvSpec, x: &[f32], dy: &[f32]) -> Result<KernelRun, KernelError> {
    spec.validate()?;
    check_len("input", x.len(), spec.input_len())?;
    check_len("output gradient", dy.len(), spec.output_len())?;
    let xp = padded(x, spec.c_in, spec.h, spec.w, spec.pad_h, spec.pad_w);
    let (offs, total) = pack(&[xp.len(), dy.len(), spec.weight_len()]);
    let mut mem = memory_with(total, &[(offs[0], &xp), (offs[1], dy)]);
    let cmds = backward_weight_commands(spec, offs[0], offs[1], offs[2])?;
    let stats = run_commands(&mut mem, &cmds)?;
    Ok(KernelRun {
        output: mem.read_slice(offs[2], spec.weight_len()),
        stats,
    })
}

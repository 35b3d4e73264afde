//! Direct reference implementations, written from the defining sums rather
//! than from the lowerings.

use super::exact::ExactSum;
use crate::kernels::{ConvSpec, PoolSpec};

fn x_at(spec: &ConvSpec, x: &[f32], c: usize, iy: i64, ix: i64) -> Option<f32> {
    if iy < 0 || ix < 0 || iy as usize >= spec.h || ix as usize >= spec.w {
        return None;
    }
    Some(x[(c * spec.h + iy as usize) * spec.w + ix as usize])
}

fn w_at(spec: &ConvSpec, w: &[f32], j: usize, c: usize, ky: usize, kx: usize) -> f32 {
    w[((j * spec.c_in + c) * spec.k_h + ky) * spec.k_w + kx]
}

/// Forward convolution, each output rounded once from the exact sum.
pub fn conv_forward_exact(spec: &ConvSpec, x: &[f32], w: &[f32], bias: &[f32]) -> Vec<f32> {
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let mut y = Vec::with_capacity(spec.output_len());
    for j in 0..spec.c_out {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = ExactSum::new(bias[j]);
                for c in 0..spec.c_in {
                    for ky in 0..spec.k_h {
                        for kx in 0..spec.k_w {
                            let iy = (oy * spec.stride + ky) as i64 - spec.pad_h as i64;
                            let ix = (ox * spec.stride + kx) as i64 - spec.pad_w as i64;
                            if let Some(v) = x_at(spec, x, c, iy, ix) {
                                s.add_product(v, w_at(spec, w, j, c, ky, kx));
                            }
                        }
                    }
                }
                y.push(s.to_f32());
            }
        }
    }
    y
}

/// Forward convolution in double precision.
pub fn conv_forward_f64(spec: &ConvSpec, x: &[f64], w: &[f64], bias: &[f64]) -> Vec<f64> {
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let mut y = Vec::with_capacity(spec.output_len());
    for j in 0..spec.c_out {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = bias[j];
                for c in 0..spec.c_in {
                    for ky in 0..spec.k_h {
                        for kx in 0..spec.k_w {
                            let iy = (oy * spec.stride + ky) as i64 - spec.pad_h as i64;
                            let ix = (ox * spec.stride + kx) as i64 - spec.pad_w as i64;
                            if iy >= 0 && ix >= 0 && (iy as usize) < spec.h && (ix as usize) < spec.w {
                                s += x[(c * spec.h + iy as usize) * spec.w + ix as usize]
                                    * w[((j * spec.c_in + c) * spec.k_h + ky) * spec.k_w + kx];
                            }
                        }
                    }
                }
                y.push(s);
            }
        }
    }
    y
}

/// Forward convolution accumulated left to right in f32, one rounding per
/// product and per addition.
pub fn conv_forward_sequential_f32(spec: &ConvSpec, x: &[f32], w: &[f32], bias: &[f32]) -> Vec<f32> {
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let mut y = Vec::with_capacity(spec.output_len());
    for j in 0..spec.c_out {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = bias[j];
                for c in 0..spec.c_in {
                    for ky in 0..spec.k_h {
                        for kx in 0..spec.k_w {
                            let iy = (oy * spec.stride + ky) as i64 - spec.pad_h as i64;
                            let ix = (ox * spec.stride + kx) as i64 - spec.pad_w as i64;
                            if let Some(v) = x_at(spec, x, c, iy, ix) {
                                s += v * w_at(spec, w, j, c, ky, kx);
                            }
                        }
                    }
                }
                y.push(s);
            }
        }
    }
    y
}

/// Input gradient via the zero-stuffed formulation: the output gradient
/// is dilated by the stride, then correlated with the flipped kernel.
pub fn conv_backward_data_stuffed(spec: &ConvSpec, dy: &[f32], w: &[f32]) -> Vec<f32> {
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let s = spec.stride;
    // dilated gradient on the padded input grid
    let (hz, wz) = (spec.padded_h(), spec.padded_w());
    let mut z = vec![0.0f32; spec.c_out * hz * wz];
    for j in 0..spec.c_out {
        for oy in 0..ho {
            for ox in 0..wo {
                z[(j * hz + oy * s) * wz + ox * s] = dy[(j * ho + oy) * wo + ox];
            }
        }
    }
    let mut dx = Vec::with_capacity(spec.input_len());
    for c in 0..spec.c_in {
        for iy in 0..spec.h {
            for ix in 0..spec.w {
                let mut acc = ExactSum::new(0.0);
                for j in 0..spec.c_out {
                    for ky in 0..spec.k_h {
                        for kx in 0..spec.k_w {
                            let zy = (iy + spec.pad_h) as i64 - ky as i64;
                            let zx = (ix + spec.pad_w) as i64 - kx as i64;
                            if zy >= 0 && zx >= 0 && (zy as usize) < hz && (zx as usize) < wz {
                                acc.add_product(z[(j * hz + zy as usize) * wz + zx as usize], w_at(spec, w, j, c, ky, kx));
                            }
                        }
                    }
                }
                dx.push(acc.to_f32());
            }
        }
    }
    dx
}

/// Weight gradient, each element rounded once.
pub fn conv_backward_weight_exact(spec: &ConvSpec, x: &[f32], dy: &[f32]) -> Vec<f32> {
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let mut dw = Vec::with_capacity(spec.weight_len());
    for j in 0..spec.c_out {
        for c in 0..spec.c_in {
            for ky in 0..spec.k_h {
                for kx in 0..spec.k_w {
                    let mut acc = ExactSum::new(0.0);
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let iy = (oy * spec.stride + ky) as i64 - spec.pad_h as i64;
                            let ix = (ox * spec.stride + kx) as i64 - spec.pad_w as i64;
                            if let Some(v) = x_at(spec, x, c, iy, ix) {
                                acc.add_product(v, dy[(j * ho + oy) * wo + ox]);
                            }
                        }
                    }
                    dw.push(acc.to_f32());
                }
            }
        }
    }
    dw
}

/// Window maxima with first-occurrence flat indices.
pub fn maxpool_reference(spec: &PoolSpec, x: &[f32]) -> (Vec<f32>, Vec<u32>) {
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let mut y = Vec::new();
    let mut idx = Vec::new();
    for c in 0..spec.channels {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = (f32::NEG_INFINITY, u32::MAX);
                for ky in 0..spec.window {
                    for kx in 0..spec.window {
                        let iy = (oy * spec.stride + ky) as i64 - spec.pad as i64;
                        let ix = (ox * spec.stride + kx) as i64 - spec.pad as i64;
                        if iy < 0 || ix < 0 || iy as usize >= spec.h || ix as usize >= spec.w {
                            continue;
                        }
                        let i = (c * spec.h + iy as usize) * spec.w + ix as usize;
                        if x[i] > best.0 || best.1 == u32::MAX {
                            best = (x[i], i as u32);
                        }
                    }
                }
                y.push(best.0);
                idx.push(best.1);
            }
        }
    }
    (y, idx)
}

/// Forward convolution where input channels are consumed in chunks and the
/// running output is rounded after each chunk.
pub fn conv_forward_chunked_exact(spec: &ConvSpec, x: &[f32], w: &[f32], bias: &[f32], chunk: usize) -> Vec<f32> {
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let mut y = Vec::with_capacity(spec.output_len());
    for j in 0..spec.c_out {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut run = bias[j];
                for c0 in (0..spec.c_in).step_by(chunk.max(1)) {
                    let mut s = ExactSum::new(run);
                    for c in c0..(c0 + chunk).min(spec.c_in) {
                        for ky in 0..spec.k_h {
                            for kx in 0..spec.k_w {
                                let iy = (oy * spec.stride + ky) as i64 - spec.pad_h as i64;
                                let ix = (ox * spec.stride + kx) as i64 - spec.pad_w as i64;
                                if let Some(v) = x_at(spec, x, c, iy, ix) {
                                    s.add_product(v, w_at(spec, w, j, c, ky, kx));
                                }
                            }
                        }
                    }
                    run = s.to_f32();
                }
                y.push(run);
            }
        }
    }
    y
}

/// Max pooling in double precision, padding ignored.
pub fn maxpool_f64(spec: &PoolSpec, x: &[f64]) -> Vec<f64> {
    let (ho, wo) = (spec.out_h(), spec.out_w());
    let mut y = Vec::new();
    for c in 0..spec.channels {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                for ky in 0..spec.window {
                    for kx in 0..spec.window {
                        let iy = (oy * spec.stride + ky) as i64 - spec.pad as i64;
                        let ix = (ox * spec.stride + kx) as i64 - spec.pad as i64;
                        if iy >= 0 && ix >= 0 && (iy as usize) < spec.h && (ix as usize) < spec.w {
                            best = best.max(x[(c * spec.h + iy as usize) * spec.w + ix as usize]);
                        }
                    }
                }
                y.push(best);
            }
        }
    }
    y
}

pub fn linear_f64(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(j, &bj)| bj + (0..n).map(|i| w[j * n + i] * x[i]).sum::<f64>())
        .collect()
}

/// Optimizer state in double precision.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerF64 {
    pub theta: Vec<f64>,
    pub velocity: Vec<f64>,
    pub sq_grad: Vec<f64>,
    pub moment1: Vec<f64>,
    pub moment2: Vec<f64>,
    pub step: i32,
}

impl OptimizerF64 {
    pub fn new(theta: &[f32]) -> Self {
        let t: Vec<f64> = theta.iter().map(|&v| v as f64).collect();
        let z = vec![0.0; t.len()];
        OptimizerF64 {
            theta: t,
            velocity: z.clone(),
            sq_grad: z.clone(),
            moment1: z.clone(),
            moment2: z,
            step: 0,
        }
    }

    pub fn step(&mut self, kind: crate::kernels::OptimizerKind, h: &crate::kernels::Hyper, g: &[f32]) {
        use crate::kernels::OptimizerKind::*;
        let lr = h.learning_rate as f64;
        if kind == Adam {
            self.step += 1;
        }
        for (i, &gf) in g.iter().enumerate() {
            let g = gf as f64;
            match kind {
                Sgd => self.theta[i] -= lr * g,
                Momentum => {
                    self.velocity[i] = h.momentum as f64 * self.velocity[i] - lr * g;
                    self.theta[i] += self.velocity[i];
                }
                Rmsprop => {
                    let d = h.decay as f64;
                    self.sq_grad[i] = d * self.sq_grad[i] + (1.0 - d) * g * g;
                    self.theta[i] -= lr * g / (self.sq_grad[i] + h.delta as f64).sqrt();
                }
                Adam => {
                    let (b1, b2) = (h.beta1 as f64, h.beta2 as f64);
                    self.moment1[i] = b1 * self.moment1[i] + (1.0 - b1) * g;
                    self.moment2[i] = b2 * self.moment2[i] + (1.0 - b2) * g * g;
                    let m = self.moment1[i] / (1.0 - b1.powi(self.step));
                    let v = self.moment2[i] / (1.0 - b2.powi(self.step));
                    self.theta[i] -= lr * m / (v.sqrt() + h.delta as f64);
                }
            }
        }
    }
}

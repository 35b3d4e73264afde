//! Tiling a forward convolution into a double-buffered cluster schedule.
//!
//! The output is split into groups of output channels, full-width row
//! tiles and input-channel chunks. Phases run group-major, then row tile,
//! then chunk. Inputs alternate buffers by phase, outputs by row tile; the
//! weights of a group stay resident while the group runs.

use serde::{Deserialize, Serialize};

use super::conv::ConvSpec;
use super::{check_len, KernelError};
use crate::cluster::{
    Cluster, ClusterConfig, ClusterTrace, DmaDescriptor, Dram, PadRegion, Phase, ScheduleVolume, TileSchedule,
    TCDM_BYTES,
};
use crate::ntx::{AccInit, AguConfig, HwlConfig, NtxCommand, Opcode, WordMemory};

const NTX_PER_CLUSTER: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub out_channels: usize,
    pub rows: usize,
    pub in_channels: usize,
}

/// Scratchpad bytes of one buffer of each kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileFootprint {
    pub weights: usize,
    pub input: usize,
    pub output: usize,
}

impl TileFootprint {
    /// Double-buffered activations plus resident weights.
    pub fn total(&self) -> usize {
        self.weights + 2 * self.input + 2 * self.output
    }
}

impl TilePlan {
    pub fn input_rows(&self, spec: &ConvSpec) -> usize {
        (self.rows - 1) * spec.stride + spec.k_h
    }

    pub fn footprint(&self, spec: &ConvSpec) -> TileFootprint {
        TileFootprint {
            weights: 4 * self.out_channels * spec.c_in * spec.taps(),
            input: 4 * self.in_channels * self.input_rows(spec) * spec.padded_w(),
            output: 4 * self.out_channels * self.rows * spec.out_w(),
        }
    }

    pub fn groups(&self, spec: &ConvSpec) -> usize {
        spec.c_out.div_ceil(self.out_channels)
    }

    pub fn row_tiles(&self, spec: &ConvSpec) -> usize {
        spec.out_h().div_ceil(self.rows)
    }

    pub fn chunks(&self, spec: &ConvSpec) -> usize {
        spec.c_in.div_ceil(self.in_channels)
    }

    fn validate(&self, spec: &ConvSpec) -> Result<(), KernelError> {
        let ok = (1..=spec.c_out).contains(&self.out_channels)
            && (1..=spec.out_h()).contains(&self.rows)
            && (1..=spec.c_in).contains(&self.in_channels);
        if !ok {
            return Err(KernelError::Shape(format!("tile {self:?} outside {spec:?}")));
        }
        Ok(())
    }
}

fn halvings(n: usize) -> Vec<usize> {
    let mut v = vec![n];
    while *v.last().unwrap() > 1 {
        v.push(v.last().unwrap().div_ceil(2));
    }
    v
}

/// Largest row tile for the most output channels per group (up to one per
/// co-processor), preferring the whole input depth per chunk.
pub fn plan_conv_tiles(spec: &ConvSpec, budget: usize) -> Result<TilePlan, KernelError> {
    spec.validate()?;
    for out_channels in halvings(spec.c_out.min(NTX_PER_CLUSTER)) {
        for in_channels in halvings(spec.c_in) {
            let fits = |rows| {
                TilePlan {
                    out_channels,
                    rows,
                    in_channels,
                }
                .footprint(spec)
                .total()
                    <= budget
            };
            if !fits(1) {
                continue;
            }
            // footprint grows with rows
            let (mut lo, mut hi) = (1, spec.out_h());
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                if fits(mid) {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            return Ok(TilePlan {
                out_channels,
                rows: lo,
                in_channels,
            });
        }
    }
    let smallest = TilePlan {
        out_channels: 1,
        rows: 1,
        in_channels: 1,
    };
    Err(KernelError::TileTooLarge {
        needed: smallest.footprint(spec).total(),
        budget,
        suggestion: None,
    })
}

/// External-memory placement of the layer's tensors (unpadded).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvDram {
    pub x: u32,
    pub w: u32,
    pub y: u32,
}

struct Layout {
    w_buf: u32,
    in_buf: [u32; 2],
    out_buf: [u32; 2],
}

/// Builds the tile schedule for a forward convolution. Chunks after the
/// first accumulate onto the stored partial output, so outputs are rounded
/// once per chunk.
pub fn lower_conv(spec: &ConvSpec, plan: &TilePlan, dram: ConvDram, bias: &[f32]) -> Result<TileSchedule, KernelError> {
    spec.validate()?;
    plan.validate(spec)?;
    check_len("bias", bias.len(), spec.c_out)?;
    let fp = plan.footprint(spec);
    if fp.total() > TCDM_BYTES {
        return Err(KernelError::TileTooLarge {
            needed: fp.total(),
            budget: TCDM_BYTES,
            suggestion: plan_conv_tiles(spec, TCDM_BYTES).ok(),
        });
    }
    let lay = Layout {
        w_buf: 0,
        in_buf: [fp.weights as u32, (fp.weights + fp.input) as u32],
        out_buf: [
            (fp.weights + 2 * fp.input) as u32,
            (fp.weights + 2 * fp.input + fp.output) as u32,
        ],
    };

    let (groups, tiles, chunks) = (plan.groups(spec), plan.row_tiles(spec), plan.chunks(spec));
    let mut steps = Vec::with_capacity(groups * tiles * chunks);
    for g in 0..groups {
        for t in 0..tiles {
            for k in 0..chunks {
                steps.push((g, t, k));
            }
        }
    }

    let mut phases: Vec<Phase> = Vec::with_capacity(steps.len());
    for (p, &(g, t, k)) in steps.iter().enumerate() {
        let tile = g * tiles + t;
        let mut phase = Phase::default();
        if p == 0 {
            phase.head.extend(input_dma(spec, plan, dram, &lay, g, t, k, 0));
        }
        if t == 0 && k == 0 {
            phase.head.push(weight_dma(spec, plan, dram, &lay, g));
        }
        phase.zero_pad = pad_regions(spec, plan, &lay, t, k, p % 2);
        let c0 = k * plan.in_channels;
        let ci = plan.in_channels.min(spec.c_in - c0);
        let oy0 = t * plan.rows;
        let rows = plan.rows.min(spec.out_h() - oy0);
        let co = plan.out_channels.min(spec.c_out - g * plan.out_channels);
        for jl in 0..co {
            let j = g * plan.out_channels + jl;
            let init = if k == 0 { AccInit::Const(bias[j]) } else { AccInit::FromOutput };
            phase.commands.push((
                jl % NTX_PER_CLUSTER,
                tile_command(spec, plan, &lay, p % 2, tile % 2, jl, c0, ci, rows, init)?,
            ));
        }
        if let Some(&(ng, nt, nk)) = steps.get(p + 1) {
            phase.parallel.extend(input_dma(spec, plan, dram, &lay, ng, nt, nk, (p + 1) % 2));
        }
        if p > 0 {
            let (pg, pt, _) = steps[p - 1];
            if (pg, pt) != (g, t) {
                phase.parallel.extend(output_dma(spec, plan, dram, &lay, pg, pt, (pg * tiles + pt) % 2));
            }
        }
        if p + 1 == steps.len() {
            phase.tail.extend(output_dma(spec, plan, dram, &lay, g, t, tile % 2));
        }
        phases.push(phase);
    }
    Ok(TileSchedule { phases })
}

/// Padded input rows `[first, end)` of tile `t` that hold real data.
fn valid_rows(spec: &ConvSpec, plan: &TilePlan, t: usize) -> (usize, usize, usize) {
    let rp0 = t * plan.rows * spec.stride;
    let rows = plan.rows.min(spec.out_h() - t * plan.rows);
    let span = (rows - 1) * spec.stride + spec.k_h;
    let first = rp0.max(spec.pad_h);
    let end = (rp0 + span).min(spec.h + spec.pad_h);
    (rp0, first, end.max(first))
}

#[allow(clippy::too_many_arguments)]
fn input_dma(spec: &ConvSpec, plan: &TilePlan, dram: ConvDram, lay: &Layout, _g: usize, t: usize, k: usize, buf: usize) -> Vec<DmaDescriptor> {
    let (rp0, first, end) = valid_rows(spec, plan, t);
    if end == first {
        return Vec::new();
    }
    let wp = spec.padded_w() as u32;
    let plane = (plan.input_rows(spec) * spec.padded_w()) as u32;
    let c0 = k * plan.in_channels;
    let ci = plan.in_channels.min(spec.c_in - c0);
    (0..ci)
        .map(|cl| {
            let c = c0 + cl;
            DmaDescriptor::to_tcdm(
                dram.x + (4 * (c * spec.h * spec.w + (first - spec.pad_h) * spec.w)) as u32,
                4 * spec.w as u32,
                lay.in_buf[buf] + 4 * (cl as u32 * plane + (first - rp0) as u32 * wp + spec.pad_w as u32),
                4 * wp,
                4 * spec.w as u32,
                (end - first) as u32,
            )
        })
        .collect()
}

fn pad_regions(spec: &ConvSpec, plan: &TilePlan, lay: &Layout, t: usize, k: usize, buf: usize) -> Vec<PadRegion> {
    let (rp0, first, end) = valid_rows(spec, plan, t);
    let rows = plan.rows.min(spec.out_h() - t * plan.rows);
    let span = (rows - 1) * spec.stride + spec.k_h;
    let (top, bottom) = if end > first { (first - rp0, rp0 + span - end) } else { (span, 0) };
    if spec.pad_w == 0 && top == 0 && bottom == 0 {
        return Vec::new();
    }
    let wp = spec.padded_w() as u32;
    let plane = (plan.input_rows(spec) * spec.padded_w()) as u32;
    let c0 = k * plan.in_channels;
    let ci = plan.in_channels.min(spec.c_in - c0);
    (0..ci)
        .map(|cl| PadRegion {
            base: lay.in_buf[buf] + 4 * cl as u32 * plane,
            rows: span as u32,
            cols: wp,
            row_stride: 4 * wp,
            top: top as u32,
            bottom: bottom as u32,
            left: spec.pad_w as u32,
            right: spec.pad_w as u32,
        })
        .collect()
}

fn weight_dma(spec: &ConvSpec, plan: &TilePlan, dram: ConvDram, lay: &Layout, g: usize) -> DmaDescriptor {
    let row = (4 * spec.c_in * spec.taps()) as u32;
    let co = plan.out_channels.min(spec.c_out - g * plan.out_channels);
    DmaDescriptor::to_tcdm(
        dram.w + (g * plan.out_channels) as u32 * row,
        row,
        lay.w_buf,
        row,
        row,
        co as u32,
    )
}

fn output_dma(spec: &ConvSpec, plan: &TilePlan, dram: ConvDram, lay: &Layout, g: usize, t: usize, buf: usize) -> Vec<DmaDescriptor> {
    let wo = spec.out_w();
    let oy0 = t * plan.rows;
    let rows = plan.rows.min(spec.out_h() - oy0);
    let co = plan.out_channels.min(spec.c_out - g * plan.out_channels);
    (0..co)
        .map(|jl| {
            let j = g * plan.out_channels + jl;
            DmaDescriptor::to_dram(
                lay.out_buf[buf] + (4 * jl * plan.rows * wo) as u32,
                4 * wo as u32,
                dram.y + (4 * (j * spec.out_h() * wo + oy0 * wo)) as u32,
                4 * wo as u32,
                4 * wo as u32,
                rows as u32,
            )
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn tile_command(
    spec: &ConvSpec,
    plan: &TilePlan,
    lay: &Layout,
    in_buf: usize,
    out_buf: usize,
    jl: usize,
    c0: usize,
    ci: usize,
    rows: usize,
    init: AccInit,
) -> Result<NtxCommand, KernelError> {
    let wp = spec.padded_w() as i64;
    let rows_in = plan.input_rows(spec) as i64;
    let wo = spec.out_w();
    let (kh, kw, s) = (spec.k_h as i64, spec.k_w as i64, spec.stride as i64);
    let bounds = [spec.k_w as u32, spec.k_h as u32, ci as u32, wo as u32, rows as u32];
    let hwl = HwlConfig::new(&bounds, 3, 3)?;
    let agu = |base: u32, strides: &[i64]| AguConfig::from_strides(base as i64, strides, &hwl);
    Ok(NtxCommand::new(
        Opcode::Mac,
        hwl,
        [
            agu(lay.in_buf[in_buf], &[4, 4 * wp, 4 * wp * rows_in, 4 * s, 4 * s * wp])?,
            agu(
                lay.w_buf + (4 * (jl * spec.c_in + c0) * spec.taps()) as u32,
                &[4, 4 * kw, 4 * kw * kh, 0, 0],
            )?,
            agu(lay.out_buf[out_buf] + (4 * jl * plan.rows * wo) as u32, &[0, 0, 0, 4, 4 * wo as i64])?,
        ],
        init,
    ))
}

/// Traffic and work of the tiled forward convolution, counted without
/// building the schedule.
pub fn conv_traffic(spec: &ConvSpec, plan: &TilePlan) -> Result<ScheduleVolume, KernelError> {
    spec.validate()?;
    plan.validate(spec)?;
    let (groups, tiles, chunks) = (plan.groups(spec), plan.row_tiles(spec), plan.chunks(spec));
    let row_bytes = 4 * spec.w as u64;
    let loaded_rows = |t| {
        let (_, first, end) = valid_rows(spec, plan, t);
        (end - first) as u64
    };
    let all_rows: u64 = (0..tiles).map(loaded_rows).sum();
    let inputs = groups as u64 * all_rows * row_bytes * spec.c_in as u64;
    let first_input = loaded_rows(0) * row_bytes * plan.in_channels as u64;
    let outputs = 4 * spec.output_len() as u64;
    let last_rows = spec.out_h() - (tiles - 1) * plan.rows;
    let last_co = spec.c_out - (groups - 1) * plan.out_channels;
    let last_output = 4 * (last_co * last_rows * spec.out_w()) as u64;
    Ok(ScheduleVolume {
        iterations: spec.forward_macs(),
        commands: (spec.c_out * tiles * chunks) as u64,
        head_bytes: first_input + 4 * spec.weight_len() as u64,
        parallel_bytes: inputs - first_input + outputs - last_output,
        tail_bytes: last_output,
    })
}

/// Runs a tiled forward convolution on a simulated cluster.
pub fn run_conv_tiled(
    spec: &ConvSpec,
    plan: &TilePlan,
    x: &[f32],
    w: &[f32],
    bias: &[f32],
) -> Result<(Vec<f32>, ClusterTrace), KernelError> {
    check_len("input", x.len(), spec.input_len())?;
    check_len("weights", w.len(), spec.weight_len())?;
    let mut dram = Dram::new(0);
    let dx = dram.push(x);
    let dw = dram.push(w);
    let dy = dram.reserve(spec.output_len());
    let ts = lower_conv(spec, plan, ConvDram { x: dx, w: dw, y: dy }, bias)?;
    let mut cluster = Cluster::new(ClusterConfig::default(), dram);
    let trace = cluster.run_tile_schedule(&ts)?;
    Ok((cluster.dram.read_slice(dy, spec.output_len()), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::conv_forward;

    fn data(n: usize, seed: usize) -> Vec<f32> {
        (0..n).map(|i| ((i * 7 + seed * 13) % 11) as f32 - 5.0).collect()
    }

    #[test]
    fn reference_tile_is_one_phase() {
        let spec = ConvSpec::new(2, 10, 24, 8, 3, 1, 0).unwrap();
        let plan = plan_conv_tiles(&spec, TCDM_BYTES).unwrap();
        assert_eq!(
            plan,
            TilePlan {
                out_channels: 8,
                rows: 8,
                in_channels: 2
            }
        );
        let v = conv_traffic(&spec, &plan).unwrap();
        assert_eq!(v.iterations, 25_344);
        assert_eq!((v.head_bytes, v.parallel_bytes, v.tail_bytes), (2496, 0, 5632));
    }

    #[test]
    fn tiled_equals_untiled_with_padding_and_stride() {
        for (spec, plan) in [
            (
                ConvSpec::new(3, 11, 9, 5, 3, 1, 1).unwrap(),
                TilePlan {
                    out_channels: 2,
                    rows: 4,
                    in_channels: 3,
                },
            ),
            (
                ConvSpec::new(4, 13, 10, 3, 5, 2, 2).unwrap(),
                TilePlan {
                    out_channels: 3,
                    rows: 2,
                    in_channels: 2,
                },
            ),
        ] {
            let x = data(spec.input_len(), 1);
            let w = data(spec.weight_len(), 2);
            let b = data(spec.c_out, 3);
            let (got, trace) = run_conv_tiled(&spec, &plan, &x, &w, &b).unwrap();
            let want = conv_forward(&spec, &x, &w, &b).unwrap().output;
            assert_eq!(got, want);
            assert_eq!(trace.ntx_iterations, spec.forward_macs());
        }
    }

    #[test]
    fn oversized_tile_suggests_split() {
        let spec = ConvSpec::new(256, 56, 56, 256, 3, 1, 1).unwrap();
        let plan = TilePlan {
            out_channels: 8,
            rows: 56,
            in_channels: 256,
        };
        match lower_conv(&spec, &plan, ConvDram::default(), &vec![0.0; 256]) {
            Err(KernelError::TileTooLarge { suggestion: Some(s), .. }) => {
                assert!(s.footprint(&spec).total() <= TCDM_BYTES)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn counted_traffic_matches_schedule() {
        for (c_in, h, w, c_out, k, s, pad, budget) in [
            (3, 20, 17, 10, 3, 1, 1, 6000),
            (16, 9, 9, 5, 1, 2, 0, 1500),
            (6, 14, 11, 12, 5, 2, 2, 9000),
            (2, 10, 24, 8, 3, 1, 0, TCDM_BYTES),
        ] {
            let spec = ConvSpec::new(c_in, h, w, c_out, k, s, pad).unwrap();
            let plan = plan_conv_tiles(&spec, budget).unwrap();
            let built = lower_conv(&spec, &plan, ConvDram::default(), &vec![0.0; c_out]).unwrap().volume();
            assert_eq!(conv_traffic(&spec, &plan).unwrap(), built, "{spec:?} {plan:?}");
        }
    }
}

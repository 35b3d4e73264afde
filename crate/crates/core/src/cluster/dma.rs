//! Two-dimensional DMA and core-driven zero padding.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::ntx::WordMemory;

/// Peak DMA throughput.
pub const DMA_BYTES_PER_CYCLE: u64 = 4;
/// Latency before the first word of an external read arrives.
pub const DRAM_LATENCY: u64 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DmaDirection {
    ToTcdm,
    ToDram,
}

/// Strided plane transfer: `rows` rows of `row_bytes`, one burst each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaDescriptor {
    pub src: u32,
    pub src_stride: u32,
    pub dst: u32,
    pub dst_stride: u32,
    pub row_bytes: u32,
    pub rows: u32,
    pub direction: DmaDirection,
}

impl DmaDescriptor {
    pub fn to_tcdm(src: u32, src_stride: u32, dst: u32, dst_stride: u32, row_bytes: u32, rows: u32) -> Self {
        DmaDescriptor {
            src,
            src_stride,
            dst,
            dst_stride,
            row_bytes,
            rows,
            direction: DmaDirection::ToTcdm,
        }
    }

    pub fn to_dram(src: u32, src_stride: u32, dst: u32, dst_stride: u32, row_bytes: u32, rows: u32) -> Self {
        DmaDescriptor {
            direction: DmaDirection::ToDram,
            ..Self::to_tcdm(src, src_stride, dst, dst_stride, row_bytes, rows)
        }
    }

    pub fn bytes(&self) -> u64 {
        self.row_bytes as u64 * self.rows as u64
    }

    /// Scratchpad-side base and stride.
    pub fn tcdm_side(&self) -> (u32, u32) {
        match self.direction {
            DmaDirection::ToTcdm => (self.dst, self.dst_stride),
            DmaDirection::ToDram => (self.src, self.src_stride),
        }
    }

    fn dram_side(&self) -> (u32, u32) {
        match self.direction {
            DmaDirection::ToTcdm => (self.src, self.src_stride),
            DmaDirection::ToDram => (self.dst, self.dst_stride),
        }
    }

    /// Byte ranges touched in the scratchpad, one per row.
    pub fn tcdm_ranges(&self) -> impl Iterator<Item = Range<u32>> + '_ {
        let (base, stride) = self.tcdm_side();
        (0..self.rows).map(move |r| {
            let start = base + r * stride;
            start..start + self.row_bytes
        })
    }

    /// Scratchpad word addresses in transfer order.
    pub fn tcdm_words(&self) -> impl Iterator<Item = u32> + '_ {
        self.tcdm_ranges().flat_map(|r| r.step_by(4))
    }

    pub fn validate(&self, tcdm_bytes: usize, dram_bytes: usize) -> Result<(), ClusterError> {
        if self.rows == 0 || self.row_bytes == 0 {
            return Err(ClusterError::Dma(format!(
                "empty transfer ({} rows of {} bytes)",
                self.rows, self.row_bytes
            )));
        }
        let aligned = [self.src, self.dst, self.src_stride, self.dst_stride, self.row_bytes]
            .iter()
            .all(|v| v % 4 == 0);
        if !aligned {
            return Err(ClusterError::Dma("transfer not word aligned".into()));
        }
        let end = |base: u32, stride: u32| base as u64 + (self.rows as u64 - 1) * stride as u64 + self.row_bytes as u64;
        let (tb, ts) = self.tcdm_side();
        let (db, ds) = self.dram_side();
        if end(tb, ts) > tcdm_bytes as u64 {
            return Err(ClusterError::Dma(format!(
                "scratchpad range ends at {} beyond {tcdm_bytes}",
                end(tb, ts)
            )));
        }
        if end(db, ds) > dram_bytes as u64 {
            return Err(ClusterError::Dma(format!(
                "external range ends at {} beyond {dram_bytes}",
                end(db, ds)
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaReport {
    /// One entry per row, in bytes.
    pub bursts: Vec<u32>,
    pub transfer_cycles: u64,
    pub latency_cycles: u64,
}

/// Performs the copy and reports bursts and standalone timing.
pub fn dma_execute<T: WordMemory, D: WordMemory>(
    d: &DmaDescriptor,
    tcdm: &mut T,
    dram: &mut D,
) -> Result<DmaReport, ClusterError> {
    d.validate(tcdm.capacity(), dram.capacity())?;
    for r in 0..d.rows {
        for w in (0..d.row_bytes).step_by(4) {
            let s = d.src + r * d.src_stride + w;
            let t = d.dst + r * d.dst_stride + w;
            match d.direction {
                DmaDirection::ToTcdm => tcdm.store(t, dram.load(s)),
                DmaDirection::ToDram => dram.store(t, tcdm.load(s)),
            }
        }
    }
    Ok(DmaReport {
        bursts: vec![d.row_bytes; d.rows as usize],
        transfer_cycles: d.bytes().div_ceil(DMA_BYTES_PER_CYCLE),
        latency_cycles: match d.direction {
            DmaDirection::ToTcdm => DRAM_LATENCY,
            DmaDirection::ToDram => 0,
        },
    })
}

/// Scratchpad plane whose outer ring of cells is padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadRegion {
    pub base: u32,
    pub rows: u32,
    pub cols: u32,
    pub row_stride: u32,
    pub top: u32,
    pub bottom: u32,
    pub left: u32,
    pub right: u32,
}

impl PadRegion {
    /// Dense plane with a uniform ring.
    pub fn uniform(base: u32, rows: u32, cols: u32, pad: u32) -> Self {
        PadRegion {
            base,
            rows,
            cols,
            row_stride: 4 * cols,
            top: pad,
            bottom: pad,
            left: pad,
            right: pad,
        }
    }

    /// Byte addresses of all padding cells, row-major.
    pub fn cells(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.rows).flat_map(move |r| {
            let full = r < self.top || r + self.bottom >= self.rows;
            (0..self.cols).filter_map(move |c| {
                let edge = c < self.left || c + self.right >= self.cols;
                (full || edge).then_some(self.base + r * self.row_stride + 4 * c)
            })
        })
    }
}

/// Writes +0.0 to every padding cell. Fails if a cell lies in a live range.
pub fn zero_pad_rows<T: WordMemory>(
    tcdm: &mut T,
    region: &PadRegion,
    live: &[Range<u32>],
) -> Result<usize, ClusterError> {
    let cells: Vec<u32> = region.cells().collect();
    for &c in &cells {
        if c as usize + 4 > tcdm.capacity() {
            return Err(ClusterError::Dma(format!("padding cell {c} out of range")));
        }
        if let Some(r) = live.iter().find(|r| r.contains(&c)) {
            return Err(ClusterError::Dependency(format!(
                "padding cell {c} overlaps live buffer {r:?}"
            )));
        }
    }
    for &c in &cells {
        tcdm.store(c, 0);
    }
    Ok(cells.len())
}

//! Splitting a strided backward convolution into dense phases.
//!
//! Gradient row `i` receives contributions from kernel taps `k` with
//! `k ≡ (i + pad) mod stride`, so rows sharing a residue form one dense
//! convolution over a subset of taps.

use serde::{Deserialize, Serialize};

/// One dense sub-convolution of the decomposition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StridePhase {
    /// Residue of `(row + pad, col + pad)` modulo the stride.
    pub residue: (usize, usize),
    /// Kernel rows used, ascending. Empty when the stride exceeds the kernel.
    pub taps_y: Vec<usize>,
    pub taps_x: Vec<usize>,
}

impl StridePhase {
    pub fn kernel_size(&self) -> (usize, usize) {
        (self.taps_y.len(), self.taps_x.len())
    }

    pub fn is_empty(&self) -> bool {
        self.taps_y.is_empty() || self.taps_x.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseDecomposition {
    pub kernel: (usize, usize),
    pub stride: usize,
    pub phases: Vec<StridePhase>,
}

/// Taps per residue along one axis.
pub fn taps_1d(kernel: usize, stride: usize) -> Vec<Vec<usize>> {
    assert!(stride >= 1, "stride must be positive");
    (0..stride)
        .map(|r| (r..kernel).step_by(stride).collect())
        .collect()
}

impl PhaseDecomposition {
    pub fn new(kernel_h: usize, kernel_w: usize, stride: usize) -> Self {
        let ty = taps_1d(kernel_h, stride);
        let tx = taps_1d(kernel_w, stride);
        let mut phases = Vec::with_capacity(stride * stride);
        for (ry, taps_y) in ty.iter().enumerate() {
            for (rx, taps_x) in tx.iter().enumerate() {
                phases.push(StridePhase {
                    residue: (ry, rx),
                    taps_y: taps_y.clone(),
                    taps_x: taps_x.clone(),
                });
            }
        }
        PhaseDecomposition {
            kernel: (kernel_h, kernel_w),
            stride,
            phases,
        }
    }

    /// Rows `[first, first + stride, ...)` below `len` served by `residue`.
    pub fn rows_for(residue: usize, pad: usize, stride: usize, len: usize) -> (usize, usize) {
        let first = (residue as i64 - pad as i64).rem_euclid(stride as i64) as usize;
        let count = if first < len { (len - first).div_ceil(stride) } else { 0 };
        (first, count)
    }
}

/// Square-kernel decomposition.
pub fn decompose_strided_backward(kernel: usize, stride: usize) -> PhaseDecomposition {
    PhaseDecomposition::new(kernel, kernel, stride)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_stride_is_identity() {
        let d = decompose_strided_backward(3, 1);
        assert_eq!(d.phases.len(), 1);
        assert_eq!(d.phases[0].taps_y, vec![0, 1, 2]);
    }

    #[test]
    fn one_dimensional_sizes() {
        let sizes = |k, s| taps_1d(k, s).iter().map(Vec::len).collect::<Vec<_>>();
        assert_eq!(sizes(3, 3), vec![1, 1, 1]);
        assert_eq!(sizes(3, 2), vec![2, 1]);
        assert_eq!(sizes(2, 4), vec![1, 1, 0, 0]);
    }

    #[test]
    fn rows_by_residue() {
        // pad 1, stride 2: rows 1,3,5 have residue 0
        assert_eq!(PhaseDecomposition::rows_for(0, 1, 2, 6), (1, 3));
        assert_eq!(PhaseDecomposition::rows_for(1, 1, 2, 6), (0, 3));
        assert_eq!(PhaseDecomposition::rows_for(2, 0, 4, 2), (2, 0));
    }

    proptest! {
        #[test]
        fn phases_partition_kernel_and_rows(k in 1usize..6, s in 1usize..5, pad in 0usize..3, len in 1usize..20) {
            let d = decompose_strided_backward(k, s);
            prop_assert_eq!(d.phases.len(), s * s);
            let mut seen = vec![0u32; k * k];
            for p in &d.phases {
                for &y in &p.taps_y {
                    for &x in &p.taps_x {
                        seen[y * k + x] += 1;
                    }
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let mut rows = vec![0u32; len];
            for r in 0..s {
                let (first, n) = PhaseDecomposition::rows_for(r, pad, s, len);
                for i in 0..n {
                    rows[first + i * s] += 1;
                }
            }
            prop_assert!(rows.iter().all(|&c| c == 1));
        }
    }
}

//! Hardware loops and address generation units.
//!
//! Level 0 is the innermost loop. An AGU holds one signed byte step per
//! level; on every iteration the step of the outermost level that advances
//! is added to the current address.

use serde::{Deserialize, Serialize};

use super::NtxError;

pub const MAX_LOOPS: usize = 5;
/// Loop counters are 16 bit wide, counting 1..=65536 iterations.
pub const MAX_BOUND: u32 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HwlConfig {
    pub bounds: [u32; MAX_LOOPS],
    pub outer_level: u8,
    pub init_level: u8,
    pub store_level: u8,
}

impl HwlConfig {
    /// Builds a loop nest from the active bounds (innermost first).
    pub fn new(active: &[u32], init_level: u8, store_level: u8) -> Result<Self, NtxError> {
        if active.is_empty() || active.len() > MAX_LOOPS {
            return Err(NtxError::Config(format!(
                "loop nest must have 1..={MAX_LOOPS} levels, got {}",
                active.len()
            )));
        }
        let mut bounds = [1; MAX_LOOPS];
        bounds[..active.len()].copy_from_slice(active);
        let cfg = HwlConfig {
            bounds,
            outer_level: (active.len() - 1) as u8,
            init_level,
            store_level,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Elementwise nest: init and store on every iteration.
    pub fn elementwise(active: &[u32]) -> Result<Self, NtxError> {
        Self::new(active, 0, 0)
    }

    pub fn validate(&self) -> Result<(), NtxError> {
        if self.outer_level as usize >= MAX_LOOPS {
            return Err(NtxError::Config(format!(
                "outer level {} out of range",
                self.outer_level
            )));
        }
        if self.store_level > self.init_level || self.init_level > self.outer_level {
            return Err(NtxError::Config(format!(
                "need store_level <= init_level <= outer_level, got {}/{}/{}",
                self.store_level, self.init_level, self.outer_level
            )));
        }
        for (level, &n) in self.active().iter().enumerate() {
            if n == 0 || n > MAX_BOUND {
                return Err(NtxError::Config(format!(
                    "loop bound N{level} = {n} outside 1..={MAX_BOUND}"
                )));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.outer_level as usize + 1
    }

    pub fn active(&self) -> &[u32] {
        &self.bounds[..self.levels()]
    }

    pub fn iterations(&self) -> u64 {
        self.active().iter().map(|&n| n as u64).product()
    }

    /// Number of accumulator stores the nest performs.
    pub fn stores(&self) -> u64 {
        self.active()[self.store_level as usize..]
            .iter()
            .map(|&n| n as u64)
            .product()
    }
}

/// Counter state of the loop nest, innermost first.
#[derive(Clone, Debug)]
pub struct LoopCounter {
    bounds: [u32; MAX_LOOPS],
    levels: usize,
    index: [u32; MAX_LOOPS],
    done: bool,
}

impl LoopCounter {
    pub fn new(hwl: &HwlConfig) -> Self {
        LoopCounter {
            bounds: hwl.bounds,
            levels: hwl.levels(),
            index: [0; MAX_LOOPS],
            done: false,
        }
    }

    pub fn index(&self) -> [u32; MAX_LOOPS] {
        self.index
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// True when all counters below `level` are at zero.
    pub fn starts_level(&self, level: u8) -> bool {
        self.index[..level as usize].iter().all(|&i| i == 0)
    }

    /// True when all counters below `level` are at their last value.
    pub fn ends_level(&self, level: u8) -> bool {
        (0..level as usize).all(|k| self.index[k] + 1 == self.bounds[k])
    }

    /// Moves to the next iteration. Returns the level that advanced, or
    /// `None` once the nest is exhausted.
    pub fn advance(&mut self) -> Option<usize> {
        if self.done {
            return None;
        }
        for k in 0..self.levels {
            if self.index[k] + 1 < self.bounds[k] {
                self.index[k] += 1;
                for i in &mut self.index[..k] {
                    *i = 0;
                }
                return Some(k);
            }
        }
        self.done = true;
        None
    }
}

/// Converts per-level byte strides into AGU steps so that stepping
/// reproduces `base + Σ i_k·s_k` for every index tuple.
pub fn convert_strides(strides: &[i64], bounds: &[u32]) -> Result<Vec<i64>, NtxError> {
    if strides.len() > MAX_LOOPS || strides.len() != bounds.len() {
        return Err(NtxError::Config(format!(
            "{} strides for {} loop bounds (max {MAX_LOOPS})",
            strides.len(),
            bounds.len()
        )));
    }
    if let Some(level) = bounds.iter().position(|&n| n < 1) {
        return Err(NtxError::Config(format!("loop bound N{level} must be >= 1")));
    }
    let mut steps = Vec::with_capacity(strides.len());
    // the address just before level i advances sits at Σ_{k<i} (N_k - 1)·s_k
    let mut wrapped: i64 = 0;
    for (i, &s) in strides.iter().enumerate() {
        steps.push(s - wrapped);
        wrapped += (bounds[i] as i64 - 1) * s;
    }
    Ok(steps)
}

/// Inverse of [`convert_strides`].
pub fn steps_to_strides(steps: &[i64], bounds: &[u32]) -> Vec<i64> {
    let mut strides = Vec::with_capacity(steps.len());
    let mut wrapped: i64 = 0;
    for (i, &p) in steps.iter().enumerate() {
        let s = p + wrapped;
        strides.push(s);
        wrapped += (bounds[i] as i64 - 1) * s;
    }
    strides
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AguConfig {
    pub base: i64,
    pub steps: [i64; MAX_LOOPS],
}

impl AguConfig {
    pub fn with_steps(base: i64, steps: &[i64]) -> Self {
        let mut s = [0; MAX_LOOPS];
        s[..steps.len()].copy_from_slice(steps);
        AguConfig { base, steps: s }
    }

    /// AGU for a nest given in natural strides (bytes per index increment).
    pub fn from_strides(base: i64, strides: &[i64], hwl: &HwlConfig) -> Result<Self, NtxError> {
        let mut padded = [0i64; MAX_LOOPS];
        if strides.len() > MAX_LOOPS {
            return Err(NtxError::Config(format!("{} strides (max {MAX_LOOPS})", strides.len())));
        }
        padded[..strides.len()].copy_from_slice(strides);
        let steps = convert_strides(&padded, &hwl.bounds)?;
        Ok(Self::with_steps(base, &steps))
    }

    /// Per-level strides equivalent to this AGU's steps.
    pub fn strides(&self, hwl: &HwlConfig) -> [i64; MAX_LOOPS] {
        let s = steps_to_strides(&self.steps, &hwl.bounds);
        let mut out = [0; MAX_LOOPS];
        out.copy_from_slice(&s);
        out
    }

    /// Lowest and highest byte address touched over the active nest.
    pub fn address_range(&self, hwl: &HwlConfig) -> (i64, i64) {
        let strides = self.strides(hwl);
        let mut lo = self.base;
        let mut hi = self.base;
        for k in 0..hwl.levels() {
            let span = (hwl.bounds[k] as i64 - 1) * strides[k];
            if span < 0 {
                lo += span;
            } else {
                hi += span;
            }
        }
        (lo, hi)
    }
}

/// Stepping address generator driven by a loop counter.
#[derive(Clone, Debug)]
pub struct AddressStream {
    agu: AguConfig,
    counter: LoopCounter,
    current: i64,
    started: bool,
}

impl AddressStream {
    pub fn new(agu: AguConfig, hwl: &HwlConfig) -> Self {
        AddressStream {
            agu,
            counter: LoopCounter::new(hwl),
            current: agu.base,
            started: false,
        }
    }
}

impl Iterator for AddressStream {
    /// (index tuple, byte address)
    type Item = ([u32; MAX_LOOPS], i64);

    fn next(&mut self) -> Option<Self::Item> {
        if !self.started {
            self.started = true;
            return Some((self.counter.index(), self.current));
        }
        let level = self.counter.advance()?;
        self.current += self.agu.steps[level];
        Some((self.counter.index(), self.current))
    }
}

/// Checks one address against the TCDM window and word alignment.
pub fn check_address(
    agu: usize,
    address: i64,
    index: [u32; MAX_LOOPS],
    capacity: usize,
) -> Result<u32, NtxError> {
    if address < 0 || address + 4 > capacity as i64 || address % 4 != 0 {
        return Err(NtxError::AddressFault {
            agu,
            address,
            index,
        });
    }
    Ok(address as u32)
}

/// Full address sequence of one AGU, bounds-checked against `capacity` bytes.
pub fn generate_address_stream(
    agu: &AguConfig,
    hwl: &HwlConfig,
    capacity: usize,
) -> Result<Vec<u32>, NtxError> {
    hwl.validate()?;
    AddressStream::new(*agu, hwl)
        .map(|(index, addr)| check_address(0, addr, index, capacity))
        .collect()
}

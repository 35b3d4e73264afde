use serde::{Deserialize, Serialize};

use super::accumulator::WideAccumulator;
use super::hwl::{check_address, AguConfig, HwlConfig, LoopCounter, MAX_LOOPS};
use super::{NtxError, WordMemory};

/// Cycles between the last iteration and the final write-back.
pub const DRAIN_CYCLES: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Opcode {
    /// acc += a·b
    Mac,
    /// acc = a·b
    Vmult,
    /// acc += a + b
    Vadd,
    /// acc = a·b, with the address pattern of an outer product
    Outerp,
    Min,
    Max,
    /// Index (since the last init) of the first maximum.
    Argmax,
    /// max(a, threshold)
    Relu,
    /// a > threshold ? b : 0
    ThreshMask,
    Copy,
    Memset,
}

impl Opcode {
    pub const ALL: [Opcode; 11] = [
        Opcode::Mac,
        Opcode::Vmult,
        Opcode::Vadd,
        Opcode::Outerp,
        Opcode::Min,
        Opcode::Max,
        Opcode::Argmax,
        Opcode::Relu,
        Opcode::ThreshMask,
        Opcode::Copy,
        Opcode::Memset,
    ];

    /// Whether the opcode consumes the first and second read stream.
    pub fn reads(self) -> (bool, bool) {
        match self {
            Opcode::Mac | Opcode::Vmult | Opcode::Vadd | Opcode::Outerp | Opcode::ThreshMask => {
                (true, true)
            }
            Opcode::Min | Opcode::Max | Opcode::Argmax | Opcode::Relu | Opcode::Copy => {
                (true, false)
            }
            Opcode::Memset => (false, false),
        }
    }

    /// Whether results go through the wide accumulator.
    pub fn accumulates(self) -> bool {
        matches!(
            self,
            Opcode::Mac | Opcode::Vmult | Opcode::Vadd | Opcode::Outerp
        )
    }
}

/// Value loaded into the datapath register at the init level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AccInit {
    Const(f32),
    /// Reload the word currently at the store address.
    FromOutput,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NtxCommand {
    pub opcode: Opcode,
    pub hwl: HwlConfig,
    /// Read stream a, read stream b, write stream.
    pub agu: [AguConfig; 3],
    pub init: AccInit,
}

impl Default for NtxCommand {
    fn default() -> Self {
        NtxCommand {
            opcode: Opcode::Mac,
            hwl: HwlConfig {
                bounds: [1; MAX_LOOPS],
                outer_level: 0,
                init_level: 0,
                store_level: 0,
            },
            agu: [AguConfig::default(); 3],
            init: AccInit::Const(0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FpFlags {
    /// A NaN or infinity reached an arithmetic or compare unit.
    pub invalid: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub iterations: u64,
    pub stores: u64,
    pub cycles: u64,
    pub flags: FpFlags,
}

/// Memory access issued by one iteration, for timing models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PortAccess {
    pub read_a: Option<u32>,
    pub read_b: Option<u32>,
    pub write: Option<u32>,
}

impl NtxCommand {
    pub fn new(opcode: Opcode, hwl: HwlConfig, agu: [AguConfig; 3], init: AccInit) -> Self {
        NtxCommand {
            opcode,
            hwl,
            agu,
            init,
        }
    }

    /// Busy cycles: one per innermost iteration plus the pipeline drain.
    pub fn cycles(&self) -> u64 {
        self.hwl.iterations() + DRAIN_CYCLES
    }

    fn reads_output_at_init(&self) -> bool {
        self.init == AccInit::FromOutput
    }

    /// Walks the nest and yields, per iteration, the addresses actually used.
    pub fn accesses(&self) -> impl Iterator<Item = ([u32; MAX_LOOPS], [i64; 3], bool, bool)> + '_ {
        let mut counter = LoopCounter::new(&self.hwl);
        let mut addr = [self.agu[0].base, self.agu[1].base, self.agu[2].base];
        let mut first = true;
        std::iter::from_fn(move || {
            if !first {
                let level = counter.advance()?;
                for (a, agu) in addr.iter_mut().zip(&self.agu) {
                    *a += agu.steps[level];
                }
            }
            first = false;
            let init = counter.starts_level(self.hwl.init_level);
            let store = counter.ends_level(self.hwl.store_level);
            Some((counter.index(), addr, init, store))
        })
    }

    /// Per-iteration port usage with addresses, in issue order.
    pub fn port_accesses(&self) -> impl Iterator<Item = PortAccess> + '_ {
        let (ra, rb) = self.opcode.reads();
        let init_read = self.reads_output_at_init();
        self.accesses().map(move |(_, addr, init, store)| PortAccess {
            read_a: ra.then_some(addr[0] as u32),
            // a reload at init uses the second read port slot of that iteration
            read_b: if rb {
                Some(addr[1] as u32)
            } else if init && init_read {
                Some(addr[2] as u32)
            } else {
                None
            },
            write: store.then_some(addr[2] as u32),
        })
    }

    /// Verifies every address the command will touch, reporting the first
    /// faulting iteration.
    pub fn check_addresses(&self, capacity: usize) -> Result<(), NtxError> {
        self.hwl.validate()?;
        let (ra, rb) = self.opcode.reads();
        let used = [ra, rb, true];
        // fast path: affine streams that stay inside the window and aligned
        let ok = (0..3).all(|k| {
            if !used[k] {
                return true;
            }
            let (lo, hi) = self.agu[k].address_range(&self.hwl);
            lo >= 0
                && hi + 4 <= capacity as i64
                && self.agu[k].base % 4 == 0
                && self.agu[k].steps.iter().all(|s| s % 4 == 0)
        });
        if ok {
            return Ok(());
        }
        let init_read = self.reads_output_at_init();
        for (index, addr, init, store) in self.accesses() {
            if ra {
                check_address(0, addr[0], index, capacity)?;
            }
            if rb {
                check_address(1, addr[1], index, capacity)?;
            }
            if store || (init && init_read) {
                check_address(2, addr[2], index, capacity)?;
            }
        }
        Ok(())
    }

    /// Runs the command to completion against `mem`. Addresses are checked
    /// up front, so a fault leaves memory untouched.
    pub fn execute<M: WordMemory + ?Sized>(&self, mem: &mut M) -> Result<CommandOutcome, NtxError> {
        self.check_addresses(mem.capacity())?;
        let (ra, rb) = self.opcode.reads();
        let mut dp = Datapath::default();
        let mut flags = FpFlags::default();
        let mut stores = 0u64;
        let mut iterations = 0u64;
        let mut pending: Vec<(u32, u32)> = Vec::new();
        for (_, addr, init, store) in self.accesses() {
            iterations += 1;
            if init {
                let v = match self.init {
                    AccInit::Const(v) => v,
                    AccInit::FromOutput => f32::from_bits(mem.load(addr[2] as u32)),
                };
                dp.init(self.opcode, v);
            }
            let a = if ra { f32::from_bits(mem.load(addr[0] as u32)) } else { 0.0 };
            let b = if rb { f32::from_bits(mem.load(addr[1] as u32)) } else { 0.0 };
            dp.step(self.opcode, a, b, &mut flags);
            if store {
                pending.push((addr[2] as u32, dp.result(self.opcode)));
                stores += 1;
                // results are visible to later reads of the same command
                for (addr, word) in pending.drain(..) {
                    mem.store(addr, word);
                }
            }
        }
        Ok(CommandOutcome {
            iterations,
            stores,
            cycles: iterations + DRAIN_CYCLES,
            flags,
        })
    }
}

#[derive(Default)]
struct Datapath {
    acc: WideAccumulator,
    cmp: f32,
    counter: u32,
    arg: u32,
    value: f32,
}

impl Datapath {
    fn init(&mut self, op: Opcode, v: f32) {
        match op {
            Opcode::Mac | Opcode::Vadd | Opcode::Vmult | Opcode::Outerp => {
                self.acc = WideAccumulator::from_f32(v);
            }
            Opcode::Min | Opcode::Max | Opcode::Argmax => {
                self.cmp = v;
                self.counter = 0;
                self.arg = 0;
            }
            Opcode::Relu | Opcode::ThreshMask | Opcode::Memset | Opcode::Copy => {
                self.cmp = v;
                self.value = v;
            }
        }
    }

    fn step(&mut self, op: Opcode, a: f32, b: f32, flags: &mut FpFlags) {
        match op {
            Opcode::Mac => {
                self.acc.add_product(a, b);
                flags.invalid |= self.acc.is_invalid();
            }
            Opcode::Vmult | Opcode::Outerp => {
                self.acc = WideAccumulator::zero();
                self.acc.add_product(a, b);
                flags.invalid |= self.acc.is_invalid();
            }
            Opcode::Vadd => {
                self.acc.add(a);
                self.acc.add(b);
                flags.invalid |= self.acc.is_invalid();
            }
            Opcode::Min | Opcode::Max | Opcode::Argmax => {
                flags.invalid |= a.is_nan();
                let better = match op {
                    Opcode::Min => a < self.cmp,
                    _ => a > self.cmp,
                };
                if better {
                    self.cmp = a;
                    self.arg = self.counter;
                }
                self.counter = self.counter.wrapping_add(1);
            }
            Opcode::Relu => {
                flags.invalid |= a.is_nan();
                self.value = if a > self.cmp { a } else { self.cmp };
            }
            Opcode::ThreshMask => {
                flags.invalid |= a.is_nan();
                self.value = if a > self.cmp { b } else { 0.0 };
            }
            Opcode::Copy => self.value = a,
            Opcode::Memset => {}
        }
    }

    fn result(&self, op: Opcode) -> u32 {
        match op {
            Opcode::Mac | Opcode::Vadd | Opcode::Vmult | Opcode::Outerp => {
                self.acc.reduce().to_bits()
            }
            Opcode::Min | Opcode::Max => self.cmp.to_bits(),
            Opcode::Argmax => self.arg,
            Opcode::Relu | Opcode::ThreshMask | Opcode::Copy | Opcode::Memset => {
                self.value.to_bits()
            }
        }
    }
}

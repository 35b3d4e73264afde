//! Functional model of one NTX streaming co-processor.

pub mod accumulator;
pub mod command;
pub mod hwl;
pub mod special;
pub mod staging;

pub use accumulator::WideAccumulator;
pub use command::{AccInit, CommandOutcome, FpFlags, NtxCommand, Opcode, PortAccess, DRAIN_CYCLES};
pub use hwl::{convert_strides, generate_address_stream, AguConfig, HwlConfig, LoopCounter, MAX_BOUND, MAX_LOOPS};
pub use special::{divide, special_function, Operand, SpecialFn, SpecialOutput, Vector, VectorUnit};
pub use staging::{broadcast, IssueSlot, Ntx, StagingArea};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NtxError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("AGU{agu} address fault at {address} (loop index {index:?})")]
    AddressFault {
        agu: usize,
        address: i64,
        index: [u32; MAX_LOOPS],
    },
    #[error("command queue full")]
    Backpressure,
}

/// Word-addressed view of a scratchpad. Addresses are byte offsets and
/// callers guarantee alignment and bounds.
pub trait WordMemory {
    fn capacity(&self) -> usize;
    fn load(&self, addr: u32) -> u32;
    fn store(&mut self, addr: u32, word: u32);

    fn read_f32(&self, addr: u32) -> f32 {
        f32::from_bits(self.load(addr))
    }

    fn write_f32(&mut self, addr: u32, v: f32) {
        self.store(addr, v.to_bits())
    }

    fn read_slice(&self, addr: u32, n: usize) -> Vec<f32> {
        (0..n).map(|i| self.read_f32(addr + 4 * i as u32)).collect()
    }

    fn write_slice(&mut self, addr: u32, data: &[f32]) {
        for (i, &v) in data.iter().enumerate() {
            self.write_f32(addr + 4 * i as u32, v);
        }
    }
}

/// Flat memory for standalone command execution.
#[derive(Clone, Debug)]
pub struct VecMemory {
    words: Vec<u32>,
}

impl VecMemory {
    pub fn new(bytes: usize) -> Self {
        VecMemory {
            words: vec![0; bytes / 4],
        }
    }
}

impl WordMemory for VecMemory {
    fn capacity(&self) -> usize {
        self.words.len() * 4
    }

    fn load(&self, addr: u32) -> u32 {
        self.words[(addr / 4) as usize]
    }

    fn store(&mut self, addr: u32, word: u32) {
        self.words[(addr / 4) as usize] = word;
    }
}

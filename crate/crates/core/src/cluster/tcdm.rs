//! Banked scratchpad, external memory and per-bank arbitration.

use serde::{Deserialize, Serialize};

use crate::ntx::WordMemory;

pub const TCDM_BYTES: usize = 128 * 1024;
pub const TCDM_BANKS: usize = 32;

/// Word-interleaved banked scratchpad.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tcdm {
    words: Vec<u32>,
    banks: usize,
}

impl Default for Tcdm {
    fn default() -> Self {
        Self::new(TCDM_BYTES, TCDM_BANKS)
    }
}

impl Tcdm {
    pub fn new(bytes: usize, banks: usize) -> Self {
        assert!(banks > 0 && bytes % 4 == 0);
        Tcdm {
            words: vec![0; bytes / 4],
            banks,
        }
    }

    pub fn banks(&self) -> usize {
        self.banks
    }

    pub fn bank_of(&self, addr: u32) -> usize {
        bank_of(addr, self.banks)
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }
}

pub fn bank_of(addr: u32, banks: usize) -> usize {
    (addr as usize / 4) % banks
}

impl WordMemory for Tcdm {
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

/// Off-chip memory seen through the DMA. Grows on demand.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dram {
    words: Vec<u32>,
}

impl Dram {
    pub fn new(bytes: usize) -> Self {
        Dram {
            words: vec![0; bytes.div_ceil(4)],
        }
    }

    /// Appends `data` at the next free word and returns its byte address.
    pub fn push(&mut self, data: &[f32]) -> u32 {
        let addr = (self.words.len() * 4) as u32;
        self.words.extend(data.iter().map(|v| v.to_bits()));
        addr
    }

    pub fn reserve(&mut self, len: usize) -> u32 {
        let addr = (self.words.len() * 4) as u32;
        self.words.resize(self.words.len() + len, 0);
        addr
    }
}

impl WordMemory for Dram {
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

/// Memory request offered in one cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub requester: usize,
    pub bank: usize,
    pub write: bool,
}

/// Round-robin arbiter: per bank, the first requester after the last
/// winner (cyclically) is granted.
#[derive(Clone, Debug)]
pub struct BankArbiter {
    requesters: usize,
    last: Vec<usize>,
}

impl BankArbiter {
    pub fn new(banks: usize, requesters: usize) -> Self {
        BankArbiter {
            requesters,
            // start so that requester 0 has priority
            last: vec![requesters - 1; banks],
        }
    }

    /// Returns one grant flag per request.
    pub fn arbitrate(&mut self, requests: &[Request]) -> Vec<bool> {
        let mut granted = vec![false; requests.len()];
        let mut best: Vec<Option<(usize, usize)>> = vec![None; self.last.len()];
        for (i, r) in requests.iter().enumerate() {
            let dist = (r.requester + self.requesters - self.last[r.bank] - 1) % self.requesters;
            match best[r.bank] {
                Some((d, _)) if d <= dist => {}
                _ => best[r.bank] = Some((dist, i)),
            }
        }
        for (bank, b) in best.iter().enumerate() {
            if let Some((_, i)) = *b {
                granted[i] = true;
                self.last[bank] = requests[i].requester;
            }
        }
        granted
    }
}

/// Splits an offered request set into granted and stalled subsets.
pub fn tcdm_arbitrate(
    arbiter: &mut BankArbiter,
    requests: &[Request],
) -> (Vec<Request>, Vec<Request>) {
    let grants = arbiter.arbitrate(requests);
    let mut granted = Vec::new();
    let mut stalled = Vec::new();
    for (r, g) in requests.iter().zip(grants) {
        if g {
            granted.push(*r);
        } else {
            stalled.push(*r);
        }
    }
    (granted, stalled)
}

/// Service statistics of independent address streams competing for banks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamStats {
    pub cycles: u64,
    pub offered: u64,
    pub granted: u64,
}

impl StreamStats {
    pub fn service_fraction(&self) -> f64 {
        if self.offered == 0 {
            1.0
        } else {
            self.granted as f64 / self.offered as f64
        }
    }
}

/// Each stream issues its next address every cycle until granted.
pub fn simulate_streams(streams: &[Vec<u32>], banks: usize, max_cycles: u64) -> StreamStats {
    let mut arb = BankArbiter::new(banks, streams.len().max(1));
    let mut pos = vec![0usize; streams.len()];
    let mut stats = StreamStats {
        cycles: 0,
        offered: 0,
        granted: 0,
    };
    while stats.cycles < max_cycles && pos.iter().zip(streams).any(|(&p, s)| p < s.len()) {
        let reqs: Vec<(usize, Request)> = streams
            .iter()
            .enumerate()
            .filter(|(i, s)| pos[*i] < s.len())
            .map(|(i, s)| {
                (
                    i,
                    Request {
                        requester: i,
                        bank: bank_of(s[pos[i]], banks),
                        write: false,
                    },
                )
            })
            .collect();
        let only: Vec<Request> = reqs.iter().map(|r| r.1).collect();
        let grants = arb.arbitrate(&only);
        stats.offered += only.len() as u64;
        for ((i, _), g) in reqs.iter().zip(grants) {
            if g {
                pos[*i] += 1;
                stats.granted += 1;
            }
        }
        stats.cycles += 1;
    }
    stats
}

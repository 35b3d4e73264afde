//! Cycle-stepped timing of a tile schedule.
//!
//! Timing is simulated separately from the functional effects: the
//! schedule validator guarantees that concurrent activities touch disjoint
//! scratchpad ranges, so the sequential order yields the same data.

use std::collections::VecDeque;

use super::dma::{DmaDescriptor, DmaDirection};
use super::schedule::{staging_writes, TileSchedule};
use super::tcdm::{bank_of, BankArbiter, Request};
use super::trace::{ClusterTrace, Transition, Unit, UnitState};
use super::{ClusterConfig, ClusterError};
use crate::ntx::{NtxCommand, PortAccess, DRAIN_CYCLES};

#[derive(Clone, Debug)]
enum CoreOp {
    /// Fixed-cost register writes; optionally hands a descriptor to the DMA.
    Busy { cycles: u64, program: Option<usize> },
    Issue { ntx: usize, cmd: usize },
    Pad(Vec<u32>),
    WaitDmas(Vec<usize>),
    WaitCommands(Vec<usize>),
    PhaseEnd,
}

fn build_program(ts: &TileSchedule, cfg: &ClusterConfig) -> (Vec<CoreOp>, Vec<(usize, NtxCommand)>, Vec<DmaDescriptor>) {
    let mut ops = Vec::new();
    let mut cmds: Vec<(usize, NtxCommand)> = Vec::new();
    let mut dmas: Vec<DmaDescriptor> = Vec::new();
    let mut live = vec![NtxCommand::default(); cfg.ntx_count];
    let mut prestaged: Vec<Option<NtxCommand>> = vec![None; cfg.ntx_count];
    let w = cfg.register_write_cycles;

    fn firsts(cmds: &[(usize, NtxCommand)]) -> Vec<usize> {
        let mut seen = Vec::new();
        let mut idx = Vec::new();
        for (i, (n, _)) in cmds.iter().enumerate() {
            if !seen.contains(n) {
                seen.push(*n);
                idx.push(i);
            }
        }
        idx
    }

    let stage = |ops: &mut Vec<CoreOp>, live: &mut Vec<NtxCommand>, ntx: usize, cmd: &NtxCommand| {
        let n = staging_writes(&live[ntx], cmd);
        if n > 0 {
            ops.push(CoreOp::Busy { cycles: n * w, program: None });
        }
        live[ntx] = *cmd;
    };

    for (k, p) in ts.phases.iter().enumerate() {
        let mut program = |ops: &mut Vec<CoreOp>, list: &[DmaDescriptor]| -> Vec<usize> {
            list.iter()
                .map(|d| {
                    dmas.push(*d);
                    ops.push(CoreOp::Busy {
                        cycles: cfg.dma_program_cycles,
                        program: Some(dmas.len() - 1),
                    });
                    dmas.len() - 1
                })
                .collect()
        };

        let head = program(&mut ops, &p.head);
        if !head.is_empty() {
            ops.push(CoreOp::WaitDmas(head));
        }
        let cells: Vec<u32> = p.zero_pad.iter().flat_map(|r| r.cells().collect::<Vec<_>>()).collect();
        if !cells.is_empty() {
            ops.push(CoreOp::Pad(cells));
        }

        let base = cmds.len();
        cmds.extend(p.commands.iter().copied());
        let first = firsts(&p.commands);
        for &i in &first {
            let (ntx, cmd) = p.commands[i];
            if prestaged[ntx] != Some(cmd) {
                stage(&mut ops, &mut live, ntx, &cmd);
            }
            prestaged[ntx] = None;
            ops.push(CoreOp::Issue { ntx, cmd: base + i });
        }
        let parallel = program(&mut ops, &p.parallel);
        for (i, (ntx, cmd)) in p.commands.iter().enumerate() {
            if first.contains(&i) {
                continue;
            }
            stage(&mut ops, &mut live, *ntx, cmd);
            ops.push(CoreOp::Issue { ntx: *ntx, cmd: base + i });
        }
        if let Some(next) = ts.phases.get(k + 1) {
            for i in firsts(&next.commands) {
                let (ntx, cmd) = next.commands[i];
                stage(&mut ops, &mut live, ntx, &cmd);
                prestaged[ntx] = Some(cmd);
            }
        }
        ops.push(CoreOp::WaitCommands((base..cmds.len()).collect()));
        if !parallel.is_empty() {
            ops.push(CoreOp::WaitDmas(parallel));
        }
        let tail = program(&mut ops, &p.tail);
        if !tail.is_empty() {
            ops.push(CoreOp::WaitDmas(tail));
        }
        ops.push(CoreOp::PhaseEnd);
    }
    (ops, cmds, dmas)
}

struct DmaJob {
    id: usize,
    ready_at: u64,
    words: Vec<u32>,
    pos: usize,
    write: bool,
}

struct NtxUnit<'a> {
    queue: VecDeque<usize>,
    stream: Option<Box<dyn Iterator<Item = PortAccess> + 'a>>,
    /// Current iteration's accesses, consumed as they are granted.
    pending: [Option<(u32, bool)>; 3],
    has_iteration: bool,
    drain_left: u64,
}

impl NtxUnit<'_> {
    fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }
}

fn load_iteration(u: &mut NtxUnit<'_>) -> bool {
    match u.stream.as_mut().and_then(|s| s.next()) {
        Some(a) => {
            u.pending = [
                a.read_a.map(|x| (x, false)),
                a.read_b.map(|x| (x, false)),
                a.write.map(|x| (x, true)),
            ];
            u.has_iteration = true;
            true
        }
        None => {
            u.has_iteration = false;
            false
        }
    }
}

struct Recorder {
    last: Vec<Option<UnitState>>,
    out: Vec<Transition>,
}

impl Recorder {
    fn set(&mut self, slot: usize, unit: Unit, state: UnitState, cycle: u64) {
        if self.last[slot] != Some(state) {
            self.last[slot] = Some(state);
            self.out.push(Transition { cycle, unit, state });
        }
    }
}

/// Runs the schedule's timing model to completion.
pub fn simulate(ts: &TileSchedule, cfg: &ClusterConfig) -> Result<ClusterTrace, ClusterError> {
    let (ops, cmds, dmas) = build_program(ts, cfg);
    let n = cfg.ntx_count;
    let mut arb = BankArbiter::new(cfg.banks, cfg.requesters());
    let mut trace = ClusterTrace {
        ntx_busy: vec![0; n],
        ..Default::default()
    };
    let mut rec = Recorder {
        last: vec![None; n + 2],
        out: Vec::new(),
    };

    let mut cmd_done = vec![false; cmds.len()];
    let mut dma_done = vec![false; dmas.len()];
    let mut units: Vec<NtxUnit> = (0..n)
        .map(|_| NtxUnit {
            queue: VecDeque::new(),
            stream: None,
            pending: [None; 3],
            has_iteration: false,
            drain_left: 0,
        })
        .collect();
    let mut jobs: Vec<DmaJob> = Vec::new();

    let mut pc = 0usize;
    let mut busy_left = 0u64;
    let mut pad_pos = 0usize;
    let mut cycle = 0u64;

    loop {
        // core: retire zero-time ops and decide this cycle's activity
        let mut core_state = UnitState::Idle;
        let mut core_pad: Option<u32> = None;
        while pc < ops.len() {
            match &ops[pc] {
                CoreOp::Busy { cycles, program } => {
                    if busy_left == 0 {
                        busy_left = (*cycles).max(1);
                    }
                    core_state = UnitState::Program;
                    busy_left -= 1;
                    if busy_left == 0 {
                        if let Some(id) = *program {
                            let d = &dmas[id];
                            let latency = match d.direction {
                                DmaDirection::ToTcdm => cfg.dram_latency,
                                DmaDirection::ToDram => 0,
                            };
                            jobs.push(DmaJob {
                                id,
                                ready_at: cycle + 1 + latency,
                                words: d.tcdm_words().collect(),
                                pos: 0,
                                write: d.direction == DmaDirection::ToTcdm,
                            });
                            trace.bursts.extend(std::iter::repeat_n(d.row_bytes, d.rows as usize));
                        }
                        pc += 1;
                    }
                    break;
                }
                CoreOp::Issue { ntx, cmd } => {
                    if units[*ntx].queue.len() >= 2 {
                        core_state = UnitState::Wait;
                        break;
                    }
                    if busy_left == 0 {
                        busy_left = cfg.register_write_cycles.max(1);
                    }
                    core_state = UnitState::Program;
                    busy_left -= 1;
                    if busy_left == 0 {
                        units[*ntx].queue.push_back(*cmd);
                        pc += 1;
                    }
                    break;
                }
                CoreOp::Pad(cells) => {
                    core_state = UnitState::Pad;
                    core_pad = Some(cells[pad_pos]);
                    break;
                }
                CoreOp::WaitDmas(ids) => {
                    if ids.iter().all(|&i| dma_done[i]) {
                        pc += 1;
                    } else {
                        core_state = UnitState::Wait;
                        break;
                    }
                }
                CoreOp::WaitCommands(ids) => {
                    if ids.iter().all(|&i| cmd_done[i]) {
                        pc += 1;
                    } else {
                        core_state = UnitState::Wait;
                        break;
                    }
                }
                CoreOp::PhaseEnd => {
                    trace.phase_end.push(cycle);
                    pc += 1;
                }
            }
        }

        let dma_active = jobs.iter().position(|j| j.ready_at <= cycle);
        let all_idle = pc >= ops.len() && jobs.is_empty() && units.iter().all(NtxUnit::is_idle);
        if all_idle {
            break;
        }
        if cycle >= cfg.max_cycles {
            return Err(ClusterError::Timeout(cfg.max_cycles));
        }

        // start commands and gather memory requests
        let mut reqs: Vec<Request> = Vec::new();
        let mut who: Vec<(usize, usize)> = Vec::new(); // (ntx or n/n+1 for dma/core, port)
        for (i, u) in units.iter_mut().enumerate() {
            if u.drain_left > 0 || u.queue.is_empty() {
                continue;
            }
            if u.stream.is_none() {
                let c = &cmds[u.queue[0]].1;
                u.stream = Some(Box::new(c.port_accesses()));
                load_iteration(u);
            }
            for (p, slot) in u.pending.iter().enumerate() {
                if let Some((addr, write)) = slot {
                    reqs.push(Request {
                        requester: 3 * i + p,
                        bank: bank_of(*addr, cfg.banks),
                        write: *write,
                    });
                    who.push((i, p));
                }
            }
        }
        if let Some(j) = dma_active {
            let job = &jobs[j];
            reqs.push(Request {
                requester: cfg.dma_requester(),
                bank: bank_of(job.words[job.pos], cfg.banks),
                write: job.write,
            });
            who.push((n, 0));
        }
        if let Some(addr) = core_pad {
            reqs.push(Request {
                requester: cfg.core_requester(),
                bank: bank_of(addr, cfg.banks),
                write: true,
            });
            who.push((n + 1, 0));
        }

        let grants = arb.arbitrate(&reqs);
        trace.requests_offered += reqs.len() as u64;
        let granted = grants.iter().filter(|g| **g).count() as u64;
        trace.requests_granted += granted;
        trace.requests_stalled += reqs.len() as u64 - granted;

        for (&(u, p), g) in who.iter().zip(&grants) {
            if !g {
                continue;
            }
            if u < n {
                units[u].pending[p] = None;
            } else if u == n {
                let j = dma_active.expect("dma request without job");
                jobs[j].pos += 1;
                trace.dma_bytes += 4;
            } else {
                pad_pos += 1;
            }
        }

        // advance co-processors
        for (i, u) in units.iter_mut().enumerate() {
            let state = if u.drain_left > 0 {
                u.drain_left -= 1;
                if u.drain_left == 0 {
                    let done = u.queue.pop_front().expect("draining without command");
                    cmd_done[done] = true;
                    u.stream = None;
                }
                UnitState::Drain
            } else if u.queue.is_empty() {
                UnitState::Idle
            } else if u.pending.iter().all(Option::is_none) && u.has_iteration {
                trace.ntx_iterations += 1;
                if !load_iteration(u) {
                    u.drain_left = DRAIN_CYCLES;
                }
                UnitState::Compute
            } else {
                UnitState::Stall
            };
            if state != UnitState::Idle {
                trace.ntx_busy[i] += 1;
            }
            rec.set(2 + i, Unit::Ntx(i), state, cycle);
        }

        // advance DMA
        let dma_state = match dma_active {
            Some(j) => {
                trace.dma_busy += 1;
                if jobs[j].pos == jobs[j].words.len() {
                    dma_done[jobs[j].id] = true;
                    jobs.remove(j);
                }
                UnitState::Transfer
            }
            None if jobs.is_empty() => UnitState::Idle,
            None => UnitState::Latency,
        };
        rec.set(1, Unit::Dma, dma_state, cycle);

        if let Some(CoreOp::Pad(cells)) = ops.get(pc) {
            if core_pad.is_some() && pad_pos == cells.len() {
                pad_pos = 0;
                pc += 1;
            }
        }
        if matches!(core_state, UnitState::Program | UnitState::Pad) {
            trace.core_busy += 1;
        }
        rec.set(0, Unit::Core, core_state, cycle);
        cycle += 1;
    }

    trace.cycles = cycle;
    trace.transitions = rec.out;
    Ok(trace)
}

//! The timing scheduler: in-order issue, overlapped memory.
//!
//! Every instruction issues at the earliest tick satisfying, in this order:
//!
//! 1. in-order floor and register dependencies (dependency = completion of
//!    the producing instruction);
//! 2. the store-release fence (store serialization and `DmbSt` barriers
//!    block store-class instructions);
//! 3. its issue port (load / store / alu), busy for the kind's tick cost;
//! 4. a free tag-check slot, when the access issues a check;
//! 5. a free MSHR, when the access demand-misses.
//!
//! Forwarding is probed and the cache is classified at the issue tick. The
//! same protocol, restated over explicit per-tick resource occupancy, is
//! re-implemented by the acceptance suite's event-driven oracle; the two
//! must agree tick-for-tick.

use crate::isa::{
    tag_check, AccessCheck, CheckConfig, CheckOutcome, InstrKind, Instruction, MteMode,
};
use crate::tagmem::{TagStorageScheme, TaggedMemory};
use crate::{seeded_coin, Result, SimError};

use super::cache::{CacheClass, CacheModel, StreamTable};
use super::{CoreProfile, CostReport, Counters};

/// Completion-time window for dependency lookups; generators keep
/// dependency distances well below this.
const COMPLETION_WINDOW: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Continue,
    /// A synchronous tag fault stopped the run.
    Halted,
}

#[derive(Debug, Clone, Copy)]
struct SbEntry {
    addr: u64,
    width: u32,
    complete: u64,
}

/// Bounded resource pool: busy-until ticks, one per unit.
#[derive(Debug, Clone)]
struct Pool {
    busy_until: Vec<u64>,
}

impl Pool {
    fn new(size: usize) -> Pool {
        Pool {
            busy_until: vec![0; size],
        }
    }

    fn earliest_free(&self) -> u64 {
        *self.busy_until.iter().min().unwrap()
    }

    /// Occupies the earliest-free unit until `release`.
    fn acquire(&mut self, release: u64) {
        let idx = self
            .busy_until
            .iter()
            .enumerate()
            .min_by_key(|(i, t)| (**t, *i))
            .map(|(i, _)| i)
            .unwrap();
        self.busy_until[idx] = release;
    }

    fn clear(&mut self) {
        self.busy_until.fill(0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Port {
    Load,
    Store,
    Alu,
    None,
}

fn port_of(kind: InstrKind) -> Port {
    match kind {
        InstrKind::Load | InstrKind::Ldg => Port::Load,
        k if k.is_store_class() => Port::Store,
        InstrKind::Nop => Port::Alu,
        _ => Port::None,
    }
}

/// Streaming timing simulator bound to one memory and one profile.
pub struct SimCore<'m> {
    mem: &'m mut TaggedMemory,
    profile: CoreProfile,
    cfg: CheckConfig,
    mode: MteMode,
    seed: u64,

    cache: CacheModel,
    streams: StreamTable,
    slots: Pool,
    mshrs: Pool,

    port_free: [u64; 3],
    issue_floor: u64,
    store_release: u64,
    max_store_completion: u64,
    end_of_run: u64,
    sb: Vec<SbEntry>,

    completions: Vec<u64>,
    index: u64,
    counters: Counters,
    halted: bool,
    last_issue: u64,
    last_completion: u64,
}

impl<'m> SimCore<'m> {
    pub fn new(
        mem: &'m mut TaggedMemory,
        profile: &CoreProfile,
        cfg: &CheckConfig,
        mode: MteMode,
        seed: u64,
    ) -> SimCore<'m> {
        SimCore {
            mem,
            profile: profile.clone(),
            cfg: *cfg,
            mode,
            seed,
            cache: CacheModel::new(profile.llc_bytes, profile.cache_ways),
            streams: StreamTable::default(),
            slots: Pool::new(profile.tag_check_slots),
            mshrs: Pool::new(profile.mshrs),
            port_free: [0; 3],
            issue_floor: 0,
            store_release: 0,
            max_store_completion: 0,
            end_of_run: 0,
            sb: Vec::new(),
            completions: vec![0; COMPLETION_WINDOW],
            index: 0,
            counters: Counters::default(),
            halted: false,
            last_issue: 0,
            last_completion: 0,
        }
    }

    /// Drops all cached lines (benchmark eviction primitive).
    pub fn flush_cache(&mut self) {
        self.cache.flush();
        self.streams.reset();
    }

    pub fn cache(&self) -> &CacheModel {
        &self.cache
    }

    /// Starts a fresh timed pass while keeping cache and prefetcher state:
    /// the warm-up convention of the benchmark runners.
    pub fn reset_clock_keep_cache(&mut self) {
        self.cache.settle();
        self.slots.clear();
        self.mshrs.clear();
        self.port_free = [0; 3];
        self.issue_floor = 0;
        self.store_release = 0;
        self.max_store_completion = 0;
        self.end_of_run = 0;
        self.sb.clear();
        self.completions.fill(0);
        self.index = 0;
        self.counters = Counters::default();
        self.halted = false;
        self.last_issue = 0;
        self.last_completion = 0;
    }

    pub fn report(&self) -> CostReport {
        CostReport {
            ticks: self.end_of_run,
            instructions: self.index,
            counts: self.counters,
        }
    }

    fn completion_of(&self, dep: u32) -> Result<u64> {
        let dep = dep as u64;
        if dep >= self.index {
            return Err(SimError::ProgramParse {
                line: self.index as usize,
                reason: "dependency on a later instruction".into(),
            });
        }
        if self.index - dep > COMPLETION_WINDOW as u64 {
            return Err(SimError::Profile(
                "dependency distance exceeds the completion window".into(),
            ));
        }
        Ok(self.completions[dep as usize % COMPLETION_WINDOW])
    }

    fn set_completion(&mut self, tick: u64) {
        self.completions[self.index as usize % COMPLETION_WINDOW] = tick;
    }

    /// Advances the model by one instruction.
    pub fn step(&mut self, instr: &Instruction) -> Result<StepStatus> {
        if self.halted {
            return Ok(StepStatus::Halted);
        }
        let p = &self.profile;
        let kind = instr.kind;

        // 1. In-order floor and dependencies.
        let mut t = self.issue_floor;
        for d in instr.deps.as_slice() {
            t = t.max(self.completion_of(*d)?);
        }

        // 2. Store-release fence.
        if kind.is_store_class() && self.store_release > t {
            t = self.store_release;
            self.counters.tag_check_stalls += 1;
        }

        // 3. Port.
        let port = port_of(kind);
        if port != Port::None {
            t = t.max(self.port_free[port as usize]);
        }

        // Non-memory instructions are done here.
        if !kind.is_data_access() && !kind.is_tag_op() {
            let completion = match kind {
                InstrKind::Nop => t + p.alu_ticks,
                _ => t,
            };
            if kind == InstrKind::DmbSt {
                self.store_release = self.store_release.max(self.max_store_completion);
            }
            self.finish_instr(t, port, p.port_ticks(kind), completion);
            return Ok(StepStatus::Continue);
        }

        let addr = instr.addr.untagged();
        let attrs = self.mem.page_attrs(addr)?;
        let is_store = kind == InstrKind::Store;

        // Architectural check (data accesses only).
        let outcome = if kind.is_data_access() {
            tag_check(
                instr.addr,
                instr.width as u64,
                self.mem,
                &self.cfg,
                self.mode,
                is_store,
                instr.kernel,
            )?
        } else {
            CheckOutcome::Skipped(crate::isa::SkipReason::ModeOff)
        };
        let check_issues = match outcome {
            CheckOutcome::Pass | CheckOutcome::Fail => true,
            CheckOutcome::Skipped(r) => r.may_cost() && p.suppressed_checks_still_cost,
        };
        let check_kind = self.mode.check_kind(is_store);

        // 4. Tag-check slot.
        if check_issues {
            let free = self.slots.earliest_free();
            if free > t {
                t = free;
                self.counters.slot_stalls += 1;
            }
            self.counters.tag_checks += 1;
        }

        // 5. Forwarding probe. A successful forward keeps the load off the
        // cache path, so its issue tick is final here. A failed forward
        // (tag-unaware logic tripping over a checked access) falls through
        // to the cache path and is re-validated at the final issue tick,
        // since a miss may wait for an MSHR and the matching store can
        // drain in the meantime.
        let mut forwarded = false;
        let mut wants_fail = false;
        if kind == InstrKind::Load
            && p.stlf_enabled
            && self.sb_match(addr, instr.width, t).is_some()
        {
            if !check_issues || p.stlf_tag_aware {
                forwarded = true;
            } else if seeded_coin(self.seed, self.index, p.stlf_fail_prob) {
                wants_fail = true;
            } else {
                forwarded = true;
            }
        }
        if forwarded {
            self.counters.stlf_hits += 1;
        }

        // 6. Stream training and cache classification.
        let covered = self.streams.observe(addr, p.prefetch);
        let tag_fetch = attrs.taggable && self.mode != MteMode::Off;
        let extra_txn = tag_fetch && p.tag_storage == TagStorageScheme::ReservedRegion;
        let extra = if extra_txn { p.tag_miss_extra_ticks } else { 0 };
        let mut fill_time = None;
        let class = if forwarded {
            None
        } else {
            let class = match self.cache.probe(addr, t) {
                Some(c) => c,
                None if kind == InstrKind::DcGva => {
                    // Whole-line tag write allocates without fetching.
                    self.cache.install(addr, t, tag_fetch);
                    CacheClass::Hit
                }
                None if covered => {
                    self.cache.install(addr, t, tag_fetch);
                    self.counters.line_misses += 1;
                    self.counters.extra_tag_transactions += extra_txn as u64;
                    CacheClass::PrefetchCovered
                }
                None => {
                    let free = self.mshrs.earliest_free();
                    if free > t {
                        t = free;
                    }
                    let fill = t + p.miss_latency_ticks + extra;
                    self.mshrs.acquire(fill);
                    self.cache.install(addr, fill, tag_fetch);
                    self.counters.line_misses += 1;
                    self.counters.extra_tag_transactions += extra_txn as u64;
                    fill_time = Some(fill);
                    CacheClass::Miss
                }
            };
            Some(class)
        };

        // Check resolution time: when the tags are on hand.
        let check_done = if forwarded {
            t + p.stlf_forward_ticks
        } else {
            match class.unwrap() {
                CacheClass::Hit | CacheClass::PrefetchCovered => t + p.check_hit_ticks,
                CacheClass::Arriving(arrival) => arrival.max(t + p.check_hit_ticks),
                CacheClass::Miss => fill_time.unwrap(),
            }
        };
        if check_issues {
            // A demand miss holds its slot until the tags arrive with the
            // fill. Everything else — hits, forwarded data, and accesses
            // coalescing with a fill already in flight — frees the slot
            // after the short bookkeeping hold.
            let slot_release = match class {
                Some(CacheClass::Miss) => fill_time.unwrap(),
                _ if forwarded => t + p.stlf_forward_ticks,
                _ => t + p.check_hit_ticks,
            };
            self.slots.acquire(slot_release);
        }

        let fwd_failed = wants_fail && self.sb_match(addr, instr.width, t).is_some();
        if fwd_failed {
            self.counters.stlf_misses += 1;
        }

        // Store-side forwarding interference: a checked store on a core
        // whose forwarding logic is not tag-aware can conflict and replay.
        let mut port_extra = 0;
        if fwd_failed {
            port_extra += p.stlf_load_replay_ticks;
        }
        if is_store
            && check_issues
            && p.stlf_enabled
            && !p.stlf_tag_aware
            && seeded_coin(self.seed, self.index, p.stlf_fail_prob)
        {
            port_extra += p.stlf_store_replay_ticks;
            self.counters.stlf_misses += 1;
        }

        // Store serialization: under synchronous store checking, each
        // store-class instruction on a tagged page holds younger stores for
        // the check round trip.
        if p.serialized_mte_stores
            && self.mode == MteMode::Sync
            && kind.is_store_class()
            && attrs.taggable
            && (kind.is_tag_op() || check_issues)
        {
            self.store_release = self.store_release.max(t + p.store_tagcheck_roundtrip_ticks);
        }

        // In-order cores stall issue until a synchronous check resolves.
        if check_issues && check_kind == AccessCheck::Sync {
            let stall = match class {
                Some(CacheClass::Miss) => p.sync_stall_miss_ticks,
                _ if is_store => p.sync_stall_hit_store_ticks,
                _ => p.sync_stall_hit_load_ticks,
            };
            if stall > 0 {
                self.issue_floor = self.issue_floor.max(t + stall);
                self.counters.tag_check_stalls += 1;
            }
        }

        // Completion.
        let completion = if kind == InstrKind::Load {
            if forwarded {
                t + p.stlf_forward_ticks
            } else {
                match class.unwrap() {
                    CacheClass::Hit | CacheClass::PrefetchCovered => t + p.hit_latency_ticks,
                    CacheClass::Arriving(arrival) => arrival.max(t + p.hit_latency_ticks),
                    CacheClass::Miss => fill_time.unwrap(),
                }
            }
        } else if kind == InstrKind::Ldg {
            match class.unwrap() {
                CacheClass::Hit | CacheClass::PrefetchCovered => t + p.hit_latency_ticks,
                CacheClass::Arriving(arrival) => arrival.max(t + p.hit_latency_ticks),
                CacheClass::Miss => fill_time.unwrap(),
            }
        } else if is_store {
            let mut c = t + p.store_drain_ticks;
            if let Some(CacheClass::Miss) = class {
                c = c.max(fill_time.unwrap());
            }
            if let Some(CacheClass::Arriving(arrival)) = class {
                c = c.max(arrival);
            }
            if check_issues && check_kind == AccessCheck::Sync {
                c = c.max(check_done);
            }
            c
        } else {
            // Tag ops.
            t + p.port_ticks(kind)
        };

        // Architectural outcome and effects.
        let mut status = StepStatus::Continue;
        if outcome == CheckOutcome::Fail {
            self.counters.faults += 1;
            if check_kind == AccessCheck::Sync {
                self.halted = true;
                status = StepStatus::Halted;
            }
        }
        let faulted_sync = status == StepStatus::Halted;
        if !faulted_sync {
            match kind {
                InstrKind::Store => {
                    if !instr.inert {
                        self.mem.write(addr, &instr.store_bytes())?;
                    }
                }
                InstrKind::Load | InstrKind::Ldg => {}
                _ => crate::isa::exec_tag_op(instr, self.mem)?,
            }
        }

        // Store buffer: entries live from issue until completion.
        if is_store && !faulted_sync {
            self.sb.retain(|e| e.complete > t);
            self.sb.push(SbEntry {
                addr,
                width: instr.width,
                complete: completion,
            });
        }
        if kind.is_store_class() {
            self.max_store_completion = self.max_store_completion.max(completion);
        }

        let occupancy = p.port_ticks(kind) + port_extra;
        self.finish_instr(t, port, occupancy, completion);
        Ok(status)
    }

    fn finish_instr(&mut self, t: u64, port: Port, port_ticks: u64, completion: u64) {
        if port != Port::None {
            self.port_free[port as usize] = t + port_ticks;
        }
        self.issue_floor = self.issue_floor.max(t);
        self.set_completion(completion);
        self.end_of_run = self.end_of_run.max(completion).max(t);
        self.last_issue = t;
        self.last_completion = completion;
        self.index += 1;
    }

    /// Issue tick of the most recent instruction (for cross-checks).
    pub fn last_issue_tick(&self) -> u64 {
        self.last_issue
    }

    pub fn last_completion_tick(&self) -> u64 {
        self.last_completion
    }

    fn sb_match(&self, addr: u64, width: u32, now: u64) -> Option<&SbEntry> {
        self.sb
            .iter()
            .rev()
            .find(|e| e.complete > now && e.addr == addr && e.width >= width)
    }
}

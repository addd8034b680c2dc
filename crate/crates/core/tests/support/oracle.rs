//! Event-driven brute-force scheduler.
//!
//! Walks time one tick at a time and issues the next instruction at the
//! first tick where every resource constraint is satisfiable, maintaining
//! explicit occupancy state for ports, tag-check slots, MSHRs, the store
//! buffer and the store-release fence. It shares the constraint
//! *definitions* (cache, stream table, check semantics, coin draws) with
//! the production scheduler but none of its incremental max-arithmetic.

use tagsim::isa::{
    tag_check, AccessCheck, CheckConfig, CheckOutcome, InstrKind, Instruction, MteMode,
};
use tagsim::seeded_coin;
use tagsim::tagmem::{TagStorageScheme, TaggedMemory};
use tagsim::uarch::{CacheClass, CacheModel, CoreProfile, StreamTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IssueRecord {
    pub issue: u64,
    pub completion: u64,
}

#[derive(Debug, Default)]
struct Occupancy {
    /// Busy-until tick per unit.
    units: Vec<u64>,
}

impl Occupancy {
    fn new(n: usize) -> Self {
        Occupancy { units: vec![0; n] }
    }

    fn free_at(&self, t: u64) -> bool {
        self.units.iter().any(|u| *u <= t)
    }

    fn grab(&mut self, t: u64, release: u64) {
        // Earliest-free unit, lowest index on ties.
        let idx = self
            .units
            .iter()
            .enumerate()
            .filter(|(_, u)| **u <= t)
            .min_by_key(|(i, u)| (**u, *i))
            .map(|(i, _)| i)
            .expect("grab only after free_at");
        self.units[idx] = release;
    }
}

struct SbSlot {
    addr: u64,
    width: u32,
    complete: u64,
}

/// Drives a whole program and returns per-instruction issue/completion
/// plus the total tick count. Memory is mutated exactly like a production
/// run (the oracle applies the same architectural effects).
pub fn brute_force_schedule(
    program: &[Instruction],
    mem: &mut TaggedMemory,
    profile: &CoreProfile,
    cfg: &CheckConfig,
    mode: MteMode,
    seed: u64,
) -> (Vec<IssueRecord>, u64) {
    let mut cache = CacheModel::new(profile.llc_bytes, profile.cache_ways);
    let mut streams = StreamTable::default();
    let mut slots = Occupancy::new(profile.tag_check_slots);
    let mut mshrs = Occupancy::new(profile.mshrs);
    let mut port_free = [0u64; 3]; // load, store, alu
    let mut sb: Vec<SbSlot> = Vec::new();
    let mut store_release = 0u64;
    let mut max_store_completion = 0u64;
    let mut issue_floor = 0u64;
    let mut completions: Vec<u64> = Vec::new();
    let mut records = Vec::new();
    let mut end = 0u64;

    'prog: for (index, instr) in program.iter().enumerate() {
        let kind = instr.kind;
        let port = match kind {
            InstrKind::Load | InstrKind::Ldg => Some(0usize),
            k if k.is_store_class() => Some(1),
            InstrKind::Nop => Some(2),
            _ => None,
        };

        // Hard lower bound that never depends on pool state.
        let mut lower = issue_floor;
        for d in instr.deps.as_slice() {
            lower = lower.max(completions[*d as usize]);
        }
        if kind.is_store_class() {
            lower = lower.max(store_release);
        }
        if let Some(p) = port {
            lower = lower.max(port_free[p]);
        }

        if !kind.is_data_access() && !kind.is_tag_op() {
            let t = lower;
            let completion = if kind == InstrKind::Nop {
                t + profile.alu_ticks
            } else {
                t
            };
            if kind == InstrKind::DmbSt {
                store_release = store_release.max(max_store_completion);
            }
            if let Some(p) = port {
                port_free[p] = t + profile.port_ticks(kind);
            }
            issue_floor = issue_floor.max(t);
            completions.push(completion);
            records.push(IssueRecord {
                issue: t,
                completion,
            });
            end = end.max(completion).max(t);
            continue;
        }

        let addr = instr.addr.untagged();
        let attrs = mem.page_attrs(addr).expect("mapped");
        let is_store = kind == InstrKind::Store;
        let outcome = if kind.is_data_access() {
            tag_check(
                instr.addr,
                instr.width as u64,
                mem,
                cfg,
                mode,
                is_store,
                instr.kernel,
            )
            .expect("mapped")
        } else {
            CheckOutcome::Skipped(tagsim::isa::SkipReason::ModeOff)
        };
        let check_issues = match outcome {
            CheckOutcome::Pass | CheckOutcome::Fail => true,
            CheckOutcome::Skipped(r) => r.may_cost() && profile.suppressed_checks_still_cost,
        };
        let check_kind = mode.check_kind(is_store);
        let coin = seeded_coin(seed, index as u64, profile.stlf_fail_prob);

        // Feasibility scan: walk ticks until everything fits.
        let mut t = lower;
        let (forwarded, fwd_failed, class) = loop {
            if check_issues && !slots.free_at(t) {
                t += 1;
                continue;
            }
            let sb_hit = sb
                .iter()
                .rev()
                .any(|e| e.complete > t && e.addr == addr && e.width >= instr.width);
            let mut forwarded = false;
            let mut wants_fail = false;
            if kind == InstrKind::Load && profile.stlf_enabled && sb_hit {
                if !check_issues || profile.stlf_tag_aware {
                    forwarded = true;
                } else if coin {
                    wants_fail = true;
                } else {
                    forwarded = true;
                }
            }
            if forwarded {
                break (true, false, None);
            }
            let class = match cache.peek(addr, t) {
                Some(c) => c,
                None if kind == InstrKind::DcGva => CacheClass::Hit,
                None if streams.peek_covered(addr, profile.prefetch) => CacheClass::PrefetchCovered,
                None => CacheClass::Miss,
            };
            if class == CacheClass::Miss && !mshrs.free_at(t) {
                t += 1;
                continue;
            }
            break (false, wants_fail && sb_hit, Some(class));
        };

        // Commit the issue at tick t: same state transitions as the
        // production model, re-derived here.
        let covered = streams.observe(addr, profile.prefetch);
        let tag_fetch = attrs.taggable && mode != MteMode::Off;
        let extra_txn = tag_fetch && profile.tag_storage == TagStorageScheme::ReservedRegion;
        let extra = if extra_txn {
            profile.tag_miss_extra_ticks
        } else {
            0
        };
        let mut fill_time = None;
        if !forwarded {
            match cache.probe(addr, t) {
                Some(_) => {}
                None if kind == InstrKind::DcGva => cache.install(addr, t, tag_fetch),
                None if covered => cache.install(addr, t, tag_fetch),
                None => {
                    let fill = t + profile.miss_latency_ticks + extra;
                    mshrs.grab(t, fill);
                    cache.install(addr, fill, tag_fetch);
                    fill_time = Some(fill);
                }
            }
        }
        debug_assert_eq!(fill_time.is_some(), class == Some(CacheClass::Miss));

        let check_done = if forwarded {
            t + profile.stlf_forward_ticks
        } else {
            match class.unwrap() {
                CacheClass::Hit | CacheClass::PrefetchCovered => t + profile.check_hit_ticks,
                CacheClass::Arriving(a) => a.max(t + profile.check_hit_ticks),
                CacheClass::Miss => fill_time.unwrap(),
            }
        };
        if check_issues {
            let release = match class {
                Some(CacheClass::Miss) => fill_time.unwrap(),
                _ if forwarded => t + profile.stlf_forward_ticks,
                _ => t + profile.check_hit_ticks,
            };
            slots.grab(t, release);
        }

        let mut port_extra = 0;
        if fwd_failed {
            port_extra += profile.stlf_load_replay_ticks;
        }
        if is_store && check_issues && profile.stlf_enabled && !profile.stlf_tag_aware && coin {
            port_extra += profile.stlf_store_replay_ticks;
        }

        if profile.serialized_mte_stores
            && mode == MteMode::Sync
            && kind.is_store_class()
            && attrs.taggable
            && (kind.is_tag_op() || check_issues)
        {
            store_release = store_release.max(t + profile.store_tagcheck_roundtrip_ticks);
        }

        if check_issues && check_kind == AccessCheck::Sync {
            let stall = match class {
                Some(CacheClass::Miss) => profile.sync_stall_miss_ticks,
                _ if is_store => profile.sync_stall_hit_store_ticks,
                _ => profile.sync_stall_hit_load_ticks,
            };
            if stall > 0 {
                issue_floor = issue_floor.max(t + stall);
            }
        }

        let completion = match kind {
            InstrKind::Load => {
                if forwarded {
                    t + profile.stlf_forward_ticks
                } else {
                    match class.unwrap() {
                        CacheClass::Hit | CacheClass::PrefetchCovered => {
                            t + profile.hit_latency_ticks
                        }
                        CacheClass::Arriving(a) => a.max(t + profile.hit_latency_ticks),
                        CacheClass::Miss => fill_time.unwrap(),
                    }
                }
            }
            InstrKind::Ldg => match class.unwrap() {
                CacheClass::Hit | CacheClass::PrefetchCovered => t + profile.hit_latency_ticks,
                CacheClass::Arriving(a) => a.max(t + profile.hit_latency_ticks),
                CacheClass::Miss => fill_time.unwrap(),
            },
            InstrKind::Store => {
                let mut c = t + profile.store_drain_ticks;
                if let Some(CacheClass::Miss) = class {
                    c = c.max(fill_time.unwrap());
                }
                if let Some(CacheClass::Arriving(a)) = class {
                    c = c.max(a);
                }
                if check_issues && check_kind == AccessCheck::Sync {
                    c = c.max(check_done);
                }
                c
            }
            _ => t + profile.port_ticks(kind),
        };

        let faulted_sync = outcome == CheckOutcome::Fail && check_kind == AccessCheck::Sync;
        if !faulted_sync {
            match kind {
                InstrKind::Store => {
                    if !instr.inert {
                        mem.write(addr, &instr.store_bytes()).expect("mapped");
                    }
                }
                InstrKind::Load | InstrKind::Ldg => {}
                _ => tagsim::isa::exec_tag_op(instr, mem).expect("valid tag op"),
            }
        }
        if is_store && !faulted_sync {
            sb.retain(|e| e.complete > t);
            sb.push(SbSlot {
                addr,
                width: instr.width,
                complete: completion,
            });
        }
        if kind.is_store_class() {
            max_store_completion = max_store_completion.max(completion);
        }
        if let Some(p) = port {
            port_free[p] = t + profile.port_ticks(kind) + port_extra;
        }
        issue_floor = issue_floor.max(t);
        completions.push(completion);
        records.push(IssueRecord {
            issue: t,
            completion,
        });
        end = end.max(completion).max(t);

        if faulted_sync {
            break 'prog;
        }
    }

    (records, end)
}

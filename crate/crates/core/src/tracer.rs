//! Cost-model comparison of four data-tracing designs over the same traced
//! access stream: a tag-fault tracer dispatched through signals (four
//! user-kernel transitions per event), the same with an in-kernel logging
//! path (two transitions), a page-permission tracer (transitions plus two
//! permission flips and a false-sharing check), and inline per-access
//! instrumentation that taxes every memory access.
//!
//! All four produce the identical event log for a given program and traced
//! set; only the cycle accounting differs.

use std::collections::BTreeSet;

use crate::isa::{execute, CheckConfig, MteMode, Program};
use crate::tagmem::{granules_for_range, TaggedMemory};
use crate::uarch::{simulate, CoreProfile, CostReport, TICKS_PER_CYCLE};
use crate::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracerKind {
    /// Tag-fault tracer with signal delivery.
    MteSignal,
    /// Tag-fault tracer logging inside the kernel.
    MteKernel,
    /// Page-permission tracer.
    PagePerm,
    /// Dynamic instrumentation of every memory access.
    DbiInline,
}

impl TracerKind {
    pub const ALL: [TracerKind; 4] = [
        TracerKind::MteSignal,
        TracerKind::MteKernel,
        TracerKind::PagePerm,
        TracerKind::DbiInline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TracerKind::MteSignal => "mte_signal",
            TracerKind::MteKernel => "mte_kernel",
            TracerKind::PagePerm => "page_perm",
            TracerKind::DbiInline => "dbi_inline",
        }
    }
}

/// Per-mechanism cycle costs.
#[derive(Debug, Clone, Copy)]
pub struct TracerCosts {
    /// One user-kernel transition.
    pub transition_cycles: u64,
    /// Retagging one granule.
    pub retag_cycles: u64,
    /// One page-permission flip (a system call).
    pub mprotect_cycles: u64,
    /// Checking that a permission fault was not false sharing.
    pub false_share_check_cycles: u64,
    /// Inline instrumentation per memory access.
    pub inline_check_cycles: u64,
    /// Re-executing the faulting access.
    pub replay_cycles: u64,
}

impl Default for TracerCosts {
    fn default() -> Self {
        TracerCosts {
            transition_cycles: 1000,
            retag_cycles: 2,
            mprotect_cycles: 3000,
            false_share_check_cycles: 50,
            inline_check_cycles: 4,
            replay_cycles: 4,
        }
    }
}

impl TracerCosts {
    /// Cost of delivering and servicing one traced-access event.
    pub fn per_event_cycles(&self, kind: TracerKind) -> u64 {
        match kind {
            TracerKind::MteSignal => {
                4 * self.transition_cycles + 2 * self.retag_cycles + self.replay_cycles
            }
            TracerKind::MteKernel => {
                2 * self.transition_cycles + 2 * self.retag_cycles + self.replay_cycles
            }
            TracerKind::PagePerm => {
                4 * self.transition_cycles
                    + 2 * self.mprotect_cycles
                    + self.false_share_check_cycles
                    + self.replay_cycles
            }
            // Inline instrumentation has no event delivery; it pays per
            // access instead (plus the log write, folded into the check).
            TracerKind::DbiInline => self.inline_check_cycles,
        }
    }
}

/// One record per access to a traced granule, in program order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub instr_index: u32,
    pub addr: u64,
    pub is_store: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceEventLog {
    pub events: Vec<TraceEvent>,
}

impl TraceEventLog {
    /// CSV export: `seq,instr,addr,kind`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seq,instr,addr,kind\n");
        for e in &self.events {
            out.push_str(&format!(
                "{},{},{:x},{}\n",
                e.seq,
                e.instr_index,
                e.addr,
                if e.is_store { "store" } else { "load" }
            ));
        }
        out
    }
}

/// Outcome of a traced run.
#[derive(Debug, Clone)]
pub struct TraceRun {
    pub log: TraceEventLog,
    pub report: CostReport,
    /// Total memory accesses the program performed.
    pub total_accesses: u64,
}

impl TraceRun {
    pub fn cycles(&self) -> f64 {
        self.report.cycles()
    }
}

/// Runs `program` under a tracer watching `traced` granule bases.
///
/// The log records every access touching a traced granule, exactly once,
/// in program order. Costs are the untraced run plus the per-event model;
/// inline instrumentation additionally pays on every access. A tag fault
/// on memory outside the traced set aborts the run: the tracer's tag use
/// and memory-safety tagging must not collide. The run leaves memory
/// exactly as an untraced execution would.
pub fn trace_run(
    program: &Program,
    mem: &mut TaggedMemory,
    traced: &BTreeSet<u64>,
    kind: TracerKind,
    costs: &TracerCosts,
    profile: &CoreProfile,
) -> Result<TraceRun> {
    let cfg = CheckConfig::default();
    let arch = execute(program, mem, &cfg, MteMode::Off)?;

    // Tag faults from non-traced memory would hijack the tracer's fault
    // path; refuse the combination.
    let strict = execute(program, mem, &cfg, MteMode::Sync)?;
    for fault in &strict.faults {
        let addr = match fault {
            crate::isa::FaultRecord::Sync { addr, .. } => addr.untagged(),
            crate::isa::FaultRecord::Async { addr } => addr.untagged(),
        };
        let covered = granules_for_range(addr, 1)
            .iter()
            .all(|g| traced.contains(&g.base()));
        if !covered {
            return Err(SimError::UntracedFault(addr));
        }
    }

    let mut log = TraceEventLog::default();
    let mut total_accesses = 0u64;
    for (instr_index, addr, width, is_store) in arch.accesses() {
        total_accesses += 1;
        let touches_traced = granules_for_range(addr.untagged(), width as u64)
            .iter()
            .any(|g| traced.contains(&g.base()));
        if touches_traced {
            log.events.push(TraceEvent {
                seq: log.events.len() as u64,
                instr_index,
                addr: addr.untagged(),
                is_store,
            });
        }
    }

    // Timing: the untraced run plus the mechanism costs.
    let mut base = simulate(program, mem, profile, &cfg, MteMode::Off)?;
    let events = log.events.len() as u64;
    let mut extra_cycles = events * costs.per_event_cycles(kind);
    if kind == TracerKind::DbiInline {
        extra_cycles += total_accesses * costs.inline_check_cycles;
    }
    base.ticks += extra_cycles * TICKS_PER_CYCLE;

    Ok(TraceRun {
        log,
        report: base,
        total_accesses,
    })
}

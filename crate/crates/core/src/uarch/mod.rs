//! Timing model layered on the architectural semantics.
//!
//! All durations are integer ticks at [`TICKS_PER_CYCLE`] per cycle so the
//! scheduler stays exact and cross-checkable against an event-driven
//! re-execution. A [`CoreProfile`] holds every knob that distinguishes the
//! shipped cores: issue costs per instruction kind, the bounded pool of
//! in-flight tag-check slots, store serialization, store-to-load-forwarding
//! behavior, cache geometry, and prefetcher reach.

mod cache;
mod presets;
mod sim;

pub use cache::{CacheClass, CacheModel, PrefetchKind, StreamTable};
pub use presets::{builtin_profile, builtin_profile_names, profile_from_toml, profile_to_toml};
pub use sim::{SimCore, StepStatus};

use crate::isa::{CheckConfig, InstrKind, MteMode, Program};
use crate::tagmem::TagStorageScheme;
use crate::workloads::{gen_llbench, LLBenchParams};
use crate::{Result, SimError};

/// Fixed-point time base: one CPU cycle is this many ticks. Twelve divides
/// evenly by every issue rate the presets use.
pub const TICKS_PER_CYCLE: u64 = 12;

/// Per-kind issue occupancy and the rest of a core's timing knobs.
///
/// Tick fields are in ticks ([`TICKS_PER_CYCLE`] per cycle). Throughput of a
/// kind is `TICKS_PER_CYCLE / <kind>_ticks` ops per cycle.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoreProfile {
    pub name: String,

    // Issue occupancy per kind (port busy time).
    pub load_ticks: u64,
    pub store_ticks: u64,
    pub alu_ticks: u64,
    pub ldg_ticks: u64,
    pub stg_ticks: u64,
    pub st2g_ticks: u64,
    pub stzg_ticks: u64,
    pub stz2g_ticks: u64,
    pub stgp_ticks: u64,
    pub dcgva_ticks: u64,

    /// Load completion on a cache hit.
    pub hit_latency_ticks: u64,
    /// Demand-miss fill latency.
    pub miss_latency_ticks: u64,
    /// Extra fill latency for the separate tag transaction under
    /// `ReservedRegion` storage (zero for `CoLocated`).
    pub tag_miss_extra_ticks: u64,
    /// Concurrent outstanding fills.
    pub mshrs: usize,
    pub llc_bytes: u64,
    pub cache_ways: usize,
    pub prefetch: PrefetchKind,
    pub tag_storage: TagStorageScheme,

    /// Synchronous-check stores act as a store barrier: each blocks younger
    /// stores until its tag check round trip completes.
    pub serialized_mte_stores: bool,
    pub store_tagcheck_roundtrip_ticks: u64,
    /// Time a store needs to leave the store buffer (drain) on a hit; a
    /// missing store stays in flight until its fill.
    pub store_drain_ticks: u64,

    /// Bounded pool tracking in-flight tag checks (loads and stores share
    /// it). Checks are issued in both SYNC and ASYNC.
    pub tag_check_slots: usize,
    /// How long a check holds its slot when the tags are already on hand.
    pub check_hit_ticks: u64,
    /// Fault-suppressing register settings still issue (and pay for) the
    /// comparison on this core.
    pub suppressed_checks_still_cost: bool,

    // Store-to-load forwarding.
    pub stlf_enabled: bool,
    pub stlf_tag_aware: bool,
    /// Forward latency on success.
    pub stlf_forward_ticks: u64,
    /// Probability a checked access trips over tag-unaware forwarding.
    pub stlf_fail_prob: f64,
    /// Port penalty for a load whose forward failed and replayed.
    pub stlf_load_replay_ticks: u64,
    /// Port penalty for a checked store that conflicted with the forwarding
    /// logic.
    pub stlf_store_replay_ticks: u64,

    /// In-order check handling: a synchronously checked access stalls issue
    /// of the next instruction until its check resolves. Zero on
    /// out-of-order cores.
    pub sync_stall_hit_load_ticks: u64,
    pub sync_stall_hit_store_ticks: u64,
    pub sync_stall_miss_ticks: u64,

    /// Check modes this core supports.
    pub modes: Vec<MteMode>,
}

impl CoreProfile {
    pub fn port_ticks(&self, kind: InstrKind) -> u64 {
        match kind {
            InstrKind::Load => self.load_ticks,
            InstrKind::Store => self.store_ticks,
            InstrKind::Nop => self.alu_ticks,
            InstrKind::Ldg => self.ldg_ticks,
            InstrKind::Stg => self.stg_ticks,
            InstrKind::St2g => self.st2g_ticks,
            InstrKind::Stzg => self.stzg_ticks,
            InstrKind::Stz2g => self.stz2g_ticks,
            InstrKind::Stgp => self.stgp_ticks,
            InstrKind::DcGva => self.dcgva_ticks,
            InstrKind::DmbSt | InstrKind::Syscall => 0,
        }
    }

    pub fn supports(&self, mode: MteMode) -> bool {
        mode == MteMode::Off || self.modes.contains(&mode)
    }

    /// How this core treats checks whose faults are suppressed.
    pub fn fault_behavior(&self) -> crate::isa::FaultBehaviorProfile {
        crate::isa::FaultBehaviorProfile {
            suppressed_checks_still_cost: self.suppressed_checks_still_cost,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tag_check_slots == 0 {
            return Err(SimError::Profile("tag_check_slots must be >= 1".into()));
        }
        if self.mshrs == 0 {
            return Err(SimError::Profile("mshrs must be >= 1".into()));
        }
        let lines = self.llc_bytes / crate::tagmem::LINE_BYTES;
        if lines == 0
            || self.cache_ways == 0
            || !lines.is_multiple_of(self.cache_ways as u64)
            || !(lines / self.cache_ways as u64).is_power_of_two()
        {
            return Err(SimError::Profile(format!(
                "bad cache geometry: {} bytes / {} ways",
                self.llc_bytes, self.cache_ways
            )));
        }
        if !(0.0..=1.0).contains(&self.stlf_fail_prob) {
            return Err(SimError::Profile("stlf_fail_prob must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// Event counters accumulated by a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    /// Tag comparisons issued (including suppressed-but-costed ones).
    pub tag_checks: u64,
    /// Issues delayed by store serialization or in-order check stalls.
    pub tag_check_stalls: u64,
    /// Issues delayed waiting for a free tag-check slot.
    pub slot_stalls: u64,
    pub stlf_hits: u64,
    pub stlf_misses: u64,
    /// Line fills (demand and prefetch).
    pub line_misses: u64,
    /// Additional tag-fetch memory transactions (reserved-region storage).
    pub extra_tag_transactions: u64,
    pub faults: u64,
}

/// Outcome of one timed run.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub ticks: u64,
    pub instructions: u64,
    pub counts: Counters,
}

impl CostReport {
    pub fn cycles(&self) -> f64 {
        self.ticks as f64 / TICKS_PER_CYCLE as f64
    }

    pub fn slowdown_vs(&self, baseline: &CostReport) -> f64 {
        self.ticks as f64 / baseline.ticks.max(1) as f64
    }

    /// CSV cell block shared by every exporter:
    /// `cycles,tag_checks,tag_check_stalls,slot_stalls,stlf_hits,stlf_misses,line_misses,extra_tag_transactions,faults`.
    pub fn csv_cells(&self) -> String {
        let c = &self.counts;
        format!(
            "{:.2},{},{},{},{},{},{},{},{}",
            self.cycles(),
            c.tag_checks,
            c.tag_check_stalls,
            c.slot_stalls,
            c.stlf_hits,
            c.stlf_misses,
            c.line_misses,
            c.extra_tag_transactions,
            c.faults
        )
    }

    pub const CSV_HEADER: &'static str = "cycles,tag_checks,tag_check_stalls,slot_stalls,stlf_hits,stlf_misses,line_misses,extra_tag_transactions,faults";
}

/// Runs a program through the timing model. Deterministic: the same inputs
/// (including `seed`, which drives forwarding-failure draws) always produce
/// the same report.
pub fn simulate_seeded(
    program: &Program,
    mem: &mut crate::tagmem::TaggedMemory,
    profile: &CoreProfile,
    cfg: &CheckConfig,
    mode: MteMode,
    seed: u64,
) -> Result<CostReport> {
    let mut core = SimCore::new(mem, profile, cfg, mode, seed);
    for instr in &program.instrs {
        if core.step(instr)? == StepStatus::Halted {
            break;
        }
    }
    Ok(core.report())
}

/// [`simulate_seeded`] with seed 0.
pub fn simulate(
    program: &Program,
    mem: &mut crate::tagmem::TaggedMemory,
    profile: &CoreProfile,
    cfg: &CheckConfig,
    mode: MteMode,
) -> Result<CostReport> {
    simulate_seeded(program, mem, profile, cfg, mode, 0)
}

/// Steady-state issue rate (ops/cycle) of a homogeneous loop of `kind`.
pub fn instruction_throughput(
    profile: &CoreProfile,
    kind: InstrKind,
    mode: MteMode,
    page_tagged: bool,
) -> f64 {
    use crate::isa::Instruction as I;
    use crate::tagmem::{PageAttrs, Tag, TaggedAddr};

    let mut mem = crate::tagmem::TaggedMemory::new();
    let attrs = if page_tagged {
        PageAttrs::user_tagged()
    } else {
        PageAttrs::user_plain()
    };
    let tag = if page_tagged {
        Tag::from_bits(5)
    } else {
        Tag::ZERO
    };
    let addr = crate::isa::map_and_tag(&mut mem, 0x10000, 4096, tag, attrs);
    let n = 2000u64;
    let instr = match kind {
        InstrKind::Load => I::load(addr, 8),
        InstrKind::Store => I::store(addr, 8),
        InstrKind::Nop => I::nop(),
        InstrKind::DmbSt => I::dmb_st(),
        InstrKind::Syscall => I::syscall(),
        _ => I::tag_op(kind, TaggedAddr::make(0x10000, tag)),
    };
    let program = Program::new(vec![instr; n as usize]);

    let cfg = CheckConfig::default();
    let mut core = SimCore::new(&mut mem, profile, &cfg, mode, 0);
    // Warm pass to fill the cache, then a timed pass.
    for i in &program.instrs {
        let _ = core.step(i);
    }
    core.reset_clock_keep_cache();
    for i in &program.instrs {
        let _ = core.step(i);
    }
    let report = core.report();
    n as f64 / report.cycles()
}

/// Result pair of the linked-list stride benchmark.
#[derive(Debug, Clone)]
pub struct LLBenchRun {
    pub mte_on: CostReport,
    pub mte_off: CostReport,
}

impl LLBenchRun {
    pub fn overhead(&self) -> f64 {
        self.mte_on.slowdown_vs(&self.mte_off)
    }
}

/// Builds the linked-list benchmark, evicts the cache, warms up with one
/// untimed traversal, then times one traversal — once with checks in the
/// requested mode and once with them off.
pub fn run_llbench(
    params: &LLBenchParams,
    profile: &CoreProfile,
    mode: MteMode,
) -> Result<LLBenchRun> {
    let cfg = CheckConfig::default();
    let run = |m: MteMode| -> Result<CostReport> {
        let mut bench = gen_llbench(params)?;
        let mut core = SimCore::new(&mut bench.mem, profile, &cfg, m, params.seed);
        core.flush_cache();
        for instr in bench.traversal.iter() {
            core.step(&instr)?;
        }
        core.reset_clock_keep_cache();
        for instr in bench.traversal.iter() {
            core.step(&instr)?;
        }
        Ok(core.report())
    };
    Ok(LLBenchRun {
        mte_on: run(mode)?,
        mte_off: run(MteMode::Off)?,
    })
}

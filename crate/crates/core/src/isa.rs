//! Architectural (untimed) semantics of memory instructions under tagged
//! memory: tag checks, the four check-configuration registers, fault modes,
//! and the tag-manipulation instructions.
//!
//! Checking is split from timing: [`tag_check`] and [`execute`] decide what
//! *happens* (pass, fail, skip, which faults are delivered and when), while
//! the `uarch` module decides what it *costs*.

use std::fmt;

use crate::tagmem::{
    granules_for_range, Granule, PageAttrs, Tag, TaggedAddr, TaggedMemory, GRANULE_BYTES,
    LINE_BYTES,
};
use crate::{Result, SimError};

/// Tag-check mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MteMode {
    Off,
    /// Precise fault at the offending instruction.
    Sync,
    /// Sticky flag, reported at the next syscall (or end of program).
    Async,
    /// Loads check as Sync, stores as Async.
    Asymm,
}

impl MteMode {
    /// How an individual access is checked under this mode.
    pub fn check_kind(self, is_store: bool) -> AccessCheck {
        match self {
            MteMode::Off => AccessCheck::None,
            MteMode::Sync => AccessCheck::Sync,
            MteMode::Async => AccessCheck::Async,
            MteMode::Asymm => {
                if is_store {
                    AccessCheck::Async
                } else {
                    AccessCheck::Sync
                }
            }
        }
    }
}

impl fmt::Display for MteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MteMode::Off => "off",
            MteMode::Sync => "sync",
            MteMode::Async => "async",
            MteMode::Asymm => "asymm",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for MteMode {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(MteMode::Off),
            "sync" => Ok(MteMode::Sync),
            "async" => Ok(MteMode::Async),
            "asymm" => Ok(MteMode::Asymm),
            other => Err(SimError::Profile(format!("unknown mode `{other}`"))),
        }
    }
}

/// How one access is checked once the mode is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessCheck {
    None,
    Sync,
    Async,
}

/// The check-configuration registers.
///
/// `tcf0`/`tcf` enable tag-check *faults* for user and kernel accesses
/// respectively; `tco` overrides every check; `tcma1` disables checks for
/// tag-0 accesses made by kernel code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckConfig {
    pub tcf0: bool,
    pub tcf: bool,
    pub tco: bool,
    pub tcma1: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        // Faults enabled everywhere, no overrides.
        CheckConfig {
            tcf0: true,
            tcf: true,
            tco: false,
            tcma1: false,
        }
    }
}

impl CheckConfig {
    /// Typical process configuration: user accesses fault, kernel accesses
    /// have faults disabled through `tcf` and nothing else.
    pub fn user_faults_only() -> Self {
        CheckConfig {
            tcf0: true,
            tcf: false,
            tco: false,
            tcma1: false,
        }
    }
}

/// Whether an implementation that suppresses faults (rather than checks)
/// still pays for the comparison. Architectural outcomes are identical
/// either way; only the timing model reads this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FaultBehaviorProfile {
    pub suppressed_checks_still_cost: bool,
}

/// Why a check did not happen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    ModeOff,
    PageNotTaggable,
    /// Checks explicitly disabled for tag-0 kernel accesses (`tcma1`); never
    /// costs anything on any implementation.
    Tcma,
    /// Fault delivery disabled via `tco`; implementations may still perform
    /// (and charge for) the comparison.
    TcoSet,
    /// Fault delivery disabled via the relevant `tcf` register; same timing
    /// caveat as `TcoSet`.
    TcfDisabled,
}

impl SkipReason {
    /// True when an implementation with `suppressed_checks_still_cost` still
    /// issues the comparison for this skip.
    pub fn may_cost(self) -> bool {
        matches!(self, SkipReason::TcoSet | SkipReason::TcfDisabled)
    }
}

/// Outcome of checking one access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckOutcome {
    Pass,
    Fail,
    Skipped(SkipReason),
}

impl CheckOutcome {
    pub fn is_skipped(self) -> bool {
        matches!(self, CheckOutcome::Skipped(_))
    }
}

/// Checks one data access against memory tags.
///
/// Every granule covered by `[addr, addr + len)` must match the address
/// tag; any mismatch fails. Skips happen for mode-off, untagged pages, the
/// `tco` override, `tcma1` on tag-0 kernel accesses, and fault-disabled
/// `tcf`/`tcf0`.
pub fn tag_check(
    addr: TaggedAddr,
    len: u64,
    mem: &TaggedMemory,
    cfg: &CheckConfig,
    mode: MteMode,
    is_store: bool,
    kernel: bool,
) -> Result<CheckOutcome> {
    let attrs = mem.page_attrs(addr.untagged())?;
    if mode.check_kind(is_store) == AccessCheck::None {
        return Ok(CheckOutcome::Skipped(SkipReason::ModeOff));
    }
    if !attrs.taggable {
        return Ok(CheckOutcome::Skipped(SkipReason::PageNotTaggable));
    }
    if cfg.tco {
        return Ok(CheckOutcome::Skipped(SkipReason::TcoSet));
    }
    if cfg.tcma1 && kernel && addr.tag().is_zero() {
        return Ok(CheckOutcome::Skipped(SkipReason::Tcma));
    }
    let fault_enable = if kernel { cfg.tcf } else { cfg.tcf0 };
    if !fault_enable {
        return Ok(CheckOutcome::Skipped(SkipReason::TcfDisabled));
    }
    let want = addr.tag();
    for g in granules_for_range(addr.untagged(), len) {
        if mem.get_tag(g)? != want {
            return Ok(CheckOutcome::Fail);
        }
    }
    Ok(CheckOutcome::Pass)
}

/// Instruction kinds understood by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstrKind {
    Load,
    Store,
    /// Set one granule's tag.
    Stg,
    /// Set two consecutive granules' tags.
    St2g,
    /// Set one granule's tag and zero its data.
    Stzg,
    /// Set two granules' tags and zero their data.
    Stz2g,
    /// Store 16 data bytes and set the granule tag.
    Stgp,
    /// Tag the whole cache line containing the address (4 granules).
    DcGva,
    /// Read a granule tag.
    Ldg,
    /// Store barrier: younger stores wait for older stores to complete.
    DmbSt,
    /// Kernel entry marker; pending asynchronous faults are delivered here.
    Syscall,
    /// Compute filler.
    Nop,
}

impl InstrKind {
    pub fn is_data_access(self) -> bool {
        matches!(self, InstrKind::Load | InstrKind::Store)
    }

    /// Instructions that go down the store pipeline.
    pub fn is_store_class(self) -> bool {
        matches!(
            self,
            InstrKind::Store
                | InstrKind::Stg
                | InstrKind::St2g
                | InstrKind::Stzg
                | InstrKind::Stz2g
                | InstrKind::Stgp
                | InstrKind::DcGva
        )
    }

    pub fn is_tag_op(self) -> bool {
        matches!(
            self,
            InstrKind::Stg
                | InstrKind::St2g
                | InstrKind::Stzg
                | InstrKind::Stz2g
                | InstrKind::Stgp
                | InstrKind::DcGva
                | InstrKind::Ldg
        )
    }

    /// Granules written by a tag op at `addr`.
    pub fn tag_op_granules(self) -> u64 {
        match self {
            InstrKind::Stg | InstrKind::Stzg | InstrKind::Stgp => 1,
            InstrKind::St2g | InstrKind::Stz2g => 2,
            InstrKind::DcGva => LINE_BYTES / GRANULE_BYTES,
            _ => 0,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            InstrKind::Load => "load",
            InstrKind::Store => "store",
            InstrKind::Stg => "stg",
            InstrKind::St2g => "st2g",
            InstrKind::Stzg => "stzg",
            InstrKind::Stz2g => "stz2g",
            InstrKind::Stgp => "stgp",
            InstrKind::DcGva => "dcgva",
            InstrKind::Ldg => "ldg",
            InstrKind::DmbSt => "dmbst",
            InstrKind::Syscall => "syscall",
            InstrKind::Nop => "nop",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<InstrKind> {
        Some(match s.to_ascii_lowercase().as_str() {
            "load" | "ldr" => InstrKind::Load,
            "store" | "str" => InstrKind::Store,
            "stg" => InstrKind::Stg,
            "st2g" => InstrKind::St2g,
            "stzg" => InstrKind::Stzg,
            "stz2g" => InstrKind::Stz2g,
            "stgp" => InstrKind::Stgp,
            "dcgva" => InstrKind::DcGva,
            "ldg" => InstrKind::Ldg,
            "dmbst" => InstrKind::DmbSt,
            "syscall" => InstrKind::Syscall,
            "nop" => InstrKind::Nop,
            _ => return None,
        })
    }
}

/// Register-dataflow links to earlier instructions. At most two, which is
/// all the generated workloads need (address producer plus data producer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Deps {
    slots: [u32; 2],
    len: u8,
}

impl Deps {
    pub const NONE: Deps = Deps {
        slots: [0; 2],
        len: 0,
    };

    pub fn one(a: u32) -> Deps {
        Deps {
            slots: [a, 0],
            len: 1,
        }
    }

    pub fn two(a: u32, b: u32) -> Deps {
        Deps {
            slots: [a, b],
            len: 2,
        }
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.slots[..self.len as usize]
    }

    pub fn push(&mut self, dep: u32) {
        assert!(self.len < 2, "at most two dependency links");
        self.slots[self.len as usize] = dep;
        self.len += 1;
    }
}

/// One abstract instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub kind: InstrKind,
    pub addr: TaggedAddr,
    pub width: u32,
    /// Value written by stores (cycled across the width).
    pub value: u64,
    pub deps: Deps,
    /// Kernel-mode access: `tcf`/`tcma1` govern it instead of `tcf0`.
    pub kernel: bool,
    /// Performs all the pipeline work of the instruction but no
    /// architectural write. Analog stand-in stores use this so a rewritten
    /// program computes the same results as the original.
    pub inert: bool,
}

impl Instruction {
    pub fn new(kind: InstrKind, addr: TaggedAddr, width: u32) -> Instruction {
        Instruction {
            kind,
            addr,
            width,
            value: addr.untagged(),
            deps: Deps::NONE,
            kernel: false,
            inert: false,
        }
    }

    pub fn load(addr: TaggedAddr, width: u32) -> Instruction {
        Instruction::new(InstrKind::Load, addr, width)
    }

    pub fn store(addr: TaggedAddr, width: u32) -> Instruction {
        Instruction::new(InstrKind::Store, addr, width)
    }

    pub fn tag_op(kind: InstrKind, addr: TaggedAddr) -> Instruction {
        let width = (kind.tag_op_granules() * GRANULE_BYTES) as u32;
        Instruction::new(kind, addr, width.max(GRANULE_BYTES as u32))
    }

    pub fn nop() -> Instruction {
        Instruction::new(InstrKind::Nop, TaggedAddr::from_raw(0), 0)
    }

    pub fn syscall() -> Instruction {
        Instruction::new(InstrKind::Syscall, TaggedAddr::from_raw(0), 0)
    }

    pub fn dmb_st() -> Instruction {
        Instruction::new(InstrKind::DmbSt, TaggedAddr::from_raw(0), 0)
    }

    pub fn with_dep(mut self, dep: u32) -> Instruction {
        self.deps.push(dep);
        self
    }

    pub fn with_value(mut self, value: u64) -> Instruction {
        self.value = value;
        self
    }

    pub fn in_kernel(mut self) -> Instruction {
        self.kernel = true;
        self
    }

    /// Bytes a store writes: the little-endian value pattern cycled to
    /// `width`.
    pub fn store_bytes(&self) -> Vec<u8> {
        let pat = self.value.to_le_bytes();
        (0..self.width as usize).map(|i| pat[i % 8]).collect()
    }
}

/// A program: instructions executed in order. Dependencies always point at
/// earlier indices.
#[derive(Debug, Clone, Default)]
pub struct Program {
    pub instrs: Vec<Instruction>,
}

impl Program {
    pub fn new(instrs: Vec<Instruction>) -> Program {
        Program { instrs }
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn push(&mut self, instr: Instruction) -> u32 {
        self.instrs.push(instr);
        (self.instrs.len() - 1) as u32
    }

    /// Text form: one instruction per line, `OP addr_hex width tag [deps...]`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in &self.instrs {
            out.push_str(&format!(
                "{} {:x} {} {}",
                i.kind.mnemonic(),
                i.addr.untagged(),
                i.width,
                i.addr.tag().value(),
            ));
            for d in i.deps.as_slice() {
                out.push_str(&format!(" {d}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text form produced by [`Program::to_text`]. Blank lines
    /// and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Program> {
        let mut instrs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| SimError::ProgramParse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let mut parts = line.split_whitespace();
            let op = parts.next().ok_or_else(|| bad("missing opcode"))?;
            let kind = InstrKind::from_mnemonic(op)
                .ok_or_else(|| bad(&format!("unknown opcode `{op}`")))?;
            let addr = parts
                .next()
                .map(|s| u64::from_str_radix(s.trim_start_matches("0x"), 16))
                .transpose()
                .map_err(|_| bad("bad address"))?
                .unwrap_or(0);
            let width: u32 = parts
                .next()
                .map(|s| s.parse())
                .transpose()
                .map_err(|_| bad("bad width"))?
                .unwrap_or(0);
            let tag: u8 = parts
                .next()
                .map(|s| s.parse())
                .transpose()
                .map_err(|_| bad("bad tag"))?
                .unwrap_or(0);
            if tag > Tag::MAX {
                return Err(bad("tag out of range"));
            }
            let mut instr =
                Instruction::new(kind, TaggedAddr::make(addr, Tag::from_bits(tag)), width);
            for dep in parts {
                let d: u32 = dep.parse().map_err(|_| bad("bad dependency index"))?;
                if d as usize >= instrs.len() {
                    return Err(bad("dependency must reference an earlier instruction"));
                }
                if instr.deps.as_slice().len() == 2 {
                    return Err(bad("at most two dependencies"));
                }
                instr.deps.push(d);
            }
            instrs.push(instr);
        }
        Ok(Program::new(instrs))
    }
}

/// A delivered tag fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultRecord {
    /// Precise: carries the faulting instruction index.
    Sync { instr_index: u32, addr: TaggedAddr },
    /// Imprecise: only the address is retained by this model.
    Async { addr: TaggedAddr },
}

/// Architectural events, in program order. The tracer and the workload
/// result checks are built on this stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchEvent {
    Access {
        instr_index: u32,
        addr: TaggedAddr,
        width: u32,
        is_store: bool,
        /// Little-endian digest of the bytes read (loads only; first 8 bytes).
        value: u64,
    },
    TagRead {
        instr_index: u32,
        granule: u64,
        tag: Tag,
    },
    Check {
        instr_index: u32,
        outcome: CheckOutcome,
    },
}

/// Result of an architectural run.
#[derive(Debug, Default)]
pub struct ExecOutcome {
    pub faults: Vec<FaultRecord>,
    pub events: Vec<ArchEvent>,
    /// Index the run stopped at (`len` when it ran to completion).
    pub halted_at: Option<u32>,
}

impl ExecOutcome {
    pub fn accesses(&self) -> impl Iterator<Item = (u32, TaggedAddr, u32, bool)> + '_ {
        self.events.iter().filter_map(|e| match e {
            ArchEvent::Access {
                instr_index,
                addr,
                width,
                is_store,
                ..
            } => Some((*instr_index, *addr, *width, *is_store)),
            _ => None,
        })
    }

    /// Sum of the value digests of all loads; workload generators use this
    /// as the architectural result of a run.
    pub fn load_sum(&self) -> u64 {
        self.events
            .iter()
            .filter_map(|e| match e {
                ArchEvent::Access {
                    is_store: false,
                    value,
                    ..
                } => Some(*value),
                _ => None,
            })
            .fold(0u64, u64::wrapping_add)
    }
}

/// Applies a tag-manipulation instruction to memory.
pub fn exec_tag_op(instr: &Instruction, mem: &mut TaggedMemory) -> Result<()> {
    let addr = instr.addr.untagged();
    let tag = instr.addr.tag();
    match instr.kind {
        InstrKind::Stg | InstrKind::St2g | InstrKind::Stzg | InstrKind::Stz2g | InstrKind::Stgp => {
            if !addr.is_multiple_of(GRANULE_BYTES) {
                return Err(SimError::UnalignedGranule(addr));
            }
            let count = instr.kind.tag_op_granules();
            for i in 0..count {
                mem.set_tag(Granule::new(addr + i * GRANULE_BYTES)?, tag)?;
            }
            match instr.kind {
                InstrKind::Stzg | InstrKind::Stz2g => {
                    mem.write(addr, &vec![0u8; (count * GRANULE_BYTES) as usize])?;
                }
                InstrKind::Stgp => {
                    mem.write(
                        addr,
                        &Instruction {
                            width: 16,
                            ..*instr
                        }
                        .store_bytes(),
                    )?;
                }
                _ => {}
            }
        }
        InstrKind::DcGva => {
            // Tags the whole line containing the address.
            let line = addr & !(LINE_BYTES - 1);
            for i in 0..(LINE_BYTES / GRANULE_BYTES) {
                mem.set_tag(Granule::new(line + i * GRANULE_BYTES)?, tag)?;
            }
        }
        InstrKind::Ldg => {
            // Read-only; the caller records the result via the event log.
            mem.get_tag(Granule::containing(addr))?;
        }
        _ => {}
    }
    Ok(())
}

/// Executes a program architecturally.
///
/// Sync mismatches halt at the faulting instruction with memory reflecting
/// only prior instructions. Async mismatches are queued and delivered at the
/// next syscall (or end of program), while execution continues. Asymm splits
/// by load/store.
pub fn execute(
    program: &Program,
    mem: &mut TaggedMemory,
    cfg: &CheckConfig,
    mode: MteMode,
) -> Result<ExecOutcome> {
    let mut out = ExecOutcome::default();
    let mut pending_async: Vec<TaggedAddr> = Vec::new();

    for (idx, instr) in program.instrs.iter().enumerate() {
        let idx = idx as u32;
        match instr.kind {
            InstrKind::Load | InstrKind::Store => {
                let is_store = instr.kind == InstrKind::Store;
                let outcome = tag_check(
                    instr.addr,
                    instr.width as u64,
                    mem,
                    cfg,
                    mode,
                    is_store,
                    instr.kernel,
                )?;
                out.events.push(ArchEvent::Check {
                    instr_index: idx,
                    outcome,
                });
                if outcome == CheckOutcome::Fail {
                    match mode.check_kind(is_store) {
                        AccessCheck::Sync => {
                            out.faults.push(FaultRecord::Sync {
                                instr_index: idx,
                                addr: instr.addr,
                            });
                            out.halted_at = Some(idx);
                            return Ok(out);
                        }
                        AccessCheck::Async => pending_async.push(instr.addr),
                        AccessCheck::None => unreachable!("Fail implies a check ran"),
                    }
                }
                let value = if is_store {
                    if !instr.inert {
                        mem.write(instr.addr.untagged(), &instr.store_bytes())?;
                    }
                    instr.value
                } else {
                    let bytes = mem.read(instr.addr.untagged(), (instr.width as usize).min(8))?;
                    let mut buf = [0u8; 8];
                    buf[..bytes.len()].copy_from_slice(&bytes);
                    u64::from_le_bytes(buf)
                };
                out.events.push(ArchEvent::Access {
                    instr_index: idx,
                    addr: instr.addr,
                    width: instr.width,
                    is_store,
                    value,
                });
            }
            InstrKind::Ldg => {
                let g = Granule::containing(instr.addr.untagged());
                let tag = mem.get_tag(g)?;
                out.events.push(ArchEvent::TagRead {
                    instr_index: idx,
                    granule: g.base(),
                    tag,
                });
            }
            InstrKind::Syscall => {
                for addr in pending_async.drain(..) {
                    out.faults.push(FaultRecord::Async { addr });
                }
            }
            InstrKind::DmbSt | InstrKind::Nop => {}
            _ => exec_tag_op(instr, mem)?,
        }
    }
    // Anything still pending is reported at end of program.
    for addr in pending_async.drain(..) {
        out.faults.push(FaultRecord::Async { addr });
    }
    Ok(out)
}

/// Convenience for tests and workloads: maps a region and tags it with one
/// tag, returning the matching tagged address of `base`.
pub fn map_and_tag(
    mem: &mut TaggedMemory,
    base: u64,
    len: u64,
    tag: Tag,
    attrs: PageAttrs,
) -> TaggedAddr {
    mem.map(base, len, attrs);
    if attrs.taggable && !tag.is_zero() {
        for g in granules_for_range(base, len) {
            mem.set_tag(g, tag).expect("taggable page");
        }
    }
    TaggedAddr::make(base, tag)
}

//! Generators for the diagnostic microbenchmarks: the linked-list stride
//! walk, the store-tight loop (with its barrier control), the RAR/WAW/RAW
//! chains, the buffer-revocation scenario, the tracer workload, and two
//! small loops the analog comparison leans on.
//!
//! Every generator is deterministic under its seed. The big walks are
//! exposed as instruction streams a simulator can consume without
//! materializing millions of instructions; `Program` views exist for the
//! small instances the architectural tests use.

use std::collections::BTreeSet;

use crate::alloc::{bulk_tag, BulkTagStrategy};
use crate::isa::{Instruction, Program};
use crate::tagmem::{
    granules_for_range, PageAttrs, Tag, TaggedAddr, TaggedMemory, GRANULE_BYTES, LINE_BYTES,
};
use crate::{Result, Rng64, SimError};

const SIM_MEMORY_BUDGET: u64 = 256 << 20;

/// Parameters of the linked-list stride benchmark: `nodes` list elements,
/// each owning an `array_bytes` byte array summed at `stride`-byte steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LLBenchParams {
    pub nodes: u64,
    pub array_bytes: u64,
    pub stride: u64,
    pub seed: u64,
}

impl LLBenchParams {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.array_bytes == 0 || self.stride == 0 {
            return Err(SimError::Profile(
                "llbench parameters must be positive".into(),
            ));
        }
        if self.stride > self.array_bytes {
            return Err(SimError::Profile(
                "stride must not exceed the array size".into(),
            ));
        }
        if !self.array_bytes.is_multiple_of(GRANULE_BYTES) {
            return Err(SimError::Profile(
                "array size must be granule-aligned".into(),
            ));
        }
        if self.footprint() > SIM_MEMORY_BUDGET {
            return Err(SimError::OutOfSimMemory);
        }
        Ok(())
    }

    pub fn footprint(&self) -> u64 {
        self.nodes * (self.array_bytes + NODE_STRUCT_BYTES)
    }

    /// Array loads per node.
    pub fn loads_per_node(&self) -> u64 {
        self.array_bytes.div_ceil(self.stride)
    }

    /// Total loads in one traversal: one node-struct load plus the strided
    /// array loads, per node.
    pub fn total_loads(&self) -> u64 {
        self.nodes * (1 + self.loads_per_node())
    }
}

const NODE_STRUCT_BYTES: u64 = 16;
const LL_NODE_BASE: u64 = 0x1000_0000;
const LL_ARRAY_BASE: u64 = 0x8000_0000;
const LL_NODE_TAG: u8 = 3;

/// The built benchmark: memory plus a traversal description.
pub struct LLBench {
    pub mem: TaggedMemory,
    pub traversal: LLTraversal,
}

/// Traversal layout: node structs sit consecutively in list order (the
/// allocation order of a list built front to back), while each node's
/// array lives at a seed-shuffled slot, so walking the list mixes a regular
/// struct stream with one random dereference per node followed by the
/// strided array accesses.
pub struct LLTraversal {
    node_base: u64,
    array_slot: Vec<u64>,
    array_tag: Vec<Tag>,
    array_bytes: u64,
    stride: u64,
}

impl LLTraversal {
    pub fn instruction_count(&self) -> u64 {
        let per_node = 1 + self.array_bytes.div_ceil(self.stride);
        self.array_slot.len() as u64 * per_node
    }

    /// Streams one head-to-tail traversal.
    pub fn iter(&self) -> impl Iterator<Item = Instruction> + '_ {
        let loads_per_node = self.array_bytes.div_ceil(self.stride);
        let body = 1 + loads_per_node;
        (0..self.array_slot.len() as u64).flat_map(move |node| {
            let node_instr = node * body;
            let node_addr = TaggedAddr::make(
                self.node_base + node * NODE_STRUCT_BYTES,
                Tag::from_bits(LL_NODE_TAG),
            );
            let mut head = Instruction::load(node_addr, NODE_STRUCT_BYTES as u32);
            if node > 0 {
                // The next-pointer chain: this struct's address came from
                // the previous struct.
                head = head.with_dep(((node - 1) * body) as u32);
            }
            let slot = self.array_slot[node as usize];
            let tag = self.array_tag[node as usize];
            let stride = self.stride;
            std::iter::once(head).chain((0..loads_per_node).map(move |j| {
                Instruction::load(TaggedAddr::make(slot + j * stride, tag), 1)
                    .with_dep(node_instr as u32)
            }))
        })
    }

    pub fn program(&self) -> Program {
        Program::new(self.iter().collect())
    }
}

/// Builds the linked-list benchmark memory image and traversal.
pub fn gen_llbench(params: &LLBenchParams) -> Result<LLBench> {
    params.validate()?;
    let mut rng = Rng64::new(params.seed);
    let mut mem = TaggedMemory::new();

    let l = params.nodes;
    mem.map(
        LL_NODE_BASE,
        l * NODE_STRUCT_BYTES,
        PageAttrs::user_tagged(),
    );
    for g in granules_for_range(LL_NODE_BASE, l * NODE_STRUCT_BYTES) {
        mem.set_tag(g, Tag::from_bits(LL_NODE_TAG))?;
    }

    // Shuffle the array slots: node order and array placement decorrelate.
    let mut slots: Vec<u64> = (0..l).collect();
    rng.shuffle(&mut slots);

    mem.map(
        LL_ARRAY_BASE,
        l * params.array_bytes,
        PageAttrs::user_tagged(),
    );
    let mut array_slot = Vec::with_capacity(l as usize);
    let mut array_tag = Vec::with_capacity(l as usize);
    let mut fill = vec![0u8; params.array_bytes as usize];
    for node in 0..l {
        let base = LL_ARRAY_BASE + slots[node as usize] * params.array_bytes;
        let tag = Tag::from_bits(1 + rng.below(15) as u8);
        for g in granules_for_range(base, params.array_bytes) {
            mem.set_tag(g, tag)?;
        }
        for b in fill.iter_mut() {
            *b = rng.next_u64() as u8;
        }
        mem.write(base, &fill)?;
        // The struct holds (next, array) pointers.
        let next = if node + 1 < l {
            LL_NODE_BASE + (node + 1) * NODE_STRUCT_BYTES
        } else {
            0
        };
        let mut struct_bytes = [0u8; 16];
        struct_bytes[..8].copy_from_slice(&next.to_le_bytes());
        struct_bytes[8..].copy_from_slice(&base.to_le_bytes());
        mem.write(LL_NODE_BASE + node * NODE_STRUCT_BYTES, &struct_bytes)?;
        array_slot.push(base);
        array_tag.push(tag);
    }

    Ok(LLBench {
        mem,
        traversal: LLTraversal {
            node_base: LL_NODE_BASE,
            array_slot,
            array_tag,
            array_bytes: params.array_bytes,
            stride: params.stride,
        },
    })
}

const STORE_LOOP_BASE: u64 = 0x2000_0000;
const STORE_LOOP_TAG: u8 = 5;

/// Tight loop of independent stores to one fixed address, one filler op per
/// iteration, optionally with an explicit store barrier after each store.
pub fn gen_store_loop(iters: u64, tagged: bool, barrier: bool) -> Result<(Program, TaggedMemory)> {
    if iters == 0 {
        return Err(SimError::Profile(
            "store loop needs at least one iteration".into(),
        ));
    }
    let mut mem = TaggedMemory::new();
    let attrs = if tagged {
        PageAttrs::user_tagged()
    } else {
        PageAttrs::user_plain()
    };
    let tag = if tagged {
        Tag::from_bits(STORE_LOOP_TAG)
    } else {
        Tag::ZERO
    };
    let addr = crate::isa::map_and_tag(&mut mem, STORE_LOOP_BASE, 4096, tag, attrs);
    let mut program = Program::default();
    for _ in 0..iters {
        program.push(Instruction::store(addr, 8));
        if barrier {
            program.push(Instruction::dmb_st());
        }
        program.push(Instruction::nop());
    }
    Ok((program, mem))
}

/// Memory-dependence chain patterns over a large buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemChainKind {
    /// Dependent pointer-chasing loads.
    Rar,
    /// Independent stores to random slots.
    Waw,
    /// Each iteration loads the slot the previous iteration stored.
    Raw,
}

impl std::str::FromStr for MemChainKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rar" => Ok(MemChainKind::Rar),
            "waw" => Ok(MemChainKind::Waw),
            "raw" => Ok(MemChainKind::Raw),
            other => Err(SimError::Profile(format!("unknown chain kind `{other}`"))),
        }
    }
}

const CHAIN_BUFFER_BASE: u64 = 0x8000_0000;
const CHAIN_INDEX_BASE: u64 = 0x2000_0000;
const CHAIN_TAG: u8 = 6;
pub const CHAIN_DEFAULT_BYTES: u64 = 16 << 20;

pub struct MemChain {
    pub mem: TaggedMemory,
    pub walk: ChainWalk,
}

/// The access pattern, separate from the memory image so a simulator can
/// hold the memory mutably while streaming instructions.
pub struct ChainWalk {
    kind: MemChainKind,
    /// Slot addresses in visit order.
    targets: Vec<u64>,
}

impl ChainWalk {
    pub fn instruction_count(&self) -> u64 {
        match self.kind {
            MemChainKind::Rar => self.targets.len() as u64,
            MemChainKind::Waw => 2 * self.targets.len() as u64,
            MemChainKind::Raw => 3 * self.targets.len() as u64,
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = Instruction> + '_> {
        let tag = Tag::from_bits(CHAIN_TAG);
        match self.kind {
            MemChainKind::Rar => Box::new(self.targets.iter().enumerate().map(move |(i, addr)| {
                let mut load = Instruction::load(TaggedAddr::make(*addr, tag), 8);
                if i > 0 {
                    load = load.with_dep(i as u32 - 1);
                }
                load
            })),
            MemChainKind::Waw => {
                Box::new(self.targets.iter().enumerate().flat_map(move |(i, addr)| {
                    let idx = Instruction::load(
                        TaggedAddr::make(CHAIN_INDEX_BASE + 8 * i as u64, Tag::ZERO),
                        8,
                    );
                    let store = Instruction::store(TaggedAddr::make(*addr, tag), 8);
                    [idx, store]
                }))
            }
            MemChainKind::Raw => {
                Box::new(self.targets.iter().enumerate().flat_map(move |(i, addr)| {
                    let idx = Instruction::load(
                        TaggedAddr::make(CHAIN_INDEX_BASE + 8 * i as u64, Tag::ZERO),
                        8,
                    );
                    // Read back what the previous iteration wrote, then store
                    // to a fresh random slot.
                    let prev = self.targets[i.saturating_sub(1)];
                    let load = Instruction::load(TaggedAddr::make(prev, tag), 8);
                    let store = Instruction::store(TaggedAddr::make(*addr, tag), 8);
                    [idx, load, store]
                }))
            }
        }
    }

    pub fn program(&self) -> Program {
        Program::new(self.iter().collect())
    }
}

/// Builds a RAR, WAW or RAW pattern over a `buffer_bytes` buffer.
pub fn gen_memchain(kind: MemChainKind, buffer_bytes: u64, seed: u64) -> Result<MemChain> {
    if buffer_bytes == 0 || !buffer_bytes.is_multiple_of(8) {
        return Err(SimError::Profile(
            "buffer size must be a positive multiple of 8".into(),
        ));
    }
    if buffer_bytes > SIM_MEMORY_BUDGET / 2 {
        return Err(SimError::OutOfSimMemory);
    }
    let mut rng = Rng64::new(seed);
    let mut mem = TaggedMemory::new();
    let slots = buffer_bytes / 8;
    mem.map(CHAIN_BUFFER_BASE, buffer_bytes, PageAttrs::user_tagged());
    for g in granules_for_range(CHAIN_BUFFER_BASE, buffer_bytes) {
        mem.set_tag(g, Tag::from_bits(CHAIN_TAG))?;
    }
    // The index buffer is a plain (untagged) sequential array.
    mem.map(CHAIN_INDEX_BASE, slots * 8, PageAttrs::user_plain());

    let targets: Vec<u64> = match kind {
        MemChainKind::Rar => {
            // A chase visiting every slot once: write each slot's successor
            // into it so small instances can be executed architecturally.
            let mut order: Vec<u64> = (0..slots).collect();
            rng.shuffle(&mut order);
            for w in 0..slots as usize {
                let cur = CHAIN_BUFFER_BASE + order[w] * 8;
                let next = CHAIN_BUFFER_BASE + order[(w + 1) % slots as usize] * 8;
                mem.write(cur, &next.to_le_bytes())?;
            }
            order.iter().map(|s| CHAIN_BUFFER_BASE + s * 8).collect()
        }
        MemChainKind::Waw | MemChainKind::Raw => (0..slots)
            .map(|_| CHAIN_BUFFER_BASE + rng.below(slots) * 8)
            .collect(),
    };

    Ok(MemChain {
        mem,
        walk: ChainWalk { kind, targets },
    })
}

/// Protection variants for the shared-buffer revocation scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protection {
    Insecure,
    Copy,
    BufLock,
}

impl std::str::FromStr for Protection {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "insecure" => Ok(Protection::Insecure),
            "copy" => Ok(Protection::Copy),
            "buflock" => Ok(Protection::BufLock),
            other => Err(SimError::Profile(format!("unknown protection `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BufLockScenario {
    /// Size of the shared (sandbox-written) buffer.
    pub buffer_bytes: u64,
    /// Re-entrant rounds: each round revalidates the whole buffer.
    pub rounds: u64,
    pub protection: Protection,
}

const BUFLOCK_SANDBOX_BASE: u64 = 0x3000_0000;
const BUFLOCK_COPY_BASE: u64 = 0x3800_0000;

/// Per round: `Insecure` reads the shared buffer in place; `Copy` copies it
/// out to private memory and reads the copy; `BufLock` revokes the
/// sandbox's access by retagging the buffer, then reads through the fresh
/// tag.
pub fn gen_buflock(scenario: &BufLockScenario) -> Result<(Program, TaggedMemory)> {
    let b = scenario.buffer_bytes;
    if b == 0 || !b.is_multiple_of(GRANULE_BYTES) {
        return Err(SimError::Profile(
            "buffer size must be a positive multiple of 16".into(),
        ));
    }
    let mut mem = TaggedMemory::new();
    // The shared buffer lives on taggable pages (so it can be revoked);
    // the private copy target is on plain pages.
    mem.map(BUFLOCK_SANDBOX_BASE, b, PageAttrs::user_tagged());
    mem.map(BUFLOCK_COPY_BASE, b, PageAttrs::user_plain());

    let words = b / 8;
    let mut program = Program::default();
    for round in 0..scenario.rounds {
        match scenario.protection {
            Protection::Insecure => {
                for w in 0..words {
                    program.push(Instruction::load(
                        TaggedAddr::make(BUFLOCK_SANDBOX_BASE + w * 8, Tag::ZERO),
                        8,
                    ));
                }
            }
            Protection::Copy => {
                for w in 0..words {
                    let src = TaggedAddr::make(BUFLOCK_SANDBOX_BASE + w * 8, Tag::ZERO);
                    let dst = TaggedAddr::make(BUFLOCK_COPY_BASE + w * 8, Tag::ZERO);
                    program.push(Instruction::load(src, 8));
                    program.push(Instruction::store(dst, 8));
                }
                for w in 0..words {
                    program.push(Instruction::load(
                        TaggedAddr::make(BUFLOCK_COPY_BASE + w * 8, Tag::ZERO),
                        8,
                    ));
                }
            }
            Protection::BufLock => {
                // Alternate between two nonzero tags across rounds so each
                // revocation actually changes the tag.
                let tag = Tag::from_bits(1 + (round % 2) as u8);
                for op in bulk_tag(BUFLOCK_SANDBOX_BASE, b, tag, BulkTagStrategy::MixedWidth)? {
                    program.push(op);
                }
                for w in 0..words {
                    program.push(Instruction::load(
                        TaggedAddr::make(BUFLOCK_SANDBOX_BASE + w * 8, tag),
                        8,
                    ));
                }
            }
        }
    }
    Ok((program, mem))
}

const SCAN_BASE: u64 = 0x5000_0000;
const SCAN_TAG: u8 = 4;
const RETAG_BASE: u64 = 0x5800_0000;

/// Cache-resident sequential read loop: `repeats` passes over a
/// `buffer_bytes` buffer of tagged memory. Real check overhead on it is
/// negligible on every out-of-order profile.
pub fn gen_scan(buffer_bytes: u64, repeats: u64) -> Result<(Program, TaggedMemory)> {
    if buffer_bytes == 0 || !buffer_bytes.is_multiple_of(8) {
        return Err(SimError::Profile(
            "buffer size must be a positive multiple of 8".into(),
        ));
    }
    let mut mem = TaggedMemory::new();
    let addr = crate::isa::map_and_tag(
        &mut mem,
        SCAN_BASE,
        buffer_bytes,
        Tag::from_bits(SCAN_TAG),
        PageAttrs::user_tagged(),
    );
    let mut program = Program::default();
    for _ in 0..repeats.max(1) {
        for w in 0..buffer_bytes / 8 {
            program.push(Instruction::load(
                TaggedAddr::make(addr.untagged() + w * 8, addr.tag()),
                8,
            ));
        }
    }
    Ok((program, mem))
}

/// Scan interleaved with whole-line retagging: reads sweep a resident
/// buffer while line-tagging ops cycle over a second region. Retag volume
/// dominates the true cost while a plain-store stand-in for the tag ops
/// would hide behind the loads.
pub fn gen_retag_scan(scan_bytes: u64, retag_bytes: u64) -> Result<(Program, TaggedMemory)> {
    if scan_bytes == 0
        || !scan_bytes.is_multiple_of(8)
        || retag_bytes == 0
        || !retag_bytes.is_multiple_of(LINE_BYTES)
    {
        return Err(SimError::Profile("bad retag-scan sizes".into()));
    }
    let mut mem = TaggedMemory::new();
    let scan = crate::isa::map_and_tag(
        &mut mem,
        SCAN_BASE,
        scan_bytes,
        Tag::from_bits(SCAN_TAG),
        PageAttrs::user_tagged(),
    );
    mem.map(RETAG_BASE, retag_bytes, PageAttrs::user_tagged());

    let loads = scan_bytes / 8;
    let lines = retag_bytes / LINE_BYTES;
    let mut program = Program::default();
    let mut pending = 0u64;
    let mut line = 0u64;
    for w in 0..loads {
        program.push(Instruction::load(
            TaggedAddr::make(scan.untagged() + w * 8, scan.tag()),
            8,
        ));
        pending += lines;
        while pending >= loads && line < lines {
            let tag = Tag::from_bits(1 + (line % 2) as u8);
            program.push(Instruction::tag_op(
                crate::isa::InstrKind::DcGva,
                TaggedAddr::make(RETAG_BASE + line * LINE_BYTES, tag),
            ));
            pending -= loads;
            line += 1;
        }
    }
    Ok((program, mem))
}

/// Sparse-trace workload: a linear pass over a traced buffer, each traced
/// access surrounded by a block of untraced application reads.
pub struct SparseTrace {
    pub program: Program,
    pub mem: TaggedMemory,
    /// Granule bases being traced.
    pub traced: BTreeSet<u64>,
}

const TRACED_BASE: u64 = 0x6000_0000;
const APP_BASE: u64 = 0x6800_0000;
const APP_REGION_BYTES: u64 = 64 << 10;

/// `traced_bytes` of traced memory scanned once with 8-byte loads, with
/// `accesses_per_event - 1` untraced reads of application memory between
/// traced touches.
pub fn gen_sparse_trace(traced_bytes: u64, accesses_per_event: u64) -> Result<SparseTrace> {
    if traced_bytes == 0 || !traced_bytes.is_multiple_of(8) || accesses_per_event == 0 {
        return Err(SimError::Profile("bad sparse-trace parameters".into()));
    }
    let mut mem = TaggedMemory::new();
    // Traced data sits on its own dedicated pages.
    mem.map(TRACED_BASE, traced_bytes, PageAttrs::user_tagged());
    mem.map(APP_BASE, APP_REGION_BYTES, PageAttrs::user_plain());
    let traced: BTreeSet<u64> = granules_for_range(TRACED_BASE, traced_bytes)
        .iter()
        .map(|g| g.base())
        .collect();

    let mut program = Program::default();
    let app_words = APP_REGION_BYTES / 8;
    let mut app = 0u64;
    for w in 0..traced_bytes / 8 {
        for _ in 0..accesses_per_event - 1 {
            program.push(Instruction::load(
                TaggedAddr::make(APP_BASE + (app % app_words) * 8, Tag::ZERO),
                8,
            ));
            app += 1;
        }
        program.push(Instruction::load(
            TaggedAddr::make(TRACED_BASE + w * 8, Tag::ZERO),
            8,
        ));
    }
    Ok(SparseTrace {
        program,
        mem,
        traced,
    })
}

const KERNEL_BASE: u64 = 0x7000_0000;
const USER_BASE: u64 = 0x7800_0000;
const USER_TAG: u8 = 7;

/// Mixed user/kernel store workload. User stores carry proper tags; kernel
/// stores go through untagged (tag-0) pointers to kernel mappings, the
/// pattern whose checks a buggy fault-disable configuration fails to turn
/// off on cores that only suppress faults.
pub fn gen_kernel_mix(user_iters: u64, kernel_iters: u64) -> Result<(Program, TaggedMemory)> {
    let mut mem = TaggedMemory::new();
    let region = 64 << 10;
    let user = crate::isa::map_and_tag(
        &mut mem,
        USER_BASE,
        region,
        Tag::from_bits(USER_TAG),
        PageAttrs::user_tagged(),
    );
    mem.map(KERNEL_BASE, region, PageAttrs::kernel_tagged());

    let words = region / 8;
    let mut program = Program::default();
    let iters = user_iters.max(kernel_iters);
    for i in 0..iters {
        if i < user_iters {
            program.push(Instruction::store(
                TaggedAddr::make(user.untagged() + (i % words) * 8, user.tag()),
                8,
            ));
        }
        if i < kernel_iters {
            program.push(
                Instruction::store(
                    TaggedAddr::make(KERNEL_BASE + (i % words) * 8, Tag::ZERO),
                    8,
                )
                .in_kernel(),
            );
        }
    }
    Ok((program, mem))
}

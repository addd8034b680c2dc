//! Simulated heap allocator with the tagging policies under study:
//! uniform-random tag assignment, selective tagging by size threshold,
//! sticky tag reuse across reallocations, and the bulk-tagging instruction
//! mixes.

use std::collections::BTreeMap;

use crate::isa::{exec_tag_op, InstrKind, Instruction};
use crate::tagmem::{PageAttrs, Tag, TaggedAddr, TaggedMemory, GRANULE_BYTES, LINE_BYTES};
use crate::{Result, Rng64, SimError};

/// Tagging policy knobs.
#[derive(Debug, Clone, Default)]
pub struct AllocPolicy {
    pub tag_rng_seed: u64,
    /// Allocations larger than this stay untagged (tag 0, no tag ops).
    /// `None` tags everything.
    pub selective_threshold: Option<u64>,
    /// Keep the tags a region already has when reusing it; free() stops
    /// retagging too.
    pub sticky_reuse: bool,
    /// Never hand out the tag the region's previous allocation had.
    pub exclude_previous_tag: bool,
}

/// How a byte range gets its tags written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BulkTagStrategy {
    /// One granule per op.
    NaiveStg,
    /// Granule pairs (single-granule tail).
    NaiveSt2g,
    /// Whole lines only; rejects ranges that are not line-aligned.
    LinewiseDcGva,
    /// Line ops for fully covered lines, pair ops for the residue, one
    /// single-granule op for an odd tail — the shape production allocators
    /// use in their unrolled tagging loops.
    MixedWidth,
}

/// Emits the tag-op sequence that tags exactly `[addr, addr + len)` with
/// `tag`. `addr` and `len` must be granule-aligned.
pub fn bulk_tag(
    addr: u64,
    len: u64,
    tag: Tag,
    strategy: BulkTagStrategy,
) -> Result<Vec<Instruction>> {
    if !addr.is_multiple_of(GRANULE_BYTES) {
        return Err(SimError::UnalignedGranule(addr));
    }
    if !len.is_multiple_of(GRANULE_BYTES) {
        return Err(SimError::UnalignedGranule(addr + len));
    }
    let mut ops = Vec::new();
    let granules = len / GRANULE_BYTES;
    let op = |kind: InstrKind, at: u64| Instruction::tag_op(kind, TaggedAddr::make(at, tag));
    match strategy {
        BulkTagStrategy::NaiveStg => {
            for i in 0..granules {
                ops.push(op(InstrKind::Stg, addr + i * GRANULE_BYTES));
            }
        }
        BulkTagStrategy::NaiveSt2g => {
            let mut cur = addr;
            let mut left = granules;
            while left >= 2 {
                ops.push(op(InstrKind::St2g, cur));
                cur += 2 * GRANULE_BYTES;
                left -= 2;
            }
            if left == 1 {
                ops.push(op(InstrKind::Stg, cur));
            }
        }
        BulkTagStrategy::LinewiseDcGva => {
            if !addr.is_multiple_of(LINE_BYTES) || !len.is_multiple_of(LINE_BYTES) {
                return Err(SimError::UnalignedGranule(addr));
            }
            let mut cur = addr;
            while cur < addr + len {
                ops.push(op(InstrKind::DcGva, cur));
                cur += LINE_BYTES;
            }
        }
        BulkTagStrategy::MixedWidth => {
            let mut cur = addr;
            let mut left = granules;
            while left > 0 {
                if cur.is_multiple_of(LINE_BYTES) && left >= 4 {
                    ops.push(op(InstrKind::DcGva, cur));
                    cur += LINE_BYTES;
                    left -= 4;
                    continue;
                }
                let to_align = ((LINE_BYTES - cur % LINE_BYTES) % LINE_BYTES) / GRANULE_BYTES;
                let filler = if to_align > 0 && left >= to_align + 4 {
                    // Reach the next line boundary, then switch to line ops.
                    to_align
                } else {
                    left
                };
                let mut fill = filler;
                while fill >= 2 {
                    ops.push(op(InstrKind::St2g, cur));
                    cur += 2 * GRANULE_BYTES;
                    left -= 2;
                    fill -= 2;
                }
                if fill == 1 {
                    ops.push(op(InstrKind::Stg, cur));
                    cur += GRANULE_BYTES;
                    left -= 1;
                }
            }
        }
    }
    Ok(ops)
}

#[derive(Debug, Clone, Copy)]
struct Region {
    base: u64,
    granules: u64,
    /// Tag of the last allocation that lived here (not the free-time
    /// scramble); 0 if never tagged.
    last_alloc_tag: Tag,
    /// Whether the region's granule tags are currently set from a previous
    /// epoch.
    tags_in_place: bool,
}

/// Statistics the experiments read off the allocator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AllocStats {
    pub mallocs: u64,
    pub frees: u64,
    pub tag_ops: u64,
    pub reused_regions: u64,
}

/// Bump allocator with a free list, bound to a simulated heap range. Tag
/// writes go through [`bulk_tag`] instruction sequences so their cost can
/// be replayed through the timing model.
pub struct Allocator {
    policy: AllocPolicy,
    rng: Rng64,
    heap_base: u64,
    heap_limit: u64,
    cursor: u64,
    free: Vec<Region>,
    live: BTreeMap<u64, Region>,
    /// Allocation order, for trace replay by ordinal.
    history: Vec<u64>,
    tag_op_log: Vec<Instruction>,
    pub stats: AllocStats,
}

pub const DEFAULT_HEAP_BASE: u64 = 0x4000_0000;
pub const DEFAULT_HEAP_BYTES: u64 = 256 << 20;

impl Allocator {
    pub fn new(policy: AllocPolicy) -> Allocator {
        let rng = Rng64::new(policy.tag_rng_seed);
        Allocator {
            policy,
            rng,
            heap_base: DEFAULT_HEAP_BASE,
            heap_limit: DEFAULT_HEAP_BASE + DEFAULT_HEAP_BYTES,
            cursor: DEFAULT_HEAP_BASE,
            free: Vec::new(),
            live: BTreeMap::new(),
            history: Vec::new(),
            tag_op_log: Vec::new(),
            stats: AllocStats::default(),
        }
    }

    pub fn with_heap(mut self, base: u64, bytes: u64) -> Allocator {
        self.heap_base = base;
        self.heap_limit = base + bytes;
        self.cursor = base;
        self
    }

    fn draw_tag(&mut self, exclude: Option<Tag>) -> Tag {
        // Tags 1..=15; 0 stays reserved for untagged memory.
        loop {
            let t = Tag::from_bits(1 + self.rng.below(15) as u8);
            if Some(t) != exclude {
                return t;
            }
        }
    }

    fn emit_tags(&mut self, mem: &mut TaggedMemory, base: u64, len: u64, tag: Tag) -> Result<()> {
        let ops = bulk_tag(base, len, tag, BulkTagStrategy::MixedWidth)?;
        self.stats.tag_ops += ops.len() as u64;
        for op in &ops {
            exec_tag_op(op, mem)?;
        }
        self.tag_op_log.extend(ops);
        Ok(())
    }

    /// Allocates `size` bytes, rounding the region up to whole granules.
    /// The returned address carries the region's tag.
    pub fn malloc_tagged(&mut self, size: u64, mem: &mut TaggedMemory) -> Result<TaggedAddr> {
        assert!(size > 0, "zero-size allocation");
        let granules = size.div_ceil(GRANULE_BYTES);
        let bytes = granules * GRANULE_BYTES;
        let untagged = self
            .policy
            .selective_threshold
            .is_some_and(|limit| size > limit);

        // Large allocations never reuse tagged regions; everything else
        // takes an exact-fit free region first.
        let region = if untagged {
            None
        } else {
            self.free
                .iter()
                .position(|r| r.granules == granules)
                .map(|i| self.free.remove(i))
        };

        let (base, mut region) = match region {
            Some(r) => {
                self.stats.reused_regions += 1;
                (r.base, r)
            }
            None => {
                let base = self.cursor;
                if base + bytes > self.heap_limit {
                    return Err(SimError::OutOfSimMemory);
                }
                self.cursor += bytes;
                mem.map(base, bytes, PageAttrs::user_tagged());
                (
                    base,
                    Region {
                        base,
                        granules,
                        last_alloc_tag: Tag::ZERO,
                        tags_in_place: false,
                    },
                )
            }
        };

        let tag = if untagged {
            Tag::ZERO
        } else if self.policy.sticky_reuse && region.tags_in_place {
            // Tags stay exactly as the previous epoch left them.
            region.last_alloc_tag
        } else {
            let exclude = if self.policy.exclude_previous_tag && !region.last_alloc_tag.is_zero() {
                Some(region.last_alloc_tag)
            } else {
                None
            };
            let t = self.draw_tag(exclude);
            self.emit_tags(mem, base, bytes, t)?;
            t
        };

        region.last_alloc_tag = tag;
        region.tags_in_place = !tag.is_zero();
        self.live.insert(base, region);
        self.history.push(base);
        self.stats.mallocs += 1;
        Ok(TaggedAddr::make(base, tag))
    }

    /// Frees a region. Without sticky reuse the region is scrambled to a
    /// fresh random tag so stale pointers fault.
    pub fn free(&mut self, addr: TaggedAddr, mem: &mut TaggedMemory) -> Result<()> {
        let base = addr.untagged();
        let region = self.live.remove(&base).ok_or(SimError::Unmapped(base))?;
        if !self.policy.sticky_reuse && region.tags_in_place {
            let scramble = self.draw_tag(None);
            self.emit_tags(mem, base, region.granules * GRANULE_BYTES, scramble)?;
        }
        self.stats.frees += 1;
        self.free.push(region);
        Ok(())
    }

    /// Address handed out by the `n`-th malloc (trace replay ids).
    pub fn allocation(&self, ordinal: usize) -> Option<u64> {
        self.history.get(ordinal).copied()
    }

    /// Drains the accumulated tag-op instructions (for cost replay).
    pub fn take_tag_ops(&mut self) -> Vec<Instruction> {
        std::mem::take(&mut self.tag_op_log)
    }
}

/// One line of an allocation trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceOp {
    Malloc { size: u64 },
    Free { id: u64 },
}

/// Parses the `malloc <size>` / `free <id>` trace format.
pub fn parse_alloc_trace(text: &str) -> Result<Vec<TraceOp>> {
    let mut ops = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| SimError::TraceParse {
            line: lineno + 1,
            reason: reason.to_string(),
        };
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("malloc") => {
                let size: u64 = parts
                    .next()
                    .ok_or_else(|| bad("missing size"))?
                    .parse()
                    .map_err(|_| bad("bad size"))?;
                if size == 0 {
                    return Err(bad("size must be positive"));
                }
                ops.push(TraceOp::Malloc { size });
            }
            Some("free") => {
                let id: u64 = parts
                    .next()
                    .ok_or_else(|| bad("missing id"))?
                    .parse()
                    .map_err(|_| bad("bad id"))?;
                ops.push(TraceOp::Free { id });
            }
            Some(op) => return Err(bad(&format!("unknown op `{op}`"))),
            None => {}
        }
    }
    Ok(ops)
}

/// Replays a trace, returning the allocator stats and the tag-op program.
pub fn replay_alloc_trace(
    ops: &[TraceOp],
    policy: AllocPolicy,
    mem: &mut TaggedMemory,
) -> Result<(AllocStats, Vec<Instruction>)> {
    let mut alloc = Allocator::new(policy);
    let mut addrs: Vec<TaggedAddr> = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        match op {
            TraceOp::Malloc { size } => {
                addrs.push(alloc.malloc_tagged(*size, mem)?);
            }
            TraceOp::Free { id } => {
                let addr =
                    addrs
                        .get(*id as usize)
                        .copied()
                        .ok_or_else(|| SimError::TraceParse {
                            line: i + 1,
                            reason: format!("free of unknown allocation {id}"),
                        })?;
                alloc.free(addr, mem)?;
            }
        }
    }
    let log = alloc.take_tag_ops();
    Ok((alloc.stats, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagmem::granules_for_range;

    fn fresh() -> TaggedMemory {
        TaggedMemory::new()
    }

    #[test]
    fn malloc_rounds_to_granules_with_matching_tag() {
        let mut mem = fresh();
        let mut alloc = Allocator::new(AllocPolicy::default());
        let addr = alloc.malloc_tagged(17, &mut mem).unwrap();
        assert!(!addr.tag().is_zero());
        let g = granules_for_range(addr.untagged(), 32);
        assert_eq!(g.len(), 2);
        for granule in g {
            assert_eq!(mem.get_tag(granule).unwrap(), addr.tag());
        }
    }

    #[test]
    fn selective_threshold_leaves_large_allocations_untagged() {
        let mut mem = fresh();
        let mut alloc = Allocator::new(AllocPolicy {
            selective_threshold: Some(32 * 1024),
            ..AllocPolicy::default()
        });
        let addr = alloc.malloc_tagged(40960, &mut mem).unwrap();
        assert_eq!(addr.tag(), Tag::ZERO);
        assert_eq!(alloc.stats.tag_ops, 0);
        // Small allocations still get tagged.
        let small = alloc.malloc_tagged(64, &mut mem).unwrap();
        assert!(!small.tag().is_zero());
        assert!(alloc.stats.tag_ops > 0);
    }

    #[test]
    fn sticky_reuse_pays_tags_once() {
        let mut mem = fresh();
        let mut alloc = Allocator::new(AllocPolicy {
            sticky_reuse: true,
            ..AllocPolicy::default()
        });
        let a = alloc.malloc_tagged(256, &mut mem).unwrap();
        let first_epoch = alloc.stats.tag_ops;
        assert!(first_epoch > 0);
        alloc.free(a, &mut mem).unwrap();
        let b = alloc.malloc_tagged(256, &mut mem).unwrap();
        assert_eq!(alloc.stats.tag_ops, first_epoch);
        assert_eq!(a, b, "sticky reuse keeps the old tag and region");
    }

    #[test]
    fn exclude_previous_tag_guarantees_detection() {
        let mut mem = fresh();
        let mut alloc = Allocator::new(AllocPolicy {
            exclude_previous_tag: true,
            ..AllocPolicy::default()
        });
        for _ in 0..64 {
            let stale = alloc.malloc_tagged(128, &mut mem).unwrap();
            alloc.free(stale, &mut mem).unwrap();
            let fresh_addr = alloc.malloc_tagged(128, &mut mem).unwrap();
            assert_eq!(fresh_addr.untagged(), stale.untagged());
            assert_ne!(fresh_addr.tag(), stale.tag());
            alloc.free(fresh_addr, &mut mem).unwrap();
        }
    }

    #[test]
    fn bulk_tag_op_counts() {
        let t = Tag::from_bits(5);
        // 64 line-aligned bytes.
        let base = 0x1000;
        assert_eq!(
            bulk_tag(base, 64, t, BulkTagStrategy::LinewiseDcGva)
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            bulk_tag(base, 64, t, BulkTagStrategy::NaiveStg)
                .unwrap()
                .len(),
            4
        );
        // 48 bytes: pair + single.
        let ops = bulk_tag(base, 48, t, BulkTagStrategy::MixedWidth).unwrap();
        assert_eq!(
            ops.iter().map(|o| o.kind).collect::<Vec<_>>(),
            vec![InstrKind::St2g, InstrKind::Stg]
        );
        // Unaligned start: line strategy rejects, mixed falls back to pairs.
        assert!(bulk_tag(0x1030, 64, t, BulkTagStrategy::LinewiseDcGva).is_err());
        let ops = bulk_tag(0x1030, 64, t, BulkTagStrategy::MixedWidth).unwrap();
        assert_eq!(
            ops.iter().map(|o| o.kind).collect::<Vec<_>>(),
            vec![InstrKind::St2g, InstrKind::St2g]
        );
    }

    #[test]
    fn bulk_tag_rejects_unaligned() {
        let t = Tag::from_bits(1);
        assert!(bulk_tag(0x1008, 16, t, BulkTagStrategy::NaiveStg).is_err());
        assert!(bulk_tag(0x1000, 24, t, BulkTagStrategy::NaiveStg).is_err());
    }

    #[test]
    fn trace_roundtrip() {
        let ops =
            parse_alloc_trace("malloc 128\nmalloc 64\nfree 0\n# comment\nmalloc 128\n").unwrap();
        assert_eq!(ops.len(), 4);
        let mut mem = fresh();
        let (stats, _) = replay_alloc_trace(&ops, AllocPolicy::default(), &mut mem).unwrap();
        assert_eq!(stats.mallocs, 3);
        assert_eq!(stats.frees, 1);
        assert_eq!(stats.reused_regions, 1);
    }

    #[test]
    fn trace_parse_errors() {
        assert!(parse_alloc_trace("malloc zero\n").is_err());
        assert!(parse_alloc_trace("mmap 12\n").is_err());
        let ops = parse_alloc_trace("free 3\n").unwrap();
        let mut mem = fresh();
        assert!(replay_alloc_trace(&ops, AllocPolicy::default(), &mut mem).is_err());
    }
}

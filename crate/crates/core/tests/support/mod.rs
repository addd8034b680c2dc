//! Test oracles: an event-driven scheduler that re-derives cycle counts by
//! brute-force time stepping, a naive architectural interpreter, random
//! program generators, and a granule-enumeration tag oracle.

// Each test binary uses a different slice of this module.
#![allow(dead_code)]

pub mod genprog;
pub mod naive;
pub mod oracle;

use std::collections::BTreeMap;

use tagsim::isa::{InstrKind, Instruction};
use tagsim::tagmem::{Tag, GRANULE_BYTES, LINE_BYTES};

/// Applies a tag-op instruction sequence to a granule->tag map by plain
/// enumeration (the coverage oracle for bulk-tagging strategies).
pub fn enumerate_tag_ops(ops: &[Instruction]) -> BTreeMap<u64, Tag> {
    let mut tags = BTreeMap::new();
    for op in ops {
        let base = op.addr.untagged();
        let tag = op.addr.tag();
        let granules: Vec<u64> = match op.kind {
            InstrKind::Stg | InstrKind::Stzg | InstrKind::Stgp => vec![base],
            InstrKind::St2g | InstrKind::Stz2g => vec![base, base + GRANULE_BYTES],
            InstrKind::DcGva => {
                let line = base & !(LINE_BYTES - 1);
                (0..LINE_BYTES / GRANULE_BYTES)
                    .map(|i| line + i * GRANULE_BYTES)
                    .collect()
            }
            _ => vec![],
        };
        for g in granules {
            tags.insert(g, tag);
        }
    }
    tags
}

/// Expected tag map for a contiguous range.
pub fn expected_range_tags(addr: u64, len: u64, tag: Tag) -> BTreeMap<u64, Tag> {
    tagsim::tagmem::granules_for_range(addr, len)
        .into_iter()
        .map(|g| (g.base(), tag))
        .collect()
}

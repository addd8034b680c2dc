//! Seeded random program generators for the cross-validation suites.

use tagsim::isa::{CheckConfig, InstrKind, Instruction, Program};
use tagsim::tagmem::{PageAttrs, Tag, TaggedAddr, TaggedMemory, GRANULE_BYTES, PAGE_BYTES};
use tagsim::Rng64;

pub const USER_TAGGED_BASE: u64 = 0x1000;
pub const USER_PLAIN_BASE: u64 = 0x10_000;
pub const KERNEL_BASE: u64 = 0x20_000;

/// Arena with a tagged user page (randomly pre-tagged granules), a plain
/// user page and a tagged kernel page.
pub fn arena(rng: &mut Rng64) -> TaggedMemory {
    let mut mem = TaggedMemory::new();
    mem.map(USER_TAGGED_BASE, PAGE_BYTES, PageAttrs::user_tagged());
    mem.map(USER_PLAIN_BASE, PAGE_BYTES, PageAttrs::user_plain());
    mem.map(KERNEL_BASE, PAGE_BYTES, PageAttrs::kernel_tagged());
    for i in 0..(PAGE_BYTES / GRANULE_BYTES) {
        let g = tagsim::tagmem::Granule::new(USER_TAGGED_BASE + i * GRANULE_BYTES).unwrap();
        mem.set_tag(g, Tag::from_bits(rng.below(16) as u8)).unwrap();
    }
    mem
}

fn random_width(rng: &mut Rng64) -> u32 {
    [1u32, 2, 4, 8, 16, 32][rng.below(6) as usize]
}

/// Fully random program over the arena: mixes every instruction kind, all
/// three page flavors, mismatching tags, dependencies, and kernel accesses.
pub fn random_program(rng: &mut Rng64, len: usize) -> Program {
    let mut program = Program::default();
    for i in 0..len {
        let roll = rng.below(100);
        let instr = if roll < 30 {
            data_access(rng, false)
        } else if roll < 55 {
            data_access(rng, true)
        } else if roll < 75 {
            random_tag_op(rng)
        } else if roll < 85 {
            Instruction::nop()
        } else if roll < 90 {
            Instruction::syscall()
        } else if roll < 95 {
            Instruction::dmb_st()
        } else {
            Instruction::tag_op(
                InstrKind::Ldg,
                TaggedAddr::make(USER_TAGGED_BASE + rng.below(256) * GRANULE_BYTES, Tag::ZERO),
            )
        };
        let mut instr = instr;
        // Sprinkle register dependencies on earlier instructions.
        if i > 0 && rng.below(2) == 0 {
            instr = instr.with_dep(rng.below(i as u64) as u32);
            if i > 1 && rng.below(4) == 0 {
                let d = rng.below(i as u64) as u32;
                if instr.deps.as_slice().len() < 2 {
                    instr.deps.push(d);
                }
            }
        }
        program.push(instr);
    }
    program
}

fn data_access(rng: &mut Rng64, store: bool) -> Instruction {
    let width = random_width(rng);
    let (base, kernel) = match rng.below(4) {
        0 => (USER_PLAIN_BASE, false),
        1 => (KERNEL_BASE, true),
        _ => (USER_TAGGED_BASE, false),
    };
    let offset = rng.below(PAGE_BYTES - width as u64);
    let tag = Tag::from_bits(rng.below(16) as u8);
    let addr = TaggedAddr::make(base + offset, tag);
    let mut i = if store {
        Instruction::store(addr, width).with_value(rng.next_u64())
    } else {
        Instruction::load(addr, width)
    };
    if kernel {
        i = i.in_kernel();
    }
    i
}

fn random_tag_op(rng: &mut Rng64) -> Instruction {
    let kinds = [
        InstrKind::Stg,
        InstrKind::St2g,
        InstrKind::Stzg,
        InstrKind::Stz2g,
        InstrKind::Stgp,
        InstrKind::DcGva,
    ];
    let kind = kinds[rng.below(6) as usize];
    // Keep multi-granule ops inside the page.
    let granule = rng.below(PAGE_BYTES / GRANULE_BYTES - 4);
    let base = match rng.below(4) {
        0 => KERNEL_BASE,
        _ => USER_TAGGED_BASE,
    };
    let addr = TaggedAddr::make(
        base + granule * GRANULE_BYTES,
        Tag::from_bits(rng.below(16) as u8),
    );
    let mut op = Instruction::tag_op(kind, addr);
    if base == KERNEL_BASE {
        op = op.in_kernel();
    }
    op
}

/// Random check configuration.
pub fn random_cfg(rng: &mut Rng64) -> CheckConfig {
    CheckConfig {
        tcf0: rng.below(4) != 0,
        tcf: rng.below(2) == 0,
        tco: rng.below(10) == 0,
        tcma1: rng.below(2) == 0,
    }
}

/// Fault-free program: every access carries the tag its target granules
/// hold, and tag ops retag whole aligned blocks that later accesses then
/// match. To keep it simple, accesses target granule-aligned addresses and
/// never span granules with different tags.
pub fn fault_free_program(rng: &mut Rng64, mem: &TaggedMemory, len: usize) -> Program {
    let mut program = Program::default();
    // Track current tags of the tagged page like the memory will see them.
    let granules = (PAGE_BYTES / GRANULE_BYTES) as usize;
    let mut tags: Vec<u8> = (0..granules)
        .map(|i| {
            mem.get_tag(
                tagsim::tagmem::Granule::new(USER_TAGGED_BASE + i as u64 * GRANULE_BYTES).unwrap(),
            )
            .unwrap()
            .value()
        })
        .collect();
    for i in 0..len {
        let roll = rng.below(100);
        let instr = if roll < 60 {
            // Matching-tag access within one granule.
            let g = rng.below(granules as u64) as usize;
            let width = [1u32, 2, 4, 8][rng.below(4) as usize];
            let offset = rng.below(GRANULE_BYTES - width as u64);
            let addr = TaggedAddr::make(
                USER_TAGGED_BASE + g as u64 * GRANULE_BYTES + offset,
                Tag::from_bits(tags[g]),
            );
            if rng.below(2) == 0 {
                Instruction::load(addr, width)
            } else {
                Instruction::store(addr, width).with_value(rng.next_u64())
            }
        } else if roll < 75 {
            // Untagged-page access: never checked.
            let width = random_width(rng);
            let addr = TaggedAddr::make(
                USER_PLAIN_BASE + rng.below(PAGE_BYTES - width as u64),
                Tag::from_bits(rng.below(16) as u8),
            );
            if rng.below(2) == 0 {
                Instruction::load(addr, width)
            } else {
                Instruction::store(addr, width)
            }
        } else if roll < 85 {
            // Retag a granule pair and remember it.
            let g = (rng.below(granules as u64 - 1) & !1) as usize;
            let tag = rng.below(16) as u8;
            tags[g] = tag;
            tags[g + 1] = tag;
            Instruction::tag_op(
                InstrKind::St2g,
                TaggedAddr::make(
                    USER_TAGGED_BASE + g as u64 * GRANULE_BYTES,
                    Tag::from_bits(tag),
                ),
            )
        } else if roll < 92 {
            Instruction::nop()
        } else if roll < 96 {
            Instruction::syscall()
        } else {
            Instruction::dmb_st()
        };
        let mut instr = instr;
        if i > 0 && rng.below(3) == 0 {
            instr = instr.with_dep(rng.below(i as u64) as u32);
        }
        program.push(instr);
    }
    program
}

/// Fault-free program plus exactly one mismatching access at a random
/// position. Returns (program, faulting index, faulting is_store).
pub fn single_fault_program(
    rng: &mut Rng64,
    mem: &TaggedMemory,
    len: usize,
) -> (Program, u32, bool) {
    // Build without tag ops so one injected mismatch stays the only one.
    let mut program = Program::default();
    let granules = (PAGE_BYTES / GRANULE_BYTES) as usize;
    let tag_of = |g: usize| {
        mem.get_tag(
            tagsim::tagmem::Granule::new(USER_TAGGED_BASE + g as u64 * GRANULE_BYTES).unwrap(),
        )
        .unwrap()
        .value()
    };
    let fault_at = rng.below(len as u64) as u32;
    let mut fault_is_store = false;
    for i in 0..len {
        let g = rng.below(granules as u64) as usize;
        let correct = tag_of(g);
        let make_fault = i as u32 == fault_at;
        let tag = if make_fault {
            // Any wrong tag.
            let mut t = rng.below(16) as u8;
            if t == correct {
                t = (t + 1) % 16;
            }
            t
        } else {
            correct
        };
        let addr = TaggedAddr::make(
            USER_TAGGED_BASE + g as u64 * GRANULE_BYTES,
            Tag::from_bits(tag),
        );
        let store = rng.below(2) == 0;
        if make_fault {
            fault_is_store = store;
        }
        let instr = match (store, rng.below(8)) {
            (_, 7) if !make_fault => Instruction::syscall(),
            (true, _) => Instruction::store(addr, 8).with_value(rng.next_u64()),
            (false, _) => Instruction::load(addr, 8),
        };
        program.push(instr);
    }
    // A trailing syscall so deferred faults always get delivered.
    program.push(Instruction::syscall());
    (program, fault_at, fault_is_store)
}

//! Naive reference interpreter: an independent restatement of the
//! architectural semantics over byte maps, used to cross-check `execute`.

use std::collections::BTreeMap;

use tagsim::isa::{CheckConfig, InstrKind, Instruction, MteMode};
use tagsim::tagmem::{PageAttrs, TaggedMemory, GRANULE_BYTES, LINE_BYTES, PAGE_BYTES};

/// A reference fault: (is_sync, instr_index_for_sync, untagged_addr).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefFault {
    pub sync: bool,
    pub instr_index: Option<u32>,
    pub addr: u64,
}

#[derive(Debug, Default)]
pub struct RefState {
    pub data: BTreeMap<u64, u8>,
    pub tags: BTreeMap<u64, u8>,
    pub faults: Vec<RefFault>,
    pub halted_at: Option<u32>,
}

fn page_attrs(mem: &TaggedMemory, addr: u64) -> PageAttrs {
    mem.page_attrs(addr)
        .expect("reference programs stay mapped")
}

fn read_tag(state: &RefState, mem: &TaggedMemory, granule: u64) -> u8 {
    state.tags.get(&granule).copied().unwrap_or_else(|| {
        mem.get_tag(tagsim::tagmem::Granule::new(granule).unwrap())
            .unwrap()
            .value()
    })
}

fn checks_this(
    cfg: &CheckConfig,
    mode: MteMode,
    is_store: bool,
    attrs: PageAttrs,
    kernel: bool,
    ptr_tag: u8,
) -> bool {
    let mode_on = match mode {
        MteMode::Off => false,
        MteMode::Sync | MteMode::Async => true,
        MteMode::Asymm => true,
    };
    let _ = is_store;
    if !mode_on || !attrs.taggable || cfg.tco {
        return false;
    }
    if cfg.tcma1 && kernel && ptr_tag == 0 {
        return false;
    }
    if kernel {
        cfg.tcf
    } else {
        cfg.tcf0
    }
}

fn is_sync_access(mode: MteMode, is_store: bool) -> bool {
    match mode {
        MteMode::Sync => true,
        MteMode::Asymm => !is_store,
        _ => false,
    }
}

/// Executes the program over fresh byte maps layered on `mem`'s initial
/// contents. `mem` itself is not modified.
pub fn reference_execute(
    program: &[Instruction],
    mem: &TaggedMemory,
    cfg: &CheckConfig,
    mode: MteMode,
) -> RefState {
    let mut st = RefState::default();
    let mut pending: Vec<u64> = Vec::new();

    for (idx, instr) in program.iter().enumerate() {
        let addr = instr.addr.untagged();
        match instr.kind {
            InstrKind::Load | InstrKind::Store => {
                let is_store = instr.kind == InstrKind::Store;
                let attrs = page_attrs(mem, addr);
                let checks = checks_this(
                    cfg,
                    mode,
                    is_store,
                    attrs,
                    instr.kernel,
                    instr.addr.tag().value(),
                );
                let mut mismatch = false;
                if checks {
                    let first = addr & !(GRANULE_BYTES - 1);
                    let last = (addr + instr.width.max(1) as u64 - 1) & !(GRANULE_BYTES - 1);
                    let mut g = first;
                    loop {
                        if read_tag(&st, mem, g) != instr.addr.tag().value() {
                            mismatch = true;
                        }
                        if g == last {
                            break;
                        }
                        g += GRANULE_BYTES;
                    }
                }
                if mismatch {
                    if is_sync_access(mode, is_store) {
                        st.faults.push(RefFault {
                            sync: true,
                            instr_index: Some(idx as u32),
                            addr,
                        });
                        st.halted_at = Some(idx as u32);
                        return st;
                    }
                    pending.push(addr);
                }
                if is_store && !instr.inert {
                    let pat = instr.value.to_le_bytes();
                    for i in 0..instr.width as u64 {
                        st.data.insert(addr + i, pat[(i % 8) as usize]);
                    }
                }
            }
            InstrKind::Stg
            | InstrKind::St2g
            | InstrKind::Stzg
            | InstrKind::Stz2g
            | InstrKind::Stgp => {
                assert_eq!(addr % GRANULE_BYTES, 0, "generator keeps tag ops aligned");
                let n = match instr.kind {
                    InstrKind::St2g | InstrKind::Stz2g => 2,
                    _ => 1,
                };
                for i in 0..n {
                    st.tags
                        .insert(addr + i * GRANULE_BYTES, instr.addr.tag().value());
                }
                match instr.kind {
                    InstrKind::Stzg | InstrKind::Stz2g => {
                        for i in 0..n * GRANULE_BYTES {
                            st.data.insert(addr + i, 0);
                        }
                    }
                    InstrKind::Stgp => {
                        let pat = instr.value.to_le_bytes();
                        for i in 0..16u64 {
                            st.data.insert(addr + i, pat[(i % 8) as usize]);
                        }
                    }
                    _ => {}
                }
            }
            InstrKind::DcGva => {
                let line = addr & !(LINE_BYTES - 1);
                for i in 0..LINE_BYTES / GRANULE_BYTES {
                    st.tags
                        .insert(line + i * GRANULE_BYTES, instr.addr.tag().value());
                }
            }
            InstrKind::Ldg => {}
            InstrKind::Syscall => {
                for a in pending.drain(..) {
                    st.faults.push(RefFault {
                        sync: false,
                        instr_index: None,
                        addr: a,
                    });
                }
            }
            InstrKind::DmbSt | InstrKind::Nop => {}
        }
    }
    for a in pending.drain(..) {
        st.faults.push(RefFault {
            sync: false,
            instr_index: None,
            addr: a,
        });
    }
    st
}

/// Compares the reference state against a `TaggedMemory` after a real
/// `execute` run, over the pages of interest.
pub fn assert_memory_matches(st: &RefState, initial: &TaggedMemory, actual: &TaggedMemory) {
    for (base, _) in initial.pages() {
        let init = initial.read(base, PAGE_BYTES as usize).unwrap();
        let real = actual.read(base, PAGE_BYTES as usize).unwrap();
        for i in 0..PAGE_BYTES {
            let expect = st
                .data
                .get(&(base + i))
                .copied()
                .unwrap_or(init[i as usize]);
            assert_eq!(real[i as usize], expect, "data mismatch at {:#x}", base + i);
        }
        for g in (base..base + PAGE_BYTES).step_by(GRANULE_BYTES as usize) {
            let init_tag = initial
                .get_tag(tagsim::tagmem::Granule::new(g).unwrap())
                .unwrap()
                .value();
            let expect = st.tags.get(&g).copied().unwrap_or(init_tag);
            let real_tag = actual
                .get_tag(tagsim::tagmem::Granule::new(g).unwrap())
                .unwrap()
                .value();
            assert_eq!(real_tag, expect, "tag mismatch at {g:#x}");
        }
    }
}

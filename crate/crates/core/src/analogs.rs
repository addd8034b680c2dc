//! Performance analogs: instruction-level stand-ins that prior estimates
//! used in place of real tagged-memory hardware, as program transforms,
//! plus a comparator that quantifies how far each lands from the simulated
//! truth.
//!
//! One analog replaces every tag-manipulation instruction with a plain
//! store of equal granule coverage and assumes checks are free. The other
//! does the same and additionally shadows every load and store with a dead
//! same-line load to imitate the tag-fetch bandwidth. Both run with checks
//! off.

use crate::isa::{CheckConfig, Deps, InstrKind, Instruction, MteMode, Program};
use crate::tagmem::{TaggedMemory, GRANULE_BYTES};
use crate::uarch::{simulate, CoreProfile};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalogKind {
    /// Tag ops become plain stores; checks assumed free.
    HakcAnalog,
    /// Tag ops become plain stores and every memory access gains a dummy
    /// load from the same line.
    SfiTagAnalog,
}

impl AnalogKind {
    pub fn name(self) -> &'static str {
        match self {
            AnalogKind::HakcAnalog => "hakc",
            AnalogKind::SfiTagAnalog => "sfitag",
        }
    }
}

impl std::str::FromStr for AnalogKind {
    type Err = crate::SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hakc" => Ok(AnalogKind::HakcAnalog),
            "sfitag" => Ok(AnalogKind::SfiTagAnalog),
            other => Err(crate::SimError::Profile(format!(
                "unknown analog `{other}`"
            ))),
        }
    }
}

/// Plain store covering the same granules as a tag op, stripped of its tag
/// bits so nothing checks.
fn store_stand_in(i: &Instruction) -> Instruction {
    let granules = i.kind.tag_op_granules().max(1);
    let addr = match i.kind {
        InstrKind::DcGva => i.addr.untagged() & !(crate::tagmem::LINE_BYTES - 1),
        _ => i.addr.untagged(),
    };
    Instruction {
        kind: InstrKind::Store,
        addr: crate::tagmem::TaggedAddr::make(addr, crate::tagmem::Tag::ZERO),
        width: (granules * GRANULE_BYTES) as u32,
        value: i.value,
        deps: i.deps,
        kernel: i.kernel,
        inert: true,
    }
}

/// Rewrites a program into its analog form. The result is meant to run
/// with checks off; dummy loads are dead (nothing depends on them).
pub fn apply_analog(program: &Program, kind: AnalogKind) -> Program {
    let mut out = Vec::with_capacity(program.instrs.len() * 2);
    // Old-index -> new-index map so dependencies survive insertion.
    let mut remap = Vec::with_capacity(program.instrs.len());
    for instr in &program.instrs {
        let mut instr = *instr;
        let mut deps = Deps::NONE;
        for d in instr.deps.as_slice() {
            deps.push(remap[*d as usize]);
        }
        instr.deps = deps;

        let rewritten = if instr.kind.is_tag_op() && instr.kind != InstrKind::Ldg {
            store_stand_in(&instr)
        } else {
            instr
        };
        remap.push(out.len() as u32);
        out.push(rewritten);

        if kind == AnalogKind::SfiTagAnalog && rewritten.kind.is_data_access() {
            // Dead same-line load shadowing the access.
            let dummy = Instruction::load(
                crate::tagmem::TaggedAddr::make(
                    rewritten.addr.untagged(),
                    crate::tagmem::Tag::ZERO,
                ),
                8,
            );
            out.push(dummy);
        }
    }
    Program::new(out)
}

/// A workload the comparator can replay: the program with tags in place,
/// and the baseline variant with tag ops stripped (what an untagged build
/// would execute).
pub struct AnalogWorkload {
    pub name: String,
    pub program: Program,
    pub make_mem: fn() -> TaggedMemory,
}

/// Strips tag ops (the untagged-build baseline).
pub fn strip_tag_ops(program: &Program) -> Program {
    let mut out = Vec::new();
    let mut remap: Vec<Option<u32>> = Vec::with_capacity(program.instrs.len());
    for instr in &program.instrs {
        if instr.kind.is_tag_op() {
            remap.push(None);
            continue;
        }
        let mut instr = *instr;
        let mut deps = Deps::NONE;
        for d in instr.deps.as_slice() {
            if let Some(nd) = remap[*d as usize] {
                deps.push(nd);
            }
        }
        instr.deps = deps;
        remap.push(Some(out.len() as u32));
        out.push(instr);
    }
    Program::new(out)
}

/// Per-workload comparison row: the real slowdown under checking vs what
/// each analog predicts.
#[derive(Debug, Clone)]
pub struct AnalogComparison {
    pub workload: String,
    pub profile: String,
    pub mode: MteMode,
    pub real_overhead: f64,
    pub hakc_overhead: f64,
    pub sfitag_overhead: f64,
}

impl AnalogComparison {
    pub fn hakc_error(&self) -> f64 {
        self.hakc_overhead - self.real_overhead
    }

    pub fn sfitag_error(&self) -> f64 {
        self.sfitag_overhead - self.real_overhead
    }
}

/// Measures one workload: real = checked run over baseline; analog =
/// transformed run (checks off) over baseline.
pub fn compare_analogs(
    name: &str,
    program: &Program,
    make_mem: impl Fn() -> TaggedMemory,
    profile: &CoreProfile,
    mode: MteMode,
) -> Result<AnalogComparison> {
    let cfg = CheckConfig::default();
    let baseline_program = strip_tag_ops(program);

    let run = |p: &Program, m: MteMode| -> Result<f64> {
        let mut mem = make_mem();
        Ok(simulate(p, &mut mem, profile, &cfg, m)?.ticks as f64)
    };

    let base = run(&baseline_program, MteMode::Off)?;
    let real = run(program, mode)?;
    let hakc = run(&apply_analog(program, AnalogKind::HakcAnalog), MteMode::Off)?;
    let sfitag = run(
        &apply_analog(program, AnalogKind::SfiTagAnalog),
        MteMode::Off,
    )?;

    Ok(AnalogComparison {
        workload: name.to_string(),
        profile: profile.name.clone(),
        mode,
        real_overhead: real / base,
        hakc_overhead: hakc / base,
        sfitag_overhead: sfitag / base,
    })
}

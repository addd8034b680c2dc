//! Shipped core profiles.
//!
//! Four presets cover the behaviors the simulator reproduces:
//!
//! - `perf_x3`: fast out-of-order core that disallows speculative stores
//!   under synchronous checking, so every tagged store acts as a store
//!   barrier. Reserved-region tag storage.
//! - `big_a715`: out-of-order core with a small pool of in-flight tag-check
//!   slots; miss-heavy check streams saturate it. Reserved-region storage.
//! - `little_a510`: in-order core; a synchronous check stalls issue until
//!   it resolves, severely on misses. Reserved-region storage.
//! - `ampere_one`: server core, synchronous checking only, co-located tag
//!   storage (no extra tag transaction on fills), and store-to-load
//!   forwarding that is not tag-aware: checked accesses intermittently
//!   conflict with the forwarding logic and replay. Fault-suppressing
//!   register settings still issue the tag comparison on this core;
//!   `ampere_one_fixed` models the kernel-side fix that stops issuing
//!   checks for untagged kernel accesses.

use crate::isa::MteMode;
use crate::tagmem::TagStorageScheme;
use crate::{Result, SimError};

use super::{CoreProfile, PrefetchKind};

fn all_modes() -> Vec<MteMode> {
    vec![MteMode::Sync, MteMode::Async, MteMode::Asymm]
}

pub fn perf_x3() -> CoreProfile {
    CoreProfile {
        name: "perf_x3".into(),
        load_ticks: 4,  // 3 loads/cycle
        store_ticks: 6, // 2 stores/cycle
        alu_ticks: 12,  // 1 filler op/cycle
        ldg_ticks: 4,
        stg_ticks: 12,
        st2g_ticks: 12,
        stzg_ticks: 12,
        stz2g_ticks: 36,
        stgp_ticks: 12,
        dcgva_ticks: 92, // whole-line tagging is slow on this core
        hit_latency_ticks: 48,
        miss_latency_ticks: 1200,
        tag_miss_extra_ticks: 24,
        mshrs: 28,
        llc_bytes: 8 << 20,
        cache_ways: 16,
        prefetch: PrefetchKind::Stride,
        tag_storage: TagStorageScheme::ReservedRegion,
        serialized_mte_stores: true,
        store_tagcheck_roundtrip_ticks: 89, // ~7.4 cycles per serialized store
        store_drain_ticks: 86,
        tag_check_slots: 32,
        check_hit_ticks: 30,
        suppressed_checks_still_cost: false,
        stlf_enabled: true,
        stlf_tag_aware: true,
        stlf_forward_ticks: 12,
        stlf_fail_prob: 0.0,
        stlf_load_replay_ticks: 0,
        stlf_store_replay_ticks: 0,
        sync_stall_hit_load_ticks: 0,
        sync_stall_hit_store_ticks: 0,
        sync_stall_miss_ticks: 0,
        modes: all_modes(),
    }
}

pub fn big_a715() -> CoreProfile {
    CoreProfile {
        name: "big_a715".into(),
        load_ticks: 5,
        store_ticks: 7,
        alu_ticks: 12,
        ldg_ticks: 6,
        stg_ticks: 7,
        st2g_ticks: 7,
        stzg_ticks: 7,
        stz2g_ticks: 7,
        stgp_ticks: 7,
        dcgva_ticks: 24,
        hit_latency_ticks: 48,
        miss_latency_ticks: 1200,
        tag_miss_extra_ticks: 24,
        mshrs: 24,
        llc_bytes: 8 << 20,
        cache_ways: 16,
        prefetch: PrefetchKind::NextLine,
        tag_storage: TagStorageScheme::ReservedRegion,
        serialized_mte_stores: false,
        store_tagcheck_roundtrip_ticks: 36,
        store_drain_ticks: 36,
        // The small slot pool is what makes miss-heavy check streams slow
        // on this core.
        tag_check_slots: 7,
        check_hit_ticks: 32,
        suppressed_checks_still_cost: false,
        stlf_enabled: true,
        stlf_tag_aware: true,
        stlf_forward_ticks: 12,
        stlf_fail_prob: 0.0,
        stlf_load_replay_ticks: 0,
        stlf_store_replay_ticks: 0,
        sync_stall_hit_load_ticks: 0,
        sync_stall_hit_store_ticks: 0,
        sync_stall_miss_ticks: 0,
        modes: all_modes(),
    }
}

pub fn little_a510() -> CoreProfile {
    CoreProfile {
        name: "little_a510".into(),
        load_ticks: 12,
        store_ticks: 12,
        alu_ticks: 12,
        ldg_ticks: 13,
        stg_ticks: 12,
        st2g_ticks: 26,
        stzg_ticks: 12,
        stz2g_ticks: 27,
        stgp_ticks: 12,
        dcgva_ticks: 40,
        hit_latency_ticks: 48,
        miss_latency_ticks: 1200,
        tag_miss_extra_ticks: 24,
        mshrs: 24,
        llc_bytes: 8 << 20,
        cache_ways: 16,
        prefetch: PrefetchKind::NextLine,
        tag_storage: TagStorageScheme::ReservedRegion,
        serialized_mte_stores: false,
        store_tagcheck_roundtrip_ticks: 36,
        store_drain_ticks: 36,
        tag_check_slots: 4,
        check_hit_ticks: 30,
        suppressed_checks_still_cost: false,
        stlf_enabled: true,
        stlf_tag_aware: true,
        stlf_forward_ticks: 12,
        stlf_fail_prob: 0.0,
        stlf_load_replay_ticks: 0,
        stlf_store_replay_ticks: 0,
        // In-order issue: synchronous checks stall the pipeline until they
        // resolve; a missing check stalls for a long time.
        sync_stall_hit_load_ticks: 2,
        sync_stall_hit_store_ticks: 15,
        sync_stall_miss_ticks: 480,
        modes: all_modes(),
    }
}

pub fn ampere_one() -> CoreProfile {
    CoreProfile {
        name: "ampere_one".into(),
        load_ticks: 6,
        store_ticks: 6,
        alu_ticks: 6,
        ldg_ticks: 6,
        stg_ticks: 12,
        st2g_ticks: 24, // 0.5 ops/cycle
        stzg_ticks: 12,
        stz2g_ticks: 24,
        stgp_ticks: 12,
        dcgva_ticks: 12,
        hit_latency_ticks: 48,
        miss_latency_ticks: 1200,
        tag_miss_extra_ticks: 0,
        mshrs: 32,
        llc_bytes: 8 << 20,
        cache_ways: 16,
        prefetch: PrefetchKind::Stride,
        tag_storage: TagStorageScheme::CoLocated,
        serialized_mte_stores: false,
        store_tagcheck_roundtrip_ticks: 36,
        store_drain_ticks: 36,
        tag_check_slots: 64,
        check_hit_ticks: 30,
        suppressed_checks_still_cost: true,
        stlf_enabled: true,
        stlf_tag_aware: false,
        stlf_forward_ticks: 12,
        stlf_fail_prob: 0.5,
        stlf_load_replay_ticks: 0,
        stlf_store_replay_ticks: 67,
        sync_stall_hit_load_ticks: 0,
        sync_stall_hit_store_ticks: 0,
        sync_stall_miss_ticks: 0,
        modes: vec![MteMode::Sync],
    }
}

/// `ampere_one` with the kernel-side configuration fix applied: checks that
/// only suppress faults are no longer issued, so untagged kernel accesses
/// stop paying for tag comparisons.
pub fn ampere_one_fixed() -> CoreProfile {
    CoreProfile {
        name: "ampere_one_fixed".into(),
        suppressed_checks_still_cost: false,
        ..ampere_one()
    }
}

pub fn builtin_profile_names() -> &'static [&'static str] {
    &[
        "perf_x3",
        "big_a715",
        "little_a510",
        "ampere_one",
        "ampere_one_fixed",
    ]
}

pub fn builtin_profile(name: &str) -> Result<CoreProfile> {
    let profile = match name {
        "perf_x3" => perf_x3(),
        "big_a715" => big_a715(),
        "little_a510" => little_a510(),
        "ampere_one" => ampere_one(),
        "ampere_one_fixed" => ampere_one_fixed(),
        other => {
            return Err(SimError::Profile(format!(
                "unknown profile `{other}` (shipped: {})",
                builtin_profile_names().join(", ")
            )))
        }
    };
    profile.validate()?;
    Ok(profile)
}

pub fn profile_from_toml(text: &str) -> Result<CoreProfile> {
    let profile: CoreProfile =
        toml::from_str(text).map_err(|e| SimError::Profile(format!("bad profile file: {e}")))?;
    profile.validate()?;
    Ok(profile)
}

pub fn profile_to_toml(profile: &CoreProfile) -> String {
    toml::to_string_pretty(profile).expect("profile serializes")
}

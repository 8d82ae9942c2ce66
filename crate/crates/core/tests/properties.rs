use proptest::prelude::*;
use rolp_core::heap::{ObjectHeader, MAX_AGE};
use rolp_core::policy::{update_target_generations, PolicyConfig};
use rolp_core::profiler::{
    AllocationContext, LifetimeTable, TableKey, ThreadContextState, WorkerTable,
};

#[test]
fn header_round_trip_exhaustive_low_fields() {
    for lock in 0..=ObjectHeader::MAX_LOCK_BITS {
        for age in 0..=MAX_AGE {
            for hash in [0, 1, 0x80_0000, ObjectHeader::MAX_IDENTITY_HASH] {
                for ctx in [0, 1, 0xFFFF, 0x1_0000, u32::MAX] {
                    let h = ObjectHeader::pack(lock, age, hash, ctx).unwrap();
                    assert_eq!(
                        (h.lock_bits(), h.age(), h.identity_hash(), h.alloc_context()),
                        (lock, age, hash, ctx)
                    );
                    assert_eq!(h.raw() & (1 << 7), 0);
                }
            }
        }
    }
}

#[test]
fn header_rejects_oversized_fields() {
    assert!(ObjectHeader::pack(8, 0, 0, 0).is_err());
    assert!(ObjectHeader::pack(0, MAX_AGE + 1, 0, 0).is_err());
    assert!(ObjectHeader::pack(0, 0, ObjectHeader::MAX_IDENTITY_HASH + 1, 0).is_err());
}

#[test]
fn summary_wraps_at_16_bits() {
    let mut s = ThreadContextState::new(0);
    s.enter_method(0xFFFF);
    s.enter_method(2);
    assert_eq!(s.summary(), 1);
    s.exit_method(0xFFFF);
    assert_eq!(s.summary(), 2);
    s.exit_method(2);
    assert_eq!(s.summary(), 0);
}

proptest! {
    #[test]
    fn header_round_trip(lock in 0u8..=7, age in 0u8..=15, hash in 0u32..=0xFF_FFFF, ctx: u32) {
        let h = ObjectHeader::pack(lock, age, hash, ctx).unwrap();
        let back = ObjectHeader::from_raw(h.raw());
        prop_assert_eq!(back.lock_bits(), lock);
        prop_assert_eq!(back.age(), age);
        prop_assert_eq!(back.identity_hash(), hash);
        prop_assert_eq!(back.alloc_context(), ctx);
        let moved = h.install_context(!ctx);
        prop_assert_eq!(moved.raw() & 0xFFFF_FFFF, h.raw() & 0xFFFF_FFFF);
        prop_assert_eq!(moved.alloc_context(), !ctx);
        let aged = h.aged();
        prop_assert_eq!(aged.age(), (age + 1).min(MAX_AGE));
        prop_assert_eq!(aged.identity_hash(), hash);
        prop_assert_eq!(aged.alloc_context(), ctx);
    }

    #[test]
    fn context_combined_round_trip(site: u16, summary: u16) {
        let c = AllocationContext::new(site, summary);
        prop_assert_eq!(c.combined(), (u32::from(summary) << 16) | u32::from(site));
        prop_assert_eq!(AllocationContext::from_combined(c.combined()), c);
    }

    #[test]
    fn summary_is_order_independent(hashes in prop::collection::vec(any::<u16>(), 0..40), seed: u64) {
        let mut forward = ThreadContextState::new(1);
        hashes.iter().for_each(|&h| forward.enter_method(h));
        let mut shuffled = hashes.clone();
        let len = shuffled.len().max(1) as u64;
        for i in 0..shuffled.len() {
            let j = (seed.wrapping_mul(i as u64 + 1) % len) as usize;
            shuffled.swap(i, j);
        }
        let mut other = ThreadContextState::new(1);
        shuffled.iter().for_each(|&h| other.enter_method(h));
        prop_assert_eq!(forward.summary(), other.summary());
        let sum = hashes.iter().fold(0u32, |a, &h| a + u32::from(h)) % 65_536;
        prop_assert_eq!(u32::from(forward.summary()), sum);
    }

    #[test]
    fn balanced_returns_restore_summary(
        base in prop::collection::vec(any::<u16>(), 0..8),
        nested in prop::collection::vec(any::<u16>(), 0..30),
    ) {
        let mut s = ThreadContextState::new(2);
        base.iter().for_each(|&h| s.enter_method(h));
        let before = s.summary();
        for &h in &nested {
            s.enter_method(h);
            prop_assert!(s.is_consistent());
        }
        for &h in nested.iter().rev() {
            s.exit_method(h);
        }
        prop_assert_eq!(s.summary(), before);
        prop_assert!(s.is_consistent());
    }

    #[test]
    fn worker_merge_is_order_independent(
        records in prop::collection::vec((0u16..6, 1u32..20, 0usize..4), 0..200),
    ) {
        let build = |order: &[usize]| {
            let mut table = LifetimeTable::new(16).unwrap();
            let mut workers: Vec<WorkerTable> = (0..4).map(|_| WorkerTable::new(16).unwrap()).collect();
            for &(site, age, w) in &records {
                workers[w].record_survivor(TableKey::Site(site), age);
            }
            let mut ordered: Vec<WorkerTable> = order.iter().map(|&i| workers[i].clone()).collect();
            table.merge_workers(&mut ordered);
            prop_assert!(ordered.iter().all(WorkerTable::is_empty));
            Ok(table)
        };
        let a = build(&[0, 1, 2, 3])?;
        let b = build(&[3, 1, 0, 2])?;
        let mut direct = LifetimeTable::new(16).unwrap();
        for &(site, age, _) in &records {
            direct.record_survivor(AllocationContext::new(site, 0), age);
        }
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a, &direct);
    }

    #[test]
    fn policy_never_lowers_target_generations(
        rounds in prop::collection::vec(
            prop::collection::vec((0u16..5, any::<u16>(), 0u64..50, 0u64..50), 1..20),
            1..12,
        ),
        threshold in 1u8..=15,
        expand in prop::bool::ANY,
    ) {
        let cfg = PolicyConfig {
            expand_ctx: if expand { 0.3 } else { 1.0 },
            ..PolicyConfig::default()
        };
        let mut table = LifetimeTable::new(16).unwrap();
        let mut seen = std::collections::BTreeMap::new();
        for round in rounds {
            for (site, summary, allocated, survivors) in round {
                let ctx = AllocationContext::new(site, summary);
                for _ in 0..allocated {
                    table.record_allocation(ctx);
                }
                for _ in 0..survivors.min(allocated) {
                    table.record_survivor(ctx, u32::from(threshold));
                }
            }
            update_target_generations(&mut table, threshold, &cfg, 4);
            prop_assert!(table.all_zeroed());
            for (key, entry) in table.entries() {
                prop_assert!(entry.target_gen <= 4);
                if let Some(&prev) = seen.get(key) {
                    prop_assert!(entry.target_gen >= prev, "{key:?} went {prev} -> {}", entry.target_gen);
                }
                seen.insert(*key, entry.target_gen);
            }
        }
    }
}

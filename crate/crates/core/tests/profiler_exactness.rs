mod common;

use common::{scaled_config, scaled_workload, BruteForce};
use rolp_core::workload::replay_with;
use rolp_core::{Mode, WorkloadKind};

fn check(kind: WorkloadKind, seed: u64) -> BruteForce {
    let config = scaled_config();
    let workload = scaled_workload(kind, seed, 100_000);
    let mut oracle = BruteForce::new(&workload, &config);
    let outcome = replay_with(&workload.trace, Mode::Rolp, &config, &mut oracle).unwrap();
    oracle.finish(outcome.table.as_ref().unwrap());
    oracle
}

#[test]
fn table_matches_per_object_tracking() {
    for kind in WorkloadKind::ALL {
        let oracle = check(kind, 7);
        assert!(oracle.errors.is_empty(), "{kind}: {:?}", oracle.errors);
        assert!(
            oracle.windows >= 10,
            "{kind}: only {} windows",
            oracle.windows
        );
        assert!(oracle.survivors_checked > 0);
    }
}

#[test]
fn oracle_notices_a_mismatched_hot_threshold() {
    let config = scaled_config();
    let workload = scaled_workload(WorkloadKind::Mixed, 3, 20_000);
    let skewed = rolp_core::SimConfig {
        hot_threshold: 1,
        ..config.clone()
    };
    let mut oracle = BruteForce::new(&workload, &skewed);
    let outcome = replay_with(&workload.trace, Mode::Rolp, &config, &mut oracle).unwrap();
    oracle.finish(outcome.table.as_ref().unwrap());
    assert!(!oracle.errors.is_empty());
}

#[test]
fn oracle_notices_single_slot_drift() {
    let config = scaled_config();
    let workload = scaled_workload(WorkloadKind::Cache, 3, 20_000);
    let skewed = rolp_core::SimConfig {
        lifetime_slots: 8,
        ..config.clone()
    };
    let mut oracle = BruteForce::new(&workload, &skewed);
    let outcome = replay_with(&workload.trace, Mode::Rolp, &config, &mut oracle).unwrap();
    oracle.finish(outcome.table.as_ref().unwrap());
    assert!(!oracle.errors.is_empty());
}

use serde::{Deserialize, Serialize};

use crate::analysis::{DEFAULT_HOT_THRESHOLD, DEFAULT_MAX_ALLOC_FRAME};
use crate::error::{Result, SimError};
use crate::heap::{HeapConfig, MAX_AGE};
use crate::policy::PolicyConfig;

pub const DEFAULT_LIFETIME_SLOTS: usize = 16;
pub const DEFAULT_WORKERS: usize = 4;
pub const DEFAULT_TARGET_SURVIVOR_FRACTION: f64 = 0.5;

/// Everything a replay needs besides the trace and the mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub heap: HeapConfig,
    /// Length of each lifetime array.
    pub lifetime_slots: usize,
    pub policy: PolicyConfig,
    pub max_alloc_frame: u32,
    pub hot_threshold: u64,
    /// Package filter; empty selects every package.
    pub packages: Vec<String>,
    /// GC worker tables survivors are spread over.
    pub workers: usize,
    pub target_survivor_fraction: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            heap: HeapConfig::default(),
            lifetime_slots: DEFAULT_LIFETIME_SLOTS,
            policy: PolicyConfig::default(),
            max_alloc_frame: DEFAULT_MAX_ALLOC_FRAME,
            hot_threshold: DEFAULT_HOT_THRESHOLD,
            packages: Vec::new(),
            workers: DEFAULT_WORKERS,
            target_survivor_fraction: DEFAULT_TARGET_SURVIVOR_FRACTION,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.heap.validate()?;
        self.policy.validate()?;
        if !(2..=usize::from(MAX_AGE) + 1).contains(&self.lifetime_slots) {
            return Err(SimError::InvalidConfig(format!(
                "N must be in [2, {}], got {}",
                MAX_AGE + 1,
                self.lifetime_slots
            )));
        }
        if self.workers == 0 {
            return Err(SimError::InvalidConfig("workers must be >= 1".into()));
        }
        if !(self.target_survivor_fraction > 0.0 && self.target_survivor_fraction <= 1.0) {
            return Err(SimError::InvalidConfig(format!(
                "target survivor fraction must be in (0, 1], got {}",
                self.target_survivor_fraction
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.lifetime_slots, 16);
        assert_eq!(c.policy.inc_gen_freq, 4);
    }

    #[test]
    fn rejects_bad_knobs() {
        let mut c = SimConfig {
            lifetime_slots: 17,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
        c.lifetime_slots = 16;
        c.workers = 0;
        assert!(c.validate().is_err());
        c.workers = 1;
        c.policy.inc_gen_thres = 0.3;
        assert!(c.validate().is_err());
    }
}

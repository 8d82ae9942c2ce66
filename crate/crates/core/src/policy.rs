//! Target-generation updates driven by the lifetime table.
//!
//! Every `inc_gen_freq` collections, each table entry's survivor ratio
//! (`counts[threshold] / counts[0]`) is compared against two thresholds.
//! Above `inc_gen_thres` the entry's target generation is incremented;
//! between `expand_ctx` and `inc_gen_thres` an aggregated site is split into
//! per-context entries. All counters are then reset. Target generations are
//! never decremented.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::profiler::{LifetimeTable, SiteMode, TableKey};

const PPM: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub inc_gen_thres: f64,
    /// `1.0` disables context expansion.
    pub expand_ctx: f64,
    /// Run the policy after every `inc_gen_freq`-th collection.
    pub inc_gen_freq: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            inc_gen_thres: 0.6,
            expand_ctx: 0.4,
            inc_gen_freq: 4,
        }
    }
}

impl PolicyConfig {
    /// Requires `0 < expand_ctx < inc_gen_thres < 1`, except that
    /// `expand_ctx == 1.0` switches expansion off.
    pub fn validate(&self) -> Result<()> {
        if !(self.inc_gen_thres > 0.0 && self.inc_gen_thres < 1.0) {
            return Err(SimError::InvalidConfig(format!(
                "INC_GEN_THRES must be in (0, 1), got {}",
                self.inc_gen_thres
            )));
        }
        if self.expansion_enabled()
            && !(self.expand_ctx > 0.0 && self.expand_ctx < self.inc_gen_thres)
        {
            return Err(SimError::InvalidConfig(format!(
                "require 0 < EXPAND_CTX < INC_GEN_THRES < 1, got EXPAND_CTX={} INC_GEN_THRES={}",
                self.expand_ctx, self.inc_gen_thres
            )));
        }
        if self.inc_gen_freq == 0 {
            return Err(SimError::InvalidConfig(
                "NG2C_INC_GEN_FREQ must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn expansion_enabled(&self) -> bool {
        self.expand_ctx != 1.0
    }
}

/// Whether the policy runs after collection `collection_index` (1-based).
pub fn should_run(collection_index: u64, inc_gen_freq: u64) -> bool {
    collection_index > 0 && inc_gen_freq > 0 && collection_index.is_multiple_of(inc_gen_freq)
}

fn to_ppm(x: f64) -> u128 {
    (x * PPM as f64).round() as u128
}

/// `numer / denom > threshold`, compared on integers at 1e-6 resolution.
fn ratio_exceeds(numer: u64, denom: u64, threshold_ppm: u128) -> bool {
    u128::from(numer) * PPM > threshold_ppm * u128::from(denom)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetChange {
    pub key: TableKey,
    pub from: u8,
    pub to: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub survivor_threshold: u8,
    pub evaluated: u64,
    pub skipped: u64,
    pub incremented: Vec<TargetChange>,
    pub expanded: Vec<u16>,
}

/// One policy pass over `table`. `max_gen` caps target generations.
pub fn update_target_generations(
    table: &mut LifetimeTable,
    survivor_threshold: u8,
    config: &PolicyConfig,
    max_gen: u8,
) -> PolicyReport {
    let n = table.n();
    let inc_ppm = to_ppm(config.inc_gen_thres);
    let expand_ppm = to_ppm(config.expand_ctx);
    let expansion = config.expansion_enabled();
    let slot = if n > usize::from(survivor_threshold) {
        usize::from(survivor_threshold)
    } else {
        n - 1
    };

    let mut report = PolicyReport {
        survivor_threshold,
        ..PolicyReport::default()
    };
    let mut to_expand = Vec::new();
    let aggregated: Vec<bool> = table
        .entries()
        .map(|(k, _)| matches!(k, TableKey::Site(s) if table.mode(*s) == SiteMode::Aggregated))
        .collect();

    for ((key, entry), is_aggregated) in table.entries_mut().zip(aggregated) {
        let allocated = entry.counts[0];
        if allocated == 0 {
            report.skipped += 1;
            continue;
        }
        report.evaluated += 1;
        let promoted = entry.counts[slot];
        if ratio_exceeds(promoted, allocated, inc_ppm) {
            if entry.target_gen < max_gen {
                report.incremented.push(TargetChange {
                    key: *key,
                    from: entry.target_gen,
                    to: entry.target_gen + 1,
                });
                entry.target_gen += 1;
            }
        } else if expansion && is_aggregated && ratio_exceeds(promoted, allocated, expand_ppm) {
            to_expand.push(key.site());
        }
    }

    for &site in &to_expand {
        table.expand_site(site);
    }
    report.expanded = to_expand;
    table.reset_counts();
    report
}

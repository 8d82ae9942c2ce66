//! Run metrics, run-to-run comparison and report rendering.
//!
//! Percentiles use the nearest-rank rule on the sorted pause list: the
//! p-th percentile of `n` pauses is the element at 1-based rank
//! `ceil(p / 100 * n)`. No interpolation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{InstrumentationPlan, ProgramModel};
use crate::config::SimConfig;
use crate::gc::{CollectionKind, PauseRecord};
use crate::profiler::{CollisionReport, LifetimeTable, SiteMode};
use crate::workload::Mode;

pub const SCHEMA_VERSION: u32 = 1;

/// Upper bounds (exclusive) of the pause histogram buckets, in ms. A final
/// open bucket collects everything above the last bound.
pub const HISTOGRAM_BOUNDS_MS: [f64; 8] = [10.0, 25.0, 50.0, 100.0, 200.0, 400.0, 800.0, 1600.0];

pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (percentile / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PauseSummary {
    pub count: u64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub p99_9: f64,
    pub max: f64,
    pub mean: f64,
    pub total: f64,
}

impl PauseSummary {
    pub fn from_pauses(pauses_ms: &[f64]) -> Self {
        let mut sorted = pauses_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let total: f64 = sorted.iter().sum();
        Self {
            count: sorted.len() as u64,
            p50: nearest_rank(&sorted, 50.0),
            p90: nearest_rank(&sorted, 90.0),
            p99: nearest_rank(&sorted, 99.0),
            p99_9: nearest_rank(&sorted, 99.9),
            max: sorted.last().copied().unwrap_or(0.0),
            mean: if sorted.is_empty() {
                0.0
            } else {
                total / sorted.len() as f64
            },
            total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub lower_ms: f64,
    /// `None` for the open last bucket.
    pub upper_ms: Option<f64>,
    pub count: u64,
}

pub fn pause_histogram(pauses_ms: &[f64]) -> Vec<HistogramBucket> {
    let mut buckets = Vec::with_capacity(HISTOGRAM_BOUNDS_MS.len() + 1);
    let mut lower = 0.0;
    for &upper in &HISTOGRAM_BOUNDS_MS {
        buckets.push(HistogramBucket {
            lower_ms: lower,
            upper_ms: Some(upper),
            count: 0,
        });
        lower = upper;
    }
    buckets.push(HistogramBucket {
        lower_ms: lower,
        upper_ms: None,
        count: 0,
    });
    for &p in pauses_ms {
        let i = HISTOGRAM_BOUNDS_MS
            .iter()
            .position(|&b| p < b)
            .unwrap_or(HISTOGRAM_BOUNDS_MS.len());
        buckets[i].count += 1;
    }
    buckets
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ByteTotals {
    pub allocated: u64,
    pub scanned: u64,
    /// Every evacuated byte: survivor copies, promotions and compaction.
    pub copied: u64,
    /// Bytes moved from the young generation into generation 1.
    pub promoted: u64,
    /// Bytes copied while compacting older generations.
    pub compacted: u64,
}

impl ByteTotals {
    pub fn promoted_plus_compacted(&self) -> u64 {
        self.promoted + self.compacted
    }
}

/// Profiling columns, reported in rolp mode only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingSummary {
    pub profiled_sites: u64,
    pub profiled_methods: u64,
    pub total_sites: u64,
    pub total_methods: u64,
    pub table_entries: u64,
    pub table_size_bytes: u64,
    pub expanded_sites: u64,
    /// Table entries per target generation, index = generation.
    pub contexts_per_generation: Vec<u64>,
    pub policy_runs: u64,
    pub collisions: CollisionReport,
}

impl ProfilingSummary {
    pub fn new(
        plan: &InstrumentationPlan,
        program: &ProgramModel,
        table: &LifetimeTable,
        generations: usize,
        collisions: CollisionReport,
        policy_runs: u64,
    ) -> Self {
        Self {
            profiled_sites: plan.profiled_sites.len() as u64,
            profiled_methods: plan.profiled_methods.len() as u64,
            total_sites: program.site_count() as u64,
            total_methods: program.method_count() as u64,
            table_entries: table.len() as u64,
            table_size_bytes: table.size_bytes(),
            expanded_sites: table
                .expanded_sites()
                .filter(|&s| table.mode(s) == SiteMode::Expanded)
                .count() as u64,
            contexts_per_generation: table.target_histogram(generations),
            policy_runs,
            collisions,
        }
    }
}

/// Wall-clock figures. They vary between runs, so they are only part of
/// the JSON document when explicitly requested.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub events_per_second: f64,
    pub static_analysis_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunTotals {
    pub events: u64,
    pub allocations: u64,
    pub allocated_bytes: u64,
    pub peak_heap_occupancy: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub schema_version: u32,
    pub mode: Mode,
    pub trace_fingerprint: String,
    pub config: SimConfig,
    pub events: u64,
    pub allocations: u64,
    pub collections: u64,
    pub young_collections: u64,
    pub old_collections: u64,
    pub pause_ms: PauseSummary,
    pub pause_histogram: Vec<HistogramBucket>,
    pub bytes: ByteTotals,
    pub peak_heap_occupancy: u64,
    pub profiling: Option<ProfilingSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<Timing>,
}

impl RunMetrics {
    pub fn build(
        mode: Mode,
        trace_fingerprint: String,
        config: SimConfig,
        totals: RunTotals,
        pauses: &[PauseRecord],
        profiling: Option<ProfilingSummary>,
        timing: Timing,
    ) -> Self {
        let ms: Vec<f64> = pauses.iter().map(|p| p.modeled_ms).collect();
        let mut bytes = ByteTotals {
            allocated: totals.allocated_bytes,
            ..ByteTotals::default()
        };
        let mut young = 0;
        for p in pauses {
            bytes.scanned += p.scanned_bytes;
            bytes.copied += p.copied_bytes;
            bytes.promoted += p.promoted_bytes;
            match p.kind {
                CollectionKind::Young => young += 1,
                CollectionKind::Old(_) => bytes.compacted += p.copied_bytes,
            }
        }
        Self {
            schema_version: SCHEMA_VERSION,
            mode,
            trace_fingerprint,
            config,
            events: totals.events,
            allocations: totals.allocations,
            collections: pauses.len() as u64,
            young_collections: young,
            old_collections: pauses.len() as u64 - young,
            pause_ms: PauseSummary::from_pauses(&ms),
            pause_histogram: pause_histogram(&ms),
            bytes,
            peak_heap_occupancy: totals.peak_heap_occupancy,
            profiling,
            timing: Some(timing),
        }
    }

    /// Same document without wall-clock figures; byte-identical across runs.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: None,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Numeric metrics in a fixed order; the basis of [`compare`].
    pub fn scalar_metrics(&self) -> Vec<(&'static str, f64)> {
        let p = self.profiling.as_ref();
        let pf = |f: fn(&ProfilingSummary) -> f64| p.map_or(0.0, f);
        vec![
            ("collections", self.collections as f64),
            ("young_collections", self.young_collections as f64),
            ("old_collections", self.old_collections as f64),
            ("pause_p50_ms", self.pause_ms.p50),
            ("pause_p90_ms", self.pause_ms.p90),
            ("pause_p99_ms", self.pause_ms.p99),
            ("pause_p99_9_ms", self.pause_ms.p99_9),
            ("pause_max_ms", self.pause_ms.max),
            ("pause_mean_ms", self.pause_ms.mean),
            ("pause_total_ms", self.pause_ms.total),
            ("allocated_bytes", self.bytes.allocated as f64),
            ("scanned_bytes", self.bytes.scanned as f64),
            ("copied_bytes", self.bytes.copied as f64),
            ("promoted_bytes", self.bytes.promoted as f64),
            ("compacted_bytes", self.bytes.compacted as f64),
            (
                "promoted_plus_compacted_bytes",
                self.bytes.promoted_plus_compacted() as f64,
            ),
            ("peak_heap_occupancy_bytes", self.peak_heap_occupancy as f64),
            ("profiled_sites", pf(|p| p.profiled_sites as f64)),
            ("profiled_methods", pf(|p| p.profiled_methods as f64)),
            ("table_size_bytes", pf(|p| p.table_size_bytes as f64)),
            ("expanded_sites", pf(|p| p.expanded_sites as f64)),
            (
                "collision_rate_sequence",
                pf(|p| p.collisions.sequence_rate),
            ),
            (
                "collision_rate_multiset",
                pf(|p| p.collisions.multiset_rate),
            ),
        ]
    }
}

pub const COMPARE_COLUMNS: [&str; 5] = ["metric", "a", "b", "delta", "delta_pct"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    /// `None` when `a` is zero and `b` is not.
    pub delta_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub same_trace: bool,
    pub mode_a: Mode,
    pub mode_b: Mode,
    pub rows: Vec<DeltaRow>,
}

/// Per-metric `b - a` deltas. Mismatched trace fingerprints only clear
/// `same_trace`; the comparison still happens.
pub fn compare(a: &RunMetrics, b: &RunMetrics) -> Comparison {
    let rows = a
        .scalar_metrics()
        .into_iter()
        .zip(b.scalar_metrics())
        .map(|((name, va), (_, vb))| {
            let delta = vb - va;
            let delta_pct = if va != 0.0 {
                Some(delta / va * 100.0)
            } else if vb == 0.0 {
                Some(0.0)
            } else {
                None
            };
            DeltaRow {
                metric: name.to_owned(),
                a: va,
                b: vb,
                delta,
                delta_pct,
            }
        })
        .collect();
    Comparison {
        same_trace: a.trace_fingerprint == b.trace_fingerprint,
        mode_a: a.mode,
        mode_b: b.mode,
        rows,
    }
}

fn num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.6}")
    }
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = COMPARE_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let pct = r.delta_pct.map(num).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.metric,
                num(r.a),
                num(r.b),
                num(r.delta),
                pct
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.same_trace {
            out.push_str("warning: runs come from different traces\n");
        }
        let _ = writeln!(
            out,
            "{:<32} {:>18} {:>18} {:>18} {:>10}",
            "metric", self.mode_a, self.mode_b, "delta", "delta %"
        );
        for r in &self.rows {
            let pct = r
                .delta_pct
                .map_or_else(|| "n/a".to_owned(), |p| format!("{p:.2}"));
            let _ = writeln!(
                out,
                "{:<32} {:>18} {:>18} {:>18} {:>10}",
                r.metric,
                num(r.a),
                num(r.b),
                num(r.delta),
                pct
            );
        }
        out
    }
}

pub const PAUSE_CSV_COLUMNS: [&str; 7] = [
    "index",
    "kind",
    "scanned_bytes",
    "copied_bytes",
    "promoted_bytes",
    "modeled_ms",
    "survivor_threshold_at_start",
];

pub fn pauses_to_csv(pauses: &[PauseRecord]) -> String {
    let mut out = PAUSE_CSV_COLUMNS.join(",");
    out.push('\n');
    for p in pauses {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{}",
            p.index,
            p.kind,
            p.scanned_bytes,
            p.copied_bytes,
            p.promoted_bytes,
            p.modeled_ms,
            p.survivor_threshold_at_start
        );
    }
    out
}

fn mib(bytes: u64) -> String {
    format!("{:.1} MiB", bytes as f64 / (1u64 << 20) as f64)
}

/// Aligned human-readable report.
pub fn render_text(m: &RunMetrics) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(out, "  {k:<28} {v}");
    };
    line("mode", m.mode.to_string());
    line(
        "trace",
        m.trace_fingerprint[..16.min(m.trace_fingerprint.len())].to_owned(),
    );
    line("events", m.events.to_string());
    line("allocations", m.allocations.to_string());
    line(
        "collections",
        format!(
            "{} ({} young, {} old)",
            m.collections, m.young_collections, m.old_collections
        ),
    );
    let p = &m.pause_ms;
    line(
        "pause ms p50/p90/p99",
        format!("{:.3} / {:.3} / {:.3}", p.p50, p.p90, p.p99),
    );
    line(
        "pause ms p99.9/max",
        format!("{:.3} / {:.3}", p.p99_9, p.max),
    );
    line(
        "pause ms mean/total",
        format!("{:.3} / {:.3}", p.mean, p.total),
    );
    line("allocated", mib(m.bytes.allocated));
    line("scanned", mib(m.bytes.scanned));
    line("copied", mib(m.bytes.copied));
    line("promoted", mib(m.bytes.promoted));
    line("compacted", mib(m.bytes.compacted));
    line("peak heap occupancy", mib(m.peak_heap_occupancy));
    if let Some(pr) = &m.profiling {
        line(
            "profiled sites/methods",
            format!(
                "{}/{} sites, {}/{} methods",
                pr.profiled_sites, pr.total_sites, pr.profiled_methods, pr.total_methods
            ),
        );
        line(
            "lifetime table",
            format!("{} entries, {} B", pr.table_entries, pr.table_size_bytes),
        );
        line("expanded sites", pr.expanded_sites.to_string());
        line(
            "contexts per generation",
            format!("{:?}", pr.contexts_per_generation),
        );
        line(
            "collisions seq/multiset",
            format!(
                "{:.2}% / {:.2}%",
                pr.collisions.sequence_rate * 100.0,
                pr.collisions.multiset_rate * 100.0
            ),
        );
        line("policy runs", pr.policy_runs.to_string());
    }
    if let Some(t) = &m.timing {
        line("wall time", format!("{:.3} s", t.wall_seconds));
        line("throughput", format!("{:.0} events/s", t.events_per_second));
        line(
            "static analysis",
            format!("{:.6} s", t.static_analysis_seconds),
        );
    }
    let _ = writeln!(out, "  pause histogram:");
    for b in &m.pause_histogram {
        let range = match b.upper_ms {
            Some(u) => format!("[{}, {}) ms", b.lower_ms, u),
            None => format!("[{}, inf) ms", b.lower_ms),
        };
        let _ = writeln!(out, "    {range:<20} {}", b.count);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 50.0), 50.0);
        assert_eq!(nearest_rank(&v, 99.0), 99.0);
        assert_eq!(nearest_rank(&v, 99.9), 100.0);
        assert_eq!(nearest_rank(&[7.0], 1.0), 7.0);
        assert_eq!(nearest_rank(&[], 50.0), 0.0);
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(nearest_rank(&v, 50.0), 2.0);
        assert_eq!(nearest_rank(&v, 51.0), 3.0);
    }

    #[test]
    fn summary_is_ordered_and_histogram_sums() {
        let pauses = [3.0, 120.0, 45.0, 45.0, 9.9, 2000.0, 10.0];
        let s = PauseSummary::from_pauses(&pauses);
        assert!(s.p50 <= s.p90 && s.p90 <= s.p99 && s.p99 <= s.p99_9 && s.p99_9 <= s.max);
        let h = pause_histogram(&pauses);
        assert_eq!(h.iter().map(|b| b.count).sum::<u64>(), pauses.len() as u64);
        assert_eq!(h[0].count, 2);
        assert_eq!(h[1].count, 1);
        assert_eq!(h.last().unwrap().count, 1);
    }
}

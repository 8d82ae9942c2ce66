//! Deterministic trace-driven simulator of an N-generational heap with
//! online object-lifetime profiling and dynamic pretenuring.
//!
//! A trace of calls, returns, allocations and lock events is replayed
//! against a young generation plus `G` older generations. In `rolp` mode,
//! per-thread context summaries tag every allocation, a lifetime table counts
//! how many collections objects of each context survive, and a periodic
//! policy raises the generation new objects of long-lived contexts are
//! allocated in.

pub mod analysis;
pub mod config;
pub mod error;
pub mod gc;
pub mod heap;
pub mod policy;
pub mod profiler;
pub mod report;
pub mod workload;

pub use config::SimConfig;
pub use error::{Result, SimError};
pub use workload::{replay, Mode, RunOutcome, SyntheticSpec, Trace, WorkloadKind};

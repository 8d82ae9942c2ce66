mod replay;
mod synth;
mod trace;

pub use replay::{
    oracle_generation, replay, replay_with, Mode, PolicyRun, ReplayObserver, RunOutcome,
    ORACLE_CLASS_FACTOR,
};
pub use synth::{
    generate_synthetic, histogram_modes, LifetimeClass, LifetimeOracle, LifetimeRange, ObjectTruth,
    SyntheticSpec, SyntheticWorkload, WorkloadKind, LIFETIME_BUCKETS,
};
pub use trace::{
    parse_trace, parse_trace_str, write_trace, write_trace_string, Trace, TraceEvent, TRACE_HEADER,
};

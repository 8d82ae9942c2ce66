//! Replays one synthetic workload in every mode and prints the headline
//! numbers.
//!
//! `cargo run --release -p rolp-core --example compare_modes -- cache 42`

use rolp_core::workload::{generate_synthetic, replay, Mode, SyntheticSpec, WorkloadKind};
use rolp_core::SimConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let kind: WorkloadKind = args.next().as_deref().unwrap_or("cache").parse()?;
    let seed: u64 = args.next().as_deref().unwrap_or("42").parse()?;
    let workload = generate_synthetic(&SyntheticSpec::for_kind(kind, seed))?;
    let config = SimConfig::default();
    println!("{kind} seed {seed}: {} events", workload.trace.events.len());
    for mode in Mode::ALL {
        let m = replay(&workload.trace, mode, &config)?.metrics;
        println!(
            "{:>8}  collections {:>4} (old {:>2})  p99 {:>7.1} ms  max {:>7.1} ms  promoted+compacted {:>5} MiB",
            mode.as_str(),
            m.collections,
            m.old_collections,
            m.pause_ms.p99,
            m.pause_ms.max,
            m.bytes.promoted_plus_compacted() >> 20
        );
    }
    Ok(())
}

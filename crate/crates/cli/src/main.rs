use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rolp_core::heap::{HeapConfig, MIB};
use rolp_core::policy::PolicyConfig;
use rolp_core::report::{compare, pauses_to_csv, render_text, RunMetrics};
use rolp_core::workload::{generate_synthetic, parse_trace, write_trace};
use rolp_core::{replay, Mode, SimConfig, SyntheticSpec, Trace, WorkloadKind};

#[derive(Parser)]
#[command(
    name = "rolp-sim",
    version,
    about = "N-generational heap simulator with lifetime-profiling pretenuring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a trace and report pause and profiling metrics.
    Run(RunArgs),
    /// Per-metric deltas between two JSON metric documents.
    Compare(CompareArgs),
    /// Write a synthetic trace.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "rolp")]
    mode: Mode,
    /// Trace file to replay.
    #[arg(long, conflicts_with = "workload")]
    trace: Option<PathBuf>,
    /// Generate and replay a synthetic workload instead of reading a trace.
    /// Its lifetimes are scaled to the young generation size.
    #[arg(long, required_unless_present = "trace")]
    workload: Option<WorkloadKind>,
    /// Number of allocations in the generated workload.
    #[arg(long, requires = "workload")]
    events: Option<u64>,
    #[command(flatten)]
    sim: SimFlags,
    /// Write the metrics document here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write one CSV row per pause here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Include wall-clock timing in the JSON document.
    #[arg(long)]
    timing: bool,
    /// Skip the text report on stdout.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct SimFlags {
    /// Number of older generations.
    #[arg(long, default_value_t = 4)]
    gens: usize,
    #[arg(long, default_value_t = 32)]
    young_mb: u64,
    #[arg(long, default_value_t = 64)]
    gen_mb: u64,
    #[arg(long, default_value_t = 4)]
    survivor_mb: u64,
    /// Length of each lifetime array.
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Run the pretenuring policy every this many collections.
    #[arg(long, alias = "ng2c-inc-gen-freq", default_value_t = 4)]
    inc_gen_freq: u64,
    #[arg(long, default_value_t = 0.6)]
    inc_gen_thres: f64,
    /// 1.0 disables context expansion.
    #[arg(long, default_value_t = 0.4)]
    expand_ctx: f64,
    #[arg(long, default_value_t = 4)]
    max_alloc_frame: u32,
    #[arg(long, default_value_t = 100)]
    hot_threshold: u64,
    /// Comma-separated package prefixes to profile; empty profiles all.
    #[arg(long, value_delimiter = ',')]
    packages: Vec<String>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl SimFlags {
    fn to_config(&self) -> Result<SimConfig> {
        let config = SimConfig {
            heap: HeapConfig {
                num_generations: self.gens,
                young_capacity: self.young_mb * MIB,
                gen_capacity: self.gen_mb * MIB,
                survivor_capacity: self.survivor_mb * MIB,
                ..HeapConfig::default()
            },
            lifetime_slots: self.n,
            policy: PolicyConfig {
                inc_gen_thres: self.inc_gen_thres,
                expand_ctx: self.expand_ctx,
                inc_gen_freq: self.inc_gen_freq,
            },
            max_alloc_frame: self.max_alloc_frame,
            hot_threshold: self.hot_threshold,
            packages: self.packages.clone(),
            workers: self.workers,
            seed: self.seed,
            ..SimConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    /// Write the delta table as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    workload: WorkloadKind,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of allocations; defaults to the workload's own size.
    #[arg(long)]
    events: Option<u64>,
    #[arg(long)]
    long_lived_fraction: Option<f64>,
    #[arg(long)]
    site_fraction: Option<f64>,
    #[arg(long)]
    lock_fraction: Option<f64>,
    /// Bytes one young-generation turnover stands for, in MiB.
    #[arg(long)]
    young_turnover_mb: Option<u64>,
    /// Output path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_trace(path: &Path) -> Result<Trace> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_trace(BufReader::new(file)).with_context(|| format!("cannot parse {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn run(args: RunArgs) -> Result<()> {
    let config = args.sim.to_config()?;
    let trace = match (&args.trace, args.workload) {
        (Some(path), _) => load_trace(path)?,
        (None, Some(kind)) => {
            let mut spec = SyntheticSpec::for_kind(kind, args.sim.seed);
            spec.young_turnover = config.heap.young_capacity;
            if let Some(n) = args.events {
                spec.event_count = n;
            }
            generate_synthetic(&spec)?.trace
        }
        (None, None) => bail!("either --trace or --workload is required"),
    };
    let outcome = replay(&trace, args.mode, &config)?;
    let metrics = if args.timing {
        outcome.metrics.clone()
    } else {
        outcome.metrics.without_timing()
    };
    if let Some(path) = &args.json {
        write_file(path, &metrics.to_json())?;
    }
    if let Some(path) = &args.csv {
        write_file(path, &pauses_to_csv(&outcome.pauses))?;
    }
    if !args.quiet {
        print!("{}", render_text(&outcome.metrics));
    }
    Ok(())
}

fn load_metrics(path: &Path) -> Result<RunMetrics> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    RunMetrics::from_json(&text)
        .with_context(|| format!("{} is not a metrics document", path.display()))
}

fn compare_cmd(args: CompareArgs) -> Result<()> {
    let a = load_metrics(&args.a)?;
    let b = load_metrics(&args.b)?;
    let cmp = compare(&a, &b);
    if !cmp.same_trace {
        eprintln!("warning: trace fingerprints differ");
    }
    if let Some(path) = &args.csv {
        write_file(path, &cmp.to_csv())?;
    }
    print!("{}", cmp.to_text());
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let mut spec = SyntheticSpec::for_kind(args.workload, args.seed);
    if let Some(n) = args.events {
        spec.event_count = n;
    }
    if let Some(f) = args.long_lived_fraction {
        spec.long_lived_fraction = f;
    }
    if let Some(f) = args.site_fraction {
        spec.long_lived_site_fraction = f;
    }
    if let Some(f) = args.lock_fraction {
        spec.lock_fraction = f;
    }
    if let Some(mb) = args.young_turnover_mb {
        spec.young_turnover = mb * MIB;
    }
    let trace = generate_synthetic(&spec)?.trace;
    match &args.out {
        Some(path) => {
            let file =
                File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut w = BufWriter::new(file);
            write_trace(&trace, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_trace(&trace, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare_cmd(args),
        Command::Gen(args) => gen(args),
    }
}

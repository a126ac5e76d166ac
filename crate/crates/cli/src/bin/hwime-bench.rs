//! Orchestrator command line: build test sets, replay them against agents,
//! and merge reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hwime_core::dataset::{
    build_replicas, filter_by_charset, load_charset, parse_hws, write_hws, SamplePool, TestReplica,
};
use hwime_core::orchestrator::{
    read_summary, render_summaries, report_dir, run_session_with_stats, write_report, ReportMeta, SessionConfig,
};
use hwime_core::recognizer::OracleRecognizer;
use hwime_core::synth::{digit_pool, GlyphNoise};

#[derive(Parser)]
#[command(name = "hwime-bench", version, about = "Handwriting IME accuracy harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a test set against one or more agents and write a report.
    Run(RunArgs),
    /// Draw seeded test replicas from sample pools.
    BuildSet(BuildSetArgs),
    /// Merge summary files into result tables.
    Report {
        #[arg(long = "merge", required = true, num_args = 1..)]
        merge: Vec<PathBuf>,
    },
    /// Write a synthetic digit pool in HWS1 format.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Export the ground-truth label file the oracle recognizer reads.
    Labels {
        #[arg(long = "pool", required = true, num_args = 1..)]
        pools: Vec<PathBuf>,
        #[arg(long)]
        replica: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long = "pool", required = true, num_args = 1..)]
    pools: Vec<PathBuf>,
    /// Replica file; when omitted one replica of --size is drawn with --seed.
    #[arg(long)]
    replica: Option<PathBuf>,
    #[arg(long = "agent", required = true, num_args = 1..)]
    agents: Vec<String>,
    #[arg(long, default_value_t = 6)]
    t1_ms: u32,
    #[arg(long, default_value_t = 500)]
    t2_ms: u32,
    #[arg(long, default_value_t = 180)]
    normalize: u32,
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    /// Floor on the scaled result wait, in milliseconds.
    #[arg(long, default_value_t = 100)]
    min_wait_ms: u64,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    size: usize,
    /// Column name for this system in result tables.
    #[arg(long, default_value = "system")]
    system: String,
}

#[derive(Args)]
struct BuildSetArgs {
    #[arg(long = "pool", required = true, num_args = 1..)]
    pools: Vec<PathBuf>,
    #[arg(long)]
    charset: Option<PathBuf>,
    /// Set name; defaults to the charset file stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 5)]
    replicas: u32,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .with_context(|| format!("cannot derive a name from {}", path.display()))
}

fn load_pools(paths: &[PathBuf]) -> Result<Vec<SamplePool>> {
    paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            parse_hws(&stem(p)?, &bytes).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

fn load_replica(path: &Path) -> Result<TestReplica> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TestReplica::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(args: RunArgs) -> Result<()> {
    let pools = load_pools(&args.pools)?;
    let replica = match &args.replica {
        Some(path) => load_replica(path)?,
        None => build_replicas("Adhoc", &pools, args.size, 1, args.seed)?.remove(0),
    };
    let cfg = SessionConfig {
        t1_ms: args.t1_ms,
        t2_ms: args.t2_ms,
        normalization_target: args.normalize,
        time_scale: args.time_scale,
        agents: args.agents,
        min_result_wait: Duration::from_millis(args.min_wait_ms),
        ..Default::default()
    };
    let (records, stats) = run_session_with_stats(&cfg, &replica, &pools)?;
    for s in &stats {
        match &s.aborted {
            Some(reason) => eprintln!("agent {}: aborted after {} samples: {reason}", s.addr, s.samples_sent),
            None => eprintln!(
                "agent {}: {} samples, {} touch events",
                s.addr, s.samples_sent, s.touches_sent
            ),
        }
    }
    let meta = ReportMeta::for_replica(&args.system, &replica);
    let dir = report_dir(&args.report, &meta);
    let summary = write_report(&dir, &records, &meta)?;
    print!("{}", render_summaries(&[summary]));
    eprintln!("report written to {}", dir.display());
    Ok(())
}

fn build_set(args: BuildSetArgs) -> Result<()> {
    let mut pools = load_pools(&args.pools)?;
    let name = match (&args.name, &args.charset) {
        (Some(n), _) => n.clone(),
        (None, Some(c)) => stem(c)?,
        (None, None) => bail!("--name is required without --charset"),
    };
    if let Some(path) = &args.charset {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let charset = load_charset(&stem(path)?, &text)?;
        pools = pools.iter().map(|p| filter_by_charset(p, &charset)).collect();
    }
    let replicas = build_replicas(&name, &pools, args.size, args.replicas, args.seed)?;
    fs::create_dir_all(&args.out)?;
    for r in &replicas {
        let path = args.out.join(format!("{}_{}.hwrl", r.set_name, r.replica_index));
        fs::write(&path, r.to_text())?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::BuildSet(args) => build_set(args),
        Command::Report { merge } => {
            let summaries = merge.iter().map(|p| read_summary(p)).collect::<Result<Vec<_>, _>>()?;
            print!("{}", render_summaries(&summaries));
            Ok(())
        }
        Command::Synth { out, per_class, seed } => {
            let pool = digit_pool(&stem(&out)?, per_class, &GlyphNoise::default(), seed);
            fs::write(&out, write_hws(&pool)?)?;
            println!("{} samples -> {}", pool.len(), out.display());
            Ok(())
        }
        Command::Labels { pools, replica, out } => {
            let pools = load_pools(&pools)?;
            let replica = load_replica(&replica)?;
            let samples = replica.resolve(&pools)?;
            let text = OracleRecognizer::to_text(samples.iter().enumerate().map(|(i, s)| (i as u32, s.label())));
            fs::write(&out, text)?;
            Ok(())
        }
    }
}

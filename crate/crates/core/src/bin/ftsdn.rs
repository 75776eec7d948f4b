use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use ftsdn::bench;
use ftsdn::checker;
use ftsdn::scenario::{parse_duration, Scenario};
use ftsdn::trace;
use ftsdn::world;

#[derive(Parser)]
#[command(name = "ftsdn", about = "Lease-based controller failover in a deterministic network simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and check its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Throughput over switch counts and cache-hit probabilities.
    Sweep {
        /// Base scenario; the built-in benchmark setup if omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,8,32,64")]
        switches: Vec<usize>,
        #[arg(long = "p", value_delimiter = ',', default_value = "0,0.1,0.5,0.9")]
        p_values: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        repetitions: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Windowed throughput across a controller crash and a data-server crash.
    Faults {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Single controller appending every update to a synchronous log.
    Disklog {
        #[arg(long, default_value_t = 32)]
        switches: usize,
        #[arg(long, default_value = "5ms")]
        latency: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check a recorded JSON-lines trace against its scenario.
    Check {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let (mut s, warnings) = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    for w in warnings {
        eprintln!("warning: {}: line {}: {}", path.display(), w.line, w.msg);
    }
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = dir.join(name);
    fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

fn report(r: &checker::Report) -> bool {
    print!("{}", r.to_jsonl());
    r.all_passed()
}

fn main() -> Result<ExitCode> {
    let ok = match Cli::parse().cmd {
        Cmd::Run { scenario, seed, trace_out, metrics_out } => {
            let s = load(&scenario, seed)?;
            let w = world::run(&s)?;
            if let Some(p) = trace_out {
                let f = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
                trace::write_jsonl(w.trace(), BufWriter::new(f))?;
            }
            if let Some(p) = metrics_out {
                fs::write(&p, w.metrics().to_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
            report(&checker::check_all(w.trace(), &s)?)
        }
        Cmd::Sweep { scenario, switches, p_values, repetitions, seed, out_dir } => {
            let mut base = match scenario {
                Some(p) => load(&p, None)?,
                None => bench::bench_base(),
            };
            base.seed = seed.unwrap_or(base.seed);
            let rows = bench::run_throughput_sweep(&switches, &p_values, repetitions, &base)?;
            let csv = bench::sweep_csv(&rows);
            print!("{csv}");
            eprintln!("wrote {}", write(&out_dir, "sweep.csv", &csv)?.display());
            true
        }
        Cmd::Faults { scenario, seed, out_dir } => {
            let s = load(&scenario, seed)?;
            let t = bench::run_fault_timeline(&s)?;
            println!("controller crash at {}, data-server crash at {}", t.controller_crash, t.data_server_crash);
            match t.takeover {
                Some(at) => println!("new master acknowledged at {at}"),
                None => println!("no new master acknowledged"),
            }
            for (a, b) in &t.zero_windows {
                println!("zero throughput [{a}, {b})");
            }
            eprintln!("wrote {}", write(&out_dir, "fault_timeline.csv", &t.series.to_csv())?.display());
            true
        }
        Cmd::Disklog { switches, latency, out_dir } => {
            let lat = parse_duration(&latency).map_err(anyhow::Error::msg)?;
            let r = bench::run_disk_log_baseline(switches, lat, &bench::bench_base())?;
            let json = serde_json::to_string_pretty(&r)?;
            println!("{json}");
            eprintln!("wrote {}", write(&out_dir, "disklog.json", &json)?.display());
            true
        }
        Cmd::Check { scenario, trace: path } => {
            let s = load(&scenario, None)?;
            let f = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let records = trace::read_jsonl(BufReader::new(f))?;
            report(&checker::check_all(&records, &s)?)
        }
    };
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

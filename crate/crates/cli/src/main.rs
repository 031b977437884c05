use std::fs::{self, File};
use std::io::{self, Read};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use ksum_core::harness::{
    bench, bench_instance, derive_seed, parse_sizes, verify, write_csv, BenchInstances, CapPolicy,
    RunConfig,
};
use ksum_core::instance::{generate_random, generate_unsolvable, plant_solution};
use ksum_core::special::OracleRegistry;
use ksum_core::{KSumInstance, SolverKind};

#[derive(Parser)]
#[command(name = "ksum", version, about = "Space-bounded kSUM solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Random,
    Unsolvable,
    Planted,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Strict,
    Observe,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance.
    Gen {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1 << 40)]
        bound: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "random")]
        kind: Kind,
        /// Output file; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run one solver and print its report.
    Solve {
        #[arg(long)]
        solver: SolverKind,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instance file ("-" for stdin); otherwise a random instance from k, n, seed.
        #[arg(long, short)]
        input: Option<PathBuf>,
        /// Space budget constant C in C * n^delta * (log2 n)^2.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, value_enum, default_value = "observe")]
        policy: Policy,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[arg(long)]
        deadline_ms: Option<u64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long, default_value = "default")]
        oracle: String,
    },
    /// Compare a solver with brute force over a seed sweep.
    Verify {
        #[arg(long)]
        solver: SolverKind,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value = "default")]
        oracle: String,
    },
    /// Sweep n and fit time and space exponents.
    Bench {
        #[arg(long)]
        solver: SolverKind,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        /// `a..b` for powers of two, or a comma list.
        #[arg(long)]
        sizes: String,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "unsolvable")]
        instances: Kind,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, value_enum, default_value = "observe")]
        policy: Policy,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value = "default")]
        oracle: String,
    },
}

fn policy(p: Policy) -> CapPolicy {
    match p {
        Policy::Strict => CapPolicy::Strict,
        Policy::Observe => CapPolicy::Observe,
    }
}

fn instances(k: Kind) -> BenchInstances {
    match k {
        Kind::Random => BenchInstances::Random,
        Kind::Unsolvable => BenchInstances::Unsolvable,
        Kind::Planted => BenchInstances::Planted,
    }
}

fn read_instance(path: &PathBuf) -> Result<KSumInstance> {
    let mut text = String::new();
    if path.as_os_str() == "-" {
        io::stdin().read_to_string(&mut text)?;
    } else {
        text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(KSumInstance::from_text(&text)?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let registry = OracleRegistry::with_defaults();
    match cli.command {
        Command::Gen { k, n, bound, seed, kind, out } => {
            let inst = match kind {
                Kind::Random => generate_random(n, k, bound, seed)?,
                Kind::Unsolvable => generate_unsolvable(n, k, bound, seed)?,
                Kind::Planted => plant_solution(&generate_random(n, k, bound, seed)?, seed).0,
            };
            match out {
                Some(p) => fs::write(&p, inst.to_text())
                    .with_context(|| format!("writing {}", p.display()))?,
                None => print!("{}", inst.to_text()),
            }
        }
        Command::Solve {
            solver,
            k,
            n,
            delta,
            seed,
            input,
            budget,
            policy: p,
            repeat,
            deadline_ms,
            format,
            oracle,
        } => {
            let oracle = registry.get(&oracle)?;
            let inst = match (&input, k, n) {
                (Some(path), _, _) => read_instance(path)?,
                (None, Some(k), Some(n)) => bench_instance(BenchInstances::Random, n, k, seed)?,
                _ => bail!("solve needs --input or both --k and --n"),
            };
            let mut cfg = RunConfig::new(solver, inst.k(), inst.n(), delta, seed);
            cfg.policy = policy(p);
            cfg.budget_constant = budget;
            cfg.repeat = repeat;
            cfg.deadline = deadline_ms.map(Duration::from_millis);
            cfg.validate()?;
            for r in 0..repeat as u64 {
                let run = RunConfig {
                    seed: derive_seed(seed, r),
                    ..cfg.clone()
                };
                let report = run.run(&inst, oracle)?;
                info!("{solver}: {:?}", report.stats);
                match format {
                    Format::Json => println!("{}", report.to_json()),
                    Format::Text => println!(
                        "solver={solver} found={} witness={:?} elapsed_ns={} peak_cells={} seed={}",
                        report.found,
                        report.witness.as_ref().map(|w| &w.indices),
                        report.elapsed.as_nanos(),
                        report.peak_cells,
                        report.seed
                    ),
                }
            }
        }
        Command::Verify { solver, k, n, delta, seeds, oracle } => {
            let oracle = registry.get(&oracle)?;
            let out = verify(solver, k, n, delta, seeds, oracle)?;
            println!("{}", serde_json::to_string(&out)?);
            if !out.passed() {
                eprintln!("{solver} disagreed with brute force on seeds {:?}", out.disagreements);
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench {
            solver,
            k,
            delta,
            sizes,
            seeds,
            seed,
            instances: kind,
            budget,
            policy: p,
            csv,
            json,
            oracle,
        } => {
            let oracle = registry.get(&oracle)?;
            let sizes = parse_sizes(&sizes)?;
            let mut cfg = RunConfig::new(solver, k, sizes[0], delta, seed);
            cfg.policy = policy(p);
            cfg.budget_constant = budget;
            let (rows, summary) = bench(&cfg, &sizes, seeds, instances(kind), oracle)?;
            match csv {
                Some(p) => write_csv(&rows, File::create(&p)?)?,
                None => write_csv(&rows, io::stdout())?,
            }
            let text = serde_json::to_string_pretty(&summary)?;
            match json {
                Some(p) => fs::write(p, &text)?,
                None => eprintln!("{text}"),
            }
            if !summary.monotone {
                log::warn!("medians are not monotone in n");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KSUM_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

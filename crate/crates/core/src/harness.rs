//! Run configuration, oracle sweeps, and scaling benchmarks.

use std::io::Write;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::context::RunLimits;
use crate::error::{param, KsumError, Result};
use crate::instance::{generate_random, generate_unsolvable, plant_solution, KSumInstance, SolverReport};
use crate::reference::brute_force_solve;
use crate::solver::{run_solver, SolverKind};
use crate::special::TwoSumOracle;

/// What happens when a run exceeds its space budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapPolicy {
    /// The budget is a hard cap; exceeding it aborts the run.
    Strict,
    /// The run completes; an overrun is logged.
    Observe,
}

/// `C * n^delta * (log2 n)^2`, rounded up.
pub fn space_budget(c: f64, n: usize, delta: f64) -> usize {
    let log = (n.max(2) as f64).log2();
    (c * (n as f64).powf(delta) * log * log).ceil() as usize
}

/// One solver invocation as configured from the command line.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub solver: SolverKind,
    pub k: usize,
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub policy: CapPolicy,
    /// Constant of the space budget; `None` disables budgeting.
    pub budget_constant: Option<f64>,
    pub repeat: usize,
    pub deadline: Option<Duration>,
}

impl RunConfig {
    pub fn new(solver: SolverKind, k: usize, n: usize, delta: f64, seed: u64) -> Self {
        Self {
            solver,
            k,
            n,
            delta,
            seed,
            policy: CapPolicy::Observe,
            budget_constant: None,
            repeat: 1,
            deadline: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.repeat == 0 {
            return param("n and repeat must be positive");
        }
        self.solver.check(self.k, self.delta)
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget_constant
            .map(|c| space_budget(c, self.n, self.delta))
    }

    fn limits(&self) -> RunLimits {
        RunLimits {
            cells: match self.policy {
                CapPolicy::Strict => self.budget(),
                CapPolicy::Observe => None,
            },
            deadline: self.deadline,
        }
    }

    /// Runs the solver on `inst` under this configuration's limits.
    pub fn run(&self, inst: &KSumInstance, oracle: &dyn TwoSumOracle) -> Result<SolverReport> {
        self.validate()?;
        let r = run_solver(self.solver, inst, self.delta, self.seed, self.limits(), oracle)?;
        if let Some(b) = self.budget() {
            if r.peak_cells > b {
                warn!(
                    "{} used {} cells, over the budget of {b}",
                    self.solver, r.peak_cells
                );
            }
        }
        Ok(r)
    }
}

/// Seed of the `run`-th repetition: independent streams, reproducible from `seed`.
pub fn derive_seed(seed: u64, run: u64) -> u64 {
    use rand::RngCore;
    if run == 0 {
        return seed;
    }
    crate::instance::rng_for(seed, 0x7265_7065_6174 ^ run).next_u64()
}

/// Outcome of a sweep against brute force.
#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyOutcome {
    pub runs: usize,
    pub solvable: usize,
    /// Seeds on which the solver disagreed with brute force.
    pub disagreements: Vec<u64>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// Entry bound used by sweeps: small bounds make many instances solvable.
pub fn sweep_bound(seed: u64) -> i64 {
    [2, 10, 1000, 1_000_000][(seed % 4) as usize]
}

/// Instance of a verification sweep.
pub fn sweep_instance(n: usize, k: usize, seed: u64) -> Result<KSumInstance> {
    generate_random(n, k, sweep_bound(seed), seed)
}

/// Compares `found` with brute force on `seeds` seeded instances.
pub fn verify(
    solver: SolverKind,
    k: usize,
    n: usize,
    delta: f64,
    seeds: u64,
    oracle: &dyn TwoSumOracle,
) -> Result<VerifyOutcome> {
    solver.check(k, delta)?;
    let mut out = VerifyOutcome::default();
    for seed in 0..seeds {
        let inst = sweep_instance(n, k, seed)?;
        let expect = brute_force_solve(&inst)?.found;
        let got = run_solver(solver, &inst, delta, seed, RunLimits::default(), oracle)?;
        out.runs += 1;
        out.solvable += usize::from(expect);
        if got.found != expect {
            out.disagreements.push(seed);
        }
    }
    Ok(out)
}

/// Least-squares fit of `log2(measure)` against `log2(n)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingFit {
    pub sizes: Vec<usize>,
    pub medians: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the residuals in log2 units.
    pub residual: f64,
}

impl ScalingFit {
    pub const MIN_SIZES: usize = 4;

    /// Fits per-size medians; refuses fewer than four sizes.
    pub fn fit(samples: &[(usize, f64)]) -> Result<Self> {
        let mut sizes: Vec<usize> = samples.iter().map(|s| s.0).collect();
        sizes.sort_unstable();
        sizes.dedup();
        if sizes.len() < Self::MIN_SIZES {
            return param(format!(
                "a scaling fit needs at least {} sizes, got {}",
                Self::MIN_SIZES,
                sizes.len()
            ));
        }
        let medians: Vec<f64> = sizes
            .iter()
            .map(|&n| {
                let mut v: Vec<f64> = samples.iter().filter(|s| s.0 == n).map(|s| s.1).collect();
                v.sort_by(f64::total_cmp);
                let m = v.len();
                if m % 2 == 1 {
                    v[m / 2]
                } else {
                    (v[m / 2 - 1] + v[m / 2]) / 2.0
                }
            })
            .collect();
        let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).log2()).collect();
        let ys: Vec<f64> = medians.iter().map(|&m| m.max(1e-300).log2()).collect();
        let len = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / len;
        let my = ys.iter().sum::<f64>() / len;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let residual = (xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
            .sum::<f64>()
            / len)
            .sqrt();
        Ok(Self {
            sizes,
            medians,
            slope,
            intercept,
            residual,
        })
    }

    /// Whether medians never decrease with n.
    pub fn is_monotone(&self) -> bool {
        self.medians.windows(2).all(|w| w[1] >= w[0])
    }
}

/// Instances a benchmark runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchInstances {
    /// No solution exists, so every run searches everything.
    Unsolvable,
    Random,
    Planted,
}

pub fn bench_instance(kind: BenchInstances, n: usize, k: usize, seed: u64) -> Result<KSumInstance> {
    let bound = 1 << 40;
    match kind {
        BenchInstances::Unsolvable => generate_unsolvable(n, k, bound, seed),
        BenchInstances::Random => generate_random(n, k, bound, seed),
        BenchInstances::Planted => Ok(plant_solution(&generate_random(n, k, bound, seed)?, seed).0),
    }
}

/// One CSV row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub solver: SolverKind,
    pub k: usize,
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub elapsed_ns: u64,
    pub peak_cells: usize,
    pub found: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchSummary {
    pub solver: SolverKind,
    pub k: usize,
    pub delta: f64,
    pub time: ScalingFit,
    pub space: ScalingFit,
    pub monotone: bool,
}

/// Runs `seeds` instances at every size and fits time and space.
pub fn bench(
    base: &RunConfig,
    sizes: &[usize],
    seeds: u64,
    instances: BenchInstances,
    oracle: &dyn TwoSumOracle,
) -> Result<(Vec<BenchRow>, BenchSummary)> {
    let mut rows = Vec::new();
    for &n in sizes {
        for s in 0..seeds {
            let seed = derive_seed(base.seed, s);
            let cfg = RunConfig {
                n,
                seed,
                ..base.clone()
            };
            let inst = bench_instance(instances, n, base.k, seed)?;
            let r = cfg.run(&inst, oracle)?;
            rows.push(BenchRow {
                solver: base.solver,
                k: base.k,
                n,
                delta: base.delta,
                seed,
                elapsed_ns: r.elapsed.as_nanos() as u64,
                peak_cells: r.peak_cells,
                found: r.found,
            });
        }
    }
    let summary = summarize(base, &rows)?;
    Ok((rows, summary))
}

pub fn summarize(base: &RunConfig, rows: &[BenchRow]) -> Result<BenchSummary> {
    let time: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.elapsed_ns as f64)).collect();
    let space: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.peak_cells.max(1) as f64)).collect();
    let time = ScalingFit::fit(&time)?;
    let space = ScalingFit::fit(&space)?;
    Ok(BenchSummary {
        solver: base.solver,
        k: base.k,
        delta: base.delta,
        monotone: time.is_monotone() && space.is_monotone(),
        time,
        space,
    })
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| KsumError::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| KsumError::Parse(e.to_string()))?;
    Ok(())
}

/// Parses `a..b` (powers of two from `a` to `b`) or a comma list.
pub fn parse_sizes(spec: &str) -> Result<Vec<usize>> {
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| KsumError::Parse(format!("bad size {s:?}")))
    };
    if let Some((a, b)) = spec.split_once("..") {
        let (mut a, b) = (num(a)?, num(b)?);
        if a == 0 || a > b {
            return Err(KsumError::Parse(format!("bad size range {spec:?}")));
        }
        let mut out = Vec::new();
        while a <= b {
            out.push(a);
            a *= 2;
        }
        Ok(out)
    } else {
        spec.split(',').map(num).collect()
    }
}

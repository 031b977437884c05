//! Per-run state shared by the solvers: seeded randomness, counters, an
//! optional deadline, and the metered wrapper that turns a search into a
//! [`SolverReport`].

use std::cell::{Cell, RefCell, RefMut};
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;

use crate::error::{KsumError, Result};
use crate::instance::{rng_for, RunStats, SolverReport, Witness};
use crate::workspace::meter_scope;

/// Randomness and bookkeeping of one solver run.
pub struct Ctx {
    seed: u64,
    rng: RefCell<ChaCha8Rng>,
    stats: RefCell<RunStats>,
    deadline: Option<Instant>,
    depth: Cell<usize>,
}

impl Ctx {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: RefCell::new(rng_for(seed, 0x736f_6c76)),
            stats: RefCell::new(RunStats::default()),
            deadline: None,
            depth: Cell::new(0),
        }
    }

    pub fn with_deadline(mut self, limit: Option<Duration>) -> Self {
        self.deadline = limit.map(|d| Instant::now() + d);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self) -> RefMut<'_, ChaCha8Rng> {
        self.rng.borrow_mut()
    }

    pub fn stats(&self) -> RefMut<'_, RunStats> {
        self.stats.borrow_mut()
    }

    pub fn snapshot(&self) -> RunStats {
        self.stats.borrow().clone()
    }

    /// Nesting depth of reductions; 1 inside the outermost one.
    pub fn depth(&self) -> usize {
        self.depth.get()
    }

    /// Runs `f` one reduction level deeper.
    pub fn nested<T>(&self, f: impl FnOnce() -> T) -> T {
        self.depth.set(self.depth.get() + 1);
        let out = f();
        self.depth.set(self.depth.get() - 1);
        out
    }

    /// Errors once the deadline has passed.
    pub fn check_deadline(&self) -> Result<()> {
        match self.deadline {
            Some(d) if Instant::now() >= d => {
                Err(KsumError::Deadline {
                    target_vectors: self.stats.borrow().target_vectors,
                    peak_cells: 0,
                })
            }
            _ => Ok(()),
        }
    }
}

/// Limits applied to a measured run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunLimits {
    /// Cap on live workspace cells; exceeding it is a budget error.
    pub cells: Option<usize>,
    pub deadline: Option<Duration>,
}

/// Runs `search` inside a fresh meter and packages the outcome.
pub fn measured<F>(seed: u64, limits: RunLimits, search: F) -> Result<SolverReport>
where
    F: FnOnce(&Ctx) -> Result<Option<Witness>>,
{
    let scope = meter_scope(limits.cells);
    let ctx = Ctx::new(seed).with_deadline(limits.deadline);
    let start = Instant::now();
    let witness = search(&ctx).map_err(|e| match e {
        KsumError::Deadline { target_vectors, .. } => KsumError::Deadline {
            target_vectors,
            peak_cells: scope.peak_cells(),
        },
        e => e,
    })?;
    let elapsed = start.elapsed();
    Ok(SolverReport {
        found: witness.is_some(),
        witness,
        elapsed,
        peak_cells: scope.peak_cells(),
        seed,
        stats: ctx.snapshot(),
    })
}

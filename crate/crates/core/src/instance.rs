//! Problem instances, witnesses, reports, generators and the text format.

use std::fmt::Write as _;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, KsumError, Result};

/// Largest admissible magnitude of an array entry.
pub const UNIVERSE_BOUND: i64 = 1 << 40;
pub const MAX_K: usize = 12;
pub const MIN_K: usize = 2;

/// k arrays of n bounded integers and a target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KSumInstance {
    arrays: Vec<Vec<i64>>,
    target: i64,
}

impl KSumInstance {
    pub fn new(arrays: Vec<Vec<i64>>, target: i64) -> Result<Self> {
        let k = arrays.len();
        if !(MIN_K..=MAX_K).contains(&k) {
            return param(format!("k = {k} outside [{MIN_K}, {MAX_K}]"));
        }
        let n = arrays[0].len();
        if n == 0 {
            return param("arrays must be non-empty");
        }
        if arrays.iter().any(|a| a.len() != n) {
            return param("all arrays must have the same length");
        }
        if arrays.iter().flatten().any(|v| v.abs() > UNIVERSE_BOUND) {
            return param("array entry exceeds 2^40 in magnitude");
        }
        if target.abs() > k as i64 * UNIVERSE_BOUND {
            return param("target exceeds k * 2^40 in magnitude");
        }
        Ok(Self { arrays, target })
    }

    pub fn k(&self) -> usize {
        self.arrays.len()
    }

    pub fn n(&self) -> usize {
        self.arrays[0].len()
    }

    pub fn target(&self) -> i64 {
        self.target
    }

    pub fn arrays(&self) -> &[Vec<i64>] {
        &self.arrays
    }

    /// The arrays as read-only views.
    pub fn views(&self) -> Vec<&dyn crate::view::ArrayView> {
        self.arrays.iter().map(|a| a as &dyn crate::view::ArrayView).collect()
    }

    pub fn array_slices(&self) -> Vec<&[i64]> {
        self.arrays.iter().map(Vec::as_slice).collect()
    }

    /// Sum of the elements picked by `indices`, or `None` if the index
    /// vector does not fit the instance.
    pub fn evaluate(&self, indices: &[usize]) -> Option<i64> {
        if indices.len() != self.k() {
            return None;
        }
        let mut sum = 0i64;
        for (a, &i) in self.arrays.iter().zip(indices) {
            sum += *a.get(i)?;
        }
        Some(sum)
    }

    pub fn is_witness(&self, w: &Witness) -> bool {
        self.evaluate(&w.indices) == Some(self.target)
    }

    pub fn with_target(&self, target: i64) -> Result<Self> {
        Self::new(self.arrays.clone(), target)
    }

    /// Serializes to the text format: `k n target`, then one line per array.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.k(), self.n(), self.target);
        for a in &self.arrays {
            let line: Vec<String> = a.iter().map(i64::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| KsumError::Parse("empty input".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 3 {
            return Err(KsumError::Parse(format!("bad header line: {header:?}")));
        }
        let k: usize = parse_num(head[0])?;
        let n: usize = parse_num(head[1])?;
        let target: i64 = parse_num(head[2])?;
        let mut arrays = Vec::with_capacity(k);
        for row in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| KsumError::Parse(format!("missing array line {}", row + 1)))?;
            let values = line
                .split_whitespace()
                .map(parse_num)
                .collect::<Result<Vec<i64>>>()?;
            if values.len() != n {
                return Err(KsumError::Parse(format!(
                    "array {} has {} values, header says {n}",
                    row + 1,
                    values.len()
                )));
            }
            arrays.push(values);
        }
        if lines.next().is_some() {
            return Err(KsumError::Parse("trailing lines after the last array".into()));
        }
        Self::new(arrays, target)
    }

    /// Single-array kSUM as the k-array variant: the array is replicated k
    /// times. Witnesses must be filtered with [`Witness::has_distinct_indices`].
    pub fn from_single_array(values: Vec<i64>, k: usize, target: i64) -> Result<Self> {
        Self::new(vec![values; k], target)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| KsumError::Parse(format!("not a number: {s:?}")))
}

/// One position per array.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Witness {
    pub indices: Vec<usize>,
}

impl Witness {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn has_distinct_indices(&self) -> bool {
        let mut v = self.indices.clone();
        v.sort_unstable();
        v.windows(2).all(|w| w[0] != w[1])
    }
}

/// Counters a run accumulates; not part of the serialized report.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub target_vectors: u64,
    pub skipped_vectors: u64,
    pub top_calls: u64,
    pub reported_tuples: u64,
    pub cascade_attempts: u64,
    pub cascade_levels: u64,
    pub live_windows: u64,
    pub table_probes: u64,
    pub max_probes_per_answer: u64,
    /// Most left tuples sharing one key sum in a lookup table.
    pub max_table_reps: u64,
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverReport {
    pub found: bool,
    pub witness: Option<Witness>,
    #[serde(rename = "elapsed_ns", with = "duration_ns")]
    pub elapsed: Duration,
    pub peak_cells: usize,
    pub seed: u64,
    #[serde(skip)]
    pub stats: RunStats,
}

impl SolverReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }

    /// Same outcome, ignoring wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.found == other.found
            && self.witness == other.witness
            && self.peak_cells == other.peak_cells
            && self.seed == other.seed
    }
}

mod duration_ns {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_nanos().min(u64::MAX as u128) as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_nanos(u64::deserialize(d)?))
    }
}

/// Deterministic RNG for a (seed, stream) pair. Distinct streams of one seed
/// are independent; the same pair always replays the same sequence.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform random instance with entries in `[-bound, bound]` and a target
/// drawn uniformly from the instance's achievable sum range.
pub fn generate_random(n: usize, k: usize, bound: i64, seed: u64) -> Result<KSumInstance> {
    if n == 0 {
        return param("n must be at least 1");
    }
    if !(0..=UNIVERSE_BOUND).contains(&bound) {
        return param("universe bound must lie in [0, 2^40]");
    }
    if !(MIN_K..=MAX_K).contains(&k) {
        return param(format!("k = {k} outside [{MIN_K}, {MAX_K}]"));
    }
    let mut rng = rng_for(seed, 0);
    let arrays: Vec<Vec<i64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.gen_range(-bound..=bound)).collect())
        .collect();
    let lo: i64 = arrays.iter().map(|a| *a.iter().min().unwrap()).sum();
    let hi: i64 = arrays.iter().map(|a| *a.iter().max().unwrap()).sum();
    let target = rng.gen_range(lo..=hi);
    KSumInstance::new(arrays, target)
}

/// Instance with no solution: every entry is even and the target is 1, the
/// middle of the sum range. Used to time full searches.
pub fn generate_unsolvable(n: usize, k: usize, bound: i64, seed: u64) -> Result<KSumInstance> {
    if bound < 2 {
        return param("unsolvable instances need a bound of at least 2");
    }
    let base = generate_random(n, k, bound / 2, seed)?;
    let arrays = base
        .arrays
        .iter()
        .map(|a| a.iter().map(|v| v * 2).collect())
        .collect();
    KSumInstance::new(arrays, 1)
}

/// Overwrites one random position per array so that the chosen tuple sums
/// to the target. Entries stay within the instance's own magnitude (or
/// `ceil(|t| / k)` if that is larger).
pub fn plant_solution(inst: &KSumInstance, seed: u64) -> (KSumInstance, Witness) {
    let k = inst.k() as i64;
    let mut rng = rng_for(seed, 1);
    let max_abs = inst.arrays.iter().flatten().map(|v| v.abs()).max().unwrap_or(0);
    let bound = max_abs.max((inst.target.abs() + k - 1) / k);
    let mut arrays = inst.arrays.clone();
    let mut remaining = inst.target;
    let mut indices = Vec::with_capacity(inst.k());
    for (i, a) in arrays.iter_mut().enumerate() {
        let slots_after = k - 1 - i as i64;
        let lo = (-bound).max(remaining - slots_after * bound);
        let hi = bound.min(remaining + slots_after * bound);
        let v = if slots_after == 0 {
            remaining
        } else {
            rng.gen_range(lo..=hi)
        };
        let pos = rng.gen_range(0..a.len());
        a[pos] = v;
        indices.push(pos);
        remaining -= v;
    }
    let planted = KSumInstance::new(arrays, inst.target).expect("planting preserves bounds");
    let w = Witness::new(indices);
    debug_assert!(planted.is_witness(&w));
    (planted, w)
}

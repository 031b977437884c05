//! Almost-linear hashing and the balancing cascade.
//!
//! A single function maps an integer `x` to
//! `floor(m * (a * x̂ mod p) / p)` with `p = 2^61 - 1` and `x̂` the lift of
//! `x` into `[0, p)`. Because `x ↦ a * x̂ mod p` is additive modulo `p`, the
//! scaled value satisfies
//!
//! ```text
//! h(x1) + h(x2) ≡ h(x1 + x2) + c + e  (mod m),   c = m - 1,  e ∈ {0, 1}
//! ```
//!
//! which is the almost-linearity every reduction relies on. Summing `r`
//! terms accumulates a carry in `[0, r - 1]`; [`HashCascade::completion_sets`]
//! turns that into the per-level candidate residues a caller has to probe.
//!
//! A [`HashCascade`] chains functions with geometrically shrinking ranges;
//! its value is the mixed-radix packing of the level digits. Construction
//! ([`build_balanced_cascade`]) verifies each level against the distinct
//! sums of a re-enumerable stream and resamples on failure.

use std::collections::BTreeSet;
use std::ops::ControlFlow;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{contract, param, KsumError, Result};
use crate::instance::rng_for;
use crate::view::{for_each_tuple, tuple_count, ArrayView};
use crate::workspace::{Cells, MeteredVec};

/// The Mersenne prime `2^61 - 1`.
pub const PRIME: u64 = (1 << 61) - 1;

/// Per-level digit vector.
pub type Digits = SmallVec<[u64; 8]>;
/// Per-level sets of admissible residues.
pub type LevelSets = Vec<SmallVec<[u64; 4]>>;

#[inline]
fn lift(x: i64) -> u64 {
    if x >= 0 {
        let x = x as u64;
        if x < PRIME {
            x
        } else {
            x % PRIME
        }
    } else {
        x.rem_euclid(PRIME as i64) as u64
    }
}

#[inline]
fn mulmod(a: u64, b: u64) -> u64 {
    let z = a as u128 * b as u128;
    let s = (z as u64 & PRIME) + (z >> 61) as u64;
    if s >= PRIME {
        s - PRIME
    } else {
        s
    }
}

/// `floor(g * m / p)` without a 128-bit division.
#[inline]
fn scale(g: u64, m: u64) -> u64 {
    let z = g as u128 * m as u128;
    let mut q = (z >> 61) as u64;
    let mut r = (z as u64 & PRIME) + q;
    while r >= PRIME {
        q += 1;
        r -= PRIME;
    }
    q
}

/// One member of the almost-linear family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlmostLinearHash {
    multiplier: u64,
    range: u64,
}

impl AlmostLinearHash {
    pub fn new(multiplier: u64, range: u64) -> Result<Self> {
        if !(1..PRIME).contains(&multiplier) {
            return param("multiplier must lie in [1, p)");
        }
        if !(2..PRIME).contains(&range) {
            return param(format!("hash range {range} outside [2, p)"));
        }
        Ok(Self { multiplier, range })
    }

    pub fn multiplier(&self) -> u64 {
        self.multiplier
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    /// The constant `c_h`: `h(x1) + h(x2) - h(x1 + x2) - c_h` is always 0 or
    /// 1 modulo the range.
    pub fn offset(&self) -> u64 {
        self.range - 1
    }

    #[inline]
    pub fn eval(&self, x: i64) -> u64 {
        scale(mulmod(self.multiplier, lift(x)), self.range)
    }

    /// `(h(x1) + h(x2) - h(x1 + x2) - c_h) mod m`.
    pub fn deviation(&self, x1: i64, x2: i64) -> u64 {
        let m = self.range as u128;
        let lhs = self.eval(x1) as u128 + self.eval(x2) as u128;
        let rhs = self.eval(x1 + x2) as u128 + self.offset() as u128;
        ((lhs + 2 * m - rhs) % m) as u64
    }
}

/// Samples a function with the given range; deterministic in the seed.
pub fn sample_hash(range: u64, seed: u64) -> Result<AlmostLinearHash> {
    let mut rng = rng_for(seed, 0x6861_7368);
    sample_hash_with(range, &mut rng)
}

pub(crate) fn sample_hash_with<R: Rng>(range: u64, rng: &mut R) -> Result<AlmostLinearHash> {
    AlmostLinearHash::new(rng.gen_range(1..PRIME), range)
}

/// Counts the items of a stream that land in overflowed buckets, i.e.
/// buckets receiving more than `3n/m` items. The first pass counts with
/// `m` metered cells, the second classifies.
pub fn check_balance<F, I>(h: &AlmostLinearHash, values: F, n: usize) -> Result<u64>
where
    F: Fn() -> I,
    I: IntoIterator<Item = i64>,
{
    let m = h.range() as usize;
    if m > n {
        return param("check_balance needs m <= n");
    }
    let mut counts: MeteredVec<u32> = MeteredVec::new(1);
    for _ in 0..m {
        counts.push(0)?;
    }
    let mut seen = 0usize;
    for x in values() {
        counts.as_mut_slice()[h.eval(x) as usize] += 1;
        seen += 1;
    }
    if seen != n {
        return contract(format!("stream yielded {seen} items, expected {n}"));
    }
    let threshold = 3.0 * n as f64 / m as f64;
    let mut mass = 0u64;
    let mut second = 0usize;
    for x in values() {
        second += 1;
        if counts[h.eval(x) as usize] as f64 > threshold {
            mass += 1;
        }
    }
    if second != n {
        return contract("stream changed length between passes");
    }
    Ok(mass)
}

/// A sequence of almost-linear functions whose digits are packed in mixed
/// radix: `packed = d_0 + d_1 * r_0 + d_2 * r_0 * r_1 + ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "CascadeJson", try_from = "CascadeJson")]
pub struct HashCascade {
    levels: Vec<AlmostLinearHash>,
}

#[derive(Serialize, Deserialize)]
struct CascadeJson {
    multipliers: Vec<u64>,
    ranges: Vec<u64>,
}

impl From<HashCascade> for CascadeJson {
    fn from(c: HashCascade) -> Self {
        Self {
            multipliers: c.levels.iter().map(|h| h.multiplier).collect(),
            ranges: c.levels.iter().map(|h| h.range).collect(),
        }
    }
}

impl TryFrom<CascadeJson> for HashCascade {
    type Error = KsumError;
    fn try_from(j: CascadeJson) -> Result<Self> {
        if j.multipliers.len() != j.ranges.len() {
            return param("multipliers and ranges differ in length");
        }
        let levels = j
            .multipliers
            .iter()
            .zip(&j.ranges)
            .map(|(&a, &m)| AlmostLinearHash::new(a, m))
            .collect::<Result<Vec<_>>>()?;
        HashCascade::new(levels)
    }
}

impl HashCascade {
    pub fn new(levels: Vec<AlmostLinearHash>) -> Result<Self> {
        let mut range: u128 = 1;
        for h in &levels {
            range *= h.range() as u128;
            if range > (1u128 << 62) {
                return param("cascade packed range exceeds 2^62");
            }
        }
        Ok(Self { levels })
    }

    /// The cascade with no levels: everything maps to 0.
    pub fn trivial() -> Self {
        Self { levels: Vec::new() }
    }

    pub fn levels(&self) -> &[AlmostLinearHash] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn ranges(&self) -> Vec<u64> {
        self.levels.iter().map(|h| h.range()).collect()
    }

    /// Number of distinct packed values.
    pub fn packed_range(&self) -> u64 {
        self.levels.iter().map(|h| h.range()).product()
    }

    pub fn digits(&self, x: i64) -> Digits {
        self.levels.iter().map(|h| h.eval(x)).collect()
    }

    pub fn pack(&self, digits: &[u64]) -> u64 {
        let mut packed = 0u64;
        let mut weight = 1u64;
        for (h, &d) in self.levels.iter().zip(digits) {
            packed += d * weight;
            weight *= h.range();
        }
        packed
    }

    pub fn unpack(&self, mut packed: u64) -> Digits {
        self.levels
            .iter()
            .map(|h| {
                let d = packed % h.range();
                packed /= h.range();
                d
            })
            .collect()
    }

    /// Packed value of the first `depth` levels only.
    #[inline]
    pub fn eval_prefix(&self, x: i64, depth: usize) -> u64 {
        let mut packed = 0u64;
        let mut weight = 1u64;
        for h in &self.levels[..depth] {
            packed += h.eval(x) * weight;
            weight *= h.range();
        }
        packed
    }

    #[inline]
    pub fn eval(&self, x: i64) -> u64 {
        self.eval_prefix(x, self.levels.len())
    }

    /// Residues a part can have when `terms` parts sum to a total.
    ///
    /// `total[l]` is the level-`l` digit of the total and `known[l]` the sum
    /// of the level-`l` digits of the other `terms - 1` parts. Almost
    /// linearity leaves a carry in `[0, terms - 1]` per level.
    pub fn completion_sets(&self, total: &[u64], known: &[u64], terms: usize) -> LevelSets {
        self.levels
            .iter()
            .enumerate()
            .map(|(l, h)| {
                let m = h.range();
                let base = (total[l] % m + m - known[l] % m) % m;
                let mut set: SmallVec<[u64; 4]> = SmallVec::new();
                for e in 0..terms.max(1) as u64 {
                    let r = (base + m - e % m) % m;
                    if !set.contains(&r) {
                        set.push(r);
                    }
                }
                set
            })
            .collect()
    }

    /// `product(completion_sets(total, digits(x), terms))` written into
    /// `out` without intermediate allocation.
    pub fn completion_probes(&self, total: &[u64], x: i64, terms: usize, out: &mut Vec<u64>) {
        out.clear();
        out.push(0);
        let mut weight = 1u64;
        for (l, h) in self.levels.iter().enumerate() {
            let m = h.range();
            let base = (total[l] % m + m - h.eval(x) % m) % m;
            let width = (terms.max(1) as u64).min(m);
            let len = out.len();
            for e in 1..width {
                let r = (base + m - e) % m;
                for i in 0..len {
                    out.push(out[i] + r * weight);
                }
            }
            for p in &mut out[..len] {
                *p += base * weight;
            }
            weight *= m;
        }
        out.sort_unstable();
    }

    /// Residues of `h(a_1) + ... + h(a_terms)` given residues of
    /// `h(a_1 + ... + a_terms)`.
    pub fn digit_sum_sets(&self, of_sum: &LevelSets, terms: usize) -> LevelSets {
        self.levels
            .iter()
            .zip(of_sum)
            .map(|(h, set)| {
                let m = h.range();
                let mut out: SmallVec<[u64; 4]> = SmallVec::new();
                for &r in set {
                    for e in 0..terms.max(1) as u64 {
                        let v = (r + m - e % m) % m;
                        if !out.contains(&v) {
                            out.push(v);
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// All packed values drawn from per-level residue sets.
    pub fn product(&self, sets: &LevelSets) -> Vec<u64> {
        let mut out = vec![0u64];
        let mut weight = 1u64;
        for (h, set) in self.levels.iter().zip(sets) {
            let mut next = Vec::with_capacity(out.len() * set.len());
            for &p in &out {
                for &d in set {
                    next.push(p + d * weight);
                }
            }
            out = next;
            weight *= h.range();
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Packing of cascade digits wide enough that adding `terms` keys never
/// carries between levels. Sums of keys can then be compared as integers.
#[derive(Debug, Clone)]
pub struct WideKey {
    ranges: Digits,
    weights: Digits,
    terms: u64,
}

impl WideKey {
    /// Fails if sums of `terms` keys could leave `[0, 2^60]`.
    pub fn new(cascade: &HashCascade, terms: usize) -> Result<Self> {
        let terms = terms.max(1) as u64;
        let ranges: Digits = cascade.levels().iter().map(|h| h.range()).collect();
        let mut weights = Digits::new();
        let mut w = 1u64;
        for &r in &ranges {
            weights.push(w);
            w = w.saturating_mul(terms * r);
        }
        if w > 1 << 60 {
            return param("wide keys would exceed 2^60");
        }
        Ok(Self {
            ranges,
            weights,
            terms,
        })
    }

    #[inline]
    pub fn key(&self, cascade: &HashCascade, x: i64) -> i64 {
        cascade
            .levels()
            .iter()
            .zip(&self.weights)
            .map(|(h, &w)| (h.eval(x) * w) as i64)
            .sum()
    }

    /// Integer values that a sum of `terms` keys can take when the level
    /// digit sums have the given residues.
    pub fn targets(&self, digit_sum_sets: &LevelSets) -> Vec<i64> {
        let mut out = vec![0i64];
        for ((set, &r), &w) in digit_sum_sets.iter().zip(&self.ranges).zip(&self.weights) {
            let mut next = Vec::new();
            for &p in &out {
                for &res in set {
                    for q in 0..self.terms {
                        let x = res + q * r;
                        if x <= self.terms * (r - 1) {
                            next.push(p + (x * w) as i64);
                        }
                    }
                }
            }
            out = next;
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// A re-enumerable stream of sums.
pub trait SumSource {
    /// Visits every sum once, in a fixed order.
    fn for_each_sum(&self, f: &mut dyn FnMut(i64));
    fn count(&self) -> u128;
}

/// All tuple sums of a group of arrays.
pub struct GroupSums<'a> {
    pub views: &'a [&'a dyn ArrayView],
}

impl SumSource for GroupSums<'_> {
    fn for_each_sum(&self, f: &mut dyn FnMut(i64)) {
        let _ = for_each_tuple(self.views, |_, s| {
            f(s);
            ControlFlow::Continue(())
        });
    }

    fn count(&self) -> u128 {
        tuple_count(self.views)
    }
}

/// A materialized list of sums; handy for tests.
pub struct ListSums<'a>(pub &'a [i64]);

impl SumSource for ListSums<'_> {
    fn for_each_sum(&self, f: &mut dyn FnMut(i64)) {
        self.0.iter().for_each(|&x| f(x));
    }
    fn count(&self) -> u128 {
        self.0.len() as u128
    }
}

/// Shape and tolerances of a cascade build.
#[derive(Debug, Clone, Copy)]
pub struct CascadeParams {
    /// Bucket size to reach, `n^delta` in the reductions.
    pub target_size: f64,
    /// Overflow constant; a bucket may hold `c` times its expected size.
    pub c: f64,
    pub attempts_cap: usize,
}

impl CascadeParams {
    pub const DEFAULT_ATTEMPTS: usize = 64;

    pub fn new(target_size: f64, c: f64) -> Self {
        Self {
            target_size,
            c,
            attempts_cap: Self::DEFAULT_ATTEMPTS,
        }
    }

    /// Final bucket bound on distinct sums.
    pub fn bucket_cap(&self) -> usize {
        (self.c * self.target_size).ceil() as usize
    }
}

/// Level ranges for shrinking `start` items to buckets of about `target`:
/// each level takes the square root of the residual set size, the last one
/// only as much as is still needed.
pub fn level_ranges(start: f64, target: f64) -> Vec<u64> {
    let mut ranges = Vec::new();
    let mut residual = start;
    let target = target.max(1.0);
    while residual > target * (1.0 + 1e-9) {
        let by_root = residual.sqrt().ceil();
        let by_target = (residual / target - 1e-9).ceil();
        let r = by_root.min(by_target).max(2.0);
        ranges.push(r as u64);
        residual /= r;
    }
    ranges
}

/// Result of a successful build.
#[derive(Debug, Clone)]
pub struct CascadeBuild {
    pub cascade: HashCascade,
    /// Functions sampled per level, including the accepted one.
    pub attempts: Vec<usize>,
}

impl CascadeBuild {
    pub fn total_attempts(&self) -> usize {
        self.attempts.iter().sum()
    }
}

/// Builds a cascade over `source` whose every packed value has at most
/// `c * target_size` distinct sums in its preimage. Each level is verified
/// by counting passes before the next one is chosen; counting uses
/// `c * target_size` metered cells.
pub fn build_balanced_cascade<R: Rng>(
    source: &dyn SumSource,
    params: CascadeParams,
    rng: &mut R,
) -> Result<CascadeBuild> {
    if !(params.target_size >= 1.0 && params.c >= 1.0) {
        return param("cascade needs target_size >= 1 and c >= 1");
    }
    let start = source.count() as f64;
    let ranges = level_ranges(start, params.target_size);
    let window = params.bucket_cap().max(1);
    let mut levels: Vec<AlmostLinearHash> = Vec::with_capacity(ranges.len());
    let mut attempts = Vec::with_capacity(ranges.len());
    let mut residual = start;
    for (l, &r) in ranges.iter().enumerate() {
        residual /= r as f64;
        let cap = (params.c * residual.max(params.target_size)).ceil() as usize;
        let mut tries = 0;
        loop {
            if tries == params.attempts_cap {
                return Err(KsumError::CascadeFailure {
                    level: l,
                    attempts: tries,
                });
            }
            tries += 1;
            let h = sample_hash_with(r, rng)?;
            levels.push(h);
            let candidate = HashCascade::new(levels.clone())?;
            if level_is_balanced(source, &candidate, cap, window)? {
                break;
            }
            levels.pop();
        }
        attempts.push(tries);
    }
    Ok(CascadeBuild {
        cascade: HashCascade::new(levels)?,
        attempts,
    })
}

/// True iff every packed value of `cascade` has at most `cap` distinct sums.
fn level_is_balanced(
    source: &dyn SumSource,
    cascade: &HashCascade,
    cap: usize,
    window: usize,
) -> Result<bool> {
    let buckets = cascade.packed_range() as usize;
    let mut counts: MeteredVec<u64> = MeteredVec::new(1);
    for _ in 0..window.min(buckets) {
        counts.push(0)?;
    }
    let mut start = 0usize;
    while start < buckets {
        let width = window.min(buckets - start);
        counts.as_mut_slice().iter_mut().for_each(|c| *c = 0);
        source.for_each_sum(&mut |x| {
            let p = cascade.eval(x) as usize;
            if p >= start && p < start + width {
                counts.as_mut_slice()[p - start] += 1;
            }
        });
        // Raw counts bound distinct counts from above; only overfull
        // buckets need the exact distinct check.
        for off in 0..width {
            if counts[off] as usize > cap
                && distinct_in_bucket(source, cascade, (start + off) as u64, cap, window)? > cap
            {
                return Ok(false);
            }
        }
        start += width;
    }
    Ok(true)
}

/// Distinct sums with packed value `bucket`, counted up to `cap + 1` in
/// passes that each keep at most `window` values.
pub(crate) fn distinct_in_bucket(
    source: &dyn SumSource,
    cascade: &HashCascade,
    bucket: u64,
    cap: usize,
    window: usize,
) -> Result<usize> {
    let _cells = Cells::alloc(2 * (window + 1))?;
    let mut count = 0usize;
    let mut cursor: Option<i64> = None;
    loop {
        let mut set = BTreeSet::new();
        source.for_each_sum(&mut |x| {
            if cursor.is_some_and(|c| x <= c) || cascade.eval(x) != bucket {
                return;
            }
            set.insert(x);
            if set.len() > window {
                set.pop_last();
            }
        });
        count += set.len();
        if count > cap || set.len() < window {
            return Ok(count);
        }
        cursor = set.last().copied();
    }
}

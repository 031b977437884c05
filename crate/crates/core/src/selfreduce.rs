//! Self-reduction from kSUM on `n` elements to many smaller instances on
//! `O(n^delta)` group sums, and the Las Vegas recursion built on it.
//!
//! The arrays are split into `ceil(k/m)` groups in input order; the last and
//! smallest group is fixed. A cascade balanced on the fixed group's sums
//! maps every sum to a packed value. For each vector of packed values of
//! the other groups, the fixed group's packed value is pinned down up to
//! the almost-linearity carries, its matching sums are collected
//! (deduplicated by sum, at most `c * n^delta` per candidate), the other
//! groups' matching sums are streamed in capped chunks, and each
//! combination of chunks becomes one `(k/m)`SUM instance for the top
//! solver. Every top-level solution is mapped back to original indices and
//! re-checked.

use std::collections::BTreeMap;
use std::ops::Range;
use std::rc::Rc;

use log::{debug, trace};

use crate::context::{measured, Ctx, RunLimits};
use crate::error::{contract, param, KsumError, Result};
use crate::hashing::{build_balanced_cascade, CascadeParams, GroupSums, HashCascade, WideKey};
use crate::instance::{KSumInstance, SolverReport, Witness};
use crate::kernel::{two_sum_find, CascadeReport, WideView};
use crate::special::TwoSumOracle;
use crate::view::{tuple_sum, ArrayView, Odometer, Tuple};
use crate::workspace::{pow_cells, Cells, MeteredVec, Pull, WitnessStream};

/// Solver for the instance built from the groups' sum lists; returns one
/// index per array.
pub type TopSolver<'s> = dyn Fn(&[&dyn ArrayView], i64, &Ctx) -> Result<Option<Tuple>> + 's;

/// Cascade builds tried before a run gives up.
pub const MAX_REBUILDS: usize = 8;

/// Partition of `k` arrays into `ceil(k/m)` contiguous groups whose sizes
/// differ by at most one, larger groups first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSplit {
    groups: Vec<Range<usize>>,
}

impl GroupSplit {
    pub fn new(k: usize, m: usize) -> Result<Self> {
        if m == 0 || m >= k {
            return param(format!("group size m = {m} must lie in [1, k) for k = {k}"));
        }
        let g = k.div_ceil(m);
        let base = k / g;
        let rem = k % g;
        let mut groups = Vec::with_capacity(g);
        let mut start = 0;
        for i in 0..g {
            let len = base + usize::from(i < rem);
            groups.push(start..start + len);
            start += len;
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn fixed_index(&self) -> usize {
        self.groups.len() - 1
    }

    pub fn fixed(&self) -> Range<usize> {
        self.groups[self.fixed_index()].clone()
    }

    /// Size of the fixed group.
    pub fn d(&self) -> usize {
        self.fixed().len()
    }
}

/// Distinct sums with one representative tuple each, in sum order.
pub struct DedupList {
    map: BTreeMap<i64, Tuple>,
    cells: Cells,
    per_entry: usize,
}

impl DedupList {
    /// `arity` tuple slots plus the sum plus one tree node per entry.
    pub fn new(arity: usize) -> Self {
        Self {
            map: BTreeMap::new(),
            cells: Cells::empty(),
            per_entry: arity + 2,
        }
    }

    /// Keeps the first tuple seen for each sum. Returns whether the sum was
    /// new.
    pub fn insert(&mut self, sum: i64, tuple: Tuple) -> Result<bool> {
        if self.map.contains_key(&sum) {
            return Ok(false);
        }
        self.cells.grow(self.per_entry)?;
        self.map.insert(sum, tuple);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, sum: i64) -> Option<&Tuple> {
        self.map.get(&sum)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &Tuple)> {
        self.map.iter().map(|(&s, t)| (s, t))
    }

    /// The sums as an array (the list's `B` array).
    pub fn sums(&self) -> Result<MeteredVec<i64>> {
        let mut out = MeteredVec::new(1);
        for &s in self.map.keys() {
            out.push(s)?;
        }
        Ok(out)
    }
}

/// How a group's tuples with a given packed value are produced.
#[derive(Clone, Copy)]
pub enum Reporter<'o> {
    /// Blocked probing of the group's last array.
    Kernel,
    /// Two-array groups go through a 2SUM reporting oracle on wide keys;
    /// other groups fall back to the kernel.
    Oracle(&'o dyn TwoSumOracle),
}

type Report<'a> = Box<dyn Iterator<Item = Result<(Tuple, i64)>> + 'a>;

fn group_report<'a>(
    reporter: Reporter<'a>,
    views: &[&'a dyn ArrayView],
    cascade: &'a HashCascade,
    v: u64,
    block: usize,
    delta: f64,
) -> Result<Report<'a>> {
    match reporter {
        Reporter::Oracle(oracle) if views.len() == 2 => {
            let key = Rc::new(WideKey::new(cascade, 2)?);
            let shared = Rc::new(cascade.clone());
            let wide = |base: &'a dyn ArrayView| -> Rc<dyn ArrayView + 'a> {
                Rc::new(WideView::new(Rc::new(base), Rc::clone(&shared), Rc::clone(&key)))
            };
            let of_sum = cascade
                .unpack(v)
                .iter()
                .map(|&d| smallvec::smallvec![d])
                .collect();
            let targets = key.targets(&cascade.digit_sum_sets(&of_sum, 2));
            let pairs = oracle.report(wide(views[0]), wide(views[1]), targets, delta)?;
            let (a1, a2) = (views[0], views[1]);
            Ok(Box::new(pairs.filter_map(move |p| match p {
                Err(e) => Some(Err(e)),
                Ok((i, j)) => {
                    let s = a1.get(i as usize) + a2.get(j as usize);
                    (cascade.eval(s) == v).then(|| Ok((smallvec::smallvec![i, j], s)))
                }
            })))
        }
        _ => Ok(Box::new(CascadeReport::new(views.to_vec(), cascade, v, block)?)),
    }
}

/// Parameters of one reduction.
pub struct ReduceSpec<'s> {
    pub m: usize,
    pub delta: f64,
    /// Balance constant; lists hold at most `c * n^delta` distinct sums.
    pub c: f64,
    pub reporter: Reporter<'s>,
    pub top: &'s TopSolver<'s>,
}

struct Reduction<'a, 's> {
    views: &'a [&'a dyn ArrayView],
    target: i64,
    spec: &'a ReduceSpec<'s>,
    split: GroupSplit,
    cascade: HashCascade,
    cap: usize,
    block: usize,
    ctx: &'a Ctx,
}

type SumList = Rc<MeteredVec<(i64, Tuple)>>;

impl Reduction<'_, '_> {
    fn group_views(&self, g: usize) -> &[&dyn ArrayView] {
        &self.views[self.split.groups()[g].clone()]
    }

    fn run(&self) -> Result<Option<Tuple>> {
        let g = self.split.len();
        let packed = self.cascade.packed_range() as usize;
        let target_digits = self.cascade.digits(self.target);
        let fixed_arity = self.split.d();
        let mut cache: Vec<Option<(u64, SumList)>> = vec![None; g - 1];
        let mut odo = Odometer::new(&vec![packed; g - 1]);
        while let Some(tv) = odo.advance() {
            let tv: Vec<u64> = tv.iter().map(|&x| x as u64).collect();
            self.ctx.check_deadline()?;
            let outermost = self.ctx.depth() == 1;
            if outermost {
                self.ctx.stats().target_vectors += 1;
            }
            let mut known = vec![0u64; self.cascade.depth()];
            for &t in &tv {
                for (k, d) in known.iter_mut().zip(self.cascade.unpack(t)) {
                    *k += d;
                }
            }
            let sets = self.cascade.completion_sets(&target_digits, &known, g);
            let mut fixed = DedupList::new(fixed_arity);
            for f in self.cascade.product(&sets) {
                let before = fixed.len();
                let report = group_report(
                    self.spec.reporter,
                    self.group_views(g - 1),
                    &self.cascade,
                    f,
                    self.block,
                    self.spec.delta,
                )?;
                for rec in report {
                    let (tuple, sum) = rec?;
                    fixed.insert(sum, tuple)?;
                }
                if fixed.len() - before > self.cap {
                    return contract(format!(
                        "fixed group holds {} distinct sums at packed value {f}, cap {}",
                        fixed.len() - before,
                        self.cap
                    ));
                }
            }
            if fixed.is_empty() {
                if outermost {
                    self.ctx.stats().skipped_vectors += 1;
                }
                continue;
            }
            let fixed_sums = fixed.sums()?;
            let mut chosen = Vec::with_capacity(g - 1);
            if let Some(t) = self.chunks(0, &tv, &mut cache, &mut chosen, &fixed, &fixed_sums)? {
                return Ok(Some(t));
            }
        }
        Ok(None)
    }

    /// Nested loops over the capped chunks of groups `gi..g-1`.
    fn chunks(
        &self,
        gi: usize,
        tv: &[u64],
        cache: &mut Vec<Option<(u64, SumList)>>,
        chosen: &mut Vec<SumList>,
        fixed: &DedupList,
        fixed_sums: &MeteredVec<i64>,
    ) -> Result<Option<Tuple>> {
        if gi == tv.len() {
            return self.top(chosen, fixed, fixed_sums);
        }
        if let Some((v, list)) = &cache[gi] {
            if *v == tv[gi] {
                if list.is_empty() {
                    return Ok(None);
                }
                chosen.push(Rc::clone(list));
                let r = self.chunks(gi + 1, tv, cache, chosen, fixed, fixed_sums);
                chosen.pop();
                return r;
            }
        }
        cache[gi] = None;
        let views = self.group_views(gi);
        let report = group_report(
            self.spec.reporter,
            views,
            &self.cascade,
            tv[gi],
            self.block,
            self.spec.delta,
        )?;
        let mut stream = WitnessStream::new(report, self.cap, views.len() + 1)?;
        let mut first = true;
        loop {
            let block = match stream.pull()? {
                Pull::Block(b) => b,
                Pull::Exhausted => {
                    if first {
                        cache[gi] = Some((tv[gi], Rc::new(MeteredVec::new(1))));
                    }
                    return Ok(None);
                }
            };
            self.ctx.stats().reported_tuples += block.len() as u64;
            let whole = first && block.len() < self.cap;
            first = false;
            let mut list = MeteredVec::new(views.len() + 1);
            for (t, s) in block {
                list.push((s, t))?;
            }
            list.sort_dedup_by_key(|e| e.0);
            let list = Rc::new(list);
            if whole {
                cache[gi] = Some((tv[gi], Rc::clone(&list)));
            }
            chosen.push(list);
            let r = self.chunks(gi + 1, tv, cache, chosen, fixed, fixed_sums)?;
            chosen.pop();
            if r.is_some() {
                return Ok(r);
            }
            if whole {
                return Ok(None);
            }
        }
    }

    fn top(
        &self,
        chosen: &[SumList],
        fixed: &DedupList,
        fixed_sums: &MeteredVec<i64>,
    ) -> Result<Option<Tuple>> {
        let mut sums: Vec<MeteredVec<i64>> = Vec::with_capacity(chosen.len());
        for list in chosen {
            let mut b = MeteredVec::new(1);
            for e in list.iter() {
                b.push(e.0)?;
            }
            sums.push(b);
        }
        let mut bviews: Vec<&dyn ArrayView> = sums.iter().map(|b| b as &dyn ArrayView).collect();
        bviews.push(fixed_sums);
        if self.ctx.depth() == 1 {
            self.ctx.stats().top_calls += 1;
        }
        let Some(bt) = (self.spec.top)(&bviews, self.target, self.ctx)? else {
            return Ok(None);
        };
        let mut full = Tuple::new();
        for (list, &i) in chosen.iter().zip(&bt) {
            full.extend_from_slice(&list[i as usize].1);
        }
        let fs = fixed_sums[bt[bt.len() - 1] as usize];
        full.extend_from_slice(fixed.get(fs).expect("fixed sum has a representative"));
        if tuple_sum(self.views, &full) != self.target {
            return contract("top-level solution failed re-verification");
        }
        Ok(Some(full))
    }
}

/// Runs the reduction over arbitrary views (lengths may differ).
pub fn self_reduce_views(
    views: &[&dyn ArrayView],
    target: i64,
    spec: &ReduceSpec,
    ctx: &Ctx,
) -> Result<Option<Tuple>> {
    let k = views.len();
    let split = GroupSplit::new(k, spec.m)?;
    if !(0.0..=spec.m as f64).contains(&spec.delta) {
        return param(format!("delta = {} outside [0, m]", spec.delta));
    }
    if views.iter().any(|v| v.is_empty()) {
        return Ok(None);
    }
    let n = views.iter().map(|v| v.len()).max().unwrap_or(1);
    let size = (n as f64).powf(spec.delta).max(1.0);
    let cap = (spec.c * size).ceil() as usize;
    let block = pow_cells(n, spec.delta);
    let fixed_views = &views[split.fixed()];
    let params = CascadeParams::new(size, spec.c);
    let mut failures = 0;
    let cascade = loop {
        let built = build_balanced_cascade(&GroupSums { views: fixed_views }, params, &mut *ctx.rng());
        match built {
            Ok(b) => {
                let mut st = ctx.stats();
                st.cascade_attempts += b.total_attempts() as u64;
                st.cascade_levels += b.cascade.depth() as u64;
                break b.cascade;
            }
            Err(KsumError::CascadeFailure { .. }) if failures + 1 < MAX_REBUILDS => {
                failures += 1;
                debug!("cascade build failed, resampling ({failures})");
            }
            Err(e) => return Err(e),
        }
    };
    trace!(
        "reduce k={k} m={} groups={} ranges={:?}",
        spec.m,
        split.len(),
        cascade.ranges()
    );
    let r = Reduction {
        views,
        target,
        spec,
        split,
        cascade,
        cap,
        block,
        ctx,
    };
    ctx.nested(|| r.run())
}

fn to_witness(t: Tuple) -> Witness {
    Witness::new(t.iter().map(|&i| i as usize).collect())
}

/// Metered reduction on an instance.
pub fn self_reduce(
    inst: &KSumInstance,
    spec: &ReduceSpec,
    seed: u64,
    limits: RunLimits,
) -> Result<SolverReport> {
    measured(seed, limits, |ctx| {
        Ok(self_reduce_views(&inst.views(), inst.target(), spec, ctx)?.map(to_witness))
    })
}

/// Group size of the linear-space recursion: the nearest integer to
/// `sqrt(k)`. No integer k has a square root ending in exactly .5, so there
/// are no ties to break.
pub fn recursion_m(k: usize) -> usize {
    ((k as f64).sqrt().round() as usize).clamp(1, k - 1)
}

/// Constant of the cascade and list caps: the number of arrays.
pub fn balance_constant(k: usize) -> f64 {
    k.max(2) as f64
}

/// Las Vegas kSUM in `O(n^delta)` cells for `delta` in `[0, 1]`.
pub fn lv_ksum_views(
    views: &[&dyn ArrayView],
    target: i64,
    delta: f64,
    ctx: &Ctx,
) -> Result<Option<Tuple>> {
    if !(0.0..=1.0).contains(&delta) {
        return param("lv_ksum needs delta in [0, 1]");
    }
    let k = views.len();
    if k < 2 {
        return param("lv_ksum needs at least two arrays");
    }
    if k == 2 {
        let n = views[0].len().max(views[1].len());
        return Ok(two_sum_find(views[0], views[1], target, pow_cells(n, delta))?
            .map(|(i, j)| smallvec::smallvec![i, j]));
    }
    let linear = |vs: &[&dyn ArrayView], t: i64, ctx: &Ctx| lv_ksum_views(vs, t, 1.0, ctx);
    let m = if delta >= 1.0 { recursion_m(k) } else { 1 };
    let spec = ReduceSpec {
        m,
        delta,
        c: balance_constant(k),
        reporter: Reporter::Kernel,
        top: &linear,
    };
    self_reduce_views(views, target, &spec, ctx)
}

pub fn lv_ksum(
    inst: &KSumInstance,
    delta: f64,
    seed: u64,
    limits: RunLimits,
) -> Result<SolverReport> {
    measured(seed, limits, |ctx| {
        Ok(lv_ksum_views(&inst.views(), inst.target(), delta, ctx)?.map(to_witness))
    })
}

/// Reduction with `m = ceil(delta)` for `1 < delta <= k/4`; the top
/// instance on `O(n^delta)` sums goes to the linear-space recursion.
pub fn large_space_views(
    views: &[&dyn ArrayView],
    target: i64,
    delta: f64,
    ctx: &Ctx,
) -> Result<Option<Tuple>> {
    let k = views.len();
    if !(delta > 1.0 && delta <= k as f64 / 4.0) {
        return param(format!("large-space solving needs 1 < delta <= k/4, got {delta}"));
    }
    let linear = |vs: &[&dyn ArrayView], t: i64, ctx: &Ctx| lv_ksum_views(vs, t, 1.0, ctx);
    let spec = ReduceSpec {
        m: delta.ceil() as usize,
        delta,
        c: balance_constant(k),
        reporter: Reporter::Kernel,
        top: &linear,
    };
    self_reduce_views(views, target, &spec, ctx)
}

pub fn large_space_solve(
    inst: &KSumInstance,
    delta: f64,
    seed: u64,
    limits: RunLimits,
) -> Result<SolverReport> {
    measured(seed, limits, |ctx| {
        Ok(large_space_views(&inst.views(), inst.target(), delta, ctx)?.map(to_witness))
    })
}

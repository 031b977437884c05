//! Las Vegas linear-space kSUM along triangular numbers, and its
//! generalization to `n^delta` space for integer `delta`.
//!
//! For `k = T_j + 1` the first `j` arrays form the left group. A cascade
//! balanced on the left sums (buckets of about `n` sums) is chosen once.
//! For every packed value `v` the left tuples hashing to `v` are stored in
//! a table keyed by their sum, and the remaining `T_{j-1} + 1` arrays are
//! searched recursively through wide-key views: the recursion looks for
//! tuples whose key sums hit the few integers almost linearity allows.
//! Each answer it streams back probes the table once per target.
//!
//! Below the root a node sees key sums, not original sums. Tuples are
//! therefore deduplicated by the pair (key sum, original sum): two tuples
//! agreeing on both are interchangeable for every ancestor.

use std::collections::{BTreeMap, VecDeque};
use std::rc::Rc;

use log::debug;

use crate::context::{measured, Ctx, RunLimits};
use crate::error::{contract, param, Result};
use crate::hashing::{build_balanced_cascade, CascadeParams, GroupSums, HashCascade, WideKey};
use crate::instance::{KSumInstance, SolverReport, Witness};
use crate::kernel::{sum_range, BlockTwoSum, CascadeReport, WideView};
use crate::selfreduce::MAX_REBUILDS;
use crate::view::{tuple_sum, ArrayView, Odometer, Tuple, TupleSumView};
use crate::workspace::{Cells, Pull, WitnessStream};

/// `T_j = 1 + 2 + ... + j`.
pub fn triangular(j: usize) -> usize {
    j * (j + 1) / 2
}

/// Shape of the recursion for a given k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriangularPlan {
    pub j: usize,
    /// Arrays handled by the recursion proper, `width * (T_j + 1)`.
    pub k_exact: usize,
    /// Arrays fixed one element at a time around the recursion.
    pub padding: usize,
}

impl TriangularPlan {
    /// Largest `j` with `width * (T_j + 1) <= k`.
    pub fn new(k: usize, width: usize) -> Result<Self> {
        if width == 0 || k < 2 * width {
            return param(format!("k = {k} is too small for groups of {width}"));
        }
        let mut j = 1;
        while width * (triangular(j + 1) + 1) <= k {
            j += 1;
        }
        let k_exact = width * (triangular(j) + 1);
        Ok(Self {
            j,
            k_exact,
            padding: k - k_exact,
        })
    }
}

struct Split<'a> {
    j: usize,
    cascade: Rc<HashCascade>,
    key: Rc<WideKey>,
    /// Smallest and largest key sum of the right group.
    child_range: (i64, i64),
    child: Box<WangNode<'a>>,
}

/// One level of the recursion over `T_j + 1` views.
struct WangNode<'a> {
    views: Vec<Rc<dyn ArrayView + 'a>>,
    /// The original arrays behind `views`.
    orig: Vec<Rc<dyn ArrayView + 'a>>,
    split: Option<Split<'a>>,
    table_cap: usize,
}

fn refs<'v, 'a>(views: &'v [Rc<dyn ArrayView + 'a>]) -> Vec<&'v dyn ArrayView> {
    views.iter().map(|v| &**v as &dyn ArrayView).collect()
}

impl<'a> WangNode<'a> {
    fn build(
        views: Vec<Rc<dyn ArrayView + 'a>>,
        orig: Vec<Rc<dyn ArrayView + 'a>>,
        j: usize,
        c: f64,
        ctx: &Ctx,
    ) -> Result<Self> {
        debug_assert_eq!(views.len(), triangular(j) + 1);
        let n = views.iter().map(|v| v.len()).max().unwrap_or(1);
        let table_cap = (c * n as f64).ceil() as usize;
        if j == 1 {
            return Ok(Self {
                views,
                orig,
                split: None,
                table_cap,
            });
        }
        let left = refs(&views[..j]);
        let params = CascadeParams::new(n as f64, c);
        let mut failures = 0;
        let cascade = loop {
            match build_balanced_cascade(&GroupSums { views: &left }, params, &mut *ctx.rng()) {
                Ok(b) => {
                    let mut st = ctx.stats();
                    st.cascade_attempts += b.total_attempts() as u64;
                    st.cascade_levels += b.cascade.depth() as u64;
                    break Rc::new(b.cascade);
                }
                Err(crate::KsumError::CascadeFailure { .. }) if failures + 1 < MAX_REBUILDS => {
                    failures += 1;
                }
                Err(e) => return Err(e),
            }
        };
        let r = views.len() - j;
        let key = Rc::new(WideKey::new(&cascade, r)?);
        let child_views: Vec<Rc<dyn ArrayView + 'a>> = views[j..]
            .iter()
            .map(|v| {
                Rc::new(WideView::new(Rc::clone(v), Rc::clone(&cascade), Rc::clone(&key)))
                    as Rc<dyn ArrayView + 'a>
            })
            .collect();
        let child_range = sum_range(&refs(&child_views)).unwrap_or((0, -1));
        let child = Box::new(Self::build(child_views, orig[j..].to_vec(), j - 1, c, ctx)?);
        Ok(Self {
            views,
            orig,
            split: Some(Split {
                j,
                cascade,
                key,
                child_range,
                child,
            }),
            table_cap,
        })
    }

    /// All tuples whose sum lies in `targets`, streamed.
    fn report<'p>(&'p self, targets: Vec<i64>, ctx: &'p Ctx, outermost: bool) -> Result<WangIter<'p, 'a>> {
        let base = match &self.split {
            Some(_) => None,
            None => {
                let block = self.views[1].len().max(1);
                Some(BlockTwoSum::new(
                    Rc::clone(&self.views[0]),
                    Rc::clone(&self.views[1]),
                    targets.clone(),
                    block,
                )?)
            }
        };
        let mut targets = targets;
        targets.sort_unstable();
        targets.dedup();
        Ok(WangIter {
            node: self,
            targets,
            ctx,
            outermost,
            base,
            v: 0,
            table: BTreeMap::new(),
            table_keys: 0,
            table_cells: Cells::empty(),
            stream: None,
            out: VecDeque::new(),
        })
    }
}

struct WangIter<'p, 'a> {
    node: &'p WangNode<'a>,
    targets: Vec<i64>,
    ctx: &'p Ctx,
    outermost: bool,
    base: Option<BlockTwoSum<'a>>,
    v: u64,
    /// (view sum, original sum) -> representative left tuple.
    table: BTreeMap<(i64, i64), Tuple>,
    /// Distinct view sums in `table`.
    table_keys: usize,
    table_cells: Cells,
    stream: Option<Box<WitnessStream<WangIter<'p, 'a>>>>,
    out: VecDeque<Tuple>,
}

impl<'p, 'a> WangIter<'p, 'a> {
    /// Fills the table for packed value `v` and opens the right-group
    /// stream. Leaves `stream` empty when `v` cannot host a solution.
    fn start(&mut self, split: &'p Split<'a>, v: u64) -> Result<()> {
        self.ctx.check_deadline()?;
        if self.outermost {
            self.ctx.stats().target_vectors += 1;
        }
        self.table.clear();
        self.table_keys = 0;
        self.table_cells.set(0)?;
        let left = refs(&self.node.views[..split.j]);
        let orig_left = refs(&self.node.orig[..split.j]);
        let block = left[split.j - 1].len().max(1);
        for rec in CascadeReport::new(left, &split.cascade, v, block)? {
            let (t, s) = rec?;
            let o = tuple_sum(&orig_left, &t);
            if self.table.contains_key(&(s, o)) {
                continue;
            }
            if self.table.range((s, i64::MIN)..=(s, i64::MAX)).next().is_none() {
                self.table_keys += 1;
            }
            self.table_cells.grow(split.j + 3)?;
            self.table.insert((s, o), t);
        }
        if self.table_keys > self.node.table_cap {
            return contract(format!(
                "lookup table holds {} sums, cap {}",
                self.table_keys, self.node.table_cap
            ));
        }
        let mut reps = 0u64;
        let mut run = (i64::MIN, 0u64);
        for &(s, _) in self.table.keys() {
            run = if s == run.0 { (s, run.1 + 1) } else { (s, 1) };
            reps = reps.max(run.1);
        }
        if reps > 4 {
            debug!("{reps} left tuples share one key sum");
        }
        {
            let mut st = self.ctx.stats();
            st.max_table_reps = st.max_table_reps.max(reps);
        }
        if self.table.is_empty() {
            if self.outermost {
                self.ctx.stats().skipped_vectors += 1;
            }
            return Ok(());
        }
        let r = self.node.views.len() - split.j;
        let v_digits = split.cascade.unpack(v);
        let mut child_targets = Vec::new();
        for &t in &self.targets {
            let sets = split.cascade.completion_sets(&split.cascade.digits(t), &v_digits, 2);
            let sets = split.cascade.digit_sum_sets(&sets, r);
            child_targets.extend(
                split
                    .key
                    .targets(&sets)
                    .into_iter()
                    .filter(|&x| x >= split.child_range.0 && x <= split.child_range.1),
            );
        }
        if child_targets.is_empty() {
            return Ok(());
        }
        let child = split.child.report(child_targets, self.ctx, false)?;
        let cap = self.node.table_cap.max(1);
        self.stream = Some(Box::new(WitnessStream::new(child, cap, r)?));
        Ok(())
    }

    /// Probes the table with a block of right-group answers.
    fn probe(&mut self, split: &Split<'a>, block: Vec<Tuple>) {
        let right = refs(&self.node.views[split.j..]);
        let orig_right = refs(&self.node.orig[split.j..]);
        let mut answers: Vec<((i64, i64), Tuple)> = block
            .into_iter()
            .map(|t| ((tuple_sum(&right, &t), tuple_sum(&orig_right, &t)), t))
            .collect();
        answers.sort_by_key(|a| a.0);
        answers.dedup_by_key(|a| a.0);
        let per_answer = self.targets.len() as u64;
        {
            let mut st = self.ctx.stats();
            st.table_probes += per_answer * answers.len() as u64;
            st.max_probes_per_answer = st.max_probes_per_answer.max(per_answer);
        }
        for ((s, _), rt) in answers {
            for &t in &self.targets {
                let key = t - s;
                for (_, lt) in self.table.range((key, i64::MIN)..=(key, i64::MAX)) {
                    let mut full = lt.clone();
                    full.extend_from_slice(&rt);
                    self.out.push_back(full);
                }
            }
        }
    }
}

impl Iterator for WangIter<'_, '_> {
    type Item = Result<Tuple>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(t) = self.out.pop_front() {
                return Some(Ok(t));
            }
            let Some(split) = &self.node.split else {
                let base = self.base.as_mut().expect("base node has a pair iterator");
                return base
                    .next()
                    .map(|r| r.map(|(i, j)| smallvec::smallvec![i, j]));
            };
            if let Some(stream) = &mut self.stream {
                match stream.pull() {
                    Err(e) => return Some(Err(e)),
                    Ok(Pull::Block(b)) => self.probe(split, b),
                    Ok(Pull::Exhausted) => self.stream = None,
                }
                continue;
            }
            if self.v >= split.cascade.packed_range() {
                return None;
            }
            let v = self.v;
            self.v += 1;
            if let Err(e) = self.start(split, v) {
                return Some(Err(e));
            }
        }
    }
}

/// Solves `T_j + 1` views exactly and then fixes padded views one element
/// at a time. Returns indices into `views`.
fn solve_with_padding<'a>(
    views: &[Rc<dyn ArrayView + 'a>],
    target: i64,
    j: usize,
    c: f64,
    ctx: &Ctx,
) -> Result<Option<Tuple>> {
    let exact = triangular(j) + 1;
    let root = WangNode::build(views[..exact].to_vec(), views[..exact].to_vec(), j, c, ctx)?;
    let padded = refs(&views[exact..]);
    let range = sum_range(&refs(&views[..exact])).unwrap_or((0, -1));
    let lens: Vec<usize> = padded.iter().map(|v| v.len()).collect();
    let mut odo = Odometer::new(&lens);
    while let Some(p) = odo.advance() {
        let t = target - tuple_sum(&padded, p);
        if t < range.0 || t > range.1 {
            continue;
        }
        let p: Tuple = p.into();
        if let Some(found) = root.report(vec![t], ctx, true)?.next() {
            let mut full = found?;
            full.extend_from_slice(&p);
            return Ok(Some(full));
        }
    }
    Ok(None)
}

fn to_witness(t: &[u32]) -> Witness {
    Witness::new(t.iter().map(|&i| i as usize).collect())
}

/// Las Vegas kSUM in linear space.
pub fn wang_lv_views(views: &[&dyn ArrayView], target: i64, ctx: &Ctx) -> Result<Option<Tuple>> {
    let k = views.len();
    let plan = TriangularPlan::new(k, 1)?;
    let rc: Vec<Rc<dyn ArrayView + '_>> = views
        .iter()
        .map(|&v| Rc::new(v) as Rc<dyn ArrayView + '_>)
        .collect();
    solve_with_padding(&rc, target, plan.j, k as f64, ctx)
}

pub fn wang_lv_linear(inst: &KSumInstance, seed: u64, limits: RunLimits) -> Result<SolverReport> {
    measured(seed, limits, |ctx| {
        Ok(wang_lv_views(&inst.views(), inst.target(), ctx)?.map(|t| to_witness(&t)))
    })
}

/// The same recursion over virtual arrays of all sums of `delta`
/// consecutive arrays, in `O(n^delta)` cells. Needs integer `delta >= 2`
/// and `k >= 2 * delta`; leftover arrays are fixed one element at a time.
pub fn large_space_integer_views(
    views: &[&dyn ArrayView],
    target: i64,
    delta: usize,
    ctx: &Ctx,
) -> Result<Option<Tuple>> {
    let k = views.len();
    if delta < 2 {
        return param("integer large-space solving needs delta >= 2");
    }
    let plan = TriangularPlan::new(k, delta)?;
    let n = views.iter().map(|v| v.len()).max().unwrap_or(1);
    if (n as u128).pow(delta as u32) >= u32::MAX as u128 {
        return param("n^delta must fit 32-bit indices");
    }
    let groups: Vec<TupleSumView<'_>> = views[..plan.k_exact]
        .chunks(delta)
        .map(|c| TupleSumView::new(c.to_vec()))
        .collect();
    let mut rc: Vec<Rc<dyn ArrayView + '_>> = groups
        .iter()
        .map(|g| Rc::new(g) as Rc<dyn ArrayView + '_>)
        .collect();
    rc.extend(views[plan.k_exact..].iter().map(|&v| Rc::new(v) as Rc<dyn ArrayView + '_>));
    let pad_j = plan.j;
    // Padded single arrays ride along as trailing views.
    let Some(found) = solve_with_padding(&rc, target, pad_j, k as f64, ctx)? else {
        return Ok(None);
    };
    let virtual_count = groups.len();
    let mut full = Tuple::new();
    for (g, &i) in groups.iter().zip(&found[..virtual_count]) {
        full.extend_from_slice(&g.decode(i as usize));
    }
    full.extend_from_slice(&found[virtual_count..]);
    Ok(Some(full))
}

pub fn large_space_integer(
    inst: &KSumInstance,
    delta: usize,
    seed: u64,
    limits: RunLimits,
) -> Result<SolverReport> {
    measured(seed, limits, |ctx| {
        Ok(large_space_integer_views(&inst.views(), inst.target(), delta, ctx)?
            .map(|t| to_witness(&t)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_random, plant_solution};
    use crate::reference::brute_force_solve;

    #[test]
    fn plans() {
        assert_eq!(TriangularPlan::new(4, 1).unwrap(), TriangularPlan { j: 2, k_exact: 4, padding: 0 });
        assert_eq!(TriangularPlan::new(7, 1).unwrap(), TriangularPlan { j: 3, k_exact: 7, padding: 0 });
        assert_eq!(TriangularPlan::new(5, 1).unwrap().padding, 1);
        assert_eq!(TriangularPlan::new(2, 1).unwrap().j, 1);
        assert_eq!(TriangularPlan::new(6, 2).unwrap(), TriangularPlan { j: 1, k_exact: 4, padding: 2 });
        assert_eq!(TriangularPlan::new(8, 2).unwrap(), TriangularPlan { j: 2, k_exact: 8, padding: 0 });
        assert!(TriangularPlan::new(3, 2).is_err());
    }

    #[test]
    fn wang_agrees_with_brute_force() {
        for seed in 0..60u64 {
            let k = 2 + (seed as usize % 6);
            let n = if k >= 6 { 5 } else { 8 };
            let inst = generate_random(n, k, 5, seed).unwrap();
            let expect = brute_force_solve(&inst).unwrap().found;
            let r = wang_lv_linear(&inst, seed, RunLimits::default()).unwrap();
            assert_eq!(r.found, expect, "seed {seed} k {k}");
            if let Some(w) = &r.witness {
                assert!(inst.is_witness(w));
            }
        }
    }

    #[test]
    fn deep_recursion_agrees_with_brute_force() {
        // k = 7 and 8 reach depth three, where tables hold key sums.
        for seed in 0..150u64 {
            let k = 7 + (seed as usize % 2);
            let inst = generate_random(4, k, 2, seed).unwrap();
            let expect = brute_force_solve(&inst).unwrap().found;
            let r = wang_lv_linear(&inst, seed, RunLimits::default()).unwrap();
            assert_eq!(r.found, expect, "seed {seed} k {k}");
        }
    }

    #[test]
    fn wang_planted_large_values() {
        for seed in 0..10u64 {
            let (inst, _) = plant_solution(&generate_random(24, 4, 1 << 40, seed).unwrap(), seed);
            let r = wang_lv_linear(&inst, seed, RunLimits::default()).unwrap();
            assert!(r.found);
            assert!(r.stats.max_probes_per_answer <= 6);
        }
    }

    #[test]
    fn large_space_integer_agrees() {
        for seed in 0..20u64 {
            for k in [4usize, 5, 6] {
                let inst = generate_random(5, k, 5, seed).unwrap();
                let expect = brute_force_solve(&inst).unwrap().found;
                let r = large_space_integer(&inst, 2, seed, RunLimits::default()).unwrap();
                assert_eq!(r.found, expect, "seed {seed} k {k}");
                if let Some(w) = &r.witness {
                    assert!(inst.is_witness(w));
                }
            }
        }
    }
}

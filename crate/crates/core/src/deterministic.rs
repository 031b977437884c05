//! Deterministic kSUM over sorted parts of implicit group-sum arrays.
//!
//! The arrays are split into `ceil(k/m)` groups. Each group's sums, sorted,
//! are cut into blocks of `S = ceil(n^delta)` consecutive values; a block
//! is produced on demand by one enumeration pass that keeps the `S`
//! smallest sums after a cursor. Windows (one block per group) whose
//! summed `[min, max]` ranges miss the target are skipped; the rest are
//! solved directly.

use std::collections::BinaryHeap;
use std::ops::ControlFlow;

use crate::context::{measured, Ctx, RunLimits};
use crate::error::{param, Result};
use crate::instance::{KSumInstance, SolverReport, Witness};
use crate::kernel::sum_range;
use crate::selfreduce::{recursion_m, GroupSplit};
use crate::view::{for_each_tuple, ArrayView, Tuple};
use crate::workspace::{pow_cells, Cells, MeteredVec};

/// Position in the sorted sums of a group: a sum and the tuple that
/// produced it. Ties in the sum are ordered by the tuple.
pub type Cursor = (i64, Tuple);

/// Hands out the sorted sums of a group in consecutive blocks.
pub struct SortedPartExtractor<'a> {
    views: Vec<&'a dyn ArrayView>,
    block: usize,
    cursor: Option<Cursor>,
    exhausted: bool,
}

impl<'a> SortedPartExtractor<'a> {
    pub fn new(views: Vec<&'a dyn ArrayView>, block: usize) -> Self {
        Self::resume(views, block, None)
    }

    /// Continues after `cursor` (from the start if `None`).
    pub fn resume(views: Vec<&'a dyn ArrayView>, block: usize, cursor: Option<Cursor>) -> Self {
        Self {
            views,
            block: block.max(1),
            cursor,
            exhausted: false,
        }
    }

    pub fn cursor(&self) -> Option<&Cursor> {
        self.cursor.as_ref()
    }

    /// The next `S` smallest entries after the cursor, ascending, or
    /// `None` once every sum has been delivered. Keeps a bounded max-heap
    /// over one pass of the group.
    pub fn next_sorted_part(&mut self) -> Result<Option<MeteredVec<Cursor>>> {
        if self.exhausted {
            return Ok(None);
        }
        let per = self.views.len() + 1;
        let _work = Cells::alloc(self.block * per)?;
        let mut heap: BinaryHeap<Cursor> = BinaryHeap::with_capacity(self.block + 1);
        let cursor = self.cursor.take();
        let _ = for_each_tuple(&self.views, |t, s| {
            if let Some((cs, ct)) = &cursor {
                if (s, t) <= (*cs, ct.as_slice()) {
                    return ControlFlow::Continue(());
                }
            }
            if heap.len() < self.block {
                heap.push((s, t.into()));
            } else if let Some(top) = heap.peek() {
                if (s, t) < (top.0, top.1.as_slice()) {
                    heap.pop();
                    heap.push((s, t.into()));
                }
            }
            ControlFlow::Continue(())
        });
        if heap.is_empty() {
            self.exhausted = true;
            return Ok(None);
        }
        let mut out = MeteredVec::new(per);
        for e in heap.into_sorted_vec() {
            out.push(e)?;
        }
        if out.len() < self.block {
            self.exhausted = true;
        }
        self.cursor = out.last().cloned();
        Ok(Some(out))
    }
}

/// `[min, max]` of a block and the cursor just past it.
#[derive(Debug, Clone)]
pub struct BlockSummary {
    pub min: i64,
    pub max: i64,
    pub end: Cursor,
}

/// One block per group with each block's sum range.
#[derive(Debug, Clone, Default)]
pub struct BlockWindow {
    pub blocks: Vec<usize>,
    pub ranges: Vec<(i64, i64)>,
}

impl BlockWindow {
    pub fn span(&self) -> (i64, i64) {
        self.ranges
            .iter()
            .fold((0, 0), |(lo, hi), &(a, b)| (lo + a, hi + b))
    }

    /// A window can hold a solution only if the target lies in its span.
    pub fn is_live(&self, t: i64) -> bool {
        let (lo, hi) = self.span();
        lo <= t && t <= hi
    }
}

struct Det<'a> {
    views: &'a [&'a dyn ArrayView],
    split: GroupSplit,
    target: i64,
    block: usize,
    /// Per group, smallest and largest sum over the groups after it.
    rest: Vec<(i64, i64)>,
    summaries: Option<MeteredVec<BlockSummary>>,
    ctx: &'a Ctx,
}

impl<'a> Det<'a> {
    fn group(&self, g: usize) -> Vec<&'a dyn ArrayView> {
        self.views[self.split.groups()[g].clone()].to_vec()
    }

    fn last(&self) -> usize {
        self.split.len() - 1
    }

    fn summarize(&self) -> Result<MeteredVec<BlockSummary>> {
        let per = 3 + self.split.d();
        let mut out = MeteredVec::new(per);
        let mut ex = SortedPartExtractor::new(self.group(self.last()), self.block);
        while let Some(b) = ex.next_sorted_part()? {
            out.push(BlockSummary {
                min: b[0].0,
                max: b[b.len() - 1].0,
                end: b[b.len() - 1].clone(),
            })?;
        }
        Ok(out)
    }

    fn windows(&self, gi: usize, window: &mut BlockWindow, chosen: &mut Vec<MeteredVec<Cursor>>) -> Result<Option<Tuple>> {
        if gi == self.last() {
            return self.last_group(window, chosen);
        }
        let (lo, hi) = window.span();
        let (rest_lo, rest_hi) = self.rest[gi];
        let mut ex = SortedPartExtractor::new(self.group(gi), self.block);
        let mut idx = 0;
        while let Some(b) = ex.next_sorted_part()? {
            let (bmin, bmax) = (b[0].0, b[b.len() - 1].0);
            // Blocks ascend, so once the minimum overshoots, later ones do too.
            if lo + bmin + rest_lo > self.target {
                break;
            }
            if hi + bmax + rest_hi >= self.target {
                window.blocks.push(idx);
                window.ranges.push((bmin, bmax));
                chosen.push(b);
                let r = self.windows(gi + 1, window, chosen)?;
                chosen.pop();
                window.blocks.pop();
                window.ranges.pop();
                if r.is_some() {
                    return Ok(r);
                }
            }
            idx += 1;
        }
        Ok(None)
    }

    fn last_group(&self, window: &mut BlockWindow, chosen: &[MeteredVec<Cursor>]) -> Result<Option<Tuple>> {
        self.ctx.check_deadline()?;
        let (lo, hi) = window.span();
        let (need_lo, need_hi) = (self.target - hi, self.target - lo);
        let last = self.group(self.last());
        match &self.summaries {
            Some(sums) => {
                let first = sums.partition_point(|s| s.max < need_lo);
                for b in first..sums.len() {
                    if sums[b].min > need_hi {
                        break;
                    }
                    let cursor = (b > 0).then(|| sums[b - 1].end.clone());
                    let part = SortedPartExtractor::resume(last.clone(), self.block, cursor)
                        .next_sorted_part()?
                        .expect("summarized block exists");
                    if let Some(t) = self.live(window, b, &part, chosen)? {
                        return Ok(Some(t));
                    }
                }
            }
            None => {
                let mut ex = SortedPartExtractor::new(last, self.block);
                let mut b = 0;
                while let Some(part) = ex.next_sorted_part()? {
                    let (min, max) = (part[0].0, part[part.len() - 1].0);
                    if min > need_hi {
                        break;
                    }
                    if max >= need_lo {
                        if let Some(t) = self.live(window, b, &part, chosen)? {
                            return Ok(Some(t));
                        }
                    }
                    b += 1;
                }
            }
        }
        Ok(None)
    }

    /// Solves one live window by enumerating the other groups' blocks and
    /// searching the sorted last block.
    fn live(
        &self,
        window: &mut BlockWindow,
        b: usize,
        part: &MeteredVec<Cursor>,
        chosen: &[MeteredVec<Cursor>],
    ) -> Result<Option<Tuple>> {
        window.blocks.push(b);
        window.ranges.push((part[0].0, part[part.len() - 1].0));
        let live = window.is_live(self.target);
        window.blocks.pop();
        window.ranges.pop();
        if !live {
            return Ok(None);
        }
        self.ctx.stats().live_windows += 1;
        let lens: Vec<usize> = chosen.iter().map(|c| c.len()).collect();
        let mut odo = crate::view::Odometer::new(&lens);
        while let Some(pos) = odo.advance() {
            let s: i64 = chosen.iter().zip(pos).map(|(c, &p)| c[p as usize].0).sum();
            let want = self.target - s;
            let at = part.partition_point(|e| e.0 < want);
            if at < part.len() && part[at].0 == want {
                let mut full = Tuple::new();
                for (c, &p) in chosen.iter().zip(pos) {
                    full.extend_from_slice(&c[p as usize].1);
                }
                full.extend_from_slice(&part[at].1);
                return Ok(Some(full));
            }
        }
        Ok(None)
    }
}

/// Deterministic kSUM in `O(n^delta)` cells, `delta` in `[0, 1]`.
pub fn det_ksum_views(views: &[&dyn ArrayView], target: i64, delta: f64, ctx: &Ctx) -> Result<Option<Tuple>> {
    if !(0.0..=1.0).contains(&delta) {
        return param("det_ksum needs delta in [0, 1]");
    }
    let k = views.len();
    let split = GroupSplit::new(k, recursion_m(k))?;
    let n = views.iter().map(|v| v.len()).max().unwrap_or(1);
    let block = pow_cells(n, delta);
    let g = split.len();
    let mut rest = vec![(0i64, 0i64); g];
    for gi in (0..g.saturating_sub(1)).rev() {
        let next = &views[split.groups()[gi + 1].clone()];
        let (a, b) = sum_range(next).unwrap_or((0, 0));
        let after = if gi + 1 < g - 1 { rest[gi + 1] } else { (0, 0) };
        rest[gi] = (a + after.0, b + after.1);
    }
    let mut det = Det {
        views,
        split,
        target,
        block,
        rest,
        summaries: None,
        ctx,
    };
    let last_sums: u128 = views[det.split.fixed()].iter().map(|v| v.len() as u128).product();
    let blocks = last_sums.div_ceil(block as u128);
    if blocks <= (k * block) as u128 {
        det.summaries = Some(det.summarize()?);
    }
    det.windows(0, &mut BlockWindow::default(), &mut Vec::new())
}

pub fn det_ksum(inst: &KSumInstance, delta: f64, limits: RunLimits) -> Result<SolverReport> {
    measured(0, limits, |ctx| {
        Ok(det_ksum_views(&inst.views(), inst.target(), delta, ctx)?
            .map(|t| Witness::new(t.iter().map(|&i| i as usize).collect())))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_random;
    use crate::reference::brute_force_solve;

    fn drain(ex: &mut SortedPartExtractor) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        while let Some(b) = ex.next_sorted_part().unwrap() {
            out.push(b.iter().map(|e| e.0).collect());
        }
        out
    }

    #[test]
    fn extractor_examples() {
        let a = vec![3i64, 1, 2];
        let mut ex = SortedPartExtractor::new(vec![&a], 2);
        assert_eq!(drain(&mut ex), vec![vec![1, 2], vec![3]]);
        let b = vec![0i64, 1];
        let c = vec![0i64, 10];
        let mut ex = SortedPartExtractor::new(vec![&b, &c], 2);
        assert_eq!(drain(&mut ex), vec![vec![0, 1], vec![10, 11]]);
    }

    #[test]
    fn extractor_handles_ties() {
        let a = vec![1i64, 1, 1];
        let b = vec![0i64, 0];
        let mut ex = SortedPartExtractor::new(vec![&a, &b], 4);
        assert_eq!(drain(&mut ex), vec![vec![1; 4], vec![1; 2]]);
    }

    #[test]
    fn det_agrees_with_brute_force() {
        for seed in 0..60u64 {
            let k = 2 + (seed as usize % 5);
            let n = if k >= 6 { 5 } else { 8 };
            let inst = generate_random(n, k, 6, seed).unwrap();
            let expect = brute_force_solve(&inst).unwrap().found;
            for delta in [0.0, 0.5, 1.0] {
                let r = det_ksum(&inst, delta, RunLimits::default()).unwrap();
                assert_eq!(r.found, expect, "seed {seed} k {k} delta {delta}");
                if let Some(w) = &r.witness {
                    assert!(inst.is_witness(w));
                }
            }
        }
    }

    #[test]
    fn dominated_target_has_no_live_windows() {
        let inst = KSumInstance::new(vec![vec![5, 6, 7]; 4], 3).unwrap();
        let r = det_ksum(&inst, 0.5, RunLimits::default()).unwrap();
        assert!(!r.found);
        assert_eq!(r.stats.live_windows, 0);
    }

    #[test]
    fn reruns_are_identical() {
        let inst = generate_random(10, 4, 100, 3).unwrap();
        let a = det_ksum(&inst, 0.5, RunLimits::default()).unwrap();
        let b = det_ksum(&inst, 0.5, RunLimits::default()).unwrap();
        assert!(a.same_outcome(&b));
        assert_eq!(a.stats, b.stats);
    }
}

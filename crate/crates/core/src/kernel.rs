//! Reporting kernels shared by the reductions.
//!
//! [`BlockTwoSum`] reports pairs hitting a set of targets while holding only
//! one sorted block of the second array. [`CascadeReport`] reports the
//! tuples of a group whose sum has a given packed cascade value, blocking
//! the group's last array the same way.

use std::rc::Rc;

use smallvec::SmallVec;

use crate::error::{param, Result};
use crate::hashing::{HashCascade, WideKey};
use crate::view::{min_max, tuple_sum, ArrayView, Odometer, Tuple};
use crate::workspace::{pow_cells, MeteredVec};

fn equal_range<K: Ord + Copy, V>(sorted: &[(K, V)], key: K) -> (usize, usize) {
    let lo = sorted.partition_point(|e| e.0 < key);
    let hi = lo + sorted[lo..].partition_point(|e| e.0 <= key);
    (lo, hi)
}

/// Pairs `(i, j)` with `a1[i] + a2[j]` in a sorted target set. Holds one
/// sorted block of `a2` (two cells per entry) and rescans `a1` per block.
pub struct BlockTwoSum<'a> {
    a1: Rc<dyn ArrayView + 'a>,
    a2: Rc<dyn ArrayView + 'a>,
    targets: Vec<i64>,
    block: usize,
    sorted: MeteredVec<(i64, u32)>,
    span: (i64, i64),
    next_block: usize,
    loaded: bool,
    i: usize,
    x: i64,
    tr: (usize, usize),
    run: (usize, usize),
}

impl<'a> BlockTwoSum<'a> {
    pub fn new(
        a1: Rc<dyn ArrayView + 'a>,
        a2: Rc<dyn ArrayView + 'a>,
        mut targets: Vec<i64>,
        block: usize,
    ) -> Result<Self> {
        if block == 0 {
            return param("block size must be positive");
        }
        targets.sort_unstable();
        targets.dedup();
        Ok(Self {
            a1,
            a2,
            targets,
            block,
            sorted: MeteredVec::new(2),
            span: (0, 0),
            next_block: 0,
            loaded: false,
            i: 0,
            x: 0,
            tr: (0, 0),
            run: (0, 0),
        })
    }

    fn start_row(&mut self) {
        self.x = self.a1.get(self.i);
        let lo = self.targets.partition_point(|&t| t < self.x + self.span.0);
        let hi = self.targets.partition_point(|&t| t <= self.x + self.span.1);
        self.tr = (lo, hi.max(lo));
    }

    fn load_block(&mut self) -> Result<bool> {
        self.sorted.clear();
        if self.next_block >= self.a2.len() {
            return Ok(false);
        }
        let end = (self.next_block + self.block).min(self.a2.len());
        for j in self.next_block..end {
            self.sorted.push((self.a2.get(j), j as u32))?;
        }
        self.sorted.as_mut_slice().sort_unstable();
        self.span = (self.sorted[0].0, self.sorted[self.sorted.len() - 1].0);
        self.next_block = end;
        self.i = 0;
        self.loaded = !self.a1.is_empty();
        if self.loaded {
            self.start_row();
        }
        Ok(true)
    }
}

impl Iterator for BlockTwoSum<'_> {
    type Item = Result<(u32, u32)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.run.0 < self.run.1 {
                let j = self.sorted[self.run.0].1;
                self.run.0 += 1;
                return Some(Ok((self.i as u32, j)));
            }
            if self.loaded {
                if self.tr.0 < self.tr.1 {
                    let want = self.targets[self.tr.0] - self.x;
                    self.tr.0 += 1;
                    self.run = equal_range(&self.sorted, want);
                    continue;
                }
                self.i += 1;
                if self.i < self.a1.len() {
                    self.start_row();
                } else {
                    self.loaded = false;
                }
                continue;
            }
            match self.load_block() {
                Ok(true) => {}
                Ok(false) => return None,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Reports every index pair with `a1[i] + a2[j] = t` using blocks of
/// `ceil(n^delta)` entries of `a2`. Returns the number of pairs.
pub fn two_sum_space_bounded(
    a1: &dyn ArrayView,
    a2: &dyn ArrayView,
    t: i64,
    delta: f64,
    sink: &mut dyn FnMut(u32, u32),
) -> Result<u64> {
    if !(0.0..=1.0).contains(&delta) {
        return param("two-sum delta must lie in [0, 1]");
    }
    let block = pow_cells(a2.len(), delta);
    let mut count = 0;
    for pair in BlockTwoSum::new(Rc::new(a1), Rc::new(a2), vec![t], block)? {
        let (i, j) = pair?;
        sink(i, j);
        count += 1;
    }
    Ok(count)
}

/// First pair summing to `t`, if any.
pub fn two_sum_find(
    a1: &dyn ArrayView,
    a2: &dyn ArrayView,
    t: i64,
    block: usize,
) -> Result<Option<(u32, u32)>> {
    BlockTwoSum::new(Rc::new(a1), Rc::new(a2), vec![t], block)?
        .next()
        .transpose()
}

/// Tuples of a group whose sum has packed cascade value `v`, with their
/// sums. The last array is processed in sorted blocks keyed by cascade
/// value; every other tuple probes the block at the few keys almost
/// linearity allows and each hit is checked exactly.
pub struct CascadeReport<'a> {
    views: Vec<&'a dyn ArrayView>,
    cascade: &'a HashCascade,
    v: u64,
    v_digits: SmallVec<[u64; 8]>,
    block: usize,
    sorted: MeteredVec<(u64, u32)>,
    next_block: usize,
    loaded: bool,
    outer: Odometer,
    tuple: Tuple,
    x: i64,
    probes: Vec<u64>,
    pi: usize,
    run: (usize, usize),
}

impl<'a> CascadeReport<'a> {
    pub fn new(
        views: Vec<&'a dyn ArrayView>,
        cascade: &'a HashCascade,
        v: u64,
        block: usize,
    ) -> Result<Self> {
        if views.is_empty() || block == 0 {
            return param("group reporting needs at least one array and a positive block");
        }
        let outer_lens: Vec<usize> = views[..views.len() - 1].iter().map(|v| v.len()).collect();
        Ok(Self {
            v_digits: cascade.unpack(v),
            outer: Odometer::new(&outer_lens),
            tuple: SmallVec::from_elem(0, views.len()),
            views,
            cascade,
            v,
            block,
            sorted: MeteredVec::new(2),
            next_block: 0,
            loaded: false,
            x: 0,
            probes: Vec::new(),
            pi: 0,
            run: (0, 0),
        })
    }

    fn arity(&self) -> usize {
        self.views.len()
    }

    fn last_view(&self) -> &'a dyn ArrayView {
        self.views[self.views.len() - 1]
    }

    fn next_outer(&mut self) -> bool {
        let r = self.arity() - 1;
        match self.outer.advance() {
            Some(t) => {
                self.tuple[..r].copy_from_slice(t);
                self.x = tuple_sum(&self.views[..r], &self.tuple[..r]);
                self.probes.clear();
                if r == 0 {
                    self.probes.push(self.v);
                } else {
                    self.cascade
                        .completion_probes(&self.v_digits, self.x, 2, &mut self.probes);
                }
                self.pi = 0;
                true
            }
            None => false,
        }
    }

    fn load_block(&mut self) -> Result<bool> {
        self.sorted.clear();
        let last = self.last_view();
        if self.next_block >= last.len() {
            return Ok(false);
        }
        let end = (self.next_block + self.block).min(last.len());
        for j in self.next_block..end {
            self.sorted.push((self.cascade.eval(last.get(j)), j as u32))?;
        }
        self.sorted.as_mut_slice().sort_unstable();
        self.next_block = end;
        let outer_lens: Vec<usize> = self.views[..self.arity() - 1]
            .iter()
            .map(|v| v.len())
            .collect();
        self.outer = Odometer::new(&outer_lens);
        self.loaded = self.next_outer();
        Ok(true)
    }
}

impl Iterator for CascadeReport<'_> {
    type Item = Result<(Tuple, i64)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            while self.run.0 < self.run.1 {
                let j = self.sorted[self.run.0].1;
                self.run.0 += 1;
                let s = self.x + self.last_view().get(j as usize);
                if self.cascade.eval(s) == self.v {
                    let r = self.arity() - 1;
                    self.tuple[r] = j;
                    return Some(Ok((self.tuple.clone(), s)));
                }
            }
            if self.loaded {
                if self.pi < self.probes.len() {
                    let key = self.probes[self.pi];
                    self.pi += 1;
                    self.run = equal_range(&self.sorted, key);
                    continue;
                }
                self.loaded = self.next_outer();
                continue;
            }
            match self.load_block() {
                Ok(true) => {}
                Ok(false) => return None,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// An array seen through a cascade: entry `i` is the wide key of the
/// underlying entry, so sums of up to `terms` entries keep the level digit
/// sums apart.
pub struct WideView<'a> {
    base: Rc<dyn ArrayView + 'a>,
    cascade: Rc<HashCascade>,
    key: Rc<WideKey>,
}

impl<'a> WideView<'a> {
    pub fn new(base: Rc<dyn ArrayView + 'a>, cascade: Rc<HashCascade>, key: Rc<WideKey>) -> Self {
        Self { base, cascade, key }
    }
}

impl ArrayView for WideView<'_> {
    fn len(&self) -> usize {
        self.base.len()
    }

    fn get(&self, i: usize) -> i64 {
        self.key.key(&self.cascade, self.base.get(i))
    }
}

/// Smallest and largest possible sum of one entry per view.
pub fn sum_range(views: &[&dyn ArrayView]) -> Option<(i64, i64)> {
    let mut lo = 0i64;
    let mut hi = 0i64;
    for v in views {
        let (a, b) = min_max(*v)?;
        lo += a;
        hi += b;
    }
    Some((lo, hi))
}

/// Classic quadratic 3SUM: sorted copies of all three arrays, one
/// two-pointer sweep per element of the first.
pub fn three_sum_sorted(views: &[&dyn ArrayView], target: i64) -> Result<Option<Tuple>> {
    if views.len() != 3 {
        return param("three_sum_sorted needs three arrays");
    }
    let mut sorted = Vec::with_capacity(3);
    for v in views {
        let mut s = MeteredVec::new(2);
        for i in 0..v.len() {
            s.push((v.get(i), i as u32))?;
        }
        s.as_mut_slice().sort_unstable();
        sorted.push(s);
    }
    let (a, b, c) = (sorted[0].as_slice(), sorted[1].as_slice(), sorted[2].as_slice());
    for &(x, i) in a {
        let rest = target as i128 - x as i128;
        let (mut lo, mut hi) = (0usize, c.len());
        while lo < b.len() && hi > 0 {
            let s = b[lo].0 as i128 + c[hi - 1].0 as i128;
            match s.cmp(&rest) {
                std::cmp::Ordering::Equal => {
                    return Ok(Some(smallvec::smallvec![i, b[lo].1, c[hi - 1].1]))
                }
                std::cmp::Ordering::Less => lo += 1,
                std::cmp::Ordering::Greater => hi -= 1,
            }
        }
    }
    Ok(None)
}

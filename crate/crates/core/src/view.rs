//! Read-only array views and tuple enumeration helpers.

use std::ops::ControlFlow;

use smallvec::SmallVec;

/// Index tuple, one position per array of a group.
pub type Tuple = SmallVec<[u32; 8]>;

/// A read-only integer array. Solvers recurse on derived views (hashed
/// values, virtual arrays of tuple sums) without materializing them.
pub trait ArrayView {
    fn len(&self) -> usize;
    fn get(&self, i: usize) -> i64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ArrayView for [i64] {
    fn len(&self) -> usize {
        <[i64]>::len(self)
    }
    fn get(&self, i: usize) -> i64 {
        self[i]
    }
}

impl ArrayView for Vec<i64> {
    fn len(&self) -> usize {
        Vec::len(self)
    }
    fn get(&self, i: usize) -> i64 {
        self[i]
    }
}

impl<T: ArrayView + ?Sized> ArrayView for &T {
    fn len(&self) -> usize {
        (**self).len()
    }
    fn get(&self, i: usize) -> i64 {
        (**self).get(i)
    }
}

impl<T: ArrayView + ?Sized> ArrayView for std::rc::Rc<T> {
    fn len(&self) -> usize {
        (**self).len()
    }
    fn get(&self, i: usize) -> i64 {
        (**self).get(i)
    }
}

/// Smallest and largest entry, by a linear scan.
pub fn min_max(view: &dyn ArrayView) -> Option<(i64, i64)> {
    (0..view.len()).map(|i| view.get(i)).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Sum of the entries a tuple selects.
pub fn tuple_sum(views: &[&dyn ArrayView], tuple: &[u32]) -> i64 {
    views
        .iter()
        .zip(tuple)
        .map(|(v, &i)| v.get(i as usize))
        .sum()
}

/// Number of tuples of a group, saturating.
pub fn tuple_count(views: &[&dyn ArrayView]) -> u128 {
    views.iter().map(|v| v.len() as u128).product()
}

/// Visits every tuple of the group in lexicographic order together with
/// its sum. Uses O(group size) cells of scratch.
pub fn for_each_tuple<F>(views: &[&dyn ArrayView], mut f: F) -> ControlFlow<()>
where
    F: FnMut(&[u32], i64) -> ControlFlow<()>,
{
    let r = views.len();
    if r == 0 {
        return f(&[], 0);
    }
    if views.iter().any(|v| v.is_empty()) {
        return ControlFlow::Continue(());
    }
    let mut idx: Tuple = SmallVec::from_elem(0, r);
    // prefix[i] = sum of entries 0..i
    let mut prefix: SmallVec<[i64; 9]> = SmallVec::from_elem(0, r + 1);
    for i in 0..r {
        prefix[i + 1] = prefix[i] + views[i].get(0);
    }
    loop {
        f(&idx, prefix[r])?;
        // advance the odometer, last position fastest
        let mut pos = r;
        loop {
            if pos == 0 {
                return ControlFlow::Continue(());
            }
            pos -= 1;
            idx[pos] += 1;
            if (idx[pos] as usize) < views[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
        for i in pos..r {
            prefix[i + 1] = prefix[i] + views[i].get(idx[i] as usize);
        }
    }
}

/// Resumable lexicographic odometer over a group's tuples.
#[derive(Debug, Clone)]
pub struct Odometer {
    lens: SmallVec<[usize; 8]>,
    cur: Tuple,
    started: bool,
    done: bool,
}

impl Odometer {
    pub fn new(lens: &[usize]) -> Self {
        Self {
            lens: lens.iter().copied().collect(),
            cur: SmallVec::from_elem(0, lens.len()),
            started: false,
            done: lens.contains(&0),
        }
    }

    /// Advances and returns the next tuple, or `None` when exhausted.
    pub fn advance(&mut self) -> Option<&[u32]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.cur);
        }
        let mut pos = self.lens.len();
        loop {
            if pos == 0 {
                self.done = true;
                return None;
            }
            pos -= 1;
            self.cur[pos] += 1;
            if (self.cur[pos] as usize) < self.lens[pos] {
                return Some(&self.cur);
            }
            self.cur[pos] = 0;
        }
    }
}

/// Virtual array whose entries are the sums of all tuples over a group of
/// arrays, in lexicographic order. Entry `i` decodes `i` in mixed radix.
pub struct TupleSumView<'a> {
    parts: Vec<&'a dyn ArrayView>,
    len: usize,
}

impl<'a> TupleSumView<'a> {
    pub fn new(parts: Vec<&'a dyn ArrayView>) -> Self {
        let len = parts.iter().map(|p| p.len()).product();
        Self { parts, len }
    }

    pub fn decode(&self, mut i: usize) -> Tuple {
        let mut out: Tuple = SmallVec::from_elem(0, self.parts.len());
        for (slot, p) in out.iter_mut().zip(&self.parts).rev() {
            *slot = (i % p.len()) as u32;
            i /= p.len();
        }
        out
    }
}

impl ArrayView for TupleSumView<'_> {
    fn len(&self) -> usize {
        self.len
    }

    fn get(&self, mut i: usize) -> i64 {
        let mut s = 0;
        for p in self.parts.iter().rev() {
            s += p.get(i % p.len());
            i /= p.len();
        }
        s
    }
}

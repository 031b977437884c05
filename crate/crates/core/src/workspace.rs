//! Workspace accounting.
//!
//! A cell is one stored machine integer or one tuple slot. Solvers never
//! charge their read-only input arrays; everything they allocate on top of
//! that goes through [`Cells`], which charges the innermost open
//! [`MeterScope`] on the current thread. Containers built on it
//! ([`MeteredVec`], [`CappedBuffer`]) keep their charge in sync with their
//! length, so `peak_cells` of a run is an auditable workspace figure.
//!
//! [`WitnessStream`] is the pull side of paused reporting: a resumable
//! enumeration handed out in blocks of at most `block_cap` records.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::error::{contract, KsumError, Result};

#[derive(Debug)]
struct MeterState {
    live: Cell<usize>,
    peak: Cell<usize>,
    cap: Option<usize>,
}

impl MeterState {
    fn charge(&self, cells: usize) -> Result<()> {
        let live = self.live.get() + cells;
        if let Some(cap) = self.cap {
            if live > cap {
                return Err(KsumError::Budget { cap, requested: live });
            }
        }
        self.live.set(live);
        if live > self.peak.get() {
            self.peak.set(live);
        }
        Ok(())
    }

    fn release(&self, cells: usize) {
        debug_assert!(self.live.get() >= cells, "meter released more than it holds");
        self.live.set(self.live.get().saturating_sub(cells));
    }
}

thread_local! {
    static METERS: RefCell<Vec<Rc<MeterState>>> = const { RefCell::new(Vec::new()) };
}

fn innermost() -> Option<Rc<MeterState>> {
    METERS.with(|m| m.borrow().last().cloned())
}

/// An open metering scope. Metered containers created while the scope is the
/// innermost one on this thread charge it. Dropping the scope closes it.
#[derive(Debug)]
pub struct MeterScope {
    state: Rc<MeterState>,
}

/// Opens a fresh meter with an optional cap on live cells.
pub fn meter_scope(cap: Option<usize>) -> MeterScope {
    let state = Rc::new(MeterState {
        live: Cell::new(0),
        peak: Cell::new(0),
        cap,
    });
    METERS.with(|m| m.borrow_mut().push(Rc::clone(&state)));
    MeterScope { state }
}

impl MeterScope {
    pub fn live_cells(&self) -> usize {
        self.state.live.get()
    }

    pub fn peak_cells(&self) -> usize {
        self.state.peak.get()
    }

    pub fn cap(&self) -> Option<usize> {
        self.state.cap
    }

    /// Snapshot of the meter as a plain value.
    pub fn snapshot(&self) -> SpaceMeter {
        SpaceMeter {
            live_cells: self.live_cells(),
            peak_cells: self.peak_cells(),
            cap: self.cap(),
        }
    }
}

impl Drop for MeterScope {
    fn drop(&mut self) {
        METERS.with(|m| {
            let mut stack = m.borrow_mut();
            if let Some(pos) = stack.iter().rposition(|s| Rc::ptr_eq(s, &self.state)) {
                stack.remove(pos);
            }
        });
    }
}

/// Point-in-time reading of a meter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceMeter {
    pub live_cells: usize,
    pub peak_cells: usize,
    pub cap: Option<usize>,
}

/// A charge against the meter that was innermost when it was created.
/// Released on drop.
#[derive(Debug)]
pub struct Cells {
    held: usize,
    meter: Option<Rc<MeterState>>,
}

impl Cells {
    pub fn alloc(cells: usize) -> Result<Self> {
        let meter = innermost();
        if let Some(m) = &meter {
            m.charge(cells)?;
        }
        Ok(Self { held: cells, meter })
    }

    pub fn empty() -> Self {
        Self {
            held: 0,
            meter: innermost(),
        }
    }

    pub fn held(&self) -> usize {
        self.held
    }

    pub fn grow(&mut self, cells: usize) -> Result<()> {
        if let Some(m) = &self.meter {
            m.charge(cells)?;
        }
        self.held += cells;
        Ok(())
    }

    pub fn shrink(&mut self, cells: usize) {
        let cells = cells.min(self.held);
        if let Some(m) = &self.meter {
            m.release(cells);
        }
        self.held -= cells;
    }

    /// Adjusts the charge to exactly `cells`.
    pub fn set(&mut self, cells: usize) -> Result<()> {
        if cells > self.held {
            self.grow(cells - self.held)
        } else {
            self.shrink(self.held - cells);
            Ok(())
        }
    }
}

impl Drop for Cells {
    fn drop(&mut self) {
        if let Some(m) = &self.meter {
            m.release(self.held);
        }
    }
}

/// A growable vector charging `cells_per_item` cells per element.
#[derive(Debug)]
pub struct MeteredVec<T> {
    items: Vec<T>,
    per_item: usize,
    cells: Cells,
}

impl<T> MeteredVec<T> {
    pub fn new(cells_per_item: usize) -> Self {
        Self {
            items: Vec::new(),
            per_item: cells_per_item,
            cells: Cells::empty(),
        }
    }

    pub fn push(&mut self, item: T) -> Result<()> {
        self.cells.grow(self.per_item)?;
        self.items.push(item);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.cells.shrink(self.cells.held());
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Keeps the first `len` items and releases the rest.
    pub fn truncate(&mut self, len: usize) {
        if len < self.items.len() {
            let freed = (self.items.len() - len) * self.per_item;
            self.items.truncate(len);
            self.cells.shrink(freed);
        }
    }

    /// Sorts by key and keeps the first item of each run of equal keys.
    pub fn sort_dedup_by_key<K: Ord, F: Fn(&T) -> K>(&mut self, key: F) {
        self.items.sort_by_key(|a| key(a));
        self.items.dedup_by(|a, b| key(a) == key(b));
        let held = self.items.len() * self.per_item;
        self.cells.shrink(self.cells.held() - held);
    }

    pub fn as_slice(&self) -> &[T] {
        &self.items
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.items.iter()
    }
}

impl<T> std::ops::Deref for MeteredVec<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.items
    }
}

/// A metered buffer with a hard capacity. Pushing past capacity is a
/// contract violation, never silent growth.
#[derive(Debug)]
pub struct CappedBuffer<T> {
    capacity: usize,
    inner: MeteredVec<T>,
}

impl<T> CappedBuffer<T> {
    pub fn new(capacity: usize, cells_per_record: usize) -> Self {
        Self {
            capacity,
            inner: MeteredVec::new(cells_per_record),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.inner.len() >= self.capacity
    }

    pub fn push(&mut self, record: T) -> Result<()> {
        if self.is_full() {
            return contract(format!(
                "capped buffer overflow (capacity {})",
                self.capacity
            ));
        }
        self.inner.push(record)
    }

    pub fn clear(&mut self) {
        self.inner.clear();
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        self.inner.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        self.inner.as_mut_slice()
    }
}

impl crate::view::ArrayView for MeteredVec<i64> {
    fn len(&self) -> usize {
        self.items.len()
    }
    fn get(&self, i: usize) -> i64 {
        self.items[i]
    }
}

/// Outcome of one [`WitnessStream::pull`].
#[derive(Debug, PartialEq, Eq)]
pub enum Pull<T> {
    Block(Vec<T>),
    Exhausted,
}

/// Pull-based resumable enumeration. The wrapped iterator is the paused
/// computation; each pull resumes it until `block_cap` records are ready.
pub struct WitnessStream<I> {
    source: I,
    block_cap: usize,
    block_cells: Cells,
    cells_per_record: usize,
    exhausted: bool,
    delivered: u64,
    pulls: u64,
}

impl<I, T> WitnessStream<I>
where
    I: Iterator<Item = Result<T>>,
{
    pub fn new(source: I, block_cap: usize, cells_per_record: usize) -> Result<Self> {
        if block_cap == 0 {
            return Err(KsumError::Parameter("block_cap must be positive".into()));
        }
        Ok(Self {
            source,
            block_cap,
            block_cells: Cells::empty(),
            cells_per_record,
            exhausted: false,
            delivered: 0,
            pulls: 0,
        })
    }

    pub fn block_cap(&self) -> usize {
        self.block_cap
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    /// Resumes the enumeration and returns up to `block_cap` records, or
    /// `Exhausted` once nothing is left. Pulling again after `Exhausted` is
    /// a contract error.
    pub fn pull(&mut self) -> Result<Pull<T>> {
        if self.exhausted {
            return contract("pull after the stream reported exhaustion");
        }
        self.pulls += 1;
        // The previous block belongs to the caller now; the charge restarts.
        self.block_cells.set(0)?;
        let mut block = Vec::new();
        while block.len() < self.block_cap {
            match self.source.next() {
                Some(rec) => {
                    self.block_cells.grow(self.cells_per_record)?;
                    block.push(rec?);
                }
                None => break,
            }
        }
        if block.is_empty() {
            self.exhausted = true;
            self.block_cells.set(0)?;
            return Ok(Pull::Exhausted);
        }
        self.delivered += block.len() as u64;
        Ok(Pull::Block(block))
    }
}

/// `ceil(n^delta)`, at least 1.
pub fn pow_cells(n: usize, delta: f64) -> usize {
    let v = (n.max(1) as f64).powf(delta);
    // Guard against 4096^0.5 = 63.99999.. style rounding.
    let r = v.round();
    let v = if (v - r).abs() < 1e-9 { r } else { v.ceil() };
    (v as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_trace_returns_to_zero() {
        let scope = meter_scope(None);
        {
            let _a = Cells::alloc(10).unwrap();
            assert_eq!(scope.live_cells(), 10);
        }
        assert_eq!(scope.live_cells(), 0);
        assert_eq!(scope.peak_cells(), 10);
    }

    #[test]
    fn cap_violation_is_an_error() {
        let _scope = meter_scope(Some(5));
        let err = Cells::alloc(6).unwrap_err();
        assert_eq!(err, KsumError::Budget { cap: 5, requested: 6 });
        let mut c = Cells::alloc(5).unwrap();
        assert!(c.grow(1).is_err());
        assert_eq!(c.held(), 5);
    }

    #[test]
    fn nested_scopes_charge_innermost() {
        let outer = meter_scope(None);
        let _x = Cells::alloc(3).unwrap();
        {
            let inner = meter_scope(None);
            let _y = Cells::alloc(7).unwrap();
            assert_eq!(inner.peak_cells(), 7);
        }
        assert_eq!(outer.peak_cells(), 3);
        let _z = Cells::alloc(1).unwrap();
        assert_eq!(outer.live_cells(), 4);
    }

    #[test]
    fn capped_buffer_rejects_overflow() {
        let scope = meter_scope(None);
        let mut b = CappedBuffer::new(2, 3);
        b.push(1).unwrap();
        b.push(2).unwrap();
        assert!(matches!(b.push(3), Err(KsumError::Contract(_))));
        assert_eq!(scope.live_cells(), 6);
        b.clear();
        assert_eq!(scope.live_cells(), 0);
    }

    fn stream_of(n: usize, cap: usize) -> WitnessStream<impl Iterator<Item = Result<usize>>> {
        WitnessStream::new((0..n).map(Ok), cap, 1).unwrap()
    }

    #[test]
    fn empty_stream_is_exhausted_on_first_pull() {
        let mut s = stream_of(0, 4);
        assert_eq!(s.pull().unwrap(), Pull::Exhausted);
        assert!(s.pull().is_err());
    }

    #[test]
    fn two_full_blocks_then_exhausted() {
        let mut s = stream_of(8, 4);
        assert_eq!(s.pull().unwrap(), Pull::Block(vec![0, 1, 2, 3]));
        assert_eq!(s.pull().unwrap(), Pull::Block(vec![4, 5, 6, 7]));
        assert_eq!(s.pull().unwrap(), Pull::Exhausted);
        assert_eq!(s.delivered(), 8);
    }

    #[test]
    fn stream_block_is_metered() {
        let scope = meter_scope(None);
        let mut s = stream_of(10, 3);
        while let Pull::Block(_) = s.pull().unwrap() {}
        assert_eq!(scope.peak_cells(), 3);
        assert_eq!(scope.live_cells(), 0);
    }

    #[test]
    fn pow_cells_rounds_up() {
        assert_eq!(pow_cells(4096, 0.5), 64);
        assert_eq!(pow_cells(10, 0.5), 4);
        assert_eq!(pow_cells(7, 0.0), 1);
        assert_eq!(pow_cells(512, 2.0 / 3.0), 64);
    }
}

//! Reference solvers: exhaustive enumeration and meet-in-the-middle.

use std::ops::ControlFlow;

use crate::context::{measured, RunLimits};
use crate::error::{KsumError, Result};
use crate::instance::{KSumInstance, SolverReport, Witness};
use crate::view::{for_each_tuple, ArrayView, Odometer};
use crate::workspace::{MeteredVec, WitnessStream};

/// Largest `n^k` the exhaustive solvers accept.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000_000;
/// Largest sorted list meet-in-the-middle builds.
pub const MITM_LIMIT: u128 = 1 << 26;

fn guard(inst: &KSumInstance) -> Result<()> {
    let work = (inst.n() as u128).pow(inst.k() as u32);
    if work > BRUTE_FORCE_LIMIT {
        return Err(KsumError::Refused(format!(
            "n^k = {work} exceeds the brute-force limit {BRUTE_FORCE_LIMIT}"
        )));
    }
    Ok(())
}

fn views(inst: &KSumInstance) -> Vec<&dyn ArrayView> {
    inst.arrays().iter().map(|a| a as &dyn ArrayView).collect()
}

/// Tries every k-tuple in lexicographic order.
pub fn brute_force_solve(inst: &KSumInstance) -> Result<SolverReport> {
    guard(inst)?;
    measured(0, RunLimits::default(), |_| {
        let vs = views(inst);
        let mut hit = None;
        let _ = for_each_tuple(&vs, |t, s| {
            if s == inst.target() {
                hit = Some(Witness::new(t.iter().map(|&i| i as usize).collect()));
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        });
        Ok(hit)
    })
}

/// Lexicographic enumeration of all witnesses.
pub struct BruteForceEnum<'a> {
    inst: &'a KSumInstance,
    odo: Odometer,
}

impl Iterator for BruteForceEnum<'_> {
    type Item = Result<Witness>;

    fn next(&mut self) -> Option<Self::Item> {
        while let Some(t) = self.odo.advance() {
            let s: i64 = t
                .iter()
                .zip(self.inst.arrays())
                .map(|(&i, a)| a[i as usize])
                .sum();
            if s == self.inst.target() {
                return Some(Ok(Witness::new(t.iter().map(|&i| i as usize).collect())));
            }
        }
        None
    }
}

pub fn brute_force_enum(inst: &KSumInstance) -> Result<BruteForceEnum<'_>> {
    guard(inst)?;
    Ok(BruteForceEnum {
        inst,
        odo: Odometer::new(&vec![inst.n(); inst.k()]),
    })
}

/// Emits every witness once, in lexicographic order, and returns the count.
pub fn brute_force_report(inst: &KSumInstance, sink: &mut dyn FnMut(Witness)) -> Result<u64> {
    let mut count = 0;
    for w in brute_force_enum(inst)? {
        sink(w?);
        count += 1;
    }
    Ok(count)
}

/// All witnesses as a paused stream delivering blocks of `block_cap`.
pub fn brute_force_stream(
    inst: &KSumInstance,
    block_cap: usize,
) -> Result<WitnessStream<BruteForceEnum<'_>>> {
    WitnessStream::new(brute_force_enum(inst)?, block_cap, inst.k())
}

/// Sorts the sums of the first `ceil(k/2)` arrays and looks up the
/// complement of every tuple of the rest.
pub fn meet_in_middle(inst: &KSumInstance, limits: RunLimits) -> Result<SolverReport> {
    let k = inst.k();
    let h = k.div_ceil(2);
    let size = (inst.n() as u128).pow(h as u32);
    if size > MITM_LIMIT {
        return Err(KsumError::Budget {
            cap: MITM_LIMIT as usize,
            requested: size as usize,
        });
    }
    measured(0, limits, |_| {
        let vs = views(inst);
        let (left, right) = vs.split_at(h);
        // (sum, lexicographic rank of the left tuple)
        let mut list: MeteredVec<(i64, u64)> = MeteredVec::new(2);
        let mut rank = 0u64;
        let mut err = None;
        let _ = for_each_tuple(left, |_, s| {
            if let Err(e) = list.push((s, rank)) {
                err = Some(e);
                return ControlFlow::Break(());
            }
            rank += 1;
            ControlFlow::Continue(())
        });
        if let Some(e) = err {
            return Err(e);
        }
        list.as_mut_slice().sort_unstable();
        let mut hit = None;
        let _ = for_each_tuple(right, |t, s| {
            let want = inst.target() - s;
            let pos = list.partition_point(|&(x, _)| x < want);
            if pos < list.len() && list[pos].0 == want {
                let mut idx = decode_rank(list[pos].1, inst.n(), h);
                idx.extend(t.iter().map(|&i| i as usize));
                hit = Some(Witness::new(idx));
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        });
        Ok(hit)
    })
}

fn decode_rank(mut rank: u64, n: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = (rank % n as u64) as usize;
        rank /= n as u64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_random, plant_solution};
    use crate::workspace::Pull;

    fn inst(arrays: Vec<Vec<i64>>, t: i64) -> KSumInstance {
        KSumInstance::new(arrays, t).unwrap()
    }

    #[test]
    fn brute_force_examples() {
        let i = inst(vec![vec![1, 2], vec![3, 4], vec![5, 6]], 9);
        let r = brute_force_solve(&i).unwrap();
        assert!(r.found);
        assert_eq!(r.witness.unwrap().indices, vec![0, 0, 0]);
        assert!(!brute_force_solve(&i.with_target(0).unwrap()).unwrap().found);
        assert!(brute_force_solve(&inst(vec![vec![0], vec![0]], 0)).unwrap().found);
    }

    #[test]
    fn brute_force_refuses_large_inputs() {
        let i = generate_random(1000, 4, 10, 1).unwrap();
        assert!(matches!(brute_force_solve(&i), Err(KsumError::Refused(_))));
    }

    #[test]
    fn report_counts_and_orders() {
        let i = inst(vec![vec![1, 1], vec![2, 2]], 3);
        let mut seen = Vec::new();
        assert_eq!(brute_force_report(&i, &mut |w| seen.push(w)).unwrap(), 4);
        let mut sorted = seen.clone();
        sorted.sort();
        assert_eq!(seen, sorted);
        let none = inst(vec![vec![1, 2], vec![3, 4], vec![5, 6]], 0);
        assert_eq!(brute_force_report(&none, &mut |_| {}).unwrap(), 0);
    }

    #[test]
    fn stream_union_equals_report() {
        let base = generate_random(5, 3, 3, 4).unwrap();
        let (i, _) = plant_solution(&base, 4);
        let mut expected = Vec::new();
        brute_force_report(&i, &mut |w| expected.push(w)).unwrap();
        let mut s = brute_force_stream(&i, 3).unwrap();
        let mut got = Vec::new();
        while let Pull::Block(b) = s.pull().unwrap() {
            assert!(b.len() <= 3);
            got.extend(b);
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn mitm_agrees_with_brute_force() {
        for seed in 0..200 {
            let k = 2 + (seed as usize % 5);
            let i = generate_random(6, k, 4, seed).unwrap();
            let b = brute_force_solve(&i).unwrap();
            let m = meet_in_middle(&i, RunLimits::default()).unwrap();
            assert_eq!(b.found, m.found, "seed {seed}");
            if let Some(w) = m.witness {
                assert!(i.is_witness(&w));
            }
        }
    }

    #[test]
    fn mitm_peak_cells_track_half_power() {
        for n in [8usize, 16, 32] {
            let i = generate_random(n, 4, 1 << 30, 5).unwrap();
            let r = meet_in_middle(&i, RunLimits::default()).unwrap();
            let expect = (n * n) as f64;
            let ratio = r.peak_cells as f64 / expect;
            assert!((0.25..=4.0).contains(&ratio), "n={n} ratio={ratio}");
        }
    }

    #[test]
    fn mitm_respects_cap() {
        let i = generate_random(16, 4, 1 << 30, 5).unwrap();
        let limits = RunLimits {
            cells: Some(100),
            deadline: None,
        };
        assert!(matches!(
            meet_in_middle(&i, limits),
            Err(KsumError::Budget { .. })
        ));
    }
}

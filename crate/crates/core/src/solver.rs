//! Solver registry: names, parameter compatibility, and dispatch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::context::{measured, RunLimits};
use crate::deterministic::det_ksum;
use crate::error::{param, KsumError, Result};
use crate::instance::{KSumInstance, SolverReport, Witness};
use crate::kernel::two_sum_space_bounded;
use crate::reference::{brute_force_solve, meet_in_middle};
use crate::selfreduce::{large_space_solve, lv_ksum};
use crate::special::{six_sum_2x2x2, six_sum_3x3, small_k_oracle, three_sum_oracle, TwoSumOracle};
use crate::wanglv::{large_space_integer, wang_lv_linear};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SolverKind {
    BruteForce,
    MeetInMiddle,
    TwoSum,
    LvKsum,
    LargeSpace,
    WangLv,
    LargeSpaceInt,
    DetKsum,
    SixSum3x3,
    SixSum2x2x2,
    ThreeSumOracle,
    SmallKOracle,
}

impl SolverKind {
    pub const ALL: [SolverKind; 12] = [
        SolverKind::BruteForce,
        SolverKind::MeetInMiddle,
        SolverKind::TwoSum,
        SolverKind::LvKsum,
        SolverKind::LargeSpace,
        SolverKind::WangLv,
        SolverKind::LargeSpaceInt,
        SolverKind::DetKsum,
        SolverKind::SixSum3x3,
        SolverKind::SixSum2x2x2,
        SolverKind::ThreeSumOracle,
        SolverKind::SmallKOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::BruteForce => "brute",
            SolverKind::MeetInMiddle => "mitm",
            SolverKind::TwoSum => "two-sum",
            SolverKind::LvKsum => "lv-ksum",
            SolverKind::LargeSpace => "large-space",
            SolverKind::WangLv => "wang-lv",
            SolverKind::LargeSpaceInt => "large-space-int",
            SolverKind::DetKsum => "det-ksum",
            SolverKind::SixSum3x3 => "six-3x3",
            SolverKind::SixSum2x2x2 => "six-2x2x2",
            SolverKind::ThreeSumOracle => "three-sum-oracle",
            SolverKind::SmallKOracle => "small-k-oracle",
        }
    }

    /// Whether runs depend on the seed (beyond reporting it).
    pub fn is_randomized(self) -> bool {
        !matches!(
            self,
            SolverKind::BruteForce | SolverKind::MeetInMiddle | SolverKind::TwoSum | SolverKind::DetKsum
        )
    }

    /// Rejects `(k, delta)` combinations the solver does not handle.
    pub fn check(self, k: usize, delta: f64) -> Result<()> {
        let unit = (0.0..=1.0).contains(&delta);
        let ok = match self {
            SolverKind::BruteForce | SolverKind::MeetInMiddle => true,
            SolverKind::TwoSum => k == 2 && unit,
            SolverKind::LvKsum | SolverKind::DetKsum => unit,
            SolverKind::LargeSpace => delta > 1.0 && delta <= k as f64 / 4.0,
            SolverKind::WangLv => true,
            SolverKind::LargeSpaceInt => {
                delta.fract() == 0.0 && delta >= 2.0 && k as f64 >= 2.0 * delta
            }
            SolverKind::SixSum3x3 => k == 6 && (0.5..=3.0).contains(&delta),
            SolverKind::SixSum2x2x2 => k == 6 && (0.0..=2.0).contains(&delta),
            SolverKind::ThreeSumOracle => k == 3 && unit,
            SolverKind::SmallKOracle => [4, 6, 8].contains(&k) && unit,
        };
        if ok {
            Ok(())
        } else {
            param(format!("{} does not support k = {k}, delta = {delta}", self.name()))
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = KsumError;
    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| KsumError::Parameter(format!("unknown solver {s:?}")))
    }
}

impl From<SolverKind> for String {
    fn from(k: SolverKind) -> String {
        k.name().to_string()
    }
}

impl TryFrom<String> for SolverKind {
    type Error = KsumError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Runs one solver on one instance.
pub fn run_solver(
    kind: SolverKind,
    inst: &KSumInstance,
    delta: f64,
    seed: u64,
    limits: RunLimits,
    oracle: &dyn TwoSumOracle,
) -> Result<SolverReport> {
    kind.check(inst.k(), delta)?;
    let mut report = match kind {
        SolverKind::BruteForce => brute_force_solve(inst)?,
        SolverKind::MeetInMiddle => meet_in_middle(inst, limits)?,
        SolverKind::TwoSum => measured(seed, limits, |_| {
            let mut hit = None;
            let a = &inst.arrays();
            two_sum_space_bounded(&a[0], &a[1], inst.target(), delta, &mut |i, j| {
                hit.get_or_insert(Witness::new(vec![i as usize, j as usize]));
            })?;
            Ok(hit)
        })?,
        SolverKind::LvKsum => lv_ksum(inst, delta, seed, limits)?,
        SolverKind::LargeSpace => large_space_solve(inst, delta, seed, limits)?,
        SolverKind::WangLv => wang_lv_linear(inst, seed, limits)?,
        SolverKind::LargeSpaceInt => large_space_integer(inst, delta as usize, seed, limits)?,
        SolverKind::DetKsum => det_ksum(inst, delta, limits)?,
        SolverKind::SixSum3x3 => six_sum_3x3(inst, delta, seed, limits)?,
        SolverKind::SixSum2x2x2 => six_sum_2x2x2(inst, delta, seed, limits)?,
        SolverKind::ThreeSumOracle => three_sum_oracle(inst, delta, oracle, seed, limits)?,
        SolverKind::SmallKOracle => small_k_oracle(inst, delta, oracle, seed, limits)?,
    };
    report.seed = seed;
    if let Some(w) = &report.witness {
        if !inst.is_witness(w) {
            return Err(KsumError::Contract(format!("{kind} returned an invalid witness")));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("nope".parse::<SolverKind>().is_err());
    }

    #[test]
    fn compatibility() {
        assert!(SolverKind::LargeSpaceInt.check(6, 2.0).is_ok());
        assert!(SolverKind::LargeSpaceInt.check(6, 1.5).is_err());
        assert!(SolverKind::TwoSum.check(3, 0.5).is_err());
        assert!(SolverKind::LargeSpace.check(6, 1.5).is_ok());
        assert!(SolverKind::LargeSpace.check(4, 1.5).is_err());
    }
}

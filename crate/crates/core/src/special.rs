//! 6SUM specializations and small-k solvers driven by a pluggable 2SUM
//! reporting oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use rand::Rng;

use crate::context::{measured, Ctx, RunLimits};
use crate::error::{contract, param, KsumError, Result};
use crate::instance::{rng_for, KSumInstance, SolverReport, Witness};
use crate::kernel::{three_sum_sorted, two_sum_find, BlockTwoSum};
use crate::selfreduce::{lv_ksum_views, self_reduce_views, ReduceSpec, Reporter};
use crate::view::{ArrayView, Tuple};
use crate::workspace::pow_cells;

/// Pair stream returned by an oracle.
pub type PairReport<'a> = Box<dyn Iterator<Item = Result<(u32, u32)>> + 'a>;

/// A 2SUM reporting algorithm using `O(n^delta)` cells and
/// `O(n^f(delta))` time.
pub trait TwoSumOracle {
    fn name(&self) -> &str;

    /// The time exponent `f(delta)`.
    fn cost_exponent(&self, delta: f64) -> f64;

    /// Every pair `(i, j)` with `a1[i] + a2[j]` in `targets`, each once.
    fn report<'a>(
        &'a self,
        a1: Rc<dyn ArrayView + 'a>,
        a2: Rc<dyn ArrayView + 'a>,
        targets: Vec<i64>,
        delta: f64,
    ) -> Result<PairReport<'a>>;
}

/// Sorted blocks of `n^delta` entries of the second array, full scan of
/// the first per block: `f(delta) = 2 - delta`.
pub struct BlockOracle;

impl TwoSumOracle for BlockOracle {
    fn name(&self) -> &str {
        "block"
    }

    fn cost_exponent(&self, delta: f64) -> f64 {
        2.0 - delta
    }

    fn report<'a>(
        &'a self,
        a1: Rc<dyn ArrayView + 'a>,
        a2: Rc<dyn ArrayView + 'a>,
        targets: Vec<i64>,
        delta: f64,
    ) -> Result<PairReport<'a>> {
        let block = pow_cells(a2.len(), delta.clamp(0.0, 1.0));
        Ok(Box::new(BlockTwoSum::new(a1, a2, targets, block)?))
    }
}

/// Registration point for a list-disjointness based oracle. Such oracles
/// need random read-only access to a random function, which is a model
/// assumption rather than something this crate can supply, so every call
/// is refused.
pub struct ListDisjointnessStub;

impl TwoSumOracle for ListDisjointnessStub {
    fn name(&self) -> &str {
        "list-disjointness"
    }

    fn cost_exponent(&self, delta: f64) -> f64 {
        2.0 - delta
    }

    fn report<'a>(
        &'a self,
        _a1: Rc<dyn ArrayView + 'a>,
        _a2: Rc<dyn ArrayView + 'a>,
        _targets: Vec<i64>,
        _delta: f64,
    ) -> Result<PairReport<'a>> {
        Err(KsumError::Unsupported(
            "list-disjointness oracle is an interface stub".into(),
        ))
    }
}

/// Checks an oracle against exhaustive pair enumeration on 50 random
/// inputs.
pub fn validate_oracle(oracle: &dyn TwoSumOracle, seed: u64) -> Result<()> {
    let mut rng = rng_for(seed, 0x6f72_6163);
    for case in 0..50 {
        let n1 = rng.gen_range(1..24);
        let n2 = rng.gen_range(1..24);
        let a1: Vec<i64> = (0..n1).map(|_| rng.gen_range(-12..12)).collect();
        let a2: Vec<i64> = (0..n2).map(|_| rng.gen_range(-12..12)).collect();
        let targets: Vec<i64> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(-15..15)).collect();
        let delta = [0.0, 0.5, 1.0][case % 3];
        let mut expect = BTreeSet::new();
        for (i, x) in a1.iter().enumerate() {
            for (j, y) in a2.iter().enumerate() {
                if targets.contains(&(x + y)) {
                    expect.insert((i as u32, j as u32));
                }
            }
        }
        let mut got = BTreeSet::new();
        for p in oracle.report(Rc::new(a1.clone()), Rc::new(a2.clone()), targets, delta)? {
            if !got.insert(p?) {
                return contract(format!("oracle {} reported a pair twice", oracle.name()));
            }
        }
        if got != expect {
            return contract(format!(
                "oracle {} disagrees with exhaustive reporting on case {case}",
                oracle.name()
            ));
        }
    }
    Ok(())
}

/// Oracles by name. Registration validates first.
pub struct OracleRegistry {
    oracles: BTreeMap<String, Box<dyn TwoSumOracle>>,
}

impl OracleRegistry {
    pub fn empty() -> Self {
        Self {
            oracles: BTreeMap::new(),
        }
    }

    /// Registry holding the block oracle under "block" and "default".
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(BlockOracle))
            .expect("block oracle passes validation");
        r.oracles.insert("default".into(), Box::new(BlockOracle));
        r
    }

    pub fn register(&mut self, oracle: Box<dyn TwoSumOracle>) -> Result<()> {
        validate_oracle(oracle.as_ref(), 0)?;
        self.oracles.insert(oracle.name().to_string(), oracle);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&dyn TwoSumOracle> {
        self.oracles
            .get(name)
            .map(|o| o.as_ref())
            .ok_or_else(|| KsumError::Parameter(format!("no oracle named {name:?}")))
    }

    pub fn names(&self) -> Vec<&str> {
        self.oracles.keys().map(String::as_str).collect()
    }
}

fn to_witness(t: Tuple) -> Witness {
    Witness::new(t.iter().map(|&i| i as usize).collect())
}

fn require_k(inst: &KSumInstance, k: usize) -> Result<()> {
    if inst.k() != k {
        return param(format!("this solver needs k = {k}, got {}", inst.k()));
    }
    Ok(())
}

/// 2SUM on the top-level sum arrays, holding one of them sorted.
fn top_two_sum(vs: &[&dyn ArrayView], t: i64, _ctx: &Ctx) -> Result<Option<Tuple>> {
    let block = vs[1].len().max(1);
    Ok(two_sum_find(vs[0], vs[1], t, block)?.map(|(i, j)| smallvec::smallvec![i, j]))
}

fn top_linear(vs: &[&dyn ArrayView], t: i64, ctx: &Ctx) -> Result<Option<Tuple>> {
    lv_ksum_views(vs, t, 1.0, ctx)
}

fn top_three_sum(vs: &[&dyn ArrayView], t: i64, _: &Ctx) -> Result<Option<Tuple>> {
    three_sum_sorted(vs, t)
}

fn run(
    inst: &KSumInstance,
    spec: &ReduceSpec,
    seed: u64,
    limits: RunLimits,
) -> Result<SolverReport> {
    measured(seed, limits, |ctx| {
        Ok(self_reduce_views(&inst.views(), inst.target(), spec, ctx)?.map(to_witness))
    })
}

/// Two groups of three arrays; each group's sums with a given packed value
/// come from blocked 3SUM reporting, and the two deduplicated lists meet in
/// a 2SUM instance.
pub fn six_sum_3x3(
    inst: &KSumInstance,
    delta: f64,
    seed: u64,
    limits: RunLimits,
) -> Result<SolverReport> {
    require_k(inst, 6)?;
    if !(0.5..=3.0).contains(&delta) {
        return param("six_sum_3x3 needs delta in [0.5, 3]");
    }
    let spec = ReduceSpec {
        m: 3,
        delta,
        c: 6.0,
        reporter: Reporter::Kernel,
        top: &top_two_sum,
    };
    run(inst, &spec, seed, limits)
}

/// Three groups of two arrays feeding a 3SUM instance on the deduplicated
/// lists.
pub fn six_sum_2x2x2(
    inst: &KSumInstance,
    delta: f64,
    seed: u64,
    limits: RunLimits,
) -> Result<SolverReport> {
    require_k(inst, 6)?;
    if !(0.0..=2.0).contains(&delta) {
        return param("six_sum_2x2x2 needs delta in [0, 2]");
    }
    let spec = ReduceSpec {
        m: 2,
        delta,
        c: 6.0,
        reporter: Reporter::Kernel,
        top: &top_three_sum,
    };
    run(inst, &spec, seed, limits)
}

/// Groups `{A1, A2}` and `{A3}`; pairs come from the oracle, the fixed
/// group's singletons from a scan, and each chunk pair ends in 2SUM.
pub fn three_sum_oracle(
    inst: &KSumInstance,
    delta: f64,
    oracle: &dyn TwoSumOracle,
    seed: u64,
    limits: RunLimits,
) -> Result<SolverReport> {
    require_k(inst, 3)?;
    if !(0.0..=1.0).contains(&delta) {
        return param("three_sum_oracle needs delta in [0, 1]");
    }
    let spec = ReduceSpec {
        m: 2,
        delta,
        c: 3.0,
        reporter: Reporter::Oracle(oracle),
        top: &top_two_sum,
    };
    run(inst, &spec, seed, limits)
}

/// `k/2` groups of two arrays reported by the oracle; the lists meet in a
/// `(k/2)`SUM instance solved in linear space.
pub fn small_k_oracle(
    inst: &KSumInstance,
    delta: f64,
    oracle: &dyn TwoSumOracle,
    seed: u64,
    limits: RunLimits,
) -> Result<SolverReport> {
    if ![4, 6, 8].contains(&inst.k()) {
        return param("small_k_oracle needs k in {4, 6, 8}");
    }
    if !(0.0..=1.0).contains(&delta) {
        return param("small_k_oracle needs delta in [0, 1]");
    }
    let spec = ReduceSpec {
        m: 2,
        delta,
        c: inst.k() as f64,
        reporter: Reporter::Oracle(oracle),
        top: &top_linear,
    };
    run(inst, &spec, seed, limits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_random, plant_solution};
    use crate::reference::brute_force_solve;

    #[test]
    fn default_registry_validates() {
        let r = OracleRegistry::with_defaults();
        assert_eq!(r.names(), vec!["block", "default"]);
        assert!(r.get("nope").is_err());
    }

    #[test]
    fn stub_cannot_register() {
        let mut r = OracleRegistry::empty();
        assert!(matches!(
            r.register(Box::new(ListDisjointnessStub)),
            Err(KsumError::Unsupported(_))
        ));
    }

    struct Broken;
    impl TwoSumOracle for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        fn cost_exponent(&self, _: f64) -> f64 {
            1.0
        }
        fn report<'a>(
            &'a self,
            _: Rc<dyn ArrayView + 'a>,
            _: Rc<dyn ArrayView + 'a>,
            _: Vec<i64>,
            _: f64,
        ) -> Result<PairReport<'a>> {
            Ok(Box::new(std::iter::empty()))
        }
    }

    #[test]
    fn wrong_oracle_is_rejected() {
        let mut r = OracleRegistry::empty();
        assert!(matches!(r.register(Box::new(Broken)), Err(KsumError::Contract(_))));
    }

    #[test]
    fn all_zero_six_sum_found_at_first_vector() {
        let inst = KSumInstance::new(vec![vec![0; 6]; 6], 0).unwrap();
        let r = six_sum_2x2x2(&inst, 2.0 / 3.0, 1, RunLimits::default()).unwrap();
        assert!(r.found);
        assert_eq!(r.stats.target_vectors, 1);
    }

    #[test]
    fn special_solvers_agree_with_brute_force() {
        let oracle = BlockOracle;
        for seed in 0..15u64 {
            let i6 = generate_random(5, 6, 4, seed).unwrap();
            let e6 = brute_force_solve(&i6).unwrap().found;
            let l = RunLimits::default();
            assert_eq!(six_sum_3x3(&i6, 0.5, seed, l).unwrap().found, e6);
            assert_eq!(six_sum_2x2x2(&i6, 2.0 / 3.0, seed, l).unwrap().found, e6);
            assert_eq!(small_k_oracle(&i6, 0.5, &oracle, seed, l).unwrap().found, e6);
            let i3 = generate_random(12, 3, 20, seed).unwrap();
            let e3 = brute_force_solve(&i3).unwrap().found;
            for d in [0.0, 0.5, 1.0] {
                assert_eq!(three_sum_oracle(&i3, d, &oracle, seed, l).unwrap().found, e3);
            }
            let i4 = generate_random(8, 4, 10, seed).unwrap();
            let e4 = brute_force_solve(&i4).unwrap().found;
            assert_eq!(small_k_oracle(&i4, 0.5, &oracle, seed, l).unwrap().found, e4);
        }
    }

    #[test]
    fn planted_k8_oracle() {
        let oracle = BlockOracle;
        for seed in 0..5u64 {
            let (inst, _) = plant_solution(&generate_random(6, 8, 1 << 40, seed).unwrap(), seed);
            let r = small_k_oracle(&inst, 0.5, &oracle, seed, RunLimits::default()).unwrap();
            assert!(r.found);
        }
    }
}

//! Exact queries on a dense [`JointTable`], and the [`MarginalProvider`]
//! interface through which recovery sees any distribution.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::combinatorics::{decode, encode, subsets_by_size, sum_onto};
use crate::error::{Error, Result};
use crate::model::{check_positions, DiscreteDag, JointTable};

/// Default tolerance for exact-oracle independence tests.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiDecision {
    Independent,
    Dependent,
}

/// Dense distribution over the configurations of a sorted set of positions.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    positions: Vec<usize>,
    cards: Vec<usize>,
    probs: Vec<f64>,
}

impl MarginalTable {
    pub(crate) fn from_parts(positions: Vec<usize>, cards: Vec<usize>, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), cards.iter().product::<usize>());
        MarginalTable {
            positions,
            cards,
            probs,
        }
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of `values`, listed in the order of [`positions`](Self::positions).
    pub fn prob(&self, values: &[usize]) -> f64 {
        self.probs[encode(&self.cards, values)]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Sum out every position not in `keep` (a sorted subset of this table's positions).
    pub fn marginalize(&self, keep: &[usize]) -> Result<MarginalTable> {
        let axes = self.axes_of(keep)?;
        let probs = sum_onto(&self.cards, &self.probs, &axes);
        let cards = axes.iter().map(|&a| self.cards[a]).collect();
        Ok(MarginalTable::from_parts(keep.to_vec(), cards, probs))
    }

    fn axes_of(&self, keep: &[usize]) -> Result<Vec<usize>> {
        let mut axes = Vec::with_capacity(keep.len());
        for &p in keep {
            let a = self.positions.binary_search(&p).map_err(|_| {
                Error::InvalidParameter(format!("x{} not in table positions", p + 1))
            })?;
            axes.push(a);
        }
        if axes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "positions not strictly increasing".into(),
            ));
        }
        Ok(axes)
    }
}

/// Marginal of `joint` on the sorted `positions`.
pub fn marginal(joint: &JointTable, positions: &[usize]) -> Result<MarginalTable> {
    check_positions(positions, joint.n())?;
    let probs = sum_onto(joint.cards(), joint.probs(), positions);
    let cards = positions.iter().map(|&p| joint.cards()[p]).collect();
    Ok(MarginalTable::from_parts(positions.to_vec(), cards, probs))
}

/// Source of tuple marginals with a hard cap on tuple size.
///
/// Every request, including refused ones, updates [`max_requested`](Self::max_requested).
pub trait MarginalProvider: Send + Sync {
    fn cards(&self) -> &[usize];

    fn max_tuple_size(&self) -> usize;

    /// Largest tuple size requested so far (0 before the first request).
    fn max_requested(&self) -> usize;

    /// Dense marginal over the sorted `positions`.
    fn table(&self, positions: &[usize]) -> Result<Arc<MarginalTable>>;

    fn query(&self, positions: &[usize], values: &[usize]) -> Result<f64> {
        if values.len() != positions.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} positions, {} values",
                positions.len(),
                values.len()
            )));
        }
        let table = self.table(positions)?;
        if let Some((&p, &v)) = positions
            .iter()
            .zip(values)
            .find(|(&p, &v)| v >= self.cards()[p])
        {
            return Err(Error::InvalidParameter(format!(
                "value {v} out of range for x{}",
                p + 1
            )));
        }
        Ok(table.prob(values))
    }
}

/// Budget enforcement, access log and memo shared by the providers.
#[derive(Debug, Default)]
pub(crate) struct TableCache {
    max_requested: AtomicUsize,
    tables: Mutex<HashMap<Vec<usize>, Arc<MarginalTable>>>,
}

impl TableCache {
    pub(crate) fn max_requested(&self) -> usize {
        self.max_requested.load(Ordering::Relaxed)
    }

    pub(crate) fn get_or_compute<F>(
        &self,
        positions: &[usize],
        n: usize,
        max: usize,
        compute: F,
    ) -> Result<Arc<MarginalTable>>
    where
        F: FnOnce() -> Result<MarginalTable>,
    {
        self.max_requested
            .fetch_max(positions.len(), Ordering::Relaxed);
        if positions.len() > max {
            return Err(Error::TupleSizeExceeded {
                requested: positions.len(),
                max,
            });
        }
        check_positions(positions, n)?;
        if let Some(t) = self.tables.lock().expect("cache poisoned").get(positions) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(compute()?);
        self.tables
            .lock()
            .expect("cache poisoned")
            .entry(positions.to_vec())
            .or_insert_with(|| Arc::clone(&table));
        Ok(table)
    }
}

/// Answers marginals of an exact joint, refusing tuples larger than its budget.
#[derive(Debug)]
pub struct ExactProvider<'a> {
    joint: &'a JointTable,
    max_tuple_size: usize,
    cache: TableCache,
}

impl<'a> ExactProvider<'a> {
    pub fn new(joint: &'a JointTable, max_tuple_size: usize) -> Self {
        ExactProvider {
            joint,
            max_tuple_size,
            cache: TableCache::default(),
        }
    }

    pub fn joint(&self) -> &JointTable {
        self.joint
    }
}

pub fn exact_provider(joint: &JointTable, max_tuple_size: usize) -> ExactProvider<'_> {
    ExactProvider::new(joint, max_tuple_size)
}

impl MarginalProvider for ExactProvider<'_> {
    fn cards(&self) -> &[usize] {
        self.joint.cards()
    }

    fn max_tuple_size(&self) -> usize {
        self.max_tuple_size
    }

    fn max_requested(&self) -> usize {
        self.cache.max_requested()
    }

    fn table(&self, positions: &[usize]) -> Result<Arc<MarginalTable>> {
        self.cache
            .get_or_compute(positions, self.joint.n(), self.max_tuple_size, || {
                marginal(self.joint, positions)
            })
    }
}

/// Sorted, pairwise-disjoint copies of three index sets plus their sorted union.
pub(crate) struct TripleSets {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub z: Vec<usize>,
    pub union: Vec<usize>,
}

pub(crate) fn prepare_sets(x: &[usize], y: &[usize], z: &[usize], n: usize) -> Result<TripleSets> {
    let sorted = |s: &[usize]| -> Result<Vec<usize>> {
        let mut v = s.to_vec();
        v.sort_unstable();
        v.dedup();
        if let Some(&index) = v.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index, n });
        }
        Ok(v)
    };
    let (x, y, z) = (sorted(x)?, sorted(y)?, sorted(z)?);
    let mut union: Vec<usize> = x.iter().chain(&y).chain(&z).copied().collect();
    union.sort_unstable();
    if let Some(w) = union.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::OverlappingSets(w[0]));
    }
    Ok(TripleSets { x, y, z, union })
}

fn merged(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b).copied().collect();
    v.sort_unstable();
    v
}

/// `max |P(x,y,z)·P(z) − P(x,z)·P(y,z)|` over all realizations whose context
/// mass `P(z)` exceeds `mass_floor`. `table` must be the marginal on the union
/// of the three sets. Returns 0 when every context is skipped.
pub(crate) fn cross_deviation(
    table: &MarginalTable,
    sets: &TripleSets,
    mass_floor: f64,
) -> Result<f64> {
    let xz = table.marginalize(&merged(&sets.x, &sets.z))?;
    let yz = table.marginalize(&merged(&sets.y, &sets.z))?;
    let zt = table.marginalize(&sets.z)?;
    let axes_xz = table.axes_of(xz.positions())?;
    let axes_yz = table.axes_of(yz.positions())?;
    let axes_z = table.axes_of(zt.positions())?;

    let cards = table.cards();
    let mut digits = vec![0usize; cards.len()];
    let mut stat: f64 = 0.0;
    let pick = |axes: &[usize], digits: &[usize], sub_cards: &[usize]| {
        axes.iter()
            .zip(sub_cards)
            .fold(0, |acc, (&a, &c)| acc * c + digits[a])
    };
    for (idx, &pxyz) in table.probs().iter().enumerate() {
        decode(cards, idx, &mut digits);
        let pz = zt.probs()[pick(&axes_z, &digits, zt.cards())];
        if pz <= mass_floor {
            continue;
        }
        let pxz = xz.probs()[pick(&axes_xz, &digits, xz.cards())];
        let pyz = yz.probs()[pick(&axes_yz, &digits, yz.cards())];
        stat = stat.max((pxyz * pz - pxz * pyz).abs());
    }
    Ok(stat)
}

/// `(X ⊥ Y | Z)` in the cross-multiplied form, skipping contexts with
/// `P(z) ≤ tol`.
pub fn conditional_independent(
    joint: &JointTable,
    x: &[usize],
    y: &[usize],
    z: &[usize],
    tol: f64,
) -> Result<bool> {
    let sets = prepare_sets(x, y, z, joint.n())?;
    let table = marginal(joint, &sets.union)?;
    Ok(cross_deviation(&table, &sets, tol)? <= tol)
}

/// The minimal set `S ⊆ {0..j}` with `(X_j ⊥ rest | S)`, scanning subsets by
/// size and then lexicographically. Requires a strictly positive joint.
pub fn markov_parents(joint: &JointTable, j: usize, tol: f64) -> Result<Vec<usize>> {
    if j >= joint.n() {
        return Err(Error::IndexOutOfRange {
            index: j,
            n: joint.n(),
        });
    }
    if !joint.is_strictly_positive() {
        return Err(Error::NotStrictlyPositive);
    }
    let preds: Vec<usize> = (0..j).collect();
    for s in subsets_by_size(&preds) {
        let rest: Vec<usize> = preds.iter().copied().filter(|p| !s.contains(p)).collect();
        if conditional_independent(joint, &[j], &rest, &s, tol)? {
            return Ok(s);
        }
    }
    unreachable!("the full predecessor set always renders the rest (empty) independent")
}

/// `max_x |P(x) − ∏_j P(x_j | p_j)|` with the conditionals computed from
/// `joint` itself for the given parent sets. Configurations whose parent
/// context has zero mass are skipped.
pub fn markov_deviation(joint: &JointTable, parents: &[Vec<usize>]) -> Result<f64> {
    let n = joint.n();
    if parents.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} parent sets for {n} variables",
            parents.len()
        )));
    }
    let mut factors = Vec::with_capacity(n);
    for (j, ps) in parents.iter().enumerate() {
        if ps.iter().any(|&p| p >= j) {
            return Err(Error::InvalidParameter(format!(
                "parents of x{} are not predecessors",
                j + 1
            )));
        }
        let mut fam = ps.clone();
        fam.push(j);
        factors.push((marginal(joint, &fam)?, marginal(joint, ps)?));
    }

    let mut values = vec![0usize; n];
    let mut sub = Vec::with_capacity(n);
    let mut worst: f64 = 0.0;
    'configs: for (idx, &p) in joint.probs().iter().enumerate() {
        decode(joint.cards(), idx, &mut values);
        let mut prod = 1.0;
        for (fam, par) in &factors {
            sub.clear();
            sub.extend(par.positions().iter().map(|&q| values[q]));
            let mass = par.prob(&sub);
            if mass <= 0.0 {
                continue 'configs;
            }
            sub.push(values[*fam.positions().last().expect("family holds the child")]);
            prod *= fam.prob(&sub) / mass;
        }
        worst = worst.max((p - prod).abs());
    }
    Ok(worst)
}

/// Whether `joint` factorizes along the parent sets of `dag` within `tol`.
pub fn is_markov_relative(joint: &JointTable, dag: &DiscreteDag, tol: f64) -> Result<bool> {
    if joint.cards() != dag.cards() {
        return Err(Error::ShapeMismatch(format!(
            "joint cardinalities {:?} vs DAG {:?}",
            joint.cards(),
            dag.cards()
        )));
    }
    Ok(markov_deviation(joint, dag.parent_sets())? <= tol)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::combinatorics::combinations;
    use approx::assert_abs_diff_eq;

    /// `P(x,y|z) = P(x|z)·P(y|z)` checked in conditional-probability form by
    /// brute-force enumeration over full configurations.
    fn ci_by_enumeration(joint: &JointTable, x: &[usize], y: &[usize], z: &[usize]) -> bool {
        let mass = |fixed: &[(usize, usize)]| -> f64 {
            joint
                .probs()
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let v = joint.values_of(*i);
                    fixed.iter().all(|&(p, val)| v[p] == val)
                })
                .map(|(_, p)| p)
                .sum()
        };
        let vars: Vec<usize> = x.iter().chain(y).chain(z).copied().collect();
        let sub_cards: Vec<usize> = vars.iter().map(|&v| joint.cards()[v]).collect();
        let total: usize = sub_cards.iter().product();
        let mut vals = vec![0; vars.len()];
        for i in 0..total {
            decode(&sub_cards, i, &mut vals);
            let asg: Vec<(usize, usize)> = vars.iter().copied().zip(vals.iter().copied()).collect();
            let (ax, rest) = asg.split_at(x.len());
            let (ay, az) = rest.split_at(y.len());
            let pz = mass(az);
            if pz <= 0.0 {
                continue;
            }
            let xyz: Vec<_> = asg.clone();
            let xz: Vec<_> = ax.iter().chain(az).copied().collect();
            let yz: Vec<_> = ay.iter().chain(az).copied().collect();
            let lhs = mass(&xyz) / pz;
            let rhs = (mass(&xz) / pz) * (mass(&yz) / pz);
            if (lhs - rhs).abs() > 1e-9 {
                return false;
            }
        }
        true
    }

    #[test]
    fn full_marginal_is_joint() {
        let j = chain3().factorized_joint().unwrap();
        let m = marginal(&j, &[0, 1, 2]).unwrap();
        assert_eq!(m.probs(), j.probs());
    }

    #[test]
    fn uniform_pair_marginal() {
        let dag = DiscreteDag::new(
            vec![2, 2],
            0,
            vec![vec![], vec![]],
            vec![vec![vec![0.5, 0.5]]; 2],
        )
        .unwrap();
        let m = marginal(&dag.factorized_joint().unwrap(), &[1]).unwrap();
        assert_eq!(m.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn chain_marginal_of_second_node() {
        let dag = crate::model::tests::chain2();
        let m = marginal(&dag.factorized_joint().unwrap(), &[1]).unwrap();
        assert_abs_diff_eq!(m.prob(&[1]), 0.41, epsilon = 1e-15);
    }

    #[test]
    fn marginal_rejects_bad_positions() {
        let j = xor_joint();
        assert!(matches!(
            marginal(&j, &[3]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(marginal(&j, &[1, 0]).is_err());
    }

    #[test]
    fn product_measure_everything_independent() {
        let j = independent(&[2, 3, 2, 2]).factorized_joint().unwrap();
        let all = [0, 1, 2, 3];
        for xs in subsets_by_size(&all).filter(|s| !s.is_empty()) {
            let rest: Vec<_> = all.iter().copied().filter(|v| !xs.contains(v)).collect();
            for ys in subsets_by_size(&rest).filter(|s| !s.is_empty()) {
                let zs: Vec<_> = rest.iter().copied().filter(|v| !ys.contains(v)).collect();
                assert!(conditional_independent(&j, &xs, &ys, &zs, DEFAULT_TOLERANCE).unwrap());
                assert!(conditional_independent(&j, &xs, &ys, &[], DEFAULT_TOLERANCE).unwrap());
            }
        }
    }

    #[test]
    fn xor_pairwise_independent_but_not_conditionally() {
        let j = xor_joint();
        assert!(ci_by_enumeration(&j, &[0], &[2], &[]));
        assert!(!ci_by_enumeration(&j, &[0], &[2], &[1]));
        assert!(conditional_independent(&j, &[0], &[2], &[], DEFAULT_TOLERANCE).unwrap());
        assert!(!conditional_independent(&j, &[0], &[2], &[1], DEFAULT_TOLERANCE).unwrap());
    }

    #[test]
    fn chain_ends_independent_given_middle() {
        let j = chain3().factorized_joint().unwrap();
        assert!(ci_by_enumeration(&j, &[0], &[2], &[1]));
        assert!(conditional_independent(&j, &[0], &[2], &[1], DEFAULT_TOLERANCE).unwrap());
        assert!(!conditional_independent(&j, &[0], &[2], &[], DEFAULT_TOLERANCE).unwrap());
    }

    #[test]
    fn overlapping_sets_rejected() {
        let j = xor_joint();
        assert!(matches!(
            conditional_independent(&j, &[0], &[0, 1], &[], DEFAULT_TOLERANCE),
            Err(Error::OverlappingSets(0))
        ));
    }

    #[test]
    fn ci_agrees_with_enumeration_on_random_instances() {
        let opts = crate::model::RandomDagOptions::default();
        for seed in 0..6 {
            let dag = crate::model::random_dag(&[2, 3, 2, 2], 1 + seed as usize % 2, seed, &opts)
                .unwrap();
            let j = dag.factorized_joint().unwrap();
            for xs in combinations(&[0usize, 1, 2, 3], 1) {
                for ys in combinations(&[0usize, 1, 2, 3], 1).filter(|y| y != &xs) {
                    let rest: Vec<usize> = (0..4)
                        .filter(|v| !xs.contains(v) && !ys.contains(v))
                        .collect();
                    for zs in subsets_by_size(&rest) {
                        assert_eq!(
                            conditional_independent(&j, &xs, &ys, &zs, DEFAULT_TOLERANCE).unwrap(),
                            ci_by_enumeration(&j, &xs, &ys, &zs),
                            "seed {seed} {xs:?} {ys:?} {zs:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn markov_parents_examples() {
        let j = chain3().factorized_joint().unwrap();
        assert_eq!(
            markov_parents(&j, 0, DEFAULT_TOLERANCE).unwrap(),
            Vec::<usize>::new()
        );
        assert_eq!(markov_parents(&j, 1, DEFAULT_TOLERANCE).unwrap(), vec![0]);
        assert_eq!(markov_parents(&j, 2, DEFAULT_TOLERANCE).unwrap(), vec![1]);
        let ind = independent(&[2, 2, 3]).factorized_joint().unwrap();
        for v in 0..3 {
            assert!(markov_parents(&ind, v, DEFAULT_TOLERANCE)
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn markov_parents_refuses_zeros() {
        assert!(matches!(
            markov_parents(&xor_joint(), 2, DEFAULT_TOLERANCE),
            Err(Error::NotStrictlyPositive)
        ));
    }

    #[test]
    fn markov_parents_minimal_on_random_instances() {
        let opts = crate::model::RandomDagOptions::default();
        for seed in 0..4 {
            let dag = crate::model::random_dag(&[2; 6], 2, 100 + seed, &opts).unwrap();
            let j = dag.factorized_joint().unwrap();
            for v in 0..6 {
                let s = markov_parents(&j, v, DEFAULT_TOLERANCE).unwrap();
                let preds: Vec<usize> = (0..v).collect();
                for k in 0..s.len() {
                    for sub in combinations(&s, k) {
                        let rest: Vec<_> =
                            preds.iter().copied().filter(|p| !sub.contains(p)).collect();
                        assert!(
                            !conditional_independent(&j, &[v], &rest, &sub, DEFAULT_TOLERANCE)
                                .unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn markov_relative_examples() {
        let dag = chain3();
        let j = dag.factorized_joint().unwrap();
        assert!(is_markov_relative(&j, &dag, 1e-12).unwrap());
        assert!(markov_deviation(&j, &[vec![], vec![0], vec![0, 1]]).unwrap() < 1e-15);

        let xor = xor_joint();
        assert!(markov_deviation(&xor, &[vec![], vec![0], vec![0, 1]]).unwrap() < 1e-15);
        // with x3 depending on x1 only: P(x1,x2,x3) vs P(x1)P(x2)P(x3|x1) = 1/8 everywhere
        let dev = markov_deviation(&xor, &[vec![], vec![], vec![0]]).unwrap();
        assert_abs_diff_eq!(dev, 0.125, epsilon = 1e-15);
    }

    #[test]
    fn markov_relative_shape_mismatch() {
        let j = xor_joint();
        let dag = crate::model::tests::chain2();
        assert!(matches!(
            is_markov_relative(&j, &dag, 1e-9),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn exact_provider_budget() {
        let j = chain3().factorized_joint().unwrap();
        let p = exact_provider(&j, 2);
        assert_eq!(p.max_requested(), 0);
        assert!(p.table(&[0, 2]).is_ok());
        assert!(matches!(
            p.table(&[0, 1, 2]),
            Err(Error::TupleSizeExceeded {
                requested: 3,
                max: 2
            })
        ));
        assert_eq!(p.max_requested(), 3);
        let direct = marginal(&j, &[1]).unwrap();
        assert_eq!(p.query(&[1], &[1]).unwrap(), direct.prob(&[1]));
    }

    #[test]
    fn marginalize_is_consistent() {
        let j = chain3().factorized_joint().unwrap();
        let m = marginal(&j, &[0, 2]).unwrap();
        let via = m.marginalize(&[2]).unwrap();
        let direct = marginal(&j, &[2]).unwrap();
        for (a, b) in via.probs().iter().zip(direct.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert!(m.marginalize(&[1]).is_err());
    }
}

//! Ordered discrete Bayesian networks, dense joint tables and cylinder keys.
//!
//! Values of variable `j` are the integers `0..cards[j]`. A node's CPT is a
//! list of rows, one per parent configuration; the configuration index is
//! mixed-radix over the parents in increasing node order, most significant
//! first (see [`DiscreteDag::parent_config_index`]).

use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{checked_size, decode, encode, strides};
use crate::error::{Error, Result};

/// Default cap on the number of entries of a dense joint table.
pub const DEFAULT_CAPACITY: usize = 1 << 24;

/// Tolerance for a CPT row summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Tolerance for a joint table summing to one.
pub const JOINT_SUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    ParentNotPredecessor,
    ParentsNotSorted,
    InDegreeExceeded,
    ZeroCardinality,
    CptShape,
    ProbabilityOutOfRange,
    RowSum,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::ParentNotPredecessor => "parent index ≥ child",
            Rule::ParentsNotSorted => "parent set not strictly increasing",
            Rule::InDegreeExceeded => "in-degree exceeds Δ",
            Rule::ZeroCardinality => "cardinality is zero",
            Rule::CptShape => "CPT shape does not match parents",
            Rule::ProbabilityOutOfRange => "probability outside [0, 1]",
            Rule::RowSum => "CPT row does not sum to 1",
        })
    }
}

/// One broken invariant of a [`DiscreteDag`]. `node` is 0-based; the
/// rendered message uses 1-based labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub node: usize,
    pub rule: Rule,
    pub observed: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}: {} ({})", self.node + 1, self.rule, self.observed)
    }
}

/// Ordered DAG over discrete variables with per-node conditional tables.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDag {
    cards: Vec<usize>,
    delta: usize,
    parents: Vec<Vec<usize>>,
    cpts: Vec<Vec<Vec<f64>>>,
}

impl DiscreteDag {
    /// Builds a DAG, rejecting it with every violation listed if any
    /// invariant fails.
    pub fn new(
        cards: Vec<usize>,
        delta: usize,
        parents: Vec<Vec<usize>>,
        cpts: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let dag = Self::from_parts_unchecked(cards, delta, parents, cpts)?;
        let violations = dag.validate();
        if violations.is_empty() {
            Ok(dag)
        } else {
            Err(Error::InvalidDag(violations))
        }
    }

    /// Builds a DAG without checking anything but the per-node vector
    /// lengths. Use [`validate`](Self::validate) to inspect it.
    pub fn from_parts_unchecked(
        cards: Vec<usize>,
        delta: usize,
        parents: Vec<Vec<usize>>,
        cpts: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if parents.len() != cards.len() || cpts.len() != cards.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cardinalities, {} parent sets, {} CPTs",
                cards.len(),
                parents.len(),
                cpts.len()
            )));
        }
        Ok(DiscreteDag {
            cards,
            delta,
            parents,
            cpts,
        })
    }

    /// Lists every invariant violation; an empty list means the DAG is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |node, rule, observed: String| {
            out.push(Violation {
                node,
                rule,
                observed,
            })
        };
        for (j, &card) in self.cards.iter().enumerate() {
            if card == 0 {
                push(j, Rule::ZeroCardinality, "0".into());
            }
        }
        for (j, ps) in self.parents.iter().enumerate() {
            if ps.windows(2).any(|w| w[0] >= w[1]) {
                push(j, Rule::ParentsNotSorted, format!("{:?}", one_based(ps)));
            }
            for &p in ps.iter().filter(|&&p| p >= j) {
                push(j, Rule::ParentNotPredecessor, format!("parent x{}", p + 1));
            }
            if ps.len() > self.delta {
                push(
                    j,
                    Rule::InDegreeExceeded,
                    format!("{} parents, Δ = {}", ps.len(), self.delta),
                );
            }
            if ps.iter().any(|&p| p >= self.cards.len()) {
                continue;
            }
            let rows = ps.iter().map(|&p| self.cards[p]).product::<usize>();
            let cpt = &self.cpts[j];
            if cpt.len() != rows || cpt.iter().any(|r| r.len() != self.cards[j]) {
                push(
                    j,
                    Rule::CptShape,
                    format!(
                        "expected {rows} rows of {}, got {} rows",
                        self.cards[j],
                        cpt.len()
                    ),
                );
                continue;
            }
            for (r, row) in cpt.iter().enumerate() {
                if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    push(j, Rule::ProbabilityOutOfRange, format!("row {r}: {p}"));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                    push(j, Rule::RowSum, format!("row {r} sums to {s}"));
                }
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.cards.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn parents(&self, j: usize) -> &[usize] {
        &self.parents[j]
    }

    pub fn parent_sets(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn cpt(&self, j: usize) -> &[Vec<f64>] {
        &self.cpts[j]
    }

    pub fn cpts(&self) -> &[Vec<Vec<f64>>] {
        &self.cpts
    }

    pub fn max_in_degree(&self) -> usize {
        self.parents.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// CPT row index of node `j` under the full assignment `values`.
    pub fn parent_config_index(&self, j: usize, values: &[usize]) -> usize {
        self.parents[j]
            .iter()
            .fold(0, |acc, &p| acc * self.cards[p] + values[p])
    }

    /// Dense joint `∏_j P(x_j | p_j)` under the default capacity guard.
    pub fn factorized_joint(&self) -> Result<JointTable> {
        self.factorized_joint_with_capacity(DEFAULT_CAPACITY)
    }

    pub fn factorized_joint_with_capacity(&self, capacity: usize) -> Result<JointTable> {
        let size = guarded_size(&self.cards, capacity)?;
        let n = self.n();
        let mut values = vec![0usize; n];
        let mut probs = Vec::with_capacity(size);
        for idx in 0..size {
            decode(&self.cards, idx, &mut values);
            let p = (0..n)
                .map(|j| self.cpts[j][self.parent_config_index(j, &values)][values[j]])
                .product();
            probs.push(p);
        }
        Ok(JointTable {
            cards: self.cards.clone(),
            probs,
        })
    }
}

fn guarded_size(cards: &[usize], capacity: usize) -> Result<usize> {
    let required = cards
        .iter()
        .try_fold(1u128, |acc, &c| acc.checked_mul(c as u128))
        .unwrap_or(u128::MAX);
    if required > capacity as u128 {
        return Err(Error::Capacity { required, capacity });
    }
    Ok(required as usize)
}

fn one_based(ix: &[usize]) -> Vec<usize> {
    ix.iter().map(|i| i + 1).collect()
}

/// Exact joint distribution over all configurations, row-major with
/// `x_1` most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    cards: Vec<usize>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(cards: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let size = checked_size(&cards).ok_or_else(|| Error::Overflow("joint size".into()))?;
        if probs.len() != size {
            return Err(Error::ShapeMismatch(format!(
                "{} probabilities for {size} configurations",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "negative or non-finite entry {p}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > JOINT_SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!("joint sums to {total}")));
        }
        Ok(JointTable { cards, probs })
    }

    pub fn n(&self) -> usize {
        self.cards.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn index_of(&self, values: &[usize]) -> usize {
        encode(&self.cards, values)
    }

    pub fn values_of(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.n()];
        decode(&self.cards, index, &mut out);
        out
    }

    pub fn prob(&self, values: &[usize]) -> f64 {
        self.probs[self.index_of(values)]
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.cards)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }
}

/// The event `X_{positions} = values`, i.e. a cylinder set of `Ω`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CylinderKey {
    #[serde(with = "crate::io::one_based")]
    pub positions: Vec<usize>,
    pub values: Vec<usize>,
}

impl CylinderKey {
    pub fn new(positions: Vec<usize>, values: Vec<usize>, cards: &[usize]) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} positions, {} values",
                positions.len(),
                values.len()
            )));
        }
        check_positions(&positions, cards.len())?;
        for (&p, &v) in positions.iter().zip(&values) {
            if v >= cards[p] {
                return Err(Error::InvalidParameter(format!(
                    "value {v} out of range for x{} with {} values",
                    p + 1,
                    cards[p]
                )));
            }
        }
        Ok(CylinderKey { positions, values })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Whether the full assignment `point` lies in the cylinder.
    pub fn contains(&self, point: &[usize]) -> bool {
        self.positions
            .iter()
            .zip(&self.values)
            .all(|(&p, &v)| point[p] == v)
    }
}

/// Positions must be strictly increasing and below `n`.
pub(crate) fn check_positions(positions: &[usize], n: usize) -> Result<()> {
    if let Some(&index) = positions.iter().find(|&&p| p >= n) {
        return Err(Error::IndexOutOfRange { index, n });
    }
    if positions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!(
            "positions {:?} are not strictly increasing",
            positions
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomDagOptions {
    /// Symmetric Dirichlet concentration for CPT rows.
    pub alpha: f64,
    /// Minimum probability of every CPT entry.
    pub floor: f64,
    /// Draw each in-degree uniformly from `0..=min(j, Δ)` instead of using the maximum.
    pub random_in_degree: bool,
}

impl Default for RandomDagOptions {
    fn default() -> Self {
        RandomDagOptions {
            alpha: 1.0,
            floor: 0.01,
            random_in_degree: false,
        }
    }
}

/// Seeded random ordered DAG with in-degree `min(j, delta)` at node `j`
/// (0-based) and strictly positive CPTs.
///
/// Each row is `floor + (1 - d * floor) * q` with `q` drawn from a symmetric
/// Dirichlet(alpha), so every entry is at least `floor` and the row sums to 1.
pub fn random_dag(
    cards: &[usize],
    delta: usize,
    seed: u64,
    opts: &RandomDagOptions,
) -> Result<DiscreteDag> {
    if cards.is_empty() {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if let Some(j) = cards.iter().position(|&c| c == 0) {
        return Err(Error::InvalidParameter(format!(
            "x{} has cardinality 0",
            j + 1
        )));
    }
    if !(opts.alpha > 0.0 && opts.alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be > 0, got {}",
            opts.alpha
        )));
    }
    let dmax = *cards.iter().max().unwrap_or(&1);
    if !(opts.floor >= 0.0 && opts.floor * dmax as f64 <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "floor {} infeasible for cardinality {dmax}",
            opts.floor
        )));
    }
    let gamma =
        Gamma::new(opts.alpha, 1.0).map_err(|e| Error::InvalidParameter(format!("alpha: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n = cards.len();
    let mut parents = Vec::with_capacity(n);
    let mut cpts = Vec::with_capacity(n);
    for (j, &card) in cards.iter().enumerate() {
        let cap = j.min(delta);
        let size = if opts.random_in_degree {
            rng.random_range(0..=cap)
        } else {
            cap
        };
        let mut ps = index::sample(&mut rng, j, size).into_vec();
        ps.sort_unstable();
        let rows: usize = ps.iter().map(|&p| cards[p]).product();
        let cpt = (0..rows)
            .map(|_| dirichlet_row(&mut rng, &gamma, card, opts.floor))
            .collect();
        parents.push(ps);
        cpts.push(cpt);
    }
    DiscreteDag::new(cards.to_vec(), delta, parents, cpts)
}

fn dirichlet_row(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, d: usize, floor: f64) -> Vec<f64> {
    if d == 1 {
        return vec![1.0];
    }
    let draws: Vec<f64> = (0..d).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let scale = 1.0 - d as f64 * floor;
    let mut row: Vec<f64> = if total > 0.0 && total.is_finite() {
        draws.iter().map(|g| floor + scale * g / total).collect()
    } else {
        vec![1.0 / d as f64; d]
    };
    // absorb rounding so the row sums to one
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= s);
    row
}

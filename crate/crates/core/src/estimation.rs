//! Ancestral sampling, relative frequencies of k-tuple cylinder sets, and the
//! deviation-threshold independence rule for estimated marginals.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::combinatorics::{combinations, decode, encode};
use crate::error::{Error, Result};
use crate::model::{check_positions, CylinderKey, DiscreteDag};
use crate::oracle::{
    cross_deviation, prepare_sets, CiDecision, MarginalProvider, MarginalTable, TableCache,
};
use crate::par;

/// `l × n` matrix of observed values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMatrix {
    cards: Vec<usize>,
    values: Vec<usize>,
}

impl SampleMatrix {
    pub fn new(cards: Vec<usize>, rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = cards.len();
        let mut values = Vec::with_capacity(rows.len() * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} values, expected {n}",
                    row.len()
                )));
            }
            for (j, (&v, &c)) in row.iter().zip(&cards).enumerate() {
                if v >= c {
                    return Err(Error::InvalidParameter(format!(
                        "row {i}: value {v} out of range for x{} with {c} values",
                        j + 1
                    )));
                }
            }
            values.extend_from_slice(row);
        }
        Ok(SampleMatrix { cards, values })
    }

    pub fn n(&self) -> usize {
        self.cards.len()
    }

    pub fn l(&self) -> usize {
        if self.cards.is_empty() {
            0
        } else {
            self.values.len() / self.cards.len()
        }
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn row(&self, i: usize) -> &[usize] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.values.chunks_exact(self.n().max(1))
    }
}

/// Draws `l` independent rows by ancestral sampling along the ordering.
///
/// Row `i` uses ChaCha8 stream `i` of the master seed, so the matrix is the
/// same whether rows are drawn sequentially or in parallel.
pub fn sample(dag: &DiscreteDag, l: usize, seed: u64) -> Result<SampleMatrix> {
    if l == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    let violations = dag.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidDag(violations));
    }
    let n = dag.n();
    let rows = par::map_range(l, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut row = vec![0usize; n];
        for j in 0..n {
            let cpt_row = &dag.cpt(j)[dag.parent_config_index(j, &row)];
            row[j] = draw_categorical(&mut rng, cpt_row);
        }
        row
    });
    Ok(SampleMatrix {
        cards: dag.cards().to_vec(),
        values: rows.concat(),
    })
}

fn draw_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (v, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return v;
        }
    }
    // rounding left u above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Counts of every realized k-tuple cylinder set, grouped by position set.
///
/// Only realized value tuples are stored; absent keys have count 0. Within a
/// position set, value tuples are keyed by their mixed-radix index.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    k: usize,
    l: usize,
    cards: Vec<usize>,
    counts: BTreeMap<Vec<usize>, HashMap<u64, u64>>,
}

/// Counts every k-tuple cylinder set realized in `samples`.
pub fn tuple_frequencies(samples: &SampleMatrix, k: usize) -> Result<FrequencyTable> {
    let n = samples.n();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "tuple size {k} outside 1..={n}"
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let position_sets: Vec<Vec<usize>> = combinations(&all, k).collect();
    for ps in &position_sets {
        key_space(samples.cards(), ps)?;
    }
    let tables = par::map_slice(&position_sets, |ps| {
        let sub_cards: Vec<usize> = ps.iter().map(|&p| samples.cards()[p]).collect();
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for row in samples.rows() {
            let key = ps
                .iter()
                .zip(&sub_cards)
                .fold(0u64, |acc, (&p, &c)| acc * c as u64 + row[p] as u64);
            *counts.entry(key).or_default() += 1;
        }
        counts
    });
    Ok(FrequencyTable {
        k,
        l: samples.l(),
        cards: samples.cards().to_vec(),
        counts: position_sets.into_iter().zip(tables).collect(),
    })
}

fn key_space(cards: &[usize], positions: &[usize]) -> Result<u64> {
    positions
        .iter()
        .try_fold(1u64, |acc, &p| acc.checked_mul(cards[p] as u64))
        .ok_or_else(|| Error::Overflow(format!("value space of positions {positions:?}")))
}

impl FrequencyTable {
    /// Rebuilds a table from explicit `(key, count)` entries, checking that
    /// every position set of size `k` is present and sums to `l`.
    pub fn from_entries(
        cards: Vec<usize>,
        k: usize,
        l: usize,
        entries: impl IntoIterator<Item = (CylinderKey, u64)>,
    ) -> Result<Self> {
        let n = cards.len();
        if k == 0 || k > n {
            return Err(Error::InvalidParameter(format!(
                "tuple size {k} outside 1..={n}"
            )));
        }
        let all: Vec<usize> = (0..n).collect();
        let mut counts: BTreeMap<Vec<usize>, HashMap<u64, u64>> = combinations(&all, k)
            .map(|ps| (ps, HashMap::new()))
            .collect();
        for (key, count) in entries {
            let key = CylinderKey::new(key.positions, key.values, &cards)?;
            let sub_cards: Vec<usize> = key.positions.iter().map(|&p| cards[p]).collect();
            let code = encode(&sub_cards, &key.values) as u64;
            let slot = counts.get_mut(&key.positions).ok_or_else(|| {
                Error::Format(format!("entry has {} positions, expected {k}", key.len()))
            })?;
            if count > 0 && slot.insert(code, count).is_some() {
                return Err(Error::Format(format!("duplicate entry {key:?}")));
            }
        }
        for (ps, c) in &counts {
            let total: u64 = c.values().sum();
            if total != l as u64 {
                return Err(Error::Format(format!(
                    "counts for positions {ps:?} sum to {total}, expected {l}"
                )));
            }
        }
        Ok(FrequencyTable {
            k,
            l,
            cards,
            counts,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.cards.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    /// Count of a key of any size `≤ k`; smaller keys are summed from the
    /// canonical superset.
    pub fn count(&self, key: &CylinderKey) -> Result<u64> {
        let dense = self.marginal_counts(&key.positions)?;
        let sub_cards: Vec<usize> = key.positions.iter().map(|&p| self.cards[p]).collect();
        Ok(dense[encode(&sub_cards, &key.values)])
    }

    /// Relative frequency `f(M) = count / l`.
    pub fn frequency(&self, key: &CylinderKey) -> Result<f64> {
        Ok(self.count(key)? as f64 / self.l as f64)
    }

    /// Dense counts over `positions` (`|positions| ≤ k`), summed from the
    /// lexicographically smallest stored superset.
    pub fn marginal_counts(&self, positions: &[usize]) -> Result<Vec<u64>> {
        let superset = self.canonical_superset(positions)?;
        self.marginal_counts_via(positions, &superset)
    }

    /// Dense counts over `positions`, summed from the stored counts of the
    /// k-set `superset`.
    pub fn marginal_counts_via(&self, positions: &[usize], superset: &[usize]) -> Result<Vec<u64>> {
        check_positions(positions, self.n())?;
        let stored = self.counts.get(superset).ok_or_else(|| {
            Error::InvalidParameter(format!("{superset:?} is not a stored {}-set", self.k))
        })?;
        let axes: Vec<usize> = positions
            .iter()
            .map(|p| {
                superset.binary_search(p).map_err(|_| {
                    Error::InvalidParameter(format!("x{} not in superset {superset:?}", p + 1))
                })
            })
            .collect::<Result<_>>()?;
        let super_cards: Vec<usize> = superset.iter().map(|&p| self.cards[p]).collect();
        let sub_cards: Vec<usize> = positions.iter().map(|&p| self.cards[p]).collect();
        let mut out = vec![0u64; sub_cards.iter().product()];
        let mut digits = vec![0usize; superset.len()];
        for (&code, &c) in stored {
            decode(&super_cards, code as usize, &mut digits);
            let idx = axes
                .iter()
                .zip(&sub_cards)
                .fold(0, |acc, (&a, &card)| acc * card + digits[a]);
            out[idx] += c;
        }
        Ok(out)
    }

    fn canonical_superset(&self, positions: &[usize]) -> Result<Vec<usize>> {
        check_positions(positions, self.n())?;
        if positions.len() > self.k {
            return Err(Error::TupleSizeExceeded {
                requested: positions.len(),
                max: self.k,
            });
        }
        let mut sup = positions.to_vec();
        sup.extend(
            (0..self.n())
                .filter(|p| !positions.contains(p))
                .take(self.k - positions.len()),
        );
        sup.sort_unstable();
        Ok(sup)
    }

    /// Stored k-sets in lexicographic order.
    pub fn position_sets(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.counts.keys().map(Vec::as_slice)
    }

    /// All realized keys with their counts, ordered by positions then values.
    pub fn entries(&self) -> Vec<(CylinderKey, u64)> {
        let mut out = Vec::new();
        for (ps, stored) in &self.counts {
            let sub_cards: Vec<usize> = ps.iter().map(|&p| self.cards[p]).collect();
            let mut codes: Vec<_> = stored.iter().collect();
            codes.sort_unstable();
            for (&code, &c) in codes {
                let mut values = vec![0; ps.len()];
                decode(&sub_cards, code as usize, &mut values);
                out.push((
                    CylinderKey {
                        positions: ps.clone(),
                        values,
                    },
                    c,
                ));
            }
        }
        out
    }
}

/// Marginals estimated from a [`FrequencyTable`]; answers tuples of size `≤ k`.
#[derive(Debug)]
pub struct EmpiricalProvider<'a> {
    freq: &'a FrequencyTable,
    cache: TableCache,
}

impl<'a> EmpiricalProvider<'a> {
    pub fn new(freq: &'a FrequencyTable) -> Result<Self> {
        if freq.l == 0 {
            return Err(Error::InvalidParameter(
                "frequency table holds no samples".into(),
            ));
        }
        Ok(EmpiricalProvider {
            freq,
            cache: TableCache::default(),
        })
    }

    pub fn frequencies(&self) -> &FrequencyTable {
        self.freq
    }
}

pub fn empirical_provider(freq: &FrequencyTable) -> Result<EmpiricalProvider<'_>> {
    EmpiricalProvider::new(freq)
}

impl MarginalProvider for EmpiricalProvider<'_> {
    fn cards(&self) -> &[usize] {
        &self.freq.cards
    }

    fn max_tuple_size(&self) -> usize {
        self.freq.k
    }

    fn max_requested(&self) -> usize {
        self.cache.max_requested()
    }

    fn table(&self, positions: &[usize]) -> Result<Arc<MarginalTable>> {
        self.cache
            .get_or_compute(positions, self.freq.n(), self.freq.k, || {
                let counts = self.freq.marginal_counts(positions)?;
                let l = self.freq.l as f64;
                let cards = positions.iter().map(|&p| self.freq.cards[p]).collect();
                Ok(MarginalTable::from_parts(
                    positions.to_vec(),
                    cards,
                    counts.into_iter().map(|c| c as f64 / l).collect(),
                ))
            })
    }
}

/// Dependence threshold for a per-frequency deviation bound `epsilon`:
/// each product in the cross statistic is within `2ε`, their difference within `4ε`.
pub fn dependence_threshold(epsilon: f64) -> f64 {
    4.0 * epsilon
}

/// `max |f(x,l,k)·f(k) − f(x,k)·f(l,k)|` over realizations with
/// `f(k) > mass_floor`, using one marginal of size `|X|+|L|+|K|`.
pub fn ci_statistic(
    provider: &dyn MarginalProvider,
    x: &[usize],
    l: &[usize],
    k: &[usize],
    mass_floor: f64,
) -> Result<f64> {
    let sets = prepare_sets(x, l, k, provider.cards().len())?;
    let table = provider.table(&sets.union)?;
    cross_deviation(&table, &sets, mass_floor)
}

/// Dependent iff the cross statistic exceeds `τ = 4ε`, ignoring contexts
/// with `f(k) ≤ τ`.
pub fn empirical_ci_test(
    provider: &dyn MarginalProvider,
    x: &[usize],
    l: &[usize],
    k: &[usize],
    epsilon: f64,
) -> Result<CiDecision> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let tau = dependence_threshold(epsilon);
    Ok(if ci_statistic(provider, x, l, k, tau)? > tau {
        CiDecision::Dependent
    } else {
        CiDecision::Independent
    })
}

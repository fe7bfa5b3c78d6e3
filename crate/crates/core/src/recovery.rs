//! Structure recovery for an ordered DAG of in-degree at most Δ.
//!
//! For node `j` with predecessors `V_j` and `m = min(|V_j|, Δ)`, the first
//! `m`-subset `K ⊆ V_j` (lexicographic) such that `(X_j ⊥ L | K)` for every
//! `L ⊆ V_j \ K` with `1 ≤ |L| ≤ m` is accepted, then shrunk by single
//! deletions that keep the same battery passing. Every independence query
//! touches at most `1 + 2m ≤ 2Δ + 1` variables.

use serde::{Deserialize, Serialize};

use crate::combinatorics::combinations;
use crate::error::{Error, Result};
use crate::estimation::{ci_statistic, dependence_threshold};
use crate::model::DiscreteDag;
use crate::oracle::{CiDecision, MarginalProvider};
use crate::par;

/// Answers `(X ⊥ L | K)` queries.
pub trait CiDecider: Sync {
    fn decide(&self, x: &[usize], l: &[usize], k: &[usize]) -> Result<CiDecision>;
}

/// How a [`ProviderDecider`] turns the cross statistic into a decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum DecisionRule {
    /// Independent iff the statistic is `≤ tol`, skipping contexts of mass `≤ tol`.
    Exact { tol: f64 },
    /// Independent iff the statistic is `≤ 4ε`, skipping contexts of mass `≤ 4ε`.
    Empirical { epsilon: f64 },
}

impl DecisionRule {
    fn threshold(self) -> f64 {
        match self {
            DecisionRule::Exact { tol } => tol,
            DecisionRule::Empirical { epsilon } => dependence_threshold(epsilon),
        }
    }
}

/// Decides independence from one marginal of size `|X|+|L|+|K|` per query.
pub struct ProviderDecider<'a> {
    provider: &'a dyn MarginalProvider,
    rule: DecisionRule,
}

impl<'a> ProviderDecider<'a> {
    pub fn new(provider: &'a dyn MarginalProvider, rule: DecisionRule) -> Self {
        ProviderDecider { provider, rule }
    }

    pub fn exact(provider: &'a dyn MarginalProvider, tol: f64) -> Self {
        Self::new(provider, DecisionRule::Exact { tol })
    }

    pub fn empirical(provider: &'a dyn MarginalProvider, epsilon: f64) -> Self {
        Self::new(provider, DecisionRule::Empirical { epsilon })
    }

    pub fn rule(&self) -> DecisionRule {
        self.rule
    }
}

impl CiDecider for ProviderDecider<'_> {
    fn decide(&self, x: &[usize], l: &[usize], k: &[usize]) -> Result<CiDecision> {
        let tau = self.rule.threshold();
        Ok(if ci_statistic(self.provider, x, l, k, tau)? > tau {
            CiDecision::Dependent
        } else {
            CiDecision::Independent
        })
    }
}

/// Parent sets without CPTs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skeleton {
    pub delta: usize,
    #[serde(with = "crate::io::one_based_nested")]
    pub parents: Vec<Vec<usize>>,
}

impl Skeleton {
    pub fn n(&self) -> usize {
        self.parents.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimizationStep {
    #[serde(with = "crate::io::one_based")]
    pub from: Vec<usize>,
    #[serde(with = "crate::io::one_based_scalar")]
    pub removed: usize,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTrace {
    #[serde(with = "crate::io::one_based_scalar")]
    pub node: usize,
    pub m: usize,
    /// Candidates in test order, ending with the accepted one.
    #[serde(with = "crate::io::one_based_nested")]
    pub candidates_tested: Vec<Vec<usize>>,
    #[serde(with = "crate::io::one_based")]
    pub accepted: Vec<usize>,
    pub minimization: Vec<MinimizationStep>,
    #[serde(with = "crate::io::one_based")]
    pub parents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecoveryTrace {
    pub nodes: Vec<NodeTrace>,
}

/// Whether `(X_j ⊥ L | k)` holds for every `L ⊆ V_j \ k` with `1 ≤ |L| ≤ m`.
fn passes_battery(decider: &dyn CiDecider, j: usize, k: &[usize], m: usize) -> Result<bool> {
    let rest: Vec<usize> = (0..j).filter(|p| !k.contains(p)).collect();
    for size in 1..=m.min(rest.len()) {
        for l in combinations(&rest, size) {
            if decider.decide(&[j], &l, k)? == CiDecision::Dependent {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn minimize_traced(
    decider: &dyn CiDecider,
    j: usize,
    k: &[usize],
    m: usize,
) -> Result<(Vec<usize>, Vec<MinimizationStep>)> {
    let mut current = k.to_vec();
    let mut steps = Vec::new();
    'outer: loop {
        for &v in &current {
            let reduced: Vec<usize> = current.iter().copied().filter(|&p| p != v).collect();
            let kept = passes_battery(decider, j, &reduced, m)?;
            steps.push(MinimizationStep {
                from: current.clone(),
                removed: v,
                kept,
            });
            if kept {
                current = reduced;
                continue 'outer;
            }
        }
        return Ok((current, steps));
    }
}

/// Shrinks an accepted set by single deletions in increasing index order,
/// restarting after each successful removal, until no removal keeps the
/// battery passing.
pub fn minimize_parent_set(
    decider: &dyn CiDecider,
    j: usize,
    k: &[usize],
    m: usize,
) -> Result<Vec<usize>> {
    minimize_traced(decider, j, k, m).map(|(set, _)| set)
}

fn recover_node(decider: &dyn CiDecider, j: usize, delta: usize) -> Result<NodeTrace> {
    let m = j.min(delta);
    let preds: Vec<usize> = (0..j).collect();
    let candidates: Vec<Vec<usize>> = combinations(&preds, m).collect();
    // candidate batteries may run concurrently; the first passing one in
    // lexicographic order wins
    let hit = par::find_first_ok(&candidates, |k| passes_battery(decider, j, k, m))?;
    let idx = hit.ok_or(Error::ModelViolation { node: j, m })?;
    let accepted = candidates[idx].clone();
    let (parents, minimization) = minimize_traced(decider, j, &accepted, m)?;
    Ok(NodeTrace {
        node: j,
        m,
        candidates_tested: candidates[..=idx].to_vec(),
        accepted,
        minimization,
        parents,
    })
}

/// Recovers an ordering-consistent parent structure of in-degree at most
/// `delta`. Fails with [`Error::ModelViolation`] naming the first node for
/// which no candidate passes.
pub fn recover_structure(
    decider: &dyn CiDecider,
    n: usize,
    delta: usize,
) -> Result<(Skeleton, RecoveryTrace)> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut trace = RecoveryTrace::default();
    for j in 0..n {
        trace.nodes.push(recover_node(decider, j, delta)?);
    }
    let parents = trace.nodes.iter().map(|t| t.parents.clone()).collect();
    Ok((Skeleton { delta, parents }, trace))
}

/// Result of [`attach_cpts`]: the DAG plus every `(node, parent config)` row
/// that had zero estimated mass and was set to uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct AttachedDag {
    pub dag: DiscreteDag,
    pub uniform_rows: Vec<(usize, usize)>,
}

/// Fills CPTs as `P(x_j, p_j) / P(p_j)` from marginals of size at most `Δ + 1`.
pub fn attach_cpts(skeleton: &Skeleton, provider: &dyn MarginalProvider) -> Result<AttachedDag> {
    let cards = provider.cards().to_vec();
    if cards.len() != skeleton.n() {
        return Err(Error::ShapeMismatch(format!(
            "skeleton has {} nodes, provider {}",
            skeleton.n(),
            cards.len()
        )));
    }
    let mut cpts = Vec::with_capacity(cards.len());
    let mut uniform_rows = Vec::new();
    for (j, ps) in skeleton.parents.iter().enumerate() {
        if ps.iter().any(|&p| p >= j) {
            return Err(Error::InvalidParameter(format!(
                "parents of x{} are not predecessors",
                j + 1
            )));
        }
        let d = cards[j];
        let mut fam = ps.clone();
        fam.push(j);
        let family = provider.table(&fam)?;
        let context = if ps.is_empty() {
            None
        } else {
            Some(provider.table(ps)?)
        };
        let rows = family.probs().len() / d;
        let mut cpt = Vec::with_capacity(rows);
        for pc in 0..rows {
            let mass = context.as_ref().map_or(1.0, |c| c.probs()[pc]);
            let joint_row = &family.probs()[pc * d..(pc + 1) * d];
            let row_sum: f64 = joint_row.iter().sum();
            if mass > 0.0 && row_sum > 0.0 {
                // quotient by P(p_j), renormalized against rounding
                let row: Vec<f64> = joint_row.iter().map(|p| p / mass).collect();
                let s: f64 = row.iter().sum();
                cpt.push(row.into_iter().map(|p| p / s).collect());
            } else {
                uniform_rows.push((j, pc));
                cpt.push(vec![1.0 / d as f64; d]);
            }
        }
        cpts.push(cpt);
    }
    let dag = DiscreteDag::new(cards, skeleton.delta, skeleton.parents.clone(), cpts)?;
    Ok(AttachedDag { dag, uniform_rows })
}

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solve::{nested_policy, solve_holistic};
use super::{MultistageProblem, NodeValue, Policy};
use crate::ambiguity::{AmbiguitySpec, FiniteUtilitySet};
use crate::lp::Relation;
use crate::utility::UtilityFunction;
use crate::worst_case::WorstCaseUtility;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Worst case chosen node by node after observing the state.
    Nested,
    /// One member per stage, fixed before any state is observed.
    SequenceGlobal,
}

fn check_decisions(problem: &MultistageProblem, decisions: &[Vec<f64>]) -> Result<()> {
    let tree = problem.tree();
    if decisions.len() != tree.len() {
        return Err(Error::InvalidInput(format!("{} decision vectors for {} nodes", decisions.len(), tree.len())));
    }
    for s in tree.non_leaves() {
        if decisions[s].len() != problem.decision_box(s).dim() {
            return Err(Error::InvalidInput(format!("node {s}: decision has the wrong dimension")));
        }
    }
    let v = problem.max_violation(decisions);
    if v > 1e-7 {
        return Err(Error::InvalidInput(format!("decisions violate the constraints by {v}")));
    }
    Ok(())
}

/// The shared finite set of every stage, if the problem is state independent.
fn stage_sets(problem: &MultistageProblem) -> Result<Vec<FiniteUtilitySet>> {
    let tree = problem.tree();
    let mut sets: Vec<Option<FiniteUtilitySet>> = vec![None; tree.horizon()];
    for s in tree.non_leaves() {
        let AmbiguitySpec::Finite(f) = problem.ambiguity().get(s).expect("checked at construction") else {
            return Err(Error::Unsupported("sequence-global evaluation needs finite sets".into()));
        };
        let slot = &mut sets[tree.stage(s)];
        match slot {
            None => *slot = Some(f.clone()),
            Some(g) if g.members() == f.members() => {}
            Some(_) => return Err(Error::Unsupported(format!("stage {} mixes different sets", tree.stage(s)))),
        }
    }
    sets.into_iter()
        .enumerate()
        .map(|(t, s)| s.ok_or_else(|| Error::InvalidInput(format!("stage {t} has no decision nodes"))))
        .collect()
}

/// `e[t][k] = sum_{s at stage t} p_s E[u_k(h) | s]`.
pub(crate) fn stage_expectations(problem: &MultistageProblem, decisions: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let tree = problem.tree();
    let sets = stage_sets(problem)?;
    let mut e: Vec<Vec<f64>> = sets.iter().map(|f| vec![0.0; f.members().len()]).collect();
    for s in tree.non_leaves() {
        let t = tree.stage(s);
        let outcomes = problem.child_outcomes(s, &decisions[s]);
        for (k, u) in sets[t].members().iter().enumerate() {
            e[t][k] += tree.unconditional_prob(s) * outcomes.iter().map(|&(h, q)| q * u.value(h)).sum::<f64>();
        }
    }
    Ok(e)
}

/// Worst-case value of fixed decisions.
pub fn evaluate_policy_worst_case(problem: &MultistageProblem, decisions: &[Vec<f64>], mode: EvalMode) -> Result<f64> {
    check_decisions(problem, decisions)?;
    match mode {
        EvalMode::Nested => Ok(nested_policy(problem, decisions.to_vec())?.value),
        EvalMode::SequenceGlobal => {
            let e = stage_expectations(problem, decisions)?;
            let count = e.iter().try_fold(1usize, |acc, v| acc.checked_mul(v.len())).unwrap_or(usize::MAX);
            if count > 1_000_000 {
                return Err(Error::Unsupported(format!("{count} member sequences is too many to enumerate")));
            }
            let mut best = f64::INFINITY;
            let mut idx = vec![0usize; e.len()];
            for _ in 0..count {
                best = best.min(idx.iter().enumerate().map(|(t, &k)| e[t][k]).sum());
                for t in (0..idx.len()).rev() {
                    idx[t] += 1;
                    if idx[t] < e[t].len() {
                        break;
                    }
                    idx[t] = 0;
                }
            }
            Ok(best)
        }
    }
}

/// Lattice points of `[lower, upper]` with spacing `step`, upper end included.
fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    if hi - v[n] > 1e-12 {
        v.push(hi);
    }
    v
}

/// Nested maximin over finite sets by exhaustive search on a lattice of
/// spacing `step`, node by node. Needs finite boxes, at most three decision
/// components per node and no constraint linking a node to its parent.
pub fn solve_finite_grid(problem: &MultistageProblem, step: f64) -> Result<Policy> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("lattice step must be positive, got {step}")));
    }
    let tree = problem.tree();
    let mut decisions = vec![Vec::new(); tree.len()];
    let mut per_node = BTreeMap::new();
    let mut value = 0.0;
    for s in tree.non_leaves() {
        let AmbiguitySpec::Finite(set) = problem.ambiguity().get(s).expect("checked at construction") else {
            return Err(Error::Unsupported(format!("node {s}: lattice search needs a finite set")));
        };
        let bx = problem.decision_box(s);
        let cons = problem.constraints(s);
        if bx.dim() > 3 || cons.iter().any(|c| !c.parent.is_empty()) {
            return Err(Error::Unsupported(format!("node {s}: lattice search needs decoupled nodes of dimension <= 3")));
        }
        if bx.lower.iter().chain(&bx.upper).any(|v| !v.is_finite()) {
            return Err(Error::Unsupported(format!("node {s}: lattice search needs a bounded box")));
        }
        let axes: Vec<Vec<f64>> = (0..bx.dim()).map(|j| axis(bx.lower[j], bx.upper[j], step)).collect();
        let total = axes.iter().map(Vec::len).product::<usize>();
        if total > 20_000_000 {
            return Err(Error::Unsupported(format!("node {s}: {total} lattice points")));
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        let mut idx = vec![0usize; axes.len()];
        let mut x = vec![0.0; axes.len()];
        for _ in 0..total {
            for (j, &k) in idx.iter().enumerate() {
                x[j] = axes[j][k];
            }
            let feasible = cons.iter().all(|c| {
                let act: f64 = c.own.iter().map(|&(j, a)| a * x[j]).sum();
                let tol = 1e-9 * (1.0 + c.rhs.abs());
                match c.relation {
                    Relation::Le => act <= c.rhs + tol,
                    Relation::Ge => act >= c.rhs - tol,
                    Relation::Eq => (act - c.rhs).abs() <= tol,
                }
            });
            if feasible {
                let outcomes = problem.child_outcomes(s, &x);
                let mut worst = (f64::INFINITY, 0);
                for (k, u) in set.members().iter().enumerate() {
                    let v: f64 = outcomes.iter().map(|&(h, q)| q * u.value(h)).sum();
                    if v < worst.0 - 1e-12 {
                        worst = (v, k);
                    }
                }
                if best.as_ref().is_none_or(|b| worst.0 > b.0 + 1e-12) {
                    best = Some((worst.0, worst.1, x.clone()));
                }
            }
            for j in (0..idx.len()).rev() {
                idx[j] += 1;
                if idx[j] < axes[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
        let (v, k, x) =
            best.ok_or_else(|| Error::InfeasibleNode { node: s, reason: "no lattice point is feasible".into() })?;
        value += tree.unconditional_prob(s) * v;
        decisions[s] = x;
        per_node.insert(s, NodeValue { value: v, utility: WorstCaseUtility::Member(k) });
    }
    Ok(Policy { decisions, value, per_node, lp_objective: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiscrepancy {
    pub node: usize,
    pub stage: usize,
    /// Optimal value of the subtree problem re-solved from this node.
    pub subtree_optimal: f64,
    /// Value the policy achieves on the same subtree.
    pub policy_value: f64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConsistencyReport {
    pub entries: Vec<NodeDiscrepancy>,
    pub max_discrepancy: f64,
    pub tol: f64,
    /// Nested worst case of the policy's decisions.
    pub nested_value: f64,
    /// Worst fixed sequence of stage utilities, when the sets are finite and
    /// the same at every node of a stage.
    pub sequence_global_value: Option<f64>,
}

impl TimeConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.max_discrepancy <= self.tol
    }
}

/// Lattice spacing used for subtrees with finite sets.
const FINITE_STEP: f64 = 1e-3;

/// Re-solves the subtree below every decision node with the ancestors'
/// decisions fixed and compares with what the policy achieves there.
pub fn check_time_consistency(problem: &MultistageProblem, policy: &Policy, tol: f64) -> Result<TimeConsistencyReport> {
    check_decisions(problem, &policy.decisions)?;
    let tree = problem.tree();
    let nodes: Vec<usize> = tree.non_leaves().collect();
    let entries = nodes
        .par_iter()
        .map(|&s| -> Result<NodeDiscrepancy> {
            let (sub, ids) = problem.subproblem(s, &policy.decisions)?;
            let all_finite = sub.ambiguity().iter().all(|(_, spec)| matches!(spec, AmbiguitySpec::Finite(_)));
            let subtree_optimal = if all_finite {
                solve_finite_grid(&sub, FINITE_STEP)?.value
            } else {
                solve_holistic(&sub)?.value
            };
            let restricted: Vec<Vec<f64>> = ids.iter().map(|&o| policy.decisions[o].clone()).collect();
            let policy_value = nested_policy(&sub, restricted)?.value;
            Ok(NodeDiscrepancy {
                node: s,
                stage: tree.stage(s),
                subtree_optimal,
                policy_value,
                discrepancy: subtree_optimal - policy_value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_discrepancy = entries.iter().map(|e| e.discrepancy.abs()).fold(0.0, f64::max);
    let nested_value = evaluate_policy_worst_case(problem, &policy.decisions, EvalMode::Nested)?;
    let sequence_global_value = match evaluate_policy_worst_case(problem, &policy.decisions, EvalMode::SequenceGlobal) {
        Ok(v) => Some(v),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(TimeConsistencyReport { entries, max_discrepancy, tol, nested_value, sequence_global_value })
}

//! The multistage maximin problem on a scenario tree.

mod counterexample;
mod evaluate;
mod solve;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ambiguity::StateDependentAmbiguity;
use crate::lp::{self, LpBuilder, LpStatus, Relation, Sense};
use crate::tree::ScenarioTree;
use crate::utility::Grid;
use crate::worst_case::WorstCaseUtility;
use crate::{Error, Result};

pub use counterexample::{
    counterexample_problem, solve_counterexample, solve_counterexample_with_step, CounterexampleReport, ReportLine,
};
pub use evaluate::{
    check_time_consistency, evaluate_policy_worst_case, solve_finite_grid, EvalMode, NodeDiscrepancy,
    TimeConsistencyReport,
};
pub use solve::{
    solve_holistic, solve_holistic_kantorovich, solve_holistic_pairwise, solve_nominal, tangent_envelope,
};

/// Reward at a node as an affine function of its parent's decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineReward {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl AffineReward {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.offset + self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Range over the box `[lower, upper]`.
    pub fn range(&self, lower: &[f64], upper: &[f64]) -> (f64, f64) {
        let mut lo = self.offset;
        let mut hi = self.offset;
        for ((&c, &l), &u) in self.coeffs.iter().zip(lower).zip(upper) {
            if c == 0.0 {
                continue;
            }
            let (a, b) = (c * l, c * u);
            lo += a.min(b);
            hi += a.max(b);
        }
        (lo, hi)
    }
}

/// A linear row over a node's decision and its parent's decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConstraint {
    pub own: Vec<(usize, f64)>,
    pub parent: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Box bounds of a node's decision vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DecisionBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || l.is_nan()) {
            return Err(Error::InvalidInput("decision box needs lower <= upper componentwise".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Range of `r` over the box intersected with the node's rows that do not
/// involve the parent. Plain interval arithmetic when there are none.
fn reward_range(r: &AffineReward, bx: &DecisionBox, rows: &[NodeConstraint]) -> Result<(f64, f64)> {
    let own: Vec<&NodeConstraint> = rows.iter().filter(|c| c.parent.is_empty()).collect();
    if own.is_empty() || r.coeffs.iter().all(|&c| c == 0.0) {
        return Ok(r.range(&bx.lower, &bx.upper));
    }
    let mut ends = [0.0; 2];
    for (k, sense) in [Sense::Minimize, Sense::Maximize].into_iter().enumerate() {
        let mut b = LpBuilder::new(sense);
        for j in 0..bx.dim() {
            b.add_var(bx.lower[j], bx.upper[j], r.coeffs[j]);
        }
        for c in &own {
            b.add_constraint(c.own.clone(), c.relation, c.rhs);
        }
        let sol = lp::solve(&b.build()?)?;
        ends[k] = match sol.status {
            LpStatus::Optimal => sol.objective_value + r.offset,
            LpStatus::Infeasible => return Err(Error::InvalidInput("decision constraints are infeasible".into())),
            LpStatus::Unbounded => if k == 0 { f64::NEG_INFINITY } else { f64::INFINITY },
        };
    }
    Ok((ends[0], ends[1]))
}

#[derive(Debug, Clone)]
pub struct MultistageProblem {
    tree: ScenarioTree,
    boxes: Vec<DecisionBox>,
    rewards: Vec<Option<AffineReward>>,
    constraints: Vec<Vec<NodeConstraint>>,
    ambiguity: StateDependentAmbiguity,
    grid: Grid,
}

impl MultistageProblem {
    /// All per-node vectors are indexed by node id. Leaves carry empty
    /// boxes and no constraints; the root carries no reward.
    pub fn new(
        tree: ScenarioTree,
        boxes: Vec<DecisionBox>,
        rewards: Vec<Option<AffineReward>>,
        constraints: Vec<Vec<NodeConstraint>>,
        ambiguity: StateDependentAmbiguity,
        grid: Grid,
    ) -> Result<Self> {
        let n = tree.len();
        if boxes.len() != n || rewards.len() != n || constraints.len() != n {
            return Err(Error::InvalidInput(format!("per-node data must have {n} entries")));
        }
        for s in 0..n {
            let dim = boxes[s].dim();
            if tree.is_leaf(s) && (dim != 0 || !constraints[s].is_empty()) {
                return Err(Error::InvalidInput(format!("leaf {s} cannot carry decisions")));
            }
            let pdim = tree.parent(s).map(|p| boxes[p].dim());
            match (&rewards[s], pdim) {
                (None, None) => {}
                (Some(_), None) => return Err(Error::InvalidInput("the root has no reward".into())),
                (None, Some(_)) => return Err(Error::InvalidInput(format!("node {s} has no reward map"))),
                (Some(r), Some(pd)) => {
                    if r.coeffs.len() != pd || r.coeffs.iter().chain([&r.offset]).any(|c| !c.is_finite()) {
                        return Err(Error::InvalidInput(format!("node {s}: malformed reward map")));
                    }
                    let p = tree.parent(s).unwrap();
                    let (lo, hi) = reward_range(r, &boxes[p], &constraints[p])
                        .map_err(|e| Error::InvalidInput(format!("node {p}: {e}")))?;
                    if lo.is_nan() || lo < grid.a() - 1e-9 || hi > grid.b() + 1e-9 {
                        return Err(Error::InvalidInput(format!(
                            "node {s}: reward range [{lo}, {hi}] leaves [{}, {}]",
                            grid.a(),
                            grid.b()
                        )));
                    }
                }
            }
            for c in &constraints[s] {
                let bad_own = c.own.iter().any(|&(j, a)| j >= dim || !a.is_finite());
                let bad_par = match pdim {
                    None => !c.parent.is_empty(),
                    Some(pd) => c.parent.iter().any(|&(j, a)| j >= pd || !a.is_finite()),
                };
                if bad_own || bad_par || !c.rhs.is_finite() {
                    return Err(Error::InvalidInput(format!("node {s}: malformed constraint")));
                }
            }
        }
        for s in tree.non_leaves() {
            if ambiguity.get(s).is_none() {
                return Err(Error::InvalidInput(format!("node {s} has no ambiguity set")));
            }
        }
        Ok(Self { tree, boxes, rewards, constraints, ambiguity, grid })
    }

    pub fn tree(&self) -> &ScenarioTree {
        &self.tree
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ambiguity(&self) -> &StateDependentAmbiguity {
        &self.ambiguity
    }

    pub fn decision_box(&self, s: usize) -> &DecisionBox {
        &self.boxes[s]
    }

    pub fn reward(&self, s: usize) -> Option<&AffineReward> {
        self.rewards[s].as_ref()
    }

    pub fn constraints(&self, s: usize) -> &[NodeConstraint] {
        &self.constraints[s]
    }

    /// Same problem with other ambiguity sets.
    pub fn with_ambiguity(&self, ambiguity: StateDependentAmbiguity) -> Result<Self> {
        Self::new(
            self.tree.clone(),
            self.boxes.clone(),
            self.rewards.clone(),
            self.constraints.clone(),
            ambiguity,
            self.grid.clone(),
        )
    }

    /// `(reward, conditional probability)` of each child of `s` under `x(s)`.
    pub fn child_outcomes(&self, s: usize, x: &[f64]) -> Vec<(f64, f64)> {
        let (a, b) = (self.grid.a(), self.grid.b());
        self.tree
            .children(s)
            .iter()
            .map(|&i| {
                let h = self.rewards[i].as_ref().expect("child has a reward").eval(x);
                (h.clamp(a, b), self.tree.nodes()[i].prob_conditional)
            })
            .collect()
    }

    /// Largest violation of the node constraints and boxes by `decisions`.
    pub fn max_violation(&self, decisions: &[Vec<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for s in self.tree.non_leaves() {
            let x = &decisions[s];
            let bx = &self.boxes[s];
            for j in 0..bx.dim() {
                worst = worst.max(bx.lower[j] - x[j]).max(x[j] - bx.upper[j]);
            }
            let px = self.tree.parent(s).map(|p| &decisions[p]);
            for c in &self.constraints[s] {
                let mut act: f64 = c.own.iter().map(|&(j, a)| a * x[j]).sum();
                if let Some(px) = px {
                    act += c.parent.iter().map(|&(j, a)| a * px[j]).sum::<f64>();
                }
                let v = match c.relation {
                    Relation::Le => act - c.rhs,
                    Relation::Ge => c.rhs - act,
                    Relation::Eq => (act - c.rhs).abs(),
                };
                worst = worst.max(v / (1.0 + c.rhs.abs()));
            }
        }
        worst
    }

    /// The problem on the subtree rooted at `s`, with the ancestors' decisions
    /// taken from `decisions` and folded into the root's constraints.
    pub fn subproblem(&self, s: usize, decisions: &[Vec<f64>]) -> Result<(Self, Vec<usize>)> {
        let sub = self.tree.subtree(s)?;
        let ids = sub.original_ids;
        let mut constraints: Vec<Vec<NodeConstraint>> = ids.iter().map(|&o| self.constraints[o].clone()).collect();
        if let Some(p) = self.tree.parent(s) {
            for c in constraints[0].iter_mut() {
                let fixed: f64 = c.parent.iter().map(|&(j, a)| a * decisions[p][j]).sum();
                c.rhs -= fixed;
                c.parent.clear();
            }
        }
        let mut rewards: Vec<Option<AffineReward>> = ids.iter().map(|&o| self.rewards[o].clone()).collect();
        rewards[0] = None;
        let problem = Self::new(
            sub.tree,
            ids.iter().map(|&o| self.boxes[o].clone()).collect(),
            rewards,
            constraints,
            self.ambiguity.restricted(&ids),
            self.grid.clone(),
        )?;
        Ok((problem, ids))
    }
}

/// Worst-case conditional expected utility at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeValue {
    pub value: f64,
    pub utility: WorstCaseUtility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Indexed by node id; leaves have empty vectors.
    pub decisions: Vec<Vec<f64>>,
    /// `sum_s p_s * per_node[s].value`.
    pub value: f64,
    pub per_node: BTreeMap<usize, NodeValue>,
    /// Objective of the program the decisions came from, if any.
    #[serde(default)]
    pub lp_objective: Option<f64>,
}

impl Policy {
    /// `node,stage,decision,value` with the decision components joined by `;`.
    pub fn to_csv(&self, tree: &ScenarioTree) -> String {
        let mut out = String::from("node,stage,decision,value\n");
        for (&s, nv) in &self.per_node {
            let d: Vec<String> = self.decisions[s].iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{s},{},{},{}", tree.stage(s), d.join(";"), nv.value);
        }
        out
    }

    /// Reads the decision column of [`Policy::to_csv`] output.
    pub fn decisions_from_csv(text: &str, num_nodes: usize) -> Result<Vec<Vec<f64>>> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut decisions = vec![Vec::new(); num_nodes];
        for rec in rdr.records() {
            let rec = rec?;
            let bad = |m: &str| Error::InvalidInput(format!("policy line {:?}: {m}", rec.position().map(|p| p.line())));
            let node: usize = rec.get(0).ok_or_else(|| bad("missing node"))?.trim().parse().map_err(|_| bad("bad node id"))?;
            if node >= num_nodes {
                return Err(bad("node id out of range"));
            }
            let field = rec.get(2).ok_or_else(|| bad("missing decision"))?.trim();
            decisions[node] = if field.is_empty() {
                Vec::new()
            } else {
                field.split(';').map(|v| v.trim().parse::<f64>().map_err(|_| bad("bad decision value"))).collect::<Result<_>>()?
            };
        }
        Ok(decisions)
    }
}

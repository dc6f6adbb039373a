use std::fmt;

use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate_policy_worst_case, solve_finite_grid, stage_expectations, EvalMode};
use super::solve::nested_policy;
use super::{AffineReward, DecisionBox, MultistageProblem, NodeConstraint};
use crate::ambiguity::{AmbiguitySpec, FiniteUtilitySet, StateDependentAmbiguity};
use crate::lp::Relation;
use crate::tree::{NodeSpec, ScenarioTree};
use crate::utility::{ClosedFormUtility, Grid, UtilityFunction};
use crate::Result;

/// Two stages, two assets, two branches per node, every branch with
/// probability 1/2. The set is `{min(3y, y/2 + 1/2), 2y - y^2}` everywhere
/// and each node invests a unit budget.
pub fn counterexample_problem() -> Result<MultistageProblem> {
    let spec = |parent, stage, realization: [f64; 2]| NodeSpec {
        parent,
        stage,
        prob_conditional: if parent.is_some() { 0.5 } else { 1.0 },
        realization: realization.to_vec(),
    };
    let tree = ScenarioTree::from_nodes(
        2,
        vec!["r1".into(), "r2".into()],
        vec![
            spec(None, 0, [0.0, 0.0]),
            spec(Some(0), 1, [0.0, 0.0]),
            spec(Some(0), 1, [0.8, 0.2]),
            spec(Some(1), 2, [0.6, 0.2]),
            spec(Some(1), 2, [0.6, 0.8]),
            spec(Some(2), 2, [0.4, 0.6]),
            spec(Some(2), 2, [1.0, 0.6]),
        ],
    )?;
    let set = FiniteUtilitySet::new(
        vec![
            ClosedFormUtility::min_affine(vec![(3.0, 0.0), (0.5, 0.5)])?.into(),
            ClosedFormUtility::quadratic().into(),
        ],
        false,
    )?;
    let grid = Grid::uniform(0.0, 1.0, 2)?;
    let n = tree.len();
    let mut boxes = vec![DecisionBox::default(); n];
    let mut constraints = vec![Vec::new(); n];
    let mut rewards = vec![None; n];
    let mut assignment = std::collections::BTreeMap::new();
    for s in tree.non_leaves() {
        boxes[s] = DecisionBox::new(vec![0.0; 2], vec![1.0; 2])?;
        constraints[s].push(NodeConstraint {
            own: vec![(0, 1.0), (1, 1.0)],
            parent: vec![],
            relation: Relation::Eq,
            rhs: 1.0,
        });
        assignment.insert(s, AmbiguitySpec::Finite(set.clone()));
    }
    for s in 1..n {
        rewards[s] = Some(AffineReward { coeffs: tree.nodes()[s].realization.clone(), offset: 0.0 });
    }
    let ambiguity = StateDependentAmbiguity::new(&tree, &grid, assignment)?;
    MultistageProblem::new(tree, boxes, rewards, constraints, ambiguity, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tol: f64,
}

impl ReportLine {
    pub fn pass(&self) -> bool {
        (self.value - self.expected).abs() <= self.tol
    }
}

/// Global versus nested worst cases at the all-first-asset decisions, and
/// the global and local maximin decisions of the second stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub f1: f64,
    pub f2: f64,
    pub f: f64,
    /// Local worst cases at the two stage-1 nodes.
    pub f2_hat: [f64; 2],
    pub f_hat: f64,
    pub v_linear: f64,
    pub v_quad: f64,
    pub v_int: f64,
    pub v2: f64,
    /// First-asset weights at the two stage-1 nodes.
    pub v2_argmax: [f64; 2],
    pub v2_hat: [f64; 2],
    pub v2_hat_argmax: [[f64; 2]; 2],
    pub step: f64,
}

impl CounterexampleReport {
    pub fn lines(&self) -> Vec<ReportLine> {
        let exact = 1e-9;
        let grid = 2e-3;
        let line = |name: &str, value, expected, tol| ReportLine { name: name.into(), value, expected, tol };
        vec![
            line("f1", self.f1, 0.45, exact),
            line("f2", self.f2, 0.825, exact),
            line("f", self.f, 1.275, exact),
            line("f2_hat(r11)", self.f2_hat[0], 0.8, exact),
            line("f2_hat(r12)", self.f2_hat[1], 0.82, exact),
            line("f_hat", self.f_hat, 1.26, exact),
            line("v_linear", self.v_linear, 0.825, grid),
            line("v_quad", self.v_quad, 0.848, grid),
            line("v_int", self.v_int, 0.82, grid),
            line("v2", self.v2, 0.825, grid),
            line("v2 x(r11)", self.v2_argmax[0], 1.0, grid),
            line("v2 x(r12)", self.v2_argmax[1], 1.0, grid),
            line("v2_hat(r11)", self.v2_hat[0], 0.8, grid),
            line("v2_hat(r12)", self.v2_hat[1], 0.84, grid),
            line("v2_hat x(r11)", self.v2_hat_argmax[0][0], 1.0, grid),
            line("v2_hat x(r12)", self.v2_hat_argmax[1][0], 0.8, grid),
            line("gap f - f_hat", self.f - self.f_hat, 0.015, 1e-3),
        ]
    }

    pub fn all_pass(&self) -> bool {
        self.lines().iter().all(ReportLine::pass)
    }
}

impl fmt::Display for CounterexampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.lines() {
            let tag = if l.pass() { "ok" } else { "MISMATCH" };
            writeln!(f, "{:<14} {:>12.6}  expected {:>8.4}  tol {:.0e}  {tag}", l.name, l.value, l.expected, l.tol)?;
        }
        Ok(())
    }
}

pub fn solve_counterexample() -> Result<CounterexampleReport> {
    solve_counterexample_with_step(1e-3)
}

/// Same report with lattice spacing `step` for the grid searches.
pub fn solve_counterexample_with_step(step: f64) -> Result<CounterexampleReport> {
    let problem = counterexample_problem()?;
    let tree = problem.tree();
    let first = vec![1.0, 0.0];
    let fixed: Vec<Vec<f64>> =
        (0..tree.len()).map(|s| if tree.is_leaf(s) { Vec::new() } else { first.clone() }).collect();

    let e = stage_expectations(&problem, &fixed)?;
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let f1 = min(&e[0]);
    let f2 = min(&e[1]);
    let f = evaluate_policy_worst_case(&problem, &fixed, EvalMode::SequenceGlobal)?;
    let nested = nested_policy(&problem, fixed.clone())?;
    let f2_hat = [nested.per_node[&1].value, nested.per_node[&2].value];
    let f_hat = evaluate_policy_worst_case(&problem, &fixed, EvalMode::Nested)?;

    // Stage-2 expectation of member k, split into the parts of nodes 1 and 2
    // as functions of the first-asset weight there.
    let AmbiguitySpec::Finite(set) = problem.ambiguity().get(1).unwrap() else { unreachable!() };
    let members = set.members();
    let part = |s: usize, w: f64, k: usize| -> f64 {
        let p = tree.unconditional_prob(s);
        p * problem.child_outcomes(s, &[w, 1.0 - w]).iter().map(|&(h, q)| q * members[k].value(h)).sum::<f64>()
    };
    let n = (1.0 / step).round() as usize;
    let w: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let a: Vec<[f64; 2]> = w.iter().map(|&x| [part(1, x, 0), part(1, x, 1)]).collect();
    let b: Vec<[f64; 2]> = w.iter().map(|&y| [part(2, y, 0), part(2, y, 1)]).collect();

    let mut v_linear = f64::NEG_INFINITY;
    let mut v_quad = f64::NEG_INFINITY;
    let mut v2 = (f64::NEG_INFINITY, [0.0; 2]);
    let mut v_int = f64::NEG_INFINITY;
    for (i, ai) in a.iter().enumerate() {
        let mut prev: Option<f64> = None;
        for (j, bj) in b.iter().enumerate() {
            let lin = ai[0] + bj[0];
            let quad = ai[1] + bj[1];
            v_linear = v_linear.max(lin);
            v_quad = v_quad.max(quad);
            if lin.min(quad) > v2.0 + 1e-12 {
                v2 = (lin.min(quad), [w[i], w[j]]);
            }
            let d = lin - quad;
            if d == 0.0 {
                v_int = v_int.max(lin);
            } else if let Some(pd) = prev.filter(|pd| pd * d < 0.0) {
                // The pieces cross between w[j-1] and w[j].
                let y = w[j - 1] + (w[j] - w[j - 1]) * pd / (pd - d);
                let at = |k| ai[k] + part(2, y, k);
                v_int = v_int.max(at(0).min(at(1)));
            }
            prev = Some(d);
        }
    }

    let mut v2_hat = [0.0; 2];
    let mut v2_hat_argmax = [[0.0; 2]; 2];
    for (k, s) in [1usize, 2].into_iter().enumerate() {
        let (sub, _) = problem.subproblem(s, &fixed)?;
        let local = solve_finite_grid(&sub, step)?;
        v2_hat[k] = local.value;
        v2_hat_argmax[k] = [local.decisions[0][0], local.decisions[0][1]];
    }

    Ok(CounterexampleReport {
        f1,
        f2,
        f,
        f2_hat,
        f_hat,
        v_linear,
        v_quad,
        v_int,
        v2: v2.0,
        v2_argmax: v2.1,
        v2_hat,
        v2_hat_argmax,
        step,
    })
}

use std::collections::BTreeMap;

use super::{MultistageProblem, NodeValue, Policy};
use crate::ambiguity::{feasibility_check, AmbiguitySpec, Feasibility};
use crate::lp::{self, dualize, LpBuilder, LpStatus, Relation, Sense};
use crate::utility::{ClosedFormUtility, Grid, PiecewiseLinearUtility, UtilityFunction};
use crate::worst_case::{inner_program, worst_case, OutcomeDistribution, WorstCaseUtility};
use crate::{Error, Result};

fn add_decisions(b: &mut LpBuilder, problem: &MultistageProblem) -> Vec<Vec<usize>> {
    let tree = problem.tree();
    let xvars: Vec<Vec<usize>> = (0..tree.len())
        .map(|s| {
            let bx = problem.decision_box(s);
            (0..bx.dim()).map(|j| b.add_var(bx.lower[j], bx.upper[j], 0.0)).collect()
        })
        .collect();
    for s in 0..tree.len() {
        add_node_rows(b, problem, &xvars, s);
    }
    xvars
}

fn add_node_rows(b: &mut LpBuilder, problem: &MultistageProblem, xvars: &[Vec<usize>], s: usize) {
    let parent = problem.tree().parent(s);
    for c in problem.constraints(s) {
        let mut row: Vec<(usize, f64)> = c.own.iter().map(|&(j, a)| (xvars[s][j], a)).collect();
        if let Some(p) = parent {
            row.extend(c.parent.iter().map(|&(j, a)| (xvars[p][j], a)));
        }
        b.add_constraint(row, c.relation, c.rhs);
    }
}

/// Finds the first node, in id order, at which the decision constraints
/// alone become infeasible.
fn diagnose_infeasible(problem: &MultistageProblem) -> Error {
    let tree = problem.tree();
    let mut b = LpBuilder::new(Sense::Maximize);
    let xvars: Vec<Vec<usize>> = (0..tree.len())
        .map(|s| {
            let bx = problem.decision_box(s);
            (0..bx.dim()).map(|j| b.add_var(bx.lower[j], bx.upper[j], 0.0)).collect()
        })
        .collect();
    for s in 0..tree.len() {
        add_node_rows(&mut b, problem, &xvars, s);
        let status = b.clone().build().ok().and_then(|lp| lp::solve(&lp).ok()).map(|sol| sol.status);
        if status == Some(LpStatus::Infeasible) {
            return Error::InfeasibleNode { node: s, reason: "decision constraints have no solution".into() };
        }
    }
    Error::Infeasible("the maximin program has no feasible point".into())
}

fn decisions_from(x: &[f64], xvars: &[Vec<usize>]) -> Vec<Vec<f64>> {
    xvars.iter().map(|v| v.iter().map(|&j| x[j]).collect()).collect()
}

/// Per-node worst cases under fixed decisions, and their weighted sum.
pub(crate) fn nested_policy(problem: &MultistageProblem, decisions: Vec<Vec<f64>>) -> Result<Policy> {
    let tree = problem.tree();
    let mut per_node = BTreeMap::new();
    let mut value = 0.0;
    for s in tree.non_leaves() {
        let dist = OutcomeDistribution::new(problem.child_outcomes(s, &decisions[s]))?;
        let spec = problem.ambiguity().get(s).expect("checked at construction");
        let wc = worst_case(&dist, spec, problem.grid()).map_err(|e| match e {
            Error::EmptyAmbiguitySet(reason) => Error::InfeasibleNode { node: s, reason },
            other => other,
        })?;
        value += tree.unconditional_prob(s) * wc.value;
        per_node.insert(s, NodeValue { value: wc.value, utility: wc.utility });
    }
    Ok(Policy { decisions, value, per_node, lp_objective: None })
}

/// The maximin program as one LP: each node's inner minimization is replaced
/// by its LP dual, with the child rewards moved into the dual constraints.
/// Nodes may mix Kantorovich and pairwise sets.
pub fn solve_holistic(problem: &MultistageProblem) -> Result<Policy> {
    let tree = problem.tree();
    let grid = problem.grid();
    for s in tree.non_leaves() {
        let spec = problem.ambiguity().get(s).expect("checked at construction");
        if matches!(spec, AmbiguitySpec::Finite(_)) {
            return Err(Error::Unsupported(format!("node {s}: finite sets have no holistic LP")));
        }
        if feasibility_check(spec, grid, 0.0)? == Feasibility::Empty {
            return Err(Error::InfeasibleNode { node: s, reason: "ambiguity set is empty".into() });
        }
    }
    let mut b = LpBuilder::new(Sense::Maximize);
    let xvars = add_decisions(&mut b, problem);
    for s in tree.non_leaves() {
        let children = tree.children(s);
        let outcomes: Vec<(f64, f64)> = children
            .iter()
            .map(|&i| (problem.reward(i).expect("child reward").offset, tree.nodes()[i].prob_conditional))
            .collect();
        let spec = problem.ambiguity().get(s).expect("checked at construction");
        let (inner, blk) = inner_program(&outcomes, grid, spec)?;
        let dual = dualize(&inner)?;
        let (_, rows) = b.append(&dual.lp, tree.unconditional_prob(s));
        for (k, &i) in children.iter().enumerate() {
            let q = outcomes[k].1;
            let row = rows[dual.map.var_row[blk.eps[k]]];
            let coeffs = &problem.reward(i).expect("child reward").coeffs;
            let terms = coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, &c)| (xvars[s][j], -q * c));
            b.constraint_mut(row).row.extend(terms);
        }
    }
    let sol = lp::solve(&b.build()?)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(diagnose_infeasible(problem)),
        LpStatus::Unbounded => return Err(Error::Unbounded("holistic program is unbounded".into())),
    }
    let mut policy = nested_policy(problem, decisions_from(&sol.primal, &xvars))?;
    policy.lp_objective = Some(sol.objective_value);
    if (policy.value - sol.objective_value).abs() > 1e-6 {
        log::warn!(
            "holistic objective {} differs from the node-wise worst cases {}",
            sol.objective_value,
            policy.value
        );
    }
    Ok(policy)
}

/// [`solve_holistic`] for problems whose sets are all Kantorovich balls.
pub fn solve_holistic_kantorovich(problem: &MultistageProblem) -> Result<Policy> {
    for (s, spec) in problem.ambiguity().iter() {
        if !matches!(spec, AmbiguitySpec::Kantorovich(_)) {
            return Err(Error::InvalidInput(format!("node {s} does not carry a Kantorovich ball")));
        }
    }
    solve_holistic(problem)
}

/// [`solve_holistic`] for problems whose sets all come from comparisons.
pub fn solve_holistic_pairwise(problem: &MultistageProblem) -> Result<Policy> {
    for (s, spec) in problem.ambiguity().iter() {
        if !matches!(spec, AmbiguitySpec::Pairwise(_)) {
            return Err(Error::InvalidInput(format!("node {s} does not carry pairwise comparisons")));
        }
    }
    solve_holistic(problem)
}

/// Affine pieces `(slope, intercept)` of a concave PL function, one per run
/// of equal slopes.
fn pieces(u: &PiecewiseLinearUtility) -> Vec<(f64, f64)> {
    let y = u.breakpoints();
    let v = u.values();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (j, s) in u.slopes().into_iter().enumerate() {
        if out.last().is_some_and(|&(prev, _)| (prev - s).abs() <= 1e-15) {
            continue;
        }
        out.push((s, v[j] - s * y[j]));
    }
    out
}

/// Expected-utility maximization with fixed concave PL utilities per node,
/// through an epigraph variable per child.
pub fn solve_nominal(
    problem: &MultistageProblem,
    utilities: &BTreeMap<usize, PiecewiseLinearUtility>,
) -> Result<Policy> {
    let tree = problem.tree();
    let (a, bnd) = (problem.grid().a(), problem.grid().b());
    for s in tree.non_leaves() {
        let u = utilities.get(&s).ok_or_else(|| Error::InvalidInput(format!("node {s} has no utility")))?;
        if !u.is_concave(1e-9) {
            return Err(Error::Unsupported(format!("node {s}: utility is not concave")));
        }
        if (u.grid().a() - a).abs() > 1e-12 || (u.grid().b() - bnd).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("node {s}: utility domain differs from the problem's")));
        }
    }
    let mut b = LpBuilder::new(Sense::Maximize);
    let xvars = add_decisions(&mut b, problem);
    for s in tree.non_leaves() {
        let lines = pieces(&utilities[&s]);
        for &i in tree.children(s) {
            let t = b.free_var(tree.unconditional_prob(i));
            let r = problem.reward(i).expect("child reward");
            for &(slope, icpt) in &lines {
                let mut row = vec![(t, 1.0)];
                row.extend(r.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, &c)| (xvars[s][j], -slope * c)));
                b.add_constraint(row, Relation::Le, slope * r.offset + icpt);
            }
        }
    }
    let sol = lp::solve(&b.build()?)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(diagnose_infeasible(problem)),
        LpStatus::Unbounded => return Err(Error::Unbounded("nominal program is unbounded".into())),
    }
    let decisions = decisions_from(&sol.primal, &xvars);
    let mut per_node = BTreeMap::new();
    let mut value = 0.0;
    for s in tree.non_leaves() {
        let u = &utilities[&s];
        let v: f64 = problem.child_outcomes(s, &decisions[s]).iter().map(|&(h, q)| q * u.value(h)).sum();
        value += tree.unconditional_prob(s) * v;
        per_node.insert(s, NodeValue { value: v, utility: WorstCaseUtility::PiecewiseLinear(u.clone()) });
    }
    Ok(Policy { decisions, value, per_node, lp_objective: Some(sol.objective_value) })
}

/// Lower envelope of the tangents of `u` at `points` equally spaced points,
/// as a PL function on the tangents' crossing points. It lies above `u`,
/// touches it at the tangent points and keeps `u(a) = 0`, `u(b) = 1`.
pub fn tangent_envelope(u: &ClosedFormUtility, points: usize) -> Result<PiecewiseLinearUtility> {
    let (a, b) = u.domain();
    let m = points.max(2);
    let lines: Vec<(f64, f64)> =
        (0..m).map(|k| u.tangent(if k + 1 == m { b } else { a + (b - a) * k as f64 / (m - 1) as f64 })).collect();
    let env = |x: f64| lines.iter().map(|&(s, c)| s * x + c).fold(f64::INFINITY, f64::min);
    let mut xs = vec![a];
    for w in lines.windows(2) {
        let ((s0, c0), (s1, c1)) = (w[0], w[1]);
        if s0 - s1 > 1e-12 {
            let x = (c1 - c0) / (s0 - s1);
            if x > xs[xs.len() - 1] + 1e-12 && x < b - 1e-12 {
                xs.push(x);
            }
        }
    }
    xs.push(b);
    let values = xs.iter().map(|&x| env(x)).collect();
    PiecewiseLinearUtility::new(Grid::new(xs)?, values)
}

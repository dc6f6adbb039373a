//! Random multistage problems for the integration tests.

use std::collections::BTreeMap;

use mspro::ambiguity::{elicit_pairwise, AmbiguitySpec, KantorovichBallSpec, StateDependentAmbiguity};
use mspro::lp::Relation;
use mspro::multistage::{AffineReward, DecisionBox, MultistageProblem, NodeConstraint};
use mspro::tree::{NodeSpec, ScenarioTree};
use mspro::utility::{ClosedFormUtility, Grid, PiecewiseLinearUtility};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SetKind {
    /// Balls of radius up to `max_radius` around random concave nominals.
    Kantorovich { max_radius: f64 },
    /// Up to `max_k` answers from random exponential utilities.
    Pairwise { max_k: usize },
}

/// Random tree with the given branching, one dummy series.
pub fn random_tree(branching: &[usize], rng: &mut impl Rng) -> ScenarioTree {
    let mut specs = vec![NodeSpec { parent: None, stage: 0, prob_conditional: 1.0, realization: vec![0.0] }];
    let mut frontier = vec![0usize];
    for (t, &b) in branching.iter().enumerate() {
        let mut next = Vec::new();
        for &p in &frontier {
            let w: Vec<f64> = (0..b).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = w.iter().sum();
            for wk in w {
                next.push(specs.len());
                specs.push(NodeSpec {
                    parent: Some(p),
                    stage: t + 1,
                    prob_conditional: wk / total,
                    realization: vec![rng.random_range(-1.0..1.0)],
                });
            }
        }
        frontier = next;
    }
    ScenarioTree::from_nodes(branching.len(), vec!["z".into()], specs).unwrap()
}

pub fn random_concave(grid: &Grid, rng: &mut impl Rng) -> PiecewiseLinearUtility {
    let n = grid.len();
    let mut slopes: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.05..1.0)).collect();
    slopes.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mass: f64 = (0..n - 1).map(|j| slopes[j] * grid.width(j + 1)).sum();
    let mut values = vec![0.0];
    for j in 0..n - 1 {
        values.push(values[j] + slopes[j] * grid.width(j + 1) / mass);
    }
    values[n - 1] = 1.0;
    PiecewiseLinearUtility::new(grid.clone(), values).unwrap()
}

/// Two decisions per node in `[0, 1]^2`. The root splits a unit budget, and
/// every other node spends at most `0.6 + 0.5 x_parent[0]`. Child rewards
/// are random affine maps into `[0, 1]`.
pub fn random_problem(branching: &[usize], n: usize, seed: u64, kind: SetKind) -> MultistageProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = random_tree(branching, &mut rng);
    let grid = Grid::uniform(0.0, 1.0, n).unwrap();
    let len = tree.len();
    let mut boxes = vec![DecisionBox::default(); len];
    let mut constraints = vec![Vec::new(); len];
    let mut rewards = vec![None; len];
    let mut assignment = BTreeMap::new();
    for s in tree.non_leaves() {
        boxes[s] = DecisionBox::new(vec![0.0; 2], vec![1.0; 2]).unwrap();
        let own = vec![(0, 1.0), (1, 1.0)];
        constraints[s].push(match tree.parent(s) {
            None => NodeConstraint { own, parent: vec![], relation: Relation::Eq, rhs: 1.0 },
            Some(_) => NodeConstraint { own, parent: vec![(0, -0.5)], relation: Relation::Le, rhs: 0.6 },
        });
        for &i in tree.children(s) {
            rewards[i] = Some(AffineReward {
                coeffs: vec![rng.random_range(0.0..0.45), rng.random_range(0.0..0.45)],
                offset: rng.random_range(0.0..0.1),
            });
        }
        let spec = match kind {
            SetKind::Kantorovich { max_radius } => {
                let nominal = random_concave(&grid, &mut rng);
                let radius = rng.random_range(0.0..=max_radius);
                let l = if rng.random_bool(0.5) {
                    f64::INFINITY
                } else {
                    1.5 * nominal.slopes().iter().cloned().fold(0.0, f64::max)
                };
                AmbiguitySpec::Kantorovich(KantorovichBallSpec::new(nominal, radius, l, f64::INFINITY).unwrap())
            }
            SetKind::Pairwise { max_k } => {
                let truth = ClosedFormUtility::exponential(rng.random_range(0.5..3.0)).unwrap();
                let k = rng.random_range(0..=max_k);
                AmbiguitySpec::Pairwise(elicit_pairwise(&truth, k, &grid, rng.random()).unwrap())
            }
        };
        assignment.insert(s, spec);
    }
    let ambiguity = StateDependentAmbiguity::new(&tree, &grid, assignment).unwrap();
    MultistageProblem::new(tree, boxes, rewards, constraints, ambiguity, grid).unwrap()
}

/// The same problem with ids assigned breadth-first visiting children in
/// reverse order. Returns the problem and `new_of[old]`.
pub fn relabeled(problem: &MultistageProblem) -> (MultistageProblem, Vec<usize>) {
    let tree = problem.tree();
    let mut order = vec![0usize];
    let mut k = 0;
    while k < order.len() {
        let s = order[k];
        order.extend(tree.children(s).iter().rev());
        k += 1;
    }
    let mut new_of = vec![0; tree.len()];
    for (new, &old) in order.iter().enumerate() {
        new_of[old] = new;
    }
    let specs = order
        .iter()
        .map(|&old| {
            let n = &tree.nodes()[old];
            NodeSpec {
                parent: n.parent.map(|p| new_of[p]),
                stage: n.stage,
                prob_conditional: n.prob_conditional,
                realization: n.realization.clone(),
            }
        })
        .collect();
    let new_tree = ScenarioTree::from_nodes(tree.horizon(), tree.series_names().to_vec(), specs).unwrap();
    let boxes = order.iter().map(|&o| problem.decision_box(o).clone()).collect();
    let rewards = order.iter().map(|&o| problem.reward(o).cloned()).collect();
    let constraints = order.iter().map(|&o| problem.constraints(o).to_vec()).collect();
    let assignment = problem.ambiguity().iter().map(|(s, spec)| (new_of[s], spec.clone())).collect();
    let ambiguity = StateDependentAmbiguity::new(&new_tree, problem.grid(), assignment).unwrap();
    let p = MultistageProblem::new(new_tree, boxes, rewards, constraints, ambiguity, problem.grid().clone()).unwrap();
    (p, new_of)
}

/// The problem with every decision pinned to `decisions`.
pub fn pinned(problem: &MultistageProblem, decisions: &[Vec<f64>]) -> MultistageProblem {
    let tree = problem.tree();
    let boxes = (0..tree.len())
        .map(|s| DecisionBox::new(decisions[s].clone(), decisions[s].clone()).unwrap())
        .collect();
    let rewards = (0..tree.len()).map(|s| problem.reward(s).cloned()).collect();
    let constraints = (0..tree.len()).map(|_| Vec::new()).collect();
    MultistageProblem::new(tree.clone(), boxes, rewards, constraints, problem.ambiguity().clone(), problem.grid().clone())
        .unwrap()
}

/// A random feasible decision for every node of a [`random_problem`].
pub fn random_decisions(problem: &MultistageProblem, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let tree = problem.tree();
    let mut d: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    for s in tree.non_leaves() {
        let cap = match tree.parent(s) {
            None => 1.0,
            Some(p) => (0.6 + 0.5 * d[p][0]).min(1.0),
        };
        let total = if tree.parent(s).is_none() { 1.0 } else { rng.random_range(0.0..=cap) };
        let w: f64 = rng.random_range(0.0..=1.0);
        d[s] = vec![total * w, total * (1.0 - w)];
    }
    d
}

//! Sets of plausible utility functions, per node of a scenario tree.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lp::{self, LpBuilder, LpStatus, Relation, Sense};
use crate::tree::ScenarioTree;
use crate::utility::{
    lipschitz_moduli, ClosedFormUtility, Grid, PiecewiseLinearUtility, Utility, UtilityFunction,
};
use crate::{Error, Result};

/// Oil price at or below which the investor's utility is linear.
pub const REGIME_THRESHOLD: f64 = 60.0;
/// Curvature of the high-price regime utility.
pub const REGIME_EXP_K: f64 = 3.0;

/// Default bound on the slope of admissible utilities.
pub fn default_lipschitz() -> f64 {
    REGIME_EXP_K / (1.0 - (-REGIME_EXP_K).exp())
}

/// Default bound on the Lipschitz modulus of the slope.
pub fn default_lipschitz_slope() -> f64 {
    REGIME_EXP_K * REGIME_EXP_K / (1.0 - (-REGIME_EXP_K).exp())
}

/// Finite lottery on breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLottery {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscreteLottery {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() || support.is_empty() {
            return Err(Error::InvalidInput("lottery needs one probability per outcome".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidInput("lottery probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("lottery probabilities sum to {total}")));
        }
        Ok(Self { support, probs })
    }

    pub fn point_mass(y: f64) -> Self {
        Self { support: vec![y], probs: vec![1.0] }
    }

    pub fn expectation(&self, u: &impl UtilityFunction) -> f64 {
        self.support.iter().zip(&self.probs).map(|(&y, &p)| p * u.value(y)).sum()
    }

    /// `P[W = y_j]` for every breakpoint of `grid`.
    pub fn weights_on(&self, grid: &Grid) -> Result<Vec<f64>> {
        let mut w = vec![0.0; grid.len()];
        for (&y, &p) in self.support.iter().zip(&self.probs) {
            let j = grid
                .index_of(y)
                .ok_or_else(|| Error::InvalidInput(format!("lottery outcome {y} is not a breakpoint")))?;
            w[j] += p;
        }
        Ok(w)
    }
}

/// One elicited answer: `z = +1` if `W` was preferred to `Y`, `-1` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub w: DiscreteLottery,
    pub y: DiscreteLottery,
    pub z: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparisonSpec {
    pairs: Vec<Comparison>,
    pub l: f64,
    pub l_tilde: f64,
    pub concave: bool,
}

impl PairwiseComparisonSpec {
    /// Pairs answered with indifference (`z = 0`) carry no constraint and are
    /// dropped.
    pub fn new(pairs: Vec<Comparison>, l: f64, l_tilde: f64) -> Result<Self> {
        check_moduli(l, l_tilde)?;
        if let Some(c) = pairs.iter().find(|c| !(-1..=1).contains(&c.z)) {
            return Err(Error::InvalidInput(format!("comparison answer {} is not in {{-1, 0, 1}}", c.z)));
        }
        let pairs = pairs.into_iter().filter(|c| c.z != 0).collect();
        Ok(Self { pairs, l, l_tilde, concave: true })
    }

    pub fn pairs(&self) -> &[Comparison] {
        &self.pairs
    }

    /// A copy with only the first `k` answers.
    pub fn truncated(&self, k: usize) -> Self {
        let mut s = self.clone();
        s.pairs.truncate(k);
        s
    }

    /// One line per answer: `pair,w_outcomes,w_probs,y_outcomes,y_probs,z`,
    /// lists separated by `;`.
    pub fn answers_table(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        let mut out = String::from("pair,w_outcomes,w_probs,y_outcomes,y_probs,z\n");
        for (k, c) in self.pairs.iter().enumerate() {
            out.push_str(&format!(
                "{k},{},{},{},{},{}\n",
                join(&c.w.support),
                join(&c.w.probs),
                join(&c.y.support),
                join(&c.y.probs),
                c.z
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KantorovichBallSpec {
    pub nominal: PiecewiseLinearUtility,
    pub radius: f64,
    pub l: f64,
    pub l_tilde: f64,
    pub concave: bool,
}

impl KantorovichBallSpec {
    pub fn new(nominal: PiecewiseLinearUtility, radius: f64, l: f64, l_tilde: f64) -> Result<Self> {
        check_moduli(l, l_tilde)?;
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("radius must be finite and nonnegative, got {radius}")));
        }
        let (lo, lto) = lipschitz_moduli(&nominal);
        if lo > l + 1e-12 || lto > l_tilde + 1e-12 {
            log::warn!(
                "nominal utility has moduli ({lo}, {lto}) above the bounds ({l}, {l_tilde}); the ball may be empty"
            );
        }
        Ok(Self { nominal, radius, l, l_tilde, concave: true })
    }
}

fn check_moduli(l: f64, l_tilde: f64) -> Result<()> {
    if !(l > 0.0) || !(l_tilde > 0.0) || l.is_nan() || l_tilde.is_nan() {
        return Err(Error::InvalidInput(format!("Lipschitz bounds must be positive, got L={l}, L~={l_tilde}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteUtilitySet {
    members: Vec<Utility>,
    pub state_dependent: bool,
}

impl FiniteUtilitySet {
    pub fn new(members: Vec<Utility>, state_dependent: bool) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidInput("finite utility set is empty".into()));
        }
        Ok(Self { members, state_dependent })
    }

    pub fn members(&self) -> &[Utility] {
        &self.members
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum AmbiguitySpec {
    Kantorovich(KantorovichBallSpec),
    Pairwise(PairwiseComparisonSpec),
    Finite(FiniteUtilitySet),
}

/// One ambiguity set per non-leaf node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDependentAmbiguity {
    assignment: BTreeMap<usize, AmbiguitySpec>,
}

impl StateDependentAmbiguity {
    /// Checks that every non-leaf node of `tree` has a spec, and that grids of
    /// Kantorovich nominals equal `grid`.
    pub fn new(tree: &ScenarioTree, grid: &Grid, assignment: BTreeMap<usize, AmbiguitySpec>) -> Result<Self> {
        for s in tree.non_leaves() {
            match assignment.get(&s) {
                None => return Err(Error::InvalidInput(format!("node {s} has no ambiguity set"))),
                Some(AmbiguitySpec::Kantorovich(k)) if k.nominal.grid() != grid => {
                    return Err(Error::InvalidInput(format!("node {s}: nominal utility uses a different grid")))
                }
                _ => {}
            }
        }
        Ok(Self { assignment })
    }

    pub fn get(&self, node: usize) -> Option<&AmbiguitySpec> {
        self.assignment.get(&node)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &AmbiguitySpec)> {
        self.assignment.iter().map(|(&k, v)| (k, v))
    }

    /// Re-keys to a subtree given the original id of each of its nodes.
    pub fn restricted(&self, original_ids: &[usize]) -> Self {
        let assignment = original_ids
            .iter()
            .enumerate()
            .filter_map(|(new, old)| self.assignment.get(old).map(|s| (new, s.clone())))
            .collect();
        Self { assignment }
    }
}

/// The per-regime utility at a node with the given oil price.
pub fn regime_nominal(oil_price: f64) -> ClosedFormUtility {
    if oil_price <= REGIME_THRESHOLD {
        ClosedFormUtility::linear()
    } else {
        ClosedFormUtility::exponential(REGIME_EXP_K).expect("positive curvature")
    }
}

fn draw_lottery(rng: &mut impl Rng, grid: &Grid) -> DiscreteLottery {
    let n = grid.len();
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    let p = rng.random_range(1..=9) as f64 / 10.0;
    let y = grid.points();
    DiscreteLottery { support: vec![y[i], y[j]], probs: vec![p, 1.0 - p] }
}

fn elicit_with(
    truth: &impl UtilityFunction,
    k: usize,
    grid: &Grid,
    rng: &mut impl Rng,
    l: f64,
    l_tilde: f64,
) -> Result<PairwiseComparisonSpec> {
    let mut pairs = Vec::with_capacity(k);
    for _ in 0..k {
        let w = draw_lottery(rng, grid);
        let y = draw_lottery(rng, grid);
        let gap = w.expectation(truth) - y.expectation(truth);
        let z = if gap.abs() < 1e-12 { 0 } else if gap > 0.0 { 1 } else { -1 };
        pairs.push(Comparison { w, y, z });
    }
    PairwiseComparisonSpec::new(pairs, l, l_tilde)
}

/// Simulates `k` questions answered by `truth`. Each lottery has two distinct
/// breakpoints as outcomes and a probability from `{0.1, ..., 0.9}` on the
/// first. The first `k` answers for a seed do not depend on `k`.
pub fn elicit_pairwise(truth: &impl UtilityFunction, k: usize, grid: &Grid, seed: u64) -> Result<PairwiseComparisonSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    elicit_with(truth, k, grid, &mut rng, default_lipschitz(), default_lipschitz_slope())
}

/// How to pick a spec for each node.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecPolicy {
    /// Ball around the projected regime utility of the node's price.
    KantorovichRegime { radius: f64, l: f64, l_tilde: f64, price_series: usize },
    /// `k` answers from the regime utility of the node's price; node `s` uses
    /// stream `s` of the seed.
    PairwiseRegime { k: usize, seed: u64, l: f64, l_tilde: f64, price_series: usize },
    /// The same spec everywhere.
    Uniform(AmbiguitySpec),
}

/// Instantiates a spec at every non-leaf node by walking the tree.
pub fn build_state_dependent(tree: &ScenarioTree, grid: &Grid, policy: &SpecPolicy) -> Result<StateDependentAmbiguity> {
    let mut assignment = BTreeMap::new();
    for s in tree.non_leaves() {
        let spec = match policy {
            SpecPolicy::KantorovichRegime { radius, l, l_tilde, price_series } => {
                let truth = regime_nominal(tree.realization(s, *price_series));
                let nominal = crate::utility::project(&truth, grid)?;
                AmbiguitySpec::Kantorovich(KantorovichBallSpec::new(nominal, *radius, *l, *l_tilde)?)
            }
            SpecPolicy::PairwiseRegime { k, seed, l, l_tilde, price_series } => {
                let truth = regime_nominal(tree.realization(s, *price_series));
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(s as u64);
                AmbiguitySpec::Pairwise(elicit_with(&truth, *k, grid, &mut rng, *l, *l_tilde)?)
            }
            SpecPolicy::Uniform(spec) => spec.clone(),
        };
        assignment.insert(s, spec);
    }
    StateDependentAmbiguity::new(tree, grid, assignment)
}

/// Row and column indices of the utility block inside a larger program.
///
/// Rows are oriented so that in a minimization their shadow prices carry the
/// signs of the named multipliers: `>=` rows give nonnegative prices.
#[derive(Debug, Clone, Default)]
pub struct SetBlock {
    /// `alpha_j = u(y_j)`.
    pub alpha: Vec<usize>,
    /// Slope of interval `j` (0-based: `beta[j-1]` is the slope on `[y_{j-1}, y_j]`).
    pub beta: Vec<usize>,
    /// `alpha_j - alpha_{j+1} + beta_{j+1} (y_{j+1} - y_j) = 0`.
    pub theta_rows: Vec<usize>,
    /// `alpha_{j+1} - alpha_j - beta_{j+2} (y_{j+1} - y_j) >= 0`.
    pub concavity_rows: Vec<usize>,
    /// `-beta_j >= -L`.
    pub lipschitz_rows: Vec<usize>,
    /// `-(beta_{j+2} - beta_{j+1}) >= -L~ (y_{j+2} - y_j)`.
    pub curvature_upper_rows: Vec<usize>,
    /// `beta_{j+2} - beta_{j+1} >= -L~ (y_{j+2} - y_j)`.
    pub curvature_lower_rows: Vec<usize>,
    /// `alpha_1 = 0` and `alpha_N = 1`.
    pub normalization_rows: [usize; 2],
    /// Kantorovich budget row, `-1/2 sum (lam + mu + rho + psi) d^2 >= -r`.
    pub budget_row: Option<usize>,
    /// Slope-matching rows `-beta_j + lam_j - mu_j + rho_j - psi_j = -beta~_j`.
    pub slope_rows: Vec<usize>,
    /// One row per breakpoint tying the ball multipliers together.
    pub z_rows: Vec<usize>,
    /// `z_k sum_j (P[W_k = y_j] - P[Y_k = y_j]) alpha_j >= margin`.
    pub comparison_rows: Vec<usize>,
}

/// Adds the description of a utility set on `grid` to `b`: the shape rows
/// (monotone, concave, Lipschitz, normalized) and the set-specific rows.
/// Finite sets have no such description and are rejected.
pub fn add_set_rows(b: &mut LpBuilder, grid: &Grid, spec: &AmbiguitySpec, margin: f64) -> Result<SetBlock> {
    let (l, l_tilde, concave) = match spec {
        AmbiguitySpec::Kantorovich(k) => (k.l, k.l_tilde, k.concave),
        AmbiguitySpec::Pairwise(p) => (p.l, p.l_tilde, p.concave),
        AmbiguitySpec::Finite(_) => {
            return Err(Error::Unsupported("finite utility sets have no linear description".into()))
        }
    };
    let y = grid.points();
    let n = y.len();
    let mut blk = SetBlock {
        alpha: (0..n).map(|_| b.free_var(0.0)).collect(),
        beta: (1..n).map(|_| b.nonneg_var(0.0)).collect(),
        ..SetBlock::default()
    };
    let (al, be) = (blk.alpha.clone(), blk.beta.clone());
    for j in 0..n - 1 {
        let d = y[j + 1] - y[j];
        blk.theta_rows.push(b.add_constraint(vec![(al[j], 1.0), (al[j + 1], -1.0), (be[j], d)], Relation::Eq, 0.0));
    }
    if concave {
        for j in 0..n.saturating_sub(2) {
            let d = y[j + 1] - y[j];
            blk.concavity_rows.push(b.add_constraint(
                vec![(al[j + 1], 1.0), (al[j], -1.0), (be[j + 1], -d)],
                Relation::Ge,
                0.0,
            ));
        }
    }
    if l.is_finite() {
        for &bj in &be {
            blk.lipschitz_rows.push(b.add_constraint(vec![(bj, -1.0)], Relation::Ge, -l));
        }
    }
    if l_tilde.is_finite() {
        for j in 0..n.saturating_sub(2) {
            let span = y[j + 2] - y[j];
            blk.curvature_upper_rows.push(b.add_constraint(
                vec![(be[j + 1], -1.0), (be[j], 1.0)],
                Relation::Ge,
                -l_tilde * span,
            ));
            blk.curvature_lower_rows.push(b.add_constraint(
                vec![(be[j + 1], 1.0), (be[j], -1.0)],
                Relation::Ge,
                -l_tilde * span,
            ));
        }
    }
    blk.normalization_rows = [
        b.add_constraint(vec![(al[0], 1.0)], Relation::Eq, 0.0),
        b.add_constraint(vec![(al[n - 1], 1.0)], Relation::Eq, 1.0),
    ];
    match spec {
        AmbiguitySpec::Kantorovich(k) => {
            let nominal_slopes = k.nominal.slopes();
            let mut mult = Vec::with_capacity(n - 1);
            for _ in 1..n {
                mult.push([b.nonneg_var(0.0), b.nonneg_var(0.0), b.nonneg_var(0.0), b.nonneg_var(0.0)]);
            }
            let mut budget = Vec::new();
            for (j, m) in mult.iter().enumerate() {
                let d = y[j + 1] - y[j];
                for &v in m {
                    budget.push((v, -0.5 * d * d));
                }
            }
            blk.budget_row = Some(b.add_constraint(budget, Relation::Ge, -k.radius));
            for (j, &[lam, mu, rho, psi]) in mult.iter().enumerate() {
                blk.slope_rows.push(b.add_constraint(
                    vec![(be[j], -1.0), (lam, 1.0), (mu, -1.0), (rho, 1.0), (psi, -1.0)],
                    Relation::Eq,
                    -nominal_slopes[j],
                ));
            }
            for kk in 0..n {
                let mut row = Vec::new();
                if kk + 1 < n {
                    let d = y[kk + 1] - y[kk];
                    let [lam, mu, _, _] = mult[kk];
                    row.push((mu, d));
                    row.push((lam, -d));
                }
                if kk > 0 {
                    let d = y[kk] - y[kk - 1];
                    let [_, _, rho, psi] = mult[kk - 1];
                    row.push((psi, d));
                    row.push((rho, -d));
                }
                blk.z_rows.push(b.add_constraint(row, Relation::Eq, 0.0));
            }
        }
        AmbiguitySpec::Pairwise(p) => {
            for c in &p.pairs {
                let pw = c.w.weights_on(grid)?;
                let py = c.y.weights_on(grid)?;
                let z = c.z as f64;
                let row: Vec<(usize, f64)> =
                    (0..n).map(|j| (al[j], z * (pw[j] - py[j]))).filter(|&(_, v)| v != 0.0).collect();
                blk.comparison_rows.push(b.add_constraint(row, Relation::Ge, margin));
            }
        }
        AmbiguitySpec::Finite(_) => unreachable!(),
    }
    Ok(blk)
}

/// Whether `u` lies in the set, with every inequality relaxed by `tol`.
/// Finite sets contain only their listed members.
pub fn contains(spec: &AmbiguitySpec, u: &PiecewiseLinearUtility, tol: f64) -> Result<bool> {
    let (l, l_tilde, concave) = match spec {
        AmbiguitySpec::Kantorovich(k) => (k.l, k.l_tilde, k.concave),
        AmbiguitySpec::Pairwise(p) => (p.l, p.l_tilde, p.concave),
        AmbiguitySpec::Finite(f) => {
            let g = u.grid();
            return Ok(f.members().iter().any(|m| {
                g.points().iter().zip(u.values()).all(|(&y, &v)| (m.value(y) - v).abs() <= tol)
            }));
        }
    };
    let slopes = u.slopes();
    let (lo, lto) = lipschitz_moduli(u);
    if slopes.iter().any(|&s| s < -tol) || lo > l + tol || lto > l_tilde + tol {
        return Ok(false);
    }
    if concave && !u.is_concave(tol) {
        return Ok(false);
    }
    match spec {
        AmbiguitySpec::Kantorovich(k) => Ok(crate::utility::kantorovich_lp(u, &k.nominal)? <= k.radius + tol),
        AmbiguitySpec::Pairwise(p) => Ok(p
            .pairs
            .iter()
            .all(|c| c.z as f64 * (c.w.expectation(u) - c.y.expectation(u)) >= -tol)),
        AmbiguitySpec::Finite(_) => unreachable!(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// Some member of the set, as a witness.
    Feasible(Utility),
    Empty,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// Decides whether the set is empty by solving its constraint system alone.
/// Comparison rows are tightened to `>= margin`.
pub fn feasibility_check(spec: &AmbiguitySpec, grid: &Grid, margin: f64) -> Result<Feasibility> {
    if let AmbiguitySpec::Finite(f) = spec {
        return Ok(Feasibility::Feasible(f.members()[0].clone()));
    }
    let mut b = LpBuilder::new(Sense::Minimize);
    let blk = add_set_rows(&mut b, grid, spec, margin)?;
    let sol = lp::solve(&b.build()?)?;
    match sol.status {
        LpStatus::Optimal => {
            let values = blk.alpha.iter().map(|&j| sol.primal[j]).collect();
            Ok(Feasibility::Feasible(PiecewiseLinearUtility::new(grid.clone(), values)?.into()))
        }
        LpStatus::Infeasible => Ok(Feasibility::Empty),
        LpStatus::Unbounded => unreachable!("a zero objective cannot be unbounded"),
    }
}

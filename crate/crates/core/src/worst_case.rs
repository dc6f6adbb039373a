//! Worst-case expected utility over an ambiguity set for one node.

use serde::{Deserialize, Serialize};

use crate::ambiguity::{
    add_set_rows, AmbiguitySpec, FiniteUtilitySet, KantorovichBallSpec, PairwiseComparisonSpec, SetBlock,
};
use crate::lp::{self, dualize, LinearProgram, LpBuilder, LpSolution, LpStatus, Relation, Sense};
use crate::utility::{Grid, PiecewiseLinearUtility, UtilityFunction};
use crate::{Error, Result};

/// Discrete distribution of a node's reward over its children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    outcomes: Vec<(f64, f64)>,
}

impl OutcomeDistribution {
    /// `outcomes` holds `(value, probability)` pairs.
    pub fn new(outcomes: Vec<(f64, f64)>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidInput("distribution has no outcomes".into()));
        }
        if outcomes.iter().any(|&(h, q)| !h.is_finite() || !(q > 0.0)) {
            return Err(Error::InvalidInput("outcomes need finite values and positive probabilities".into()));
        }
        let total: f64 = outcomes.iter().map(|o| o.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}")));
        }
        Ok(Self { outcomes })
    }

    pub fn point_mass(h: f64) -> Self {
        Self { outcomes: vec![(h, 1.0)] }
    }

    pub fn outcomes(&self) -> &[(f64, f64)] {
        &self.outcomes
    }

    pub fn expectation(&self, u: &impl UtilityFunction) -> f64 {
        self.outcomes.iter().map(|&(h, q)| q * u.value(h)).sum()
    }
}

/// Multipliers of the inner minimization, one vector per constraint family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DualBlocks {
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub eta: Vec<f64>,
    pub tau: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `mu[i][j]` belongs to the supporting-line row of outcome `i` at breakpoint `j`.
    pub mu: Vec<Vec<f64>>,
    /// Multipliers of `u(a) = 0` and `u(b) = 1`.
    pub nu: [f64; 2],
    pub varsigma: Option<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorstCaseUtility {
    PiecewiseLinear(PiecewiseLinearUtility),
    /// Index into a finite set.
    Member(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseResult {
    pub value: f64,
    pub utility: WorstCaseUtility,
    pub duals: Option<DualBlocks>,
}

impl WorstCaseResult {
    pub fn piecewise_linear(&self) -> Option<&PiecewiseLinearUtility> {
        match &self.utility {
            WorstCaseUtility::PiecewiseLinear(u) => Some(u),
            WorstCaseUtility::Member(_) => None,
        }
    }
}

/// Column and row indices of an inner program.
#[derive(Debug, Clone)]
pub struct InnerBlock {
    pub set: SetBlock,
    /// Slope of the supporting line at each outcome.
    pub eps: Vec<usize>,
    /// Intercept of the supporting line at each outcome.
    pub phi: Vec<usize>,
    /// `support_rows[i][j]`: `y_j eps_i + phi_i - alpha_j >= 0`.
    pub support_rows: Vec<Vec<usize>>,
}

/// The inner minimization `min sum_i q_i (eps_i h_i + phi_i)` over the set,
/// with `(eps_i, phi_i)` a line above the utility at every breakpoint.
pub fn inner_program(outcomes: &[(f64, f64)], grid: &Grid, spec: &AmbiguitySpec) -> Result<(LinearProgram, InnerBlock)> {
    let mut b = LpBuilder::new(Sense::Minimize);
    let set = add_set_rows(&mut b, grid, spec, 0.0)?;
    let y = grid.points();
    let mut eps = Vec::with_capacity(outcomes.len());
    let mut phi = Vec::with_capacity(outcomes.len());
    let mut support_rows = Vec::with_capacity(outcomes.len());
    for &(h, q) in outcomes {
        let e = b.nonneg_var(q * h);
        let f = b.free_var(q);
        let rows = (0..y.len())
            .map(|j| b.add_constraint(vec![(e, y[j]), (f, 1.0), (set.alpha[j], -1.0)], Relation::Ge, 0.0))
            .collect();
        eps.push(e);
        phi.push(f);
        support_rows.push(rows);
    }
    Ok((b.build()?, InnerBlock { set, eps, phi, support_rows }))
}

fn check_domain(dist: &OutcomeDistribution, grid: &Grid) -> Result<()> {
    let (a, b) = (grid.a(), grid.b());
    match dist.outcomes.iter().find(|&&(h, _)| h < a - 1e-9 || h > b + 1e-9) {
        Some(&(h, _)) => Err(Error::InvalidInput(format!("outcome {h} lies outside [{a}, {b}]"))),
        None => Ok(()),
    }
}

/// Breakpoint values from an LP solution, cleaned of round-off.
pub(crate) fn utility_from_alpha(grid: &Grid, mut alpha: Vec<f64>) -> Result<PiecewiseLinearUtility> {
    let n = alpha.len();
    let mut worst: f64 = alpha[0].abs().max((alpha[n - 1] - 1.0).abs());
    alpha[0] = 0.0;
    alpha[n - 1] = 1.0;
    for j in 1..n {
        let c = alpha[j].clamp(alpha[j - 1], 1.0);
        worst = worst.max((c - alpha[j]).abs());
        alpha[j] = c;
    }
    if worst > 1e-6 {
        return Err(lp::LpError::NumericalFailure(format!("worst-case utility is off by {worst}")).into());
    }
    PiecewiseLinearUtility::new(grid.clone(), alpha)
}

fn pick(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

fn blocks(blk: &InnerBlock, row_value: &[f64]) -> DualBlocks {
    let s = &blk.set;
    DualBlocks {
        theta: pick(row_value, &s.theta_rows),
        v: pick(row_value, &s.concavity_rows),
        eta: pick(row_value, &s.lipschitz_rows),
        tau: pick(row_value, &s.curvature_upper_rows),
        sigma: pick(row_value, &s.curvature_lower_rows),
        mu: blk.support_rows.iter().map(|r| pick(row_value, r)).collect(),
        nu: [row_value[s.normalization_rows[0]], row_value[s.normalization_rows[1]]],
        varsigma: s.budget_row.map(|r| row_value[r]),
        w: pick(row_value, &s.slope_rows),
        z: pick(row_value, &s.z_rows),
        lambda: pick(row_value, &s.comparison_rows),
    }
}

fn solve_primal(dist: &OutcomeDistribution, grid: &Grid, spec: &AmbiguitySpec) -> Result<WorstCaseResult> {
    check_domain(dist, grid)?;
    let (lp, blk) = inner_program(&dist.outcomes, grid, spec)?;
    let sol = lp::solve(&lp)?;
    let sol = optimal(sol)?;
    let duals = sol.duals.as_deref().map(|d| blocks(&blk, d));
    let utility = utility_from_alpha(grid, pick(&sol.primal, &blk.set.alpha))?;
    Ok(WorstCaseResult { value: sol.objective_value, utility: WorstCaseUtility::PiecewiseLinear(utility), duals })
}

fn optimal(sol: LpSolution) -> Result<LpSolution> {
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(Error::EmptyAmbiguitySet("no utility satisfies the constraints".into())),
        LpStatus::Unbounded => Err(Error::Unbounded("inner minimization is unbounded".into())),
    }
}

fn check_nominal_grid(spec: &KantorovichBallSpec, grid: &Grid) -> Result<()> {
    if spec.nominal.grid() != grid {
        return Err(Error::InvalidInput("nominal utility is defined on a different grid".into()));
    }
    Ok(())
}

/// Worst case over a Kantorovich ball, solving the inner minimization.
pub fn worst_case_kantorovich_primal(
    dist: &OutcomeDistribution,
    spec: &KantorovichBallSpec,
    grid: &Grid,
) -> Result<WorstCaseResult> {
    check_nominal_grid(spec, grid)?;
    solve_primal(dist, grid, &AmbiguitySpec::Kantorovich(spec.clone()))
}

/// Worst case over a Kantorovich ball, solving the LP dual of the inner
/// minimization. The utility is read off the dual's shadow prices.
pub fn worst_case_kantorovich_dual(
    dist: &OutcomeDistribution,
    spec: &KantorovichBallSpec,
    grid: &Grid,
) -> Result<WorstCaseResult> {
    check_nominal_grid(spec, grid)?;
    check_domain(dist, grid)?;
    let (primal, blk) = inner_program(&dist.outcomes, grid, &AmbiguitySpec::Kantorovich(spec.clone()))?;
    let dual = dualize(&primal)?;
    let sol = lp::solve(&dual.lp)?;
    let sol = match sol.status {
        LpStatus::Optimal => sol,
        LpStatus::Unbounded | LpStatus::Infeasible => {
            return Err(Error::EmptyAmbiguitySet("dual of the inner minimization has no optimum".into()))
        }
    };
    let row_value: Vec<f64> = dual.map.row_var.iter().map(|&k| sol.primal[k]).collect();
    let shadow = sol.duals.as_deref().ok_or_else(|| lp::LpError::NumericalFailure("no shadow prices".into()))?;
    let alpha = blk.set.alpha.iter().map(|&j| shadow[dual.map.var_row[j]]).collect();
    Ok(WorstCaseResult {
        value: sol.objective_value,
        utility: WorstCaseUtility::PiecewiseLinear(utility_from_alpha(grid, alpha)?),
        duals: Some(blocks(&blk, &row_value)),
    })
}

/// Worst case over concave Lipschitz utilities consistent with the answers.
pub fn worst_case_pairwise(
    dist: &OutcomeDistribution,
    spec: &PairwiseComparisonSpec,
    grid: &Grid,
) -> Result<WorstCaseResult> {
    solve_primal(dist, grid, &AmbiguitySpec::Pairwise(spec.clone()))
}

/// Minimum over the members; ties go to the lowest index.
pub fn worst_case_finite(dist: &OutcomeDistribution, set: &FiniteUtilitySet) -> Result<WorstCaseResult> {
    let mut best = (0, f64::INFINITY);
    for (k, u) in set.members().iter().enumerate() {
        let v = dist.expectation(u);
        if v < best.1 - 1e-12 {
            best = (k, v);
        }
    }
    Ok(WorstCaseResult { value: best.1, utility: WorstCaseUtility::Member(best.0), duals: None })
}

/// Dispatches on the kind of set.
pub fn worst_case(dist: &OutcomeDistribution, spec: &AmbiguitySpec, grid: &Grid) -> Result<WorstCaseResult> {
    match spec {
        AmbiguitySpec::Kantorovich(k) => worst_case_kantorovich_primal(dist, k, grid),
        AmbiguitySpec::Pairwise(p) => worst_case_pairwise(dist, p, grid),
        AmbiguitySpec::Finite(f) => worst_case_finite(dist, f),
    }
}

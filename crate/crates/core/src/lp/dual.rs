use super::model::{LinearProgram, LpBuilder, Relation, Sense};
use super::LpError;

/// Where each primal object lands in the dual program.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMap {
    /// Dual variable of each primal constraint.
    pub row_var: Vec<usize>,
    /// Dual variable of the row generated for a finite nonzero lower bound.
    pub lower_bound_var: Vec<Option<usize>>,
    /// Dual variable of the row generated for a finite upper bound.
    pub upper_bound_var: Vec<Option<usize>>,
    /// Dual constraint generated by each primal variable.
    pub var_row: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DualizedLp {
    pub lp: LinearProgram,
    pub map: DualMap,
}

/// Builds the LP dual.
///
/// Bounds other than `x >= 0` and `x <= 0` become explicit rows first. The dual
/// variables are shadow prices of the primal rows, so at optimality the dual
/// solution equals the `duals` vector the solver reports for the primal.
pub fn dualize(lp: &LinearProgram) -> Result<DualizedLp, LpError> {
    let n = lp.num_vars();
    let (dual_sense, rel_nonneg, rel_nonpos) = match lp.sense() {
        Sense::Minimize => (Sense::Maximize, Relation::Le, Relation::Ge),
        Sense::Maximize => (Sense::Minimize, Relation::Ge, Relation::Le),
    };
    let shadow_bounds = |rel: Relation| -> (f64, f64) {
        match (lp.sense(), rel) {
            (_, Relation::Eq) => (f64::NEG_INFINITY, f64::INFINITY),
            (Sense::Minimize, Relation::Ge) | (Sense::Maximize, Relation::Le) => (0.0, f64::INFINITY),
            (Sense::Minimize, Relation::Le) | (Sense::Maximize, Relation::Ge) => (f64::NEG_INFINITY, 0.0),
        }
    };
    let mut b = LpBuilder::new(dual_sense);
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];

    let mut row_var = Vec::with_capacity(lp.num_constraints());
    for (i, c) in lp.constraints().iter().enumerate() {
        let (lo, hi) = shadow_bounds(c.relation);
        let y = b.add_named_var(format!("y_r{i}"), lo, hi, c.rhs);
        row_var.push(y);
        for &(j, a) in &c.row {
            columns[j].push((y, a));
        }
    }

    let mut lower_bound_var = vec![None; n];
    let mut upper_bound_var = vec![None; n];
    let mut var_relation = Vec::with_capacity(n);
    for j in 0..n {
        let (l, u) = (lp.lower()[j], lp.upper()[j]);
        let rel = if l == 0.0 {
            rel_nonneg
        } else if u == 0.0 && l == f64::NEG_INFINITY {
            rel_nonpos
        } else {
            Relation::Eq
        };
        var_relation.push(rel);
        if l.is_finite() && l != 0.0 {
            let (lo, hi) = shadow_bounds(Relation::Ge);
            let y = b.add_named_var(format!("y_lo{j}"), lo, hi, l);
            lower_bound_var[j] = Some(y);
            columns[j].push((y, 1.0));
        }
        if u.is_finite() && !(u == 0.0 && rel == rel_nonpos) {
            let (lo, hi) = shadow_bounds(Relation::Le);
            let y = b.add_named_var(format!("y_up{j}"), lo, hi, u);
            upper_bound_var[j] = Some(y);
            columns[j].push((y, 1.0));
        }
    }

    let mut var_row = Vec::with_capacity(n);
    for (j, col) in columns.into_iter().enumerate() {
        var_row.push(b.add_constraint(col, var_relation[j], lp.objective()[j]));
    }
    Ok(DualizedLp {
        lp: b.build()?,
        map: DualMap { row_var, lower_bound_var, upper_bound_var, var_row },
    })
}

/// Optimality evidence for a primal point and a vector of shadow prices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub primal_infeasibility: f64,
    /// Largest sign violation among the shadow prices and reduced costs.
    pub dual_infeasibility: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
}

impl Certificate {
    pub fn holds(&self, tol: f64) -> bool {
        let scale = 1.0 + self.primal_objective.abs();
        self.primal_infeasibility <= tol && self.dual_infeasibility <= tol * scale && self.gap <= tol * scale
    }
}

/// Checks `x` and shadow prices `y` (one per constraint, in the program's own
/// sense) for feasibility, dual sign conditions and the duality gap.
pub fn check_certificate(lp: &LinearProgram, x: &[f64], y: &[f64]) -> Certificate {
    let primal_infeasibility = if x.len() == lp.num_vars() { lp.max_violation(x) } else { f64::INFINITY };
    let primal_objective = if x.len() == lp.num_vars() { lp.objective_at(x) } else { f64::NAN };
    if y.len() != lp.num_constraints() {
        return Certificate {
            primal_infeasibility,
            dual_infeasibility: f64::INFINITY,
            primal_objective,
            dual_objective: f64::NAN,
            gap: f64::INFINITY,
        };
    }
    let sgn = match lp.sense() {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut reduced: Vec<f64> = lp.objective().iter().map(|c| sgn * c).collect();
    let mut dual_obj = 0.0;
    let mut infeas = 0.0f64;
    for (c, &yi) in lp.constraints().iter().zip(y) {
        let yi = sgn * yi;
        infeas = infeas.max(match c.relation {
            Relation::Le => yi,
            Relation::Ge => -yi,
            Relation::Eq => 0.0,
        });
        dual_obj += c.rhs * yi;
        for &(j, a) in &c.row {
            reduced[j] -= a * yi;
        }
    }
    for (j, &r) in reduced.iter().enumerate() {
        let (l, u) = (lp.lower()[j], lp.upper()[j]);
        if r > 0.0 {
            if l.is_finite() {
                dual_obj += r * l;
            } else {
                infeas = infeas.max(r);
            }
        } else if r < 0.0 {
            if u.is_finite() {
                dual_obj += r * u;
            } else {
                infeas = infeas.max(-r);
            }
        }
    }
    let dual_objective = sgn * dual_obj;
    Certificate {
        primal_infeasibility,
        dual_infeasibility: infeas,
        primal_objective,
        dual_objective,
        gap: (primal_objective - dual_objective).abs(),
    }
}

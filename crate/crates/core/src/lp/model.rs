use std::fmt;

use serde::{Deserialize, Serialize};

use super::LpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse `(variable index, coefficient)` pairs. Repeated indices are summed.
    pub row: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program in row form with per-variable bounds.
///
/// Built through [`LpBuilder`], which checks the invariants once; after that the
/// value is immutable and can be shared freely between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    sense: Sense,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    var_names: Option<Vec<String>>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn var_name(&self, j: usize) -> String {
        match &self.var_names {
            Some(names) => names[j].clone(),
            None => format!("x{j}"),
        }
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn row_activity(&self, i: usize, x: &[f64]) -> f64 {
        self.constraints[i].row.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Largest violation of any constraint or bound at `x`, scaled by `1 + |rhs|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (i, c) in self.constraints.iter().enumerate() {
            let act = self.row_activity(i, x);
            let viol = match c.relation {
                Relation::Le => act - c.rhs,
                Relation::Ge => c.rhs - act,
                Relation::Eq => (act - c.rhs).abs(),
            };
            worst = worst.max(viol / (1.0 + c.rhs.abs()));
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    /// Plain-text dump, one constraint per line. Meant for eyeballing, not parsing.
    pub fn to_debug_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sense = match self.sense {
            Sense::Maximize => "maximize",
            Sense::Minimize => "minimize",
        };
        write!(f, "{sense}:")?;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                write!(f, " {:+} {}", c, self.var_name(j))?;
            }
        }
        writeln!(f)?;
        for (i, c) in self.constraints.iter().enumerate() {
            write!(f, "r{i}:")?;
            for &(j, a) in &c.row {
                write!(f, " {:+} {}", a, self.var_name(j))?;
            }
            writeln!(f, " {} {}", c.relation, c.rhs)?;
        }
        for j in 0..self.num_vars() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo == 0.0 && hi == f64::INFINITY {
                continue;
            }
            writeln!(f, "bound: {} <= {} <= {}", lo, self.var_name(j), hi)?;
        }
        Ok(())
    }
}

/// Incremental construction of a [`LinearProgram`].
#[derive(Debug, Clone)]
pub struct LpBuilder {
    sense: Sense,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
    named: bool,
}

impl LpBuilder {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            constraints: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            names: Vec::new(),
            named: false,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(String::new());
        self.objective.len() - 1
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        let j = self.add_var(lower, upper, cost);
        self.names[j] = name.into();
        self.named = true;
        j
    }

    pub fn free_var(&mut self, cost: f64) -> usize {
        self.add_var(f64::NEG_INFINITY, f64::INFINITY, cost)
    }

    pub fn nonneg_var(&mut self, cost: f64) -> usize {
        self.add_var(0.0, f64::INFINITY, cost)
    }

    pub fn set_cost(&mut self, j: usize, cost: f64) {
        self.objective[j] = cost;
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    /// Adds a constraint and returns its row index.
    pub fn add_constraint(&mut self, row: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint { row, relation, rhs });
        self.constraints.len() - 1
    }

    pub fn constraint_mut(&mut self, i: usize) -> &mut Constraint {
        &mut self.constraints[i]
    }

    /// Copies the variables and rows of `lp` into this builder, scaling its
    /// objective by `weight`. Returns the new indices of its variables and
    /// rows. The sense of `lp` is ignored.
    pub fn append(&mut self, lp: &LinearProgram, weight: f64) -> (Vec<usize>, Vec<usize>) {
        let vars: Vec<usize> = (0..lp.num_vars())
            .map(|j| self.add_var(lp.lower()[j], lp.upper()[j], weight * lp.objective()[j]))
            .collect();
        let rows = lp
            .constraints()
            .iter()
            .map(|c| {
                let row = c.row.iter().map(|&(j, a)| (vars[j], a)).collect();
                self.add_constraint(row, c.relation, c.rhs)
            })
            .collect();
        (vars, rows)
    }

    pub fn build(self) -> Result<LinearProgram, LpError> {
        let n = self.objective.len();
        for (j, &c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(LpError::Malformed(format!("objective coefficient of variable {j} is {c}")));
            }
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
            if lo > hi {
                return Err(LpError::Malformed(format!("variable {j} has lower bound {lo} above upper bound {hi}")));
            }
        }
        let mut constraints = self.constraints;
        for (i, c) in constraints.iter_mut().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::Malformed(format!("constraint {i} has rhs {}", c.rhs)));
            }
            for &(j, a) in &c.row {
                if j >= n {
                    return Err(LpError::Malformed(format!(
                        "constraint {i} references variable {j} but the program has {n}"
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("constraint {i} has coefficient {a} on variable {j}")));
                }
            }
            c.row = merge_terms(std::mem::take(&mut c.row));
        }
        let var_names = self.named.then(|| {
            self.names
                .into_iter()
                .enumerate()
                .map(|(j, s)| if s.is_empty() { format!("x{j}") } else { s })
                .collect()
        });
        Ok(LinearProgram {
            sense: self.sense,
            objective: self.objective,
            constraints,
            lower: self.lower,
            upper: self.upper,
            var_names,
        })
    }
}

fn merge_terms(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (j, a) in row {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

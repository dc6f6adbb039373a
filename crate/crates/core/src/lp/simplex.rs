use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dual::check_certificate;
use super::model::{LinearProgram, Relation, Sense};
use super::{LpBackend, LpError, LpSolution, LpStatus, SolverConfig};

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 50;
const PIVOT_ZERO: f64 = 1e-11;
const MAX_REINVERSIONS: usize = 3;
/// Relative size of the bound shifts applied when pivots stall.
const PERTURBATION: f64 = 1e-7;
const MAX_PERTURBATIONS: usize = 50;

/// Dense-tableau bounded-variable primal simplex.
///
/// Every row gets a slack whose bounds encode the relation, so the working
/// system is always `A x + s = b` with bounds on `x` and `s`. Rows whose slack
/// cannot absorb the initial residual get an artificial variable and phase one
/// minimizes their sum. Columns of artificials are never stored because they
/// never re-enter the basis.
///
/// A long run of degenerate pivots widens the bounds of the basic variables
/// sitting on them by small random amounts. Once optimal, the original bounds
/// come back, any leftover infeasibility is removed by minimizing its sum, and
/// the final pass runs unperturbed with Bland's rule as the stall fallback.
#[derive(Debug, Clone, Default)]
pub struct DenseSimplex {
    pub config: SolverConfig,
}

impl DenseSimplex {
    pub fn new(config: SolverConfig) -> Self {
        Self { config }
    }
}

impl LpBackend for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let mut tab = Tableau::new(lp, &self.config);
        tab.run()
    }
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

enum Step {
    Unbounded,
    /// Step length and the variable that left the basis, if any.
    Moved(f64, Option<usize>),
}

struct Tableau<'a> {
    lp: &'a LinearProgram,
    tol: f64,
    ftol: f64,
    max_iter: usize,
    m: usize,
    n: usize,
    ncol: usize,
    sigma: Vec<f64>,
    /// Row-major `m x ncol` image of `[A | I]` under the current basis inverse.
    t: Vec<f64>,
    d: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    at_upper: Vec<bool>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    iterations: usize,
    /// Bounds before the first perturbation.
    saved: Option<(Vec<f64>, Vec<f64>)>,
    perturbations: usize,
    rng: ChaCha8Rng,
}

impl<'a> Tableau<'a> {
    fn new(lp: &'a LinearProgram, cfg: &SolverConfig) -> Self {
        let m = lp.num_constraints();
        let n = lp.num_vars();
        let ncol = n + m;
        let total = ncol + m;
        let mut lo = vec![0.0; total];
        let mut hi = vec![0.0; total];
        let mut x = vec![0.0; total];
        let mut at_upper = vec![false; total];
        lo[..n].copy_from_slice(lp.lower());
        hi[..n].copy_from_slice(lp.upper());
        for j in 0..n {
            if lo[j].is_finite() {
                x[j] = lo[j];
            } else if hi[j].is_finite() {
                x[j] = hi[j];
                at_upper[j] = true;
            }
        }
        let mut sigma = vec![1.0; m];
        let mut t = vec![0.0; m * ncol];
        let mut basis = vec![0; m];
        let mut row_of = vec![usize::MAX; total];
        for (i, c) in lp.constraints().iter().enumerate() {
            let s = n + i;
            let a = ncol + i;
            (lo[s], hi[s]) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            let resid = c.rhs - c.row.iter().map(|&(j, v)| v * x[j]).sum::<f64>();
            if resid >= lo[s] && resid <= hi[s] {
                basis[i] = s;
                x[s] = resid;
                // The artificial of this row is dead from the start.
                hi[a] = 0.0;
            } else {
                let clamped = resid.clamp(lo[s], hi[s]);
                x[s] = clamped;
                at_upper[s] = clamped == hi[s] && lo[s] != hi[s];
                sigma[i] = if resid > clamped { 1.0 } else { -1.0 };
                basis[i] = a;
                x[a] = (resid - clamped).abs();
                hi[a] = f64::INFINITY;
            }
            row_of[basis[i]] = i;
            let row = &mut t[i * ncol..(i + 1) * ncol];
            for &(j, v) in &c.row {
                row[j] = sigma[i] * v;
            }
            row[s] = sigma[i];
        }
        let max_iter = if cfg.max_iterations > 0 { cfg.max_iterations } else { 10_000 + 50 * (m + n) };
        Self {
            lp,
            tol: cfg.tolerance,
            ftol: cfg.tolerance * 0.1,
            max_iter,
            m,
            n,
            ncol,
            sigma,
            t,
            d: vec![0.0; ncol],
            cost: vec![0.0; total],
            lo,
            hi,
            x,
            at_upper,
            basis,
            row_of,
            iterations: 0,
            saved: None,
            perturbations: 0,
            rng: ChaCha8Rng::seed_from_u64(0x5eed),
        }
    }

    fn run(&mut self) -> Result<LpSolution, LpError> {
        if self.basis.iter().any(|&b| b >= self.ncol) {
            for i in 0..self.m {
                self.cost[self.ncol + i] = 1.0;
            }
            self.price_all();
            match self.iterate()? {
                PhaseEnd::Optimal => {}
                PhaseEnd::Unbounded => {
                    return Err(LpError::NumericalFailure("phase one reported an unbounded ray".into()))
                }
            }
            self.refresh_basic_values();
            for (i, c) in self.lp.constraints().iter().enumerate() {
                let b = self.basis[i];
                if b >= self.ncol && self.x[b] > self.tol * (1.0 + c.rhs.abs()) {
                    return Ok(self.terminal(LpStatus::Infeasible));
                }
            }
            for i in 0..self.m {
                let a = self.ncol + i;
                self.cost[a] = 0.0;
                self.hi[a] = 0.0;
                if self.row_of[a] == usize::MAX {
                    self.x[a] = 0.0;
                }
            }
        }
        let sign = match self.lp.sense() {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        for (j, &c) in self.lp.objective().iter().enumerate() {
            self.cost[j] = sign * c;
        }
        self.price_all();

        let mut reinversions = 0;
        loop {
            if let PhaseEnd::Unbounded = self.iterate()? {
                return Ok(self.terminal(LpStatus::Unbounded));
            }
            if self.saved.is_some() {
                self.restore_bounds();
                self.perturbations = MAX_PERTURBATIONS;
                if !self.reduce_infeasibility()? {
                    return Ok(self.terminal(LpStatus::Infeasible));
                }
                self.price_all();
                continue;
            }
            self.refresh_basic_values();
            let sol = self.extract(sign);
            let cert = check_certificate(self.lp, &sol.primal, sol.duals.as_deref().unwrap_or(&[]));
            let scale = 1.0 + sol.objective_value.abs();
            if cert.primal_infeasibility <= self.tol
                && cert.dual_infeasibility <= self.tol * scale
                && cert.gap <= self.tol * scale
            {
                return Ok(sol);
            }
            if reinversions == MAX_REINVERSIONS {
                return Err(LpError::NumericalFailure(format!(
                    "residuals stayed above tolerance after {MAX_REINVERSIONS} reinversions \
                     (primal {:.3e}, dual {:.3e}, gap {:.3e})",
                    cert.primal_infeasibility, cert.dual_infeasibility, cert.gap
                )));
            }
            reinversions += 1;
            log::debug!(
                "reinverting basis: primal {:.3e}, dual {:.3e}, gap {:.3e}",
                cert.primal_infeasibility,
                cert.dual_infeasibility,
                cert.gap
            );
            self.reinvert()?;
            for i in 0..self.m {
                let b = self.basis[i];
                let slack = self.ftol.max(self.tol * 1e-1);
                if self.x[b] < self.lo[b] - slack || self.x[b] > self.hi[b] + slack {
                    return Err(LpError::NumericalFailure(
                        "basis lost primal feasibility after reinversion".into(),
                    ));
                }
            }
        }
    }

    fn terminal(&self, status: LpStatus) -> LpSolution {
        let objective_value = match (status, self.lp.sense()) {
            (LpStatus::Unbounded, Sense::Maximize) => f64::INFINITY,
            (LpStatus::Unbounded, Sense::Minimize) => f64::NEG_INFINITY,
            _ => f64::NAN,
        };
        LpSolution { status, objective_value, primal: Vec::new(), duals: None, iterations: self.iterations }
    }

    fn extract(&self, sign: f64) -> LpSolution {
        let primal: Vec<f64> = (0..self.n).map(|j| self.x[j].clamp(self.lo[j], self.hi[j])).collect();
        // The reduced cost of a slack is minus the row's dual in the internal
        // minimization; undo the sense flip to get shadow prices.
        let duals: Vec<f64> = (0..self.m).map(|i| -sign * self.d[self.n + i]).map(|y| y + 0.0).collect();
        LpSolution {
            status: LpStatus::Optimal,
            objective_value: self.lp.objective_at(&primal),
            primal,
            duals: Some(duals),
            iterations: self.iterations,
        }
    }

    fn price_all(&mut self) {
        let ncol = self.ncol;
        self.d.copy_from_slice(&self.cost[..ncol]);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * ncol..(i + 1) * ncol];
            for (dj, &tij) in self.d.iter_mut().zip(row) {
                *dj -= cb * tij;
            }
        }
        for &b in &self.basis {
            if b < ncol {
                self.d[b] = 0.0;
            }
        }
    }

    fn refresh_basic_values(&mut self) {
        let ncol = self.ncol;
        let rhs: Vec<f64> = self.lp.constraints().iter().map(|c| c.rhs).collect();
        for i in 0..self.m {
            let row = &self.t[i * ncol..(i + 1) * ncol];
            let mut v = 0.0;
            for (k, &b) in rhs.iter().enumerate() {
                v += row[self.n + k] * b;
            }
            for j in 0..ncol {
                if self.row_of[j] == usize::MAX && self.x[j] != 0.0 && row[j] != 0.0 {
                    v -= row[j] * self.x[j];
                }
            }
            self.x[self.basis[i]] = v;
        }
    }

    fn entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.ncol {
            if self.row_of[j] != usize::MAX || self.lo[j] == self.hi[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = if self.lo[j] == f64::NEG_INFINITY && self.hi[j] == f64::INFINITY {
                if dj < -self.ftol {
                    1.0
                } else if dj > self.ftol {
                    -1.0
                } else {
                    continue;
                }
            } else if self.at_upper[j] {
                if dj > self.ftol {
                    -1.0
                } else {
                    continue;
                }
            } else if dj < -self.ftol {
                1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn iterate(&mut self) -> Result<PhaseEnd, LpError> {
        let mut degenerate = 0;
        loop {
            if degenerate > DEGENERATE_LIMIT && self.perturbations < MAX_PERTURBATIONS {
                self.perturb();
                degenerate = 0;
            }
            let bland = degenerate > DEGENERATE_LIMIT;
            let Some((q, dir)) = self.entering(bland) else {
                return Ok(PhaseEnd::Optimal);
            };
            match self.step(q, dir, bland)? {
                Step::Unbounded => return Ok(PhaseEnd::Unbounded),
                Step::Moved(len, _) if len > self.ftol => degenerate = 0,
                Step::Moved(..) => degenerate += 1,
            }
        }
    }

    /// Moves nonbasic `q` in direction `dir` as far as the bounds allow and
    /// pivots it in unless it just flips to its other bound.
    fn step(&mut self, q: usize, dir: f64, bland: bool) -> Result<Step, LpError> {
        let ncol = self.ncol;
        self.iterations += 1;
        if self.iterations > self.max_iter {
            return Err(LpError::IterationLimit(self.max_iter));
        }
        let col: Vec<f64> = (0..self.m).map(|i| dir * self.t[i * ncol + q]).collect();
        let flip = self.hi[q] - self.lo[q];
        let (leave, step) = if bland { self.ratio_textbook(&col) } else { self.ratio_harris(&col) };
        let do_flip = flip.is_finite() && leave.is_none_or(|_| flip <= step);
        if leave.is_none() && !flip.is_finite() {
            return Ok(Step::Unbounded);
        }
        let step = if do_flip { flip } else { step.max(0.0) };
        if step != 0.0 {
            for (i, &a) in col.iter().enumerate() {
                if a != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= step * a;
                }
            }
        }
        if do_flip {
            self.at_upper[q] = dir > 0.0;
            self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            return Ok(Step::Moved(step, None));
        }
        self.x[q] += dir * step;
        let r = leave.expect("ratio test picked a row");
        let p = self.basis[r];
        if col[r] > 0.0 {
            self.x[p] = self.lo[p];
            self.at_upper[p] = false;
        } else {
            self.x[p] = self.hi[p];
            self.at_upper[p] = true;
        }
        if p >= ncol {
            self.hi[p] = 0.0;
            self.x[p] = 0.0;
        }
        self.pivot(r, q);
        Ok(Step::Moved(step, Some(p)))
    }

    /// Widens the bounds that basic variables sit on.
    fn perturb(&mut self) {
        if self.saved.is_none() {
            self.saved = Some((self.lo.clone(), self.hi.clone()));
        }
        self.perturbations += 1;
        for i in 0..self.m {
            let b = self.basis[i];
            if b >= self.ncol {
                continue;
            }
            let lo = self.lo[b];
            let hi = self.hi[b];
            if lo.is_finite() && self.x[b] - lo <= PERTURBATION * (1.0 + lo.abs()) {
                self.lo[b] -= PERTURBATION * (1.0 + lo.abs()) * (1.0 + self.rng.random::<f64>());
            }
            if hi.is_finite() && hi - self.x[b] <= PERTURBATION * (1.0 + hi.abs()) {
                self.hi[b] += PERTURBATION * (1.0 + hi.abs()) * (1.0 + self.rng.random::<f64>());
            }
        }
    }

    /// Puts the saved bounds back and moves nonbasic variables onto them.
    fn restore_bounds(&mut self) {
        let (lo, hi) = self.saved.take().expect("bounds were saved");
        for j in 0..self.ncol {
            self.lo[j] = lo[j];
            self.hi[j] = hi[j];
            if self.row_of[j] != usize::MAX {
                continue;
            }
            if lo[j] == hi[j] {
                self.x[j] = lo[j];
                self.at_upper[j] = false;
            } else if self.at_upper[j] && hi[j].is_finite() {
                self.x[j] = hi[j];
            } else if lo[j].is_finite() {
                self.x[j] = lo[j];
                self.at_upper[j] = false;
            } else if hi[j].is_finite() {
                self.x[j] = hi[j];
                self.at_upper[j] = true;
            }
        }
        self.refresh_basic_values();
    }

    /// Minimizes the total bound violation of the basic variables starting
    /// from the current basis. Returns whether all violations were removed.
    fn reduce_infeasibility(&mut self) -> Result<bool, LpError> {
        let ncol = self.ncol;
        let mut degenerate = 0;
        loop {
            let mut lo = self.lo.clone();
            let mut hi = self.hi.clone();
            let mut cb = vec![0.0; self.m];
            for (i, &b) in self.basis.iter().enumerate() {
                let slack = self.ftol * (1.0 + self.lo[b].abs().min(self.hi[b].abs()));
                if self.x[b] < self.lo[b] - slack {
                    cb[i] = -1.0;
                    lo[b] = f64::NEG_INFINITY;
                    hi[b] = self.lo[b];
                } else if self.x[b] > self.hi[b] + slack {
                    cb[i] = 1.0;
                    lo[b] = self.hi[b];
                    hi[b] = f64::INFINITY;
                }
            }
            if cb.iter().all(|&c| c == 0.0) {
                return Ok(true);
            }
            self.d.iter_mut().for_each(|d| *d = 0.0);
            for (i, &c) in cb.iter().enumerate() {
                if c != 0.0 {
                    let row = &self.t[i * ncol..(i + 1) * ncol];
                    for (dj, &tij) in self.d.iter_mut().zip(row) {
                        *dj -= c * tij;
                    }
                }
            }
            for &b in &self.basis {
                if b < ncol {
                    self.d[b] = 0.0;
                }
            }
            let bland = degenerate > DEGENERATE_LIMIT;
            let Some((q, dir)) = self.entering(bland) else {
                return Ok(false);
            };
            std::mem::swap(&mut self.lo, &mut lo);
            std::mem::swap(&mut self.hi, &mut hi);
            let outcome = self.step(q, dir, bland);
            std::mem::swap(&mut self.lo, &mut lo);
            std::mem::swap(&mut self.hi, &mut hi);
            match outcome? {
                Step::Unbounded => {
                    return Err(LpError::NumericalFailure("infeasibility reduction found an unbounded ray".into()))
                }
                Step::Moved(len, left) => {
                    if let Some(p) = left {
                        self.at_upper[p] = self.x[p] == self.hi[p] && self.lo[p] != self.hi[p];
                    }
                    if len > self.ftol {
                        degenerate = 0;
                    } else {
                        degenerate += 1;
                    }
                }
            }
        }
    }

    /// Two-pass ratio test: find the largest step that keeps every basic
    /// variable within its bounds relaxed by the feasibility tolerance, then
    /// among rows blocking within that step take the largest pivot.
    fn ratio_harris(&self, col: &[f64]) -> (Option<usize>, f64) {
        let mut theta = f64::INFINITY;
        for (i, &a) in col.iter().enumerate() {
            let b = self.basis[i];
            if a > PIVOT_ZERO && self.lo[b].is_finite() {
                theta = theta.min((self.x[b] - self.lo[b] + self.ftol) / a);
            } else if a < -PIVOT_ZERO && self.hi[b].is_finite() {
                theta = theta.min((self.hi[b] - self.x[b] + self.ftol) / -a);
            }
        }
        if theta == f64::INFINITY {
            return (None, f64::INFINITY);
        }
        let mut best: Option<usize> = None;
        let mut best_abs = 0.0;
        let mut best_ratio = 0.0;
        for (i, &a) in col.iter().enumerate() {
            let b = self.basis[i];
            let ratio = if a > PIVOT_ZERO && self.lo[b].is_finite() {
                (self.x[b] - self.lo[b]) / a
            } else if a < -PIVOT_ZERO && self.hi[b].is_finite() {
                (self.hi[b] - self.x[b]) / -a
            } else {
                continue;
            };
            if ratio <= theta && a.abs() > best_abs {
                best_abs = a.abs();
                best = Some(i);
                best_ratio = ratio;
            }
        }
        (best, best_ratio)
    }

    /// Minimum-ratio test with ties broken by the smallest basic index.
    fn ratio_textbook(&self, col: &[f64]) -> (Option<usize>, f64) {
        let mut best: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for (i, &a) in col.iter().enumerate() {
            let b = self.basis[i];
            let gap = if a > PIVOT_ZERO && self.lo[b].is_finite() {
                self.x[b] - self.lo[b]
            } else if a < -PIVOT_ZERO && self.hi[b].is_finite() {
                self.hi[b] - self.x[b]
            } else {
                continue;
            };
            let ratio = if gap <= self.ftol { 0.0 } else { gap / a.abs() };
            let better = match best {
                None => true,
                Some(k) => ratio < best_ratio || (ratio == best_ratio && b < self.basis[k]),
            };
            if better {
                best = Some(i);
                best_ratio = ratio;
            }
        }
        (best, best_ratio)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let ncol = self.ncol;
        let piv = self.t[r * ncol + q];
        let inv = 1.0 / piv;
        let mut prow: Vec<f64> = self.t[r * ncol..(r + 1) * ncol].iter().map(|v| v * inv).collect();
        prow[q] = 1.0;
        let nz: Vec<usize> = prow.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect();
        let dense = nz.len() * 3 > ncol;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let row = &mut self.t[i * ncol..(i + 1) * ncol];
            let f = row[q];
            if f == 0.0 {
                continue;
            }
            if dense {
                for (v, &p) in row.iter_mut().zip(&prow) {
                    *v -= f * p;
                }
            } else {
                for &j in &nz {
                    row[j] -= f * prow[j];
                }
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for &j in &nz {
                self.d[j] -= f * prow[j];
            }
            self.d[q] = 0.0;
        }
        self.t[r * ncol..(r + 1) * ncol].copy_from_slice(&prow);
        let p = self.basis[r];
        self.row_of[p] = usize::MAX;
        self.basis[r] = q;
        self.row_of[q] = r;
    }

    /// Rebuilds the tableau, basic values and reduced costs for the current
    /// basis straight from the problem data.
    fn reinvert(&mut self) -> Result<(), LpError> {
        let (m, n, ncol) = (self.m, self.n, self.ncol);
        let width = m + ncol;
        let mut w = vec![0.0; m * width];
        for (i, c) in self.lp.constraints().iter().enumerate() {
            let s = self.sigma[i];
            let row = &mut w[i * width..(i + 1) * width];
            for &(j, v) in &c.row {
                row[m + j] = s * v;
            }
            row[m + n + i] = s;
        }
        for (k, &b) in self.basis.iter().enumerate() {
            if b >= ncol {
                w[(b - ncol) * width + k] = 1.0;
            } else {
                for i in 0..m {
                    w[i * width + k] = w[i * width + m + b];
                }
            }
        }
        for k in 0..m {
            let mut p = k;
            let mut best = w[k * width + k].abs();
            for i in k + 1..m {
                let v = w[i * width + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-13 {
                return Err(LpError::NumericalFailure("basis matrix is singular".into()));
            }
            if p != k {
                for j in 0..width {
                    w.swap(k * width + j, p * width + j);
                }
            }
            let inv = 1.0 / w[k * width + k];
            for j in 0..width {
                w[k * width + j] *= inv;
            }
            let prow: Vec<f64> = w[k * width..(k + 1) * width].to_vec();
            for i in 0..m {
                if i == k {
                    continue;
                }
                let f = w[i * width + k];
                if f == 0.0 {
                    continue;
                }
                for j in 0..width {
                    w[i * width + j] -= f * prow[j];
                }
            }
        }
        for i in 0..m {
            self.t[i * ncol..(i + 1) * ncol].copy_from_slice(&w[i * width + m..(i + 1) * width]);
            for &b in &self.basis {
                if b < ncol {
                    self.t[i * ncol + b] = if self.row_of[b] == i { 1.0 } else { 0.0 };
                }
            }
        }
        self.refresh_basic_values();
        self.price_all();
        Ok(())
    }
}

use super::{PiecewiseLinearUtility, UtilityFunction};
use crate::lp::{self, LpBuilder, Relation, Sense};
use crate::{Error, Result};

fn common_grid(
    u: &PiecewiseLinearUtility,
    v: &PiecewiseLinearUtility,
) -> Result<(PiecewiseLinearUtility, PiecewiseLinearUtility)> {
    if u.grid() == v.grid() {
        return Ok((u.clone(), v.clone()));
    }
    let g = u.grid().merge(v.grid());
    Ok((u.on_grid(&g)?, v.on_grid(&g)?))
}

fn optimal_value(lp: &lp::LinearProgram) -> Result<f64> {
    let sol = lp::solve(lp)?;
    match sol.status {
        lp::LpStatus::Optimal => Ok(sol.objective_value),
        lp::LpStatus::Infeasible => Err(Error::Infeasible("distance program has no feasible point".into())),
        lp::LpStatus::Unbounded => Err(Error::Unbounded("distance program is unbounded".into())),
    }
}

/// Kantorovich distance through the test-function LP.
///
/// With `w_j` standing for the integral of a 1-Lipschitz `g` over interval `j`
/// and `z_j = g(y_j)`, each `w_j` is boxed by `z_{j-1}` and by `z_j`. The box
/// is implied by Lipschitz continuity but not the other way round, so the
/// value can exceed the exact distance on coarse grids.
pub fn kantorovich_lp(u: &PiecewiseLinearUtility, v: &PiecewiseLinearUtility) -> Result<f64> {
    let (u, v) = common_grid(u, v)?;
    let n = u.grid().len();
    let (bu, bv) = (u.slopes(), v.slopes());
    let mut b = LpBuilder::new(Sense::Maximize);
    let w: Vec<usize> = (1..n).map(|j| b.free_var(bu[j - 1] - bv[j - 1])).collect();
    let z: Vec<usize> = (0..n).map(|_| b.free_var(0.0)).collect();
    for j in 1..n {
        let d = u.grid().width(j);
        let half = 0.5 * d * d;
        for zk in [z[j - 1], z[j]] {
            b.add_constraint(vec![(w[j - 1], 1.0), (zk, -d)], Relation::Le, half);
            b.add_constraint(vec![(w[j - 1], -1.0), (zk, d)], Relation::Le, half);
        }
    }
    optimal_value(&b.build()?)
}

/// The Lagrangian dual of [`kantorovich_lp`]: multipliers `lambda, mu` for the
/// two bounds through `z_{j-1}` and `rho, psi` for those through `z_j`.
pub fn kantorovich_lp_dual(u: &PiecewiseLinearUtility, v: &PiecewiseLinearUtility) -> Result<f64> {
    let (u, v) = common_grid(u, v)?;
    let n = u.grid().len();
    let (bu, bv) = (u.slopes(), v.slopes());
    let mut b = LpBuilder::new(Sense::Minimize);
    let mut lam = Vec::new();
    let mut mu = Vec::new();
    let mut rho = Vec::new();
    let mut psi = Vec::new();
    for j in 1..n {
        let d = u.grid().width(j);
        let c = 0.5 * d * d;
        lam.push(b.nonneg_var(c));
        mu.push(b.nonneg_var(c));
        rho.push(b.nonneg_var(c));
        psi.push(b.nonneg_var(c));
    }
    for k in 0..n - 1 {
        b.add_constraint(
            vec![(lam[k], 1.0), (mu[k], -1.0), (rho[k], 1.0), (psi[k], -1.0)],
            Relation::Eq,
            bu[k] - bv[k],
        );
    }
    // One row per z_k: it meets interval k+1 through its left end and
    // interval k through its right end.
    for k in 0..n {
        let mut row = Vec::new();
        if k + 1 < n {
            let d = u.grid().width(k + 1);
            row.push((mu[k], d));
            row.push((lam[k], -d));
        }
        if k > 0 {
            let d = u.grid().width(k);
            row.push((psi[k - 1], d));
            row.push((rho[k - 1], -d));
        }
        b.add_constraint(row, Relation::Eq, 0.0);
    }
    optimal_value(&b.build()?)
}

/// `\int_a^b |u - v|`, which equals the Kantorovich distance for normalized
/// nondecreasing functions. Exact for piecewise linear inputs.
pub fn kantorovich_exact(u: &PiecewiseLinearUtility, v: &PiecewiseLinearUtility) -> Result<f64> {
    let (u, v) = common_grid(u, v)?;
    let y = u.breakpoints();
    let d: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
    let mut total = 0.0;
    for j in 1..y.len() {
        let h = y[j] - y[j - 1];
        let (d0, d1) = (d[j - 1], d[j]);
        total += if d0 * d1 >= 0.0 {
            0.5 * (d0.abs() + d1.abs()) * h
        } else {
            0.5 * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs()) * h
        };
    }
    Ok(total)
}

/// Kolmogorov distance: for normalized functions this is the sup-norm of the
/// difference, attained at a breakpoint of the merged grid.
pub fn kolmogorov(u: &PiecewiseLinearUtility, v: &PiecewiseLinearUtility) -> Result<f64> {
    let (u, v) = common_grid(u, v)?;
    Ok(u.values().iter().zip(v.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn sample_points(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 })
}

/// Max of `|f - g|` over `n` equally spaced points of `f`'s domain.
pub fn sup_norm_sampled(f: &impl UtilityFunction, g: &impl UtilityFunction, n: usize) -> f64 {
    let (a, b) = f.domain();
    sample_points(a, b, n).map(|x| (f.value(x) - g.value(x)).abs()).fold(0.0, f64::max)
}

/// Trapezoidal estimate of `\int |f - g|` on `n` equally spaced points.
pub fn l1_sampled(f: &impl UtilityFunction, g: &impl UtilityFunction, n: usize) -> f64 {
    let (a, b) = f.domain();
    let d: Vec<f64> = sample_points(a, b, n).map(|x| (f.value(x) - g.value(x)).abs()).collect();
    let h = (b - a) / (d.len() - 1) as f64;
    d.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum()
}

/// Observed moduli `(max_j beta_j, max_j |beta_{j+2} - beta_{j+1}| / (y_{j+2} - y_j))`.
pub fn lipschitz_moduli(u: &PiecewiseLinearUtility) -> (f64, f64) {
    let s = u.slopes();
    let y = u.breakpoints();
    let l = s.iter().copied().fold(0.0, f64::max);
    let lt = (0..s.len().saturating_sub(1))
        .map(|j| (s[j + 1] - s[j]).abs() / (y[j + 2] - y[j]))
        .fold(0.0, f64::max);
    (l, lt)
}

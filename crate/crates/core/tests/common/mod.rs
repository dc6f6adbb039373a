//! Oracles shared by the integration tests. Nothing here calls into the solver.
#![allow(dead_code)]

use mspro::lp::{LinearProgram, LpBuilder, Relation, Sense};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub mod problems;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

/// Half-width of the box used to give free directions a vertex.
const BOX: f64 = 1e4;

/// Brute-force LP oracle: enumerate every basic solution of the program
/// intersected with a large box, and decide boundedness from the recession cone.
pub fn vertex_oracle(lp: &LinearProgram) -> Oracle {
    let n = lp.num_vars();
    let sign = if lp.sense() == Sense::Maximize { 1.0 } else { -1.0 };
    let c: Vec<f64> = lp.objective().iter().map(|v| sign * v).collect();

    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for con in lp.constraints() {
        planes.push((dense_row(n, &con.row), con.rhs));
    }
    for j in 0..n {
        let lo = lp.lower()[j];
        let hi = lp.upper()[j];
        planes.push((unit(n, j), if lo.is_finite() { lo } else { -BOX }));
        planes.push((unit(n, j), if hi.is_finite() { hi } else { BOX }));
    }
    let feasible = |x: &[f64]| {
        let rows_ok = lp.constraints().iter().all(|con| {
            let act: f64 = con.row.iter().map(|&(j, a)| a * x[j]).sum();
            let tol = 1e-9 * (1.0 + con.rhs.abs());
            match con.relation {
                Relation::Le => act <= con.rhs + tol,
                Relation::Ge => act >= con.rhs - tol,
                Relation::Eq => (act - con.rhs).abs() <= tol,
            }
        });
        rows_ok
            && (0..n).all(|j| {
                x[j] >= lp.lower()[j].max(-BOX) - 1e-9 && x[j] <= lp.upper()[j].min(BOX) + 1e-9
            })
    };
    let Some(best) = best_vertex(n, &planes, feasible, &c) else {
        return Oracle::Infeasible;
    };

    // Recession cone, cut down to the unit box.
    let mut rplanes: Vec<(Vec<f64>, f64)> = Vec::new();
    for con in lp.constraints() {
        rplanes.push((dense_row(n, &con.row), 0.0));
    }
    let mut rlo = vec![-1.0; n];
    let mut rhi = vec![1.0; n];
    for j in 0..n {
        if lp.lower()[j].is_finite() {
            rlo[j] = 0.0;
        }
        if lp.upper()[j].is_finite() {
            rhi[j] = 0.0;
        }
        rplanes.push((unit(n, j), rlo[j]));
        rplanes.push((unit(n, j), rhi[j]));
    }
    let rfeasible = |d: &[f64]| {
        lp.constraints().iter().all(|con| {
            let act: f64 = con.row.iter().map(|&(j, a)| a * d[j]).sum();
            match con.relation {
                Relation::Le => act <= 1e-9,
                Relation::Ge => act >= -1e-9,
                Relation::Eq => act.abs() <= 1e-9,
            }
        }) && (0..n).all(|j| d[j] >= rlo[j] - 1e-9 && d[j] <= rhi[j] + 1e-9)
    };
    let ray = best_vertex(n, &rplanes, rfeasible, &c).unwrap_or(0.0);
    if ray > 1e-9 {
        return Oracle::Unbounded;
    }
    Oracle::Optimal(sign * best)
}

fn dense_row(n: usize, row: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &(j, a) in row {
        v[j] += a;
    }
    v
}

fn unit(n: usize, j: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[j] = 1.0;
    v
}

fn best_vertex(
    n: usize,
    planes: &[(Vec<f64>, f64)],
    feasible: impl Fn(&[f64]) -> bool,
    c: &[f64],
) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    let h = planes.len();
    if n > h {
        return None;
    }
    loop {
        let a = DMatrix::from_fn(n, n, |r, col| planes[idx[r]].0[col]);
        let b = DVector::from_fn(n, |r, _| planes[idx[r]].1);
        let lu = a.clone().lu();
        if lu.determinant().abs() > 1e-10 {
            if let Some(x) = lu.solve(&b) {
                let x: Vec<f64> = x.iter().copied().collect();
                if feasible(&x) {
                    let v: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
                    best = Some(best.map_or(v, |bv: f64| bv.max(v)));
                }
            }
        }
        // Next combination in lexicographic order.
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < h - n + k {
                idx[k] += 1;
                for t in k + 1..n {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Small LP with integer data, at most 6 variables and 8 rows, mixing every
/// bound shape and relation.
pub fn random_small_lp(rng: &mut impl Rng) -> LinearProgram {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(1..=8);
    let sense = if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    let mut b = LpBuilder::new(sense);
    for _ in 0..n {
        let c = rng.random_range(-5..=5) as f64;
        let l = rng.random_range(-4..=0) as f64;
        let u = rng.random_range(1..=6) as f64;
        let (lo, hi) = match rng.random_range(0..6) {
            0 | 1 => (0.0, f64::INFINITY),
            2 => (0.0, u),
            3 => (l, u),
            4 => (f64::NEG_INFINITY, f64::INFINITY),
            _ => (l, f64::INFINITY),
        };
        b.add_var(lo, hi, c);
    }
    for _ in 0..m {
        let mut row = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.7) {
                row.push((j, rng.random_range(-4..=4) as f64));
            }
        }
        let rel = match rng.random_range(0..5) {
            0 | 1 | 2 => Relation::Le,
            3 => Relation::Ge,
            _ => Relation::Eq,
        };
        b.add_constraint(row, rel, rng.random_range(-8..=8) as f64);
    }
    b.build().expect("generated LP is well formed")
}

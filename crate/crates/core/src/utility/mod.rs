//! Utility functions on a bounded interval and distances between them.

mod closed_form;
mod metrics;

pub use closed_form::{ClosedFormKind, ClosedFormUtility};
pub use metrics::{
    kantorovich_exact, kantorovich_lp, kantorovich_lp_dual, kolmogorov, l1_sampled, lipschitz_moduli,
    sup_norm_sampled,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance for the normalization and monotonicity checks on construction.
pub const SHAPE_TOL: f64 = 1e-9;

/// Anything that can be evaluated on its domain.
pub trait UtilityFunction {
    fn value(&self, x: f64) -> f64;
    fn domain(&self) -> (f64, f64);
}

/// Strictly increasing breakpoints `y_1 < ... < y_N`, `N >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid(Vec<f64>);

impl TryFrom<Vec<f64>> for Grid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Grid::new(points)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.0
    }
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!("a grid needs at least 2 points, got {}", points.len())));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("grid contains a non-finite point".into()));
        }
        if let Some(w) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "grid is not strictly increasing at index {}: {} then {}",
                w + 1,
                points[w],
                points[w + 1]
            )));
        }
        Ok(Self(points))
    }

    /// `n` equally spaced points from `a` to `b`, endpoints exact.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 || !(a < b) {
            return Err(Error::InvalidInput(format!("cannot build a uniform grid of {n} points on [{a}, {b}]")));
        }
        let h = (b - a) / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|k| a + h * k as f64).collect();
        pts[n - 1] = b;
        Self::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn a(&self) -> f64 {
        self.0[0]
    }

    pub fn b(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Width of interval `j`, i.e. `y_j - y_{j-1}` for `j = 1..N-1` (0-based).
    pub fn width(&self, j: usize) -> f64 {
        self.0[j] - self.0[j - 1]
    }

    /// Largest gap between consecutive breakpoints.
    pub fn mesh(&self) -> f64 {
        self.0.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Union of both grids. Points closer than `1e-12` are treated as one.
    pub fn merge(&self, other: &Grid) -> Grid {
        let mut pts: Vec<f64> = self.0.iter().chain(&other.0).copied().collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|b, a| (*b - *a).abs() <= 1e-12);
        Grid(pts)
    }

    /// Index `j >= 1` of the interval `[y_{j-1}, y_j]` holding `x` (clamped).
    pub fn locate(&self, x: f64) -> usize {
        let k = self.0.partition_point(|&p| p < x);
        k.clamp(1, self.0.len() - 1)
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.0.iter().position(|&p| (p - x).abs() <= 1e-12)
    }
}

fn clamp_to_domain(x: f64, a: f64, b: f64) -> f64 {
    if x < a || x > b {
        if x < a - SHAPE_TOL || x > b + SHAPE_TOL {
            log::warn!("utility evaluated at {x}, outside [{a}, {b}]; clamping");
        }
        x.clamp(a, b)
    } else {
        x
    }
}

/// Normalized nondecreasing piecewise linear utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlRecord", into = "PlRecord")]
pub struct PiecewiseLinearUtility {
    grid: Grid,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PlRecord {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<PlRecord> for PiecewiseLinearUtility {
    type Error = Error;

    fn try_from(r: PlRecord) -> Result<Self> {
        PiecewiseLinearUtility::new(Grid::new(r.breakpoints)?, r.values)
    }
}

impl From<PiecewiseLinearUtility> for PlRecord {
    fn from(u: PiecewiseLinearUtility) -> Self {
        PlRecord { breakpoints: u.grid.0, values: u.values }
    }
}

impl PiecewiseLinearUtility {
    /// Checks monotonicity and normalization up to [`SHAPE_TOL`], then snaps
    /// the endpoints to exactly 0 and 1 and removes dips below that tolerance,
    /// so solver output can be passed straight in.
    pub fn new(grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for a grid of {} breakpoints",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("utility values must be finite".into()));
        }
        let n = values.len();
        if values[0].abs() > SHAPE_TOL || (values[n - 1] - 1.0).abs() > SHAPE_TOL {
            return Err(Error::InvalidInput(format!(
                "utility is not normalized: u(a) = {}, u(b) = {}",
                values[0],
                values[n - 1]
            )));
        }
        if let Some(j) = values.windows(2).position(|w| w[1] < w[0] - SHAPE_TOL) {
            return Err(Error::InvalidInput(format!("utility decreases between breakpoints {j} and {}", j + 1)));
        }
        values[0] = 0.0;
        values[n - 1] = 1.0;
        for j in 1..n {
            values[j] = values[j].clamp(values[j - 1], 1.0);
        }
        Ok(Self { grid, values })
    }

    /// `u(y) = (y - a) / (b - a)` on the given grid.
    pub fn identity(grid: Grid) -> Self {
        let (a, b) = (grid.a(), grid.b());
        let values = grid.points().iter().map(|y| (y - a) / (b - a)).collect();
        Self::new(grid, values).expect("identity is normalized")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn breakpoints(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Slopes `beta_j` of each interval, `N - 1` of them.
    pub fn slopes(&self) -> Vec<f64> {
        let y = self.grid.points();
        self.values.windows(2).zip(y.windows(2)).map(|(a, y)| (a[1] - a[0]) / (y[1] - y[0])).collect()
    }

    pub fn is_concave(&self, tol: f64) -> bool {
        self.slopes().windows(2).all(|s| s[1] <= s[0] + tol)
    }

    /// The same function sampled on a finer grid that contains this one.
    pub fn on_grid(&self, grid: &Grid) -> Result<Self> {
        if (grid.a() - self.grid.a()).abs() > 1e-12 || (grid.b() - self.grid.b()).abs() > 1e-12 {
            return Err(Error::InvalidInput("target grid spans a different interval".into()));
        }
        let values = grid.points().iter().map(|&y| self.value(y)).collect();
        Self::new(grid.clone(), values)
    }
}

impl UtilityFunction for PiecewiseLinearUtility {
    fn value(&self, x: f64) -> f64 {
        let y = self.grid.points();
        let x = clamp_to_domain(x, y[0], y[y.len() - 1]);
        let j = self.grid.locate(x);
        let t = (x - y[j - 1]) / (y[j] - y[j - 1]);
        (1.0 - t) * self.values[j - 1] + t * self.values[j]
    }

    fn domain(&self) -> (f64, f64) {
        (self.grid.a(), self.grid.b())
    }
}

/// Either kind of utility, for sets that mix them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Utility {
    ClosedForm(ClosedFormUtility),
    PiecewiseLinear(PiecewiseLinearUtility),
}

impl UtilityFunction for Utility {
    fn value(&self, x: f64) -> f64 {
        match self {
            Utility::ClosedForm(u) => u.value(x),
            Utility::PiecewiseLinear(u) => u.value(x),
        }
    }

    fn domain(&self) -> (f64, f64) {
        match self {
            Utility::ClosedForm(u) => u.domain(),
            Utility::PiecewiseLinear(u) => u.domain(),
        }
    }
}

impl From<ClosedFormUtility> for Utility {
    fn from(u: ClosedFormUtility) -> Self {
        Utility::ClosedForm(u)
    }
}

impl From<PiecewiseLinearUtility> for Utility {
    fn from(u: PiecewiseLinearUtility) -> Self {
        Utility::PiecewiseLinear(u)
    }
}

/// Interpolates `u` at the grid points.
pub fn project(u: &ClosedFormUtility, grid: &Grid) -> Result<PiecewiseLinearUtility> {
    let (a, b) = u.domain();
    if (grid.a() - a).abs() > 1e-12 || (grid.b() - b).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "grid spans [{}, {}] but the utility lives on [{a}, {b}]",
            grid.a(),
            grid.b()
        )));
    }
    let values = grid.points().iter().map(|&y| u.value(y)).collect();
    PiecewiseLinearUtility::new(grid.clone(), values)
}

use serde::{Deserialize, Serialize};

use super::{clamp_to_domain, UtilityFunction};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClosedFormKind {
    Linear,
    /// `(1 - exp(-k t)) / (1 - exp(-k))` with `t` the position in the domain.
    Exponential { k: f64 },
    /// `2t - t^2`.
    Quadratic,
    /// Pointwise minimum of `slope * x + intercept` over the pieces, in the
    /// raw coordinate `x`.
    MinAffine { pieces: Vec<(f64, f64)> },
}

/// Concave normalized utility given by a formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Record", into = "Record")]
pub struct ClosedFormUtility {
    kind: ClosedFormKind,
    a: f64,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(flatten)]
    kind: ClosedFormKind,
    #[serde(default)]
    a: f64,
    #[serde(default = "one")]
    b: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<Record> for ClosedFormUtility {
    type Error = Error;

    fn try_from(r: Record) -> Result<Self> {
        ClosedFormUtility::new(r.kind, r.a, r.b)
    }
}

impl From<ClosedFormUtility> for Record {
    fn from(u: ClosedFormUtility) -> Self {
        Record { kind: u.kind, a: u.a, b: u.b }
    }
}

impl ClosedFormUtility {
    /// Validates the parameters and checks `u(a) = 0`, `u(b) = 1`.
    pub fn new(kind: ClosedFormKind, a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput(format!("bad domain [{a}, {b}]")));
        }
        match &kind {
            ClosedFormKind::Exponential { k } if !(*k > 0.0 && k.is_finite()) => {
                return Err(Error::InvalidInput(format!("exponential utility needs k > 0, got {k}")));
            }
            ClosedFormKind::MinAffine { pieces } => {
                if pieces.is_empty() {
                    return Err(Error::InvalidInput("min-affine utility has no pieces".into()));
                }
                if pieces.iter().any(|&(s, c)| !(s >= 0.0) || !s.is_finite() || !c.is_finite()) {
                    return Err(Error::InvalidInput("min-affine pieces need finite nonnegative slopes".into()));
                }
            }
            _ => {}
        }
        let u = Self { kind, a, b };
        let (ua, ub) = (u.raw(a), u.raw(b));
        if ua.abs() > 1e-12 || (ub - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("utility is not normalized: u(a) = {ua}, u(b) = {ub}")));
        }
        Ok(u)
    }

    pub fn linear() -> Self {
        Self { kind: ClosedFormKind::Linear, a: 0.0, b: 1.0 }
    }

    pub fn exponential(k: f64) -> Result<Self> {
        Self::new(ClosedFormKind::Exponential { k }, 0.0, 1.0)
    }

    pub fn quadratic() -> Self {
        Self { kind: ClosedFormKind::Quadratic, a: 0.0, b: 1.0 }
    }

    pub fn min_affine(pieces: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(ClosedFormKind::MinAffine { pieces }, 0.0, 1.0)
    }

    pub fn kind(&self) -> &ClosedFormKind {
        &self.kind
    }

    fn t(&self, x: f64) -> f64 {
        (x - self.a) / (self.b - self.a)
    }

    fn raw(&self, x: f64) -> f64 {
        let t = self.t(x);
        match &self.kind {
            ClosedFormKind::Linear => t,
            ClosedFormKind::Exponential { k } => (-(-k * t).exp_m1()) / (-(-k).exp_m1()),
            ClosedFormKind::Quadratic => 2.0 * t - t * t,
            ClosedFormKind::MinAffine { pieces } => {
                pieces.iter().map(|&(s, c)| s * x + c).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// A supergradient at `x`; the derivative where it exists, otherwise the
    /// right derivative.
    pub fn derivative(&self, x: f64) -> f64 {
        let x = x.clamp(self.a, self.b);
        let w = self.b - self.a;
        let t = self.t(x);
        match &self.kind {
            ClosedFormKind::Linear => 1.0 / w,
            ClosedFormKind::Exponential { k } => k * (-k * t).exp() / (-(-k).exp_m1()) / w,
            ClosedFormKind::Quadratic => (2.0 - 2.0 * t) / w,
            ClosedFormKind::MinAffine { pieces } => {
                let v = self.raw(x);
                pieces
                    .iter()
                    .filter(|&&(s, c)| (s * x + c - v).abs() <= 1e-12)
                    .map(|&(s, _)| s)
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Tangent line `(slope, intercept)` at `x`; lies above the utility.
    pub fn tangent(&self, x: f64) -> (f64, f64) {
        let x = x.clamp(self.a, self.b);
        let s = self.derivative(x);
        (s, self.raw(x) - s * x)
    }

    /// Largest slope on the domain.
    pub fn lipschitz(&self) -> f64 {
        self.derivative(self.a)
    }

    /// Bound on the Lipschitz modulus of the derivative; infinite for kinked
    /// min-affine utilities with more than one active piece.
    pub fn curvature_bound(&self) -> f64 {
        let w = self.b - self.a;
        match &self.kind {
            ClosedFormKind::Linear => 0.0,
            ClosedFormKind::Exponential { k } => k * k / (-(-k).exp_m1()) / (w * w),
            ClosedFormKind::Quadratic => 2.0 / (w * w),
            ClosedFormKind::MinAffine { .. } => {
                if self.derivative(self.a) == self.derivative(self.b) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

impl UtilityFunction for ClosedFormUtility {
    fn value(&self, x: f64) -> f64 {
        self.raw(clamp_to_domain(x, self.a, self.b))
    }

    fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }
}

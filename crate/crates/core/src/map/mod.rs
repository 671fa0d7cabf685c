//! Piecewise expanding unimodal maps of `I = [-1, 1]` with turning point `c = 0`,
//! direction fields, and polynomial families of maps.

pub(crate) mod dynamics;
mod family;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{sup_on, Poly, MAX_DEGREE};

pub use dynamics::{
    critical_orbit, critical_relations, detect_periodic_critical, expansivity_certificate,
    goodness, itinerary, CriticalOrbit, CriticalRelationSet, ExpansivityCertificate, Goodness,
    Itinerary, PeriodicDetection, Symbol,
};
pub use family::{FamilyCurve, FamilyTerm, MapFamily};

/// The turning point.
pub const CRITICAL_POINT: f64 = 0.0;
/// Half-width of the band around `c` classified as the symbol `C`.
pub const DEFAULT_TOL_C: f64 = 1e-10;
/// Tolerance for `|f^p(c) - c|` to count as a return of the critical point.
pub const DEFAULT_PERIOD_TOL: f64 = 1e-9;
/// Ratio between the upper and lower edges of the ambiguity band.
pub const HYSTERESIS_FACTOR: f64 = 10.0;

const EXPANSION_GRID: usize = 1024;
const NORM_GRID: usize = 2048;
const CONTINUITY_TOL: f64 = 1e-12;
const BOUNDARY_TOL: f64 = 1e-12;

/// Branch selector at the turning point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn of(x: f64) -> Option<Side> {
        if x < CRITICAL_POINT {
            Some(Side::Left)
        } else if x > CRITICAL_POINT {
            Some(Side::Right)
        } else {
            None
        }
    }
}

/// A pair of polynomials on `[-1, 0]` and `[0, 1]` with a shared value at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Branches {
    left: Poly,
    right: Poly,
}

impl Branches {
    pub fn new(left: Poly, right: Poly) -> Result<Self> {
        if !left.is_finite() || !right.is_finite() {
            return Err(Error::NonFinite);
        }
        for p in [&left, &right] {
            if p.degree() > MAX_DEGREE {
                return Err(Error::DegreeTooHigh {
                    degree: p.degree(),
                    max: MAX_DEGREE,
                });
            }
        }
        let (l0, r0) = (left.constant_term(), right.constant_term());
        if (l0 - r0).abs() > CONTINUITY_TOL * (1.0 + l0.abs()) {
            return Err(Error::Discontinuous { left: l0, right: r0 });
        }
        let mut right = right;
        right.set_constant_term(l0);
        Ok(Branches { left, right })
    }

    pub fn left(&self) -> &Poly {
        &self.left
    }

    pub fn right(&self) -> &Poly {
        &self.right
    }

    pub fn branch(&self, side: Side) -> &Poly {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Shared value at the turning point.
    pub fn at_critical(&self) -> f64 {
        self.left.constant_term()
    }

    /// Value at `x` with no range checks; `x = 0` returns the shared value.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.left.eval(x)
        } else if x > 0.0 {
            self.right.eval(x)
        } else {
            self.at_critical()
        }
    }

    /// First derivative away from the turning point; `None` at `x = 0`.
    #[inline]
    pub fn slope(&self, x: f64) -> Option<f64> {
        Side::of(x).map(|s| self.branch(s).eval_deriv(x, 1))
    }

    pub fn eval(&self, x: f64, order: usize, side: Option<Side>) -> Result<f64> {
        if !(-1.0..=1.0).contains(&x) || x.is_nan() {
            return Err(Error::OutOfInterval { x });
        }
        if order == 0 {
            return Ok(self.value(x));
        }
        let side = match Side::of(x) {
            Some(s) => s,
            None => side.ok_or(Error::SideRequired { order })?,
        };
        Ok(self.branch(side).eval_deriv(x, order))
    }

    pub fn add_scaled(&self, other: &Branches, scale: f64) -> Branches {
        let left = self.left.add_scaled(&other.left, scale);
        let mut right = self.right.add_scaled(&other.right, scale);
        right.set_constant_term(left.constant_term());
        Branches { left, right }
    }

    pub fn scale(&self, s: f64) -> Branches {
        let left = self.left.scale(s);
        let mut right = self.right.scale(s);
        right.set_constant_term(left.constant_term());
        Branches { left, right }
    }

    /// `|g|_order = max_{i <= order} max(|D^i g|_{[-1,0]}, |D^i g|_{[0,1]})` on a dense grid.
    pub fn norm(&self, order: usize) -> f64 {
        (0..=order)
            .map(|i| {
                sup_on(&self.left, i, -1.0, 0.0, NORM_GRID)
                    .max(sup_on(&self.right, i, 0.0, 1.0, NORM_GRID))
            })
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.left.is_finite() && self.right.is_finite()
    }
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    left: Vec<f64>,
    right: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    observable: bool,
}

impl TryFrom<FieldRepr> for DirectionField {
    type Error = Error;
    fn try_from(r: FieldRepr) -> Result<Self> {
        if r.observable {
            Self::observable(r.left, r.right)
        } else {
            Self::new(r.left, r.right)
        }
    }
}

impl From<DirectionField> for FieldRepr {
    fn from(v: DirectionField) -> Self {
        FieldRepr {
            left: v.branches.left.coeffs().to_vec(),
            right: v.branches.right.coeffs().to_vec(),
            observable: v.boundary_free,
        }
    }
}

/// A perturbation direction or bounded observable with the branch layout of a map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr", into = "FieldRepr")]
pub struct DirectionField {
    branches: Branches,
    boundary_free: bool,
    sup: OnceLock<f64>,
}

impl PartialEq for DirectionField {
    fn eq(&self, other: &Self) -> bool {
        self.branches == other.branches && self.boundary_free == other.boundary_free
    }
}

impl DirectionField {
    /// A deformation direction; must vanish at `-1` and `1`.
    pub fn new(left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        Self::from_branches(Branches::new(left.into(), right.into())?)
    }

    pub fn from_branches(branches: Branches) -> Result<Self> {
        let at_minus = branches.value(-1.0);
        let at_plus = branches.value(1.0);
        if at_minus.abs() > BOUNDARY_TOL || at_plus.abs() > BOUNDARY_TOL {
            return Err(Error::BoundaryNonZero { at_minus, at_plus });
        }
        Ok(Self::wrap(branches, false))
    }

    /// A general bounded observable with no boundary condition.
    pub fn observable(left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        Ok(Self::wrap(Branches::new(left.into(), right.into())?, true))
    }

    fn wrap(branches: Branches, boundary_free: bool) -> Self {
        DirectionField {
            branches,
            boundary_free,
            sup: OnceLock::new(),
        }
    }

    pub fn zero() -> Self {
        Self::wrap(Branches::new(Poly::zero(), Poly::zero()).unwrap(), false)
    }

    /// `1 - x^2`
    pub fn bump() -> Self {
        Self::new(vec![1.0, 0.0, -1.0], vec![1.0, 0.0, -1.0]).unwrap()
    }

    /// `x (1 - x^2)`
    pub fn odd_bump() -> Self {
        Self::new(vec![0.0, 1.0, 0.0, -1.0], vec![0.0, 1.0, 0.0, -1.0]).unwrap()
    }

    /// `(1 - x^2) x^2`
    pub fn quartic_bump() -> Self {
        let c = vec![0.0, 0.0, 1.0, 0.0, -1.0];
        Self::new(c.clone(), c).unwrap()
    }

    /// `1 - |x|`; moves the slope of a symmetric tent.
    pub fn tent() -> Self {
        Self::new(vec![1.0, 1.0], vec![1.0, -1.0]).unwrap()
    }

    /// Constant observable.
    pub fn constant(c: f64) -> Self {
        Self::wrap(Branches::new(vec![c].into(), vec![c].into()).unwrap(), true)
    }

    pub fn branches(&self) -> &Branches {
        &self.branches
    }

    pub fn is_boundary_free(&self) -> bool {
        self.boundary_free
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.branches.value(x)
    }

    pub fn eval(&self, x: f64, order: usize, side: Option<Side>) -> Result<f64> {
        self.branches.eval(x, order, side)
    }

    /// `|v|_inf` over `I`.
    pub fn sup_norm(&self) -> f64 {
        *self.sup.get_or_init(|| self.branches.norm(0))
    }

    pub fn add_scaled(&self, other: &DirectionField, s: f64) -> DirectionField {
        Self::wrap(
            self.branches.add_scaled(&other.branches, s),
            self.boundary_free || other.boundary_free,
        )
    }

    pub fn scale(&self, s: f64) -> DirectionField {
        Self::wrap(self.branches.scale(s), self.boundary_free)
    }
}

/// Outcome of one of the three defining conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub witness: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    BoundaryInvariance,
    Expanding,
    IntervalInvariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    /// Sampled `min |Df|`.
    pub lambda: f64,
    /// Certified lower bound on `min |Df|` from the grid plus a second-derivative bound.
    pub lambda_lower: f64,
    /// `Df^-(c)`, the left one-sided derivative at the turning point.
    pub slope_left_at_c: f64,
    /// `Df^+(c)`
    pub slope_right_at_c: f64,
    pub critical_value: f64,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        if self.passed {
            return "valid".into();
        }
        self.violations
            .iter()
            .map(|v| format!("{:?} at x = {} (value {})", v.condition, v.witness, v.value))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

#[derive(Serialize, Deserialize)]
struct MapRepr {
    left: Vec<f64>,
    right: Vec<f64>,
    #[serde(default = "default_k")]
    k: u32,
}

fn default_k() -> u32 {
    2
}

impl TryFrom<MapRepr> for PiecewiseMap {
    type Error = Error;
    fn try_from(r: MapRepr) -> Result<Self> {
        Self::new(r.left, r.right, r.k)
    }
}

impl From<PiecewiseMap> for MapRepr {
    fn from(f: PiecewiseMap) -> Self {
        MapRepr {
            left: f.branches.left.coeffs().to_vec(),
            right: f.branches.right.coeffs().to_vec(),
            k: f.k,
        }
    }
}

/// A piecewise polynomial unimodal map of `[-1, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MapRepr", into = "MapRepr")]
pub struct PiecewiseMap {
    branches: Branches,
    k: u32,
    report: OnceLock<ValidationReport>,
}

impl PartialEq for PiecewiseMap {
    fn eq(&self, other: &Self) -> bool {
        self.branches == other.branches && self.k == other.k
    }
}

impl PiecewiseMap {
    pub fn new(left: Vec<f64>, right: Vec<f64>, k: u32) -> Result<Self> {
        Self::from_branches(Branches::new(left.into(), right.into())?, k)
    }

    pub fn from_branches(branches: Branches, k: u32) -> Result<Self> {
        if k < 1 {
            return Err(Error::Precondition("smoothness order k must be >= 1".into()));
        }
        if !branches.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(PiecewiseMap {
            branches,
            k,
            report: OnceLock::new(),
        })
    }

    /// `f(x) = 1 - 2|x|`
    pub fn full_tent() -> Self {
        Self::symmetric_tent(2.0)
    }

    /// The symmetric tent whose turning point has period 3.
    pub fn golden_tent() -> Self {
        Self::symmetric_tent(GOLDEN)
    }

    /// `f(x) = a (1 - |x|) - 1`
    pub fn symmetric_tent(slope: f64) -> Self {
        Self::new(vec![slope - 1.0, slope], vec![slope - 1.0, -slope], 2).unwrap()
    }

    pub fn branches(&self) -> &Branches {
        &self.branches
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn with_k(mut self, k: u32) -> Self {
        self.k = k.max(1);
        self
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.branches.value(x)
    }

    #[inline]
    pub fn slope(&self, x: f64) -> Option<f64> {
        self.branches.slope(x)
    }

    pub fn eval(&self, x: f64, order: usize, side: Option<Side>) -> Result<f64> {
        self.branches.eval(x, order, side)
    }

    pub fn critical_value(&self) -> f64 {
        self.branches.at_critical()
    }

    /// One-sided derivative at the turning point.
    pub fn slope_at_critical(&self, side: Side) -> f64 {
        self.branches.branch(side).eval_deriv(0.0, 1)
    }

    /// `f + s w`, unvalidated.
    pub fn perturbed(&self, w: &DirectionField, s: f64) -> PiecewiseMap {
        PiecewiseMap {
            branches: self.branches.add_scaled(&w.branches, s),
            k: self.k,
            report: OnceLock::new(),
        }
    }

    /// Difference `self - other` as a branch pair.
    pub fn difference(&self, other: &PiecewiseMap) -> Branches {
        self.branches.add_scaled(&other.branches, -1.0)
    }

    pub fn validate(&self) -> &ValidationReport {
        self.report.get_or_init(|| validate_branches(&self.branches))
    }

    pub fn require_valid(&self) -> Result<&ValidationReport> {
        let r = self.validate();
        if r.passed {
            Ok(r)
        } else {
            Err(Error::InvalidMap(Box::new(r.clone())))
        }
    }

    /// Certified expansion rate used by every tail bound.
    #[allow(clippy::misnamed_getters)]
    pub fn lambda(&self) -> f64 {
        self.validate().lambda_lower
    }
}

/// `(1 + sqrt 5) / 2`
pub const GOLDEN: f64 = 1.618_033_988_749_895;

fn validate_branches(b: &Branches) -> ValidationReport {
    let mut violations = Vec::new();

    for x in [-1.0, 1.0] {
        let fx = b.value(x);
        if (fx + 1.0).abs() > BOUNDARY_TOL {
            violations.push(Violation {
                condition: Condition::BoundaryInvariance,
                witness: x,
                value: fx,
            });
        }
    }

    // Grid extremum of Df on each branch, widened by |D^2 f|_inf * h / 2.
    let h = 1.0 / (EXPANSION_GRID - 1) as f64;
    let mut lambda = f64::INFINITY;
    let mut lambda_lower = f64::INFINITY;
    for side in [Side::Left, Side::Right] {
        let p = b.branch(side);
        let sign = if side == Side::Left { 1.0 } else { -1.0 };
        let (lo, hi) = match side {
            Side::Left => (-1.0, 0.0),
            Side::Right => (0.0, 1.0),
        };
        let slack = p.deriv_bound_on(2, lo, hi) * h / 2.0;
        let (mut worst, mut witness) = (f64::INFINITY, 0.0);
        for i in 0..EXPANSION_GRID {
            let x = match side {
                Side::Left => -1.0 + h * i as f64,
                Side::Right => h * i as f64,
            };
            let s = sign * p.eval_deriv(x, 1);
            if s < worst {
                worst = s;
                witness = x;
            }
        }
        lambda = lambda.min(worst);
        let certified = worst - slack;
        lambda_lower = lambda_lower.min(certified);
        if !(certified > 1.0) {
            violations.push(Violation {
                condition: Condition::Expanding,
                witness,
                value: sign * worst,
            });
        }
    }

    let cv = b.at_critical();
    if !(cv <= 1.0 + 1e-14) {
        violations.push(Violation {
            condition: Condition::IntervalInvariance,
            witness: 0.0,
            value: cv,
        });
    }

    ValidationReport {
        passed: violations.is_empty(),
        violations,
        lambda,
        lambda_lower,
        slope_left_at_c: b.left().eval_deriv(0.0, 1),
        slope_right_at_c: b.right().eval_deriv(0.0, 1),
        critical_value: cv,
    }
}

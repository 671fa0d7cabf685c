//! The horizontality functional `J(f, v)`, the bounded solution `alpha` of
//! `v = alpha o f - Df alpha`, and the one-sided constants at periodic maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::dynamics::{in_band, DerivProduct};
use crate::map::{
    detect_periodic_critical, goodness, DirectionField, FamilyCurve, PiecewiseMap, Side, Symbol,
    CRITICAL_POINT, DEFAULT_PERIOD_TOL, DEFAULT_TOL_C,
};

/// Default tail tolerance for series evaluation of `J`.
pub const DEFAULT_J_TOL: f64 = 1e-12;
/// Default depth of the periodic-critical-point search.
pub const DEFAULT_PERIOD_SEARCH: usize = 64;
/// Relative transversality threshold: `|J(f, w)|` must exceed this times `max(|v|, |w|)`.
pub const TRANSVERSALITY_REL_TOL: f64 = 1e-8;

const SIDE_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JMode {
    Periodic { period: usize },
    Series,
}

/// One evaluation of `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JCandidate {
    pub value: f64,
    pub terms: usize,
    pub tail_bound: f64,
    pub mode: JMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JResult {
    pub value: f64,
    pub terms: usize,
    pub tail_bound: f64,
    pub mode: JMode,
    /// Second candidate when periodicity is ambiguous (a return inside the hysteresis band).
    pub alternative: Option<JCandidate>,
}

impl JResult {
    pub fn is_ambiguous(&self) -> bool {
        self.alternative.is_some()
    }

    pub fn primary(&self) -> JCandidate {
        JCandidate {
            value: self.value,
            terms: self.terms,
            tail_bound: self.tail_bound,
            mode: self.mode,
        }
    }

    /// The finite periodic sum if either candidate is one.
    pub fn periodic_candidate(&self) -> Option<JCandidate> {
        let p = self.primary();
        if matches!(p.mode, JMode::Periodic { .. }) {
            return Some(p);
        }
        self.alternative
            .filter(|a| matches!(a.mode, JMode::Periodic { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JOptions {
    pub tol: f64,
    pub period_tol: f64,
    pub tol_c: f64,
    pub period_search: usize,
}

impl Default for JOptions {
    fn default() -> Self {
        JOptions {
            tol: DEFAULT_J_TOL,
            period_tol: DEFAULT_PERIOD_TOL,
            tol_c: DEFAULT_TOL_C,
            period_search: DEFAULT_PERIOD_SEARCH,
        }
    }
}

impl JOptions {
    pub fn with_tol(tol: f64) -> Self {
        JOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Window {
    len: usize,
    mode: JMode,
    tail_factor: f64,
}

/// Critical-orbit weights `1/Df^i(f(c))`, shared by every field evaluated at the same map.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitWeights {
    points: Vec<f64>,
    weights: Vec<f64>,
    primary: Window,
    alternative: Option<Window>,
    lambda: f64,
}

fn series_terms(norm: f64, tol: f64, lambda: f64) -> usize {
    if norm <= 0.0 {
        return 1;
    }
    let n = ((norm / (tol * (1.0 - 1.0 / lambda))).ln() / lambda.ln()).ceil();
    if n.is_finite() && n >= 1.0 {
        n as usize
    } else {
        1
    }
}

impl OrbitWeights {
    /// Weights good enough to evaluate any field with `|v|_inf <= norm` to `opts.tol`.
    pub fn new(f: &PiecewiseMap, norm: f64, opts: &JOptions) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return Err(Error::Precondition(format!("tolerance must be positive, got {}", opts.tol)));
        }
        f.require_valid()?;
        let lambda = f.lambda();
        let n = series_terms(norm, opts.tol, lambda);
        let p_max = n.max(opts.period_search).max(2);
        let det = detect_periodic_critical(f, p_max, opts.period_tol)?;
        let series = Window {
            len: n,
            mode: JMode::Series,
            tail_factor: lambda.powi(-(n as i32)) / (1.0 - 1.0 / lambda),
        };
        let periodic = |p: usize| Window {
            len: p,
            mode: JMode::Periodic { period: p },
            tail_factor: 0.0,
        };
        let first_ambiguous = det.ambiguous.first().map(|&(q, _)| q);
        let (mut primary, alternative) = match det.period {
            Some(p) => (periodic(p), first_ambiguous.map(periodic)),
            None => (series, first_ambiguous.map(periodic)),
        };
        let need = primary.len.max(alternative.map_or(0, |a| a.len));

        let mut points = Vec::with_capacity(need);
        let mut weights = Vec::with_capacity(need);
        let mut prod = DerivProduct::one();
        points.push(CRITICAL_POINT);
        weights.push(1.0);
        let mut x = f.critical_value();
        for i in 1..need {
            if in_band(x, opts.tol_c) {
                // a critical hit the periodicity search did not see: finite sum
                primary = periodic(i);
                break;
            }
            let d = f.slope(x).ok_or_else(|| Error::Internal("orbit slope undefined".into()))?;
            prod.mul(d);
            points.push(x);
            weights.push(prod.recip());
            x = f.value(x);
        }
        let alternative = alternative.filter(|a| a.len <= points.len() && a.len != primary.len);
        Ok(OrbitWeights {
            points,
            weights,
            primary,
            alternative,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn period(&self) -> Option<usize> {
        match self.primary.mode {
            JMode::Periodic { period } => Some(period),
            JMode::Series => None,
        }
    }

    fn sum(&self, v: &DirectionField, w: &Window) -> JCandidate {
        let value = self.points[..w.len]
            .iter()
            .zip(&self.weights)
            .map(|(&x, &r)| v.value(x) * r)
            .sum();
        JCandidate {
            value,
            terms: w.len,
            tail_bound: v.sup_norm() * w.tail_factor,
            mode: w.mode,
        }
    }

    pub fn evaluate(&self, v: &DirectionField) -> JResult {
        let p = self.sum(v, &self.primary);
        JResult {
            value: p.value,
            terms: p.terms,
            tail_bound: p.tail_bound,
            mode: p.mode,
            alternative: self.alternative.map(|a| self.sum(v, &a)),
        }
    }
}

/// `J(f, v) = sum_i v(f^i(c)) / Df^i(f(c))`, finite when `c` is periodic.
pub fn j_functional(f: &PiecewiseMap, v: &DirectionField, tol: f64) -> Result<JResult> {
    j_functional_with(f, v, &JOptions::with_tol(tol))
}

pub fn j_functional_with(f: &PiecewiseMap, v: &DirectionField, opts: &JOptions) -> Result<JResult> {
    Ok(OrbitWeights::new(f, v.sup_norm(), opts)?.evaluate(v))
}

/// `|v|_inf / (1 - 1/lambda_f)`
pub fn a_priori_bound(f: &PiecewiseMap, v: &DirectionField) -> f64 {
    v.sup_norm() / (1.0 - 1.0 / f.lambda())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaKind {
    /// `x` is the turning point.
    Critical,
    /// The orbit of `x` reaches `c` at step `hit`.
    Finite { hit: usize },
    /// The orbit avoids `c`; geometric truncation after `terms` terms.
    Series { terms: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaValue {
    pub value: f64,
    pub kind: AlphaKind,
}

/// `alpha(x) = -sum_i v(f^i x) / Df^{i+1}(x)`, with `alpha(c) = 0`.
#[derive(Debug, Clone)]
pub struct AlphaSolution {
    f: PiecewiseMap,
    v: DirectionField,
    band: f64,
    terms: usize,
    tail_bound: f64,
}

impl AlphaSolution {
    pub fn new(f: &PiecewiseMap, v: &DirectionField, tol: f64) -> Result<Self> {
        Self::with_band(f, v, tol, DEFAULT_TOL_C)
    }

    /// `band` is the half-width around `c` that counts as a hit.
    pub fn with_band(f: &PiecewiseMap, v: &DirectionField, tol: f64, band: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
        }
        f.require_valid()?;
        let lambda = f.lambda();
        let norm = v.sup_norm();
        let terms = if norm > 0.0 {
            let n = ((norm / (tol * (lambda - 1.0))).ln() / lambda.ln()).ceil();
            if n.is_finite() && n >= 1.0 { n as usize } else { 1 }
        } else {
            1
        };
        Ok(AlphaSolution {
            f: f.clone(),
            v: v.clone(),
            band,
            terms,
            tail_bound: norm * lambda.powi(-(terms as i32)) / (lambda - 1.0),
        })
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// `|v|_inf / (lambda_f - 1)`
    pub fn bound(&self) -> f64 {
        self.v.sup_norm() / (self.f.lambda() - 1.0)
    }

    pub fn eval(&self, x: f64) -> Result<AlphaValue> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::OutOfInterval { x });
        }
        if in_band(x, self.band) {
            return Ok(AlphaValue {
                value: 0.0,
                kind: AlphaKind::Critical,
            });
        }
        let mut y = x;
        let mut prod = DerivProduct::one();
        let mut sum = 0.0;
        for i in 0..self.terms {
            if i > 0 && in_band(y, self.band) {
                return Ok(AlphaValue {
                    value: -sum,
                    kind: AlphaKind::Finite { hit: i },
                });
            }
            let d = self
                .f
                .slope(y)
                .ok_or_else(|| Error::Internal("orbit slope undefined".into()))?;
            prod.mul(d);
            sum += self.v.value(y) * prod.recip();
            y = self.f.value(y);
        }
        Ok(AlphaValue {
            value: -sum,
            kind: AlphaKind::Series { terms: self.terms },
        })
    }
}

pub fn alpha_at(f: &PiecewiseMap, v: &DirectionField, x: f64, tol: f64) -> Result<f64> {
    Ok(AlphaSolution::new(f, v, tol)?.eval(x)?.value)
}

/// Anything that can stand in for `alpha` in [`check_twisted_cohomology`].
pub trait AlphaEval {
    fn alpha(&self, x: f64) -> f64;
}

impl AlphaEval for AlphaSolution {
    fn alpha(&self, x: f64) -> f64 {
        self.eval(x.clamp(-1.0, 1.0)).map_or(f64::NAN, |a| a.value)
    }
}

impl<F: Fn(f64) -> f64> AlphaEval for F {
    fn alpha(&self, x: f64) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohomologyCheck {
    pub max_residual: f64,
    pub argmax: f64,
    pub evaluated: usize,
    /// Grid points dropped because they fall in the critical band.
    pub skipped: usize,
}

impl CohomologyCheck {
    pub fn within(&self, tol: f64) -> bool {
        self.max_residual < tol
    }
}

/// Max over `grid` of `|v(x) - alpha(f(x)) + Df(x) alpha(x)|`.
pub fn check_twisted_cohomology(
    f: &PiecewiseMap,
    v: &DirectionField,
    alpha: &impl AlphaEval,
    grid: &[f64],
) -> CohomologyCheck {
    let mut out = CohomologyCheck {
        max_residual: 0.0,
        argmax: f64::NAN,
        evaluated: 0,
        skipped: 0,
    };
    for &x in grid {
        let Some(d) = f.slope(x).filter(|_| !in_band(x, DEFAULT_TOL_C)) else {
            out.skipped += 1;
            continue;
        };
        let r = (v.value(x) - alpha.alpha(f.value(x)) + d * alpha.alpha(x)).abs();
        out.evaluated += 1;
        if !(r <= out.max_residual) {
            out.max_residual = r;
            out.argmax = x;
        }
    }
    out
}

/// `n + 1` equally spaced points on `[-1, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizontality {
    pub horizontal: bool,
    /// `|J(f, v)|`
    pub residual: f64,
    pub j: JResult,
    /// `v(c) - alpha(f(c))`
    pub criterion: f64,
    /// Gap between the two routes.
    pub gap: f64,
}

/// `J(f, v) = 0`, checked against `v(c) = alpha(f(c))`.
pub fn horizontality(f: &PiecewiseMap, v: &DirectionField, tol: f64) -> Result<Horizontality> {
    let inner = DEFAULT_J_TOL.min(tol);
    let opts = JOptions::with_tol(inner);
    let j = j_functional_with(f, v, &opts)?;
    let alpha = AlphaSolution::with_band(f, v, inner, opts.period_tol)?;
    let criterion = v.value(CRITICAL_POINT) - alpha.eval(f.critical_value())?.value;
    let allowed = j.tail_bound.max(j.alternative.map_or(0.0, |a| a.tail_bound))
        + alpha.tail_bound()
        + 1e-12 * a_priori_bound(f, v).max(1.0);
    let gap = std::iter::once(j.value)
        .chain(j.alternative.map(|a| a.value))
        .map(|value| (value - criterion).abs())
        .fold(f64::INFINITY, f64::min);
    if !(gap <= allowed) {
        return Err(Error::Internal(format!(
            "J(f, v) = {} but v(c) - alpha(f(c)) = {criterion} (gap {gap} > {allowed})",
            j.value
        )));
    }
    Ok(Horizontality {
        horizontal: j.value.abs() <= tol,
        residual: j.value.abs(),
        j,
        criterion,
        gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConsistency {
    pub k: usize,
    /// `d/dt f_t^k(c) / Df^{k-1}(f(c))` by the chain-rule sum.
    pub quotient: f64,
    pub j: f64,
    pub gap: f64,
    /// `k` is the prime period of `c`.
    pub periodic: bool,
}

/// Compare the depth-`k` chain-rule quotient with `J(f, v)`.
pub fn phase_consistency(f: &PiecewiseMap, v: &DirectionField, k: usize) -> Result<PhaseConsistency> {
    if k < 1 {
        return Err(Error::Precondition("depth k must be >= 1".into()));
    }
    f.require_valid()?;
    let mut xs = Vec::with_capacity(k + 1);
    let mut x = CRITICAL_POINT;
    for j in 0..=k {
        if (1..k).contains(&j) && in_band(x, DEFAULT_PERIOD_TOL) {
            return Err(Error::CriticalBand { index: j });
        }
        xs.push(x);
        x = f.value(x);
    }
    let periodic = in_band(xs[k], DEFAULT_PERIOD_TOL);

    // sum_i Df^{k-1-i}(f^{i+1} c) v(f^i c), accumulated from the end of the orbit
    let mut sum = 0.0;
    let mut suffix = 1.0;
    for i in (0..k).rev() {
        sum += suffix * v.value(xs[i]);
        if i > 0 {
            suffix *= f.slope(xs[i]).ok_or_else(|| Error::Internal("orbit slope undefined".into()))?;
        }
    }
    let quotient = sum / suffix;
    let j = j_functional(f, v, 1e-14)?.value;
    Ok(PhaseConsistency {
        k,
        quotient,
        j,
        gap: (quotient - j).abs(),
        periodic,
    })
}

/// [`phase_consistency`] for the map and velocity of a family at `t0`.
pub fn param_phase_consistency(
    family: &impl FamilyCurve,
    t0: f64,
    k: usize,
) -> Result<PhaseConsistency> {
    let f = family.map_at(t0)?;
    let v = family.velocity_at(t0)?;
    phase_consistency(&f, &v, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideConstants {
    pub c_plus: f64,
    pub c_minus: f64,
    /// Branch choices `sigma_{jp}` for `j = 1, 2, ...` on the `+` side.
    pub sigma_plus: Vec<Symbol>,
    pub sigma_minus: Vec<Symbol>,
    /// `[(2b - 2) / (2b (2b - 1)), 2b / (2b - 1)]`
    pub beta_bound: (f64, f64),
    pub two_beta: f64,
    pub period: usize,
    /// `Df^{p-1}(f(c))`
    pub multiplier: f64,
}

impl SideConstants {
    pub fn in_bracket(&self, x: f64) -> bool {
        let (lo, hi) = self.beta_bound;
        x >= lo - 1e-12 && x <= hi * (1.0 + 1e-12)
    }
}

/// One-sided limit factors `C+-` with `J(f_theta, v) -> C+- J(f, v)` as `theta -> 0+-`.
pub fn side_constants(f: &PiecewiseMap) -> Result<SideConstants> {
    let g = goodness(f, DEFAULT_PERIOD_SEARCH, DEFAULT_PERIOD_TOL)?;
    let (Some(period), Some(multiplier)) = (g.period, g.return_multiplier) else {
        return Err(Error::NotPeriodic);
    };
    if !g.good {
        return Err(Error::NotGood { margin: g.margin });
    }
    let slope = |s: Side| f.slope_at_critical(s);
    let two_beta = multiplier.abs() * slope(Side::Left).abs().min(slope(Side::Right).abs());
    let beta_bound = (
        (two_beta - 2.0) / (two_beta * (two_beta - 1.0)),
        two_beta / (two_beta - 1.0),
    );

    let series = |seed: f64| {
        let mut sign = seed;
        let mut term = 1.0;
        let mut total = 1.0;
        let mut sides = Vec::new();
        let mut i = 0i32;
        loop {
            let side = if sign > 0.0 { Side::Right } else { Side::Left };
            let m = multiplier * slope(side);
            term /= m;
            total += term;
            sides.push(if side == Side::Right { Symbol::R } else { Symbol::L });
            sign *= m.signum();
            i += 1;
            let tail = two_beta.powi(-(i + 1)) / (1.0 - 1.0 / two_beta);
            if tail < SIDE_TAIL_TOL {
                break;
            }
        }
        (total, sides)
    };
    let (c_plus, sigma_plus) = series(1.0);
    let (c_minus, sigma_minus) = series(-1.0);
    Ok(SideConstants {
        c_plus,
        c_minus,
        sigma_plus,
        sigma_minus,
        beta_bound,
        two_beta,
        period,
        multiplier,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelProjection {
    pub d: f64,
    /// `v + d w`
    pub field: DirectionField,
    pub j_v: JResult,
    pub j_w: JResult,
    /// `|J(f, v + d w)|`
    pub residual: f64,
}

/// Both values of `J` to use in the ratio `-J(v)/J(w)`: the periodic sum when periodicity is ambiguous.
pub(crate) fn ratio_values(jv: &JResult, jw: &JResult) -> (f64, f64) {
    match (jv.periodic_candidate(), jw.periodic_candidate()) {
        (Some(a), Some(b)) => (a.value, b.value),
        _ => (jv.value, jw.value),
    }
}

pub(crate) fn transversality_tol(v: &DirectionField, w: &DirectionField) -> f64 {
    TRANSVERSALITY_REL_TOL * v.sup_norm().max(w.sup_norm())
}

/// `d = -J(f, v) / J(f, w)`, so that `v + d w` is horizontal.
pub fn kernel_projection(
    f: &PiecewiseMap,
    v: &DirectionField,
    w: &DirectionField,
) -> Result<KernelProjection> {
    let opts = JOptions::default();
    let weights = OrbitWeights::new(f, v.sup_norm().max(w.sup_norm()), &opts)?;
    let j_v = weights.evaluate(v);
    let j_w = weights.evaluate(w);
    let (a, b) = ratio_values(&j_v, &j_w);
    let tol_w = transversality_tol(v, w);
    if !(b.abs() > tol_w) {
        return Err(Error::DegenerateDirection { j_w: b.abs(), tol: tol_w });
    }
    let d = -a / b;
    let field = v.add_scaled(w, d);
    let residual = weights.evaluate(&field).value.abs();
    Ok(KernelProjection {
        d,
        field,
        j_v,
        j_w,
        residual,
    })
}

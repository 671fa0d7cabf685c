//! Deformations inside a topological class: the kernel slope field, the ODE
//! `b' = d(t, b)`, the corrected family `f_t + b(t) w`, and continuation of
//! periodic critical relations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{ratio_values, transversality_tol, JMode, JOptions, JResult, OrbitWeights};
use crate::map::{
    detect_periodic_critical, goodness, itinerary, DirectionField, FamilyCurve, Itinerary,
    PiecewiseMap, CRITICAL_POINT, DEFAULT_PERIOD_TOL, DEFAULT_TOL_C,
};

/// Smallest step the integrator will try.
pub const MIN_STEP: f64 = 1e-8;
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
/// Kneading depth used to decide class membership of sampled maps.
pub const KNEADING_DEPTH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSample {
    pub d: f64,
    /// `|J(f_(t, theta), v_t + d w)|`
    pub residual: f64,
    pub mode: JMode,
    /// `theta` after clamping.
    pub theta: f64,
    pub clamped: bool,
}

/// Largest admissible `theta` move keeping `f(c) <= 1`.
fn clamp_theta(f: &PiecewiseMap, w: &DirectionField, theta: f64) -> (f64, bool) {
    let wc = w.value(CRITICAL_POINT);
    let cv = f.critical_value();
    if wc != 0.0 && cv + theta * wc > 1.0 {
        ((1.0 - cv) / wc, true)
    } else {
        (theta, false)
    }
}

fn pick(j: &JResult, periodic: bool) -> f64 {
    if periodic {
        j.periodic_candidate().map_or(j.value, |c| c.value)
    } else {
        j.value
    }
}

/// `-J(f_t + theta w, v_t) / J(f_t + theta w, w)` at an already assembled `f_t`.
pub fn slope_at(
    f_t: &PiecewiseMap,
    v_t: &DirectionField,
    w: &DirectionField,
    theta: f64,
) -> Result<SlopeSample> {
    let (theta, clamped) = clamp_theta(f_t, w, theta);
    let g = f_t.perturbed(w, theta);
    let weights = OrbitWeights::new(&g, v_t.sup_norm().max(w.sup_norm()), &JOptions::default())?;
    let jv = weights.evaluate(v_t);
    let jw = weights.evaluate(w);
    let (a, b) = ratio_values(&jv, &jw);
    let tol_w = transversality_tol(v_t, w);
    if !(b.abs() > tol_w) {
        return Err(Error::DegenerateDirection { j_w: b.abs(), tol: tol_w });
    }
    let periodic = jv.periodic_candidate().is_some() && jw.periodic_candidate().is_some();
    let d = -a / b;
    let residual = pick(&weights.evaluate(&v_t.add_scaled(w, d)), periodic).abs();
    Ok(SlopeSample {
        d,
        residual,
        mode: if periodic {
            jv.periodic_candidate().map_or(jv.mode, |c| c.mode)
        } else {
            jv.mode
        },
        theta,
        clamped,
    })
}

/// Kernel slope `d(t, theta)` making `v_t + d w` horizontal at `f_t + theta w`.
pub fn slope_field(
    family: &impl FamilyCurve,
    w: &DirectionField,
    t: f64,
    theta: f64,
) -> Result<SlopeSample> {
    let f_t = family.map_at(t)?;
    let v_t = family.velocity_at(t)?;
    slope_at(&f_t, &v_t, w, theta)
}

/// How the integrator evaluates the slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlopeRule {
    /// `-J(v_t)/J(w)` with the functional's own mode selection.
    Functional,
    /// The ratio of finite `p`-term sums; agrees with `d` on the manifold
    /// `f^p(c) = c` and extends it smoothly to either side.
    Relation { period: usize },
}

fn slope_by_rule(
    family: &impl FamilyCurve,
    w: &DirectionField,
    t: f64,
    theta: f64,
    rule: SlopeRule,
) -> Result<SlopeSample> {
    match rule {
        SlopeRule::Functional => slope_field(family, w, t, theta),
        SlopeRule::Relation { period } => {
            let f_t = family.map_at(t)?;
            let v_t = family.velocity_at(t)?;
            let (theta, clamped) = clamp_theta(&f_t, w, theta);
            let g = f_t.perturbed(w, theta);
            g.require_valid()?;
            let d = periodic_slope(&f_t, &v_t, w, theta, period)?;
            let residual = PeriodicSums::new(&g, period)?.j(&v_t.add_scaled(w, d)).abs();
            Ok(SlopeSample {
                d,
                residual,
                mode: JMode::Periodic { period },
                theta,
                clamped,
            })
        }
    }
}

/// `|J(f_t + b w, v_t + b' w)|`
fn horizontality_residual(
    family: &impl FamilyCurve,
    w: &DirectionField,
    t: f64,
    b: f64,
    b_rate: f64,
) -> Result<f64> {
    let f_t = family.map_at(t)?;
    let (b, _) = clamp_theta(&f_t, w, b);
    let g = f_t.perturbed(w, b);
    let field = family.velocity_at(t)?.add_scaled(w, b_rate);
    let weights = OrbitWeights::new(&g, field.sup_norm(), &JOptions::default())?;
    let j = weights.evaluate(&field);
    Ok(pick(&j, true).abs())
}

/// Value and slope of the cubic Hermite interpolant at the midpoint of a step.
fn hermite_mid(b0: f64, b1: f64, d0: f64, d1: f64, h: f64) -> (f64, f64) {
    (
        0.5 * (b0 + b1) + h * (d0 - d1) / 8.0,
        1.5 * (b1 - b0) / h - 0.25 * (d0 + d1),
    )
}

fn hermite(t0: f64, t1: f64, b0: f64, b1: f64, d0: f64, d1: f64, t: f64) -> (f64, f64) {
    let h = t1 - t0;
    if h == 0.0 {
        return (b0, d0);
    }
    let s = (t - t0) / h;
    let (s2, s3) = (s * s, s * s * s);
    let value = (2.0 * s3 - 3.0 * s2 + 1.0) * b0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * b1
        + (s3 - s2) * h * d1;
    let rate = (6.0 * s2 - 6.0 * s) / h * b0
        + (3.0 * s2 - 4.0 * s + 1.0) * d0
        + (-6.0 * s2 + 6.0 * s) / h * b1
        + (3.0 * s2 - 2.0 * s) * d1;
    (value, rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RkStep {
    pub b: f64,
    pub d: f64,
    /// Horizontality residual at the step midpoint.
    pub residual: f64,
    pub clamped: bool,
}

/// One classical Runge-Kutta step of `b' = d(t, b)` from `(t, b)` with slope `d0`,
/// followed by the midpoint residual check.
pub fn step_residual(
    family: &impl FamilyCurve,
    w: &DirectionField,
    t: f64,
    b: f64,
    d0: f64,
    h: f64,
    rule: SlopeRule,
) -> Result<RkStep> {
    let slope = |t: f64, b: f64| slope_by_rule(family, w, t, b, rule);
    let k1 = d0;
    let k2 = slope(t + 0.5 * h, b + 0.5 * h * k1)?.d;
    let k3 = slope(t + 0.5 * h, b + 0.5 * h * k2)?.d;
    let k4 = slope(t + h, b + h * k3)?.d;
    let b1 = b + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let end = slope(t + h, b1)?;
    let (bm, rate) = hermite_mid(b, end.theta, d0, end.d, h);
    let residual = horizontality_residual(family, w, t + 0.5 * h, bm, rate)?;
    Ok(RkStep {
        b: end.theta,
        d: end.d,
        residual,
        clamped: end.clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    /// The map at the next step left the admissible class.
    InvalidMap { t: f64, detail: String },
    Degenerate { t: f64, j_w: f64 },
    /// The residual stayed above tolerance at the minimum step.
    MinStep { t: f64, residual: f64 },
    NewtonFailed { t: f64, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub b: f64,
    pub d: f64,
    /// Midpoint horizontality residual of the step that produced this sample.
    pub j_residual: f64,
    /// `|f~_t^p(c) - c|` when the base map has prime period `p`.
    pub relation_residual: Option<f64>,
    pub step: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationTrace {
    /// Sorted by `t`, containing `t = 0` with `b = 0`.
    pub samples: Vec<TraceSample>,
    pub w: DirectionField,
    pub ode_tol: f64,
    pub period: Option<usize>,
    pub rule: SlopeRule,
    pub stop_forward: Option<StopReason>,
    pub stop_backward: Option<StopReason>,
}

impl DeformationTrace {
    pub fn t_range(&self) -> (f64, f64) {
        (
            self.samples.first().map_or(0.0, |s| s.t),
            self.samples.last().map_or(0.0, |s| s.t),
        )
    }

    pub fn is_complete(&self) -> bool {
        self.stop_forward.is_none() && self.stop_backward.is_none()
    }

    pub fn origin(&self) -> &TraceSample {
        self.samples
            .iter()
            .find(|s| s.t == 0.0)
            .expect("trace contains t = 0")
    }

    pub fn max_j_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.j_residual).fold(0.0, f64::max)
    }

    pub fn max_relation_residual(&self) -> Option<f64> {
        self.samples
            .iter()
            .map(|s| s.relation_residual)
            .try_fold(0.0f64, |m, r| r.map(|r| m.max(r)))
    }

    pub fn clamped_steps(&self) -> usize {
        self.samples.iter().filter(|s| s.clamped).count()
    }

    /// `(b(t), b'(t))` by cubic Hermite interpolation of the samples.
    pub fn interpolate(&self, t: f64) -> Result<(f64, f64)> {
        interpolate_nodes(&self.samples, |s| (s.t, s.b, s.d), t)
    }
}

fn interpolate_nodes<S>(nodes: &[S], key: impl Fn(&S) -> (f64, f64, f64), t: f64) -> Result<(f64, f64)> {
    let (lo, hi) = match (nodes.first(), nodes.last()) {
        (Some(a), Some(b)) => (key(a).0, key(b).0),
        _ => return Err(Error::Precondition("empty trace".into())),
    };
    if t.is_nan() || t < lo || t > hi {
        return Err(Error::ParameterOutOfDomain { t, lo, hi });
    }
    let i = nodes.partition_point(|s| key(s).0 <= t);
    if i == 0 {
        let (_, b, d) = key(&nodes[0]);
        return Ok((b, d));
    }
    if i == nodes.len() {
        let (_, b, d) = key(&nodes[i - 1]);
        return Ok((b, d));
    }
    let (t0, b0, d0) = key(&nodes[i - 1]);
    let (t1, b1, d1) = key(&nodes[i]);
    Ok(hermite(t0, t1, b0, b1, d0, d1, t))
}

fn nth_critical_iterate(f: &PiecewiseMap, p: usize) -> f64 {
    (0..p).fold(CRITICAL_POINT, |x, _| f.value(x))
}

fn stop_reason(t: f64, err: &Error) -> Option<StopReason> {
    match err {
        Error::InvalidMap(r) => Some(StopReason::InvalidMap {
            t,
            detail: r.summary(),
        }),
        Error::ParameterOutOfDomain { .. } => Some(StopReason::InvalidMap {
            t,
            detail: err.to_string(),
        }),
        Error::DegenerateDirection { j_w, .. } => Some(StopReason::Degenerate { t, j_w: *j_w }),
        _ => None,
    }
}

/// Integrate `b' = d(t, b)`, `b(0) = 0`, over `t_range` in both directions from 0.
pub fn integrate_deformation(
    family: &impl FamilyCurve,
    w: &DirectionField,
    t_range: (f64, f64),
    h0: f64,
    ode_tol: f64,
) -> Result<DeformationTrace> {
    let (lo, hi) = t_range;
    if !(lo <= 0.0 && 0.0 <= hi) {
        return Err(Error::Precondition(format!("t range [{lo}, {hi}] must contain 0")));
    }
    if !(h0 >= MIN_STEP && ode_tol > 0.0) {
        return Err(Error::Precondition(format!(
            "need h0 >= {MIN_STEP} and ode_tol > 0, got {h0}, {ode_tol}"
        )));
    }
    let f0 = family.map_at(0.0)?;
    let good = goodness(&f0, crate::functional::DEFAULT_PERIOD_SEARCH, DEFAULT_PERIOD_TOL)?;
    if !good.good {
        return Err(Error::NotGood { margin: good.margin });
    }
    let period = good.period;
    let rule = match period {
        Some(period) => SlopeRule::Relation { period },
        None => SlopeRule::Functional,
    };
    // transversality is checked on the functional itself
    slope_field(family, w, 0.0, 0.0)?;
    let start = slope_by_rule(family, w, 0.0, 0.0, rule)?;
    let relation = |t: f64, b: f64| -> Option<f64> {
        let p = period?;
        let f = family.map_at(t).ok()?;
        Some(nth_critical_iterate(&f.perturbed(w, b), p).abs())
    };
    let origin = TraceSample {
        t: 0.0,
        b: 0.0,
        d: start.d,
        j_residual: start.residual,
        relation_residual: relation(0.0, 0.0),
        step: 0.0,
        clamped: start.clamped,
    };

    let run = |end: f64| -> Result<(Vec<TraceSample>, Option<StopReason>)> {
        let dir = if end >= 0.0 { 1.0 } else { -1.0 };
        let mut out = Vec::new();
        let (mut t, mut b, mut d) = (0.0f64, 0.0f64, start.d);
        let mut h = h0;
        while (end - t) * dir > 1e-15 {
            let last = (end - t).abs() <= h;
            let step = if last { end - t } else { dir * h };
            match step_residual(family, w, t, b, d, step, rule) {
                Ok(s) if s.residual <= ode_tol => {
                    t = if last { end } else { t + step };
                    b = s.b;
                    d = s.d;
                    out.push(TraceSample {
                        t,
                        b,
                        d,
                        j_residual: s.residual,
                        relation_residual: relation(t, b),
                        step: step.abs(),
                        clamped: s.clamped,
                    });
                    if s.residual < ode_tol / 16.0 {
                        h = (2.0 * h).min(h0);
                    }
                }
                Ok(s) => {
                    if step.abs() / 2.0 < MIN_STEP {
                        return Ok((out, Some(StopReason::MinStep { t, residual: s.residual })));
                    }
                    h = step.abs() / 2.0;
                }
                Err(e) => {
                    let Some(reason) = stop_reason(t + step, &e) else {
                        return Err(e);
                    };
                    if step.abs() / 2.0 < MIN_STEP {
                        return Ok((out, Some(reason)));
                    }
                    h = step.abs() / 2.0;
                }
            }
        }
        Ok((out, None))
    };
    let (forward, stop_forward) = if hi > 0.0 { run(hi)? } else { (Vec::new(), None) };
    let (backward, stop_backward) = if lo < 0.0 { run(lo)? } else { (Vec::new(), None) };
    let mut samples: Vec<TraceSample> = backward.into_iter().rev().collect();
    samples.push(origin);
    samples.extend(forward);
    Ok(DeformationTrace {
        samples,
        w: w.clone(),
        ode_tol,
        period,
        rule,
        stop_forward,
        stop_backward,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KneadingDrift {
    pub t: f64,
    /// First symbol differing from the kneading sequence at `t = 0`.
    pub index: usize,
}

/// The sampled family `f~_t = f_t + b(t) w` of a deformation trace.
#[derive(Debug, Clone)]
pub struct TildeFamily<F> {
    pub base: F,
    pub trace: DeformationTrace,
    pub reference: Itinerary,
    pub drift: Vec<KneadingDrift>,
}

impl<F: FamilyCurve> TildeFamily<F> {
    pub fn sample_maps(&self) -> Result<Vec<(f64, PiecewiseMap)>> {
        self.trace
            .samples
            .iter()
            .map(|s| Ok((s.t, self.map_at(s.t)?)))
            .collect()
    }

    /// Error on the first kneading change.
    pub fn ensure_in_class(&self) -> Result<()> {
        match self.drift.first() {
            None => Ok(()),
            Some(d) => Err(Error::KneadingDrift { t: d.t, index: d.index }),
        }
    }
}

impl<F: FamilyCurve> FamilyCurve for TildeFamily<F> {
    fn domain(&self) -> (f64, f64) {
        self.trace.t_range()
    }

    fn map_at(&self, t: f64) -> Result<PiecewiseMap> {
        self.check_domain(t)?;
        let (b, _) = self.trace.interpolate(t)?;
        let f = self.base.map_at(t)?.perturbed(&self.trace.w, b);
        f.require_valid()?;
        Ok(f)
    }

    fn velocity_at(&self, t: f64) -> Result<DirectionField> {
        self.check_domain(t)?;
        let (_, rate) = self.trace.interpolate(t)?;
        Ok(self.base.velocity_at(t)?.add_scaled(&self.trace.w, rate))
    }
}

/// Materialize `f_t + b(t) w` on the trace samples and compare kneading sequences to depth 30.
pub fn build_tilde_family<F: FamilyCurve + Clone>(
    family: &F,
    trace: &DeformationTrace,
) -> Result<TildeFamily<F>> {
    if trace.samples.is_empty() {
        return Err(Error::Precondition("empty trace".into()));
    }
    let mut out = TildeFamily {
        base: family.clone(),
        trace: trace.clone(),
        reference: Itinerary::from_symbols(Vec::new()),
        drift: Vec::new(),
    };
    let kneading = |f: &PiecewiseMap| itinerary(f, CRITICAL_POINT, KNEADING_DEPTH, DEFAULT_TOL_C);
    out.reference = kneading(&out.map_at(trace.origin().t)?);
    for s in &trace.samples {
        let f = family.map_at(s.t)?.perturbed(&trace.w, s.b);
        f.require_valid()?;
        if let Some(index) = kneading(&f).first_difference(&out.reference) {
            out.drift.push(KneadingDrift { t: s.t, index });
        }
    }
    Ok(out)
}

/// Orbit data of `f^p(c)` used by the periodic solvers.
struct PeriodicSums {
    /// `f^p(c) - c`
    residual: f64,
    /// `Df^{p-1}(f(c))`
    multiplier: f64,
    weights: Vec<f64>,
    points: Vec<f64>,
}

impl PeriodicSums {
    fn new(f: &PiecewiseMap, p: usize) -> Result<Self> {
        let mut points = Vec::with_capacity(p);
        let mut weights = Vec::with_capacity(p);
        let mut x = CRITICAL_POINT;
        let mut prod = 1.0;
        for i in 0..p {
            if i > 0 {
                prod *= f.slope(x).ok_or(Error::CriticalBand { index: i })?;
            }
            points.push(x);
            weights.push(1.0 / prod);
            x = f.value(x);
        }
        Ok(PeriodicSums {
            residual: x - CRITICAL_POINT,
            multiplier: prod,
            weights,
            points,
        })
    }

    /// Finite `p`-term sum of `J`.
    fn j(&self, v: &DirectionField) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &r)| v.value(x) * r)
            .sum()
    }

    /// Residual level below which `f^p(c)` cannot be resolved in double precision.
    fn noise_floor(&self) -> f64 {
        64.0 * f64::EPSILON * self.multiplier.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTheta {
    pub theta: f64,
    pub residual: f64,
    pub iterations: usize,
    pub period: usize,
}

fn newton_theta(
    f_t: &PiecewiseMap,
    w: &DirectionField,
    p: usize,
    guess: f64,
) -> Result<(f64, f64, usize)> {
    let mut theta = guess;
    let mut last = f64::INFINITY;
    for it in 0..=NEWTON_MAX_ITER {
        let g = f_t.perturbed(w, theta);
        g.require_valid()?;
        let s = PeriodicSums::new(&g, p)?;
        last = s.residual.abs();
        if last < NEWTON_TOL.max(s.noise_floor()) {
            return Ok((theta, last, it));
        }
        let slope = s.multiplier * s.j(w);
        if !(slope.abs() > 1e-14) {
            return Err(Error::DegenerateDirection { j_w: s.j(w).abs(), tol: 1e-14 });
        }
        theta -= s.residual / slope;
        if !theta.is_finite() {
            break;
        }
    }
    Err(Error::NewtonFailed {
        iterations: NEWTON_MAX_ITER,
        residual: last,
    })
}

/// `theta` with `(f_0 + theta w)^p(c) = c` and prime period `p`, by Newton from `guess`.
pub fn find_periodic_theta(
    family: &impl FamilyCurve,
    w: &DirectionField,
    p: usize,
    guess: f64,
) -> Result<PeriodicTheta> {
    if p < 1 {
        return Err(Error::Precondition("period must be >= 1".into()));
    }
    let f0 = family.map_at(0.0)?;
    let (theta, residual, iterations) = newton_theta(&f0, w, p, guess)?;
    let found = detect_periodic_critical(&f0.perturbed(w, theta), p.max(2), DEFAULT_PERIOD_TOL)?.period;
    if found != Some(p) {
        return Err(Error::PeriodChange {
            node: 0,
            expected: p,
            found,
        });
    }
    Ok(PeriodicTheta {
        theta,
        residual,
        iterations,
        period: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationNode {
    pub t: f64,
    pub b: f64,
    /// `-J(g, v_t) / J(g, w)` at the corrected point.
    pub slope: f64,
    /// `|g^p(c) - c|` after correction.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicContinuation {
    pub period: usize,
    pub theta0: f64,
    pub w: DirectionField,
    /// Sorted by `t`.
    pub nodes: Vec<ContinuationNode>,
    pub stop_forward: Option<StopReason>,
    pub stop_backward: Option<StopReason>,
}

impl PeriodicContinuation {
    pub fn interpolate(&self, t: f64) -> Result<(f64, f64)> {
        interpolate_nodes(&self.nodes, |n| (n.t, n.b, n.slope), t)
    }

    pub fn t_range(&self) -> (f64, f64) {
        (
            self.nodes.first().map_or(0.0, |n| n.t),
            self.nodes.last().map_or(0.0, |n| n.t),
        )
    }

    pub fn max_residual(&self) -> f64 {
        self.nodes.iter().map(|n| n.residual).fold(0.0, f64::max)
    }

    /// Largest gap between central differences of `b` and the predicted slope at interior nodes.
    pub fn fd_slope_gap(&self) -> f64 {
        self.nodes
            .windows(3)
            .map(|w| ((w[2].b - w[0].b) / (w[2].t - w[0].t) - w[1].slope).abs())
            .fold(0.0, f64::max)
    }
}

fn periodic_slope(f_t: &PiecewiseMap, v_t: &DirectionField, w: &DirectionField, theta: f64, p: usize) -> Result<f64> {
    let s = PeriodicSums::new(&f_t.perturbed(w, theta), p)?;
    let jw = s.j(w);
    let tol_w = transversality_tol(v_t, w);
    if !(jw.abs() > tol_w) {
        return Err(Error::DegenerateDirection { j_w: jw.abs(), tol: tol_w });
    }
    Ok(-s.j(v_t) / jw)
}

/// Follow `(f_t + b_n(t) w)^p(c) = c` from `b_n(0) = theta0` with an Euler predictor and Newton corrector.
pub fn continue_periodic(
    family: &impl FamilyCurve,
    w: &DirectionField,
    p: usize,
    theta0: f64,
    t_range: (f64, f64),
    h: f64,
) -> Result<PeriodicContinuation> {
    let (lo, hi) = t_range;
    if !(lo <= 0.0 && 0.0 <= hi && h > 0.0) {
        return Err(Error::Precondition(format!(
            "t range [{lo}, {hi}] must contain 0 and h > 0"
        )));
    }
    let f0 = family.map_at(0.0)?;
    let v0 = family.velocity_at(0.0)?;
    let (b0, residual0, _) = newton_theta(&f0, w, p, theta0)?;
    let found = detect_periodic_critical(&f0.perturbed(w, b0), p.max(2), DEFAULT_PERIOD_TOL)?.period;
    if found != Some(p) {
        return Err(Error::PeriodChange {
            node: 0,
            expected: p,
            found,
        });
    }
    let origin = ContinuationNode {
        t: 0.0,
        b: b0,
        slope: periodic_slope(&f0, &v0, w, b0, p)?,
        residual: residual0,
    };

    let run = |end: f64, node_offset: usize| -> Result<(Vec<ContinuationNode>, Option<StopReason>)> {
        let dir = if end >= 0.0 { 1.0 } else { -1.0 };
        let n = ((end.abs() / h) - 1e-9).ceil().max(0.0) as usize;
        let mut out = Vec::with_capacity(n);
        let mut prev = origin;
        for i in 1..=n {
            let t = if i == n { end } else { dir * h * i as f64 };
            let attempt = (|| -> Result<ContinuationNode> {
                let f_t = family.map_at(t)?;
                let v_t = family.velocity_at(t)?;
                let predicted = prev.b + (t - prev.t) * prev.slope;
                let (b, residual, _) = newton_theta(&f_t, w, p, predicted)?;
                let found =
                    detect_periodic_critical(&f_t.perturbed(w, b), p.max(2), DEFAULT_PERIOD_TOL)?.period;
                if found != Some(p) {
                    return Err(Error::PeriodChange {
                        node: node_offset + i,
                        expected: p,
                        found,
                    });
                }
                Ok(ContinuationNode {
                    t,
                    b,
                    slope: periodic_slope(&f_t, &v_t, w, b, p)?,
                    residual,
                })
            })();
            match attempt {
                Ok(node) => {
                    out.push(node);
                    prev = node;
                }
                Err(Error::NewtonFailed { residual, .. }) => {
                    return Ok((out, Some(StopReason::NewtonFailed { t, residual })))
                }
                Err(e) => match stop_reason(t, &e) {
                    Some(reason) => return Ok((out, Some(reason))),
                    None => return Err(e),
                },
            }
        }
        Ok((out, None))
    };
    let (forward, stop_forward) = if hi > 0.0 { run(hi, 0)? } else { (Vec::new(), None) };
    let (backward, stop_backward) = if lo < 0.0 { run(lo, forward.len())? } else { (Vec::new(), None) };
    let mut nodes: Vec<ContinuationNode> = backward.into_iter().rev().collect();
    nodes.push(origin);
    nodes.extend(forward);
    Ok(PeriodicContinuation {
        period: p,
        theta0: b0,
        w: w.clone(),
        nodes,
        stop_forward,
        stop_backward,
    })
}

/// The periodic family `g_{t,n} = f_t + b_n(t) w` of a continuation.
#[derive(Debug, Clone)]
pub struct ContinuedFamily<'a, F> {
    pub base: &'a F,
    pub continuation: &'a PeriodicContinuation,
}

impl<F: FamilyCurve> FamilyCurve for ContinuedFamily<'_, F> {
    fn domain(&self) -> (f64, f64) {
        self.continuation.t_range()
    }

    fn map_at(&self, t: f64) -> Result<PiecewiseMap> {
        self.check_domain(t)?;
        let (b, _) = self.continuation.interpolate(t)?;
        let f = self.base.map_at(t)?.perturbed(&self.continuation.w, b);
        f.require_valid()?;
        Ok(f)
    }

    fn velocity_at(&self, t: f64) -> Result<DirectionField> {
        self.check_domain(t)?;
        let (_, rate) = self.continuation.interpolate(t)?;
        Ok(self.base.velocity_at(t)?.add_scaled(&self.continuation.w, rate))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransversalDerivative {
    /// `Df^{p-1}(f(c)) J(f, v)`
    pub chain_rule: f64,
    pub central_difference: f64,
    pub gap: f64,
    pub multiplier: f64,
    pub j: f64,
}

/// `d/dt f_t^p(c)` at `t0` by the chain rule and by central differences with step `1e-6`.
pub fn transversal_derivative(
    family: &impl FamilyCurve,
    p: usize,
    t0: f64,
) -> Result<TransversalDerivative> {
    const H: f64 = 1e-6;
    let f = family.map_at(t0)?;
    let v = family.velocity_at(t0)?;
    let det = detect_periodic_critical(&f, p.max(2), DEFAULT_PERIOD_TOL)?;
    if det.period != Some(p) {
        return Err(Error::Precondition(format!(
            "turning point does not have prime period {p} at t = {t0} (found {:?})",
            det.period
        )));
    }
    let s = PeriodicSums::new(&f, p)?;
    let j = s.j(&v);
    let plus = nth_critical_iterate(&family.map_at(t0 + H)?, p);
    let minus = nth_critical_iterate(&family.map_at(t0 - H)?, p);
    let central_difference = (plus - minus) / (2.0 * H);
    let chain_rule = s.multiplier * j;
    Ok(TransversalDerivative {
        chain_rule,
        central_difference,
        gap: (chain_rule - central_difference).abs(),
        multiplier: s.multiplier,
        j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{FamilyTerm, MapFamily, Symbol, GOLDEN};

    const A2: f64 = GOLDEN * GOLDEN;

    fn horizontal_field() -> DirectionField {
        DirectionField::bump().add_scaled(&DirectionField::odd_bump(), A2)
    }

    fn golden_family(v: DirectionField) -> MapFamily {
        MapFamily::linear(PiecewiseMap::golden_tent(), v, 0.02).unwrap()
    }

    #[test]
    fn slope_field_examples() {
        let w = DirectionField::odd_bump();
        let s = slope_field(&golden_family(horizontal_field()), &w, 0.0, 0.0).unwrap();
        assert!(s.d.abs() < 1e-14);
        let s = slope_field(&golden_family(DirectionField::bump()), &w, 0.0, 0.0).unwrap();
        assert!((s.d - A2).abs() < 1e-13);
        assert!(s.residual < 1e-14);
        assert_eq!(s.mode, JMode::Periodic { period: 3 });
    }

    #[test]
    fn slope_is_continuous_across_the_periodic_manifold() {
        let fam = golden_family(DirectionField::bump());
        let w = DirectionField::odd_bump();
        let d = |th: f64| slope_field(&fam, &w, 0.0, th).unwrap().d;
        // one-sided limits by linear extrapolation from 1e-7 and 2e-7
        let plus = 2.0 * d(1e-7) - d(2e-7);
        let minus = 2.0 * d(-1e-7) - d(-2e-7);
        assert!((plus - minus).abs() < 1e-6, "{plus} {minus}");
        assert!((plus - A2).abs() < 1e-6);
        // the raw values differ by the kink of d, of order |theta|
        assert!((d(1e-7) - d(-1e-7)).abs() < 1e-5);
    }

    #[test]
    fn horizontal_family_trace() {
        let fam = golden_family(horizontal_field());
        let w = DirectionField::odd_bump();
        let trace = integrate_deformation(&fam, &w, (-0.02, 0.02), 1e-3, 1e-10).unwrap();
        assert!(trace.is_complete());
        assert_eq!(trace.t_range(), (-0.02, 0.02));
        assert_eq!(trace.period, Some(3));
        assert!(trace.origin().d.abs() < 1e-8);
        assert!(trace.max_relation_residual().unwrap() < 1e-8);
        assert!(trace.max_j_residual() < 1e-10);
        assert!(trace.samples.windows(2).all(|p| p[0].t < p[1].t));
        let tilde = build_tilde_family(&fam, &trace).unwrap();
        tilde.ensure_in_class().unwrap();
        assert_eq!(&tilde.reference.to_string()[..6], "CRLCRL");
        assert_eq!(tilde.reference.symbols.iter().filter(|&&s| s == Symbol::C).count(), 10);
    }

    #[test]
    fn pure_w_motion_is_undone() {
        let w = DirectionField::odd_bump();
        let fam = golden_family(w.clone());
        let trace = integrate_deformation(&fam, &w, (-0.02, 0.02), 1e-3, 1e-10).unwrap();
        for s in &trace.samples {
            assert!((s.b + s.t).abs() < 1e-12);
            assert!((s.d + 1.0).abs() < 1e-12);
        }
        let tilde = build_tilde_family(&fam, &trace).unwrap();
        let f0 = PiecewiseMap::golden_tent();
        for (_, f) in tilde.sample_maps().unwrap() {
            assert!(f.difference(&f0).norm(0) < 1e-10);
        }
    }

    #[test]
    fn trace_stops_when_the_map_leaves_the_class() {
        // f(c) = 1 for the full tent; the bump pushes it over for t > 0
        let fam = MapFamily::linear(PiecewiseMap::full_tent(), DirectionField::bump(), 0.5).unwrap();
        let w = DirectionField::odd_bump();
        let err = integrate_deformation(&fam, &w, (0.0, 0.1), 1e-2, 1e-10).unwrap_err();
        assert!(matches!(err, Error::DegenerateDirection { .. }));

        let fam = MapFamily::linear(PiecewiseMap::golden_tent(), DirectionField::bump(), 0.5).unwrap();
        let trace = integrate_deformation(&fam, &DirectionField::odd_bump(), (0.0, 0.5), 1e-2, 1e-10).unwrap();
        assert!(trace.stop_forward.is_some());
        assert!(trace.t_range().1 < 0.5);
    }

    #[test]
    fn tampered_trace_reports_kneading_drift() {
        let fam = golden_family(horizontal_field());
        let w = DirectionField::odd_bump();
        let mut trace = integrate_deformation(&fam, &w, (-0.004, 0.004), 1e-3, 1e-10).unwrap();
        let last = trace.samples.len() - 1;
        trace.samples[last].b += 1e-4;
        let tilde = build_tilde_family(&fam, &trace).unwrap();
        assert_eq!(tilde.drift.len(), 1);
        assert_eq!(tilde.drift[0].t, 0.004);
        assert!(matches!(tilde.ensure_in_class(), Err(Error::KneadingDrift { .. })));
    }

    #[test]
    fn step_halving_is_fourth_order() {
        let fam = golden_family(DirectionField::bump());
        let w = DirectionField::odd_bump();
        let rule = SlopeRule::Relation { period: 3 };
        let d0 = slope_field(&fam, &w, 0.0, 0.0).unwrap().d;
        let r: Vec<f64> = [0.016, 0.008, 0.004]
            .iter()
            .map(|&h| step_residual(&fam, &w, 0.0, 0.0, d0, h, rule).unwrap().residual)
            .collect();
        assert!(r[0] / r[1] >= 8.0 && r[1] / r[2] >= 8.0, "{r:?}");
    }

    #[test]
    fn slope_family_golden_root() {
        let fam = MapFamily::linear(PiecewiseMap::full_tent(), DirectionField::tent(), 0.7).unwrap();
        let r = find_periodic_theta(&fam, &DirectionField::tent(), 3, 1.6 - 2.0).unwrap();
        assert!((2.0 + r.theta - GOLDEN).abs() < 1e-12);
    }

    #[test]
    fn periodic_theta_at_periodic_base_is_zero() {
        let fam = golden_family(DirectionField::bump());
        let r = find_periodic_theta(&fam, &DirectionField::odd_bump(), 3, 0.0).unwrap();
        assert_eq!((r.theta, r.iterations), (0.0, 0));
    }

    #[test]
    fn newton_without_nearby_root_fails() {
        // the fixed point -1 attracts nothing; no period-1 turning point exists
        let fam = MapFamily::linear(PiecewiseMap::full_tent(), DirectionField::tent(), 0.7).unwrap();
        assert!(find_periodic_theta(&fam, &DirectionField::tent(), 1, 0.0).is_err());
    }

    #[test]
    fn continuation_matches_deformation() {
        let fam = golden_family(horizontal_field());
        let w = DirectionField::odd_bump();
        let cont = continue_periodic(&fam, &w, 3, 0.0, (-0.02, 0.02), 1e-3).unwrap();
        assert_eq!(cont.nodes.len(), 41);
        let trace = integrate_deformation(&fam, &w, (-0.02, 0.02), 1e-3, 1e-10).unwrap();
        for n in &cont.nodes {
            let (b, _) = trace.interpolate(n.t).unwrap();
            assert!((b - n.b).abs() < 1e-7);
        }
    }

    #[test]
    fn continuation_along_transversal_family() {
        let fam = golden_family(DirectionField::bump());
        let w = DirectionField::odd_bump();
        let cont = continue_periodic(&fam, &w, 3, 0.0, (-0.02, 0.02), 1e-4).unwrap();
        assert!((cont.nodes[200].slope - A2).abs() < 1e-12);
        assert!(cont.fd_slope_gap() < 1e-6, "{}", cont.fd_slope_gap());
        assert!(cont.max_residual() < 1e-12);
        let canon: Vec<_> = cont
            .nodes
            .iter()
            .map(|n| {
                let g = fam.map_at(n.t).unwrap().perturbed(&w, n.b);
                crate::map::critical_relations(&g, 12, 1e-9).unwrap().canonical
            })
            .collect();
        assert!(canon.iter().all(|c| c == &canon[0]));
    }

    #[test]
    fn transversal_derivative_examples() {
        let td = transversal_derivative(&golden_family(DirectionField::bump()), 3, 0.0).unwrap();
        assert!((td.chain_rule + 0.763_932_022_500_210_3).abs() < 1e-12);
        assert!(td.gap < 1e-6);
        let td = transversal_derivative(&golden_family(horizontal_field()), 3, 0.0).unwrap();
        assert!(td.chain_rule.abs() < 1e-13);
        let fam = MapFamily::new(
            PiecewiseMap::golden_tent(),
            vec![FamilyTerm::linear(DirectionField::bump())],
            (-0.02, 0.02),
        )
        .unwrap();
        assert!(transversal_derivative(&fam, 3, 0.01).is_err());
    }
}

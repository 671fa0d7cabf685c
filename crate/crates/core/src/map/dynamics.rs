//! Orbits, itineraries and critical relations.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{PiecewiseMap, CRITICAL_POINT, DEFAULT_PERIOD_TOL, HYSTERESIS_FACTOR};
use crate::error::{Error, Result};

/// Beyond this many factors a derivative product is carried as a compensated log.
const DIRECT_PRODUCT_STEPS: usize = 50;

/// Running product of derivatives along an orbit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DerivProduct {
    direct: f64,
    sign: f64,
    log_abs: f64,
    comp: f64,
    steps: usize,
}

impl DerivProduct {
    pub fn one() -> Self {
        DerivProduct {
            direct: 1.0,
            sign: 1.0,
            log_abs: 0.0,
            comp: 0.0,
            steps: 0,
        }
    }

    pub fn mul(&mut self, d: f64) {
        self.steps += 1;
        self.direct *= d;
        if d < 0.0 {
            self.sign = -self.sign;
        }
        // Kahan summation of ln|d|
        let y = d.abs().ln() - self.comp;
        let t = self.log_abs + y;
        self.comp = (t - self.log_abs) - y;
        self.log_abs = t;
    }

    pub fn value(&self) -> f64 {
        if self.steps <= DIRECT_PRODUCT_STEPS {
            self.direct
        } else {
            self.sign * self.log_abs.exp()
        }
    }

    pub fn recip(&self) -> f64 {
        if self.steps <= DIRECT_PRODUCT_STEPS {
            1.0 / self.direct
        } else {
            self.sign * (-self.log_abs).exp()
        }
    }

    pub fn log_abs(&self) -> f64 {
        if self.steps <= DIRECT_PRODUCT_STEPS {
            self.direct.abs().ln()
        } else {
            self.log_abs
        }
    }
}

#[inline]
pub(crate) fn in_band(x: f64, tol_c: f64) -> bool {
    (x - CRITICAL_POINT).abs() < tol_c
}

/// `f` applied once, snapping points inside the critical band onto `c` first.
#[inline]
pub(crate) fn step_snapped(f: &PiecewiseMap, x: f64, tol_c: f64) -> f64 {
    if in_band(x, tol_c) {
        f.critical_value()
    } else {
        f.value(x)
    }
}

/// Forward orbit of the turning point and derivative products `Df^i(f(c))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalOrbit {
    /// `f^i(c)` for `i = 0..=n`.
    pub points: Vec<f64>,
    /// `Df^i(f(c))` for `i = 0..n`, cut short at a critical hit.
    pub products: Vec<f64>,
    /// `ln |Df^i(f(c))|`, finite even when the product itself overflows.
    pub log_abs_products: Vec<f64>,
    /// First `i >= 1` with `f^i(c)` inside the critical band.
    pub truncated_at: Option<usize>,
}

pub fn critical_orbit(f: &PiecewiseMap, n: usize, tol_c: f64) -> Result<CriticalOrbit> {
    if n < 1 {
        return Err(Error::Precondition("orbit depth must be >= 1".into()));
    }
    let mut points = Vec::with_capacity(n + 1);
    let mut products = Vec::with_capacity(n);
    let mut logs = Vec::with_capacity(n);
    let mut truncated_at = None;
    let mut prod = DerivProduct::one();
    let mut x = CRITICAL_POINT;
    points.push(x);
    products.push(1.0);
    logs.push(0.0);
    x = f.critical_value();
    points.push(x);
    for i in 1..n {
        if truncated_at.is_none() {
            match f.slope(x) {
                Some(d) if !in_band(x, tol_c) => {
                    prod.mul(d);
                    products.push(prod.value());
                    logs.push(prod.log_abs());
                }
                _ => truncated_at = Some(i),
            }
        }
        x = step_snapped(f, x, tol_c);
        points.push(x);
    }
    if truncated_at.is_none() && in_band(x, tol_c) && n > 1 {
        truncated_at = Some(n);
    }
    Ok(CriticalOrbit {
        points,
        products,
        log_abs_products: logs,
        truncated_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    L,
    C,
    R,
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Symbol::L => 'L',
            Symbol::C => 'C',
            Symbol::R => 'R',
        };
        write!(f, "{c}")
    }
}

impl Symbol {
    pub fn classify(x: f64, tol_c: f64) -> Symbol {
        if in_band(x, tol_c) {
            Symbol::C
        } else if x < CRITICAL_POINT {
            Symbol::L
        } else {
            Symbol::R
        }
    }

    pub fn parse(c: char) -> Option<Symbol> {
        match c {
            'L' | 'l' => Some(Symbol::L),
            'C' | 'c' => Some(Symbol::C),
            'R' | 'r' => Some(Symbol::R),
            _ => None,
        }
    }
}

/// Symbol sequence `sigma_i(x)`, `i < depth`.
///
/// After a `C` the orbit continues from `c` itself, so a periodic turning point
/// yields an exactly periodic sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itinerary {
    pub symbols: Vec<Symbol>,
    pub tol_c: f64,
}

impl Itinerary {
    pub fn from_symbols(symbols: Vec<Symbol>) -> Self {
        Itinerary {
            symbols,
            tol_c: super::DEFAULT_TOL_C,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(Symbol::parse)
            .collect::<Option<Vec<_>>>()
            .map(Self::from_symbols)
    }

    pub fn depth(&self) -> usize {
        self.symbols.len()
    }

    pub fn first_difference(&self, other: &Itinerary) -> Option<usize> {
        let n = self.depth().min(other.depth());
        (0..n)
            .find(|&i| self.symbols[i] != other.symbols[i])
            .or(if self.depth() != other.depth() {
                Some(n)
            } else {
                None
            })
    }

    pub fn first_critical(&self) -> Option<usize> {
        self.symbols.iter().position(|&s| s == Symbol::C)
    }

    pub fn truncated(&self, n: usize) -> Itinerary {
        Itinerary {
            symbols: self.symbols[..n.min(self.depth())].to_vec(),
            tol_c: self.tol_c,
        }
    }
}

impl fmt::Display for Itinerary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.symbols {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

pub fn itinerary(f: &PiecewiseMap, x: f64, n: usize, tol_c: f64) -> Itinerary {
    let mut symbols = Vec::with_capacity(n);
    let mut y = x;
    for _ in 0..n {
        symbols.push(Symbol::classify(y, tol_c));
        y = step_snapped(f, y, tol_c);
    }
    Itinerary { symbols, tol_c }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicDetection {
    /// Smallest `p <= p_max` with `|f^p(c) - c| < tol`.
    pub period: Option<usize>,
    /// Returns `(q, |f^q(c) - c|)` that fell inside `[tol, 10 tol]`.
    pub ambiguous: Vec<(usize, f64)>,
    pub tol: f64,
}

impl PeriodicDetection {
    pub fn is_ambiguous(&self) -> bool {
        !self.ambiguous.is_empty()
    }
}

pub fn detect_periodic_critical(f: &PiecewiseMap, p_max: usize, tol: f64) -> Result<PeriodicDetection> {
    if p_max < 2 {
        return Err(Error::Precondition("p_max must be >= 2".into()));
    }
    let mut ambiguous = Vec::new();
    let mut x = f.critical_value();
    for q in 1..=p_max {
        let dist = (x - CRITICAL_POINT).abs();
        if dist < tol {
            return Ok(PeriodicDetection {
                period: Some(q),
                ambiguous,
                tol,
            });
        }
        if dist <= HYSTERESIS_FACTOR * tol {
            ambiguous.push((q, dist));
        }
        x = f.value(x);
    }
    Ok(PeriodicDetection {
        period: None,
        ambiguous,
        tol,
    })
}

/// Critical relations `f^i(c) = f^j(c)`, `i < j <= depth`, up to `tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRelationSet {
    /// Generators: each remaining relation is `(i + m, j + m + l (j - i))` of one of these.
    pub canonical: Vec<(usize, usize)>,
    /// Relations implied by the canonical ones.
    pub derived: Vec<(usize, usize)>,
    /// Pairs whose distance fell in the hysteresis band `[tol, 10 tol]`.
    pub ambiguous: Vec<(usize, usize)>,
    pub depth: usize,
    pub tol: f64,
}

impl CriticalRelationSet {
    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }

    pub fn is_ambiguous(&self) -> bool {
        !self.ambiguous.is_empty()
    }

    pub fn contains(&self, pair: (usize, usize)) -> bool {
        self.canonical.contains(&pair) || self.derived.contains(&pair)
    }

    /// Compact text form, e.g. `(0,3)`.
    pub fn describe(&self) -> String {
        self.canonical
            .iter()
            .map(|(i, j)| format!("({i},{j})"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn critical_relations(f: &PiecewiseMap, depth: usize, tol: f64) -> Result<CriticalRelationSet> {
    if depth < 2 {
        return Err(Error::Precondition("relation depth must be >= 2".into()));
    }
    let tol_c = super::DEFAULT_TOL_C.min(tol);
    let mut pts = Vec::with_capacity(depth + 1);
    let mut x = CRITICAL_POINT;
    for _ in 0..=depth {
        pts.push(x);
        x = step_snapped(f, x, tol_c);
    }
    let mut pairs = Vec::new();
    let mut ambiguous = Vec::new();
    for i in 0..depth {
        for j in (i + 1)..=depth {
            let d = (pts[i] - pts[j]).abs();
            if d < tol {
                pairs.push((i, j));
            } else if d <= HYSTERESIS_FACTOR * tol {
                ambiguous.push((i, j));
            }
        }
    }
    pairs.sort_by_key(|&(i, j)| (i, j - i));
    let mut canonical: Vec<(usize, usize)> = Vec::new();
    let mut derived = Vec::new();
    for (i, j) in pairs {
        let generated = canonical
            .iter()
            .any(|&(gi, gj)| i >= gi && (j - i) % (gj - gi) == 0);
        if generated {
            derived.push((i, j));
        } else {
            canonical.push((i, j));
        }
    }
    Ok(CriticalRelationSet {
        canonical,
        derived,
        ambiguous,
        depth,
        tol,
    })
}

/// Goodness of a map: `|Df^{p-1}(f(c))| min(|Df^+(c)|, |Df^-(c)|) > 2` when `c` is periodic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goodness {
    pub good: bool,
    /// `+inf` when the turning point is not periodic within the search depth.
    pub margin: f64,
    pub period: Option<usize>,
    /// `Df^{p-1}(f(c))` for a periodic turning point.
    pub return_multiplier: Option<f64>,
    pub ambiguous: bool,
}

pub fn goodness(f: &PiecewiseMap, p_max: usize, tol: f64) -> Result<Goodness> {
    let report = f.require_valid()?;
    let det = detect_periodic_critical(f, p_max, tol)?;
    let ambiguous = det.is_ambiguous();
    let Some(p) = det.period else {
        return Ok(Goodness {
            good: true,
            margin: f64::INFINITY,
            period: None,
            return_multiplier: None,
            ambiguous,
        });
    };
    let orbit = critical_orbit(f, p, tol.min(super::DEFAULT_TOL_C))?;
    let multiplier = *orbit
        .products
        .get(p - 1)
        .ok_or_else(|| Error::Internal("critical orbit shorter than its period".into()))?;
    let weaker = report.slope_left_at_c.abs().min(report.slope_right_at_c.abs());
    let margin = multiplier.abs() * weaker - 2.0;
    Ok(Goodness {
        good: margin > 0.0,
        margin,
        period: Some(p),
        return_multiplier: Some(multiplier),
        ambiguous,
    })
}

/// Scale `epsilon` and depth `N0` such that `c` is not interior to `f^i[-epsilon, epsilon]`,
/// `i = 1..=N0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansivityCertificate {
    pub n0: usize,
    pub epsilon: f64,
    /// Distance from `c` to the nearest image interval that does not return to `c`.
    pub margin: f64,
    /// Steps at which the image interval ends at `c` because the turning point returns.
    pub touching: Vec<usize>,
}

const EPSILON_FLOOR: f64 = 1e-12;

fn image_interval(f: &PiecewiseMap, lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (f.value(lo), f.value(hi));
    if lo < CRITICAL_POINT && hi > CRITICAL_POINT {
        (a.min(b), f.critical_value())
    } else {
        (a.min(b), a.max(b))
    }
}

pub fn expansivity_certificate(f: &PiecewiseMap) -> Result<ExpansivityCertificate> {
    f.require_valid()?;
    let lambda = f.lambda();
    let mut n0 = 2usize;
    while lambda.powi(n0 as i32 - 2) <= 2.0 {
        n0 += 1;
        if n0 > 10_000 {
            return Err(Error::Certification("expansion rate too close to 1".into()));
        }
    }
    let orbit: Vec<f64> = {
        let mut pts = vec![CRITICAL_POINT];
        let mut x = CRITICAL_POINT;
        for _ in 0..n0 {
            x = step_snapped(f, x, super::DEFAULT_TOL_C);
            pts.push(x);
        }
        pts
    };
    let mut eps = 0.5;
    loop {
        let (mut lo, mut hi) = (-eps, eps);
        let mut margin = f64::INFINITY;
        let mut touching = Vec::new();
        let mut ok = true;
        for (i, &xi) in orbit.iter().enumerate().take(n0 + 1).skip(1) {
            (lo, hi) = image_interval(f, lo, hi);
            if in_band(xi, DEFAULT_PERIOD_TOL) {
                touching.push(i);
                continue;
            }
            if lo <= CRITICAL_POINT && CRITICAL_POINT <= hi {
                ok = false;
                break;
            }
            margin = margin.min((lo - CRITICAL_POINT).abs().min((hi - CRITICAL_POINT).abs()));
        }
        if ok {
            return Ok(ExpansivityCertificate {
                n0,
                epsilon: eps,
                margin,
                touching,
            });
        }
        eps /= 2.0;
        if eps < EPSILON_FLOOR {
            return Err(Error::Certification(format!(
                "epsilon fell below {EPSILON_FLOOR} with N0 = {n0}"
            )));
        }
    }
}

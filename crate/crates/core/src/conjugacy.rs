//! Conjugacies `h` with `h o f0 = f1 o h`, transferred point by point through itineraries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{itinerary, FamilyCurve, Itinerary, PiecewiseMap, Side, Symbol, CRITICAL_POINT, DEFAULT_TOL_C};
use crate::poly::Poly;

pub const DEFAULT_DEPTH: usize = 40;
/// Minimum table depth accepted by [`verify_conjugacy`].
pub const MIN_VERIFY_DEPTH: usize = 30;
const ROOT_TOL: f64 = 1e-13;
const ROOT_MAX_ITER: usize = 80;
/// Two sources closer than this are the same point.
const MATCH_TOL: f64 = 1e-10;

/// Solve `p(x) = y` on `[lo, hi]` where `p` is strictly monotone and `y` lies in its range.
fn solve_monotone(p: &Poly, lo: f64, hi: f64, y: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let increasing = p.eval(hi) > p.eval(lo);
    let g = |x: f64| if increasing { p.eval(x) - y } else { y - p.eval(x) };
    let mut x = 0.5 * (a + b);
    for _ in 0..ROOT_MAX_ITER {
        let gx = g(x);
        if gx == 0.0 {
            return x;
        }
        if gx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let slope = p.eval_deriv(x, 1) * if increasing { 1.0 } else { -1.0 };
        let newton = x - gx / slope;
        let next = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if (next - x).abs() < ROOT_TOL || b - a < ROOT_TOL {
            return next;
        }
        x = next;
    }
    x
}

/// Preimage of `[a, b]` under the branch on `side`, or `None` when empty.
fn branch_preimage(f: &PiecewiseMap, side: Side, a: f64, b: f64) -> Option<(f64, f64)> {
    let top = f.critical_value();
    let (a, b) = (a.max(-1.0), b.min(top));
    if a > b {
        return None;
    }
    let p = f.branches().branch(side);
    let (lo, hi) = match side {
        Side::Left => (-1.0, 0.0),
        Side::Right => (0.0, 1.0),
    };
    let x = |y: f64| {
        if y >= top {
            0.0
        } else if y <= -1.0 {
            if side == Side::Left { -1.0 } else { 1.0 }
        } else {
            solve_monotone(p, lo, hi, y)
        }
    };
    let (xa, xb) = (x(a), x(b));
    Some((xa.min(xb), xa.max(xb)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub x: f64,
    /// Half-width of the cylinder containing the point.
    pub bound: f64,
    pub depth: usize,
}

/// The point whose orbit follows `symbols[..n]`: midpoint of the cylinder obtained by
/// pulling `[-1, 1]` back through the inverse branches.
pub fn point_from_itinerary(f: &PiecewiseMap, symbols: &Itinerary, n: usize) -> Result<PointEstimate> {
    if n < 1 || n > symbols.depth() {
        return Err(Error::Precondition(format!(
            "depth {n} must be in 1..={}",
            symbols.depth()
        )));
    }
    f.require_valid()?;
    let s = &symbols.symbols[..n];
    if let Some(i) = s.iter().skip(1).position(|&x| x == Symbol::C) {
        return Err(Error::CriticalBand { index: i + 1 });
    }
    if s[0] == Symbol::C {
        return Ok(PointEstimate {
            x: CRITICAL_POINT,
            bound: 0.0,
            depth: n,
        });
    }
    let (mut a, mut b) = (-1.0, 1.0);
    for (i, &sym) in s.iter().enumerate().rev() {
        let side = if sym == Symbol::L { Side::Left } else { Side::Right };
        (a, b) = branch_preimage(f, side, a, b).ok_or(Error::NoPoint { index: i })?;
    }
    Ok(PointEstimate {
        x: 0.5 * (a + b),
        bound: 0.5 * (b - a) + 2.0 * ROOT_TOL,
        depth: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugatePoint {
    pub x: f64,
    pub h: f64,
    pub bound: f64,
    pub itinerary: Itinerary,
}

/// `h(x)` for the conjugacy from `f0` to `f1`, defined when the `f0`-orbit of `x` avoids the critical band.
pub fn conjugate_point(f0: &PiecewiseMap, f1: &PiecewiseMap, x: f64, n: usize) -> Result<ConjugatePoint> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::OutOfInterval { x });
    }
    let it = itinerary(f0, x, n, DEFAULT_TOL_C);
    if x == -1.0 || x == 1.0 {
        return Ok(ConjugatePoint {
            x,
            h: x,
            bound: 0.0,
            itinerary: it,
        });
    }
    let est = point_from_itinerary(f1, &it, n)?;
    Ok(ConjugatePoint {
        x,
        h: est.x,
        bound: est.bound,
        itinerary: it,
    })
}

/// Depth at which `2 lambda^-n` drops below `eps`.
pub fn depth_for_precision(f: &PiecewiseMap, eps: f64) -> usize {
    ((2.0 / eps).ln() / f.lambda().ln()).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub x: f64,
    pub h: f64,
    pub depth: usize,
    pub bound: f64,
    pub itinerary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyTable {
    /// Sorted by `x`.
    pub entries: Vec<TableEntry>,
    pub depth: usize,
    pub source: String,
    pub target: String,
    /// Sources refused, with the offending symbol index: the orbit enters the critical
    /// band, or the itinerary is not admissible for the target.
    pub refused: Vec<(f64, usize)>,
}

impl ConjugacyTable {
    /// Tabled entry whose source is within matching tolerance of `x`.
    pub fn lookup(&self, x: f64) -> Option<&TableEntry> {
        let i = self.entries.partition_point(|e| e.x < x);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| self.entries.get(j))
            .filter(|e| (e.x - x).abs() <= MATCH_TOL)
            .min_by(|a, b| (a.x - x).abs().total_cmp(&(b.x - x).abs()))
    }

    /// `[h(x-), h(x+)]` from the nearest tabled sources on either side of `x`.
    pub fn envelope(&self, x: f64) -> Option<(f64, f64)> {
        if let Some(e) = self.lookup(x) {
            return Some((e.h, e.h));
        }
        let i = self.entries.partition_point(|e| e.x < x);
        let lo = i.checked_sub(1).map_or(-1.0, |j| self.entries[j].h);
        let hi = self.entries.get(i).map_or(1.0, |e| e.h);
        Some((lo, hi))
    }

    pub fn is_monotone(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].h < w[1].h)
    }
}

/// Table of `h` over `points`, computed in parallel.
pub fn build_conjugacy_table(
    f0: &PiecewiseMap,
    f1: &PiecewiseMap,
    points: &[f64],
    n: usize,
    source: &str,
    target: &str,
) -> Result<ConjugacyTable> {
    f0.require_valid()?;
    f1.require_valid()?;
    let results: Vec<_> = points
        .par_iter()
        .map(|&x| (x, conjugate_point(f0, f1, x, n)))
        .collect();
    let mut entries = Vec::new();
    let mut refused = Vec::new();
    for (x, r) in results {
        match r {
            Ok(p) => entries.push(TableEntry {
                x,
                h: p.h,
                depth: n,
                bound: p.bound,
                itinerary: p.itinerary.to_string(),
            }),
            Err(Error::CriticalBand { index }) | Err(Error::NoPoint { index }) => refused.push((x, index)),
            Err(e) => return Err(e),
        }
    }
    entries.sort_by(|a, b| a.x.total_cmp(&b.x));
    entries.dedup_by(|a, b| (a.x - b.x).abs() <= MATCH_TOL);
    refused.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ConjugacyTable {
        entries,
        depth: n,
        source: source.to_string(),
        target: target.to_string(),
        refused,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryResidual {
    pub x: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub max_residual: f64,
    pub argmax: Option<f64>,
    /// Entries whose image `f0(x)` is itself tabled.
    pub checked: usize,
    pub monotone: bool,
    /// `checked / entries`, or 0 for an empty table.
    pub coverage: f64,
    pub vacuous: bool,
    /// First index where the kneading sequences of `f0` and `f1` differ (depth 30).
    pub kneading_mismatch: Option<usize>,
    pub residuals: Vec<EntryResidual>,
    pub passed: bool,
}

pub fn verify_conjugacy(
    f0: &PiecewiseMap,
    f1: &PiecewiseMap,
    table: &ConjugacyTable,
    tol: f64,
) -> Result<ConjugacyReport> {
    if table.depth < MIN_VERIFY_DEPTH {
        return Err(Error::Precondition(format!(
            "table depth {} is below {MIN_VERIFY_DEPTH}",
            table.depth
        )));
    }
    let k0 = itinerary(f0, CRITICAL_POINT, MIN_VERIFY_DEPTH, DEFAULT_TOL_C);
    let k1 = itinerary(f1, CRITICAL_POINT, MIN_VERIFY_DEPTH, DEFAULT_TOL_C);
    let kneading_mismatch = k0.first_difference(&k1);
    let mut residuals = Vec::new();
    for e in &table.entries {
        if let Some(img) = table.lookup(f0.value(e.x)) {
            residuals.push(EntryResidual {
                x: e.x,
                residual: (img.h - f1.value(e.h)).abs(),
            });
        }
    }
    let (max_residual, argmax) = residuals
        .iter()
        .fold((0.0, None), |(m, a), r| if r.residual > m { (r.residual, Some(r.x)) } else { (m, a) });
    let monotone = table.is_monotone();
    let vacuous = table.entries.is_empty();
    let coverage = if vacuous {
        0.0
    } else {
        residuals.len() as f64 / table.entries.len() as f64
    };
    Ok(ConjugacyReport {
        max_residual,
        argmax,
        checked: residuals.len(),
        monotone,
        coverage,
        vacuous,
        kneading_mismatch,
        passed: monotone && max_residual < tol && kneading_mismatch.is_none(),
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub x: f64,
    pub period: usize,
}

fn is_primitive(word: &[Symbol]) -> bool {
    let p = word.len();
    (1..p).filter(|d| p.is_multiple_of(*d)).all(|d| (0..p).any(|i| word[i] != word[i % d]))
}

/// All periodic points of prime period `<= max_period` whose orbits avoid the turning point.
pub fn periodic_points(f: &PiecewiseMap, max_period: usize) -> Result<Vec<PeriodicPoint>> {
    f.require_valid()?;
    let depth = depth_for_precision(f, 1e-13).max(DEFAULT_DEPTH);
    let mut out = Vec::new();
    for p in 1..=max_period {
        for bits in 0u32..(1 << p) {
            let word: Vec<Symbol> = (0..p)
                .map(|i| if bits >> i & 1 == 1 { Symbol::R } else { Symbol::L })
                .collect();
            if !is_primitive(&word) {
                continue;
            }
            let symbols = Itinerary::from_symbols((0..depth).map(|i| word[i % p]).collect());
            let Ok(est) = point_from_itinerary(f, &symbols, depth) else {
                continue;
            };
            let y = (0..p).fold(est.x, |y, _| f.value(y));
            if (y - est.x).abs() > 1e-9 {
                continue;
            }
            let actual = itinerary(f, est.x, p, DEFAULT_TOL_C);
            if actual.symbols[..] != word[..] {
                continue;
            }
            out.push(PeriodicPoint { x: est.x, period: p });
        }
    }
    out.sort_by(|a, b| a.x.total_cmp(&b.x));
    Ok(out)
}

/// Periodic points of period `<= max_period` together with their preimages of order
/// `1..=levels` that are not themselves periodic.
pub fn eventually_periodic_points(f: &PiecewiseMap, max_period: usize, levels: usize) -> Result<Vec<f64>> {
    let periodic = periodic_points(f, max_period)?;
    let mut pts: Vec<f64> = periodic.iter().map(|p| p.x).collect();
    let mut frontier = pts.clone();
    let known = |pts: &[f64], a: f64| pts.iter().any(|&q| (q - a).abs() <= MATCH_TOL);
    for _ in 0..levels {
        let mut next = Vec::new();
        for &y in &frontier {
            for side in [Side::Left, Side::Right] {
                if let Some((a, _)) = branch_preimage(f, side, y, y) {
                    if a.abs() > DEFAULT_TOL_C && !known(&pts, a) && !known(&next, a) {
                        next.push(a);
                    }
                }
            }
        }
        pts.extend_from_slice(&next);
        frontier = next;
    }
    pts.sort_by(f64::total_cmp);
    Ok(pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub constant: f64,
    /// `sup_t |d/dt f_t|_0 / (1 - 1/lambda_t)`, reported for comparison only.
    pub bound_shape: f64,
    pub values: Vec<(f64, f64)>,
}

/// Largest divided difference of `t -> h_t(x)` over `t_grid`, `h_t` conjugating `f_0` to `f_t`.
pub fn lipschitz_estimate(family: &impl FamilyCurve, x: f64, t_grid: &[f64]) -> Result<LipschitzEstimate> {
    if t_grid.len() < 2 {
        return Err(Error::Precondition("need at least two grid nodes".into()));
    }
    let f0 = family.map_at(0.0)?;
    let mut values = Vec::with_capacity(t_grid.len());
    let mut bound_shape = 0.0f64;
    for &t in t_grid {
        let ft = family.map_at(t)?;
        let n = depth_for_precision(&ft, 1e-13).max(DEFAULT_DEPTH);
        values.push((t, conjugate_point(&f0, &ft, x, n)?.h));
        let v = family.velocity_at(t)?;
        bound_shape = bound_shape.max(v.sup_norm() / (1.0 - 1.0 / ft.lambda()));
    }
    let constant = values
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max);
    Ok(LipschitzEstimate {
        constant,
        bound_shape,
        values,
    })
}

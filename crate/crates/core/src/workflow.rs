//! End-to-end deformation workflows: tangent deformations of a single map and
//! periodic approximations of an in-class family.

use serde::{Deserialize, Serialize};

use crate::deform::{
    build_tilde_family, continue_periodic, find_periodic_theta, integrate_deformation, DeformationTrace,
    KneadingDrift, PeriodicContinuation,
};
use crate::error::{Error, Result};
use crate::functional::{horizontality, j_functional, transversality_tol, DEFAULT_PERIOD_SEARCH};
use crate::map::{
    goodness, DirectionField, FamilyCurve, MapFamily, PiecewiseMap, CRITICAL_POINT, DEFAULT_PERIOD_TOL,
};
use crate::scan::{parameter_grid, run_scan, ScanOptions};

/// Candidate auxiliary directions, tried in order.
pub fn auxiliary_dictionary() -> Vec<(&'static str, DirectionField)> {
    vec![
        ("x(1-x^2)", DirectionField::odd_bump()),
        ("1-x^2", DirectionField::bump()),
        ("(1-x^2)x^2", DirectionField::quartic_bump()),
    ]
}

/// First dictionary field with `|J(f, w)|` above the transversality tolerance.
pub fn select_auxiliary(f: &PiecewiseMap, v: &DirectionField) -> Result<(usize, DirectionField)> {
    for (i, (_, w)) in auxiliary_dictionary().into_iter().enumerate() {
        let jw = j_functional(f, &w, 1e-12)?.value;
        if jw.abs() > transversality_tol(v, &w) {
            return Ok((i, w));
        }
    }
    Err(Error::NoTransversal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkflowOptions {
    /// Half-width of the parameter interval.
    pub delta: f64,
    pub h0: f64,
    pub ode_tol: f64,
    /// Horizontality tolerance on `J(f, v)`.
    pub j_tol: f64,
}

impl Default for WorkflowOptions {
    fn default() -> Self {
        WorkflowOptions {
            delta: 0.02,
            h0: 1e-3,
            ode_tol: 1e-10,
            j_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentDeformation {
    pub family: MapFamily,
    pub w: DirectionField,
    /// Dictionary index, or `None` when `w` was supplied.
    pub w_index: Option<usize>,
    pub trace: DeformationTrace,
    /// `|b'(0)|`
    pub tangency: f64,
    pub tangent: bool,
    pub kneading: String,
    pub drift: Vec<KneadingDrift>,
    /// Samples where `f~_t(c)` reaches 1.
    pub boundary_contact: usize,
    pub clamped_steps: usize,
}

/// Deform `f` along `f + t v` with `v` horizontal, correcting by `b(t) w`.
pub fn run_corollary51(
    f: &PiecewiseMap,
    v: &DirectionField,
    w: Option<DirectionField>,
    opts: &WorkflowOptions,
) -> Result<TangentDeformation> {
    f.require_valid()?;
    let h = horizontality(f, v, opts.j_tol)?;
    if !h.horizontal {
        return Err(Error::Precondition(format!(
            "v is not horizontal: J(f, v) = {:e}",
            h.j.value
        )));
    }
    let (w_index, w) = match w {
        Some(w) => (None, w),
        None => {
            let (i, w) = select_auxiliary(f, v)?;
            (Some(i), w)
        }
    };
    let family = MapFamily::linear(f.clone(), v.clone(), opts.delta)?;
    let trace = integrate_deformation(&family, &w, (-opts.delta, opts.delta), opts.h0, opts.ode_tol)?;
    let tilde = build_tilde_family(&family, &trace)?;
    let tangency = trace.origin().d.abs();
    let boundary_contact = tilde
        .sample_maps()?
        .iter()
        .filter(|(_, g)| touches_boundary(g))
        .count();
    Ok(TangentDeformation {
        w_index,
        tangency,
        tangent: tangency < 1e-8,
        kneading: tilde.reference.to_string(),
        drift: tilde.drift.clone(),
        boundary_contact,
        clamped_steps: trace.clamped_steps(),
        family,
        w,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproximationOptions {
    pub scan_nodes: usize,
    pub h0: f64,
    pub ode_tol: f64,
    pub continuation_step: f64,
    pub min_period: usize,
    pub max_period: usize,
    /// Seeds `+-2^-k` for `k` up to this.
    pub max_seed_exponent: i32,
    pub max_families: usize,
}

impl Default for ApproximationOptions {
    fn default() -> Self {
        ApproximationOptions {
            scan_nodes: 41,
            h0: 1e-3,
            ode_tol: 1e-10,
            continuation_step: 1e-3,
            min_period: 2,
            max_period: 14,
            max_seed_exponent: 40,
            max_families: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximantEntry {
    pub period: usize,
    pub theta: f64,
    pub continuation: PeriodicContinuation,
    /// `max_t ||g_{t,n} - f~_t||_{k-1}` over the continuation nodes.
    pub distance: f64,
    /// The continuation spans the whole domain.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicApproximation {
    pub w: DirectionField,
    pub trace: DeformationTrace,
    pub entries: Vec<ApproximantEntry>,
    /// Fewer than two periodic families found.
    pub partial: bool,
    pub distances_decreasing: bool,
}

fn sup_distance(entry: &PeriodicContinuation, trace: &DeformationTrace, w_norm: f64) -> Result<f64> {
    let (lo, hi) = trace.t_range();
    let mut d: f64 = 0.0;
    for node in entry.nodes.iter().filter(|n| (lo..=hi).contains(&n.t)) {
        let (b, _) = trace.interpolate(node.t)?;
        d = d.max((node.b - b).abs() * w_norm);
    }
    Ok(d)
}

/// Periodic families `g_{t,n} = f_t + b_n(t) w` with `b_n(0) = theta_n -> 0`, and their distance to `f~_t`.
pub fn run_corollary52<F: FamilyCurve + Clone>(family: &F, opts: &ApproximationOptions) -> Result<PeriodicApproximation> {
    let (lo, hi) = family.domain();
    let scan = run_scan(family, &parameter_grid(lo, hi, opts.scan_nodes), &ScanOptions::default())?;
    if !scan.flags.is_empty() || !scan.failures.is_empty() {
        return Err(Error::Precondition(format!(
            "family is not in one class: {} transitions, {} invalid nodes",
            scan.flags.len(),
            scan.failures.len()
        )));
    }
    let f0 = family.map_at(0.0)?;
    let v0 = family.velocity_at(0.0)?;
    let (_, w) = select_auxiliary(&f0, &v0)?;
    let trace = integrate_deformation(family, &w, (lo, hi), opts.h0, opts.ode_tol)?;
    build_tilde_family(family, &trace)?.ensure_in_class()?;
    let w_norm = w.branches().norm(f0.k().saturating_sub(1) as usize);

    let mut roots: Vec<(usize, f64)> = Vec::new();
    if let Some(p0) = goodness(&f0, DEFAULT_PERIOD_SEARCH, DEFAULT_PERIOD_TOL)?.period {
        // the family itself is periodic
        roots.push((p0, 0.0));
    } else {
        for p in opts.min_period..=opts.max_period {
            let mut best: Option<f64> = None;
            for k in 1..=opts.max_seed_exponent {
                for sign in [-1.0, 1.0] {
                    let seed = sign * 2f64.powi(-k);
                    let Ok(found) = find_periodic_theta(family, &w, p, seed) else {
                        continue;
                    };
                    if found.theta != 0.0 && best.is_none_or(|b| found.theta.abs() < b.abs()) {
                        best = Some(found.theta);
                    }
                }
            }
            if let Some(theta) = best {
                roots.push((p, theta));
            }
        }
        roots.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
        roots.dedup_by(|a, b| (a.1 - b.1).abs() <= 1e-14 * b.1.abs());
        if roots.len() > opts.max_families {
            roots.drain(..roots.len() - opts.max_families);
        }
    }

    let mut entries = Vec::new();
    for (p, theta) in roots {
        let continuation = match continue_periodic(family, &w, p, theta, (lo, hi), opts.continuation_step) {
            Ok(c) => c,
            Err(Error::PeriodChange { .. } | Error::NewtonFailed { .. } | Error::InvalidMap(_)) => continue,
            Err(e) => return Err(e),
        };
        let distance = sup_distance(&continuation, &trace, w_norm)?;
        entries.push(ApproximantEntry {
            period: p,
            theta: continuation.theta0,
            complete: continuation.stop_forward.is_none() && continuation.stop_backward.is_none(),
            continuation,
            distance,
        });
    }
    let distances_decreasing = entries.windows(2).all(|e| e[1].distance < e[0].distance);
    Ok(PeriodicApproximation {
        partial: entries.len() < 2,
        distances_decreasing,
        w,
        trace,
        entries,
    })
}

/// `true` when `f(c)` lies on the upper boundary.
pub fn touches_boundary(f: &PiecewiseMap) -> bool {
    f.value(CRITICAL_POINT) >= 1.0 - 1e-12
}

//! Parameter scans: per-node kneading, critical relations and `J`, with
//! class transitions localized by bisection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{j_functional_with, JOptions, DEFAULT_PERIOD_SEARCH};
use crate::map::{
    critical_relations, detect_periodic_critical, itinerary, FamilyCurve, Itinerary, PiecewiseMap,
    CRITICAL_POINT, DEFAULT_PERIOD_TOL, DEFAULT_TOL_C,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub kneading_depth: usize,
    pub relation_depth: usize,
    pub tol_c: f64,
    pub period_tol: f64,
    pub j_tol: f64,
    /// Bisection stops once a transition is bracketed this tightly.
    pub localize_width: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            kneading_depth: 30,
            relation_depth: 30,
            tol_c: DEFAULT_TOL_C,
            period_tol: DEFAULT_PERIOD_TOL,
            j_tol: 1e-12,
            localize_width: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PeriodClass {
    Periodic { period: usize },
    NonPeriodic,
    /// A return fell inside the hysteresis band; never resolved silently.
    Ambiguous { candidates: Vec<usize> },
}

impl std::fmt::Display for PeriodClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PeriodClass::Periodic { period } => write!(f, "periodic:{period}"),
            PeriodClass::NonPeriodic => f.write_str("non-periodic"),
            PeriodClass::Ambiguous { candidates } => {
                let c: Vec<String> = candidates.iter().map(|q| q.to_string()).collect();
                write!(f, "ambiguous:{}", c.join("/"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub t: f64,
    pub kneading: String,
    pub relations: Vec<(usize, usize)>,
    pub j: f64,
    pub j_tail: f64,
    /// Second `J` candidate when periodicity is ambiguous.
    pub j_alternative: Option<f64>,
    pub class: PeriodClass,
    pub flags: Vec<String>,
}

impl ScanRecord {
    pub fn relations_text(&self) -> String {
        self.relations
            .iter()
            .map(|(i, j)| format!("({i},{j})"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFailure {
    pub t: f64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionKind {
    /// First differing kneading symbol.
    Kneading { index: usize },
    Relations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationFlag {
    /// Adjacent grid nodes.
    pub between: (f64, f64),
    /// Bisection bracket.
    pub lo: f64,
    pub hi: f64,
    pub kind: TransitionKind,
}

impl BifurcationFlag {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub records: Vec<ScanRecord>,
    pub flags: Vec<BifurcationFlag>,
    pub failures: Vec<NodeFailure>,
    pub max_abs_j: f64,
    pub max_tail: f64,
    /// `no flags` agrees with `max |J| < max(10 tail, 1e-7)`.
    pub ad_consistent: bool,
}

/// Below this `|J|` counts as zero in the A/D diagnostic when every tail bound vanishes.
pub const AD_ABS_FLOOR: f64 = 1e-7;

/// `n` nodes with `t_i = lo (1 - s) + hi s`, so symmetric ranges hit 0 exactly.
pub fn parameter_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                if i == n - 1 { hi } else { lo * (1.0 - s) + hi * s }
            })
            .collect(),
    }
}

struct NodeData {
    kneading: Itinerary,
    relations: Vec<(usize, usize)>,
    relations_ambiguous: bool,
}

fn node_data(f: &PiecewiseMap, opts: &ScanOptions) -> Result<NodeData> {
    let rel = critical_relations(f, opts.relation_depth, opts.period_tol)?;
    Ok(NodeData {
        kneading: itinerary(f, CRITICAL_POINT, opts.kneading_depth, opts.tol_c),
        relations_ambiguous: rel.is_ambiguous(),
        relations: rel.canonical,
    })
}

fn record_at(family: &impl FamilyCurve, t: f64, opts: &ScanOptions) -> Result<(ScanRecord, NodeData)> {
    let f = family.map_at(t)?;
    let v = family.velocity_at(t)?;
    let data = node_data(&f, opts)?;
    let jopts = JOptions {
        tol: opts.j_tol,
        period_tol: opts.period_tol,
        tol_c: opts.tol_c,
        period_search: DEFAULT_PERIOD_SEARCH,
    };
    let j = j_functional_with(&f, &v, &jopts)?;
    let det = detect_periodic_critical(&f, DEFAULT_PERIOD_SEARCH, opts.period_tol)?;
    let class = if det.is_ambiguous() {
        let mut candidates: Vec<usize> = det.ambiguous.iter().map(|&(q, _)| q).collect();
        candidates.extend(det.period);
        PeriodClass::Ambiguous { candidates }
    } else {
        match det.period {
            Some(period) => PeriodClass::Periodic { period },
            None => PeriodClass::NonPeriodic,
        }
    };
    let mut flags = Vec::new();
    if det.is_ambiguous() || j.is_ambiguous() {
        flags.push("ambiguous".to_string());
    }
    if data.relations_ambiguous {
        flags.push("relation-band".to_string());
    }
    let record = ScanRecord {
        t,
        kneading: data.kneading.to_string(),
        relations: data.relations.clone(),
        j: j.value,
        j_tail: j.tail_bound,
        j_alternative: j.alternative.map(|a| a.value),
        class,
        flags,
    };
    Ok((record, data))
}

fn localize(
    family: &impl FamilyCurve,
    mut lo: f64,
    mut hi: f64,
    left: &NodeData,
    kind: TransitionKind,
    opts: &ScanOptions,
) -> Result<(f64, f64)> {
    let same_as_left = |d: &NodeData| match kind {
        TransitionKind::Kneading { index } => {
            d.kneading.symbols[..=index] == left.kneading.symbols[..=index]
        }
        TransitionKind::Relations => d.relations == left.relations,
    };
    while hi - lo > opts.localize_width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let data = node_data(&family.map_at(mid)?, opts)?;
        if same_as_left(&data) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Evaluate every grid node (in parallel) and flag changes of kneading prefix or relation set.
pub fn run_scan(family: &impl FamilyCurve, t_grid: &[f64], opts: &ScanOptions) -> Result<ScanResult> {
    let (lo, hi) = family.domain();
    if let Some(&t) = t_grid.iter().find(|&&t| !(lo..=hi).contains(&t)) {
        return Err(Error::ParameterOutOfDomain { t, lo, hi });
    }
    if t_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Precondition("scan grid must be strictly increasing".into()));
    }
    let nodes: Vec<(f64, Result<(ScanRecord, NodeData)>)> = t_grid
        .par_iter()
        .map(|&t| (t, record_at(family, t, opts)))
        .collect();

    let mut records = Vec::new();
    let mut data = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in nodes {
        match r {
            Ok((rec, d)) => {
                records.push(rec);
                data.push(d);
            }
            Err(e) => failures.push(NodeFailure {
                t,
                error: e.to_string(),
            }),
        }
    }

    let mut flags = Vec::new();
    for i in 1..records.len() {
        let (a, b) = (&data[i - 1], &data[i]);
        let kind = match a.kneading.first_difference(&b.kneading) {
            Some(index) => TransitionKind::Kneading { index },
            None if a.relations != b.relations => TransitionKind::Relations,
            None => continue,
        };
        let (t0, t1) = (records[i - 1].t, records[i].t);
        let (lo, hi) = localize(family, t0, t1, a, kind, opts)?;
        flags.push(BifurcationFlag {
            between: (t0, t1),
            lo,
            hi,
            kind,
        });
    }

    let max_abs_j = records.iter().map(|r| r.j.abs()).fold(0.0, f64::max);
    let max_tail = records.iter().map(|r| r.j_tail).fold(0.0, f64::max);
    let j_zero = max_abs_j < (10.0 * max_tail).max(AD_ABS_FLOOR);
    Ok(ScanResult {
        ad_consistent: flags.is_empty() == j_zero,
        records,
        flags,
        failures,
        max_abs_j,
        max_tail,
    })
}

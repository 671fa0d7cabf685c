//! Acceptance checks. One `[PASS]`/`[FAIL]` line per criterion, details indented below.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

use pexpand::conjugacy::{
    build_conjugacy_table, conjugate_point, eventually_periodic_points, periodic_points, verify_conjugacy,
};
use pexpand::deform::{
    build_tilde_family, continue_periodic, find_periodic_theta, integrate_deformation, slope_at, slope_field,
    step_residual, transversal_derivative, SlopeRule,
};
use pexpand::functional::{
    a_priori_bound, check_twisted_cohomology, j_functional, phase_consistency, side_constants, uniform_grid,
    AlphaSolution,
};
use pexpand::map::{
    goodness, itinerary, DirectionField, FamilyCurve, MapFamily, PiecewiseMap, CRITICAL_POINT, DEFAULT_TOL_C,
    GOLDEN,
};
use pexpand::scan::{parameter_grid, run_scan, ScanOptions};
use pexpand::workflow::{run_corollary52, ApproximationOptions};

struct Criterion {
    id: u32,
    title: &'static str,
    details: Vec<String>,
    ok: bool,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Criterion {
            id,
            title,
            details: Vec::new(),
            ok: true,
        }
    }

    fn check(&mut self, pass: bool, detail: String) {
        self.ok &= pass;
        self.details.push(format!("{} {detail}", if pass { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, detail: String) {
        self.details.push(format!("     {detail}"));
    }

    fn runtime(&mut self, start: Instant, limit: Duration) {
        let took = start.elapsed();
        self.check(took < limit, format!("runtime {:.3} s (limit {} s)", took.as_secs_f64(), limit.as_secs()));
    }

    fn fail_with(&mut self, e: impl std::fmt::Display) {
        self.check(false, format!("error: {e}"));
    }
}

type Outcome = Result<(), pexpand::Error>;
type Suite = (u32, &'static str, fn(&mut Criterion) -> Outcome);

fn golden_construction(c: &mut Criterion) -> Outcome {
    let start = Instant::now();
    let base = PiecewiseMap::symmetric_tent(1.6);
    let fam = MapFamily::linear(base, DirectionField::tent(), 0.3)?;
    let r = find_periodic_theta(&fam, &DirectionField::tent(), 3, 0.0)?;
    let slope = 1.6 + r.theta;
    let err = (slope - GOLDEN).abs();
    c.check(err < 1e-12, format!("period-3 slope {slope:?}, |s - (1+sqrt5)/2| = {err:.2e} (limit 1e-12)"));
    let g = goodness(&PiecewiseMap::symmetric_tent(slope), 64, 1e-9)?;
    let target = GOLDEN.powi(3) - 2.0;
    c.check(
        g.good && (g.margin - 2.2360680).abs() <= 1e-7 && (g.margin - target).abs() <= 1e-9,
        format!("goodness margin {:.10} vs a^3 - 2 = {target:.10} (limit 1e-9)", g.margin),
    );
    c.runtime(start, Duration::from_secs(1));
    Ok(())
}

fn j_oracles(c: &mut Criterion) -> Outcome {
    let start = Instant::now();
    let full = j_functional(&PiecewiseMap::full_tent(), &DirectionField::bump(), 1e-12)?.value;
    c.check((full - 1.0).abs() <= 1e-10, format!("full tent, v = 1-x^2: J = {full:?} (1 +- 1e-10)"));

    let j = j_functional(&PiecewiseMap::golden_tent(), &DirectionField::bump(), 1e-12)?.value;
    let exact = common::exact::golden_j_exact(&[1, 0, -1], &[1, 0, -1]);
    let digits = exact.scaled(30);
    let reference = &digits / BigInt::from(10).pow(18);
    let computed = BigInt::from((j * 1e12).round() as i64);
    let gap_e12 = (reference - computed).magnitude().clone();
    c.check(
        gap_e12 <= 1000u32.into(),
        format!("golden tent, v = 1-x^2: J = {j:?}, exact 0.{digits} (agreement below 1e-9)"),
    );

    let mut runner = TestRunner::deterministic();
    let strat = (common::valid_map(), common::field());
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..1000 {
        let (f, v) = strat.new_tree(&mut runner).unwrap().current();
        let r = j_functional(&f, &v, 1e-12)?;
        let bound = a_priori_bound(&f, &v);
        worst = worst.max(r.value.abs() / bound.max(f64::MIN_POSITIVE));
        if r.value.abs() > bound {
            violations += 1;
        }
    }
    c.check(violations == 0, format!("a-priori bound on 1000 random pairs: max |J|/bound = {worst:.4}"));
    c.runtime(start, Duration::from_secs(5));
    Ok(())
}

fn cohomology(c: &mut Criterion) -> Outcome {
    let maps = [
        PiecewiseMap::golden_tent(),
        PiecewiseMap::full_tent(),
        common::bent_tent(0.8, 0.05),
        common::bent_tent(0.5, -0.08),
        common::bent_tent(0.95, 0.02),
    ];
    let fields = [
        DirectionField::bump(),
        common::horizontal_field(),
        DirectionField::quartic_bump(),
        DirectionField::constant(1.0),
    ];
    let grid = uniform_grid(201);
    let (mut worst_res, mut worst_id, mut pairs) = (0.0f64, 0.0f64, 0);
    let mut id_ok = true;
    for f in &maps {
        for v in &fields {
            let alpha = AlphaSolution::new(f, v, 1e-12)?;
            let check = check_twisted_cohomology(f, v, &alpha, &grid);
            worst_res = worst_res.max(check.max_residual);
            let j = j_functional(f, v, 1e-12)?;
            let route = v.value(CRITICAL_POINT) - alpha.eval(f.critical_value())?.value;
            let allowed = j.tail_bound + alpha.tail_bound() + 1e-12 * a_priori_bound(f, v).max(1.0);
            let gap = (j.value - route).abs();
            worst_id = worst_id.max(gap);
            id_ok &= gap <= allowed;
            pairs += 1;
        }
    }
    c.check(worst_res < 1e-9, format!("{pairs} pairs, max residual on 201-point grids {worst_res:.2e} (limit 1e-9)"));
    c.check(id_ok, format!("J(f,v) = v(c) - alpha(f(c)): max gap {worst_id:.2e} within combined tolerances"));
    Ok(())
}

fn phase(c: &mut Criterion) -> Outcome {
    let golden = PiecewiseMap::golden_tent();
    let mut worst: f64 = 0.0;
    for v in [DirectionField::bump(), DirectionField::odd_bump(), common::horizontal_field()] {
        let p = phase_consistency(&golden, &v, 3)?;
        worst = worst.max(p.gap);
    }
    c.check(worst < 1e-12, format!("periodic route on the golden tent: max gap {worst:.2e} (limit 1e-12)"));

    let full = PiecewiseMap::full_tent();
    let v = DirectionField::constant(1.0);
    let ks: Vec<f64> = (2..=12).map(|k| k as f64).collect();
    let logs: Vec<f64> = (2..=12)
        .map(|k| phase_consistency(&full, &v, k).map(|p| p.gap.ln()))
        .collect::<Result<_, _>>()?;
    let n = ks.len() as f64;
    let (mk, ml) = (ks.iter().sum::<f64>() / n, logs.iter().sum::<f64>() / n);
    let slope = ks.iter().zip(&logs).map(|(k, l)| (k - mk) * (l - ml)).sum::<f64>()
        / ks.iter().map(|k| (k - mk).powi(2)).sum::<f64>();
    let target = -full.lambda().ln();
    let rel = ((slope - target) / target).abs();
    c.check(
        rel <= 0.05,
        format!("full tent, v = 1, k = 2..12: log-gap slope {slope:.6} vs -log lambda = {target:.6} (rel {rel:.2e}, limit 5%)"),
    );
    Ok(())
}

fn side(c: &mut Criterion) -> Outcome {
    let f = PiecewiseMap::golden_tent();
    let s = side_constants(&f)?;
    c.check(
        (s.c_plus - 1.3090170).abs() < 1e-7 && (s.c_minus - 0.6909830).abs() < 1e-7,
        format!("C+ = {:.10}, C- = {:.10}", s.c_plus, s.c_minus),
    );
    c.check(
        s.in_bracket(s.c_plus) && s.in_bracket(s.c_minus),
        format!("bracket [{:.6}, {:.6}]", s.beta_bound.0, s.beta_bound.1),
    );

    let v = DirectionField::bump();
    let w = DirectionField::odd_bump();
    let j0 = j_functional(&f, &v, 1e-13)?.value;
    let theta = 1e-7;
    for sign in [1.0, -1.0] {
        let g = f.perturbed(&v, sign * theta);
        let ratio = j_functional(&g, &v, 1e-13)?.value / j0;
        // the side of the first return decides which limit kneading is shadowed
        let ret = (0..3).fold(CRITICAL_POINT, |x, _| g.value(x));
        let (name, expected) = if ret > 0.0 { ("C+", s.c_plus) } else { ("C-", s.c_minus) };
        let rel = ((ratio - expected) / expected).abs();
        c.check(
            rel < 1e-4,
            format!("theta = {:+e}: J ratio {ratio:.9} vs {name} (rel {rel:.2e}, limit 1e-4)", sign * theta),
        );
    }

    let fam = MapFamily::linear(f.clone(), v.clone(), 0.01)?;
    let d = |t: f64| slope_field(&fam, &w, t, 0.0).map(|s| s.d);
    let (dp, dm) = (d(theta)?, d(-theta)?);
    let (dp2, dm2) = (d(2.0 * theta)?, d(-2.0 * theta)?);
    let (lim_p, lim_m) = (2.0 * dp - dp2, 2.0 * dm - dm2);
    let d0 = slope_at(&f, &v, &w, 0.0)?.d;
    c.note(format!(
        "d(+1e-7) = {dp:.12}, d(-1e-7) = {dm:.12}, raw gap {:.2e} (d has a kink: one-sided slopes {:.2}, {:.2})",
        (dp - dm).abs(),
        (dp2 - dp) / theta,
        (dm - dm2) / theta
    ));
    c.check(
        (lim_p - lim_m).abs() < 1e-6 && (lim_p - d0).abs() < 1e-6,
        format!(
            "one-sided limits of d by linear extrapolation: {lim_p:.12} / {lim_m:.12}, d(0) = {d0:.12}, gap {:.2e} (limit 1e-6)",
            (lim_p - lim_m).abs()
        ),
    );
    Ok(())
}

fn deformation(c: &mut Criterion) -> Outcome {
    let start = Instant::now();
    let fam = common::golden_horizontal_family();
    let w = DirectionField::bump();
    let trace = integrate_deformation(&fam, &w, (-0.02, 0.02), 1e-3, 1e-10)?;
    let tilde = build_tilde_family(&fam, &trace)?;
    let b0 = trace.origin().d.abs();
    c.check(trace.is_complete() && b0 < 1e-8, format!("|b'(0)| = {b0:.2e} (limit 1e-8)"));
    let mut worst: f64 = 0.0;
    for t in parameter_grid(-0.02, 0.02, 401) {
        let g = tilde.map_at(t)?;
        worst = worst.max((0..3).fold(CRITICAL_POINT, |x, _| g.value(x)).abs());
    }
    c.check(worst < 1e-8, format!("max |f~_t^3(c) - c| on 401 nodes, |t| <= 0.02: {worst:.2e} (limit 1e-8)"));
    c.check(tilde.drift.is_empty(), format!("kneading {} constant to depth 30", tilde.reference));
    let cont = continue_periodic(&fam, &w, 3, 0.0, (-0.02, 0.02), 1e-3)?;
    let mut gap: f64 = 0.0;
    for n in &cont.nodes {
        gap = gap.max((trace.interpolate(n.t)?.0 - n.b).abs());
    }
    c.check(gap < 1e-7, format!("integrate vs continue: max |b - b_cont| = {gap:.2e} (limit 1e-7)"));

    let pure = MapFamily::linear(PiecewiseMap::golden_tent(), w.clone(), 0.02)?;
    let ptrace = integrate_deformation(&pure, &w, (-0.02, 0.02), 1e-3, 1e-10)?;
    let ptilde = build_tilde_family(&pure, &ptrace)?;
    let f0 = PiecewiseMap::golden_tent();
    let mut dev: f64 = 0.0;
    for (_, g) in ptilde.sample_maps()? {
        dev = dev.max(g.difference(&f0).norm(0));
    }
    c.check(dev < 1e-10, format!("pure-w family: max ||f~_t - f_0|| = {dev:.2e} (limit 1e-10)"));
    c.runtime(start, Duration::from_secs(30));
    Ok(())
}

fn transversality(c: &mut Criterion) -> Outcome {
    let fam = common::golden_transversal_family();
    let td = transversal_derivative(&fam, 3, 0.0)?;
    let expected = -GOLDEN * GOLDEN * td.j;
    c.check(
        (td.chain_rule - expected).abs() < 1e-12 && (td.chain_rule + 0.7639320).abs() < 1e-7 && td.gap < 1e-6,
        format!(
            "d/dt f_t^3(c) = {:.10} (-a^2 J = {expected:.10}), central difference {:.10}, gap {:.2e} (limit 1e-6)",
            td.chain_rule, td.central_difference, td.gap
        ),
    );
    let res = run_scan(&fam, &parameter_grid(-0.02, 0.02, 101), &ScanOptions::default())?;
    let near: Vec<_> = res
        .flags
        .iter()
        .filter(|f| f.between.0 == 0.0 || f.between.1 == 0.0)
        .collect();
    let localized = near.len() == 2 && near.iter().all(|f| f.width() <= 1e-8 && f.lo <= 0.0 && f.hi >= 0.0);
    let widths: Vec<String> = near.iter().map(|f| format!("[{:e}, {:e}]", f.lo, f.hi)).collect();
    c.check(localized, format!("transitions through t = 0 localized to {}", widths.join(", ")));
    let with_relation: Vec<f64> = res.records.iter().filter(|r| r.relations.contains(&(0, 3))).map(|r| r.t).collect();
    c.check(with_relation == [0.0], format!("relation (0,3) present at t = {with_relation:?} only"));
    Ok(())
}

fn conjugacy(c: &mut Criterion) -> Outcome {
    let fam = common::golden_horizontal_family();
    let trace = integrate_deformation(&fam, &DirectionField::bump(), (-0.02, 0.02), 1e-3, 1e-10)?;
    let tilde = build_tilde_family(&fam, &trace)?;
    let (f0, f1) = (tilde.map_at(0.0)?, tilde.map_at(0.02)?);
    let periodic = periodic_points(&f0, 8)?.len();
    let pts = eventually_periodic_points(&f0, 8, 2)?;
    let depth = 60;
    let table = build_conjugacy_table(&f0, &f1, &pts, depth, "golden", "f~_0.02")?;
    let report = verify_conjugacy(&f0, &f1, &table, 1e-8)?;
    c.note(format!(
        "{periodic} periodic points of period <= 8 avoid the turning orbit; {} points including preimages",
        pts.len()
    ));
    c.check(
        table.entries.len() >= 200 && report.passed && report.max_residual < 1e-8,
        format!(
            "{} tabled points at depth {depth}, commutation residual {:.2e} (limit 1e-8)",
            table.entries.len(),
            report.max_residual
        ),
    );
    c.check(report.monotone, "monotone table".into());
    let lambda = f0.lambda();
    let mut worst: f64 = 0.0;
    let mut within = true;
    for &x in &pts {
        let p = conjugate_point(&f0, &f0, x, 40)?;
        worst = worst.max((p.h - x).abs());
        within &= (p.h - x).abs() <= 2.0 * lambda.powi(-40);
    }
    c.check(
        within,
        format!("self-conjugacy max |h(x) - x| = {worst:.2e} (limit 2 lambda^-40 = {:.2e})", 2.0 * lambda.powi(-40)),
    );
    Ok(())
}

fn approximation(c: &mut Criterion) -> Outcome {
    let fam = common::full_tent_family();
    let out = run_corollary52(&fam, &ApproximationOptions::default())?;
    for (n, e) in out.entries.iter().enumerate() {
        c.note(format!(
            "n = {}: period {}, theta {:+.6e}, distance {:.6e}, complete {}",
            n + 1,
            e.period,
            e.theta,
            e.distance,
            e.complete
        ));
    }
    c.check(
        !out.partial && out.entries.len() >= 2 && out.distances_decreasing,
        format!("{} periodic continuations with strictly decreasing distance", out.entries.len()),
    );
    Ok(())
}

fn properties(c: &mut Criterion) -> Outcome {
    let mut runner = TestRunner::deterministic();
    let strat = (common::valid_map(), common::field(), common::field(), -2.0f64..=2.0, -2.0f64..=2.0);
    let mut linear_ok = true;
    for _ in 0..200 {
        let (f, v1, v2, a, b) = strat.new_tree(&mut runner).unwrap().current();
        let j1 = j_functional(&f, &v1, 1e-12)?;
        let j2 = j_functional(&f, &v2, 1e-12)?;
        let combo = v1.scale(a).add_scaled(&v2, b);
        let j = j_functional(&f, &combo, 1e-12)?;
        let allowed = j.tail_bound + a.abs() * j1.tail_bound + b.abs() * j2.tail_bound
            + 1e-13 * (1.0 + a_priori_bound(&f, &combo) + a_priori_bound(&f, &v1) + a_priori_bound(&f, &v2));
        linear_ok &= (j.value - a * j1.value - b * j2.value).abs() <= allowed;
    }
    c.check(linear_ok, "J linearity on 200 random (f, v1, v2, a, b)".into());

    let mut distinct = true;
    let mut count = 0;
    for f in [PiecewiseMap::golden_tent(), PiecewiseMap::full_tent()] {
        let pts = periodic_points(&f, 8)?;
        let mut words: Vec<String> = pts.iter().map(|p| itinerary(&f, p.x, 24, DEFAULT_TOL_C).to_string()).collect();
        count += words.len();
        words.sort();
        let n = words.len();
        words.dedup();
        distinct &= words.len() == n;
    }
    c.check(distinct, format!("distinct itineraries on {count} periodic points"));

    let fam = common::golden_transversal_family();
    let grid = parameter_grid(-0.02, 0.02, 51);
    let runs: Vec<String> = [1, 4]
        .into_iter()
        .map(|n| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(|| run_scan(&fam, &grid, &ScanOptions::default()))
                .map(|r| serde_json::to_string(&r).unwrap())
        })
        .collect::<Result<_, _>>()?;
    c.check(runs[0] == runs[1], "scan output identical on 1 and 4 worker threads".into());

    let fam = MapFamily::linear(PiecewiseMap::golden_tent(), DirectionField::bump(), 0.02)?;
    let w = DirectionField::odd_bump();
    let d0 = slope_field(&fam, &w, 0.0, 0.0)?.d;
    let r: Vec<f64> = [0.016, 0.008, 0.004]
        .iter()
        .map(|&h| step_residual(&fam, &w, 0.0, 0.0, d0, h, SlopeRule::Relation { period: 3 }).map(|s| s.residual))
        .collect::<Result<_, _>>()?;
    c.check(
        r[0] / r[1] >= 8.0 && r[1] / r[2] >= 8.0,
        format!("step-halving residual ratios {:.1}, {:.1} (limit 8)", r[0] / r[1], r[1] / r[2]),
    );
    Ok(())
}

fn main() -> ExitCode {
    let suites: [Suite; 10] = [
        (1, "golden-tent construction", golden_construction),
        (2, "J oracles", j_oracles),
        (3, "twisted cohomology", cohomology),
        (4, "parameter/phase consistency", phase),
        (5, "side constants", side),
        (6, "deformation", deformation),
        (7, "transversality", transversality),
        (8, "conjugacy", conjugacy),
        (9, "periodic approximation", approximation),
        (10, "property suites", properties),
    ];
    let mut failed = 0;
    for (id, title, run) in suites {
        let mut c = Criterion::new(id, title);
        if let Err(e) = run(&mut c) {
            c.fail_with(e);
        }
        println!("[{}] {:>2}. {}", if c.ok { "PASS" } else { "FAIL" }, c.id, c.title);
        for d in &c.details {
            println!("        {d}");
        }
        failed += usize::from(!c.ok);
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

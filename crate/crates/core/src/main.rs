use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use pexpand::conjugacy::{
    build_conjugacy_table, eventually_periodic_points, verify_conjugacy, DEFAULT_DEPTH,
};
use pexpand::deform::{
    build_tilde_family, continue_periodic, integrate_deformation, DeformationTrace, TildeFamily,
};
use pexpand::functional::{
    a_priori_bound, check_twisted_cohomology, horizontality, j_functional, uniform_grid, AlphaSolution,
    DEFAULT_J_TOL,
};
use pexpand::io::{self, RunConfig};
use pexpand::map::{
    detect_periodic_critical, expansivity_certificate, goodness, FamilyCurve, MapFamily, DEFAULT_PERIOD_TOL,
};
use pexpand::scan::{parameter_grid, run_scan, ScanOptions};
use pexpand::workflow::{run_corollary51, run_corollary52, select_auxiliary, ApproximationOptions, WorkflowOptions};
use pexpand::{Error, Result};

#[derive(Parser)]
#[command(name = "pexpand", version, about = "Deformations of piecewise expanding unimodal maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Number of parameter nodes over the family domain.
    #[arg(long, global = true)]
    grid: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the map class conditions, goodness and expansivity.
    Validate,
    /// Evaluate J(f, v).
    J,
    /// Solve the twisted cohomological equation.
    Alpha,
    /// Test horizontality of v by both criteria.
    Horiz,
    /// Integrate the deformation ODE of a family.
    Deform,
    /// Continue a periodic critical relation along a family.
    Continue,
    /// Tabulate the conjugacy between two maps.
    Conjugacy,
    /// Scan a family for class transitions.
    Scan,
    /// Deform a map tangent to a horizontal direction.
    Cor51,
    /// Approximate an in-class family by periodic families.
    Cor52,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    tol: Option<f64>,
    depth: Option<usize>,
    grid: Option<usize>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn json(&self, name: &str, kind: &str, data: &impl Serialize) -> Result<()> {
        io::write_json(&self.path(name), kind, data)
    }

    fn tol(&self) -> f64 {
        self.tol.or(self.cfg.tol).unwrap_or(DEFAULT_J_TOL)
    }

    fn trace(&self, family: &MapFamily) -> Result<DeformationTrace> {
        let w = match self.cfg.w()? {
            Some(w) => w,
            None => select_auxiliary(&family.map_at(0.0)?, &family.velocity_at(0.0)?)?.1,
        };
        let step = self.cfg.step.unwrap_or(1e-3);
        let ode_tol = self.tol.or(self.cfg.tol).unwrap_or(1e-10);
        integrate_deformation(family, &w, family.domain(), step, ode_tol)
    }

    fn tilde(&self, family: &MapFamily) -> Result<TildeFamily<MapFamily>> {
        build_tilde_family(family, &self.trace(family)?)
    }

    fn grid(&self, domain: (f64, f64)) -> Vec<f64> {
        match (self.grid, self.cfg.grid) {
            (Some(n), _) => parameter_grid(domain.0, domain.1, n),
            (None, Some(g)) => parameter_grid(g.lo, g.hi, g.n),
            (None, None) => parameter_grid(domain.0, domain.1, 101),
        }
    }
}

#[derive(Serialize)]
struct ValidateOut<'a> {
    report: &'a pexpand::map::ValidationReport,
    goodness: Option<pexpand::map::Goodness>,
    expansivity: Option<pexpand::map::ExpansivityCertificate>,
}

#[derive(Serialize)]
struct JOut {
    j: pexpand::functional::JResult,
    a_priori_bound: f64,
}

#[derive(Serialize)]
struct AlphaPoint {
    x: f64,
    alpha: pexpand::functional::AlphaValue,
}

#[derive(Serialize)]
struct AlphaOut {
    bound: f64,
    tail_bound: f64,
    values: Vec<AlphaPoint>,
    cohomology: pexpand::functional::CohomologyCheck,
}

fn validate(ctx: &Ctx) -> Result<()> {
    let f = ctx.cfg.map()?;
    let report = f.validate();
    let (goodness, expansivity) = if report.passed {
        (
            Some(goodness(&f, pexpand::functional::DEFAULT_PERIOD_SEARCH, DEFAULT_PERIOD_TOL)?),
            Some(expansivity_certificate(&f)?),
        )
    } else {
        (None, None)
    };
    ctx.json(
        "validation.json",
        "validation",
        &ValidateOut {
            report,
            goodness,
            expansivity,
        },
    )?;
    println!("{}", report.summary());
    f.require_valid().map(|_| ())
}

fn j(ctx: &Ctx) -> Result<()> {
    let f = ctx.cfg.map()?;
    let v = ctx.cfg.field()?;
    let j = j_functional(&f, &v, ctx.tol())?;
    println!("J = {:?} (tail {:e})", j.value, j.tail_bound);
    ctx.json(
        "j.json",
        "j",
        &JOut {
            j,
            a_priori_bound: a_priori_bound(&f, &v),
        },
    )
}

fn alpha(ctx: &Ctx) -> Result<()> {
    let f = ctx.cfg.map()?;
    let v = ctx.cfg.field()?;
    let sol = AlphaSolution::new(&f, &v, ctx.tol())?;
    let xs = ctx.cfg.points.clone().unwrap_or_else(|| uniform_grid(201));
    let values = xs
        .iter()
        .map(|&x| Ok(AlphaPoint { x, alpha: sol.eval(x)? }))
        .collect::<Result<Vec<_>>>()?;
    let cohomology = check_twisted_cohomology(&f, &v, &sol, &xs);
    println!("max cohomology residual {:e}", cohomology.max_residual);
    ctx.json(
        "alpha.json",
        "alpha",
        &AlphaOut {
            bound: sol.bound(),
            tail_bound: sol.tail_bound(),
            values,
            cohomology,
        },
    )
}

fn horiz(ctx: &Ctx) -> Result<()> {
    let f = ctx.cfg.map()?;
    let v = ctx.cfg.field()?;
    let h = horizontality(&f, &v, ctx.tol.or(ctx.cfg.tol).unwrap_or(1e-10))?;
    println!("horizontal: {} (|J| = {:e})", h.horizontal, h.residual);
    ctx.json("horizontality.json", "horizontality", &h)
}

fn deform(ctx: &Ctx) -> Result<()> {
    let family = ctx.cfg.family()?;
    let tilde = ctx.tilde(&family)?;
    let trace = &tilde.trace;
    io::write_trace_csv(&ctx.path("trace.csv"), trace)?;
    io::write_plot_data(&ctx.path("trace_plot.dat"), trace.samples.iter().map(|s| (s.t, s.b)))?;
    ctx.json("trace.json", "deformation", &tilde_summary(&tilde))?;
    println!(
        "{} samples on [{}, {}], max J residual {:e}, kneading drift at {} samples",
        trace.samples.len(),
        trace.t_range().0,
        trace.t_range().1,
        trace.max_j_residual(),
        tilde.drift.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct TraceSummary<'a> {
    trace: &'a DeformationTrace,
    complete: bool,
    max_j_residual: f64,
    max_relation_residual: Option<f64>,
    clamped_steps: usize,
    kneading: String,
    drift: &'a [pexpand::deform::KneadingDrift],
}

fn tilde_summary(t: &TildeFamily<MapFamily>) -> TraceSummary<'_> {
    TraceSummary {
        trace: &t.trace,
        complete: t.trace.is_complete(),
        max_j_residual: t.trace.max_j_residual(),
        max_relation_residual: t.trace.max_relation_residual(),
        clamped_steps: t.trace.clamped_steps(),
        kneading: t.reference.to_string(),
        drift: &t.drift,
    }
}

fn continuation(ctx: &Ctx) -> Result<()> {
    let family = ctx.cfg.family()?;
    let f0 = family.map_at(0.0)?;
    let w = match ctx.cfg.w()? {
        Some(w) => w,
        None => select_auxiliary(&f0, &family.velocity_at(0.0)?)?.1,
    };
    let period = match ctx.cfg.period {
        Some(p) => p,
        None => detect_periodic_critical(&f0, pexpand::functional::DEFAULT_PERIOD_SEARCH, DEFAULT_PERIOD_TOL)?
            .period
            .ok_or_else(|| Error::Config("turning point is not periodic; set \"period\" and \"theta\"".into()))?,
    };
    let c = continue_periodic(
        &family,
        &w,
        period,
        ctx.cfg.theta.unwrap_or(0.0),
        family.domain(),
        ctx.cfg.step.unwrap_or(1e-3),
    )?;
    io::write_continuation_csv(&ctx.path("continuation.csv"), &c)?;
    io::write_plot_data(&ctx.path("continuation_plot.dat"), c.nodes.iter().map(|n| (n.t, n.b)))?;
    ctx.json("continuation.json", "continuation", &c)?;
    println!(
        "period {} from theta {:?}: {} nodes, max residual {:e}",
        c.period,
        c.theta0,
        c.nodes.len(),
        c.max_residual()
    );
    Ok(())
}

fn conjugacy(ctx: &Ctx) -> Result<()> {
    let (f0, f1, source, target) = if ctx.cfg.deformed {
        let family = ctx.cfg.family()?;
        let t = ctx.cfg.t.ok_or_else(|| Error::Config("missing \"t\"".into()))?;
        let tilde = ctx.tilde(&family)?;
        (tilde.map_at(0.0)?, tilde.map_at(t)?, "f~_0".to_string(), format!("f~_{t}"))
    } else {
        let target = ctx
            .cfg
            .target
            .as_ref()
            .ok_or_else(|| Error::Config("missing \"target\"".into()))?
            .build()?;
        (ctx.cfg.map()?, target, "map".to_string(), "target".to_string())
    };
    let depth = ctx.depth.or(ctx.cfg.depth).unwrap_or(DEFAULT_DEPTH);
    let points = match &ctx.cfg.points {
        Some(p) => p.clone(),
        None => eventually_periodic_points(&f0, 8, 2)?,
    };
    let table = build_conjugacy_table(&f0, &f1, &points, depth, &source, &target)?;
    let report = verify_conjugacy(&f0, &f1, &table, ctx.tol.or(ctx.cfg.tol).unwrap_or(1e-8))?;
    io::write_conjugacy_csv(&ctx.path("conjugacy.csv"), &table, &report)?;
    #[derive(Serialize)]
    struct Out<'a> {
        table: &'a pexpand::conjugacy::ConjugacyTable,
        report: &'a pexpand::conjugacy::ConjugacyReport,
    }
    ctx.json("conjugacy.json", "conjugacy", &Out { table: &table, report: &report })?;
    println!(
        "{} entries, {} refused, max residual {:e}, monotone {}",
        table.entries.len(),
        table.refused.len(),
        report.max_residual,
        report.monotone
    );
    if report.passed {
        Ok(())
    } else {
        Err(Error::Certification(format!(
            "conjugacy residual {:e} exceeds tolerance",
            report.max_residual
        )))
    }
}

fn scan(ctx: &Ctx) -> Result<()> {
    let family = ctx.cfg.family()?;
    let mut opts = ScanOptions::default();
    if let Some(d) = ctx.depth.or(ctx.cfg.depth) {
        opts.kneading_depth = d;
        opts.relation_depth = d;
    }
    let res = if ctx.cfg.deformed {
        let tilde = ctx.tilde(&family)?;
        run_scan(&tilde, &ctx.grid(tilde.domain()), &opts)?
    } else {
        run_scan(&family, &ctx.grid(family.domain()), &opts)?
    };
    io::write_scan_csv(&ctx.path("scan.csv"), &res)?;
    ctx.json("scan.json", "scan", &res)?;
    println!(
        "{} records, {} transitions, {} failed nodes, max |J| {:e}, consistent {}",
        res.records.len(),
        res.flags.len(),
        res.failures.len(),
        res.max_abs_j,
        res.ad_consistent
    );
    Ok(())
}

fn cor51(ctx: &Ctx) -> Result<()> {
    let f = ctx.cfg.map()?;
    let v = ctx.cfg.field()?;
    let mut opts = WorkflowOptions::default();
    if let Some(g) = ctx.cfg.family.as_ref() {
        opts.delta = g.domain.1;
    }
    if let Some(s) = ctx.cfg.step {
        opts.h0 = s;
    }
    let out = run_corollary51(&f, &v, ctx.cfg.w()?, &opts)?;
    io::write_trace_csv(&ctx.path("trace.csv"), &out.trace)?;
    io::write_plot_data(&ctx.path("trace_plot.dat"), out.trace.samples.iter().map(|s| (s.t, s.b)))?;
    ctx.json("cor51.json", "tangent_deformation", &out)?;
    println!(
        "|b'(0)| = {:e}, kneading {}, drift at {} samples",
        out.tangency,
        out.kneading,
        out.drift.len()
    );
    if out.tangent {
        Ok(())
    } else {
        Err(Error::Internal(format!("deformation not tangent: |b'(0)| = {:e}", out.tangency)))
    }
}

fn cor52(ctx: &Ctx) -> Result<()> {
    let family = ctx.cfg.family()?;
    let mut opts = ApproximationOptions::default();
    if let Some(n) = ctx.grid {
        opts.scan_nodes = n;
    }
    if let Some(s) = ctx.cfg.step {
        opts.continuation_step = s;
    }
    let out = if ctx.cfg.deformed {
        run_corollary52(&ctx.tilde(&family)?, &opts)?
    } else {
        run_corollary52(&family, &opts)?
    };
    for (n, e) in out.entries.iter().enumerate() {
        io::write_continuation_csv(&ctx.path(&format!("continuation_{}.csv", n + 1)), &e.continuation)?;
        println!(
            "n = {}: period {}, theta {:?}, distance {:e}",
            n + 1,
            e.period,
            e.theta,
            e.distance
        );
    }
    ctx.json("cor52.json", "periodic_approximation", &out)?;
    if out.partial {
        eprintln!("partial result: fewer than two periodic families found");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Ok(n) = std::env::var("PEXPAND_THREADS") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::Config(format!("PEXPAND_THREADS must be an integer, got {n:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Ctx {
        cfg,
        out: cli.out.clone(),
        tol: cli.tol,
        depth: cli.depth,
        grid: cli.grid,
    };
    match cli.command {
        Command::Validate => validate(&ctx),
        Command::J => j(&ctx),
        Command::Alpha => alpha(&ctx),
        Command::Horiz => horiz(&ctx),
        Command::Deform => deform(&ctx),
        Command::Continue => continuation(&ctx),
        Command::Conjugacy => conjugacy(&ctx),
        Command::Scan => scan(&ctx),
        Command::Cor51 => cor51(&ctx),
        Command::Cor52 => cor52(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

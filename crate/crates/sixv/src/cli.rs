//! `sixv` subcommands. Every run writes `manifest.json` into `--out` before
//! any computation and rewrites it with the wall time at the end.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use sixv_core::dynamics::{ActiveBox, Clock, Engine, FaceTracker, RateSet, RunStatus};
use sixv_core::hydro::{burgers_quadrant, CurrentSetup, DensityField};
use sixv_core::jump::{ExitPolicy, SubsetZ};
use sixv_core::lattice::{validate, EdgeGrid, Geometry, VertexKind};
use sixv_core::sampler::{random_torus, sample_kpz, sample_quadrant, sample_rect, BoundarySpec};

use crate::checks::{run_named, CheckReport, Point, CHECKS};
use crate::experiments::{aj_runs, census_fractions, current_mc, default_margin, two_plus_one};
use crate::io::{fmt_f64, write_csv, write_grid, write_json, EventJson, EventLog, SCHEMA_VERSION};
use crate::manifest::ManifestWriter;
use crate::num::Param;

#[derive(Debug, Parser)]
#[command(name = "sixv", version, about = "Stochastic six vertex simulator and exact verifier")]
pub struct Cli {
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "sixv-out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Sample a rectangle, quadrant window or KPZ window.
    Sample(SampleArgs),
    /// Run the continuous-time dynamics.
    Evolve(EvolveArgs),
    /// Monte Carlo current against the closed form.
    Current(CurrentArgs),
    /// Exact and floating-point identity checks.
    Verify(VerifyArgs),
    /// Coupled slice / annihilation-jump runs.
    Aj(AjArgs),
    /// Burgers and 2+1 height solvers.
    Hydro(HydroArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Step,
    Empty,
    Kpz,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long, default_value = "1/4")]
    pub q: Param,
    #[arg(long, default_value = "1/2")]
    pub u: Param,
    /// Slope of the KPZ boundary.
    #[arg(long, default_value = "1/2")]
    pub s: Param,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, value_enum, default_value = "step")]
    pub boundary: BoundaryKind,
    /// Occupied bottom in-edges for step and empty boundaries.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<usize>,
    /// Extra rows and columns sampled and cut off (KPZ only).
    #[arg(long, default_value_t = 0)]
    pub margin: usize,
    /// Also write the text dump `grid.txt`.
    #[arg(long)]
    pub art: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Torus,
    Window,
    Quadrant,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitKind {
    /// Drop (and count) a jump that would leave the window.
    Error,
    /// Let jumps leave through the right edge.
    Free,
}

#[derive(Debug, Args, Serialize)]
pub struct EvolveArgs {
    #[arg(long, value_enum)]
    pub geometry: GeometryKind,
    #[arg(long, default_value = "1/4")]
    pub q: Param,
    #[arg(long, default_value = "1/2")]
    pub u: Param,
    /// Clock scale of the quadrant dynamics.
    #[arg(long, default_value = "0.3")]
    pub eta: Param,
    /// Initial slope for the window geometry.
    #[arg(long, default_value = "1/2")]
    pub s: Param,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t: f64,
    /// Linear size: torus side, active window side, or quadrant window side.
    #[arg(long = "R", default_value_t = 64)]
    pub r: usize,
    #[arg(long)]
    pub snapshot_every: Option<f64>,
    /// Start from this grid JSON instead of sampling.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Skip the event log.
    #[arg(long)]
    pub no_log: bool,
    #[arg(long, value_enum, default_value = "error")]
    pub exit: ExitKind,
}

#[derive(Debug, Args, Serialize)]
pub struct CurrentArgs {
    #[arg(long, default_value = "1/4")]
    pub q: Param,
    #[arg(long, default_value = "1/2")]
    pub u: Param,
    /// One or more slopes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1/2")]
    pub s: Vec<Param>,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    #[arg(long = "T", default_value_t = 8.0)]
    pub t: f64,
    #[arg(long = "R", default_value_t = 256)]
    pub r: usize,
    /// Right margin; defaults to ceil(8 ln(R)^2).
    #[arg(long)]
    pub margin: Option<usize>,
    /// Side of the tracked face box; defaults to R/4.
    #[arg(long)]
    pub faces: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
pub enum CheckName {
    Ybe,
    Bij,
    TwoRowSwap,
    TorusStationarity,
    TwistedChain,
    RowOps,
    Nxy,
    All,
}

impl CheckName {
    fn names(self) -> Vec<&'static str> {
        match self {
            CheckName::All => CHECKS.to_vec(),
            c => vec![CHECKS[c as usize]],
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub check: CheckName,
    #[arg(long)]
    pub q: Option<Param>,
    #[arg(long)]
    pub u: Option<Param>,
    #[arg(long)]
    pub v: Option<Param>,
}

#[derive(Debug, Args, Serialize)]
pub struct AjArgs {
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long = "T", default_value_t = 2.0)]
    pub t: f64,
    #[arg(long, default_value = "1/4")]
    pub q: Param,
    #[arg(long, default_value = "1/2")]
    pub u: Param,
    #[arg(long, default_value = "1/2")]
    pub s: Param,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
pub enum HydroMode {
    /// Quadrant Burgers solution, `x,y,rho`.
    Burgers,
    /// 2+1 height evolution, `x,y,H`.
    #[value(name = "2plus1")]
    TwoPlusOne,
}

#[derive(Debug, Args, Serialize)]
pub struct HydroArgs {
    #[arg(value_enum)]
    pub mode: HydroMode,
    #[arg(long, default_value = "0.3")]
    pub u: Param,
    #[arg(long, default_value = "0.3")]
    pub eta: Param,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Cells per axis.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 4.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
}

/// Worker pool capped by `SIXV_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var("SIXV_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| anyhow!("SIXV_THREADS must be a positive integer, got {v:?}"))?.max(1),
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

/// Parse and run; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let pool = thread_pool()?;
    let name = match &cli.command {
        Command::Sample(_) => "sample",
        Command::Evolve(_) => "evolve",
        Command::Current(_) => "current",
        Command::Verify(_) => "verify",
        Command::Aj(_) => "aj",
        Command::Hydro(_) => "hydro",
    };
    let config = serde_json::to_value(&cli.command)?;
    let manifest = ManifestWriter::begin(&cli.out, name, config, Some(cli.seed), pool.current_num_threads())?;
    let res = pool.install(|| match &cli.command {
        Command::Sample(a) => sample(a, &cli.out, cli.seed),
        Command::Evolve(a) => evolve(a, &cli.out, cli.seed),
        Command::Current(a) => current(a, &cli.out, cli.seed),
        Command::Verify(a) => verify(a, &cli.out, cli.seed),
        Command::Aj(a) => aj(a, &cli.out, cli.seed),
        Command::Hydro(a) => hydro(a, &cli.out),
    });
    match res {
        Ok((outputs, code)) => {
            let outs = outputs.iter().map(|p| rel(&cli.out, p)).collect();
            manifest.finish(outs, None)?;
            Ok(code)
        }
        Err(e) => {
            manifest.finish(Vec::new(), Some(format!("{e:#}")))?;
            Err(e)
        }
    }
}

type Outcome = Result<(Vec<PathBuf>, i32)>;

fn check_unit(name: &str, p: &Param) -> Result<()> {
    if !(p.value > 0.0 && p.value < 1.0) {
        bail!("--{name} must lie in (0,1), got {p}");
    }
    Ok(())
}

fn check_q(p: &Param) -> Result<()> {
    if !(p.value >= 0.0 && p.value < 1.0) {
        bail!("--q must lie in [0,1), got {p}");
    }
    Ok(())
}

fn summary_rows(g: &EdgeGrid) -> Result<Vec<Vec<String>>> {
    let (w, h) = (g.width(), g.height());
    let mut rows = Vec::new();
    for y in 0..h {
        let c: usize = (0..w).map(|x| g.v_out(x, y) as usize).sum();
        rows.push(vec!["row_vertical_density".into(), y.to_string(), fmt_f64(c as f64 / w as f64)]);
    }
    for x in 0..w {
        let c: usize = (0..h).map(|y| g.h_out(x, y) as usize).sum();
        rows.push(vec!["column_horizontal_density".into(), x.to_string(), fmt_f64(c as f64 / h as f64)]);
    }
    for (k, f) in VertexKind::ALL.iter().zip(census_fractions(g)?) {
        rows.push(vec!["census".into(), format!("{k:?}"), fmt_f64(f)]);
    }
    Ok(rows)
}

fn sample(a: &SampleArgs, out: &Path, seed: u64) -> Outcome {
    check_q(&a.q)?;
    check_unit("u", &a.u)?;
    if a.width == 0 || a.height == 0 {
        bail!("--width and --height must be positive");
    }
    let lambda = SubsetZ::new(a.lambda.clone())?;
    let g = match a.boundary {
        BoundaryKind::Step => sample_quadrant(a.q.value, a.u.value, a.width, a.height, &BoundarySpec::step(lambda), seed)?,
        BoundaryKind::Empty => {
            let us = vec![a.u.value; a.height];
            sample_rect(a.q.value, &us, a.width, a.height, &BoundarySpec::empty(lambda), seed)?
        }
        BoundaryKind::Kpz => {
            check_unit("s", &a.s)?;
            sample_kpz(a.q.value, a.s.value, a.u.value, a.width, a.height, a.margin, seed)?
        }
    };
    let gp = out.join("grid.json");
    write_grid(&gp, &g)?;
    let sp = out.join("summary.csv");
    write_csv(&sp, &["quantity", "index", "value"], &summary_rows(&g)?)?;
    let mut outs = vec![gp, sp];
    if a.art {
        let ap = out.join("grid.txt");
        fs::write(&ap, g.art())?;
        outs.push(ap);
    }
    Ok((outs, 0))
}

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Reached => "reached",
        RunStatus::Absorbed => "absorbed",
        RunStatus::Overflow => "overflow",
    }
}

fn evolve(a: &EvolveArgs, out: &Path, seed: u64) -> Outcome {
    check_q(&a.q)?;
    check_unit("u", &a.u)?;
    if !(a.t >= 0.0 && a.t.is_finite()) {
        bail!("--T must be finite and nonnegative");
    }
    if a.r < 4 {
        bail!("--R must be at least 4");
    }
    if let Some(d) = a.snapshot_every {
        if !(d > 0.0) {
            bail!("--snapshot-every must be positive");
        }
        if a.t / d > 10_000.0 {
            bail!("more than 10000 snapshots requested; increase --snapshot-every");
        }
    }
    let (q, u) = (a.q.value, a.u.value);
    let r = a.r;
    let policy = match (a.geometry, a.exit) {
        (GeometryKind::Quadrant, _) | (_, ExitKind::Free) => ExitPolicy::Free,
        _ => ExitPolicy::Error,
    };
    let grid = match &a.input {
        Some(p) => crate::io::read_grid(p)?,
        None => match a.geometry {
            GeometryKind::Torus => random_torus(r, r, 4 * r * r, seed)?,
            GeometryKind::Window => {
                check_unit("s", &a.s)?;
                sample_kpz(q, a.s.value, u, r + default_margin(r), r, 0, seed)?
            }
            GeometryKind::Quadrant => sample_quadrant(q, u, r, r, &BoundarySpec::step(SubsetZ::empty()), seed)?,
        },
    };
    let want = match a.geometry {
        GeometryKind::Torus => matches!(grid.geometry, Geometry::Torus { .. }),
        GeometryKind::Window => matches!(grid.geometry, Geometry::Rect { .. }),
        GeometryKind::Quadrant => matches!(grid.geometry, Geometry::QuadrantWindow { .. }),
    };
    if !want {
        bail!("input grid geometry does not match --geometry");
    }
    let (w, h) = (grid.width(), grid.height());
    let (clock, active) = match a.geometry {
        GeometryKind::Torus => (Clock::Homogeneous(RateSet::stochastic(q, u)?), ActiveBox::full(&grid)),
        GeometryKind::Window => {
            let x1 = r.min(w) - 1;
            (Clock::Homogeneous(RateSet::stochastic(q, u)?), ActiveBox { x0: 0, x1, y0: 0, y1: r.min(h) - 2 })
        }
        GeometryKind::Quadrant => {
            if !(a.eta.value >= 0.0 && u + a.eta.value < 1.0) {
                bail!("--eta must satisfy 0 <= eta and u + eta < 1");
            }
            (Clock::Quadrant { q, u, eta: a.eta.value }, ActiveBox::full(&grid))
        }
    };
    let mut e = Engine::new(grid, clock, active, policy)?;
    let side = (r / 4).max(1).min(w - 1).min(h - 1);
    let f0x = (active.x0 + active.x1 + 1 - side) / 2;
    let f0y = ((active.y0 + active.y1 + 1).saturating_sub(side) / 2).max(1);
    e.tracker = Some(FaceTracker::new(f0x.max(1), f0y, side, side.min(h - f0y)));
    if !a.no_log {
        e.enable_log();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let snap_dir = out.join("snapshots");
    let mut outs = Vec::new();
    if a.snapshot_every.is_some() {
        fs::create_dir_all(&snap_dir)?;
    }
    let mut times = Vec::new();
    if let Some(d) = a.snapshot_every {
        let mut k = 1;
        while (k as f64) * d < a.t {
            times.push(k as f64 * d);
            k += 1;
        }
    }
    times.push(a.t);
    let mut rows = vec![series_row(&e, 0.0)];
    let snap = |e: &Engine, k: usize, outs: &mut Vec<PathBuf>| -> Result<()> {
        if a.snapshot_every.is_some() {
            let p = snap_dir.join(format!("snapshot_{k:05}.json"));
            write_grid(&p, &e.grid)?;
            outs.push(p);
        }
        Ok(())
    };
    snap(&e, 0, &mut outs)?;
    let mut status = RunStatus::Reached;
    for (k, &t) in times.iter().enumerate() {
        loop {
            status = e.run_until(t, &mut rng)?;
            // an overflowing jump is dropped and counted; keep going
            if status != RunStatus::Overflow {
                break;
            }
        }
        rows.push(series_row(&e, t));
        snap(&e, k + 1, &mut outs)?;
    }
    if !validate(&e.grid).is_empty() {
        bail!("final grid violates the ice rule");
    }
    let tp = out.join("timeseries.csv");
    write_csv(&tp, &["t", "events", "mean_height_change", "vertical_density", "seeds_a", "seeds_b", "seeds_c", "overflows"], &rows)?;
    outs.push(tp);
    let fp = out.join("final.json");
    write_grid(&fp, &e.grid)?;
    outs.push(fp);
    if let Some(log) = e.log.as_ref() {
        let lp = out.join("trajectory.json");
        let l = EventLog { schema_version: SCHEMA_VERSION, final_time: e.time(), status: status_name(status).into(), events: log.iter().map(EventJson::from).collect() };
        write_json(&lp, &l)?;
        outs.push(lp);
    }
    Ok((outs, 0))
}

fn series_row(e: &Engine, t: f64) -> Vec<String> {
    let g = &e.grid;
    let (w, h) = (g.width(), g.height());
    let occ: usize = (0..w).map(|x| (0..h).map(|y| g.v_in(x, y) as usize).sum::<usize>()).sum();
    let dh = e.tracker.as_ref().map_or(0.0, |tr| tr.dh.iter().sum::<i64>() as f64 / tr.dh.len().max(1) as f64);
    let c = e.counts();
    vec![
        fmt_f64(t),
        e.n_events.to_string(),
        fmt_f64(dh),
        fmt_f64(occ as f64 / (w * h) as f64),
        c[0].to_string(),
        c[1].to_string(),
        c[2].to_string(),
        e.overflows.to_string(),
    ]
}

fn current(a: &CurrentArgs, out: &Path, seed: u64) -> Outcome {
    check_q(&a.q)?;
    check_unit("u", &a.u)?;
    if a.replicates < 2 {
        bail!("--replicates must be at least 2");
    }
    if a.r.saturating_mul(a.r.saturating_add(a.margin.unwrap_or(0))) > 1 << 26 {
        bail!("--R too large: the window would exceed 2^26 vertices");
    }
    let mut rows = Vec::new();
    for (k, s) in a.s.iter().enumerate() {
        check_unit("s", s)?;
        let mut st = CurrentSetup::stochastic(a.q.value, a.u.value, s.value, a.r, a.t)?;
        if let Some(m) = a.margin {
            st.margin = m;
        }
        if let Some(f) = a.faces {
            st.faces = f;
        }
        let row = current_mc(&st, a.replicates, seed.wrapping_add(k as u64))?;
        rows.push(vec![
            fmt_f64(row.s),
            fmt_f64(row.u),
            fmt_f64(row.q),
            fmt_f64(row.j_analytic),
            fmt_f64(row.j_measured),
            fmt_f64(row.stderr),
            row.replicates.to_string(),
            row.excluded.to_string(),
        ]);
    }
    let p = out.join("current.csv");
    write_csv(&p, &["s", "u", "q", "J_analytic", "J_measured", "stderr", "replicates", "excluded"], &rows)?;
    Ok((vec![p], 0))
}

fn verify_point(a: &VerifyArgs) -> Result<Option<Point>> {
    match (&a.q, &a.u, &a.v) {
        (None, None, None) => Ok(None),
        (Some(q), Some(u), Some(v)) => {
            check_q(q)?;
            check_unit("u", u)?;
            check_unit("v", v)?;
            if u.value >= v.value {
                bail!("verify needs u < v");
            }
            let exact = match (&q.exact, &u.exact, &v.exact) {
                (Some(a), Some(b), Some(c)) => Some([a.clone(), b.clone(), c.clone()]),
                _ => None,
            };
            Ok(Some(Point { f: [q.value, u.value, v.value], exact }))
        }
        _ => bail!("give all of --q --u --v or none"),
    }
}

fn verify(a: &VerifyArgs, out: &Path, seed: u64) -> Outcome {
    let point = verify_point(a)?;
    let mut outs = Vec::new();
    let mut all_ok = true;
    for name in a.check.names() {
        let reports: Vec<CheckReport> = run_named(name, point.as_ref(), seed)?;
        let passed = reports.iter().all(|r| r.passed);
        all_ok &= passed;
        for r in &reports {
            println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.check, r.summary);
        }
        let p = out.join(format!("verify_{name}.json"));
        write_json(&p, &json!({ "schema_version": SCHEMA_VERSION, "check": name, "passed": passed, "reports": reports }))?;
        outs.push(p);
    }
    Ok((outs, if all_ok { 0 } else { 1 }))
}

fn aj(a: &AjArgs, out: &Path, seed: u64) -> Outcome {
    check_q(&a.q)?;
    check_unit("u", &a.u)?;
    check_unit("s", &a.s)?;
    let rows = aj_runs(a.q.value, a.u.value, a.s.value, a.width, a.t, a.runs, seed)?;
    let opt = |v: Option<i64>| v.map_or(String::new(), |x| x.to_string());
    let recs: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.run.to_string(), r.dominated.to_string(), r.violations.to_string(), r.aligned_violations.to_string(), r.checks.to_string(), opt(r.a1_initial), opt(r.a1_final)])
        .collect();
    let p = out.join("aj.csv");
    write_csv(&p, &["run", "dominated", "violations", "aligned_violations", "checks", "a1_initial", "a1_final"], &recs)?;
    Ok((vec![p], 0))
}

fn mesh_rows(f: &DensityField) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(f.nx * f.ny);
    for j in 0..f.ny {
        for i in 0..f.nx {
            rows.push(vec![fmt_f64(f.x(i)), fmt_f64(f.y(j)), fmt_f64(f.get(i, j))]);
        }
    }
    rows
}

fn hydro(a: &HydroArgs, out: &Path) -> Outcome {
    check_unit("u", &a.u)?;
    if a.n < 2 || a.n > 4000 {
        bail!("--n must lie in 2..=4000");
    }
    let u = a.u.value;
    match a.mode {
        HydroMode::Burgers => {
            let ys: Vec<f64> = (1..=a.n).map(|j| j as f64 / a.n as f64).collect();
            let f = burgers_quadrant(u, a.n, a.x_max / a.n as f64, &ys)?;
            let p = out.join("burgers.csv");
            write_csv(&p, &["x", "y", "rho"], &mesh_rows(&f))?;
            Ok((vec![p], 0))
        }
        HydroMode::TwoPlusOne => {
            let r = two_plus_one(u, a.eta.value, a.tau, a.n, a.x_max, a.steps)?;
            let hp = out.join("heights.csv");
            write_csv(&hp, &["x", "y", "H"], &mesh_rows(&r.evolved_heights))?;
            let tp = out.join("target_density.csv");
            write_csv(&tp, &["x", "y", "rho"], &mesh_rows(&r.target))?;
            let sp = out.join("hydro_summary.json");
            write_json(&sp, &json!({ "schema_version": SCHEMA_VERSION, "sup_deviation": r.sup, "clamped": r.clamped }))?;
            Ok((vec![hp, tp, sp], 0))
        }
    }
}

//! Replicate experiments: current, quadrant mapping, KPZ preservation and
//! truncation coupling, AJ domination, and the hydrodynamic comparisons.
//!
//! Replicates run on the current rayon pool and are merged by index, so the
//! results do not depend on the thread count.

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use sixv_core::aj::{coupled_run, CouplingConfig};
use sixv_core::dynamics::{evolve_quadrant, u_of_tau, ActiveBox, ClockTape, RateSet, RunStatus, TapeRunner};
use sixv_core::hydro::{
    burgers_quadrant, current_formula, current_replicate, current_series, density_from_heights, evolve_2plus1,
    heights_from_density, hydro_consistency, kpz_c2_frequency, phi_du, vertex_census, CurrentEstimate, CurrentSetup,
    DensityField,
};
use sixv_core::jump::{ExitPolicy, SubsetZ};
use sixv_core::lattice::{EdgeGrid, VertexKind};
use sixv_core::sampler::{sample_kpz, sample_quadrant, BoundarySpec};

/// SplitMix64 finaliser; gives each replicate an unrelated seed.
pub fn replicate_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, (v / n as f64).sqrt())
}

/// `|a - b|` in units of the combined standard error; zero-variance pairs give
/// `0` when equal and `∞` otherwise.
fn z_score(a: (f64, f64), b: (f64, f64)) -> f64 {
    let se = (a.1 * a.1 + b.1 * b.1).sqrt();
    let d = (a.0 - b.0).abs();
    if se > 0.0 {
        d / se
    } else if d < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

// ---- current -------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CurrentRow {
    pub s: f64,
    pub u: f64,
    pub q: f64,
    pub j_analytic: f64,
    pub j_measured: f64,
    pub stderr: f64,
    pub replicates: usize,
    pub excluded: usize,
}

impl CurrentRow {
    pub fn sigmas(&self) -> f64 {
        (self.j_measured - self.j_analytic).abs() / self.stderr
    }
    pub fn relative_stderr(&self) -> f64 {
        self.stderr / self.j_analytic.abs()
    }
}

pub fn current_mc(setup: &CurrentSetup, replicates: usize, seed: u64) -> Result<CurrentRow> {
    let vals: Vec<Option<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| current_replicate(setup, replicate_seed(seed, i)))
        .collect::<sixv_core::Result<_>>()?;
    let e = CurrentEstimate::from_replicates(&vals);
    Ok(CurrentRow {
        s: setup.s,
        u: setup.u,
        q: setup.q,
        j_analytic: current_formula(setup.s, setup.u),
        j_measured: e.mean,
        stderr: e.stderr,
        replicates: e.samples,
        excluded: e.excluded,
    })
}

/// Largest `|series - closed form|` over the given `(s, u, q)` points.
pub fn current_series_deviation(points: &[(f64, f64, f64)], terms: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for &(s, u, q) in points {
        worst = worst.max((current_series(s, u, q, terms, terms)? - current_formula(s, u)).abs());
    }
    Ok(worst)
}

// ---- quadrant measure mapping -------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct QuadrantMappingConfig {
    pub q: f64,
    pub u: f64,
    pub eta: f64,
    pub tau: f64,
    pub width: usize,
    pub height: usize,
    pub rows: (usize, usize),
    pub bin: usize,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BinStat {
    pub x0: usize,
    pub x1: usize,
    pub evolved: f64,
    pub evolved_se: f64,
    pub fresh: f64,
    pub fresh_se: f64,
    pub z: f64,
}

/// Per-column-bin vertical density on rows `y0..=y1`.
fn binned_density(g: &EdgeGrid, rows: (usize, usize), bin: usize) -> Vec<f64> {
    let nb = g.width() / bin;
    (0..nb)
        .map(|b| {
            let mut c = 0usize;
            for y in rows.0..=rows.1 {
                for x in b * bin..(b + 1) * bin {
                    c += g.v_in(x, y) as usize;
                }
            }
            c as f64 / (bin * (rows.1 - rows.0 + 1)) as f64
        })
        .collect()
}

/// Step-∅ quadrant evolved from `u` to `τ` against fresh samples at `u(τ)`.
pub fn quadrant_mapping(cfg: &QuadrantMappingConfig) -> Result<Vec<BinStat>> {
    if cfg.rows.1 + 1 >= cfg.height || cfg.bin == 0 {
        anyhow::bail!("rows must lie below the top stored row and bins must be nonempty");
    }
    let ut = u_of_tau(cfg.u, cfg.eta, cfg.tau);
    let b = BoundarySpec::step(SubsetZ::empty());
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
            let s = replicate_seed(cfg.seed, i);
            let g = sample_quadrant(cfg.q, cfg.u, cfg.width, cfg.height, &b, s)?;
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            rng.set_stream(u64::MAX);
            let tr = evolve_quadrant(g, cfg.q, cfg.u, cfg.eta, cfg.tau, false, &mut rng)?;
            let fresh = sample_quadrant(cfg.q, ut, cfg.width, cfg.height, &b, replicate_seed(!cfg.seed, i))?;
            Ok((binned_density(&tr.final_grid, cfg.rows, cfg.bin), binned_density(&fresh, cfg.rows, cfg.bin)))
        })
        .collect::<Result<_>>()?;
    let nb = cfg.width / cfg.bin;
    Ok((0..nb)
        .map(|k| {
            let e: Vec<f64> = pairs.iter().map(|p| p.0[k]).collect();
            let f: Vec<f64> = pairs.iter().map(|p| p.1[k]).collect();
            let (me, se) = mean_se(&e);
            let (mf, sf) = mean_se(&f);
            BinStat { x0: k * cfg.bin, x1: (k + 1) * cfg.bin - 1, evolved: me, evolved_se: se, fresh: mf, fresh_se: sf, z: z_score((me, se), (mf, sf)) }
        })
        .collect())
}

// ---- KPZ preservation and truncation coupling ----------------------------

#[derive(Debug, Clone, Serialize)]
pub struct KpzConfig {
    pub q: f64,
    pub u: f64,
    pub s: f64,
    /// Truncation sizes compared against `reference`.
    pub sizes: Vec<usize>,
    pub reference: usize,
    /// Side of the central window used for statistics and divergence.
    pub window: usize,
    pub t: f64,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeStat {
    pub t: f64,
    pub density: f64,
    pub density_se: f64,
    pub c2: f64,
    pub c2_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KpzResult {
    pub density_exact: f64,
    pub c2_exact: f64,
    pub times: Vec<TimeStat>,
    /// Fraction of replicates whose central window differs from the reference at time `t`.
    pub divergence: Vec<(usize, f64)>,
    pub replicates: usize,
    pub excluded: usize,
    /// Largest z-score of any time against the exact values or against another time.
    pub max_z: f64,
}

impl KpzResult {
    pub fn divergence_decreasing(&self) -> bool {
        let d: Vec<f64> = self.divergence.iter().map(|x| x.1).collect();
        d.windows(2).all(|w| w[1] <= w[0]) && d.first() > d.last()
    }
}

struct KpzReplicate {
    density: [f64; 3],
    c2: [f64; 3],
    diverged: Vec<bool>,
}

fn window_stats(g: &EdgeGrid, x0: usize, y0: usize, w: usize) -> (f64, f64) {
    let mut v = 0usize;
    let mut c2 = 0usize;
    for y in y0..y0 + w {
        for x in x0..x0 + w {
            v += g.v_in(x, y) as usize;
            c2 += (g.kind(x, y) == Some(VertexKind::C2)) as usize;
        }
    }
    let a = (w * w) as f64;
    (v as f64 / a, c2 as f64 / a)
}

fn same_window(a: &EdgeGrid, b: &EdgeGrid, x0: usize, y0: usize, w: usize) -> bool {
    (y0..y0 + w).all(|y| (x0..x0 + w).all(|x| a.arrows(x, y) == b.arrows(x, y)))
}

fn centred_box(c: usize, r: usize) -> ActiveBox {
    ActiveBox { x0: c - r / 2, x1: c + r / 2 - 1, y0: c - r / 2, y1: c + r / 2 - 1 }
}

fn kpz_replicate(cfg: &KpzConfig, rates: RateSet, margin: usize, seed: u64) -> Result<Option<KpzReplicate>> {
    let r = cfg.reference;
    // one spare row on top so the reference box may use every row up to r - 1
    let g = sample_kpz(cfg.q, cfg.s, cfg.u, r + margin, r + 1, 0, seed)?;
    let c = r / 2;
    let wx = c - cfg.window / 2;
    let m = rates.a.max(rates.b).max(rates.c);
    let tape = ClockTape::new(centred_box(c, r), m, cfg.t, seed)?;
    let mut reference = TapeRunner::new(g.clone(), rates, centred_box(c, r), ExitPolicy::Error)?;
    let (d0, c0) = window_stats(&g, wx, wx, cfg.window);
    if reference.advance(&tape, cfg.t / 2.0)? == RunStatus::Overflow {
        return Ok(None);
    }
    let (d1, c1) = window_stats(&reference.grid, wx, wx, cfg.window);
    if reference.advance(&tape, cfg.t)? == RunStatus::Overflow {
        return Ok(None);
    }
    let (d2, c2) = window_stats(&reference.grid, wx, wx, cfg.window);
    let mut diverged = Vec::new();
    for &size in &cfg.sizes {
        let mut run = TapeRunner::new(g.clone(), rates, centred_box(c, size), ExitPolicy::Error)?;
        if run.advance(&tape, cfg.t)? == RunStatus::Overflow {
            return Ok(None);
        }
        diverged.push(!same_window(&run.grid, &reference.grid, wx, wx, cfg.window));
    }
    Ok(Some(KpzReplicate { density: [d0, d1, d2], c2: [c0, c1, c2], diverged }))
}

pub fn default_margin(r: usize) -> usize {
    let l = (r as f64).ln();
    (8.0 * l * l).ceil() as usize
}

pub fn kpz_preservation(cfg: &KpzConfig) -> Result<KpzResult> {
    if cfg.sizes.iter().any(|&s| s > cfg.reference || s < cfg.window || s % 2 == 1) || cfg.window > cfg.reference {
        anyhow::bail!("sizes must be even, at least the window and at most the reference");
    }
    let rates = RateSet::stochastic(cfg.q, cfg.u)?;
    let margin = default_margin(cfg.reference);
    let reps: Vec<Option<KpzReplicate>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| kpz_replicate(cfg, rates, margin, replicate_seed(cfg.seed, i)))
        .collect::<Result<_>>()?;
    let ok: Vec<&KpzReplicate> = reps.iter().flatten().collect();
    let density_exact = cfg.s;
    let c2_exact = kpz_c2_frequency(cfg.q, cfg.u, cfg.s)?;
    let mut times = Vec::new();
    let mut stats = Vec::new();
    for k in 0..3 {
        let d = mean_se(&ok.iter().map(|r| r.density[k]).collect::<Vec<_>>());
        let c = mean_se(&ok.iter().map(|r| r.c2[k]).collect::<Vec<_>>());
        times.push(TimeStat { t: cfg.t * k as f64 / 2.0, density: d.0, density_se: d.1, c2: c.0, c2_se: c.1 });
        stats.push((d, c));
    }
    let mut max_z = 0.0f64;
    for (i, (d, c)) in stats.iter().enumerate() {
        max_z = max_z.max(z_score(*d, (density_exact, 0.0))).max(z_score(*c, (c2_exact, 0.0)));
        for (d2, c22) in &stats[i + 1..] {
            // the three times are positively correlated, so the unpaired score is conservative
            max_z = max_z.max(z_score(*d, *d2)).max(z_score(*c, *c22));
        }
    }
    let n = ok.len().max(1) as f64;
    let divergence = cfg.sizes.iter().enumerate().map(|(k, &s)| (s, ok.iter().filter(|r| r.diverged[k]).count() as f64 / n)).collect();
    Ok(KpzResult { density_exact, c2_exact, times, divergence, replicates: ok.len(), excluded: reps.len() - ok.len(), max_z })
}

// ---- AJ domination -------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AjRow {
    pub run: usize,
    pub dominated: bool,
    pub violations: u64,
    /// Violations with matching leading signs just before the event.
    pub aligned_violations: u64,
    pub checks: u64,
    pub a1_initial: Option<i64>,
    pub a1_final: Option<i64>,
}

/// Coupled slice / AJ runs on a height-4 KPZ window `width` columns wide.
pub fn aj_runs(q: f64, u: f64, s: f64, width: usize, t: f64, runs: usize, seed: u64) -> Result<Vec<AjRow>> {
    if width < 2 {
        anyhow::bail!("width must be at least 2");
    }
    let cfg = CouplingConfig { row: 1, origin: width - 1, r_tilde: width as i64 - 1, q, u, t_end: t, supplementary: true };
    (0..runs)
        .into_par_iter()
        .map(|i| -> Result<AjRow> {
            let sd = replicate_seed(seed, i as u64);
            let g = sample_kpz(q, s, u, width, 4, 32, sd)?;
            let mut rng = ChaCha8Rng::seed_from_u64(sd);
            rng.set_stream(u64::MAX);
            let o = coupled_run(&g, &cfg, &mut rng)?;
            let (a0, a1) = o.a1();
            Ok(AjRow { run: i, dominated: o.dominated, violations: o.violations, aligned_violations: o.aligned_violations, checks: o.checks, a1_initial: a0, a1_final: a1 })
        })
        .collect()
}

// ---- hydrodynamics -------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BurgersComparison {
    pub n: usize,
    pub bin: usize,
    pub replicates: usize,
    pub sup: f64,
    pub bins_compared: usize,
    pub bins_excluded: usize,
    /// Bin centre `(x, y)` in rescaled units, MC and PDE values at the worst bin.
    pub worst: (f64, f64, f64, f64),
}

/// Binned Monte Carlo density of step-∅ quadrant samples on `[0, n)²` against
/// the Burgers solution on the unit square. Bins within `guard` (in rescaled
/// units of `x / y`) of the two fan edges, or below `y = y_min`, are skipped.
pub fn burgers_vs_mc(q: f64, u: f64, n: usize, bin: usize, replicates: usize, guard: f64, y_min: f64, seed: u64) -> Result<BurgersComparison> {
    let nb = n / bin;
    let b = BoundarySpec::step(SubsetZ::empty());
    let sums: Vec<Vec<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let g = sample_quadrant(q, u, n, n, &b, replicate_seed(seed, i))?;
            let mut acc = vec![0.0; nb * nb];
            for y in 0..nb * bin {
                for x in 0..nb * bin {
                    acc[(y / bin) * nb + x / bin] += g.v_in(x, y) as f64;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let norm = (replicates * bin * bin) as f64;
    let scale = n as f64;
    // fine solver mesh: 4 cells per lattice column
    let cells = 4 * n;
    let dx = 1.0 / cells as f64;
    let ys: Vec<f64> = (0..nb).map(|j| ((j * bin) as f64 + 0.5 * bin as f64) / scale).collect();
    let sol = burgers_quadrant(u, cells, dx, &ys)?;
    let mut sup = 0.0f64;
    let mut worst = (0.0, 0.0, 0.0, 0.0);
    let (mut used, mut skipped) = (0, 0);
    for j in 0..nb {
        let y = ys[j];
        for i in 0..nb {
            let (xa, xb) = ((i * bin) as f64 / scale, ((i + 1) * bin) as f64 / scale);
            let near_edge = [u, 1.0 / u].iter().any(|&e| xa / y <= e + guard && xb / y >= e - guard);
            if y < y_min || near_edge {
                skipped += 1;
                continue;
            }
            let mc = sums.iter().map(|s| s[j * nb + i]).sum::<f64>() / norm;
            let lo = (xa / dx).round() as usize;
            let hi = ((xb / dx).round() as usize).min(cells);
            let pde = sol.row(0).len();
            let row = &sol.values[j * pde..(j + 1) * pde];
            let th = row[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
            if (mc - th).abs() > sup {
                sup = (mc - th).abs();
                worst = (0.5 * (xa + xb), y, mc, th);
            }
            used += 1;
        }
    }
    Ok(BurgersComparison { n, bin, replicates, sup, bins_compared: used, bins_excluded: skipped, worst })
}

#[derive(Debug, Clone)]
pub struct TwoPlusOne {
    pub sup: f64,
    pub clamped: usize,
    pub initial: DensityField,
    pub evolved_heights: DensityField,
    pub target: DensityField,
}

/// Evolve the height of the Burgers shape at `u` to `τ` and compare its slope
/// with the Burgers shape at `u(τ)`.
pub fn two_plus_one(u: f64, eta: f64, tau: f64, n: usize, x_max: f64, steps: usize) -> Result<TwoPlusOne> {
    let dx = x_max / n as f64;
    let ys: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64).collect();
    let initial = burgers_quadrant(u, n, dx, &ys)?;
    let h0 = heights_from_density(&initial);
    let (h1, clamped) = evolve_2plus1(&h0, u, eta, 0.0, tau / steps as f64, steps)?;
    let target = burgers_quadrant(u_of_tau(u, eta, tau), n, dx, &ys)?;
    let evolved = density_from_heights(&h1);
    let sup = evolved.values.iter().zip(&target.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(TwoPlusOne { sup, clamped, initial, evolved_heights: h1, target })
}

/// `(max |J - ∂_u φ|, finite-difference deviation)` on an interior grid.
pub fn hydro_identities() -> (f64, f64) {
    let mut pointwise = 0.0f64;
    for i in 1..100 {
        for j in 1..100 {
            let (s, u) = (i as f64 / 100.0, j as f64 / 100.0);
            pointwise = pointwise.max((current_formula(s, u) - phi_du(s, u)).abs());
        }
    }
    let rho: Vec<f64> = (1..50).map(|i| i as f64 / 50.0).collect();
    let us: Vec<f64> = (6..20).map(|i| i as f64 / 20.0).collect();
    (pointwise, hydro_consistency(&rho, &us, 1e-4))
}

/// Census of the central window, for `sample` summaries.
pub fn census_fractions(g: &EdgeGrid) -> Result<[f64; 6]> {
    let c = vertex_census(g)?;
    let a = c.area().max(1) as f64;
    Ok(VertexKind::ALL.map(|k| c.count(k) as f64 / a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|i| replicate_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(replicate_seed(7, 0), replicate_seed(8, 0));
    }

    #[test]
    fn z_score_edge_cases() {
        assert_eq!(z_score((0.5, 0.0), (0.5, 0.0)), 0.0);
        assert!(z_score((0.5, 0.0), (0.6, 0.0)).is_infinite());
        assert!((z_score((1.0, 0.3), (0.0, 0.4)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_kpz_run() {
        let cfg = KpzConfig { q: 0.25, u: 0.5, s: 0.5, sizes: vec![16, 32], reference: 64, window: 8, t: 0.5, replicates: 4, seed: 1 };
        let r = kpz_preservation(&cfg).unwrap();
        assert_eq!(r.times.len(), 3);
        assert_eq!(r.divergence.len(), 2);
        assert!(r.times[0].density > 0.0 && r.times[0].density < 1.0);
    }

    #[test]
    fn aj_rows() {
        let rows = aj_runs(0.25, 0.5, 0.5, 32, 0.5, 3, 5).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.aligned_violations == 0 && r.checks > 0));
    }
}

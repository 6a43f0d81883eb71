//! Current, one-dimensional Burgers solver, the 2+1 height equation and census counts.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{ActiveBox, Clock, Engine, FaceTracker, RateSet, RunStatus};
use crate::error::{Error, Result};
use crate::jump::ExitPolicy;
use crate::lattice::{delta_params, phi, EdgeGrid, VertexKind};

/// Stationary height drift per unit time in the KPZ state of slope `s`.
pub fn current_formula(s: f64, u: f64) -> f64 {
    let d = s + u - s * u;
    -s * (1.0 - s) / (d * d)
}

/// `∂_u φ(s|u)` written through `φ` itself.
pub fn phi_du(s: f64, u: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let t = phi(s, u);
    -(1.0 - s) * t * t / s
}

/// Truncated double sum over `n` crossed vertical paths and total string length `K`.
///
/// Vectors `k` with `|k| = K` and `n + 1` parts are counted by `C(K + n, n)`.
pub fn current_series(s: f64, u: f64, q: f64, n_max: usize, k_max: usize) -> Result<f64> {
    let (d1, d2) = delta_params(q, u)?;
    let rates = RateSet::stochastic(q, u)?;
    let (a, b, c) = (rates.a, rates.b, rates.c);
    let t = phi(s, u);
    let c0 = -s * (1.0 - t) * (1.0 - t) * (1.0 - d1) * a - (1.0 - s) * t * t * d2 * (1.0 - d2) * b
        + s * (1.0 - t) * (1.0 - t) * d1 * (1.0 - d1) * b
        + (1.0 - s) * t * t * (1.0 - d2) * a
        + s * t * (1.0 - t) * d1 * c;
    let c1 = -(s * (1.0 - t) * (1.0 - t) * (1.0 - d1) + (1.0 - s) * t * t * d2 * (1.0 - d2) + s * t * (1.0 - t) * (1.0 - d1) * (1.0 - d2)) * c;
    let (x1, x2) = (s * d1, (1.0 - s) * d2);
    let mut total = 0.0;
    let mut pn = 1.0; // x1^n
    for n in 0..=n_max {
        // binom(K + n, n) x2^K, built by recurrence in K
        let mut term = pn;
        for k in 0..=k_max {
            total += term * (c0 + k as f64 * c1);
            term *= x2 * (k + n + 1) as f64 / (k + 1) as f64;
        }
        pn *= x1;
    }
    Ok(total)
}

/// Max deviation of `∂_ρ J(ρ, φ(ρ|u))` from `∂_ρ ∂_u φ(ρ|u)` by central differences with step `h`.
pub fn hydro_consistency(rho: &[f64], us: &[f64], h: f64) -> f64 {
    let mut worst = 0.0f64;
    for &r in rho {
        for &u in us {
            let dj = (current_formula(r + h, u) - current_formula(r - h, u)) / (2.0 * h);
            let mixed = (phi(r + h, u + h) - phi(r + h, u - h) - phi(r - h, u + h) + phi(r - h, u - h)) / (4.0 * h * h);
            worst = worst.max(libm::fabs(dj - mixed));
        }
    }
    worst
}

/// Values on a regular mesh, row-major with `nx` entries per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub dx: f64,
    pub y0: f64,
    pub dy: f64,
    pub values: Vec<f64>,
    pub u: f64,
}

impl DensityField {
    pub fn new_1d(values: Vec<f64>, x0: f64, dx: f64, u: f64) -> Self {
        DensityField { nx: values.len(), ny: 1, x0, dx, y0: 0.0, dy: 0.0, values, u }
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.nx..(j + 1) * self.nx]
    }
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }
    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.dy
    }
    /// Sum of values times `dx` for one row.
    pub fn mass(&self, j: usize) -> f64 {
        self.row(j).iter().sum::<f64>() * self.dx
    }
}

/// `∂φ/∂ρ`, largest at `ρ = 0` where it equals `1/u`.
pub fn phi_drho(rho: f64, u: f64) -> f64 {
    let d = rho + u - rho * u;
    u / (d * d)
}

/// One upwind (Godunov for increasing flux) step of `∂_y ρ + ∂_x φ(ρ|u) = 0`
/// with inflow value `left` in the ghost cell.
pub fn burgers_step(rho: &DensityField, u: f64, dx: f64, dy: f64, left: f64) -> Result<DensityField> {
    if dy * (1.0 / u) / dx > 0.5 {
        return Err(Error::Step("CFL condition violated"));
    }
    let lam = dy / dx;
    let mut out = rho.clone();
    let mut prev = phi(left, u);
    for i in 0..rho.nx {
        let f = phi(rho.values[i], u);
        out.values[i] = rho.values[i] - lam * (f - prev);
        prev = f;
    }
    out.dx = dx;
    Ok(out)
}

/// Rarefaction fan of the step-∅ quadrant: density at `x/y = r`.
pub fn step_limit_shape(u: f64, r: f64) -> f64 {
    if r <= u {
        return 1.0;
    }
    ((libm::sqrt(u / r) - u) / (1.0 - u)).clamp(0.0, 1.0)
}

/// Solve the quadrant problem (initially empty, inflow 1) on cells of width `dx`
/// over `[0, nx dx]`, recording the profile at each requested `y` (ascending).
pub fn burgers_quadrant(u: f64, nx: usize, dx: f64, ys: &[f64]) -> Result<DensityField> {
    if ys.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::ParameterDomain("y levels must be ascending"));
    }
    let dy_max = 0.45 * dx * u;
    let mut cur = DensityField::new_1d(vec![0.0; nx], 0.5 * dx, dx, u);
    let mut y = 0.0;
    let mut values = Vec::with_capacity(nx * ys.len());
    for &target in ys {
        while y < target - 1e-15 {
            let dy = dy_max.min(target - y);
            cur = burgers_step(&cur, u, dx, dy, 1.0)?;
            y += dy;
        }
        values.extend_from_slice(&cur.values);
    }
    let dy = if ys.len() > 1 { ys[1] - ys[0] } else { 0.0 };
    Ok(DensityField { nx, ny: ys.len(), x0: 0.5 * dx, dx, y0: ys.first().copied().unwrap_or(0.0), dy, values, u })
}

/// Minimiser of `J(·, u)` on `[0, 1]`.
fn current_argmin(u: f64) -> f64 {
    u / (1.0 + u)
}

/// Godunov numerical flux for `J(·, u)`.
fn godunov_j(a: f64, b: f64, u: f64) -> f64 {
    if a <= b {
        current_formula(current_argmin(u).clamp(a, b), u)
    } else {
        current_formula(a, u).max(current_formula(b, u))
    }
}

/// Heights on nodes `x_i = x0 + i dx` and rows `y_j`; evolves
/// `∂_τ H = e^{-τ} η y J(-∂_x H, u(τ))` from `tau0` by `steps` explicit steps.
///
/// The left column is held fixed (the flux through a packed boundary vanishes)
/// and the right end is extrapolated with zero slope change. Returns the field
/// and the number of slopes clamped into `[0, 1]`.
pub fn evolve_2plus1(h: &DensityField, u: f64, eta: f64, tau0: f64, dtau: f64, steps: usize) -> Result<(DensityField, usize)> {
    if !(u > 0.0 && u + eta < 1.0 && eta >= 0.0) {
        return Err(Error::ParameterDomain("need 0 < u and u + eta < 1"));
    }
    let (nx, ny) = (h.nx, h.ny);
    if nx < 2 {
        return Err(Error::Geometry("need at least two nodes"));
    }
    let ymax = (0..ny).map(|j| h.y(j)).fold(0.0, f64::max);
    let umin = u;
    if dtau * eta * ymax / (umin * umin) / h.dx > 0.5 {
        return Err(Error::Step("CFL condition violated"));
    }
    let mut out = h.clone();
    let mut clamped = 0usize;
    let mut rho = vec![0.0; nx - 1];
    let mut flux = vec![0.0; nx];
    for step in 0..steps {
        let tau = tau0 + step as f64 * dtau;
        let ut = crate::dynamics::u_of_tau(u, eta, tau);
        let scale = libm::exp(-tau) * eta;
        for j in 0..ny {
            let c = scale * h.y(j);
            let row = &mut out.values[j * nx..(j + 1) * nx];
            for i in 0..nx - 1 {
                let r = (row[i] - row[i + 1]) / h.dx;
                if !(0.0..=1.0).contains(&r) {
                    clamped += 1;
                }
                rho[i] = r.clamp(0.0, 1.0);
            }
            flux[0] = 0.0;
            for i in 1..nx - 1 {
                flux[i] = c * godunov_j(rho[i - 1], rho[i], ut);
            }
            flux[nx - 1] = c * godunov_j(rho[nx - 2], rho[nx - 2], ut);
            for i in 0..nx {
                row[i] += dtau * flux[i];
            }
        }
    }
    out.u = crate::dynamics::u_of_tau(u, eta, tau0 + steps as f64 * dtau);
    Ok((out, clamped))
}

/// Heights `H(x, y) = y - ∫_0^x ρ` from cell densities on `[0, nx dx]`;
/// one node more than cells per row.
pub fn heights_from_density(rho: &DensityField) -> DensityField {
    let nx = rho.nx + 1;
    let mut values = Vec::with_capacity(nx * rho.ny);
    for j in 0..rho.ny {
        let mut hh = rho.y(j);
        values.push(hh);
        for i in 0..rho.nx {
            hh -= rho.get(i, j) * rho.dx;
            values.push(hh);
        }
    }
    DensityField { nx, ny: rho.ny, x0: 0.0, dx: rho.dx, y0: rho.y0, dy: rho.dy, values, u: rho.u }
}

/// Cell densities `-∂_x H` from node heights.
pub fn density_from_heights(h: &DensityField) -> DensityField {
    let nx = h.nx - 1;
    let mut values = Vec::with_capacity(nx * h.ny);
    for j in 0..h.ny {
        for i in 0..nx {
            values.push((h.get(i, j) - h.get(i + 1, j)) / h.dx);
        }
    }
    DensityField { nx, ny: h.ny, x0: h.x0 + 0.5 * h.dx, dx: h.dx, y0: h.y0, dy: h.dy, values, u: h.u }
}

/// One replicate of the current measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentSetup {
    pub q: f64,
    pub u: f64,
    pub s: f64,
    pub rates: RateSet,
    /// Active region is `r x r`; the grid is `r + margin` wide.
    pub r: usize,
    pub margin: usize,
    /// Side of the tracked face box, centred in the active region.
    pub faces: usize,
    pub t: f64,
}

impl CurrentSetup {
    /// Stochastic rates and the default right margin `⌈8 (ln r)²⌉`.
    pub fn stochastic(q: f64, u: f64, s: f64, r: usize, t: f64) -> Result<Self> {
        let lr = libm::log(r as f64);
        Ok(CurrentSetup { q, u, s, rates: RateSet::stochastic(q, u)?, r, margin: libm::ceil(8.0 * lr * lr) as usize, faces: r / 4, t })
    }
}

/// Mean height change per unit time over the tracked faces, or `None` when a
/// jump ran off the right margin.
pub fn current_replicate(setup: &CurrentSetup, seed: u64) -> Result<Option<f64>> {
    use rand::SeedableRng;
    if setup.r < 4 || setup.faces == 0 || setup.faces + 2 > setup.r || !(setup.t > 0.0) {
        return Err(Error::ParameterDomain("need r >= 4, 0 < faces < r - 1 and t > 0"));
    }
    let g = crate::sampler::sample_kpz(setup.q, setup.s, setup.u, setup.r + setup.margin, setup.r, 0, seed)?;
    let active = ActiveBox { x0: 0, x1: setup.r - 1, y0: 0, y1: setup.r - 2 };
    let mut e = Engine::new(g, Clock::Homogeneous(setup.rates), active, ExitPolicy::Error)?;
    let f0 = (setup.r - setup.faces) / 2;
    e.tracker = Some(FaceTracker::new(f0, f0, setup.faces, setup.faces));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    if e.run_until(setup.t, &mut rng)? == RunStatus::Overflow {
        return Ok(None);
    }
    let tr = e.tracker.as_ref().ok_or(Error::Consistency("tracker missing"))?;
    let sum: i64 = tr.dh.iter().sum();
    Ok(Some(sum as f64 / tr.dh.len() as f64 / setup.t))
}

/// Mean and standard error over independent replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Replicates dropped after an overflow.
    pub excluded: usize,
}

impl CurrentEstimate {
    pub fn from_replicates(values: &[Option<f64>]) -> CurrentEstimate {
        let ok: Vec<f64> = values.iter().flatten().copied().collect();
        let n = ok.len();
        let mean = if n > 0 { ok.iter().sum::<f64>() / n as f64 } else { f64::NAN };
        let var = if n > 1 { ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        CurrentEstimate { mean, stderr: libm::sqrt(var / n.max(1) as f64), samples: n, excluded: values.len() - n }
    }
}

/// Vertex counts and vertically adjacent pair counts `N(lower, upper)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Census {
    pub kinds: [usize; 6],
    pub pairs: [[usize; 6]; 6],
}

impl Census {
    pub fn area(&self) -> usize {
        self.kinds.iter().sum()
    }
    pub fn count(&self, k: VertexKind) -> usize {
        self.kinds[k.index()]
    }
    pub fn pair(&self, lower: VertexKind, upper: VertexKind) -> usize {
        self.pairs[lower.index()][upper.index()]
    }
}

/// Census of a valid grid. On the torus pairs wrap vertically.
pub fn vertex_census(grid: &EdgeGrid) -> Result<Census> {
    let (w, h) = (grid.width(), grid.height());
    let mut c = Census::default();
    for y in 0..h {
        for x in 0..w {
            let k = grid.kind(x, y).ok_or(Error::Validation(1))?;
            c.kinds[k.index()] += 1;
            if y + 1 < h || grid.is_torus() {
                let up = grid.kind(x, (y + 1) % h).ok_or(Error::Validation(1))?;
                c.pairs[k.index()][up.index()] += 1;
            }
        }
    }
    Ok(c)
}

/// Frequency of `C2` vertices in the KPZ state of slope `s`: the vertex sees an
/// empty vertical input, an occupied horizontal input, and turns up.
pub fn kpz_c2_frequency(q: f64, u: f64, s: f64) -> Result<f64> {
    let (_, d2) = delta_params(q, u)?;
    Ok((1.0 - s) * phi(s, u) * (1.0 - d2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Geometry;

    #[test]
    fn current_endpoints_and_value() {
        assert_eq!(current_formula(0.0, 0.3), 0.0);
        assert_eq!(current_formula(1.0, 0.3), 0.0);
        assert!((current_formula(0.5, 0.2) + 25.0 / 36.0).abs() < 1e-15);
        assert!((current_formula(0.5, 0.5) + 4.0 / 9.0).abs() < 1e-15);
        for i in 1..100 {
            assert!(current_formula(i as f64 / 100.0, 0.37) < 0.0);
        }
    }

    #[test]
    fn series_matches_closed_form() {
        let v = current_series(0.5, 0.2, 0.5, 60, 60).unwrap();
        assert!((v + 25.0 / 36.0).abs() < 1e-10, "{v}");
        assert!(current_series(1e-9, 0.4, 0.3, 40, 40).unwrap().abs() < 1e-7);
        // errors shrink geometrically with the truncation
        let exact = current_formula(0.4, 0.6);
        let e: Vec<f64> = [10, 20, 40].iter().map(|&n| (current_series(0.4, 0.6, 0.3, n, n).unwrap() - exact).abs()).collect();
        assert!(e[1] < e[0] && e[2] < e[1] && e[2] < 1e-8, "{e:?}");
    }

    #[test]
    fn current_is_u_derivative_of_phi() {
        for i in 1..100 {
            for j in 1..100 {
                let (s, u) = (i as f64 / 100.0, j as f64 / 100.0);
                assert!((current_formula(s, u) - phi_du(s, u)).abs() < 1e-12);
            }
        }
        let rho: Vec<f64> = (1..50).map(|i| i as f64 / 50.0).collect();
        // truncation error grows like u^-5 near u = 0
        let us: Vec<f64> = (6..20).map(|i| i as f64 / 20.0).collect();
        assert!(hydro_consistency(&rho, &us, 1e-4) < 1e-6);
    }

    #[test]
    fn burgers_constant_and_conservation() {
        let f = DensityField::new_1d(vec![0.3; 50], 0.0, 0.1, 0.4);
        let g = burgers_step(&f, 0.4, 0.1, 0.01, 0.3).unwrap();
        assert!(g.values.iter().all(|v| (v - 0.3).abs() < 1e-15));
        let vals: Vec<f64> = (0..50).map(|i| 0.5 + 0.4 * libm::sin(i as f64 * 0.3)).collect();
        let f = DensityField::new_1d(vals, 0.0, 0.1, 0.4);
        let g = burgers_step(&f, 0.4, 0.1, 0.01, 0.7).unwrap();
        let boundary = 0.01 * (phi(0.7, 0.4) - phi(f.values[49], 0.4));
        assert!((g.mass(0) - f.mass(0) - boundary).abs() < 1e-12);
        assert!(burgers_step(&f, 0.4, 0.1, 0.1, 0.7).is_err());
    }

    #[test]
    fn rarefaction_fan_matches_characteristics() {
        let u = 0.4;
        let dx = 0.005;
        let sol = burgers_quadrant(u, 1200, dx, &[1.0]).unwrap();
        let mut worst = 0.0f64;
        for i in 0..sol.nx {
            let r = sol.x(i);
            if (r - u).abs() < 0.15 || (r - 1.0 / u).abs() < 0.3 {
                continue;
            }
            worst = worst.max((sol.get(i, 0) - step_limit_shape(u, r)).abs());
        }
        assert!(worst < 0.02, "{worst}");
    }

    #[test]
    fn two_plus_one_flat_and_frozen() {
        // affine heights with slope s: rate equals e^{-τ} η y J(s)
        let (u, eta, s) = (0.3, 0.2, 0.4);
        let nx = 20;
        let ys = [0.5, 1.0];
        let mut vals = Vec::new();
        for y in ys {
            for i in 0..nx {
                vals.push(y - s * i as f64 * 0.1);
            }
        }
        let h = DensityField { nx, ny: 2, x0: 0.0, dx: 0.1, y0: 0.5, dy: 0.5, values: vals, u };
        let (g, clamped) = evolve_2plus1(&h, u, eta, 0.0, 1e-4, 1).unwrap();
        assert_eq!(clamped, 0);
        for j in 0..2 {
            for i in 1..nx {
                let rate = (g.get(i, j) - h.get(i, j)) / 1e-4;
                assert!((rate - eta * h.y(j) * current_formula(s, u)).abs() < 1e-9);
            }
        }
        let (g0, _) = evolve_2plus1(&h, u, 0.0, 0.0, 1e-3, 10).unwrap();
        assert_eq!(g0.values, h.values);
    }

    #[test]
    fn two_plus_one_maps_limit_shapes() {
        let (u, eta) = (0.3, 0.3);
        let n = 200;
        let dx = 4.0 / n as f64;
        let ys: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64).collect();
        let h0 = heights_from_density(&burgers_quadrant(u, n, dx, &ys).unwrap());
        let steps = 400;
        let (h1, _) = evolve_2plus1(&h0, u, eta, 0.0, 1.0 / steps as f64, steps).unwrap();
        let fresh = burgers_quadrant(crate::dynamics::u_of_tau(u, eta, 1.0), n, dx, &ys).unwrap();
        let evolved = density_from_heights(&h1);
        let worst = evolved.values.iter().zip(&fresh.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn frozen_current_is_zero() {
        let mut st = CurrentSetup::stochastic(0.25, 0.5, 0.5, 32, 1.0).unwrap();
        st.rates = RateSet { a: 0.0, b: 0.0, c: 0.0 };
        let v: Vec<Option<f64>> = (0..3).map(|i| current_replicate(&st, i).unwrap()).collect();
        let e = CurrentEstimate::from_replicates(&v);
        assert_eq!((e.mean, e.stderr, e.samples), (0.0, 0.0, 3));
    }

    #[test]
    fn small_current_has_right_sign() {
        let st = CurrentSetup::stochastic(0.25, 0.5, 0.5, 64, 2.0).unwrap();
        let v: Vec<Option<f64>> = (0..8).map(|i| current_replicate(&st, 40 + i).unwrap()).collect();
        let e = CurrentEstimate::from_replicates(&v);
        assert!(e.mean < 0.0);
        assert!((e.mean + 4.0 / 9.0).abs() < 5.0 * e.stderr + 0.05, "{e:?}");
    }

    #[test]
    fn census_empty_and_packed() {
        let g = EdgeGrid::empty(Geometry::Torus { m: 4, n: 3 }).unwrap();
        let c = vertex_census(&g).unwrap();
        assert_eq!(c.pair(VertexKind::A1, VertexKind::A1), 12);
        let g = EdgeGrid::packed(Geometry::Torus { m: 4, n: 3 }).unwrap();
        assert_eq!(vertex_census(&g).unwrap().pair(VertexKind::A2, VertexKind::A2), 12);
        let g = EdgeGrid::empty(Geometry::Rect { w: 4, h: 3 }).unwrap();
        let c = vertex_census(&g).unwrap();
        assert_eq!((c.area(), c.pair(VertexKind::A1, VertexKind::A1)), (12, 8));
    }
}

//! Row-by-row samplers for rectangles, quadrant windows and the KPZ state.
//!
//! Randomness is counter based: row `y` draws from ChaCha8 stream `y + 2`, one
//! `u64` per vertex in column order, so a vertex's draw depends only on
//! `(seed, x, y)`. Streams 0 and 1 feed Bernoulli boundaries.

use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jump::{all_seeds, apply_jump, ExitPolicy, SeedTable, SubsetZ};
use crate::lattice::{deltas, phi, Boundary, EdgeGrid, Geometry, VertexKind};

/// Bottom in-edges.
#[derive(Debug, Clone, PartialEq)]
pub enum Bottom {
    Subset(SubsetZ),
    Bernoulli(f64),
}

/// Left in-edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Left {
    Packed,
    Empty,
    Bernoulli(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub bottom: Bottom,
    pub left: Left,
}

impl BoundarySpec {
    /// Step boundary: every left edge occupied, bottom given by `lambda`.
    pub fn step(lambda: SubsetZ) -> Self {
        BoundarySpec { bottom: Bottom::Subset(lambda), left: Left::Packed }
    }
    pub fn empty(lambda: SubsetZ) -> Self {
        BoundarySpec { bottom: Bottom::Subset(lambda), left: Left::Empty }
    }

    fn tag(&self) -> Boundary {
        match (&self.bottom, self.left) {
            (Bottom::Subset(l), Left::Packed) if l.is_empty() => Boundary::StepEmpty,
            (Bottom::Subset(l), Left::Empty) if l.is_empty() => Boundary::Empty,
            (Bottom::Bernoulli(b), Left::Bernoulli(l)) => Boundary::Bernoulli { bottom: *b, left: l },
            _ => Boundary::Custom,
        }
    }
}

#[inline]
fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Sample the stochastic six vertex model on a `w x h` rectangle, row `y` using
/// spectral parameter `us[y]`, with free exits on the right and top.
pub fn sample_rect(q: f64, us: &[f64], w: usize, h: usize, boundary: &BoundarySpec, seed: u64) -> Result<EdgeGrid> {
    if us.len() != h {
        return Err(Error::ParameterDomain("need one spectral parameter per row"));
    }
    if !(0.0..1.0).contains(&q) {
        return Err(Error::ParameterDomain("q must lie in [0,1)"));
    }
    if us.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
        return Err(Error::ParameterDomain("u must lie in (0,1)"));
    }
    let mut g = EdgeGrid::empty(Geometry::Rect { w, h })?;
    g.boundary = boundary.tag();
    match &boundary.bottom {
        Bottom::Subset(l) => {
            if l.max().is_some_and(|m| m >= w) {
                return Err(Error::ParameterDomain("bottom subset exceeds window width"));
            }
            l.parts().iter().for_each(|&p| g.set_v_in(p, 0, 1));
        }
        Bottom::Bernoulli(s) => {
            check_density(*s)?;
            let mut r = stream(seed, 0);
            (0..w).for_each(|x| g.set_v_in(x, 0, (unit(r.next_u64()) < *s) as u8));
        }
    }
    match boundary.left {
        Left::Packed => (0..h).for_each(|y| g.set_h_in(0, y, 1)),
        Left::Empty => {}
        Left::Bernoulli(t) => {
            check_density(t)?;
            let mut r = stream(seed, 1);
            (0..h).for_each(|y| g.set_h_in(0, y, (unit(r.next_u64()) < t) as u8));
        }
    }
    for (y, &u) in us.iter().enumerate() {
        let (d1, d2) = deltas(&q, &u);
        let mut r = stream(seed, y as u64 + 2);
        for x in 0..w {
            let z = unit(r.next_u64());
            let (vi, hi) = (g.v_in(x, y), g.h_in(x, y));
            let (vo, ho) = match (vi, hi) {
                (1, 0) => if z < d1 { (1, 0) } else { (0, 1) },
                (0, 1) => if z < d2 { (0, 1) } else { (1, 0) },
                other => other,
            };
            g.set_v_out(x, y, vo);
            g.set_h_out(x, y, ho);
        }
    }
    Ok(g)
}

fn check_density(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::ParameterDomain("Bernoulli density must lie in [0,1]"))
    }
}

/// Homogeneous quadrant window: [`sample_rect`] tagged as a quadrant window.
pub fn sample_quadrant(q: f64, u: f64, w: usize, h: usize, boundary: &BoundarySpec, seed: u64) -> Result<EdgeGrid> {
    let us: Vec<f64> = (0..h).map(|_| u).collect();
    let mut g = sample_rect(q, &us, w, h, boundary, seed)?;
    g.geometry = Geometry::QuadrantWindow { w, h };
    Ok(g)
}

/// KPZ state of slope `s`: Bernoulli(s) bottom edges and Bernoulli(φ(s)) left
/// edges on a `(w + margin) x (h + margin)` rectangle, then the margin is cut
/// from the left and bottom.
pub fn sample_kpz(q: f64, s: f64, u: f64, w: usize, h: usize, margin: usize, seed: u64) -> Result<EdgeGrid> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::ParameterDomain("s must lie in (0,1)"));
    }
    let t = phi(s, u);
    let (fw, fh) = (w + margin, h + margin);
    let us: Vec<f64> = (0..fh).map(|_| u).collect();
    let b = BoundarySpec { bottom: Bottom::Bernoulli(s), left: Left::Bernoulli(t) };
    let full = sample_rect(q, &us, fw, fh, &b, seed)?;
    let mut g = full.window(margin, margin, w, h)?;
    g.boundary = Boundary::Bernoulli { bottom: s, left: t };
    Ok(g)
}

/// Random valid torus configuration: straight loops in randomly chosen rows and
/// columns, then `jumps` uniformly chosen seed jumps.
pub fn random_torus(m: usize, n: usize, jumps: usize, seed: u64) -> Result<EdgeGrid> {
    use rand::Rng;
    let table = SeedTable::derive()?;
    let mut rng = stream(seed, 0);
    let mut g = EdgeGrid::empty(Geometry::Torus { m, n })?;
    for y in 0..n {
        if rng.random::<bool>() {
            (0..m).for_each(|x| g.set_h_in(x, y, 1));
        }
    }
    for x in 0..m {
        if rng.random::<bool>() {
            (0..n).for_each(|y| g.set_v_in(x, y, 1));
        }
    }
    for _ in 0..jumps {
        let s = all_seeds(&g, &table);
        if s.is_empty() {
            break;
        }
        let pick = s[rng.random_range(0..s.len())];
        apply_jump(&mut g, pick, ExitPolicy::Error)?;
    }
    Ok(g)
}

/// A horizontal run of non-C2 vertices `(x0, y) ..= (x1, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunWitness {
    pub y: usize,
    pub x0: usize,
    pub x1: usize,
}

impl RunWitness {
    pub fn n(&self) -> usize {
        self.x1 - self.x0
    }
}

/// Longest run of consecutive vertices none of which is C2, with more than
/// `a` steps, whose right end lies in the box of radius `r` around `center`.
/// Runs are cut at the left edge of the stored grid.
pub fn detect_e_ra(grid: &EdgeGrid, center: (usize, usize), r: usize, a: usize) -> Option<RunWitness> {
    let (cx, cy) = center;
    let ylo = cy.saturating_sub(r);
    let yhi = (cy + r).min(grid.height() - 1);
    let xlo = cx.saturating_sub(r);
    let xhi = (cx + r).min(grid.width() - 1);
    let mut best: Option<RunWitness> = None;
    for y in ylo..=yhi {
        let mut start = 0usize;
        for x in 0..=xhi {
            if grid.kind(x, y) == Some(VertexKind::C2) {
                start = x + 1;
                continue;
            }
            if x >= xlo && x - start > a && best.is_none_or(|b| x - start > b.n()) {
                best = Some(RunWitness { y, x0: start, x1: x });
            }
        }
    }
    best
}

/// The constant `θ` bounding non-C2 run probabilities for slope `s`.
pub fn run_theta(q: f64, u: f64, s: f64) -> f64 {
    let (d1, d2) = deltas(&q, &u);
    let a = 1.0 - s * (1.0 - s) * (1.0 - d1) * (1.0 - d2);
    let b = 1.0 - (1.0 - s) * (1.0 - d2);
    libm::fmax(a, b)
}

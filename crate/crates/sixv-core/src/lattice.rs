//! Lattice geometries, path configurations, vertex weights and height functions.
//!
//! Edge storage: for a vertex `(x, y)` the horizontal edge entering it from the
//! left is `h_in(x, y)` and the vertical edge entering it from below is
//! `v_in(x, y)`. On bounded grids the right exits are `h_in(w, y)` and the top
//! exits are `v_in(x, h)`; on the torus indices wrap.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The six admissible local configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexKind {
    A1,
    A2,
    B1,
    B2,
    C1,
    C2,
}

impl VertexKind {
    pub const ALL: [VertexKind; 6] = [
        VertexKind::A1,
        VertexKind::A2,
        VertexKind::B1,
        VertexKind::B2,
        VertexKind::C1,
        VertexKind::C2,
    ];

    /// Arrow signature `(vertical-in, horizontal-in; vertical-out, horizontal-out)`.
    pub const fn arrows(self) -> (u8, u8, u8, u8) {
        match self {
            VertexKind::A1 => (0, 0, 0, 0),
            VertexKind::A2 => (1, 1, 1, 1),
            VertexKind::B1 => (1, 0, 1, 0),
            VertexKind::B2 => (0, 1, 0, 1),
            VertexKind::C1 => (1, 0, 0, 1),
            VertexKind::C2 => (0, 1, 1, 0),
        }
    }

    /// Inverse of [`arrows`](Self::arrows); `None` off the ice rule.
    pub const fn from_arrows(vi: u8, hi: u8, vo: u8, ho: u8) -> Option<VertexKind> {
        match (vi, hi, vo, ho) {
            (0, 0, 0, 0) => Some(VertexKind::A1),
            (1, 1, 1, 1) => Some(VertexKind::A2),
            (1, 0, 1, 0) => Some(VertexKind::B1),
            (0, 1, 0, 1) => Some(VertexKind::B2),
            (1, 0, 0, 1) => Some(VertexKind::C1),
            (0, 1, 1, 0) => Some(VertexKind::C2),
            _ => None,
        }
    }

    pub const fn index(self) -> usize {
        self as usize
    }

    /// One-character symbol used by the text dump.
    pub const fn glyph(self) -> char {
        match self {
            VertexKind::A1 => '.',
            VertexKind::A2 => '+',
            VertexKind::B1 => '|',
            VertexKind::B2 => '-',
            VertexKind::C1 => 'L',
            VertexKind::C2 => 'J',
        }
    }
}

/// Boltzmann weights, either stochastic `(q, u)` or six free values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightParams {
    Stochastic { q: f64, u: f64 },
    General { a1: f64, a2: f64, b1: f64, b2: f64, c1: f64, c2: f64 },
}

impl WeightParams {
    /// Checked stochastic constructor: `q ∈ [0,1)`, `u ∈ (0,1)`.
    pub fn stochastic(q: f64, u: f64) -> Result<Self> {
        check_qu(q, u)?;
        Ok(WeightParams::Stochastic { q, u })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightParams::Stochastic { q, u } => check_qu(q, u),
            WeightParams::General { a1, a2, b1, b2, c1, c2 } => {
                if [a1, a2, b1, b2, c1, c2].iter().all(|w| w.is_finite() && *w >= 0.0) {
                    Ok(())
                } else {
                    Err(Error::ParameterDomain("general weights must be finite and nonnegative"))
                }
            }
        }
    }

    /// Weights in kind order A1, A2, B1, B2, C1, C2.
    pub fn weights(&self) -> Result<[f64; 6]> {
        self.validate()?;
        Ok(match *self {
            WeightParams::Stochastic { q, u } => stochastic_weights(q, u),
            WeightParams::General { a1, a2, b1, b2, c1, c2 } => [a1, a2, b1, b2, c1, c2],
        })
    }

    /// Expand to the general form.
    pub fn to_general(&self) -> Result<WeightParams> {
        let [a1, a2, b1, b2, c1, c2] = self.weights()?;
        Ok(WeightParams::General { a1, a2, b1, b2, c1, c2 })
    }
}

fn check_qu(q: f64, u: f64) -> Result<()> {
    if !(0.0..1.0).contains(&q) || q.is_nan() {
        return Err(Error::ParameterDomain("q must lie in [0,1)"));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::ParameterDomain("u must lie in (0,1)"));
    }
    Ok(())
}

/// `(δ1, δ2)` for the stochastic parametrisation.
pub fn delta_params(q: f64, u: f64) -> Result<(f64, f64)> {
    check_qu(q, u)?;
    let d = 1.0 - q * u;
    Ok((q * (1.0 - u) / d, (1.0 - u) / d))
}

/// Generic `(δ1, δ2)`; no domain check.
pub fn deltas<S: Scalar>(q: &S, u: &S) -> (S, S) {
    let one = S::one();
    let d = one.clone() - q.clone() * u.clone();
    let d2 = (one - u.clone()) / d;
    (q.clone() * d2.clone(), d2)
}

/// Stochastic weights without domain checks, kind order.
pub fn stochastic_weights(q: f64, u: f64) -> [f64; 6] {
    stochastic_weights_s(&q, &u)
}

/// Stochastic weights over any scalar.
pub fn stochastic_weights_s<S: Scalar>(q: &S, u: &S) -> [S; 6] {
    let (d1, d2) = deltas(q, u);
    let one = S::one();
    [
        one.clone(),
        one.clone(),
        d1.clone(),
        d2.clone(),
        one.clone() - d1,
        one - d2,
    ]
}

/// Weight of a single kind.
pub fn vertex_weight(kind: VertexKind, params: &WeightParams) -> Result<f64> {
    Ok(params.weights()?[kind.index()])
}

/// Weight of an arrow signature; zero off the ice rule.
pub fn arrow_weight<S: Scalar>(w: &[S; 6], vi: u8, hi: u8, vo: u8, ho: u8) -> S {
    match VertexKind::from_arrows(vi, hi, vo, ho) {
        Some(k) => w[k.index()].clone(),
        None => S::zero(),
    }
}

/// The KPZ slope relation `t = s / (s + u - s u)`.
pub fn phi(s: f64, u: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    s / (s + u - s * u)
}

/// Cross vertex weight: the stochastic weight at spectral parameter `u / v`.
pub fn cross_weight(arrows: (u8, u8, u8, u8), u: f64, v: f64, q: f64) -> Result<f64> {
    if v <= 0.0 || u <= 0.0 || u > v {
        return Err(Error::ParameterDomain("cross weight needs 0 < u <= v"));
    }
    let r = u / v;
    if !(0.0..1.0).contains(&q) {
        return Err(Error::ParameterDomain("q must lie in [0,1)"));
    }
    let w = stochastic_weights(q, r);
    Ok(arrow_weight(&w, arrows.0, arrows.1, arrows.2, arrows.3))
}

/// `preset_five_vertex` result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveVertex {
    pub params: WeightParams,
    pub free_fermion: bool,
}

/// Sets `a2 = 0` and reports whether `b1 b2 = c1 c2`.
pub fn preset_five_vertex(params: &WeightParams) -> Result<FiveVertex> {
    let [a1, _, b1, b2, c1, c2] = params.weights()?;
    let lhs = b1 * b2;
    let rhs = c1 * c2;
    let free_fermion = libm::fabs(lhs - rhs) <= 1e-12 * libm::fmax(1.0, libm::fmax(lhs, rhs));
    Ok(FiveVertex {
        params: WeightParams::General { a1, a2: 0.0, b1, b2, c1, c2 },
        free_fermion,
    })
}

/// Lattice shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// `m` columns by `n` rows, periodic in both directions.
    Torus { m: usize, n: usize },
    /// Finite rectangle with in-edges on the left and bottom.
    Rect { w: usize, h: usize },
    /// Finite window of the quadrant (left and bottom are the quadrant boundary).
    QuadrantWindow { w: usize, h: usize },
}

impl Geometry {
    pub fn width(&self) -> usize {
        match *self {
            Geometry::Torus { m, .. } => m,
            Geometry::Rect { w, .. } | Geometry::QuadrantWindow { w, .. } => w,
        }
    }
    pub fn height(&self) -> usize {
        match *self {
            Geometry::Torus { n, .. } => n,
            Geometry::Rect { h, .. } | Geometry::QuadrantWindow { h, .. } => h,
        }
    }
    pub fn is_torus(&self) -> bool {
        matches!(self, Geometry::Torus { .. })
    }
}

/// How the in-edges on the boundary were populated (metadata for serialisation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Periodic,
    /// Every left in-edge occupied, every bottom in-edge empty.
    StepEmpty,
    /// All boundary in-edges empty.
    Empty,
    /// Independent Bernoulli in-edges: density `bottom` below, `left` on the left.
    Bernoulli { bottom: f64, left: f64 },
    Custom,
}

/// Occupancy bits of every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGrid {
    pub geometry: Geometry,
    pub boundary: Boundary,
    h: Vec<u8>,
    v: Vec<u8>,
    hs: usize,
    vs: usize,
}

/// One ice-rule or sector failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    IceRule { x: usize, y: usize, arrows: (u8, u8, u8, u8) },
    Sector { axis: char, index: usize, count: usize, expected: usize },
}

impl EdgeGrid {
    /// All edges empty.
    pub fn empty(geometry: Geometry) -> Result<Self> {
        let (w, h) = (geometry.width(), geometry.height());
        if w == 0 || h == 0 {
            return Err(Error::Geometry("lattice dimensions must be positive"));
        }
        let (hs, vs) = if geometry.is_torus() { (w, h) } else { (w + 1, h + 1) };
        let boundary = if geometry.is_torus() { Boundary::Periodic } else { Boundary::Empty };
        Ok(EdgeGrid { geometry, boundary, h: vec![0; hs * h], v: vec![0; vs * w], hs, vs })
    }

    /// All edges occupied (every vertex A2).
    pub fn packed(geometry: Geometry) -> Result<Self> {
        let mut g = Self::empty(geometry)?;
        g.h.iter_mut().for_each(|b| *b = 1);
        g.v.iter_mut().for_each(|b| *b = 1);
        g.boundary = if geometry.is_torus() { Boundary::Periodic } else { Boundary::Custom };
        Ok(g)
    }

    pub fn width(&self) -> usize {
        self.geometry.width()
    }
    pub fn height(&self) -> usize {
        self.geometry.height()
    }
    pub fn is_torus(&self) -> bool {
        self.geometry.is_torus()
    }

    #[inline]
    fn hidx(&self, x: usize, y: usize) -> usize {
        if self.is_torus() {
            (y % self.height()) * self.hs + x % self.width()
        } else {
            y * self.hs + x
        }
    }
    #[inline]
    fn vidx(&self, x: usize, y: usize) -> usize {
        if self.is_torus() {
            (x % self.width()) * self.vs + y % self.height()
        } else {
            x * self.vs + y
        }
    }

    /// Horizontal edge entering `(x, y)` from the left. Bounded: `x ∈ 0..=w`.
    #[inline]
    pub fn h_in(&self, x: usize, y: usize) -> u8 {
        self.h[self.hidx(x, y)]
    }
    #[inline]
    pub fn h_out(&self, x: usize, y: usize) -> u8 {
        self.h_in(x + 1, y)
    }
    /// Vertical edge entering `(x, y)` from below. Bounded: `y ∈ 0..=h`.
    #[inline]
    pub fn v_in(&self, x: usize, y: usize) -> u8 {
        self.v[self.vidx(x, y)]
    }
    #[inline]
    pub fn v_out(&self, x: usize, y: usize) -> u8 {
        self.v_in(x, y + 1)
    }
    #[inline]
    pub fn set_h_in(&mut self, x: usize, y: usize, b: u8) {
        let i = self.hidx(x, y);
        self.h[i] = b;
    }
    #[inline]
    pub fn set_v_in(&mut self, x: usize, y: usize, b: u8) {
        let i = self.vidx(x, y);
        self.v[i] = b;
    }
    #[inline]
    pub fn set_h_out(&mut self, x: usize, y: usize, b: u8) {
        self.set_h_in(x + 1, y, b)
    }
    #[inline]
    pub fn set_v_out(&mut self, x: usize, y: usize, b: u8) {
        self.set_v_in(x, y + 1, b)
    }

    /// Checked accessor for external callers.
    pub fn try_h_in(&self, x: usize, y: usize) -> Result<u8> {
        if !self.is_torus() && (x > self.width() || y >= self.height()) {
            return Err(Error::Index { x: x as i64, y: y as i64 });
        }
        Ok(self.h_in(x, y))
    }
    pub fn try_v_in(&self, x: usize, y: usize) -> Result<u8> {
        if !self.is_torus() && (x >= self.width() || y > self.height()) {
            return Err(Error::Index { x: x as i64, y: y as i64 });
        }
        Ok(self.v_in(x, y))
    }

    /// Local arrows `(v_in, h_in, v_out, h_out)` at a vertex.
    #[inline]
    pub fn arrows(&self, x: usize, y: usize) -> (u8, u8, u8, u8) {
        (self.v_in(x, y), self.h_in(x, y), self.v_out(x, y), self.h_out(x, y))
    }

    #[inline]
    pub fn kind(&self, x: usize, y: usize) -> Option<VertexKind> {
        let (a, b, c, d) = self.arrows(x, y);
        VertexKind::from_arrows(a, b, c, d)
    }

    /// Raw horizontal bits, row-major with stride [`h_stride`](Self::h_stride).
    pub fn h_bits(&self) -> &[u8] {
        &self.h
    }
    /// Raw vertical bits, column-major with stride [`v_stride`](Self::v_stride).
    pub fn v_bits(&self) -> &[u8] {
        &self.v
    }
    pub fn h_stride(&self) -> usize {
        self.hs
    }
    pub fn v_stride(&self) -> usize {
        self.vs
    }

    /// Rebuild from raw bit arrays (as produced by `h_bits` / `v_bits`).
    pub fn from_bits(geometry: Geometry, boundary: Boundary, h: Vec<u8>, v: Vec<u8>) -> Result<Self> {
        let mut g = Self::empty(geometry)?;
        if h.len() != g.h.len() || v.len() != g.v.len() {
            return Err(Error::Geometry("bit array length does not match geometry"));
        }
        if h.iter().chain(v.iter()).any(|b| *b > 1) {
            return Err(Error::Geometry("edge bits must be 0 or 1"));
        }
        g.h = h;
        g.v = v;
        g.boundary = boundary;
        Ok(g)
    }

    /// Count of each vertex kind over the whole lattice; `None` if invalid.
    pub fn census(&self) -> Option<[usize; 6]> {
        let mut c = [0usize; 6];
        for y in 0..self.height() {
            for x in 0..self.width() {
                c[self.kind(x, y)?.index()] += 1;
            }
        }
        Some(c)
    }

    /// Product of vertex weights.
    pub fn weight<S: Scalar>(&self, w: &[S; 6]) -> S {
        let mut p = S::one();
        for y in 0..self.height() {
            for x in 0..self.width() {
                let (a, b, c, d) = self.arrows(x, y);
                p = p * arrow_weight(w, a, b, c, d);
            }
        }
        p
    }

    /// Copy of the `w x h` block of vertices with lower-left corner `(x0, y0)`,
    /// including its boundary in- and out-edges, as a rectangle.
    pub fn window(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<EdgeGrid> {
        if !self.is_torus() && (x0 + w > self.width() || y0 + h > self.height()) {
            return Err(Error::Index { x: (x0 + w) as i64, y: (y0 + h) as i64 });
        }
        let mut g = EdgeGrid::empty(Geometry::Rect { w, h })?;
        g.boundary = Boundary::Custom;
        for y in 0..h {
            for x in 0..=w {
                g.set_h_in(x, y, self.h_in(x0 + x, y0 + y));
            }
        }
        for x in 0..w {
            for y in 0..=h {
                g.set_v_in(x, y, self.v_in(x0 + x, y0 + y));
            }
        }
        Ok(g)
    }

    /// Text dump, top row first, one glyph per vertex (`?` for violations).
    pub fn art(&self) -> String {
        let mut s = String::with_capacity((self.width() + 1) * self.height());
        for y in (0..self.height()).rev() {
            for x in 0..self.width() {
                s.push(self.kind(x, y).map_or('?', VertexKind::glyph));
            }
            s.push('\n');
        }
        s
    }
}

/// Ice-rule check at every vertex, plus per-row / per-column counts on the torus.
pub fn validate(grid: &EdgeGrid) -> Vec<Violation> {
    let mut out = Vec::new();
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let a = grid.arrows(x, y);
            if a.0 + a.1 != a.2 + a.3 {
                out.push(Violation::IceRule { x, y, arrows: a });
            }
        }
    }
    if grid.is_torus() && out.is_empty() {
        // Implied by the ice rule on a torus; kept as a cheap guard.
        let expected = (0..grid.width()).map(|x| grid.v_in(x, 0) as usize).sum();
        for y in 1..grid.height() {
            let count = (0..grid.width()).map(|x| grid.v_in(x, y) as usize).sum();
            if count != expected {
                out.push(Violation::Sector { axis: 'y', index: y, count, expected });
            }
        }
        let expected = (0..grid.height()).map(|y| grid.h_in(0, y) as usize).sum();
        for x in 1..grid.width() {
            let count = (0..grid.height()).map(|y| grid.h_in(x, y) as usize).sum();
            if count != expected {
                out.push(Violation::Sector { axis: 'x', index: x, count, expected });
            }
        }
    }
    out
}

/// Integer heights on faces. Face `(fx, fy)` lies west of `v_in(fx, fy)` and
/// north of `h_in(fx, fy - 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeightField {
    pub fw: usize,
    pub fh: usize,
    values: Vec<i64>,
    /// Torus only: height change along one full x-cycle and one full y-cycle.
    pub cycles: Option<(i64, i64)>,
}

impl HeightField {
    #[inline]
    pub fn get(&self, fx: usize, fy: usize) -> i64 {
        self.values[fy * self.fw + fx]
    }
    pub fn values(&self) -> &[i64] {
        &self.values
    }
}

/// Height function with `h(base) = base_value`.
///
/// Bounded grids have `(w+1) x (h+1)` faces; the torus has `m x n` faces on the
/// fundamental domain and also reports the cycle increments `(k1, k2)`.
pub fn height_field(grid: &EdgeGrid, base: (usize, usize), base_value: i64) -> Result<HeightField> {
    let n_bad = validate(grid).len();
    if n_bad > 0 {
        return Err(Error::Validation(n_bad));
    }
    let (fw, fh) = if grid.is_torus() {
        (grid.width(), grid.height())
    } else {
        (grid.width() + 1, grid.height() + 1)
    };
    if base.0 >= fw || base.1 >= fh {
        return Err(Error::Index { x: base.0 as i64, y: base.1 as i64 });
    }
    // Face (0,0) gets 0, then shift.
    let mut values = vec![0i64; fw * fh];
    for fy in 0..fh {
        if fy > 0 {
            values[fy * fw] = values[(fy - 1) * fw] + grid.h_in(0, fy - 1) as i64;
        }
        for fx in 1..fw {
            values[fy * fw + fx] = values[fy * fw + fx - 1] - grid.v_in(fx - 1, fy) as i64;
        }
    }
    let shift = base_value - values[base.1 * fw + base.0];
    values.iter_mut().for_each(|v| *v += shift);
    let cycles = if grid.is_torus() {
        let k1 = -((0..grid.width()).map(|x| grid.v_in(x, 0) as i64).sum::<i64>());
        let k2 = (0..grid.height()).map(|y| grid.h_in(0, y) as i64).sum::<i64>();
        Some((k1, k2))
    } else {
        None
    };
    Ok(HeightField { fw, fh, values, cycles })
}

/// Rebuild edge bits from face differences (inverse of [`height_field`]).
pub fn grid_from_heights(geometry: Geometry, boundary: Boundary, hf: &HeightField) -> Result<EdgeGrid> {
    let mut g = EdgeGrid::empty(geometry)?;
    g.boundary = boundary;
    let (w, h) = (geometry.width(), geometry.height());
    let torus = geometry.is_torus();
    let (k1, k2) = hf.cycles.unwrap_or((0, 0));
    let face = |fx: usize, fy: usize| -> i64 {
        if torus {
            // Lift across the seam using the cycle increments.
            let mut v = hf.get(fx % w, fy % h);
            if fx >= w {
                v += k1;
            }
            if fy >= h {
                v += k2;
            }
            v
        } else {
            hf.get(fx, fy)
        }
    };
    let (vx, vy) = if torus { (w, h) } else { (w, h + 1) };
    for x in 0..vx {
        for y in 0..vy {
            let d = face(x, y) - face(x + 1, y);
            if !(0..=1).contains(&d) {
                return Err(Error::Consistency("height step across vertical edge not in {0,1}"));
            }
            g.set_v_in(x, y, d as u8);
        }
    }
    let (hx, hy) = if torus { (w, h) } else { (w + 1, h) };
    for y in 0..hy {
        for x in 0..hx {
            let d = face(x, y + 1) - face(x, y);
            if !(0..=1).contains(&d) {
                return Err(Error::Consistency("height step across horizontal edge not in {0,1}"));
            }
            g.set_h_in(x, y, d as u8);
        }
    }
    Ok(g)
}

/// Vertical and horizontal edge densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slope {
    pub s: f64,
    pub t: f64,
}

impl Slope {
    /// Point on the KPZ curve.
    pub fn kpz(s: f64, u: f64) -> Slope {
        Slope { s, t: phi(s, u) }
    }
}

//! Continuous-time jump dynamics on the torus, on windows of the plane and on
//! the quadrant with time-dependent clocks.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::jump::{apply_jump, classify_seed, Direction, ExitPolicy, JumpEnd, JumpSpec, RateClass, SeedTable};
use crate::lattice::{validate, EdgeGrid, Geometry, WeightParams};

/// Rates of the three seed classes, indexed by [`RateClass`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSet {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl RateSet {
    /// Stochastic rates at `(q, u)`; `q` and `u` must be interior.
    pub fn stochastic(q: f64, u: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::ParameterDomain("dynamics needs 0 < q < 1"));
        }
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::ParameterDomain("dynamics needs 0 < u < 1"));
        }
        Ok(Self::stochastic_unchecked(q, u))
    }

    pub fn stochastic_unchecked(q: f64, u: f64) -> Self {
        RateSet {
            a: (1.0 - u) * q / ((1.0 - q) * (1.0 - q * u) * u),
            b: (1.0 - q * u) / ((1.0 - u) * (1.0 - q) * u),
            c: (1.0 - q) / ((1.0 - u) * (1.0 - q * u)),
        }
    }

    /// Rates for general weights with overall scale `eta`.
    pub fn general(params: &WeightParams, eta: f64) -> Result<Self> {
        let [a1, a2, b1, b2, c1, c2] = params.weights()?;
        if eta < 0.0 {
            return Err(Error::ParameterDomain("eta must be nonnegative"));
        }
        if b1 * b2 == 0.0 {
            return Err(Error::ParameterDomain("general rates need b1 b2 > 0"));
        }
        let sb = libm::sqrt(b1 * b2);
        if a1 * a2 == 0.0 {
            // Five vertex limit: all rates multiplied by sqrt(a1 a2) / eta before eta is reapplied.
            return Ok(RateSet { a: eta * sb, b: 0.0, c: eta * c1 * c2 / sb });
        }
        let sa = libm::sqrt(a1 * a2);
        let (a, b, c) = (eta * sb / sa, eta * sa / sb, eta * c1 * c2 / (sa * sb));
        Ok(RateSet { a, b, c })
    }

    #[inline]
    pub fn get(&self, c: RateClass) -> f64 {
        match c {
            RateClass::A => self.a,
            RateClass::B => self.b,
            RateClass::C => self.c,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

/// `u(τ) = u + (1 - e^{-τ}) η`.
pub fn u_of_tau(u: f64, eta: f64, tau: f64) -> f64 {
    u + (1.0 - libm::exp(-tau)) * eta
}

/// Per-class bound on `e^{-τ} ℜ(u(τ))` over `τ ≥ 0`, times `η`. Each rate is
/// quasi-convex in `u`, so its maximum over `[u, u+η]` sits at an endpoint.
pub fn clock_envelope(q: f64, u: f64, eta: f64) -> Result<[f64; 3]> {
    if eta == 0.0 {
        return Ok([0.0; 3]);
    }
    if !(u > 0.0 && u + eta < 1.0 && eta > 0.0) {
        return Err(Error::ParameterDomain("need 0 < u < u + eta < 1"));
    }
    let r0 = RateSet::stochastic(q, u)?.as_array();
    let r1 = RateSet::stochastic(q, u + eta)?.as_array();
    Ok([0, 1, 2].map(|i| eta * libm::fmax(r0[i], r1[i])))
}

/// Largest class value of [`clock_envelope`].
pub fn clock_envelope_max(q: f64, u: f64, eta: f64) -> Result<f64> {
    Ok(clock_envelope(q, u, eta)?.iter().copied().fold(0.0, f64::max))
}

/// How seeds are clocked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    /// Constant rate per class.
    Homogeneous(RateSet),
    /// Rate `(y+1) η e^{-τ} ℜ(u(τ))` for a seed with lower vertex in storage row `y`.
    Quadrant { q: f64, u: f64, eta: f64 },
}

/// Seeds eligible for clocks: lower vertex in `x0..=x1`, `y0..=y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveBox {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl ActiveBox {
    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    /// Every seed of the grid.
    pub fn full(grid: &EdgeGrid) -> ActiveBox {
        let w = grid.width();
        let h = grid.height();
        let y1 = if grid.is_torus() { h - 1 } else { h.saturating_sub(2) };
        ActiveBox { x0: 0, x1: w - 1, y0: 0, y1 }
    }
}

/// One executed jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub spec: JumpSpec,
    pub extent: usize,
    pub end: JumpEnd,
}

/// Height increments on a box of faces, updated as jumps pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceTracker {
    pub fx0: usize,
    pub fy0: usize,
    pub w: usize,
    pub h: usize,
    pub dh: Vec<i64>,
}

impl FaceTracker {
    pub fn new(fx0: usize, fy0: usize, w: usize, h: usize) -> Self {
        FaceTracker { fx0, fy0, w, h, dh: vec![0; w * h] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.dh[j * self.w + i]
    }

    fn record(&mut self, grid: &EdgeGrid, out: &crate::jump::JumpOutcome) {
        let (w, h) = (grid.width(), grid.height());
        let torus = grid.is_torus();
        let fy = if torus { (out.spec.y + 1) % h } else { out.spec.y + 1 };
        if fy < self.fy0 || fy >= self.fy0 + self.h {
            return;
        }
        let sign = if out.spec.dir == Direction::Up { -1 } else { 1 };
        let row = (fy - self.fy0) * self.w;
        for k in 0..out.span() {
            let fx = out.spec.x + k + 1;
            let fx = if torus { fx % w } else { fx };
            if fx >= self.fx0 && fx < self.fx0 + self.w {
                self.dh[row + fx - self.fx0] += sign;
            }
        }
    }
}

/// Outcome of [`Engine::run_until`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Reached,
    /// No seed left with positive rate.
    Absorbed,
    /// A jump ran off the window under [`ExitPolicy::Error`].
    Overflow,
}

const NONE: u32 = u32::MAX;

/// Event-driven simulator state.
#[derive(Debug, Clone)]
pub struct Engine {
    pub grid: EdgeGrid,
    seeds: SeedTable,
    clock: Clock,
    active: ActiveBox,
    policy: ExitPolicy,
    lists: [Vec<u32>; 3],
    pos: Vec<u32>,
    cls: Vec<u8>,
    envelope: [f64; 3],
    row_cap: f64,
    time: f64,
    pub n_events: u64,
    pub n_proposals: u64,
    pub overflows: u64,
    /// Event log, kept only when enabled.
    pub log: Option<Vec<Event>>,
    pub tracker: Option<FaceTracker>,
    /// Validate the grid after every event (slow).
    pub check_each_event: bool,
}

impl Engine {
    pub fn new(grid: EdgeGrid, clock: Clock, active: ActiveBox, policy: ExitPolicy) -> Result<Self> {
        let bad = validate(&grid).len();
        if bad > 0 {
            return Err(Error::Validation(bad));
        }
        let full = ActiveBox::full(&grid);
        if active.x1 > full.x1 || active.y1 > full.y1 || active.x0 > active.x1 || active.y0 > active.y1 {
            return Err(Error::Geometry("active box outside the grid"));
        }
        let (envelope, row_cap) = match clock {
            Clock::Homogeneous(r) => {
                if r.as_array().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::ParameterDomain("rates must be finite and nonnegative"));
                }
                (r.as_array(), 1.0)
            }
            Clock::Quadrant { q, u, eta } => {
                if !matches!(grid.geometry, Geometry::QuadrantWindow { .. }) {
                    return Err(Error::Geometry("quadrant clocks need a quadrant window"));
                }
                (clock_envelope(q, u, eta)?, (active.y1 + 1) as f64)
            }
        };
        let n = grid.width() * grid.height();
        let mut e = Engine {
            grid,
            seeds: SeedTable::derive()?,
            clock,
            active,
            policy,
            lists: [Vec::new(), Vec::new(), Vec::new()],
            pos: vec![NONE; n],
            cls: vec![u8::MAX; n],
            envelope,
            row_cap,
            time: 0.0,
            n_events: 0,
            n_proposals: 0,
            overflows: 0,
            log: None,
            tracker: None,
            check_each_event: false,
        };
        for y in active.y0..=active.y1 {
            for x in active.x0..=active.x1 {
                e.refresh(x, y);
            }
        }
        Ok(e)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Seed counts per class.
    pub fn counts(&self) -> [usize; 3] {
        [self.lists[0].len(), self.lists[1].len(), self.lists[2].len()]
    }

    pub fn enable_log(&mut self) {
        self.log = Some(Vec::new());
    }

    #[inline]
    fn id(&self, x: usize, y: usize) -> usize {
        y * self.grid.width() + x
    }

    fn refresh(&mut self, x: usize, y: usize) {
        if !self.active.contains(x, y) {
            return;
        }
        let id = self.id(x, y);
        let new = match classify_seed(&self.grid, &self.seeds, x, y) {
            Ok(Some(s)) => s.class.index() as u8,
            _ => u8::MAX,
        };
        let old = self.cls[id];
        if new == old {
            return;
        }
        if old != u8::MAX {
            let list = &mut self.lists[old as usize];
            let p = self.pos[id] as usize;
            let last = *list.last().expect("nonempty");
            list.swap_remove(p);
            if last as usize != id {
                self.pos[last as usize] = p as u32;
            }
            self.pos[id] = NONE;
        }
        if new != u8::MAX {
            let list = &mut self.lists[new as usize];
            self.pos[id] = list.len() as u32;
            list.push(id as u32);
        }
        self.cls[id] = new;
    }

    fn refresh_after(&mut self, out: &crate::jump::JumpOutcome) {
        let w = self.grid.width();
        let h = self.grid.height();
        let torus = self.grid.is_torus();
        let y = out.spec.y;
        let cols = (out.span() + 1).min(w);
        for dy in 0..3usize {
            let yy = if torus {
                (y + h + dy - 1) % h
            } else if y + dy == 0 {
                continue;
            } else {
                y + dy - 1
            };
            for k in 0..cols {
                let xx = out.spec.x + k;
                let xx = if torus { xx % w } else if xx >= w { break } else { xx };
                self.refresh(xx, yy);
            }
        }
    }

    /// Rate of class `c` for a seed in storage row `y` at the current time.
    #[inline]
    fn rate(&self, c: usize, y: usize) -> f64 {
        match self.clock {
            Clock::Homogeneous(r) => r.as_array()[c],
            Clock::Quadrant { q, u, eta } => {
                let r = RateSet::stochastic_unchecked(q, u_of_tau(u, eta, self.time)).as_array()[c];
                (y + 1) as f64 * eta * libm::exp(-self.time) * r
            }
        }
    }

    /// Run until time `t_end`, an absorbing state, or an overflow.
    pub fn run_until<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<RunStatus> {
        let w = self.grid.width();
        loop {
            let weights = [0, 1, 2].map(|c| self.lists[c].len() as f64 * self.envelope[c] * self.row_cap);
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                self.time = t_end.max(self.time);
                return Ok(RunStatus::Absorbed);
            }
            let dt = -libm::log(1.0 - rng.random::<f64>()) / total;
            if self.time + dt >= t_end {
                self.time = t_end;
                return Ok(RunStatus::Reached);
            }
            self.time += dt;
            self.n_proposals += 1;
            let mut z = rng.random::<f64>() * total;
            let mut c = 0;
            while c < 2 && z >= weights[c] {
                z -= weights[c];
                c += 1;
            }
            if self.lists[c].is_empty() {
                continue;
            }
            let k = rng.random_range(0..self.lists[c].len());
            let id = self.lists[c][k] as usize;
            let (x, y) = (id % w, id / w);
            if let Clock::Quadrant { .. } = self.clock {
                let r = self.rate(c, y);
                let env = self.envelope[c] * self.row_cap;
                if r > env * (1.0 + 1e-12) {
                    return Err(Error::Envelope { rate: r, envelope: env });
                }
                if rng.random::<f64>() * env >= r {
                    continue;
                }
            }
            let spec = classify_seed(&self.grid, &self.seeds, x, y)?.ok_or(Error::Consistency("stale seed"))?;
            let out = match apply_jump(&mut self.grid, spec, self.policy) {
                Ok(o) => o,
                Err(Error::Overflow { .. }) => {
                    self.overflows += 1;
                    return Ok(RunStatus::Overflow);
                }
                Err(e) => return Err(e),
            };
            self.n_events += 1;
            if let Some(t) = self.tracker.as_mut() {
                t.record(&self.grid, &out);
            }
            if let Some(log) = self.log.as_mut() {
                log.push(Event { time: self.time, spec, extent: out.extent, end: out.end });
            }
            self.refresh_after(&out);
            if self.check_each_event && !validate(&self.grid).is_empty() {
                return Err(Error::Consistency("event produced an invalid grid"));
            }
        }
    }

    /// Seed set recomputed from scratch, as `(id, class)` pairs sorted by id.
    pub fn rescan(&self) -> Vec<(u32, u8)> {
        let mut v = Vec::new();
        for y in self.active.y0..=self.active.y1 {
            for x in self.active.x0..=self.active.x1 {
                if let Ok(Some(s)) = classify_seed(&self.grid, &self.seeds, x, y) {
                    v.push((self.id(x, y) as u32, s.class.index() as u8));
                }
            }
        }
        v.sort_unstable();
        v
    }

    /// Incrementally maintained seed set in the same form as [`rescan`](Self::rescan).
    pub fn maintained(&self) -> Vec<(u32, u8)> {
        let mut v: Vec<(u32, u8)> = self
            .lists
            .iter()
            .enumerate()
            .flat_map(|(c, l)| l.iter().map(move |&id| (id, c as u8)))
            .collect();
        v.sort_unstable();
        v
    }
}

/// One ring of a uniformised seed clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ring {
    pub time: f64,
    pub x: u32,
    pub y: u32,
    /// Acceptance coin in `[0, 1)`.
    pub coin: f64,
}

/// Rate-`m` Poisson clocks on every seed site of a box up to time `t`. Each
/// site draws from its own counter stream, so two tapes over nested boxes
/// agree on the rings of their common sites.
#[derive(Debug, Clone)]
pub struct ClockTape {
    pub m: f64,
    pub t: f64,
    pub rings: Vec<Ring>,
}

impl ClockTape {
    pub fn new(bbox: ActiveBox, m: f64, t: f64, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        if !(m > 0.0) || !(t >= 0.0) {
            return Err(Error::ParameterDomain("clock tape needs m > 0 and t >= 0"));
        }
        let mut rings = Vec::new();
        for y in bbox.y0..=bbox.y1 {
            for x in bbox.x0..=bbox.x1 {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((y as u64) << 32) | x as u64);
                let mut time = 0.0;
                loop {
                    time += -libm::log(1.0 - rng.random::<f64>()) / m;
                    if time > t {
                        break;
                    }
                    rings.push(Ring { time, x: x as u32, y: y as u32, coin: rng.random() });
                }
            }
        }
        rings.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
        Ok(ClockTape { m, t, rings })
    }
}

/// Windowed dynamics driven by a [`ClockTape`]; rings outside `active` are ignored.
#[derive(Debug, Clone)]
pub struct TapeRunner {
    pub grid: EdgeGrid,
    pub active: ActiveBox,
    pub time: f64,
    pub jumps: u64,
    seeds: SeedTable,
    rates: RateSet,
    policy: ExitPolicy,
    next: usize,
}

impl TapeRunner {
    pub fn new(grid: EdgeGrid, rates: RateSet, active: ActiveBox, policy: ExitPolicy) -> Result<Self> {
        let v = validate(&grid);
        if !v.is_empty() {
            return Err(Error::Validation(v.len()));
        }
        Ok(TapeRunner { grid, active, time: 0.0, jumps: 0, seeds: SeedTable::derive()?, rates, policy, next: 0 })
    }

    /// Process rings with time `<= until`.
    pub fn advance(&mut self, tape: &ClockTape, until: f64) -> Result<RunStatus> {
        let top = self.rates.a.max(self.rates.b).max(self.rates.c);
        if top > tape.m * (1.0 + 1e-12) {
            return Err(Error::Envelope { rate: top, envelope: tape.m });
        }
        while let Some(r) = tape.rings.get(self.next) {
            if r.time > until {
                break;
            }
            self.next += 1;
            let (x, y) = (r.x as usize, r.y as usize);
            if !self.active.contains(x, y) {
                continue;
            }
            let Some(spec) = classify_seed(&self.grid, &self.seeds, x, y)? else { continue };
            if r.coin * tape.m >= self.rates.get(spec.class) {
                continue;
            }
            match apply_jump(&mut self.grid, spec, self.policy) {
                Ok(_) => self.jumps += 1,
                Err(Error::Overflow { .. }) => {
                    self.time = r.time;
                    return Ok(RunStatus::Overflow);
                }
                Err(e) => return Err(e),
            }
        }
        self.time = until.min(tape.t);
        Ok(RunStatus::Reached)
    }
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial: EdgeGrid,
    pub events: Vec<Event>,
    pub final_grid: EdgeGrid,
    pub final_time: f64,
    pub status: RunStatus,
    pub n_events: u64,
}

impl Trajectory {
    /// Re-apply the logged jumps to the initial grid.
    pub fn replay(&self, policy: ExitPolicy) -> Result<EdgeGrid> {
        let mut g = self.initial.clone();
        for e in &self.events {
            apply_jump(&mut g, e.spec, policy)?;
        }
        Ok(g)
    }
}

fn finish<R: Rng + ?Sized>(mut e: Engine, t: f64, log: bool, rng: &mut R) -> Result<Trajectory> {
    let initial = e.grid.clone();
    if log {
        e.enable_log();
    }
    let status = e.run_until(t, rng)?;
    Ok(Trajectory {
        initial,
        events: e.log.take().unwrap_or_default(),
        final_time: e.time(),
        n_events: e.n_events,
        final_grid: e.grid,
        status,
    })
}

/// Torus dynamics up to time `t`.
pub fn evolve_torus<R: Rng + ?Sized>(grid: EdgeGrid, rates: RateSet, t: f64, log: bool, rng: &mut R) -> Result<Trajectory> {
    if !grid.is_torus() {
        return Err(Error::Geometry("evolve_torus needs a torus"));
    }
    let active = ActiveBox::full(&grid);
    finish(Engine::new(grid, Clock::Homogeneous(rates), active, ExitPolicy::Error)?, t, log, rng)
}

/// Windowed plane dynamics: clocks only on seeds whose lower vertex lies in
/// `active`. A jump leaving the stored grid stops the run with [`RunStatus::Overflow`].
pub fn evolve_window<R: Rng + ?Sized>(
    grid: EdgeGrid,
    rates: RateSet,
    active: ActiveBox,
    t: f64,
    log: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    if grid.is_torus() {
        return Err(Error::Geometry("evolve_window needs a bounded grid"));
    }
    finish(Engine::new(grid, Clock::Homogeneous(rates), active, ExitPolicy::Error)?, t, log, rng)
}

/// Quadrant dynamics with time-dependent clocks up to time `tau`. Seeds in the
/// top stored row are never clocked, which keeps every row below it exact.
pub fn evolve_quadrant<R: Rng + ?Sized>(grid: EdgeGrid, q: f64, u: f64, eta: f64, tau: f64, log: bool, rng: &mut R) -> Result<Trajectory> {
    if !matches!(grid.geometry, Geometry::QuadrantWindow { .. }) {
        return Err(Error::Geometry("evolve_quadrant needs a quadrant window"));
    }
    if eta == 0.0 {
        return Ok(Trajectory {
            initial: grid.clone(),
            events: Vec::new(),
            final_grid: grid,
            final_time: tau,
            status: RunStatus::Absorbed,
            n_events: 0,
        });
    }
    let active = ActiveBox::full(&grid);
    finish(Engine::new(grid, Clock::Quadrant { q, u, eta }, active, ExitPolicy::Free)?, tau, log, rng)
}

//! Seed pairs, jump initiation and propagation, and the coin-flip two-row operator.

use alloc::vec;
use alloc::vec::Vec;

use num_rational::BigRational;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::lattice::{EdgeGrid, Geometry, VertexKind};
use crate::scalar::{rat, Scalar};
use crate::ybe::{alpha_beta_gamma, reference_table, BijTable};

/// Strictly decreasing finite set of nonnegative integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SubsetZ(Vec<usize>);

impl SubsetZ {
    pub fn empty() -> Self {
        SubsetZ(Vec::new())
    }

    /// Accepts any order; rejects duplicates.
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        parts.sort_unstable_by(|a, b| b.cmp(a));
        if parts.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::ParameterDomain("subset entries must be distinct"));
        }
        Ok(SubsetZ(parts))
    }

    /// From a bit mask (bit `i` set means `i` belongs).
    pub fn from_mask(mask: u64) -> Self {
        SubsetZ((0..64).rev().filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn mask(&self) -> u64 {
        self.0.iter().fold(0u64, |m, &i| m | (1u64 << i))
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn max(&self) -> Option<usize> {
        self.0.first().copied()
    }
    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search_by(|p| i.cmp(p)).is_ok()
    }

    /// `λ ∩ {0, …, h-1}`.
    pub fn truncate(&self, h: usize) -> SubsetZ {
        SubsetZ(self.0.iter().copied().filter(|&p| p < h).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Up,
    Down,
}

/// Which of the three rates drives a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RateClass {
    A,
    B,
    C,
}

impl RateClass {
    pub const ALL: [RateClass; 3] = [RateClass::A, RateClass::B, RateClass::C];
    pub const fn index(self) -> usize {
        self as usize
    }
}

/// A seed at the vertical edge above vertex `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JumpSpec {
    pub x: usize,
    pub y: usize,
    pub dir: Direction,
    pub class: RateClass,
}

/// `(lower kind, upper kind) -> (direction, class)`, derived from the exact
/// bijectivisation table with the cross in its identity state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedTable {
    pat: [[Option<(Direction, RateClass)>; 6]; 6],
}

impl SeedTable {
    pub fn derive() -> Result<Self> {
        let table = reference_table();
        let (a, b, g) = alpha_beta_gamma(&rat(1, 4), &rat(1, 2), &rat(3, 4))?;
        let one = BigRational::from_ratio(1, 1);
        let classes = [
            (one.clone() - a, RateClass::A),
            (one.clone() - b, RateClass::B),
            (one - g, RateClass::C),
        ];
        let mut pat = [[None; 6]; 6];
        for lo in VertexKind::ALL {
            for up in VertexKind::ALL {
                if let Some((dir, p)) = seed_flip(&table, lo, up)? {
                    let class = classes
                        .iter()
                        .find(|(c, _)| *c == p)
                        .map(|(_, c)| *c)
                        .ok_or(Error::Consistency("flip probability is not a coin value"))?;
                    pat[lo.index()][up.index()] = Some((dir, class));
                }
            }
        }
        Ok(SeedTable { pat })
    }

    #[inline]
    pub fn lookup(&self, lower: VertexKind, upper: VertexKind) -> Option<(Direction, RateClass)> {
        self.pat[lower.index()][upper.index()]
    }

    /// All `(lower, upper, direction, class)` patterns.
    pub fn patterns(&self) -> Vec<(VertexKind, VertexKind, Direction, RateClass)> {
        let mut v = Vec::new();
        for lo in VertexKind::ALL {
            for up in VertexKind::ALL {
                if let Some((d, c)) = self.lookup(lo, up) {
                    v.push((lo, up, d, c));
                }
            }
        }
        v
    }
}

/// Row above `y`, wrapping on the torus; `None` past the top of a bounded grid.
#[inline]
fn row_above(grid: &EdgeGrid, y: usize) -> Option<usize> {
    if grid.is_torus() {
        Some((y + 1) % grid.height())
    } else if y + 1 < grid.height() {
        Some(y + 1)
    } else {
        None
    }
}

/// Seed at the vertical edge between `(x, y)` and the vertex above it.
pub fn classify_seed(grid: &EdgeGrid, seeds: &SeedTable, x: usize, y: usize) -> Result<Option<JumpSpec>> {
    if x >= grid.width() || y >= grid.height() {
        return Err(Error::Index { x: x as i64, y: y as i64 });
    }
    let Some(y2) = row_above(grid, y) else {
        return Err(Error::Index { x: x as i64, y: y as i64 + 1 });
    };
    let (Some(lo), Some(up)) = (grid.kind(x, y), grid.kind(x, y2)) else {
        return Ok(None);
    };
    Ok(seeds.lookup(lo, up).map(|(dir, class)| JumpSpec { x, y, dir, class }))
}

/// What to do when a jump reaches the right edge of a bounded grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitPolicy {
    /// Report [`Error::Overflow`] and leave the grid untouched.
    Error,
    /// Swap the exit edges and stop (exact for quadrant windows).
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpEnd {
    /// Terminating vertical edge above `(x, y)` toggled.
    Vertical { x: usize },
    /// Torus only: the horizontal loop went all the way round.
    Loop,
    /// Left through the right edge of the grid.
    FreeExit,
}

/// Result of one jump. Columns `x .. x + extent` (mod width) had their right
/// outputs swapped; the affected faces are `(col + 1, y + 1)` for those columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JumpOutcome {
    pub spec: JumpSpec,
    pub extent: usize,
    pub end: JumpEnd,
}

impl JumpOutcome {
    /// Number of swapped columns, `c + 1`.
    pub fn span(&self) -> usize {
        self.extent + 1
    }
}

/// Count swapped columns without mutating; `Err(span)` means the jump runs off a bounded grid after `span` swaps.
fn scan(grid: &EdgeGrid, x: usize, y: usize, y2: usize, dir: Direction) -> core::result::Result<(usize, JumpEnd), usize> {
    let w = grid.width();
    let pass = if dir == Direction::Up { (1, 0) } else { (0, 1) };
    let mut span = 1;
    loop {
        let j = x + span;
        if grid.is_torus() {
            if j % w == x {
                return Ok((span, JumpEnd::Loop));
            }
        } else if j >= w {
            return Err(span);
        }
        if (grid.h_out(j, y), grid.h_out(j, y2)) != pass {
            return Ok((span, JumpEnd::Vertical { x: j % w }));
        }
        span += 1;
    }
}

/// Propagate a jump whose initiating vertical edge has already been toggled.
pub fn propagate(grid: &mut EdgeGrid, spec: JumpSpec, policy: ExitPolicy) -> Result<JumpOutcome> {
    let (x, y) = (spec.x, spec.y);
    let y2 = row_above(grid, y).ok_or(Error::Index { x: x as i64, y: y as i64 + 1 })?;
    let (span, end) = match scan(grid, x, y, y2, spec.dir) {
        Ok(r) => r,
        Err(span) => match policy {
            ExitPolicy::Error => return Err(Error::Overflow { row: y }),
            ExitPolicy::Free => (span, JumpEnd::FreeExit),
        },
    };
    let (nb, nt) = if spec.dir == Direction::Up { (0, 1) } else { (1, 0) };
    for k in 0..span {
        let j = x + k;
        grid.set_h_out(j, y, nb);
        grid.set_h_out(j, y2, nt);
    }
    let fin = if spec.dir == Direction::Up { 0 } else { 1 };
    match end {
        JumpEnd::Vertical { x: t } => grid.set_v_out(t, y, fin),
        JumpEnd::Loop => grid.set_v_out(x, y, fin),
        JumpEnd::FreeExit => {}
    }
    Ok(JumpOutcome { spec, extent: span - 1, end })
}

/// Initiate and propagate a jump at a seed. Under [`ExitPolicy::Error`] an
/// overflow leaves the grid unchanged.
pub fn apply_jump(grid: &mut EdgeGrid, spec: JumpSpec, policy: ExitPolicy) -> Result<JumpOutcome> {
    let old = grid.v_out(spec.x, spec.y);
    grid.set_v_out(spec.x, spec.y, if spec.dir == Direction::Up { 1 } else { 0 });
    match propagate(grid, spec, policy) {
        Ok(o) => Ok(o),
        Err(e) => {
            grid.set_v_out(spec.x, spec.y, old);
            Err(e)
        }
    }
}

/// Two-row configuration encoded by the vertical edges entering the bottom row
/// (`kappa`), between the rows (`mu`) and leaving the top row (`lambda`), plus
/// the common left boundary edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoRowState {
    pub kappa: SubsetZ,
    pub mu: SubsetZ,
    pub lambda: SubsetZ,
    pub packed_left: bool,
}

impl TwoRowState {
    pub fn new(kappa: SubsetZ, mu: SubsetZ, lambda: SubsetZ, packed_left: bool) -> Result<Self> {
        let s = TwoRowState { kappa, mu, lambda, packed_left };
        s.to_grid()?;
        Ok(s)
    }

    /// Width with every path turned up: one column past the largest entry.
    pub fn width(&self) -> usize {
        [&self.kappa, &self.mu, &self.lambda].iter().filter_map(|s| SubsetZ::max(s)).max().map_or(1, |m| m + 2)
    }

    /// Two-row grid realising the state; fails on invalid length relations or interlacing.
    pub fn to_grid(&self) -> Result<EdgeGrid> {
        let (lk, lm, ll) = (self.kappa.len(), self.mu.len(), self.lambda.len());
        let ok = if self.packed_left { ll == lm + 1 && lm == lk + 1 } else { ll == lm && lm == lk };
        if !ok {
            return Err(Error::Consistency("invalid length relation for two-row state"));
        }
        let w = self.width();
        let mut g = EdgeGrid::empty(Geometry::Rect { w, h: 2 })?;
        g.boundary = crate::lattice::Boundary::Custom;
        for (row, set) in [&self.kappa, &self.mu, &self.lambda].iter().enumerate() {
            for &p in set.parts() {
                g.set_v_in(p, row, 1);
            }
        }
        let l = self.packed_left as u8;
        for y in 0..2 {
            g.set_h_in(0, y, l);
            for x in 0..w {
                let s = g.v_in(x, y) as i32 + g.h_in(x, y) as i32 - g.v_out(x, y) as i32;
                if !(0..=1).contains(&s) {
                    return Err(Error::Consistency("two-row state violates the ice rule"));
                }
                g.set_h_out(x, y, s as u8);
            }
            if g.h_in(w, y) != 0 {
                return Err(Error::Consistency("two-row state leaves a path on the right"));
            }
        }
        Ok(g)
    }
}

/// Direction and probability of the vertical flip that the bijectivisation
/// assigns to the vertical pair `(lower, upper)`, or `None` if the pair stays put.
pub fn seed_flip<S: Scalar>(table: &BijTable<S>, lo: VertexKind, up: VertexKind) -> Result<Option<(Direction, S)>> {
    let (lvi, lhi, lvo, lho) = lo.arrows();
    let (uvi, uhi, uvo, uho) = up.arrows();
    if lvo != uvi {
        return Ok(None);
    }
    let k = [lhi, uhi, lvo];
    let i = [uhi, lhi, lvi];
    let j = [lho, uho, uvo];
    let e = table.entry(i, j);
    let ka = e.lhs.iter().position(|(s, _)| *s == k).ok_or(Error::Consistency("seed state missing"))?;
    let mut found = None;
    for (kb, (s, _)) in e.rhs.iter().enumerate() {
        let p = &e.fwd[ka][kb];
        if p.is_zero() {
            continue;
        }
        let stay = [j[1], j[0], k[2]];
        if *s == stay {
            continue;
        }
        if s[2] == k[2] {
            return Err(Error::Consistency("transition without vertical flip"));
        }
        let dir = if k[2] == 0 { Direction::Up } else { Direction::Down };
        // new (bottom, top) right outputs are (s[1], s[0])
        let expect = if dir == Direction::Up { ((1, 0), (0, 1)) } else { ((0, 1), (1, 0)) };
        if (lho, uho) != expect.0 || (s[1], s[0]) != expect.1 {
            return Err(Error::Consistency("seed with unexpected horizontal swap"));
        }
        found = Some((dir, p.clone()));
    }
    Ok(found)
}

/// Flip probabilities `(1-α, 1-β, 1-γ)` indexed by [`RateClass`].
pub fn coin_probabilities(q: f64, u: f64, v: f64) -> Result<[f64; 3]> {
    let (a, b, g) = alpha_beta_gamma(&q, &u, &v)?;
    Ok([1.0 - a, 1.0 - b, 1.0 - g])
}

/// Left-to-right coin-flip sweep over rows `y, y+1` of a grid: each seed flips
/// its coin, a successful flip propagates, and the scan resumes after the
/// terminating column.
pub fn sweep_rows<R: RngCore + ?Sized>(
    grid: &mut EdgeGrid,
    seeds: &SeedTable,
    y: usize,
    coins: &[f64; 3],
    policy: ExitPolicy,
    rng: &mut R,
) -> Result<usize> {
    let w = grid.width();
    let mut x = 0;
    let mut jumps = 0;
    while x < w {
        if let Some(spec) = classify_seed(grid, seeds, x, y)? {
            if rng.random::<f64>() < coins[spec.class.index()] {
                let out = apply_jump(grid, spec, policy)?;
                jumps += 1;
                x += out.extent + 2;
                continue;
            }
        }
        x += 1;
    }
    Ok(jumps)
}

/// Sample `ν` from `U_{u,v}(μ → · | κ, λ)`.
pub fn two_row_sample<R: RngCore + ?Sized>(
    state: &TwoRowState,
    seeds: &SeedTable,
    q: f64,
    u: f64,
    v: f64,
    rng: &mut R,
) -> Result<SubsetZ> {
    if u == v {
        return Ok(state.mu.clone());
    }
    let coins = coin_probabilities(q, u, v)?;
    let mut g = state.to_grid()?;
    sweep_rows(&mut g, seeds, 0, &coins, ExitPolicy::Error, rng)?;
    Ok(mid_row(&g))
}

fn mid_row(g: &EdgeGrid) -> SubsetZ {
    SubsetZ((0..g.width()).rev().filter(|&x| g.v_in(x, 1) == 1).collect())
}

/// Apply `L_k` to a quadrant encoded by levels: `levels[0]` enters row 0 and
/// `levels[r + 1]` leaves row `r`; row `r` has spectral parameter `us[r]`.
/// Resamples `levels[k + 1]` from `U_{us[k], us[k+1]}`; the caller swaps `us[k]`, `us[k+1]`.
pub fn apply_l_k<R: RngCore + ?Sized>(
    levels: &mut [SubsetZ],
    k: usize,
    us: &[f64],
    q: f64,
    packed_left: bool,
    seeds: &SeedTable,
    rng: &mut R,
) -> Result<()> {
    if k + 2 >= levels.len() || k + 1 >= us.len() {
        return Err(Error::Index { x: 0, y: k as i64 });
    }
    if us[k] >= us[k + 1] {
        return Err(Error::Ordering { lower: us[k], upper: us[k + 1] });
    }
    let st = TwoRowState {
        kappa: levels[k].clone(),
        mu: levels[k + 1].clone(),
        lambda: levels[k + 2].clone(),
        packed_left,
    };
    levels[k + 1] = two_row_sample(&st, seeds, q, us[k], us[k + 1], rng)?;
    Ok(())
}

/// Full rescan of a grid's seeds.
pub fn all_seeds(grid: &EdgeGrid, seeds: &SeedTable) -> Vec<JumpSpec> {
    let rows = if grid.is_torus() { grid.height() } else { grid.height().saturating_sub(1) };
    let mut v = vec![];
    for y in 0..rows {
        for x in 0..grid.width() {
            if let Ok(Some(s)) = classify_seed(grid, seeds, x, y) {
                v.push(s);
            }
        }
    }
    v
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::lattice::validate;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> SeedTable {
        SeedTable::derive().unwrap()
    }

    #[test]
    fn six_seed_patterns() {
        use Direction::*;
        use RateClass::*;
        use VertexKind::*;
        let t = table();
        let mut p = t.patterns();
        p.sort();
        let mut expect = vec![
            (B2, A1, Up, C),
            (C1, A1, Up, A),
            (B2, C2, Up, B),
            (B1, A2, Down, C),
            (C2, A2, Down, A),
            (B1, C1, Down, B),
        ];
        expect.sort();
        assert_eq!(p, expect);
    }

    #[test]
    fn seeds_symmetric_under_inversion() {
        let t = table();
        let inv = |k: VertexKind| {
            let (a, b, c, d) = k.arrows();
            VertexKind::from_arrows(1 - a, 1 - b, 1 - c, 1 - d).unwrap()
        };
        for (lo, up, d, c) in t.patterns() {
            let flipped = t.lookup(inv(lo), inv(up)).unwrap();
            assert_eq!(flipped.1, c);
            assert_ne!(flipped.0, d);
        }
    }

    #[test]
    fn trivial_neighbourhoods_have_no_seed() {
        let t = table();
        let g = EdgeGrid::empty(Geometry::Torus { m: 3, n: 3 }).unwrap();
        assert!(all_seeds(&g, &t).is_empty());
        let g = EdgeGrid::packed(Geometry::Torus { m: 3, n: 3 }).unwrap();
        assert!(all_seeds(&g, &t).is_empty());
        assert!(classify_seed(&g, &t, 5, 0).is_err());
    }

    /// Straight horizontal loop in row 0 of a torus: the whole loop moves up.
    #[test]
    fn torus_loop_jump() {
        let t = table();
        let mut g = EdgeGrid::empty(Geometry::Torus { m: 5, n: 3 }).unwrap();
        for x in 0..5 {
            g.set_h_in(x, 0, 1);
        }
        let before = crate::lattice::height_field(&g, (0, 0), 0).unwrap().cycles;
        let s = classify_seed(&g, &t, 2, 0).unwrap().unwrap();
        assert_eq!((s.dir, s.class), (Direction::Up, RateClass::C));
        let o = apply_jump(&mut g, s, ExitPolicy::Error).unwrap();
        assert_eq!(o.end, JumpEnd::Loop);
        assert_eq!(o.extent, 4);
        for x in 0..5 {
            assert_eq!((g.h_in(x, 0), g.h_in(x, 1), g.v_out(x, 0)), (0, 1, 0));
        }
        assert_eq!(crate::lattice::height_field(&g, (0, 0), 0).unwrap().cycles, before);
    }

    /// Up jump that passes through a straight vertical path and stops at a turn.
    #[test]
    fn propagation_through_vertical_path() {
        let t = table();
        // Row 0: path enters from the left, runs right along row 0 and turns up at x=4.
        // A separate straight vertical path at x=2 crosses both rows.
        let mut g = EdgeGrid::empty(Geometry::Rect { w: 6, h: 2 }).unwrap();
        for x in 0..=4 {
            g.set_h_in(x, 0, 1);
        }
        g.set_v_in(4, 1, 1);
        g.set_h_in(5, 1, 1);
        g.set_h_in(6, 1, 1);
        for y in 0..=2 {
            g.set_v_in(2, y, 1);
        }
        assert!(validate(&g).is_empty(), "{}", g.art());
        let s = classify_seed(&g, &t, 0, 0).unwrap().unwrap();
        assert_eq!((s.dir, s.class), (Direction::Up, RateClass::C));
        let changed_h = |a: &EdgeGrid, b: &EdgeGrid| a.h_bits().iter().zip(b.h_bits()).filter(|(p, q)| p != q).count();
        let changed_v = |a: &EdgeGrid, b: &EdgeGrid| a.v_bits().iter().zip(b.v_bits()).filter(|(p, q)| p != q).count();
        let before = g.clone();
        let o = apply_jump(&mut g, s, ExitPolicy::Error).unwrap();
        assert_eq!(o.extent, 3);
        assert_eq!(o.end, JumpEnd::Vertical { x: 4 });
        assert!(validate(&g).is_empty(), "{}", g.art());
        assert_eq!(changed_h(&before, &g), 2 * (o.extent + 1));
        assert_eq!(changed_v(&before, &g), 2);
        assert_eq!(g.v_in(2, 1), 1);
    }

    #[test]
    fn minimal_jump() {
        let t = table();
        let mut g = EdgeGrid::empty(Geometry::Rect { w: 3, h: 2 }).unwrap();
        g.set_h_in(0, 0, 1);
        g.set_h_in(1, 0, 1);
        g.set_v_in(1, 1, 1);
        g.set_v_in(1, 2, 1);
        assert!(validate(&g).is_empty());
        let s = classify_seed(&g, &t, 0, 0).unwrap().unwrap();
        let o = apply_jump(&mut g, s, ExitPolicy::Error).unwrap();
        assert_eq!(o.extent, 0);
        assert_eq!((g.v_out(0, 0), g.v_out(1, 0), g.h_in(1, 1)), (1, 0, 1));
        assert!(validate(&g).is_empty());
    }

    #[test]
    fn overflow_policies() {
        let t = table();
        let mut g = EdgeGrid::empty(Geometry::QuadrantWindow { w: 4, h: 2 }).unwrap();
        for x in 0..=4 {
            g.set_h_in(x, 0, 1);
        }
        let s = classify_seed(&g, &t, 1, 0).unwrap().unwrap();
        let snap = g.clone();
        assert_eq!(apply_jump(&mut g, s, ExitPolicy::Error), Err(Error::Overflow { row: 0 }));
        assert_eq!(g, snap);
        let o = apply_jump(&mut g, s, ExitPolicy::Free).unwrap();
        assert_eq!(o.end, JumpEnd::FreeExit);
        assert_eq!(o.extent, 2);
        assert_eq!((g.h_in(4, 0), g.h_in(4, 1)), (0, 1));
        assert!(validate(&g).is_empty());
    }

    #[test]
    fn subset_basics() {
        let s = SubsetZ::new(vec![1, 5, 3]).unwrap();
        assert_eq!(s.parts(), &[5, 3, 1]);
        assert!(s.contains(3) && !s.contains(2));
        assert_eq!(s.truncate(4).parts(), &[3, 1]);
        assert_eq!(SubsetZ::from_mask(s.mask()), s);
        assert!(SubsetZ::new(vec![2, 2]).is_err());
    }

    #[test]
    fn trivial_two_row_samples() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = TwoRowState::new(SubsetZ::empty(), SubsetZ::empty(), SubsetZ::empty(), false).unwrap();
        assert_eq!(two_row_sample(&e, &t, 0.3, 0.2, 0.6, &mut rng).unwrap(), SubsetZ::empty());
        let st = TwoRowState::new(
            SubsetZ::new(vec![2]).unwrap(),
            SubsetZ::new(vec![3, 0]).unwrap(),
            SubsetZ::new(vec![3, 1, 0]).unwrap(),
            true,
        )
        .unwrap();
        for _ in 0..50 {
            assert_eq!(two_row_sample(&st, &t, 0.3, 0.4, 0.4, &mut rng).unwrap(), st.mu);
        }
        assert!(TwoRowState::new(SubsetZ::empty(), SubsetZ::new(vec![1]).unwrap(), SubsetZ::empty(), false).is_err());
    }

    #[test]
    fn l_k_ordering_and_empty() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lv = vec![SubsetZ::empty(); 4];
        assert!(matches!(
            apply_l_k(&mut lv, 0, &[0.5, 0.5, 0.6], 0.2, false, &t, &mut rng),
            Err(Error::Ordering { .. })
        ));
        apply_l_k(&mut lv, 0, &[0.3, 0.5, 0.6], 0.2, false, &t, &mut rng).unwrap();
        assert!(lv.iter().all(|s| s.is_empty()));
    }

    /// Straight loops (crossing at A2 vertices) scrambled by random jumps.
    pub(crate) fn random_torus(m: usize, n: usize, seed: u64) -> EdgeGrid {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = EdgeGrid::empty(Geometry::Torus { m, n }).unwrap();
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
        for _ in 0..200 {
            let s = all_seeds(&g, &t);
            if s.is_empty() {
                break;
            }
            let pick = s[rng.random_range(0..s.len())];
            apply_jump(&mut g, pick, ExitPolicy::Error).unwrap();
        }
        g
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn jumps_preserve_ice_rule_and_sector(m in 2usize..7, n in 2usize..7, seed in any::<u64>()) {
            let t = table();
            let mut g = random_torus(m, n, seed);
            prop_assert!(validate(&g).is_empty());
            let cyc = crate::lattice::height_field(&g, (0, 0), 0).unwrap().cycles;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
            for _ in 0..50 {
                let s = all_seeds(&g, &t);
                if s.is_empty() { break; }
                let pick = s[rng.random_range(0..s.len())];
                let before = g.clone();
                let o = apply_jump(&mut g, pick, ExitPolicy::Error).unwrap();
                prop_assert!(validate(&g).is_empty());
                let dh = before.h_bits().iter().zip(g.h_bits()).filter(|(a, b)| a != b).count();
                let dv = before.v_bits().iter().zip(g.v_bits()).filter(|(a, b)| a != b).count();
                prop_assert_eq!(dh, 2 * o.span());
                prop_assert!(dv <= 2);
                prop_assert_eq!(crate::lattice::height_field(&g, (0, 0), 0).unwrap().cycles, cyc);
            }
        }
    }
}

//! Brute-force oracles on small lattices.
//!
//! Everything here is generic over [`Scalar`] so the same code runs in `f64`
//! and in exact rationals.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::jump::{all_seeds, apply_jump, ExitPolicy, SeedTable, SubsetZ, TwoRowState};
use crate::lattice::{arrow_weight, stochastic_weights_s, Boundary, EdgeGrid, Geometry, VertexKind};
use crate::scalar::Scalar;
use crate::ybe::{derive_bij_table, BijTable};

/// All valid torus configurations with their Gibbs weights.
#[derive(Debug, Clone)]
pub struct ConfigEnsemble<S> {
    pub m: usize,
    pub n: usize,
    pub configs: Vec<EdgeGrid>,
    pub weights: Vec<S>,
    /// `(vertical edges per row, horizontal edges per column)`.
    pub sectors: Vec<(usize, usize)>,
    index: BTreeMap<u64, usize>,
}

/// Packs all edge bits of a small grid into one word.
pub fn grid_key(g: &EdgeGrid) -> u64 {
    let mut k = 0u64;
    for (i, b) in g.h_bits().iter().chain(g.v_bits()).enumerate() {
        k |= (*b as u64) << i;
    }
    k
}

impl<S: Scalar> ConfigEnsemble<S> {
    pub fn len(&self) -> usize {
        self.configs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
    pub fn find(&self, g: &EdgeGrid) -> Option<usize> {
        self.index.get(&grid_key(g)).copied()
    }
    /// Indices of the configurations in one sector.
    pub fn sector(&self, k: (usize, usize)) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.sectors[i] == k).collect()
    }
    /// Distinct sector labels, sorted.
    pub fn sector_labels(&self) -> Vec<(usize, usize)> {
        let mut v = self.sectors.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
    pub fn total_weight(&self) -> S {
        self.weights.iter().fold(S::zero(), |a, w| a + w.clone())
    }
}

/// One torus row: for vertical input mask `a`, every `(output mask, horizontal bits, weight)`
/// with periodic horizontal boundary. Bit `x` of the horizontal word is `h_in(x)`.
fn row_transitions<S: Scalar>(m: usize, a: u32, w: &[S; 6]) -> Vec<(u32, u32, S)> {
    let mut out = Vec::new();
    for h0 in 0..2u8 {
        // DFS over columns
        let mut stack = vec![(0usize, h0, 0u32, h0 as u32, S::one())];
        while let Some((x, hin, b, hb, wt)) = stack.pop() {
            if x == m {
                if hin == h0 {
                    out.push((b, hb, wt));
                }
                continue;
            }
            let vi = ((a >> x) & 1) as u8;
            for vo in 0..2u8 {
                let s = vi as i32 + hin as i32 - vo as i32;
                if !(0..=1).contains(&s) {
                    continue;
                }
                let ho = s as u8;
                let ww = arrow_weight(w, vi, hin, vo, ho);
                if ww.is_zero() {
                    continue;
                }
                let nb = b | ((vo as u32) << x);
                let nhb = if x + 1 < m { hb | ((ho as u32) << (x + 1)) } else { hb };
                stack.push((x + 1, ho, nb, nhb, wt.clone() * ww));
            }
        }
    }
    out
}

/// Enumerate every ice-rule configuration of an `m x n` torus by row transfer.
pub fn enum_torus<S: Scalar>(m: usize, n: usize, w: &[S; 6]) -> Result<ConfigEnsemble<S>> {
    if m == 0 || n == 0 || m > 4 || n > 4 {
        return Err(Error::Resource("torus enumeration supports 1 <= m, n <= 4"));
    }
    let trans: Vec<Vec<(u32, u32, S)>> = (0..1u32 << m).map(|a| row_transitions(m, a, w)).collect();
    let mut ens = ConfigEnsemble { m, n, configs: Vec::new(), weights: Vec::new(), sectors: Vec::new(), index: BTreeMap::new() };
    for a0 in 0..1u32 << m {
        // rows[y] = (input mask, h bits)
        let mut rows: Vec<(u32, u32)> = Vec::with_capacity(n);
        dfs_rows(&trans, m, n, a0, a0, S::one(), &mut rows, &mut ens)?;
    }
    Ok(ens)
}

#[allow(clippy::too_many_arguments)]
fn dfs_rows<S: Scalar>(
    trans: &[Vec<(u32, u32, S)>],
    m: usize,
    n: usize,
    a0: u32,
    a: u32,
    wt: S,
    rows: &mut Vec<(u32, u32)>,
    ens: &mut ConfigEnsemble<S>,
) -> Result<()> {
    if rows.len() == n {
        if a != a0 {
            return Ok(());
        }
        let mut g = EdgeGrid::empty(Geometry::Torus { m, n })?;
        g.boundary = Boundary::Periodic;
        for (y, &(vin, hb)) in rows.iter().enumerate() {
            for x in 0..m {
                g.set_v_in(x, y, ((vin >> x) & 1) as u8);
                g.set_h_in(x, y, ((hb >> x) & 1) as u8);
            }
        }
        let k1 = a0.count_ones() as usize;
        let k2 = (0..n).map(|y| g.h_in(0, y) as usize).sum();
        ens.index.insert(grid_key(&g), ens.configs.len());
        ens.configs.push(g);
        ens.weights.push(wt);
        ens.sectors.push((k1, k2));
        if ens.configs.len() > 2_000_000 {
            return Err(Error::Resource("too many configurations"));
        }
        return Ok(());
    }
    for (b, hb, ww) in &trans[a as usize] {
        rows.push((a, *hb));
        dfs_rows(trans, m, n, a0, *b, wt.clone() * ww.clone(), rows, ens)?;
        rows.pop();
    }
    Ok(())
}

/// Row transfer matrix `T[a][b]` of an `m`-column torus row.
pub fn torus_transfer_matrix<S: Scalar>(m: usize, w: &[S; 6]) -> Vec<Vec<S>> {
    let size = 1usize << m;
    let mut t = vec![vec![S::zero(); size]; size];
    for a in 0..size {
        for (b, _, ww) in row_transitions(m, a as u32, w) {
            t[a][b as usize] = t[a][b as usize].clone() + ww;
        }
    }
    t
}

pub fn mat_mul<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> Vec<Vec<S>> {
    let (r, k, c) = (a.len(), b.len(), b.first().map_or(0, |x| x.len()));
    let mut out = vec![vec![S::zero(); c]; r];
    for i in 0..r {
        for l in 0..k {
            if a[i][l].is_zero() {
                continue;
            }
            for j in 0..c {
                if !b[l][j].is_zero() {
                    out[i][j] = out[i][j].clone() + a[i][l].clone() * b[l][j].clone();
                }
            }
        }
    }
    out
}

pub fn trace<S: Scalar>(a: &[Vec<S>]) -> S {
    (0..a.len()).fold(S::zero(), |acc, i| acc + a[i][i].clone())
}

/// Sparse continuous-time generator on one sector.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix<S> {
    /// Ensemble indices of the sector's states, in matrix order.
    pub states: Vec<usize>,
    /// Off-diagonal `(from, to, rate)` in matrix coordinates, merged.
    pub off: Vec<(usize, usize, S)>,
    pub diag: Vec<S>,
}

impl<S: Scalar> GeneratorMatrix<S> {
    /// Largest absolute row sum.
    pub fn max_row_sum(&self) -> S {
        let mut sums = self.diag.clone();
        for (i, _, r) in &self.off {
            sums[*i] = sums[*i].clone() + r.clone();
        }
        sums.iter().fold(S::zero(), |m, s| if s.abs_val() > m { s.abs_val() } else { m })
    }
}

/// Torus generator restricted to a sector.
pub fn generator_matrix<S: Scalar>(ens: &ConfigEnsemble<S>, sector: (usize, usize), rates: &[S; 3], seeds: &SeedTable) -> Result<GeneratorMatrix<S>> {
    let states = ens.sector(sector);
    let pos: BTreeMap<usize, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut acc: BTreeMap<(usize, usize), S> = BTreeMap::new();
    let mut diag = vec![S::zero(); states.len()];
    for (i, &s) in states.iter().enumerate() {
        let g = &ens.configs[s];
        for spec in all_seeds(g, seeds) {
            let r = rates[spec.class.index()].clone();
            if r.is_zero() {
                continue;
            }
            let mut g2 = g.clone();
            apply_jump(&mut g2, spec, ExitPolicy::Error)?;
            let t = ens.find(&g2).ok_or(Error::Consistency("jump left the ensemble"))?;
            let j = *pos.get(&t).ok_or(Error::Consistency("jump left the sector"))?;
            let e = acc.entry((i, j)).or_insert_with(S::zero);
            *e = e.clone() + r.clone();
            diag[i] = diag[i].clone() - r;
        }
    }
    let off = acc.into_iter().map(|((i, j), r)| (i, j, r)).collect();
    Ok(GeneratorMatrix { states, off, diag })
}

/// `max_j |Σ_i μ_i G_ij| / max μ` over the sector; zero means stationary.
pub fn stationarity_residual<S: Scalar>(ens: &ConfigEnsemble<S>, gen: &GeneratorMatrix<S>) -> S {
    let mu: Vec<S> = gen.states.iter().map(|&s| ens.weights[s].clone()).collect();
    let mut flow: Vec<S> = mu.iter().zip(&gen.diag).map(|(m, d)| m.clone() * d.clone()).collect();
    for (i, j, r) in &gen.off {
        flow[*j] = flow[*j].clone() + mu[*i].clone() * r.clone();
    }
    let mmax = mu.iter().fold(S::zero(), |m, x| if *x > m { x.clone() } else { m });
    let fmax = flow.iter().fold(S::zero(), |m, x| if x.abs_val() > m { x.abs_val() } else { m });
    if mmax.is_zero() {
        return S::zero();
    }
    fmax / mmax
}

/// Vertically adjacent pair counts `N(lower, upper)` on a torus.
pub fn pair_counts(g: &EdgeGrid) -> Result<[[i64; 6]; 6]> {
    if !g.is_torus() {
        return Err(Error::Geometry("pair counts need a torus"));
    }
    let mut n = [[0i64; 6]; 6];
    for y in 0..g.height() {
        for x in 0..g.width() {
            let lo = g.kind(x, y).ok_or(Error::Validation(1))?;
            let up = g.kind(x, y + 1).ok_or(Error::Validation(1))?;
            n[lo.index()][up.index()] += 1;
        }
    }
    Ok(n)
}

/// Integer coefficients of `(𝔞, 𝔟, 𝔠)` in the pair-count balance sum.
///
/// Each negative term counts the seeds of one jump class; the positive term is
/// the same seed read with the vertical order reversed.
pub fn nxy_coefficients(g: &EdgeGrid) -> Result<[i64; 3]> {
    use VertexKind::*;
    let n = pair_counts(g)?;
    let c = |x: VertexKind, y: VertexKind| n[x.index()][y.index()];
    let ca = (c(A1, C2) - c(C1, A1)) + (c(A2, C1) - c(C2, A2));
    let cb = (c(C1, B2) - c(B2, C2)) + (c(C2, B1) - c(B1, C1));
    let cc = (c(A1, B2) - c(B2, A1)) + (c(A2, B1) - c(B1, A2));
    Ok([ca, cb, cc])
}

/// Variant whose second `𝔠` term pairs `A2` with `B2` instead of `B1`.
/// Kept to show that this form does not vanish.
pub fn nxy_coefficients_b2_variant(g: &EdgeGrid) -> Result<[i64; 3]> {
    use VertexKind::*;
    let n = pair_counts(g)?;
    let c = |x: VertexKind, y: VertexKind| n[x.index()][y.index()];
    let mut out = nxy_coefficients(g)?;
    out[2] = (c(A1, B2) - c(B2, A1)) + (c(A2, B2) - c(B2, A2));
    Ok(out)
}

/// The balance sum itself for given rates.
pub fn nxy_balance(g: &EdgeGrid, rates: &[f64; 3]) -> Result<f64> {
    let c = nxy_coefficients(g)?;
    Ok(c[0] as f64 * rates[0] + c[1] as f64 * rates[1] + c[2] as f64 * rates[2])
}

/// Row operators by left/right horizontal boundary: A `0→0`, B `1→0`, C `0→1`, D `1→1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOp {
    A,
    B,
    C,
    D,
}

impl RowOp {
    fn boundary(self) -> (u8, u8) {
        match self {
            RowOp::A => (0, 0),
            RowOp::B => (1, 0),
            RowOp::C => (0, 1),
            RowOp::D => (1, 1),
        }
    }
}

/// Matrix `M[ν][λ]` on subsets of `{0..h-1}` (as bit masks): weight of the
/// single row with bottom edges `λ`, top edges `ν` and the operator's boundary.
pub fn row_operator_matrix<S: Scalar>(op: RowOp, w: &[S; 6], h: usize) -> Result<Vec<Vec<S>>> {
    if h > 12 {
        return Err(Error::Resource("row operator truncation above 12"));
    }
    let size = 1usize << h;
    let (lin, rout) = op.boundary();
    let mut m = vec![vec![S::zero(); size]; size];
    for lam in 0..size {
        for nu in 0..size {
            let mut hin = lin;
            let mut wt = S::one();
            let mut ok = true;
            for x in 0..h {
                let vi = ((lam >> x) & 1) as u8;
                let vo = ((nu >> x) & 1) as u8;
                let s = vi as i32 + hin as i32 - vo as i32;
                if !(0..=1).contains(&s) {
                    ok = false;
                    break;
                }
                wt = wt * arrow_weight(w, vi, hin, vo, s as u8);
                hin = s as u8;
            }
            if ok && hin == rout {
                m[nu][lam] = wt;
            }
        }
    }
    Ok(m)
}

/// Exact law of `ν` under the cross-dragging operator, by dynamic programming
/// over columns with the bijectivisation table.
pub fn exact_two_row_law<S: Scalar>(state: &TwoRowState, table: &BijTable<S>) -> Result<BTreeMap<SubsetZ, S>> {
    let g = state.to_grid()?;
    let w = g.width();
    let l = state.packed_left as u8;
    // (ν mask, i1, i2) -> probability
    let mut cur: BTreeMap<(u64, u8, u8), S> = BTreeMap::new();
    cur.insert((0, l, l), S::one());
    for x in 0..w {
        let mut next: BTreeMap<(u64, u8, u8), S> = BTreeMap::new();
        let k = [g.h_in(x, 0), g.h_in(x, 1), g.v_in(x, 1)];
        let j = [g.h_out(x, 0), g.h_out(x, 1), g.v_in(x, 2)];
        for ((nu, i1, i2), p) in cur {
            let e = table.entry([i1, i2, g.v_in(x, 0)], j);
            let a = e.lhs.iter().position(|(s, _)| *s == k).ok_or(Error::Consistency("drag state has zero weight"))?;
            for (b, (kp, _)) in e.rhs.iter().enumerate() {
                let pf = e.fwd[a][b].clone();
                if pf.is_zero() {
                    continue;
                }
                let key = (nu | ((kp[2] as u64) << x), kp[0], kp[1]);
                let ent = next.entry(key).or_insert_with(S::zero);
                *ent = ent.clone() + p.clone() * pf;
            }
        }
        cur = next;
    }
    let mut law = BTreeMap::new();
    for ((nu, i1, i2), p) in cur {
        if (i1, i2) != (0, 0) {
            return Err(Error::Consistency("cross leaves the two rows occupied"));
        }
        let e = law.entry(SubsetZ::from_mask(nu)).or_insert_with(S::zero);
        *e = e.clone() + p;
    }
    Ok(law)
}

/// [`exact_two_row_law`] at spectral parameters `u ≤ v`; equal parameters give a point mass.
pub fn two_row_law<S: Scalar>(state: &TwoRowState, q: &S, u: &S, v: &S) -> Result<BTreeMap<SubsetZ, S>> {
    state.to_grid()?;
    if u == v {
        let mut law = BTreeMap::new();
        law.insert(state.mu.clone(), S::one());
        return Ok(law);
    }
    exact_two_row_law(state, &derive_bij_table(q, u, v)?)
}

/// Largest deviation in the two-row swap identity over all `κ, λ ⊆ {0..h-1}`:
/// `Σ_μ P_{u,v}(μ|κ,λ) U(μ→ν) = P_{v,u}(ν|κ,λ)`, with `B` operators when the
/// left boundary is packed and `A` operators when it is empty.
pub fn two_row_swap_residual<S: Scalar>(q: &S, u: &S, v: &S, h: usize, packed_left: bool) -> Result<S> {
    let op = if packed_left { RowOp::B } else { RowOp::A };
    let wu = stochastic_weights_s(q, u);
    let wv = stochastic_weights_s(q, v);
    let bu = row_operator_matrix(op, &wu, h)?;
    let bv = row_operator_matrix(op, &wv, h)?;
    let table = derive_bij_table(q, u, v)?;
    let size = 1usize << h;
    let mut worst = S::zero();
    for kappa in 0..size {
        for lam in 0..size {
            // bottom row first: P_{u,v}(μ) ∝ bv[λ][μ] bu[μ][κ]
            let before: Vec<S> = (0..size).map(|mu| bv[lam][mu].clone() * bu[mu][kappa].clone()).collect();
            let after: Vec<S> = (0..size).map(|mu| bu[lam][mu].clone() * bv[mu][kappa].clone()).collect();
            let z = before.iter().fold(S::zero(), |a, x| a + x.clone());
            let z2 = after.iter().fold(S::zero(), |a, x| a + x.clone());
            if z.is_zero() && z2.is_zero() {
                continue;
            }
            let mut pushed = vec![S::zero(); size];
            for (mu, wmu) in before.iter().enumerate() {
                if wmu.is_zero() {
                    continue;
                }
                let st = TwoRowState {
                    kappa: SubsetZ::from_mask(kappa as u64),
                    mu: SubsetZ::from_mask(mu as u64),
                    lambda: SubsetZ::from_mask(lam as u64),
                    packed_left,
                };
                for (nu, p) in exact_two_row_law(&st, &table)? {
                    let i = nu.mask() as usize;
                    pushed[i] = pushed[i].clone() + wmu.clone() * p;
                }
            }
            for i in 0..size {
                let d = (pushed[i].clone() / z.clone() - after[i].clone() / z2.clone()).abs_val();
                if d > worst {
                    worst = d;
                }
            }
        }
    }
    Ok(worst)
}

/// One configuration of the twisted torus with the cross at level `c`.
///
/// The horizontal strands form a helix: the right end of row `y` feeds the
/// left end of row `y + 1`, except at the cross, which sits on the seam
/// between rows `c` and `c + 1`. Its inputs are the right ends of rows `c - 1`
/// (vertical input) and `c` (horizontal input); its outputs `k1`, `k2` enter
/// rows `c` and `c + 1`. Row `c` has spectral parameter `u`, all others `u + ε`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TwistedState {
    /// `v[x * n + y] = v_in(x, y)`.
    pub v: Vec<u8>,
    /// `hout[y * m + x] = h_out(x, y)`.
    pub hout: Vec<u8>,
    pub k1: u8,
    pub k2: u8,
}

/// Twisted torus geometry and weights.
#[derive(Debug, Clone)]
pub struct TwistedTorus<S> {
    pub m: usize,
    pub n: usize,
    pub wu: [S; 6],
    pub wv: [S; 6],
    pub x: [S; 6],
}

impl<S: Scalar> TwistedTorus<S> {
    /// `eps` may be zero here (for the identification check); the chain needs `eps > 0`.
    pub fn new(m: usize, n: usize, q: &S, u: &S, eps: &S) -> Result<Self> {
        if m == 0 || n < 2 || m * n > 12 {
            return Err(Error::Resource("twisted torus supports n >= 2 and m n <= 12"));
        }
        let v = u.clone() + eps.clone();
        Ok(TwistedTorus {
            m,
            n,
            wu: stochastic_weights_s(q, u),
            wv: stochastic_weights_s(q, &v),
            x: stochastic_weights_s(q, &(u.clone() / v)),
        })
    }

    #[inline]
    fn vin(&self, s: &TwistedState, x: usize, y: usize) -> u8 {
        s.v[x * self.n + (y % self.n)]
    }

    fn hin(&self, s: &TwistedState, c: usize, x: usize, y: usize) -> u8 {
        let n = self.n;
        if x > 0 {
            return s.hout[y * self.m + x - 1];
        }
        if y == c % n {
            s.k1
        } else if y == (c + 1) % n {
            s.k2
        } else {
            s.hout[((y + n - 1) % n) * self.m + self.m - 1]
        }
    }

    /// Cross arrows `(vertical-in, horizontal-in; vertical-out, horizontal-out)`.
    fn cross(&self, s: &TwistedState, c: usize) -> (u8, u8, u8, u8) {
        let n = self.n;
        let i2 = s.hout[((c + n - 1) % n) * self.m + self.m - 1];
        let i1 = s.hout[(c % n) * self.m + self.m - 1];
        (i2, i1, s.k2, s.k1)
    }

    /// Gibbs weight with the cross at level `c` (zero if invalid).
    pub fn weight(&self, s: &TwistedState, c: usize) -> S {
        let (a, b, cc, d) = self.cross(s, c);
        let mut wt = arrow_weight(&self.x, a, b, cc, d);
        if wt.is_zero() {
            return wt;
        }
        for y in 0..self.n {
            let w = if y == c % self.n { &self.wu } else { &self.wv };
            for x in 0..self.m {
                let vi = self.vin(s, x, y);
                let vo = self.vin(s, x, y + 1);
                let hi = self.hin(s, c, x, y);
                let ho = s.hout[y * self.m + x];
                wt = wt * arrow_weight(w, vi, hi, vo, ho);
                if wt.is_zero() {
                    return wt;
                }
            }
        }
        wt
    }

    /// All states with positive weight, cross at level `c`.
    pub fn enumerate(&self, c: usize) -> Vec<(TwistedState, S)> {
        let (m, n) = (self.m, self.n);
        let mut out = Vec::new();
        for vbits in 0..1u32 << (m * n) {
            let v: Vec<u8> = (0..m * n).map(|i| ((vbits >> i) & 1) as u8).collect();
            for lbits in 0..1u32 << n {
                // lbits: left-in of every row; rows c, c+1 give k1, k2.
                let mut hout = vec![0u8; m * n];
                let mut ok = true;
                for y in 0..n {
                    let mut h = ((lbits >> y) & 1) as u8;
                    for x in 0..m {
                        let s = v[x * n + y] as i32 + h as i32 - v[x * n + (y + 1) % n] as i32;
                        if !(0..=1).contains(&s) {
                            ok = false;
                            break;
                        }
                        h = s as u8;
                        hout[y * m + x] = h;
                    }
                    if !ok {
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                let st = TwistedState {
                    v: v.clone(),
                    hout,
                    k1: ((lbits >> (c % n)) & 1) as u8,
                    k2: ((lbits >> ((c + 1) % n)) & 1) as u8,
                };
                // the remaining left-ins must match the helix
                let helix_ok = (0..n).all(|y| self.hin(&st, c, 0, y) == ((lbits >> y) & 1) as u8);
                if !helix_ok {
                    continue;
                }
                let w = self.weight(&st, c);
                if !w.is_zero() {
                    out.push((st, w));
                }
            }
        }
        out
    }

    /// Drag the cross at level `c` through rows `c`, `c + 1`; returns the law of the
    /// state with the cross at level `c + 1`.
    pub fn drag(&self, s: &TwistedState, c: usize, table: &BijTable<S>) -> Result<Vec<(TwistedState, S)>> {
        let (m, n) = (self.m, self.n);
        let (yb, yt, y2) = (c % n, (c + 1) % n, (c + 2) % n);
        let (i2, i1, _, _) = self.cross(s, c);
        let mut cur: Vec<(TwistedState, u8, u8, S)> = vec![(s.clone(), i1, i2, S::one())];
        for x in 0..m {
            let k = [self.hin(s, c, x, yb), self.hin(s, c, x, yt), self.vin(s, x, yt)];
            let j = [s.hout[yb * m + x], s.hout[yt * m + x], self.vin(s, x, y2)];
            let i3 = self.vin(s, x, yb);
            let mut next = Vec::new();
            for (st, a1, a2, p) in cur {
                let e = table.entry([a1, a2, i3], j);
                let ia = e.lhs.iter().position(|(t, _)| *t == k).ok_or(Error::Consistency("zero-weight drag state"))?;
                for (b, (kp, _)) in e.rhs.iter().enumerate() {
                    let pf = e.fwd[ia][b].clone();
                    if pf.is_zero() {
                        continue;
                    }
                    let mut ns = st.clone();
                    ns.v[x * n + yt] = kp[2];
                    ns.hout[yb * m + x] = kp[1];
                    ns.hout[yt * m + x] = kp[0];
                    next.push((ns, kp[0], kp[1], p.clone() * pf));
                }
            }
            cur = next;
        }
        let (jb, jt) = (s.hout[yb * m + m - 1], s.hout[yt * m + m - 1]);
        let mut out: Vec<(TwistedState, S)> = Vec::new();
        for (mut st, _, _, p) in cur {
            st.k1 = jb;
            st.k2 = jt;
            if let Some(e) = out.iter_mut().find(|(t, _)| *t == st) {
                e.1 = e.1.clone() + p;
            } else {
                out.push((st, p));
            }
        }
        Ok(out)
    }
}

/// Full-sweep chain on the twisted torus.
#[derive(Debug, Clone)]
pub struct TwistedChain<S> {
    pub states: Vec<TwistedState>,
    pub gibbs: Vec<S>,
    /// Dense row-stochastic matrix of one full sweep.
    pub matrix: Vec<Vec<S>>,
    /// Per drag step `c`: largest `|μ_c P_c - μ_{c+1}|` relative to total mass.
    pub step_residuals: Vec<S>,
    /// Connected blocks of the sweep matrix.
    pub blocks: Vec<Vec<usize>>,
}

impl<S: Scalar> TwistedChain<S> {
    pub fn max_row_deviation(&self) -> S {
        self.matrix.iter().fold(S::zero(), |m, row| {
            let d = (row.iter().fold(S::zero(), |a, x| a + x.clone()) - S::one()).abs_val();
            if d > m { d } else { m }
        })
    }

    /// Per block: `max_j |(μ L)_j - μ_j| / μ(block)`.
    pub fn block_residuals(&self) -> Vec<S> {
        let n = self.states.len();
        let mut res = Vec::new();
        for blk in &self.blocks {
            let mass = blk.iter().fold(S::zero(), |a, &i| a + self.gibbs[i].clone());
            let mut worst = S::zero();
            for &j in blk {
                let mut s = S::zero();
                for i in 0..n {
                    if !self.matrix[i][j].is_zero() {
                        s = s + self.gibbs[i].clone() * self.matrix[i][j].clone();
                    }
                }
                let d = (s - self.gibbs[j].clone()).abs_val() / mass.clone();
                if d > worst {
                    worst = d;
                }
            }
            res.push(worst);
        }
        res
    }
}

/// Build the sweep matrix and Gibbs vector on an `m x n` twisted torus.
pub fn twisted_chain_matrix<S: Scalar>(m: usize, n: usize, q: &S, u: &S, eps: &S) -> Result<TwistedChain<S>> {
    if !(eps.to_f64() > 0.0 && u.to_f64() + eps.to_f64() < 1.0) {
        return Err(Error::ParameterDomain("need 0 < eps < 1 - u"));
    }
    let tt = TwistedTorus::new(m, n, q, u, eps)?;
    let v = u.clone() + eps.clone();
    let table = derive_bij_table(q, u, &v)?;
    let levels: Vec<Vec<(TwistedState, S)>> = (0..n).map(|c| tt.enumerate(c)).collect();
    let idx: Vec<BTreeMap<TwistedState, usize>> =
        levels.iter().map(|l| l.iter().enumerate().map(|(i, (s, _))| (s.clone(), i)).collect()).collect();
    let size0 = levels[0].len();
    // distribution over level-c states for each start state
    let mut mat: Vec<Vec<S>> = (0..size0)
        .map(|i| {
            let mut r = vec![S::zero(); size0];
            r[i] = S::one();
            r
        })
        .collect();
    let mut step_residuals = Vec::new();
    for c in 0..n {
        let from = &levels[c];
        let to_idx = &idx[(c + 1) % n];
        let to_len = levels[(c + 1) % n].len();
        let mut step: Vec<Vec<(usize, S)>> = Vec::with_capacity(from.len());
        for (s, _) in from {
            let mut row = Vec::new();
            for (t, p) in tt.drag(s, c, &table)? {
                let j = *to_idx.get(&t).ok_or(Error::Consistency("drag produced a state outside the ensemble"))?;
                row.push((j, p));
            }
            step.push(row);
        }
        // μ_c P_c against μ_{c+1}
        let mut pushed = vec![S::zero(); to_len];
        let mut mass = S::zero();
        for (i, (_, w)) in from.iter().enumerate() {
            mass = mass + w.clone();
            for (j, p) in &step[i] {
                pushed[*j] = pushed[*j].clone() + w.clone() * p.clone();
            }
        }
        let worst = levels[(c + 1) % n]
            .iter()
            .enumerate()
            .fold(S::zero(), |acc, (j, (_, w))| {
                let d = (pushed[j].clone() - w.clone()).abs_val() / mass.clone();
                if d > acc { d } else { acc }
            });
        step_residuals.push(worst);
        mat = mat
            .iter()
            .map(|r| {
                let mut nr = vec![S::zero(); to_len];
                for (i, pi) in r.iter().enumerate() {
                    if pi.is_zero() {
                        continue;
                    }
                    for (j, p) in &step[i] {
                        nr[*j] = nr[*j].clone() + pi.clone() * p.clone();
                    }
                }
                nr
            })
            .collect();
    }
    let gibbs: Vec<S> = levels[0].iter().map(|(_, w)| w.clone()).collect();
    let states: Vec<TwistedState> = levels[0].iter().map(|(s, _)| s.clone()).collect();
    let blocks = components(&mat);
    Ok(TwistedChain { states, gibbs, matrix: mat, step_residuals, blocks })
}

fn components<S: Scalar>(mat: &[Vec<S>]) -> Vec<Vec<usize>> {
    let n = mat.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..n {
            if !mat[i][j].is_zero() {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Configurations of the helical torus (no cross) with their weights at a single
/// spectral parameter: the right end of row `y` feeds the left end of row `y + 1`.
pub fn enum_helical_torus<S: Scalar>(m: usize, n: usize, w: &[S; 6]) -> Result<Vec<(Vec<u8>, Vec<u8>, S)>> {
    if m * n > 12 || n == 0 || m == 0 {
        return Err(Error::Resource("helical torus enumeration supports m n <= 12"));
    }
    let mut out = Vec::new();
    for vbits in 0..1u32 << (m * n) {
        let v: Vec<u8> = (0..m * n).map(|i| ((vbits >> i) & 1) as u8).collect();
        for h0 in 0..2u8 {
            // follow the single helix from row 0's left end
            let mut hout = vec![0u8; m * n];
            let mut h = h0;
            let mut wt = S::one();
            let mut ok = true;
            'rows: for y in 0..n {
                for x in 0..m {
                    let vi = v[x * n + y];
                    let vo = v[x * n + (y + 1) % n];
                    let s = vi as i32 + h as i32 - vo as i32;
                    if !(0..=1).contains(&s) {
                        ok = false;
                        break 'rows;
                    }
                    wt = wt * arrow_weight(w, vi, h, vo, s as u8);
                    h = s as u8;
                    hout[y * m + x] = h;
                }
            }
            if ok && h == h0 && !wt.is_zero() {
                out.push((v.clone(), hout, wt));
            }
        }
    }
    Ok(out)
}

/// Dense matrix exponential by scaling and squaring with a Taylor series.
pub fn expm(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let norm = a.iter().map(|r| r.iter().map(|x| libm::fabs(*x)).sum::<f64>()).fold(0.0, f64::max);
    let mut s = 0;
    while norm / (1u64 << s) as f64 > 0.5 {
        s += 1;
    }
    let scale = 1.0 / (1u64 << s) as f64;
    let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
    let mut result: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut term = result.clone();
    for k in 1..=20 {
        term = mat_mul(&term, &b);
        term.iter_mut().for_each(|r| r.iter_mut().for_each(|x| *x /= k as f64));
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = mat_mul(&result, &result);
    }
    result
}

//! Yang-Baxter equation and its bijectivisation.
//!
//! A boundary condition is `I = (i1, i2, i3)`, `J = (j1, j2, j3)`, with internal
//! states `K = (k1, k2, k3)`. The left side is
//! `X(i2,i1;k2,k1) w_u(i3,k1;k3,j1) w_v(k3,k2;j3,j2)` and the right side is
//! `w_v(i3,i2;k3,k2) w_u(k3,i1;j3,k1) X(k2,k1;j2,j1)`, where `X` is the
//! stochastic weight at spectral parameter `u/v` and triples are in
//! `(vertical-in, horizontal-in; vertical-out, horizontal-out)` order.
//!
//! In the two-row picture: `i1`/`i2` are the cross inputs feeding the top and
//! bottom rows, `i3` the vertical edge entering the bottom row, `j1`/`j2` the
//! right outputs of the bottom and top rows, `j3` the vertical edge leaving the
//! top row, and `k3` the vertical edge between the rows.

use alloc::vec::Vec;

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::lattice::{arrow_weight, stochastic_weights_s};
use crate::scalar::{rat, Scalar};

/// Bit triple `(b1, b2, b3)`.
pub type Triple = [u8; 3];

/// Packs a triple into `0..8` as `b1 + 2 b2 + 4 b3`.
#[inline]
pub const fn triple_index(t: Triple) -> usize {
    (t[0] as usize) | ((t[1] as usize) << 1) | ((t[2] as usize) << 2)
}

#[inline]
pub const fn triple_from_index(i: usize) -> Triple {
    [(i & 1) as u8, ((i >> 1) & 1) as u8, ((i >> 2) & 1) as u8]
}

/// Row weights at `u`, `v` and cross weights at `u/v`.
#[derive(Debug, Clone)]
pub struct YbeWeights<S> {
    pub wu: [S; 6],
    pub wv: [S; 6],
    pub x: [S; 6],
}

impl<S: Scalar> YbeWeights<S> {
    pub fn new(q: &S, u: &S, v: &S) -> Self {
        YbeWeights {
            wu: stochastic_weights_s(q, u),
            wv: stochastic_weights_s(q, v),
            x: stochastic_weights_s(q, &(u.clone() / v.clone())),
        }
    }
}

/// Nonzero terms of both sides of the equation for one boundary condition.
pub fn ybe_sides_w<S: Scalar>(i: Triple, j: Triple, w: &YbeWeights<S>) -> (Vec<(Triple, S)>, Vec<(Triple, S)>) {
    let [i1, i2, i3] = i;
    let [j1, j2, j3] = j;
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for idx in 0..8 {
        let k = triple_from_index(idx);
        let [k1, k2, k3] = k;
        let l = arrow_weight(&w.x, i2, i1, k2, k1)
            * arrow_weight(&w.wu, i3, k1, k3, j1)
            * arrow_weight(&w.wv, k3, k2, j3, j2);
        if !l.is_zero() {
            lhs.push((k, l));
        }
        let r = arrow_weight(&w.wv, i3, i2, k3, k2)
            * arrow_weight(&w.wu, k3, i1, j3, k1)
            * arrow_weight(&w.x, k2, k1, j2, j1);
        if !r.is_zero() {
            rhs.push((k, r));
        }
    }
    (lhs, rhs)
}

/// Convenience wrapper over [`ybe_sides_w`].
pub fn ybe_sides<S: Scalar>(i: Triple, j: Triple, q: &S, u: &S, v: &S) -> (Vec<(Triple, S)>, Vec<(Triple, S)>) {
    ybe_sides_w(i, j, &YbeWeights::new(q, u, v))
}

fn check_order(u: f64, v: f64) -> Result<()> {
    if !(u > 0.0 && u < v && v < 1.0) {
        return Err(Error::Ordering { lower: u, upper: v });
    }
    Ok(())
}

/// The three nontrivial transition probabilities.
pub fn alpha_beta_gamma<S: Scalar>(q: &S, u: &S, v: &S) -> Result<(S, S, S)> {
    check_order(u.to_f64(), v.to_f64())?;
    if !(q.to_f64() >= 0.0 && q.to_f64() < 1.0) {
        return Err(Error::ParameterDomain("q must lie in [0,1)"));
    }
    let one = S::one();
    let qu = q.clone() * u.clone();
    let qv = q.clone() * v.clone();
    let a = (one.clone() - q.clone()) * (one.clone() - qu.clone()) * v.clone()
        / ((one.clone() - qv.clone()) * (v.clone() - qu.clone()));
    let b = (one.clone() - q.clone()) * (one.clone() - v.clone()) * u.clone()
        / ((one.clone() - u.clone()) * (v.clone() - qu.clone()));
    let g = (one.clone() - v.clone()) * (one.clone() - qu) / ((one.clone() - u.clone()) * (one - qv));
    Ok((a, b, g))
}

/// Classification of a boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BijCase {
    Incompatible,
    /// At least one side has a single term.
    OneToTwo,
    /// Both sides have two terms, matched by equal weights.
    TwoToTwo,
}

/// Bijectivisation data for one `(I, J)`.
#[derive(Debug, Clone)]
pub struct BijEntry<S> {
    pub i: Triple,
    pub j: Triple,
    pub lhs: Vec<(Triple, S)>,
    pub rhs: Vec<(Triple, S)>,
    /// `fwd[a][b]`: left state `a` to right state `b`.
    pub fwd: Vec<Vec<S>>,
    /// `bwd[b][a]`.
    pub bwd: Vec<Vec<S>>,
    pub case: BijCase,
    /// Float mode only: two-to-two weights that matched within tolerance but not exactly.
    pub near_tie: bool,
}

impl<S: Scalar> BijEntry<S> {
    /// Forward probability from left state `a` to right state `b` (zero if absent).
    pub fn p_fwd(&self, a: Triple, b: Triple) -> S {
        let ia = self.lhs.iter().position(|(k, _)| *k == a);
        let ib = self.rhs.iter().position(|(k, _)| *k == b);
        match (ia, ib) {
            (Some(x), Some(y)) => self.fwd[x][y].clone(),
            _ => S::zero(),
        }
    }

    pub fn residual(&self) -> S {
        let sl = self.lhs.iter().fold(S::zero(), |acc, (_, w)| acc + w.clone());
        let sr = self.rhs.iter().fold(S::zero(), |acc, (_, w)| acc + w.clone());
        (sl - sr).abs_val()
    }
}

/// Full table over the 64 boundary conditions, indexed `triple_index(I) * 8 + triple_index(J)`.
#[derive(Debug, Clone)]
pub struct BijTable<S> {
    pub entries: Vec<BijEntry<S>>,
}

impl<S: Scalar> BijTable<S> {
    #[inline]
    pub fn entry(&self, i: Triple, j: Triple) -> &BijEntry<S> {
        &self.entries[triple_index(i) * 8 + triple_index(j)]
    }
}

/// Relative tolerance for two-to-two weight matching in float mode.
pub const TIE_TOL: f64 = 1e-10;

/// Solve the bijectivisation system for every boundary condition.
pub fn derive_bij_table<S: Scalar>(q: &S, u: &S, v: &S) -> Result<BijTable<S>> {
    check_order(u.to_f64(), v.to_f64())?;
    let w = YbeWeights::new(q, u, v);
    let mut entries = Vec::with_capacity(64);
    for ii in 0..8 {
        for jj in 0..8 {
            let (i, j) = (triple_from_index(ii), triple_from_index(jj));
            let (lhs, rhs) = ybe_sides_w(i, j, &w);
            entries.push(solve_entry(i, j, lhs, rhs)?);
        }
    }
    Ok(BijTable { entries })
}

fn solve_entry<S: Scalar>(i: Triple, j: Triple, lhs: Vec<(Triple, S)>, rhs: Vec<(Triple, S)>) -> Result<BijEntry<S>> {
    let (na, nb) = (lhs.len(), rhs.len());
    let zeros = |r: usize, c: usize| -> Vec<Vec<S>> { (0..r).map(|_| (0..c).map(|_| S::zero()).collect()).collect() };
    let mut fwd = zeros(na, nb);
    let mut near_tie = false;
    let case = if na == 0 || nb == 0 {
        if na != nb {
            return Err(Error::Consistency("one side of the equation is empty"));
        }
        BijCase::Incompatible
    } else if na == 1 {
        for (b, (_, wb)) in rhs.iter().enumerate() {
            fwd[0][b] = wb.clone() / lhs[0].1.clone();
        }
        BijCase::OneToTwo
    } else if nb == 1 {
        for row in fwd.iter_mut() {
            row[0] = S::one();
        }
        BijCase::OneToTwo
    } else if na == 2 && nb == 2 {
        let straight = lhs[0].1.matches(&rhs[0].1, TIE_TOL) && lhs[1].1.matches(&rhs[1].1, TIE_TOL);
        let crossed = lhs[0].1.matches(&rhs[1].1, TIE_TOL) && lhs[1].1.matches(&rhs[0].1, TIE_TOL);
        if straight {
            fwd[0][0] = S::one();
            fwd[1][1] = S::one();
            near_tie = !S::EXACT && (lhs[0].1 != rhs[0].1 || lhs[1].1 != rhs[1].1);
        } else if crossed {
            fwd[0][1] = S::one();
            fwd[1][0] = S::one();
            near_tie = !S::EXACT && (lhs[0].1 != rhs[1].1 || lhs[1].1 != rhs[0].1);
        } else {
            return Err(Error::Consistency("two-to-two case without matching weights"));
        }
        BijCase::TwoToTwo
    } else {
        return Err(Error::Consistency("more than two terms on one side"));
    };
    // p_bwd(b -> a) = w(a) p_fwd(a -> b) / w(b)
    let mut bwd = zeros(nb, na);
    for b in 0..nb {
        for a in 0..na {
            bwd[b][a] = lhs[a].1.clone() * fwd[a][b].clone() / rhs[b].1.clone();
        }
    }
    for row in fwd.iter().chain(bwd.iter()) {
        if row.iter().any(|p| p.to_f64() < -1e-12 || p.to_f64() > 1.0 + 1e-12) {
            return Err(Error::Consistency("bijectivisation probability outside [0,1]"));
        }
    }
    Ok(BijEntry { i, j, lhs, rhs, fwd, bwd, case, near_tie })
}

/// Exact table at a fixed rational point, used to derive pattern data.
pub fn reference_table() -> BijTable<BigRational> {
    derive_bij_table(&rat(1, 4), &rat(1, 2), &rat(3, 4)).expect("reference point is admissible")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trivial_sides() {
        let (l, r) = ybe_sides([0, 0, 0], [0, 0, 0], &rat(1, 4), &rat(1, 2), &rat(3, 4));
        assert_eq!(l, alloc::vec![([0, 0, 0], rat(1, 1))]);
        assert_eq!(r, alloc::vec![([0, 0, 0], rat(1, 1))]);
        let (l, r) = ybe_sides([1, 0, 0], [0, 0, 0], &0.25, &0.5, &0.75);
        assert!(l.is_empty() && r.is_empty());
    }

    #[test]
    fn ybe_exact_at_reference_point() {
        let t = reference_table();
        for e in &t.entries {
            assert_eq!(e.residual(), rat(0, 1), "I={:?} J={:?}", e.i, e.j);
            assert!(e.lhs.len() <= 2 && e.rhs.len() <= 2);
            let si: u8 = e.i.iter().sum();
            let sj: u8 = e.j.iter().sum();
            if si != sj {
                assert_eq!(e.case, BijCase::Incompatible);
            }
        }
    }

    #[test]
    fn abg_reference_values() {
        let (a, b, g) = alpha_beta_gamma(&rat(1, 4), &rat(1, 2), &rat(3, 4)).unwrap();
        assert_eq!((a, b, g), (rat(63, 65), rat(3, 10), rat(7, 13)));
        assert!(alpha_beta_gamma(&0.25, &0.5, &0.5).is_err());
        assert!(alpha_beta_gamma(&0.25, &0.6, &0.5).is_err());
        let (a, b, g) = alpha_beta_gamma(&0.25, &0.5, &(0.5 + 1e-12)).unwrap();
        assert!((a - 1.0).abs() < 1e-9 && (b - 1.0).abs() < 1e-9 && (g - 1.0).abs() < 1e-9);
    }

    #[test]
    fn abg_slopes_match_rates() {
        // Independent closed forms for the v-derivatives at v = u.
        for &(q, u) in &[(0.25f64, 0.5f64), (0.1, 0.3), (0.7, 0.8)] {
            let ra = (1.0 - u) * q / ((1.0 - q) * (1.0 - q * u) * u);
            let rb = (1.0 - q * u) / ((1.0 - u) * (1.0 - q) * u);
            let rc = (1.0 - q) / ((1.0 - u) * (1.0 - q * u));
            let h = 1e-6;
            let (a, b, g) = alpha_beta_gamma(&q, &u, &(u + h)).unwrap();
            for (p, r) in [(a, ra), (b, rb), (g, rc)] {
                let slope = (p - 1.0) / h;
                assert!(((slope + r) / r).abs() < 1e-4, "slope {slope} vs {r}");
            }
        }
    }

    #[test]
    fn identity_and_coin_entries() {
        let t = reference_table();
        let e = t.entry([0, 0, 0], [0, 0, 0]);
        assert_eq!(e.p_fwd([0, 0, 0], [0, 0, 0]), rat(1, 1));
        // The reference table contains exactly the six coin values at the seed patterns.
        let (a, b, g) = alpha_beta_gamma(&rat(1, 4), &rat(1, 2), &rat(3, 4)).unwrap();
        let one = rat(1, 1);
        let mut found_g = false;
        for e in &t.entries {
            for row in &e.fwd {
                for p in row {
                    let allowed = [&a, &b, &g].iter().any(|x| *x == p || one.clone() - (*x).clone() == *p)
                        || *p == rat(0, 1)
                        || *p == one;
                    assert!(allowed, "unexpected probability {p}");
                    found_g |= *p == one.clone() - g.clone();
                }
            }
        }
        assert!(found_g);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn ybe_and_bij_float(q in 0.0f64..0.95, u in 0.02f64..0.9, dv in 0.01f64..1.0) {
            let v = u + dv * (0.99 - u);
            let t = derive_bij_table(&q, &u, &v).unwrap();
            for e in &t.entries {
                let scale = e.lhs.iter().map(|x| x.1).fold(1.0, f64::max);
                prop_assert!(e.residual() < 1e-12 * scale);
                for row in &e.fwd { prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-13); }
                for row in &e.bwd { prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12); }
                for (a, (_, wa)) in e.lhs.iter().enumerate() {
                    for (b, (_, wb)) in e.rhs.iter().enumerate() {
                        prop_assert!((wa * e.fwd[a][b] - wb * e.bwd[b][a]).abs() < 1e-12);
                    }
                }
                if e.case == BijCase::TwoToTwo {
                    let mut l: Vec<f64> = e.lhs.iter().map(|x| x.1).collect();
                    let mut r: Vec<f64> = e.rhs.iter().map(|x| x.1).collect();
                    l.sort_by(f64::total_cmp);
                    r.sort_by(f64::total_cmp);
                    prop_assert!((l[0] - r[0]).abs() < 1e-12 && (l[1] - r[1]).abs() < 1e-12);
                }
            }
        }
    }
}

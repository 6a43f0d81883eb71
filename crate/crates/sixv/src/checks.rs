//! Exact and floating-point verification checks behind `sixv verify`.
//!
//! Every check returns a [`CheckReport`]; `passed` compares `max_residual`
//! against `tolerance` and any extra structural condition of the check.

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use sixv_core::dynamics::RateSet;
use sixv_core::exact::{
    enum_torus, generator_matrix, mat_mul, nxy_coefficients, row_operator_matrix, stationarity_residual,
    twisted_chain_matrix, two_row_swap_residual, RowOp,
};
use sixv_core::jump::{seed_flip, SeedTable};
use sixv_core::lattice::{stochastic_weights, stochastic_weights_s, VertexKind, WeightParams};
use sixv_core::sampler::random_torus;
use sixv_core::scalar::{rat, Scalar};
use sixv_core::ybe::{alpha_beta_gamma, derive_bij_table, triple_index, BijCase, BijTable};

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub passed: bool,
    pub max_residual: f64,
    pub tolerance: f64,
    pub summary: String,
    pub details: serde_json::Value,
}

impl CheckReport {
    fn new(check: &str, max_residual: f64, tolerance: f64, extra_ok: bool, summary: String, details: serde_json::Value) -> Self {
        CheckReport {
            check: check.into(),
            passed: extra_ok && max_residual.is_finite() && max_residual < tolerance,
            max_residual,
            tolerance,
            summary,
            details,
        }
    }
}

/// Exact-or-float triple of parameters.
#[derive(Debug, Clone)]
pub struct Point {
    pub f: [f64; 3],
    pub exact: Option<[BigRational; 3]>,
}

impl Point {
    pub fn float(a: f64, b: f64, c: f64) -> Point {
        Point { f: [a, b, c], exact: None }
    }
    pub fn ratio(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> Point {
        let e = [rat(a.0, a.1), rat(b.0, b.1), rat(c.0, c.1)];
        Point { f: [e[0].to_f64(), e[1].to_f64(), e[2].to_f64()], exact: Some(e) }
    }
}

fn case_tag(c: BijCase) -> &'static str {
    match c {
        BijCase::Incompatible => "incompatible",
        BijCase::OneToTwo => "one_to_two",
        BijCase::TwoToTwo => "two_to_two",
    }
}

/// `(max |LHS - RHS|, max row-sum deviation, max terms per side, near ties)`.
fn table_stats<S: Scalar>(t: &BijTable<S>) -> (f64, f64, usize, usize) {
    let mut res = 0.0f64;
    let mut rows = 0.0f64;
    let mut terms = 0;
    let mut ties = 0;
    for e in &t.entries {
        res = res.max(e.residual().to_f64());
        terms = terms.max(e.lhs.len()).max(e.rhs.len());
        ties += e.near_tie as usize;
        for r in e.fwd.iter().chain(e.bwd.iter()) {
            let s = r.iter().fold(S::zero(), |a, x| a + x.clone());
            rows = rows.max((s - S::one()).abs_val().to_f64());
        }
    }
    (res, rows, terms, ties)
}

fn random_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let q = rng.random::<f64>() * 0.95;
    let mut u = 0.01 + 0.98 * rng.random::<f64>();
    let mut v = 0.01 + 0.98 * rng.random::<f64>();
    if u > v {
        std::mem::swap(&mut u, &mut v);
    }
    if v - u < 1e-3 {
        v = (u + 1e-3).min(0.999);
    }
    [q, u, v]
}

/// Yang-Baxter identity at one point, with per-boundary-condition detail.
pub fn ybe_point(p: &Point) -> anyhow::Result<CheckReport> {
    let [q, u, v] = p.f;
    let t = derive_bij_table(&q, &u, &v)?;
    let (res, rows, terms, ties) = table_stats(&t);
    let per: Vec<_> = t
        .entries
        .iter()
        .map(|e| {
            json!({
                "i": e.i, "j": e.j,
                "index": triple_index(e.i) * 8 + triple_index(e.j),
                "lhs_terms": e.lhs.len(), "rhs_terms": e.rhs.len(),
                "residual": e.residual(), "case": case_tag(e.case), "near_tie": e.near_tie,
            })
        })
        .collect();
    let mut exact_res = None;
    if let Some([qe, ue, ve]) = &p.exact {
        let te = derive_bij_table(qe, ue, ve)?;
        let (r, rs, _, _) = table_stats(&te);
        exact_res = Some(r.max(rs));
    }
    let worst = res.max(exact_res.unwrap_or(0.0));
    Ok(CheckReport::new(
        "ybe",
        worst,
        1e-12,
        terms <= 2 && exact_res.is_none_or(|r| r == 0.0),
        format!("max |LHS-RHS| {res:.3e}, max terms per side {terms}, near ties {ties}"),
        json!({ "q": q, "u": u, "v": v, "exact_residual": exact_res, "max_row_sum_deviation": rows,
                "max_terms": terms, "near_ties": ties, "entries": per }),
    ))
}

/// Yang-Baxter identity over `n` random points with `0 < u < v < 1`.
pub fn ybe_random(n: usize, seed: u64) -> anyhow::Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut res, mut rows, mut terms, mut ties) = (0.0f64, 0.0f64, 0usize, 0usize);
    for _ in 0..n {
        let [q, u, v] = random_point(&mut rng);
        let t = derive_bij_table(&q, &u, &v)?;
        let s = table_stats(&t);
        res = res.max(s.0);
        rows = rows.max(s.1);
        terms = terms.max(s.2);
        ties += s.3;
    }
    Ok(CheckReport::new(
        "ybe",
        res,
        1e-12,
        terms <= 2,
        format!("{n} points x 64 boundary conditions: max |LHS-RHS| {res:.3e}, max terms {terms}"),
        json!({ "points": n, "seed": seed, "max_row_sum_deviation": rows, "max_terms": terms, "near_ties": ties }),
    ))
}

fn flip_check(p: &[BigRational; 3], seeds: &SeedTable) -> anyhow::Result<(usize, bool)> {
    let [q, u, v] = p;
    let t = derive_bij_table(q, u, v)?;
    let (a, b, g) = alpha_beta_gamma(q, u, v)?;
    let one = BigRational::from_ratio(1, 1);
    let coin = [one.clone() - a, one.clone() - b, one - g];
    let mut n = 0;
    let mut ok = true;
    for lo in VertexKind::ALL {
        for up in VertexKind::ALL {
            let got = seed_flip(&t, lo, up)?;
            match (got, seeds.lookup(lo, up)) {
                (Some((d, pr)), Some((d2, c))) => {
                    n += 1;
                    ok &= d == d2 && pr == coin[c.index()];
                }
                (None, None) => {}
                _ => ok = false,
            }
        }
    }
    Ok((n, ok && n == 6))
}

/// Bijectivisation: sum-to-one of forward and backward probabilities,
/// detailed reversibility, range, and the seed flip probabilities.
pub fn bij(n: usize, seed: u64, exact_points: &[Point]) -> anyhow::Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut range_dev = 0.0f64;
    for _ in 0..n {
        let [q, u, v] = random_point(&mut rng);
        let t = derive_bij_table(&q, &u, &v)?;
        for e in &t.entries {
            for r in e.fwd.iter().chain(e.bwd.iter()) {
                worst = worst.max((r.iter().sum::<f64>() - 1.0).abs());
                // float rounding can put an entry a few ulps outside [0, 1]
                range_dev = r.iter().fold(range_dev, |m, &p| m.max(-p).max(p - 1.0));
            }
            for (a, (_, wa)) in e.lhs.iter().enumerate() {
                for (b, (_, wb)) in e.rhs.iter().enumerate() {
                    let d = (wa * e.fwd[a][b] - wb * e.bwd[b][a]).abs();
                    worst = worst.max(d);
                }
            }
        }
    }
    let range_ok = range_dev <= 1e-12;
    worst = worst.max(range_dev);
    let seeds = SeedTable::derive()?;
    let mut flips = Vec::new();
    let mut flips_ok = true;
    for p in exact_points {
        let e = p.exact.as_ref().ok_or_else(|| anyhow::anyhow!("seed flip check needs rational points"))?;
        let (k, ok) = flip_check(e, &seeds)?;
        flips_ok &= ok;
        flips.push(json!({ "q": p.f[0], "u": p.f[1], "v": p.f[2], "seeds": k, "match": ok }));
    }
    Ok(CheckReport::new(
        "bij",
        worst,
        1e-12,
        range_ok && flips_ok,
        format!("{n} float points: max deviation {worst:.3e}, range ok {range_ok}; seed flips exact at {} rational points: {flips_ok}", exact_points.len()),
        json!({ "points": n, "seed": seed, "range_ok": range_ok, "flip_points": flips }),
    ))
}

/// Cross-dragging identity on two rows, both boundary variants.
pub fn two_row_swap(p: &Point, h: usize) -> anyhow::Result<CheckReport> {
    let [q, u, v] = p.f;
    let b = two_row_swap_residual(&q, &u, &v, h, true)?;
    let a = two_row_swap_residual(&q, &u, &v, h, false)?;
    let mut exact = None;
    if let Some([qe, ue, ve]) = &p.exact {
        let be = two_row_swap_residual(qe, ue, ve, h, true)?;
        let ae = two_row_swap_residual(qe, ue, ve, h, false)?;
        exact = Some(be.to_f64().max(ae.to_f64()));
    }
    let worst = a.max(b).max(exact.unwrap_or(0.0));
    Ok(CheckReport::new(
        "two-row-swap",
        worst,
        1e-12,
        exact.is_none_or(|e| e == 0.0),
        format!("h={h}: B-type {b:.3e}, A-type {a:.3e}, exact {exact:?}"),
        json!({ "q": q, "u": u, "v": v, "h": h, "b_type": b, "a_type": a, "exact": exact }),
    ))
}

fn sector_json(k: (usize, usize), states: usize, residual: f64, row: f64) -> serde_json::Value {
    json!({ "k1": k.0, "k2": k.1, "states": states, "residual": residual, "max_row_sum": row })
}

/// Generator stationarity of the torus Gibbs measure on every sector.
/// Stochastic weights run in exact arithmetic when the point is rational.
pub fn torus_stationarity_stochastic(m: usize, n: usize, q: (i64, i64), u: (i64, i64)) -> anyhow::Result<CheckReport> {
    let (qe, ue) = (rat(q.0, q.1), rat(u.0, u.1));
    let w = stochastic_weights_s(&qe, &ue);
    let ens = enum_torus(m, n, &w)?;
    let r = RateSet::stochastic(qe.to_f64(), ue.to_f64())?;
    // exact rates at a rational point
    let one = BigRational::from_ratio(1, 1);
    let (oq, ou) = (one.clone() - qe.clone(), one.clone() - ue.clone());
    let qu = one - qe.clone() * ue.clone();
    let rates = [
        ou.clone() * qe.clone() / (oq.clone() * qu.clone() * ue.clone()),
        qu.clone() / (ou.clone() * oq.clone() * ue.clone()),
        oq / (ou * qu),
    ];
    let drift = (rates[0].to_f64() - r.a).abs().max((rates[1].to_f64() - r.b).abs()).max((rates[2].to_f64() - r.c).abs());
    let seeds = SeedTable::derive()?;
    let mut worst = 0.0f64;
    let mut rows_ok = true;
    let mut per = Vec::new();
    for k in ens.sector_labels() {
        let g = generator_matrix(&ens, k, &rates, &seeds)?;
        let res = stationarity_residual(&ens, &g).to_f64();
        let row = g.max_row_sum().to_f64();
        rows_ok &= row == 0.0;
        worst = worst.max(res);
        per.push(sector_json(k, g.states.len(), res, row));
    }
    Ok(CheckReport::new(
        "torus-stationarity",
        worst,
        1e-10,
        rows_ok && drift < 1e-13,
        format!("{m}x{n} stochastic exact, {} sectors, {} configurations: max residual {worst:.3e}", per.len(), ens.len()),
        json!({ "weights": "stochastic", "m": m, "n": n, "q": qe.to_f64(), "u": ue.to_f64(), "sectors": per }),
    ))
}

/// Same with general weights and rates at scale `eta`, in floating point.
pub fn torus_stationarity_general(m: usize, n: usize, w: [f64; 6], eta: f64, max_sectors: Option<usize>) -> anyhow::Result<CheckReport> {
    let p = WeightParams::General { a1: w[0], a2: w[1], b1: w[2], b2: w[3], c1: w[4], c2: w[5] };
    let ens = enum_torus(m, n, &p.weights()?)?;
    let rates = RateSet::general(&p, eta)?.as_array();
    let seeds = SeedTable::derive()?;
    let mut worst = 0.0f64;
    let mut row_worst = 0.0f64;
    let mut per = Vec::new();
    let labels = ens.sector_labels();
    let take = max_sectors.unwrap_or(labels.len());
    for k in labels.into_iter().take(take) {
        let g = generator_matrix(&ens, k, &rates, &seeds)?;
        let res = stationarity_residual(&ens, &g);
        let row = g.max_row_sum();
        row_worst = row_worst.max(row);
        worst = worst.max(res);
        per.push(sector_json(k, g.states.len(), res, row));
    }
    Ok(CheckReport::new(
        "torus-stationarity",
        worst,
        1e-10,
        row_worst < 1e-13,
        format!("{m}x{n} weights {w:?}, {} sectors: max residual {worst:.3e}", per.len()),
        json!({ "weights": w, "eta": eta, "m": m, "n": n, "sectors": per }),
    ))
}

/// Exact stationarity of the discrete cross-dragging chain on a twisted torus.
pub fn twisted_chain(m: usize, n: usize, q: (i64, i64), u: (i64, i64), eps: (i64, i64)) -> anyhow::Result<CheckReport> {
    let c = twisted_chain_matrix(m, n, &rat(q.0, q.1), &rat(u.0, u.1), &rat(eps.0, eps.1))?;
    let blocks: Vec<f64> = c.block_residuals().iter().map(|r| r.to_f64()).collect();
    let steps: Vec<f64> = c.step_residuals.iter().map(|r| r.to_f64()).collect();
    let row = c.max_row_deviation().to_f64();
    let worst = blocks.iter().chain(steps.iter()).fold(0.0f64, |a, b| a.max(*b));
    Ok(CheckReport::new(
        "twisted-chain",
        worst,
        1e-10,
        row == 0.0,
        format!("{m}x{n}, {} states, {} blocks: max |muL - mu| {worst:.3e}, row deviation {row:.1e}", c.states.len(), blocks.len()),
        json!({ "m": m, "n": n, "states": c.states.len(), "block_residuals": blocks, "step_residuals": steps, "max_row_deviation": row }),
    ))
}

fn commutator(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (x, y) = (mat_mul(a, b), mat_mul(b, a));
    x.iter().zip(&y).flat_map(|(r, s)| r.iter().zip(s).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

/// Commutation of `B`, `A + C` and `B + D` at random `(q, u, v)`.
pub fn row_ops(points: usize, h: usize, seed: u64) -> anyhow::Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut b, mut ac, mut bd) = (0.0f64, 0.0f64, 0.0f64);
    let mut block_ok = true;
    for _ in 0..points {
        let [q, u, v] = random_point(&mut rng);
        let (wu, wv) = (stochastic_weights(q, u), stochastic_weights(q, v));
        let m = |op, w: &[f64; 6]| row_operator_matrix(op, w, h);
        let (bu, bv) = (m(RowOp::B, &wu)?, m(RowOp::B, &wv)?);
        for (nu, row) in bu.iter().enumerate() {
            for (lam, x) in row.iter().enumerate() {
                if *x != 0.0 && nu.count_ones() != lam.count_ones() + 1 {
                    block_ok = false;
                }
            }
        }
        b = b.max(commutator(&bu, &bv));
        ac = ac.max(commutator(&add(&m(RowOp::A, &wu)?, &m(RowOp::C, &wu)?), &add(&m(RowOp::A, &wv)?, &m(RowOp::C, &wv)?)));
        bd = bd.max(commutator(&add(&bu, &m(RowOp::D, &wu)?), &add(&bv, &m(RowOp::D, &wv)?)));
    }
    let worst = b.max(ac).max(bd);
    Ok(CheckReport::new(
        "row-ops",
        worst,
        1e-12,
        block_ok,
        format!("{points} points, h={h}: [B,B] {b:.2e}, [A+C,A+C] {ac:.2e}, [B+D,B+D] {bd:.2e}"),
        json!({ "points": points, "h": h, "seed": seed, "b": b, "a_plus_c": ac, "b_plus_d": bd, "b_raises_length": block_ok }),
    ))
}

/// Integer pair-count balance: every small torus exhaustively, then random
/// larger configurations.
pub fn nxy(exhaustive: &[(usize, usize)], random: usize, size: usize, seed: u64) -> anyhow::Result<CheckReport> {
    let w = stochastic_weights(0.3, 0.4);
    let mut bad = 0usize;
    let mut max_coef = 0i64;
    let mut per = Vec::new();
    let mut total = 0usize;
    for &(m, n) in exhaustive {
        let ens = enum_torus(m, n, &w)?;
        let mut nbad = 0;
        for g in &ens.configs {
            let c = nxy_coefficients(g)?;
            if c != [0, 0, 0] {
                nbad += 1;
                max_coef = max_coef.max(c.iter().map(|x| x.abs()).max().unwrap_or(0));
            }
        }
        bad += nbad;
        total += ens.len();
        per.push(json!({ "m": m, "n": n, "configurations": ens.len(), "nonzero": nbad }));
    }
    let mut rbad = 0;
    for i in 0..random {
        let g = random_torus(size, size, 4 * size * size, seed.wrapping_add(i as u64))?;
        let c = nxy_coefficients(&g)?;
        if c != [0, 0, 0] {
            rbad += 1;
            max_coef = max_coef.max(c.iter().map(|x| x.abs()).max().unwrap_or(0));
        }
    }
    bad += rbad;
    per.push(json!({ "m": size, "n": size, "random": random, "seed": seed, "nonzero": rbad }));
    Ok(CheckReport::new(
        "nxy",
        max_coef as f64,
        0.5,
        bad == 0,
        format!("{bad} configurations with a nonzero coefficient ({total} enumerated, {random} random {size}x{size})"),
        json!({ "tori": per }),
    ))
}

/// Check names accepted by [`run_named`].
pub const CHECKS: [&str; 7] = ["ybe", "bij", "two-row-swap", "torus-stationarity", "twisted-chain", "row-ops", "nxy"];

/// Default exact points for the seed flip comparison.
pub fn default_flip_points() -> Vec<Point> {
    vec![Point::ratio((1, 4), (1, 2), (3, 4)), Point::ratio((1, 3), (1, 5), (2, 3)), Point::ratio((1, 2), (1, 5), (3, 5)), Point::ratio((2, 3), (1, 7), (6, 7))]
}

/// Default configuration of each named check; `p` overrides `(q, u, v)` where used.
pub fn run_named(name: &str, p: Option<&Point>, seed: u64) -> anyhow::Result<Vec<CheckReport>> {
    let swap_default = Point::ratio((1, 4), (1, 2), (3, 4));
    Ok(match name {
        "ybe" => match p {
            Some(p) => vec![ybe_point(p)?],
            None => vec![ybe_random(1000, seed)?],
        },
        "bij" => {
            let mut pts = default_flip_points();
            if let Some(p) = p.filter(|p| p.exact.is_some()) {
                pts.push(p.clone());
            }
            vec![bij(1000, seed, &pts)?]
        }
        "two-row-swap" => vec![two_row_swap(p.unwrap_or(&swap_default), 6)?],
        "torus-stationarity" => vec![
            torus_stationarity_stochastic(3, 3, (1, 4), (1, 2))?,
            torus_stationarity_general(3, 3, [1.0, 0.7, 0.8, 1.2, 0.9, 1.1], 1.0, None)?,
            torus_stationarity_general(4, 3, stochastic_weights(0.25, 0.5), 1.0, None)?,
        ],
        "twisted-chain" => vec![twisted_chain(2, 2, (1, 4), (1, 2), (1, 8))?],
        "row-ops" => vec![row_ops(20, 6, seed)?],
        "nxy" => vec![nxy(&[(3, 3)], 10_000, 8, seed)?],
        other => anyhow::bail!("unknown check {other:?}; expected one of {CHECKS:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ybe_point_exact() {
        let r = ybe_point(&Point::ratio((1, 4), (1, 2), (3, 4))).unwrap();
        assert!(r.passed, "{}", r.summary);
        assert_eq!(r.details["entries"].as_array().unwrap().len(), 64);
        assert_eq!(r.details["exact_residual"], 0.0);
    }

    #[test]
    fn cheap_checks_pass() {
        assert!(ybe_random(50, 1).unwrap().passed);
        assert!(bij(20, 2, &default_flip_points()).unwrap().passed);
        assert!(row_ops(2, 4, 3).unwrap().passed);
        assert!(nxy(&[(2, 3)], 20, 5, 4).unwrap().passed);
        assert!(twisted_chain(2, 2, (1, 4), (1, 2), (1, 8)).unwrap().passed);
        assert!(two_row_swap(&Point::ratio((1, 3), (1, 4), (3, 5)), 3).unwrap().passed);
    }

    #[test]
    fn unknown_check_is_an_error() {
        assert!(run_named("nope", None, 0).is_err());
    }
}

//! One PASS/FAIL line per acceptance criterion. Set `SIXV_ACCEPTANCE_STRICT=1`
//! to turn any FAIL into a nonzero exit.

use std::time::Instant;

use sixv::checks::{
    bij, default_flip_points, nxy, torus_stationarity_general, torus_stationarity_stochastic, twisted_chain, two_row_swap, ybe_random, CheckReport, Point,
};
use sixv::core::hydro::{current_formula, CurrentSetup};
use sixv::experiments::{
    aj_runs, burgers_vs_mc, current_mc, current_series_deviation, hydro_identities, kpz_preservation, quadrant_mapping, two_plus_one, KpzConfig,
    QuadrantMappingConfig,
};

type Outcome = anyhow::Result<(bool, String)>;

fn reports(rs: &[CheckReport]) -> (bool, String) {
    let ok = rs.iter().all(|r| r.passed);
    let s = rs.iter().map(|r| format!("{} [{}]", r.summary, if r.passed { "ok" } else { "bad" })).collect::<Vec<_>>().join("; ");
    (ok, s)
}

fn ybe() -> Outcome {
    let r = ybe_random(1000, 11)?;
    Ok(reports(&[r]))
}

fn bijectivisation() -> Outcome {
    Ok(reports(&[bij(1000, 12, &default_flip_points())?]))
}

fn swap() -> Outcome {
    let rs = [two_row_swap(&Point::ratio((1, 4), (1, 2), (3, 4)), 6)?, two_row_swap(&Point::ratio((1, 3), (1, 5), (2, 3)), 6)?];
    Ok(reports(&rs))
}

fn torus() -> Outcome {
    let rs = [
        torus_stationarity_stochastic(3, 3, (1, 4), (1, 2))?,
        torus_stationarity_general(3, 3, [1.0, 0.7, 0.8, 1.2, 0.9, 1.1], 1.0, None)?,
        torus_stationarity_general(4, 3, [1.0, 0.7, 0.8, 1.2, 0.9, 1.1], 1.0, None)?,
    ];
    let ok = rs.iter().all(|r| r.passed && r.max_residual < 1e-10);
    Ok((ok, reports(&rs).1))
}

fn twisted() -> Outcome {
    let r = twisted_chain(2, 2, (1, 4), (1, 2), (1, 8))?;
    let ok = r.passed && r.max_residual < 1e-10;
    Ok((ok, r.summary))
}

fn balance() -> Outcome {
    Ok(reports(&[nxy(&[(3, 3)], 10_000, 8, 13)?]))
}

fn current() -> Outcome {
    let mut pts = Vec::new();
    for i in 0..20usize {
        let s = 0.1 + 0.8 * ((i * 7) % 20) as f64 / 19.0;
        let u = 0.15 + 0.7 * ((i * 3) % 20) as f64 / 19.0;
        pts.push((s, u, [0.1, 0.25, 0.5, 0.75][i % 4]));
    }
    let series = current_series_deviation(&pts, 200)?;
    let mut ok = series < 1e-10;
    let mut msg = format!("series at 20 points: {series:.2e}");
    for (q, u, s, exact) in [(0.25, 0.5, 0.5, -4.0 / 9.0), (0.5, 0.2, 0.5, -25.0 / 36.0)] {
        let st = CurrentSetup::stochastic(q, u, s, 256, 8.0)?;
        let row = current_mc(&st, 200, 21)?;
        let good = (current_formula(s, u) - exact).abs() < 1e-14 && row.sigmas() < 3.0 && row.relative_stderr() < 0.02;
        ok &= good;
        msg += &format!(
            "; (q,u,s)=({q},{u},{s}): J={:.5} vs {exact:.5}, {:.2} sigma, rel se {:.4}, {} used, {} excluded",
            row.j_measured,
            row.sigmas(),
            row.relative_stderr(),
            row.replicates,
            row.excluded
        );
    }
    Ok((ok, msg))
}

fn quadrant() -> Outcome {
    let cfg = QuadrantMappingConfig { q: 0.25, u: 0.3, eta: 0.3, tau: 1.0, width: 300, height: 150, rows: (40, 60), bin: 10, replicates: 100, seed: 31 };
    let bins = quadrant_mapping(&cfg)?;
    let worst = bins.iter().map(|b| b.z.abs()).fold(0.0, f64::max);
    Ok((worst < 4.0, format!("{} bins of 10 columns, max |z| {worst:.2}", bins.len())))
}

fn kpz() -> Outcome {
    let cfg = KpzConfig { q: 0.25, u: 0.5, s: 0.5, sizes: vec![64, 128, 256], reference: 512, window: 32, t: 2.0, replicates: 100, seed: 41 };
    let r = kpz_preservation(&cfg)?;
    let ok = r.max_z < 4.0 && r.divergence_decreasing();
    let d: Vec<String> = r.divergence.iter().map(|(n, f)| format!("R={n}: {f:.2}")).collect();
    Ok((ok, format!("max |z| {:.2} over t in {{0,T/2,T}}; divergence {}; {} excluded", r.max_z, d.join(", "), r.excluded)))
}

fn aj() -> Outcome {
    let rows = aj_runs(0.25, 0.5, 0.5, 256, 2.0, 1000, 51)?;
    let bad = rows.iter().filter(|r| !r.dominated).count();
    let checks: u64 = rows.iter().map(|r| r.checks).sum();
    let viol: u64 = rows.iter().map(|r| r.violations).sum();
    let aligned: u64 = rows.iter().map(|r| r.aligned_violations).sum();
    Ok((
        bad == 0,
        format!("{} of 1000 runs dominated; {viol} of {checks} event checks violated, {aligned} of them with matching leading signs", 1000 - bad),
    ))
}

fn hydro() -> Outcome {
    let (pointwise, fd) = hydro_identities();
    let b = burgers_vs_mc(0.25, 0.5, 400, 20, 1000, 0.2, 0.2, 61)?;
    let t = two_plus_one(0.3, 0.3, 1.0, 200, 4.0, 400)?;
    let ok = pointwise < 1e-12 && fd < 1e-6 && b.sup < 0.03 && t.sup < 0.05;
    Ok((
        ok,
        format!(
            "|J - d_u phi| {pointwise:.1e}; finite difference {fd:.1e}; Burgers vs MC sup {:.4} over {} bins ({} near the fan edges or y < 0.2 skipped); 2+1 sup {:.4}",
            b.sup, b.bins_compared, b.bins_excluded, t.sup
        ),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("yang-baxter", ybe),
        ("bijectivisation", bijectivisation),
        ("two-row-swap", swap),
        ("torus-stationarity", torus),
        ("twisted-chain", twisted),
        ("nxy-balance", balance),
        ("current", current),
        ("quadrant-mapping", quadrant),
        ("kpz-preservation", kpz),
        ("aj-domination", aj),
        ("hydro", hydro),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let (ok, msg) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += !ok as usize;
        println!("{} {name}: {msg} ({:.1} s)", if ok { "PASS" } else { "FAIL" }, t0.elapsed().as_secs_f64());
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 && std::env::var("SIXV_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

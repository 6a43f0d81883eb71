use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sixv_core::aj::{evolve_aj, project_slice, AjState};
use sixv_core::dynamics::{evolve_quadrant, evolve_torus, ActiveBox, ClockTape, RateSet, RunStatus, TapeRunner};
use sixv_core::jump::{ExitPolicy, SubsetZ};
use sixv_core::lattice::{grid_from_heights, height_field, validate};
use sixv_core::sampler::{random_torus, sample_kpz, sample_quadrant, BoundarySpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn torus_dynamics_keeps_ice_rule_and_replays(m in 2usize..7, n in 2usize..7, seed in any::<u64>(), q in 0.05f64..0.9, u in 0.05f64..0.95) {
        let g = random_torus(m, n, 3 * m * n, seed).unwrap();
        let before = height_field(&g, (0, 0), 0).unwrap().cycles;
        let rates = RateSet::stochastic(q, u).unwrap();
        let tr = evolve_torus(g, rates, 1.0, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(validate(&tr.final_grid).is_empty());
        prop_assert!(tr.events.windows(2).all(|w| w[0].time < w[1].time));
        prop_assert_eq!(tr.replay(ExitPolicy::Error).unwrap(), tr.final_grid.clone());
        // jumps conserve the number of paths in each direction
        let after = height_field(&tr.final_grid, (0, 0), 0).unwrap().cycles;
        prop_assert_eq!(before, after);
    }

    #[test]
    fn heights_round_trip(w in 2usize..12, h in 2usize..8, seed in any::<u64>()) {
        let g = sample_kpz(0.25, 0.5, 0.5, w, h, 4, seed).unwrap();
        let hf = height_field(&g, (0, 0), 0).unwrap();
        let back = grid_from_heights(g.geometry, g.boundary, &hf).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn quadrant_dynamics_stays_valid(seed in any::<u64>(), eta in 0.01f64..0.5) {
        let g = sample_quadrant(0.3, 0.4, 24, 12, &BoundarySpec::step(SubsetZ::empty()), seed).unwrap();
        let tr = evolve_quadrant(g, 0.3, 0.4, eta, 1.0, false, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(validate(&tr.final_grid).is_empty());
    }

    #[test]
    fn tape_runs_are_reproducible(seed in any::<u64>()) {
        let g = sample_kpz(0.25, 0.5, 0.5, 40, 13, 0, seed).unwrap();
        let active = ActiveBox { x0: 0, x1: 11, y0: 0, y1: 11 };
        let rates = RateSet::stochastic(0.25, 0.5).unwrap();
        let m = rates.a.max(rates.b).max(rates.c);
        let tape = ClockTape::new(active, m, 1.0, seed).unwrap();
        let mut a = TapeRunner::new(g.clone(), rates, active, ExitPolicy::Error).unwrap();
        let mut b = TapeRunner::new(g, rates, active, ExitPolicy::Error).unwrap();
        // advancing in two steps equals advancing once
        let s1 = a.advance(&tape, 0.4).unwrap();
        let s2 = a.advance(&tape, 1.0).unwrap();
        let s = b.advance(&tape, 1.0).unwrap();
        if s1 == RunStatus::Reached && s2 == RunStatus::Reached && s == RunStatus::Reached {
            prop_assert_eq!(&a.grid, &b.grid);
            prop_assert_eq!(a.jumps, b.jumps);
        }
        prop_assert!(validate(&a.grid).is_empty());
    }

    #[test]
    fn aj_events_preserve_interleaving(pos in prop::collection::btree_set(-300i64..=0, 0..40), first in any::<bool>(), seed in any::<u64>()) {
        let pos: Vec<i64> = pos.into_iter().rev().collect();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, p) in pos.iter().enumerate() {
            if (i % 2 == 0) == first { a.push(*p) } else { b.push(*p) }
        }
        let n0 = a.len().min(b.len());
        let s = AjState::new(&a, &b, 1.0, 300, n0).unwrap();
        let before = s.particles.len();
        let r = evolve_aj(s, 3.0, u64::MAX, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(r.state.validate().is_ok());
        prop_assert!(r.state.particles.len() <= before);
        // only annihilations remove particles: one pair or one rightmost singleton
        let lost = before - r.state.particles.len();
        prop_assert!(lost <= 2 * r.n_events as usize);
    }

    #[test]
    fn projection_of_identical_slices_is_empty(pos in prop::collection::btree_set(-50i64..=5, 0..20)) {
        let l: Vec<i64> = pos.into_iter().collect();
        let p = project_slice(&l, &l).unwrap();
        prop_assert!(p.a.is_empty() && p.b.is_empty());
    }
}

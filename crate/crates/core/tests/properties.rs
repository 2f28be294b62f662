use levy_lorentz::heavy_tail::{sample_gap, GapDistribution, StableCalibration};
use levy_lorentz::limit::{generalized_inverse, local_time_field, sample_brownian, LimitDraw, LimitResolution, LimitStreams};
use levy_lorentz::medium::{build_environment, Environment};
use levy_lorentz::rng::{open_unit, stream, Purpose};
use levy_lorentz::walker::{
    local_time_profile, run_trajectory, rwrs_sum, sample_walk, scenery_collision_time, WalkPath, WalkSpec,
};
use proptest::prelude::*;

fn pareto(alpha: f64) -> GapDistribution {
    GapDistribution::pareto(alpha, 1.0).unwrap()
}

fn spec_from(choice: u8) -> WalkSpec {
    match choice % 3 {
        0 => WalkSpec::simple_symmetric(),
        1 => WalkSpec::new(&[(-2, 0.25), (-1, 0.25), (1, 0.25), (2, 0.25)]).unwrap(),
        _ => WalkSpec::new(&[(-3, 0.1), (-1, 0.3), (1, 0.6)]).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_identities(seed in any::<u64>(), alpha in 0.2f64..0.95, n in 1usize..3000, choice in any::<u8>()) {
        let spec = spec_from(choice);
        let mut env = build_environment(&pareto(alpha), seed);
        let mut r = stream(seed, Purpose::Walk, 0, 0);
        let path = sample_walk(&spec, n, &mut r);
        let traj = run_trajectory(&mut env, &path);
        let prof = local_time_profile(&path);

        let direct = traj.final_time();
        let scenery = scenery_collision_time(&mut env, &prof);
        prop_assert!((scenery - direct).abs() <= 1e-9 * direct);

        for (y, c) in prof.bonds().iter() {
            prop_assert_eq!(c, prof.bond_minus(y) + prof.bond_plus(y));
        }
        let total: u64 = prof.bonds().iter().map(|(_, c)| c).sum();
        let travelled: u64 = path.positions().windows(2).map(|w| w[0].abs_diff(w[1])).sum();
        prop_assert_eq!(total, travelled);

        let visits: u64 = prof.sites().iter().map(|(_, c)| c).sum();
        prop_assert_eq!(visits, n as u64);
        prop_assert!(prof.range() <= n as u64);
    }

    #[test]
    fn rwrs_is_a_rearranged_local_time_sum(seed in any::<u64>(), n in 1usize..2000, m_frac in 0.0f64..=1.0) {
        let mut env = build_environment(&pareto(0.5), seed);
        let mut r = stream(seed, Purpose::Walk, 1, 0);
        let path = sample_walk(&WalkSpec::simple_symmetric(), n, &mut r);
        let m = ((n as f64) * m_frac) as usize;
        let direct = rwrs_sum(&mut env, &path, m).unwrap();
        let mut counts = std::collections::BTreeMap::new();
        for &s in &path.positions()[1..=m] {
            *counts.entry(s).or_insert(0u64) += 1;
        }
        let rearranged: f64 = counts.iter().map(|(&y, &c)| c as f64 * env.gap(y)).sum();
        prop_assert!((direct - rearranged).abs() <= 1e-9 * direct.max(1.0));

        let mut unit = Environment::constant(1.0);
        prop_assert_eq!(rwrs_sum(&mut unit, &path, m).unwrap(), m as f64);
    }

    #[test]
    fn x_moves_at_unit_speed(seed in any::<u64>(), n in 2usize..500, probes in prop::collection::vec(0.0f64..=1.0, 2..40)) {
        let mut env = build_environment(&pareto(0.6), seed);
        let mut r = stream(seed, Purpose::Walk, 2, 0);
        let path = sample_walk(&WalkSpec::simple_symmetric(), n, &mut r);
        let traj = run_trajectory(&mut env, &path);
        let horizon = traj.final_time();
        let ts: Vec<f64> = probes.iter().map(|u| u * horizon).collect();
        let xs: Vec<f64> = ts.iter().map(|&t| traj.position_at(t).unwrap()).collect();
        let tol = 1e-12 * horizon.max(1.0);
        for i in 0..ts.len() {
            for j in 0..ts.len() {
                prop_assert!((xs[i] - xs[j]).abs() <= (ts[i] - ts[j]).abs() + tol);
            }
        }
        // equality strictly inside an inter-collision interval
        let t = traj.collision_times();
        let k = (seed % (t.len() as u64 - 1)) as usize;
        let (a, b) = (t[k], t[k + 1]);
        let (u, v) = (a + 0.25 * (b - a), a + 0.75 * (b - a));
        let dx = (traj.position_at(v).unwrap() - traj.position_at(u).unwrap()).abs();
        prop_assert!((dx - (v - u)).abs() <= tol);
        // the cursor agrees with direct lookups
        let mut sorted = ts.clone();
        sorted.sort_by(f64::total_cmp);
        let mut cur = traj.cursor();
        for &s in &sorted {
            prop_assert_eq!(cur.position_at(s).unwrap(), traj.position_at(s).unwrap());
        }
    }

    #[test]
    fn medium_is_query_order_independent(seed in any::<u64>(), queries in prop::collection::vec(-300i64..300, 1..60)) {
        let mut lazy = build_environment(&pareto(0.5), seed);
        let values: Vec<f64> = queries.iter().map(|&k| lazy.target(k)).collect();
        let mut full = build_environment(&pareto(0.5), seed);
        full.ensure(-301, 301);
        for (&k, &v) in queries.iter().zip(&values) {
            prop_assert_eq!(full.target(k).to_bits(), v.to_bits());
            let g = full.gap(k);
            prop_assert!(g >= 1.0);
            let d = full.target(k) - full.target(k - 1);
            prop_assert!((d - g).abs() <= 1e-12 * full.target(k).abs().max(full.target(k - 1).abs()).max(1.0));
        }
        prop_assert_eq!(full.target(0), 0.0);
    }

    #[test]
    fn inverse_survival_round_trips(alpha in 0.05f64..0.99, x_min in 0.1f64..10.0, u in 1e-12f64..1.0) {
        let d = GapDistribution::pareto(alpha, x_min).unwrap();
        let z = d.inverse_survival(u);
        prop_assert!(z >= x_min);
        prop_assert!((d.survival(z) - u).abs() <= 1e-9 * u);
        prop_assert!((d.c0() - x_min.powf(alpha)).abs() <= 1e-12 * d.c0());
    }

    #[test]
    fn gaps_and_uniforms_stay_in_range(seed in any::<u64>()) {
        let mut r = stream(seed, Purpose::Verify, 0, 0);
        let d = pareto(0.5);
        for _ in 0..200 {
            let u = open_unit(&mut r);
            prop_assert!(u > 0.0 && u < 1.0);
            prop_assert!(sample_gap(&d, &mut r) >= 1.0);
        }
    }

    #[test]
    fn occupation_identity(seed in any::<u64>(), v in 0.1f64..5.0, steps in 100usize..5000, dx in 0.005f64..0.5,
                           fracs in prop::collection::vec(0.0f64..=1.0, 1..6)) {
        let dt = 1.0 / steps as f64;
        let mut r = stream(seed, Purpose::Brownian, 0, 0);
        let bp = sample_brownian(v, 1.0, dt, &mut r).unwrap();
        let ltf = local_time_field(&bp, dx, &fracs).unwrap();
        for (j, &t) in fracs.iter().enumerate() {
            let snapped = (t / dt).round() * dt;
            prop_assert!((ltf.occupation(j) - snapped).abs() <= 1e-9 * snapped.max(dt));
            prop_assert!(ltf.densities[j].iter().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn delta_increases_and_inverts(seed in any::<u64>(), frac in 0.001f64..=1.0) {
        let d = pareto(0.5);
        let c = StableCalibration::new(&d, 1.0).unwrap();
        let cal = StableCalibration::new(&d, c.analytic_scale()).unwrap();
        let res = LimitResolution { t_max: 1.0, dt: 1e-3, dx: 0.05 };
        let draw = LimitDraw::new(1.0, 1.0, &cal, &res, LimitStreams::for_draw(seed, 0)).unwrap();
        let ks = draw.ks_sample();
        prop_assert_eq!(ks.delta[0], 0.0);
        prop_assert!(ks.delta.windows(2).all(|w| w[1] > w[0]));
        let s = frac * ks.delta[ks.delta.len() - 1];
        let u = generalized_inverse(&ks, s).unwrap();
        let m = ((u / res.dt).floor() as usize).min(ks.delta.len() - 2);
        prop_assert!(ks.delta[m] <= s + 1e-12 && s <= ks.delta[m + 1] + 1e-12);
        prop_assert!(draw.field().edge_values().windows(2).all(|w| w[1].1 > w[0].1));
    }
}

#[test]
fn fixture_path_local_times_match_hand_counts() {
    let path = WalkPath::from_positions(vec![0, 1, 2, 1, 0, -1, 0]).unwrap();
    let prof = local_time_profile(&path);
    // sites visited at k = 0..n-1
    assert_eq!((prof.site(0), prof.site(1), prof.site(2), prof.site(-1)), (2, 2, 1, 1));
    // bond y is the gap [y-1, y]
    assert_eq!((prof.bond(1), prof.bond(2), prof.bond(0)), (2, 2, 2));
    assert_eq!((prof.bond_plus(1), prof.bond_minus(1)), (1, 1));
    assert_eq!(prof.range(), 4);
    assert_eq!(prof.self_intersection(), 4 + 4 + 1 + 1);
}

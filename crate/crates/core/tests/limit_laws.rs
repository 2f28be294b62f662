//! Distributional checks of the limit samplers at reduced sizes.

use levy_lorentz::heavy_tail::{sample_one_sided_stable, GapDistribution, StableCalibration};
use levy_lorentz::limit::{local_time_field, sample_brownian, LimitDraw, LimitResolution, LimitStreams, SubordinatorField};
use levy_lorentz::rng::{child, stream, Purpose};
use levy_lorentz::stats::ks_two_sample;
use rayon::prelude::*;

fn calibration() -> StableCalibration {
    let d = GapDistribution::pareto(0.5, 1.0).unwrap();
    let c = StableCalibration::new(&d, 1.0).unwrap();
    StableCalibration::new(&d, c.analytic_scale()).unwrap()
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn binned_subordinator_is_stable_under_convolution() {
    // the sum of 1/dx increments over [0, 1] must follow the law of Z(1)
    let cal = calibration();
    let dx = 0.01;
    let reps = 10_000u64;
    let summed: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut r = stream(1, Purpose::Subordinator, i, 1);
            let mut f = SubordinatorField::new(&cal, dx, child(&mut r), child(&mut r)).unwrap();
            f.ensure_bins(0, 99);
            f.increments_plus[..100].iter().sum()
        })
        .collect();
    let mut r = stream(1, Purpose::Verify, 0, 0);
    let direct: Vec<f64> = (0..reps).map(|_| sample_one_sided_stable(&cal, &mut r)).collect();
    let ks = ks_two_sample(&summed, &direct).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn composite_is_symmetric_about_zero() {
    let cal = calibration();
    let res = LimitResolution { t_max: 2.0, dt: 1e-4, dx: 0.03 };
    let draws = 1000u64;
    let positive = (0..draws)
        .into_par_iter()
        .filter(|&i| {
            let mut d = LimitDraw::new(1.0, 1.0, &cal, &res, LimitStreams::for_draw(2, i)).unwrap();
            d.composite(1.0).unwrap() > 0.0
        })
        .count() as f64;
    // two-sided 1% sign-test band around draws / 2
    let band = 2.5758 * (draws as f64 * 0.25).sqrt();
    assert!((positive - draws as f64 / 2.0).abs() <= band, "{positive} positive of {draws}");
}

#[test]
fn brownian_and_subordinators_are_independent() {
    let cal = calibration();
    let res = LimitResolution { t_max: 1.0, dt: 1e-3, dx: 0.02 };
    let draws = 1000u64;
    let pairs: Vec<(f64, f64, f64)> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let d = LimitDraw::new(1.0, 1.0, &cal, &res, LimitStreams::for_draw(3, i)).unwrap();
            let b1 = d.brownian().values[1000];
            let mut z = d.field().clone();
            let zp = z.z_at(1.0);
            let zm = -z.z_at(-1.0);
            (b1, zp, zm)
        })
        .collect();
    let b: Vec<f64> = ranks(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let zp: Vec<f64> = ranks(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let zm: Vec<f64> = ranks(&pairs.iter().map(|p| p.2).collect::<Vec<_>>());
    // 1% null band of the rank correlation
    let band = 2.5758 / (draws as f64).sqrt();
    for (name, x, y) in [("B, Z+", &b, &zp), ("B, Z-", &b, &zm), ("Z+, Z-", &zp, &zm)] {
        let rho = pearson(x, y);
        assert!(rho.abs() < band, "{name}: rank correlation {rho}");
    }
}

#[test]
fn delta_is_linear_in_mu() {
    let cal = calibration();
    let res = LimitResolution { t_max: 1.0, dt: 1e-3, dx: 0.05 };
    for i in 0..20 {
        let mut one = LimitDraw::new(1.0, 1.0, &cal, &res, LimitStreams::for_draw(4, i)).unwrap();
        let mut two = LimitDraw::new(1.0, 2.0, &cal, &res, LimitStreams::for_draw(4, i)).unwrap();
        for t in [0.1, 0.5, 1.0] {
            let (a, b) = (one.delta_at(t).unwrap(), two.delta_at(t).unwrap());
            assert!((b - 2.0 * a).abs() <= 1e-12 * b);
        }
    }
}

#[test]
fn local_time_at_origin_matches_closed_form_for_scaled_variance() {
    // E[L_1(0)] = sqrt(2 / (pi v)) for Brownian motion with variance v t
    let v = 4.0;
    let (dt, dx, reps) = (1e-4, 0.02, 2000u64);
    let sum: f64 = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut r = stream(5, Purpose::Brownian, i, 0);
            let bp = sample_brownian(v, 1.0, dt, &mut r).unwrap();
            let ltf = local_time_field(&bp, dx, &[1.0]).unwrap();
            0.5 * (ltf.density(0, -1) + ltf.density(0, 0))
        })
        .sum();
    let mean = sum / reps as f64;
    let exact = (2.0 / (std::f64::consts::PI * v)).sqrt();
    assert!(((mean - exact) / exact).abs() < 0.10, "{mean} vs {exact}");
}

//! Rescaled observables, two-sample Kolmogorov-Smirnov tests and log-log
//! exponent fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::Environment;
use crate::walker::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleKind {
    /// `omega_{floor(x sqrt q)} / q^{1/(2 alpha)}`
    OmegaBar,
    /// `S_{floor(t q)} / sqrt q`
    SBar,
    /// `T_{floor(t q)} / q^{(alpha+1)/(2 alpha)}`
    TBar,
    /// `X(s q) / q^{1/(alpha+1)}`
    XBar,
}

impl RescaleKind {
    /// Power of `q` dividing the raw observable.
    pub fn exponent(self, alpha: f64) -> f64 {
        match self {
            RescaleKind::OmegaBar => 1.0 / (2.0 * alpha),
            RescaleKind::SBar => 0.5,
            RescaleKind::TBar => (alpha + 1.0) / (2.0 * alpha),
            RescaleKind::XBar => 1.0 / (alpha + 1.0),
        }
    }
}

/// `values[i][j]` is realization `j` evaluated at `points[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledSample {
    pub q: f64,
    pub kind: RescaleKind,
    pub points: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

fn floor_index(x: f64, q: f64) -> i64 {
    (x * q).floor() as i64
}

/// Applies one rescaling to one realization at one abscissa.
pub fn rescale_value(
    kind: RescaleKind,
    q: f64,
    alpha: f64,
    point: f64,
    env: &mut Environment,
    traj: &Trajectory,
) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::invalid("q", format!("must be positive, got {q}")));
    }
    let denom = q.powf(kind.exponent(alpha));
    let n_max = traj.path().len() as i64;
    let index = |x: f64, scale: f64| -> Result<usize> {
        let k = floor_index(x, scale);
        if k < 0 {
            return Err(Error::invalid("point", format!("must be nonnegative, got {x}")));
        }
        if k > n_max {
            return Err(Error::HorizonInsufficient(format!("index {k} beyond simulated {n_max} steps")));
        }
        Ok(k as usize)
    };
    let raw = match kind {
        RescaleKind::OmegaBar => env.target(floor_index(point, q.sqrt())),
        RescaleKind::SBar => traj.path().positions()[index(point, q)?] as f64,
        RescaleKind::TBar => traj.collision_times()[index(point, q)?],
        RescaleKind::XBar => {
            let t = point * q;
            if t > traj.final_time() {
                return Err(Error::HorizonInsufficient(format!(
                    "need collision time {t}, trajectory reaches {}",
                    traj.final_time()
                )));
            }
            traj.position_at(t)?
        }
    };
    Ok(raw / denom)
}

/// Applies one rescaling to every realization at every abscissa.
pub fn rescale(
    kind: RescaleKind,
    q: f64,
    alpha: f64,
    points: &[f64],
    realizations: &mut [(Environment, Trajectory)],
) -> Result<RescaledSample> {
    let values = points
        .iter()
        .map(|&p| {
            realizations
                .iter_mut()
                .map(|(env, tr)| rescale_value(kind, q, alpha, p, env, tr))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RescaledSample {
        q,
        kind,
        points: points.to_vec(),
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsTestResult {
    pub statistic: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// Asymptotic p-value with effective size `n_a n_b / (n_a + n_b)`.
    pub p_value: f64,
}

/// Sup-distance between the empirical CDFs of two sorted samples.
pub fn ks_distance_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i].total_cmp(&b[j]).is_le() { a[i] } else { b[j] };
        while i < a.len() && a[i].total_cmp(&x).is_le() {
            i += 1;
        }
        while j < b.len() && b[j].total_cmp(&x).is_le() {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // the alternating series converges slowly here; the value is 1 to double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let d = ks_distance_sorted(&a, &b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ne = na * nb / (na + nb);
    Ok(KsTestResult {
        statistic: d,
        n_a: a.len(),
        n_b: b.len(),
        p_value: kolmogorov_survival(ne.sqrt() * d),
    })
}

/// Critical KS distance at significance `level` under the asymptotic law.
pub fn ks_critical_value(level: f64, n_a: usize, n_b: usize) -> f64 {
    // bisection on the decreasing survival function
    let (mut lo, mut hi) = (0.2, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (na, nb) = (n_a as f64, n_b as f64);
    0.5 * (lo + hi) * ((na + nb) / (na * nb)).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n-1) p`).
pub fn quantile(sample: &[f64], level: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, level))
}

pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub abscissae: Vec<f64>,
    pub ordinates: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
}

/// Ordinary least squares of `ordinates` against `abscissae`.
pub fn linear_fit(abscissae: Vec<f64>, ordinates: Vec<f64>) -> Result<ExponentFit> {
    let n = abscissae.len();
    if n < 3 || ordinates.len() != n {
        return Err(Error::InsufficientScales { needed: 3, got: n });
    }
    let nf = n as f64;
    let mx = abscissae.iter().sum::<f64>() / nf;
    let my = ordinates.iter().sum::<f64>() / nf;
    let sxx: f64 = abscissae.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = abscissae.iter().zip(&ordinates).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("abscissae", "all scales coincide"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = abscissae
        .iter()
        .zip(&ordinates)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr_slope = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok(ExponentFit {
        abscissae,
        ordinates,
        slope,
        intercept,
        stderr_slope,
    })
}

/// Log-log fit of positive values against positive scales.
pub fn power_law_fit(scales: &[f64], values: &[f64]) -> Result<ExponentFit> {
    if scales.len() < 4 {
        return Err(Error::InsufficientScales {
            needed: 4,
            got: scales.len(),
        });
    }
    for (&s, &v) in scales.iter().zip(values) {
        if !(v > 0.0) {
            return Err(Error::NonPositiveQuantile { scale: s });
        }
    }
    linear_fit(
        scales.iter().map(|s| s.ln()).collect(),
        values.iter().map(|v| v.ln()).collect(),
    )
}

/// Minimum sample size per scale accepted by [`quantile_exponent_fit`].
pub const MIN_FIT_SAMPLES: usize = 200;

/// Slope of `log quantile_level(|values|)` against `log scale`.
pub fn quantile_exponent_fit(ensembles: &[(f64, Vec<f64>)], level: f64) -> Result<ExponentFit> {
    if ensembles.len() < 4 {
        return Err(Error::InsufficientScales {
            needed: 4,
            got: ensembles.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level", format!("must lie in (0, 1), got {level}")));
    }
    let mut scales = Vec::with_capacity(ensembles.len());
    let mut qs = Vec::with_capacity(ensembles.len());
    for (scale, sample) in ensembles {
        if sample.len() < MIN_FIT_SAMPLES {
            return Err(Error::InsufficientSamples {
                scale: *scale,
                got: sample.len(),
                needed: MIN_FIT_SAMPLES,
            });
        }
        let abs: Vec<f64> = sample.iter().map(|v| v.abs()).collect();
        scales.push(*scale);
        qs.push(quantile(&abs, level)?);
    }
    power_law_fit(&scales, &qs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heavy_tail::{sample_gap, GapDistribution};
    use crate::rng::{open_unit, stream, Purpose};
    use crate::walker::{run_trajectory, WalkPath};
    use proptest::prelude::*;

    #[test]
    fn ks_extremes() {
        let a = [1.0, 2.0, 3.0];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap().statistic, 1.0);
        assert!(matches!(ks_two_sample(&[], &[1.0]), Err(Error::EmptySample)));
    }

    #[test]
    fn ks_handles_ties_across_samples() {
        // F_a jumps to 1 at 1; F_b is 1/2 at 1 and 1 at 2.
        let d = ks_two_sample(&[1.0, 1.0], &[1.0, 2.0]).unwrap().statistic;
        assert_eq!(d, 0.5);
    }

    #[test]
    fn critical_value_matches_tabulated_lambda() {
        // lambda with P(K > lambda) = 0.01, frozen from a 40-digit root find
        let lam = 1.627_623_611_518_950_3;
        let c = ks_critical_value(0.01, 1000, 1000);
        assert!((c - lam * (2.0f64 / 1000.0).sqrt()).abs() < 1e-9);
        assert!((kolmogorov_survival(lam) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn ks_null_rate_on_pareto() {
        let d = GapDistribution::pareto(0.5, 1.0).unwrap();
        let passes = (0..100u64)
            .filter(|&rep| {
                let mut r1 = stream(31, Purpose::Verify, rep, 0);
                let mut r2 = stream(31, Purpose::Verify, rep, 1);
                let a: Vec<f64> = (0..10_000).map(|_| sample_gap(&d, &mut r1)).collect();
                let b: Vec<f64> = (0..10_000).map(|_| sample_gap(&d, &mut r2)).collect();
                ks_two_sample(&a, &b).unwrap().p_value > 0.01
            })
            .count();
        assert!(passes >= 98, "{passes}");
    }

    #[test]
    fn planted_exponent() {
        let mut r = stream(2, Purpose::Verify, 0, 0);
        let ens: Vec<(f64, Vec<f64>)> = [1e3, 1e4, 1e5, 1e6, 1e7]
            .iter()
            .map(|&n: &f64| (n, (0..2_000).map(|_| n.sqrt() * open_unit(&mut r)).collect()))
            .collect();
        let fit = quantile_exponent_fit(&ens, 0.5).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.02, "{}", fit.slope);

        let flat: Vec<(f64, Vec<f64>)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&n| (n, vec![3.0; 200])).collect();
        let fit = quantile_exponent_fit(&flat, 0.5).unwrap();
        assert!(fit.slope.abs() < 1e-15);
    }

    #[test]
    fn fit_preconditions() {
        let three: Vec<(f64, Vec<f64>)> = [1.0, 2.0, 4.0].iter().map(|&n| (n, vec![1.0; 200])).collect();
        assert!(matches!(quantile_exponent_fit(&three, 0.5), Err(Error::InsufficientScales { .. })));
        let small: Vec<(f64, Vec<f64>)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&n| (n, vec![1.0; 10])).collect();
        assert!(matches!(quantile_exponent_fit(&small, 0.5), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn rescale_examples() {
        let mut env = Environment::constant(1.0);
        let tr = run_trajectory(&mut env, &WalkPath::from_positions(vec![0, 2, -3, -1]).unwrap());
        let mut data = vec![(env, tr)];
        let t = rescale(RescaleKind::TBar, 1.0, 0.5, &[0.0, 1.0, 2.5, 3.0], &mut data).unwrap();
        assert_eq!(t.values, vec![vec![0.0], vec![2.0], vec![7.0], vec![9.0]]);
        let o = rescale(RescaleKind::OmegaBar, 9.0, 0.5, &[0.0], &mut data).unwrap();
        assert_eq!(o.values, vec![vec![0.0]]);
        // alpha = 1/2: denominator q^{2/3} = 4 at q = 8, X(8) = -2
        let x = rescale(RescaleKind::XBar, 8.0, 0.5, &[1.0], &mut data).unwrap();
        assert!((x.values[0][0] + 0.5).abs() < 1e-15);
        let s = rescale(RescaleKind::SBar, 4.0, 0.5, &[0.25], &mut data).unwrap();
        assert_eq!(s.values, vec![vec![1.0]]);
        assert!(matches!(
            rescale(RescaleKind::XBar, 8.0, 0.5, &[2.0], &mut data),
            Err(Error::HorizonInsufficient(_))
        ));
        assert!(matches!(
            rescale(RescaleKind::TBar, 2.0, 0.5, &[2.0], &mut data),
            Err(Error::HorizonInsufficient(_))
        ));
    }

    #[test]
    fn t_bar_inverts_exactly_for_power_of_two_denominators() {
        let dist = GapDistribution::pareto(0.5, 1.0).unwrap();
        let mut env = crate::medium::build_environment(&dist, 3);
        let mut r = stream(3, Purpose::Walk, 0, 0);
        let path = crate::walker::sample_walk(&crate::walker::WalkSpec::simple_symmetric(), 5_000, &mut r);
        let tr = run_trajectory(&mut env, &path);
        for q in [4.0f64, 16.0, 64.0, 256.0] {
            let d = q.powf(RescaleKind::TBar.exponent(0.5));
            for t in [0.5, 1.0, 3.0, 7.25] {
                let v = rescale_value(RescaleKind::TBar, q, 0.5, t, &mut env, &tr).unwrap();
                let k = (t * q).floor() as usize;
                assert_eq!((v * d).to_bits(), tr.collision_times()[k].to_bits());
            }
        }
    }

    proptest! {
        #[test]
        fn ks_symmetric_and_rank_invariant(
            a in prop::collection::vec(-1e3f64..1e3, 1..60),
            b in prop::collection::vec(-1e3f64..1e3, 1..60),
        ) {
            let ab = ks_two_sample(&a, &b).unwrap();
            let ba = ks_two_sample(&b, &a).unwrap();
            prop_assert_eq!(ab.statistic, ba.statistic);
            prop_assert!((0.0..=1.0).contains(&ab.statistic));
            let f = |x: &f64| (x / 100.0).exp() + x.powi(3);
            let ta: Vec<f64> = a.iter().map(f).collect();
            let tb: Vec<f64> = b.iter().map(f).collect();
            prop_assert_eq!(ab.statistic, ks_two_sample(&ta, &tb).unwrap().statistic);
        }

        #[test]
        fn exponent_fit_ignores_common_factor(c in 1e-3f64..1e3, seed in 0u64..1000) {
            let mut r = stream(seed, Purpose::Verify, 0, 0);
            let ens: Vec<(f64, Vec<f64>)> = [10.0, 100.0, 1000.0, 10000.0]
                .iter()
                .map(|&n: &f64| (n, (0..200).map(|_| n.powf(0.7) * open_unit(&mut r)).collect()))
                .collect();
            let scaled: Vec<(f64, Vec<f64>)> = ens.iter().map(|(n, v)| (*n, v.iter().map(|x| c * x).collect())).collect();
            let a = quantile_exponent_fit(&ens, 0.5).unwrap();
            let b = quantile_exponent_fit(&scaled, 0.5).unwrap();
            prop_assert!((a.slope - b.slope).abs() < 1e-9);
            prop_assert!((b.intercept - a.intercept - c.ln()).abs() < 1e-9);
        }

        #[test]
        fn t_bar_round_trips(q in 1.0f64..1e6, t in 0.0f64..1.0) {
            let mut env = Environment::constant(1.5);
            let path = WalkPath::from_positions((0..=1000).map(|k| if k % 2 == 0 { k } else { -k }).collect()).unwrap();
            let tr = run_trajectory(&mut env, &path);
            let q = q.min(1000.0);
            let v = rescale_value(RescaleKind::TBar, q, 0.5, t, &mut env, &tr).unwrap();
            let raw = tr.collision_times()[(t * q).floor() as usize];
            let back = v * q.powf(RescaleKind::TBar.exponent(0.5));
            prop_assert!((back - raw).abs() <= 4.0 * f64::EPSILON * raw.abs());
        }
    }
}

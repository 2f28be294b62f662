//! Heavy-tailed gap laws and the one-sided stable law of their normalized sums.
//!
//! Gaps are drawn by inverse-survival sampling. The limit law `Z_1` of
//! `n^{-1/alpha} * sum(gaps)` is represented as `scale * W` with `W` a standard
//! totally skewed strictly stable variable drawn by Chambers-Mallows-Stuck;
//! [`calibrate_stable_scale`] fits `scale` numerically.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::rng::{self, open_unit, Purpose};
use crate::stats::ks_distance_sorted;

/// Default ceiling on the KS distance accepted by [`calibrate_stable_scale`].
pub const DEFAULT_CALIBRATION_CEILING: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GapLaw {
    /// `P(gap > z) = (z / x_min)^{-alpha}` for `z >= x_min`.
    Pareto { x_min: f64 },
    /// Survival function tabulated at increasing abscissae, interpolated
    /// linearly in log-log coordinates and continued by the pure power tail
    /// `c0 * z^{-alpha}` past the last point.
    Tabulated { points: Vec<(f64, f64)> },
}

/// Law of the i.i.d. gaps between consecutive targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapDistribution {
    alpha: f64,
    law: GapLaw,
    c0: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

impl GapDistribution {
    pub fn pareto(alpha: f64, x_min: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(x_min > 0.0 && x_min.is_finite()) {
            return Err(Error::invalid("x_min", format!("must be positive, got {x_min}")));
        }
        Ok(Self {
            alpha,
            law: GapLaw::Pareto { x_min },
            c0: x_min.powf(alpha),
        })
    }

    /// Tabulated survival function `points = [(z_0, 1), (z_1, s_1), ...]`.
    pub fn tabulated(alpha: f64, points: Vec<(f64, f64)>) -> Result<Self> {
        check_alpha(alpha)?;
        let Some(&(z0, s0)) = points.first() else {
            return Err(Error::invalid("points", "table is empty"));
        };
        if !(z0 > 0.0) || s0 != 1.0 {
            return Err(Error::invalid("points", "first entry must be (z_0 > 0, 1)"));
        }
        for w in points.windows(2) {
            let ((za, sa), (zb, sb)) = (w[0], w[1]);
            if !(zb > za) || !(sb < sa) || !(sb > 0.0) || !zb.is_finite() {
                return Err(Error::invalid(
                    "points",
                    "abscissae must increase and survival must decrease strictly inside (0, 1]",
                ));
            }
        }
        let (zl, sl) = *points.last().unwrap();
        Ok(Self {
            alpha,
            law: GapLaw::Tabulated { points },
            c0: sl * zl.powf(alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn law(&self) -> &GapLaw {
        &self.law
    }

    /// Tail constant `lim z^alpha P(gap >= z)`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// `P(gap > z)`.
    pub fn survival(&self, z: f64) -> f64 {
        match &self.law {
            GapLaw::Pareto { x_min } => {
                if z < *x_min {
                    1.0
                } else {
                    (z / x_min).powf(-self.alpha)
                }
            }
            GapLaw::Tabulated { points } => {
                let (z0, _) = points[0];
                let (zl, sl) = *points.last().unwrap();
                if z < z0 {
                    return 1.0;
                }
                if z >= zl {
                    return sl * (z / zl).powf(-self.alpha);
                }
                let i = points.partition_point(|&(zi, _)| zi <= z) - 1;
                let ((za, sa), (zb, sb)) = (points[i], points[i + 1]);
                let w = (z / za).ln() / (zb / za).ln();
                (sa.ln() + w * (sb / sa).ln()).exp()
            }
        }
    }

    /// The `z` with `P(gap > z) = u`, for `u` in (0, 1].
    pub fn inverse_survival(&self, u: f64) -> f64 {
        match &self.law {
            GapLaw::Pareto { x_min } => x_min * u.powf(-1.0 / self.alpha),
            GapLaw::Tabulated { points } => {
                let (zl, sl) = *points.last().unwrap();
                if u <= sl {
                    return zl * (u / sl).powf(-1.0 / self.alpha);
                }
                // survival decreases along the table: find s_{i+1} < u <= s_i
                let i = points.partition_point(|&(_, s)| s >= u) - 1;
                let ((za, sa), (zb, sb)) = (points[i], points[i + 1]);
                let w = (u / sa).ln() / (sb / sa).ln();
                (za.ln() + w * (zb / za).ln()).exp()
            }
        }
    }
}

/// Draws one gap.
#[inline]
pub fn sample_gap<R: Rng + ?Sized>(dist: &GapDistribution, rng: &mut R) -> f64 {
    dist.inverse_survival(open_unit(rng))
}

/// Standard totally skewed strictly stable variable of index `alpha` in (0, 1),
/// i.e. `-log E[e^{i t W}] = |t|^alpha (1 - i tan(pi alpha / 2) sgn t)`.
pub fn standard_positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    // Chambers-Mallows-Stuck with skewness 1; atan(tan(pi a/2)) / a = pi/2.
    let shift = FRAC_PI_2 * alpha;
    let norm = (FRAC_PI_2 * alpha).cos().powf(-1.0 / alpha);
    loop {
        let v = std::f64::consts::PI * (open_unit(rng) - 0.5);
        let w = -open_unit(rng).ln();
        let x = norm * (alpha * v + shift).sin() / v.cos().powf(1.0 / alpha)
            * ((v - alpha * v - shift).cos() / w).powf((1.0 - alpha) / alpha);
        if x > 0.0 && x.is_finite() {
            return x;
        }
    }
}

/// Link between the gap law and the limit subordinators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableCalibration {
    pub alpha: f64,
    /// Multiplier taking the standard stable sampler to the law of `Z_1`.
    pub scale: f64,
    /// `Gamma(1 - alpha) * c0 * cos(alpha pi / 2)`.
    pub c1: f64,
    /// KS distance reached by the calibration run, if the scale was fitted.
    pub achieved_ks: Option<f64>,
}

/// `Gamma(1 - alpha) * c0 * cos(alpha pi / 2)`.
pub fn c1_constant(alpha: f64, c0: f64) -> f64 {
    gamma(1.0 - alpha) * c0 * (alpha * FRAC_PI_2).cos()
}

impl StableCalibration {
    pub fn new(dist: &GapDistribution, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("scale", format!("must be positive, got {scale}")));
        }
        Ok(Self {
            alpha: dist.alpha(),
            scale,
            c1: c1_constant(dist.alpha(), dist.c0()),
            achieved_ks: None,
        })
    }

    /// Scale obtained by matching the characteristic exponent `c1 |t|^alpha`
    /// with that of the standard sampler, `scale = c1^{1/alpha}`. Used as a
    /// cross-check on the fitted value.
    pub fn analytic_scale(&self) -> f64 {
        self.c1.powf(1.0 / self.alpha)
    }
}

/// Draws `cal.scale * W`.
#[inline]
pub fn sample_one_sided_stable<R: Rng + ?Sized>(cal: &StableCalibration, rng: &mut R) -> f64 {
    cal.scale * standard_positive_stable(cal.alpha, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRequest {
    pub n_block: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub ceiling: f64,
}

impl CalibrationRequest {
    pub fn new(n_block: usize, n_samples: usize, seed: u64) -> Self {
        Self {
            n_block,
            n_samples,
            seed,
            ceiling: DEFAULT_CALIBRATION_CEILING,
        }
    }
}

/// Fits the scale mapping the standard stable sampler to the limit of
/// `n_block^{-1/alpha} * sum(gaps)`, by minimizing the two-sample KS distance
/// between `n_samples` normalized block sums and `n_samples` scaled draws.
pub fn calibrate_stable_scale(
    dist: &GapDistribution,
    req: &CalibrationRequest,
) -> Result<StableCalibration> {
    if req.n_block < 10_000 {
        return Err(Error::invalid("n_block", format!("need at least 10^4, got {}", req.n_block)));
    }
    if req.n_samples < 1_000 {
        return Err(Error::invalid("n_samples", format!("need at least 10^3, got {}", req.n_samples)));
    }
    let alpha = dist.alpha();
    let norm = (req.n_block as f64).powf(-1.0 / alpha);

    let mut sums: Vec<f64> = (0..req.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(req.seed, Purpose::CalibrationBlock, i, 0);
            let mut acc = 0.0;
            for _ in 0..req.n_block {
                acc += sample_gap(dist, &mut r);
            }
            acc * norm
        })
        .collect();
    let mut reference: Vec<f64> = (0..req.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(req.seed, Purpose::CalibrationStable, i, 0);
            standard_positive_stable(alpha, &mut r)
        })
        .collect();
    sums.sort_by(f64::total_cmp);
    reference.sort_by(f64::total_cmp);

    let (scale, achieved) = minimize_ks_scale(&sums, &reference);
    if achieved > req.ceiling {
        return Err(Error::CalibrationFailure {
            achieved,
            ceiling: req.ceiling,
        });
    }
    let mut cal = StableCalibration::new(dist, scale)?;
    cal.achieved_ks = Some(achieved);
    Ok(cal)
}

/// Scale `s` minimizing `KS(target, s * reference)`; both inputs sorted.
fn minimize_ks_scale(target: &[f64], reference: &[f64]) -> (f64, f64) {
    let mid = |v: &[f64]| v[v.len() / 2];
    let start = mid(target) / mid(reference);
    let mut scaled = vec![0.0; reference.len()];
    let mut eval = |s: f64| {
        for (dst, &src) in scaled.iter_mut().zip(reference) {
            *dst = s * src;
        }
        ks_distance_sorted(target, &scaled)
    };

    // coarse log-grid over [start/2, 2 start], then a fine pass around the best point
    let mut best = (start, eval(start));
    let mut centre = start.ln();
    let mut half_width = std::f64::consts::LN_2;
    for points in [401usize, 201] {
        let step = 2.0 * half_width / (points - 1) as f64;
        for j in 0..points {
            let s = (centre - half_width + j as f64 * step).exp();
            let d = eval(s);
            if d < best.1 {
                best = (s, d);
            }
        }
        centre = best.0.ln();
        half_width = step;
    }
    best
}

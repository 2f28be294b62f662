//! Samplers for the limit objects: Brownian motion `B`, its local time field
//! `L_t(x)`, the stable subordinators `Z_+` and `Z_-`, the Kesten-Spitzer
//! process `Delta(t) = mu (int L_t(x) dZ_+(x) + int L_t(-x) dZ_-(x))`, its
//! generalized inverse and the composite `Z(B(Delta^{-1}(s)))`.
//!
//! Space is cut into bins `[i dx, (i+1) dx)`, `i` in Z, so the origin is always
//! a bin edge. Bins `i >= 0` carry the increments of `Z_+`; bin `i < 0` carries
//! the increment of `Z_-` over `[(-i-1) dx, -i dx]`. Local time is the
//! occupation density of the Brownian grid path, constant on bins, so the
//! Stieltjes integrals reduce to sums over bins.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heavy_tail::{sample_one_sided_stable, StableCalibration};
use crate::rng::{self, Purpose};

/// Maximum number of horizon doublings of a composite draw.
pub const MAX_DOUBLINGS: u32 = 5;

#[inline]
fn bin_of(x: f64, dx: f64) -> i64 {
    (x / dx).floor() as i64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub dt: f64,
    pub v_xi: f64,
    /// `B(m dt)` for `m = 0, 1, ...`
    pub values: Vec<f64>,
}

/// Gaussian random walk with variance `v_xi dt` per step on `[0, t_max]`.
pub fn sample_brownian<R: Rng + ?Sized>(v_xi: f64, t_max: f64, dt: f64, rng: &mut R) -> Result<BrownianPath> {
    if !(v_xi > 0.0) {
        return Err(Error::invalid("v_xi", format!("must be positive, got {v_xi}")));
    }
    if !(t_max > 0.0 && dt > 0.0) {
        return Err(Error::invalid("dt", "t_max and dt must be positive"));
    }
    if dt > t_max / 100.0 * (1.0 + 1e-12) {
        return Err(Error::invalid("dt", format!("dt = {dt} exceeds t_max / 100")));
    }
    let mut bp = BrownianPath {
        dt,
        v_xi,
        values: vec![0.0],
    };
    bp.extend((t_max / dt).round() as usize, rng);
    Ok(bp)
}

impl BrownianPath {
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn t_max(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    /// Appends `steps` further increments.
    pub fn extend<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) {
        let sd = (self.v_xi * self.dt).sqrt();
        let mut b = *self.values.last().unwrap();
        self.values.reserve(steps);
        for _ in 0..steps {
            let z: f64 = rng.sample(StandardNormal);
            b += sd * z;
            self.values.push(b);
        }
    }

    /// Linear interpolation of the grid path.
    pub fn value_at(&self, u: f64) -> f64 {
        let x = (u / self.dt).clamp(0.0, self.steps() as f64);
        let m = (x.floor() as usize).min(self.steps().saturating_sub(1));
        let w = x - m as f64;
        if self.steps() == 0 {
            return self.values[0];
        }
        self.values[m] + w * (self.values[m + 1] - self.values[m])
    }

    fn bin_range(&self, upto: usize, dx: f64) -> (i64, i64) {
        let (lo, hi) = self.values[..=upto]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        (bin_of(lo, dx) - 1, bin_of(hi, dx) + 1)
    }
}

/// Occupation densities of a Brownian grid path at requested times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeField {
    pub dx: f64,
    pub dt: f64,
    /// Lowest and highest bin index covered.
    pub bin_lo: i64,
    pub bin_hi: i64,
    pub times: Vec<f64>,
    /// `densities[j][i - bin_lo]` is `L_{times[j]}` on bin `i`.
    pub densities: Vec<Vec<f64>>,
}

impl LocalTimeField {
    /// Bin centres.
    pub fn x_grid(&self) -> Vec<f64> {
        (self.bin_lo..=self.bin_hi).map(|i| (i as f64 + 0.5) * self.dx).collect()
    }

    /// `L_{times[j]}` on bin `i`; zero outside the covered range.
    pub fn density(&self, j: usize, bin: i64) -> f64 {
        if bin < self.bin_lo || bin > self.bin_hi {
            return 0.0;
        }
        self.densities[j][(bin - self.bin_lo) as usize]
    }

    /// `sum_x L_t(x) dx`.
    pub fn occupation(&self, j: usize) -> f64 {
        self.densities[j].iter().sum::<f64>() * self.dx
    }
}

fn time_index(t: f64, dt: f64, steps: usize) -> Result<usize> {
    if !(t >= 0.0) {
        return Err(Error::invalid("times", format!("must be nonnegative, got {t}")));
    }
    let m = (t / dt).round();
    if m > steps as f64 {
        return Err(Error::OutOfRange {
            value: t,
            max: steps as f64 * dt,
        });
    }
    Ok(m as usize)
}

/// `L_t(x_i) = (dt/dx) #{m dt < t : B(m dt) in bin i}`; requested times are
/// snapped to the time grid.
pub fn local_time_field(bp: &BrownianPath, dx: f64, times: &[f64]) -> Result<LocalTimeField> {
    if !(dx > 0.0) {
        return Err(Error::invalid("dx", format!("must be positive, got {dx}")));
    }
    let idx: Vec<usize> = times
        .iter()
        .map(|&t| time_index(t, bp.dt, bp.steps()))
        .collect::<Result<_>>()?;
    let (bin_lo, bin_hi) = bp.bin_range(bp.steps(), dx);
    let width = (bin_hi - bin_lo + 1) as usize;

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by_key(|&j| idx[j]);
    let mut counts = vec![0u64; width];
    let mut densities = vec![Vec::new(); times.len()];
    let scale = bp.dt / dx;
    let mut m = 0usize;
    for j in order {
        while m < idx[j] {
            counts[(bin_of(bp.values[m], dx) - bin_lo) as usize] += 1;
            m += 1;
        }
        densities[j] = counts.iter().map(|&c| scale * c as f64).collect();
    }
    Ok(LocalTimeField {
        dx,
        dt: bp.dt,
        bin_lo,
        bin_hi,
        times: times.to_vec(),
        densities,
    })
}

/// Independent stable increments of `Z_+` and `Z_-` per spatial bin,
/// materialized outward from the origin.
#[derive(Clone, Debug)]
pub struct SubordinatorField {
    pub dx: f64,
    pub cal: StableCalibration,
    /// Increments of `Z_+` over `[i dx, (i+1) dx]`, `i = 0, 1, ...`
    pub increments_plus: Vec<f64>,
    /// Increments of `Z_-` over `[i dx, (i+1) dx]`, `i = 0, 1, ...`
    pub increments_minus: Vec<f64>,
    rng_plus: ChaCha8Rng,
    rng_minus: ChaCha8Rng,
    bin_scale: f64,
}

impl SubordinatorField {
    /// Empty field drawing from the two given streams.
    pub fn new(cal: &StableCalibration, dx: f64, rng_plus: ChaCha8Rng, rng_minus: ChaCha8Rng) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::invalid("dx", format!("must be positive, got {dx}")));
        }
        Ok(Self {
            dx,
            cal: cal.clone(),
            increments_plus: Vec::new(),
            increments_minus: Vec::new(),
            rng_plus,
            rng_minus,
            bin_scale: dx.powf(1.0 / cal.alpha),
        })
    }

    /// Materializes spatial bins `lo ..= hi`.
    pub fn ensure_bins(&mut self, lo: i64, hi: i64) {
        while (self.increments_plus.len() as i64) <= hi {
            let w = self.bin_scale * sample_one_sided_stable(&self.cal, &mut self.rng_plus);
            self.increments_plus.push(w);
        }
        while -(self.increments_minus.len() as i64) > lo {
            let w = self.bin_scale * sample_one_sided_stable(&self.cal, &mut self.rng_minus);
            self.increments_minus.push(w);
        }
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        (self.increments_plus.len() as i64) > hi && -(self.increments_minus.len() as i64) <= lo
    }

    /// Increment attached to spatial bin `i`.
    #[inline]
    pub fn increment(&self, bin: i64) -> f64 {
        if bin >= 0 {
            self.increments_plus[bin as usize]
        } else {
            self.increments_minus[(-bin - 1) as usize]
        }
    }

    /// `Z(x)`: `Z_+(x)` for `x >= 0` and `-Z_-(-x)` for `x < 0`, linear inside
    /// a bin.
    pub fn z_at(&mut self, x: f64) -> f64 {
        let y = x.abs() / self.dx;
        let i = y.floor() as usize;
        let frac = y - i as f64;
        if x >= 0.0 {
            self.ensure_bins(0, i as i64);
            self.increments_plus[..i].iter().sum::<f64>() + frac * self.increments_plus[i]
        } else {
            self.ensure_bins(-(i as i64) - 1, 0);
            -(self.increments_minus[..i].iter().sum::<f64>() + frac * self.increments_minus[i])
        }
    }

    /// `Z` at the bin edges `k dx`, `k = -len_minus ..= len_plus`.
    pub fn edge_values(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.increments_plus.len() + self.increments_minus.len() + 1);
        let mut acc = 0.0;
        let mut neg = Vec::with_capacity(self.increments_minus.len());
        for (i, w) in self.increments_minus.iter().enumerate() {
            acc += w;
            neg.push((-((i + 1) as f64) * self.dx, -acc));
        }
        out.extend(neg.into_iter().rev());
        out.push((0.0, 0.0));
        acc = 0.0;
        for (i, w) in self.increments_plus.iter().enumerate() {
            acc += w;
            out.push((((i + 1) as f64) * self.dx, acc));
        }
        out
    }
}

/// One stable increment per bin of `ltf`, for each sign, from two independent
/// child streams of `rng`.
pub fn sample_subordinator_field<R: Rng + ?Sized>(
    cal: &StableCalibration,
    ltf: &LocalTimeField,
    rng: &mut R,
) -> Result<SubordinatorField> {
    let plus = rng::child(rng);
    let minus = rng::child(rng);
    let mut field = SubordinatorField::new(cal, ltf.dx, plus, minus)?;
    field.ensure_bins(ltf.bin_lo, ltf.bin_hi);
    Ok(field)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSProcessSample {
    pub times: Vec<f64>,
    pub delta: Vec<f64>,
}

/// `Delta(t) = mu sum_i L_t(bin i) dZ(bin i)` at the times of `ltf`.
pub fn ks_process(ltf: &LocalTimeField, sub: &SubordinatorField, mu_xi: f64) -> Result<KSProcessSample> {
    if (ltf.dx - sub.dx).abs() > 1e-12 * ltf.dx {
        return Err(Error::GridMismatch(format!(
            "local time bins of width {} against subordinator bins of width {}",
            ltf.dx, sub.dx
        )));
    }
    if !sub.covers(ltf.bin_lo, ltf.bin_hi) {
        return Err(Error::GridMismatch(format!(
            "subordinator field does not cover bins {}..={}",
            ltf.bin_lo, ltf.bin_hi
        )));
    }
    let delta = (0..ltf.times.len())
        .map(|j| {
            mu_xi
                * (ltf.bin_lo..=ltf.bin_hi)
                    .map(|i| ltf.density(j, i) * sub.increment(i))
                    .sum::<f64>()
        })
        .collect();
    Ok(KSProcessSample {
        times: ltf.times.clone(),
        delta,
    })
}

/// `f^{-1}(s) = sup{u > 0 : f(u) < s}` for the piecewise-linear interpolation
/// of an increasing sample.
pub fn generalized_inverse(ks: &KSProcessSample, s: f64) -> Result<f64> {
    let last = *ks.delta.last().ok_or(Error::EmptySample)?;
    if s > last {
        return Err(Error::OutOfRange { value: s, max: last });
    }
    if s <= ks.delta[0] {
        return Ok(ks.times[0]);
    }
    let j = ks.delta.partition_point(|&d| d < s);
    let (d0, d1) = (ks.delta[j - 1], ks.delta[j]);
    let (t0, t1) = (ks.times[j - 1], ks.times[j]);
    Ok(t0 + (s - d0) / (d1 - d0) * (t1 - t0))
}

/// Time and space resolution of the limit samplers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitResolution {
    pub t_max: f64,
    pub dt: f64,
    pub dx: f64,
}

impl LimitResolution {
    /// `dt = 1e-5 t_max` and `dx` such that about 200 bins span four standard
    /// deviations of `B(t_max)`.
    pub fn default_for(v_xi: f64, t_max: f64) -> Self {
        Self {
            t_max,
            dt: 1e-5 * t_max,
            dx: (v_xi * t_max).sqrt() / 50.0,
        }
    }
}

/// The three independent streams of one limit draw.
#[derive(Clone, Debug)]
pub struct LimitStreams {
    pub brownian: ChaCha8Rng,
    pub plus: ChaCha8Rng,
    pub minus: ChaCha8Rng,
}

impl LimitStreams {
    /// Streams `(Brownian, index, 0)`, `(Subordinator, index, 1)` and
    /// `(Subordinator, index, 2)` of `master`.
    pub fn for_draw(master: u64, index: u64) -> Self {
        Self {
            brownian: rng::stream(master, Purpose::Brownian, index, 0),
            plus: rng::stream(master, Purpose::Subordinator, index, 1),
            minus: rng::stream(master, Purpose::Subordinator, index, 2),
        }
    }

    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            brownian: rng::child(rng),
            plus: rng::child(rng),
            minus: rng::child(rng),
        }
    }
}

/// One joint realization of `(B, Z_+, Z_-)` with `Delta` on the full time
/// grid. The horizon can be doubled by continuing the same Brownian stream and
/// materializing further subordinator bins, which leaves already sampled
/// values unchanged.
#[derive(Clone, Debug)]
pub struct LimitDraw {
    mu_xi: f64,
    dx: f64,
    brownian: BrownianPath,
    field: SubordinatorField,
    rng_b: ChaCha8Rng,
    /// `Delta(m dt)` for every grid step.
    delta: Vec<f64>,
    doublings: u32,
}

impl LimitDraw {
    pub fn new(
        v_xi: f64,
        mu_xi: f64,
        cal: &StableCalibration,
        res: &LimitResolution,
        streams: LimitStreams,
    ) -> Result<Self> {
        if !(mu_xi > 0.0) {
            return Err(Error::invalid("mu_xi", format!("must be positive, got {mu_xi}")));
        }
        let LimitStreams { mut brownian, plus, minus } = streams;
        let bp = sample_brownian(v_xi, res.t_max, res.dt, &mut brownian)?;
        let field = SubordinatorField::new(cal, res.dx, plus, minus)?;
        let mut draw = Self {
            mu_xi,
            dx: res.dx,
            brownian: bp,
            field,
            rng_b: brownian,
            delta: vec![0.0],
            doublings: 0,
        };
        draw.fill_delta();
        Ok(draw)
    }

    fn fill_delta(&mut self) {
        let steps = self.brownian.steps();
        let (lo, hi) = self.brownian.bin_range(steps, self.dx);
        self.field.ensure_bins(lo, hi);
        let scale = self.mu_xi * self.brownian.dt / self.dx;
        let mut acc = *self.delta.last().unwrap();
        for m in self.delta.len() - 1..steps {
            acc += scale * self.field.increment(bin_of(self.brownian.values[m], self.dx));
            self.delta.push(acc);
        }
    }

    /// Doubles the horizon; fails after [`MAX_DOUBLINGS`] doublings.
    pub fn double_horizon(&mut self) -> Result<()> {
        if self.doublings >= MAX_DOUBLINGS {
            return Err(Error::HorizonInsufficient(format!(
                "Delta({}) = {} after {MAX_DOUBLINGS} doublings",
                self.t_max(),
                self.delta.last().unwrap()
            )));
        }
        let steps = self.brownian.steps();
        self.brownian.extend(steps, &mut self.rng_b);
        self.fill_delta();
        self.doublings += 1;
        Ok(())
    }

    pub fn t_max(&self) -> f64 {
        self.brownian.t_max()
    }

    pub fn brownian(&self) -> &BrownianPath {
        &self.brownian
    }

    pub fn field(&self) -> &SubordinatorField {
        &self.field
    }

    /// `Delta` on the full time grid.
    pub fn ks_sample(&self) -> KSProcessSample {
        KSProcessSample {
            times: (0..self.delta.len()).map(|m| m as f64 * self.brownian.dt).collect(),
            delta: self.delta.clone(),
        }
    }

    /// `Delta(t)` at a grid-snapped time, extending the horizon as needed.
    pub fn delta_at(&mut self, t: f64) -> Result<f64> {
        while t > self.t_max() * (1.0 + 1e-12) {
            self.double_horizon()?;
        }
        Ok(self.delta[time_index(t, self.brownian.dt, self.brownian.steps())?])
    }

    /// `Delta^{-1}(s)`, extending the horizon until `Delta(t_max) >= s`.
    pub fn inverse(&mut self, s: f64) -> Result<f64> {
        if s <= 0.0 {
            return Ok(0.0);
        }
        while *self.delta.last().unwrap() < s {
            self.double_horizon()?;
        }
        let j = self.delta.partition_point(|&d| d < s);
        let (d0, d1) = (self.delta[j - 1], self.delta[j]);
        Ok(((j - 1) as f64 + (s - d0) / (d1 - d0)) * self.brownian.dt)
    }

    /// `Z(B(Delta^{-1}(s)))`.
    pub fn composite(&mut self, s: f64) -> Result<f64> {
        let u = self.inverse(s)?;
        let x = self.brownian.value_at(u);
        Ok(self.field.z_at(x))
    }
}

/// One joint draw of `Z(B(Delta^{-1}(s)))` at every requested `s`.
pub fn composite_limit_sample<R: Rng + ?Sized>(
    v_xi: f64,
    mu_xi: f64,
    cal: &StableCalibration,
    s_points: &[f64],
    res: &LimitResolution,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut draw = LimitDraw::new(v_xi, mu_xi, cal, res, LimitStreams::from_rng(rng))?;
    s_points.iter().map(|&s| draw.composite(s)).collect()
}

//! The underlying walk `S`, the walk on targets `Y_n = omega_{S_n}`, the
//! collision times `T_n`, the unit-speed interpolation `X(t)` and the local
//! time statistics of `S`.

use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{CompensatedSum, Environment};

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Law of the increments `xi_j = S_j - S_{j-1}`.
#[derive(Clone, Debug)]
pub struct WalkSpec {
    support: Vec<i64>,
    probs: Vec<f64>,
    sampler: WeightedIndex<f64>,
    v_xi: f64,
    mu_xi: f64,
    gamma_check: f64,
}

impl PartialEq for WalkSpec {
    fn eq(&self, other: &Self) -> bool {
        self.support == other.support && self.probs == other.probs
    }
}

impl WalkSpec {
    /// Builds a spec from `(increment, probability)` pairs. Increments must be
    /// nonzero and distinct, probabilities must sum to one, the law must be
    /// centred and its support must generate Z.
    pub fn new(pmf: &[(i64, f64)]) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::invalid("increment_pmf", "empty"));
        }
        let mut pmf: Vec<(i64, f64)> = pmf.iter().copied().filter(|&(_, p)| p != 0.0).collect();
        pmf.sort_by_key(|&(x, _)| x);
        if pmf.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("increment_pmf", "duplicate increments"));
        }
        if pmf.iter().any(|&(_, p)| !(p > 0.0 && p.is_finite())) {
            return Err(Error::invalid("increment_pmf", "probabilities must be positive"));
        }
        if pmf.iter().any(|&(x, _)| x == 0) {
            return Err(Error::invalid("increment_pmf", "mass at 0 is not allowed"));
        }
        let total: f64 = pmf.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("increment_pmf", format!("probabilities sum to {total}")));
        }
        let mean: f64 = pmf.iter().map(|&(x, p)| x as f64 * p).sum();
        if mean.abs() > 1e-12 {
            return Err(Error::invalid("increment_pmf", format!("mean {mean} is not 0")));
        }
        let g = pmf.iter().fold(0u64, |g, &(x, _)| gcd(g, x.unsigned_abs()));
        if g != 1 {
            return Err(Error::invalid(
                "increment_pmf",
                format!("support lies in the proper subgroup {g}Z"),
            ));
        }
        let v_xi: f64 = pmf.iter().map(|&(x, p)| (x as f64).powi(2) * p).sum();
        let mu_xi: f64 = pmf.iter().map(|&(x, p)| (x as f64).abs() * p).sum();
        let (support, probs): (Vec<i64>, Vec<f64>) = pmf.into_iter().unzip();
        let sampler = WeightedIndex::new(&probs).map_err(|e| Error::invalid("increment_pmf", e.to_string()))?;
        Ok(Self {
            support,
            probs,
            sampler,
            v_xi,
            mu_xi,
            // finite support: every absolute moment is finite
            gamma_check: f64::INFINITY,
        })
    }

    /// Steps of +1 and -1 with probability 1/2 each.
    pub fn simple_symmetric() -> Self {
        Self::new(&[(-1, 0.5), (1, 0.5)]).expect("valid preset")
    }

    pub fn pmf(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    /// Variance of `xi_1`.
    pub fn v_xi(&self) -> f64 {
        self.v_xi
    }

    /// `E|xi_1|`.
    pub fn mu_xi(&self) -> f64 {
        self.mu_xi
    }

    /// Largest absolute moment order known to be finite.
    pub fn gamma_check(&self) -> f64 {
        self.gamma_check
    }

    /// Whether the moment condition `gamma > 2 / alpha` is met.
    pub fn satisfies_moment_condition(&self, alpha: f64) -> bool {
        self.gamma_check > 2.0 / alpha
    }

    #[inline]
    pub fn sample_increment<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.support[self.sampler.sample(rng)]
    }
}

/// `S_0 = 0, S_1, ..., S_n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkPath {
    steps: Vec<i64>,
}

impl WalkPath {
    /// Path from explicit positions; the first must be 0 and no step may be 0.
    pub fn from_positions(steps: Vec<i64>) -> Result<Self> {
        if steps.first() != Some(&0) {
            return Err(Error::invalid("path", "must start at 0"));
        }
        if steps.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("path", "zero increments are not allowed"));
        }
        Ok(Self { steps })
    }

    pub fn positions(&self) -> &[i64] {
        &self.steps
    }

    /// Number of steps `n`.
    pub fn len(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn sample_walk<R: Rng + ?Sized>(spec: &WalkSpec, n: usize, rng: &mut R) -> WalkPath {
    let mut steps = Vec::with_capacity(n + 1);
    let mut s = 0i64;
    steps.push(s);
    for _ in 0..n {
        s += spec.sample_increment(rng);
        steps.push(s);
    }
    WalkPath { steps }
}

/// A walk run on an environment.
#[derive(Clone, Debug)]
pub struct Trajectory {
    path: WalkPath,
    y: Vec<f64>,
    t: Vec<f64>,
}

pub fn run_trajectory(env: &mut Environment, path: &WalkPath) -> Trajectory {
    let pos = path.positions();
    let mut y = Vec::with_capacity(pos.len());
    let mut t = Vec::with_capacity(pos.len());
    let mut clock = CompensatedSum::default();
    y.push(0.0);
    t.push(0.0);
    for &s in &pos[1..] {
        let yn = env.target(s);
        clock.add((yn - y[y.len() - 1]).abs());
        y.push(yn);
        t.push(clock.value());
    }
    Trajectory {
        path: path.clone(),
        y,
        t,
    }
}

/// Samples steps until the collision time reaches `horizon`.
pub fn simulate_until<R: Rng + ?Sized>(
    env: &mut Environment,
    spec: &WalkSpec,
    horizon: f64,
    max_steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut steps = vec![0i64];
    let mut y = vec![0.0];
    let mut t = vec![0.0];
    let mut clock = CompensatedSum::default();
    let mut s = 0i64;
    while t[t.len() - 1] < horizon {
        if steps.len() > max_steps {
            return Err(Error::HorizonInsufficient(format!(
                "collision time {} after {max_steps} steps is below {horizon}",
                t[t.len() - 1]
            )));
        }
        s += spec.sample_increment(rng);
        let yn = env.target(s);
        clock.add((yn - y[y.len() - 1]).abs());
        steps.push(s);
        y.push(yn);
        t.push(clock.value());
    }
    Ok(Trajectory {
        path: WalkPath { steps },
        y,
        t,
    })
}

impl Trajectory {
    pub fn path(&self) -> &WalkPath {
        &self.path
    }

    /// `Y_0, ..., Y_n`.
    pub fn positions(&self) -> &[f64] {
        &self.y
    }

    /// `T_0, ..., T_n`.
    pub fn collision_times(&self) -> &[f64] {
        &self.t
    }

    pub fn final_time(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    fn interpolate(&self, n: usize, t: f64) -> f64 {
        if n + 1 >= self.t.len() {
            return self.y[n];
        }
        let s = self.path.steps[n + 1] - self.path.steps[n];
        self.y[n] + s.signum() as f64 * (t - self.t[n])
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) {
            return Err(Error::invalid("t", format!("must be nonnegative, got {t}")));
        }
        if t > self.final_time() {
            return Err(Error::HorizonExceeded {
                t,
                horizon: self.final_time(),
            });
        }
        Ok(())
    }

    /// `X(t) = Y_n + sgn(xi_{n+1}) (t - T_n)` for `T_n <= t < T_{n+1}`.
    pub fn position_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let n = self.t.partition_point(|&tn| tn <= t) - 1;
        Ok(self.interpolate(n, t))
    }

    /// Cursor for batches of queries at nondecreasing times.
    pub fn cursor(&self) -> PositionCursor<'_> {
        PositionCursor { traj: self, n: 0 }
    }
}

pub struct PositionCursor<'a> {
    traj: &'a Trajectory,
    n: usize,
}

impl PositionCursor<'_> {
    /// Same as [`Trajectory::position_at`]; falls back to a binary search if
    /// `t` is earlier than the previous query.
    pub fn position_at(&mut self, t: f64) -> Result<f64> {
        let tr = self.traj;
        tr.check_time(t)?;
        if t < tr.t[self.n] {
            self.n = tr.t.partition_point(|&tn| tn <= t) - 1;
        }
        while self.n + 1 < tr.t.len() && tr.t[self.n + 1] <= t {
            self.n += 1;
        }
        Ok(tr.interpolate(self.n, t))
    }
}

/// Nonnegative counters over a contiguous window of Z.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ZCounts {
    lo: i64,
    counts: VecDeque<u64>,
}

impl ZCounts {
    /// Increments the counter at `y` and returns its previous value.
    #[inline]
    pub fn bump(&mut self, y: i64) -> u64 {
        if self.counts.is_empty() {
            self.lo = y;
            self.counts.push_back(0);
        }
        while y < self.lo {
            self.counts.push_front(0);
            self.lo -= 1;
        }
        while y >= self.lo + self.counts.len() as i64 {
            self.counts.push_back(0);
        }
        let c = &mut self.counts[(y - self.lo) as usize];
        *c += 1;
        *c - 1
    }

    #[inline]
    pub fn get(&self, y: i64) -> u64 {
        if y < self.lo {
            return 0;
        }
        self.counts.get((y - self.lo) as usize).copied().unwrap_or(0)
    }

    /// `(y, count)` over the window, zeros included.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().enumerate().map(move |(i, &c)| (self.lo + i as i64, c))
    }

    /// Window `[lo, hi]`, or `None` if nothing was counted.
    pub fn window(&self) -> Option<(i64, i64)> {
        if self.counts.is_empty() {
            None
        } else {
            Some((self.lo, self.lo + self.counts.len() as i64 - 1))
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Site and bond local times of a walk, with range and self-intersection.
///
/// Bond `y` is the unit interval `[y-1, y]`. `n_sites(y)` counts the times
/// `k < n` with `S_k = y`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LocalTimeProfile {
    sites: ZCounts,
    bonds_minus: ZCounts,
    bonds_plus: ZCounts,
    bonds: ZCounts,
    range: u64,
    self_intersection: u64,
    steps: usize,
    last: i64,
}

impl LocalTimeProfile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the jump `S_n -> next`.
    pub fn push(&mut self, next: i64) {
        let from = self.last;
        let prev = self.sites.bump(from);
        if prev == 0 {
            self.range += 1;
        }
        self.self_intersection += 2 * prev + 1;
        if next > from {
            for y in from + 1..=next {
                self.bonds_plus.bump(y);
                self.bonds.bump(y);
            }
        } else {
            for y in next + 1..=from {
                self.bonds_minus.bump(y);
                self.bonds.bump(y);
            }
        }
        self.last = next;
        self.steps += 1;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `N_n(y)`.
    pub fn site(&self, y: i64) -> u64 {
        self.sites.get(y)
    }

    /// Bond local time `N_n(y)` of the gap `[y-1, y]`.
    pub fn bond(&self, y: i64) -> u64 {
        self.bonds.get(y)
    }

    /// Crossings of bond `y` from right to left.
    pub fn bond_minus(&self, y: i64) -> u64 {
        self.bonds_minus.get(y)
    }

    /// Crossings of bond `y` from left to right.
    pub fn bond_plus(&self, y: i64) -> u64 {
        self.bonds_plus.get(y)
    }

    pub fn sites(&self) -> &ZCounts {
        &self.sites
    }

    pub fn bonds(&self) -> &ZCounts {
        &self.bonds
    }

    /// `R_n`.
    pub fn range(&self) -> u64 {
        self.range
    }

    /// `V_n = sum_y N_n(y)^2`.
    pub fn self_intersection(&self) -> u64 {
        self.self_intersection
    }

    /// `sum_y N_n(y)^beta` over visited sites.
    pub fn sum_site_power(&self, beta: f64) -> f64 {
        self.sites
            .iter()
            .filter(|&(_, c)| c > 0)
            .map(|(_, c)| (c as f64).powf(beta))
            .sum()
    }

    /// `sum_y |bond(y) - mu * site(y)|^alpha`.
    pub fn sum_bond_deviation_power(&self, mu: f64, alpha: f64) -> f64 {
        let windows = [self.sites.window(), self.bonds.window()];
        let (Some(lo), Some(hi)) = (
            windows.iter().flatten().map(|w| w.0).min(),
            windows.iter().flatten().map(|w| w.1).max(),
        ) else {
            return 0.0;
        };
        (lo..=hi)
            .map(|y| (self.bond(y) as f64 - mu * self.site(y) as f64).abs())
            .filter(|&x| x > 0.0)
            .map(|x| x.powf(alpha))
            .sum()
    }
}

/// All statistics of a path in one pass.
pub fn local_time_profile(path: &WalkPath) -> LocalTimeProfile {
    let mut prof = LocalTimeProfile::new();
    for &s in &path.positions()[1..] {
        prof.push(s);
    }
    prof
}

/// `T_n` rewritten as `sum_y bond(y) * zeta_y`.
pub fn scenery_collision_time(env: &mut Environment, prof: &LocalTimeProfile) -> f64 {
    let mut acc = CompensatedSum::default();
    for (y, c) in prof.bonds().iter() {
        if c > 0 {
            acc.add(c as f64 * env.gap(y));
        }
    }
    acc.value()
}

/// Random walk in the random scenery: `sum_{k=1}^{m} zeta_{S_k}`.
pub fn rwrs_sum(env: &mut Environment, path: &WalkPath, m: usize) -> Result<f64> {
    if m > path.len() {
        return Err(Error::OutOfRange {
            value: m as f64,
            max: path.len() as f64,
        });
    }
    let mut acc = CompensatedSum::default();
    for &s in &path.positions()[1..=m] {
        acc.add(env.gap(s));
    }
    Ok(acc.value())
}

/// Streaming walker used by large ensembles: advances `S`, `Y`, `T`, the scenery
/// sum and (optionally) the local time profile without storing the path.
#[derive(Clone, Debug)]
pub struct WalkState {
    pub step: usize,
    pub s: i64,
    pub y: f64,
    clock: CompensatedSum,
    scenery: CompensatedSum,
    profile: Option<LocalTimeProfile>,
}

impl WalkState {
    pub fn new(track_local_times: bool) -> Self {
        Self {
            step: 0,
            s: 0,
            y: 0.0,
            clock: CompensatedSum::default(),
            scenery: CompensatedSum::default(),
            profile: track_local_times.then(LocalTimeProfile::new),
        }
    }

    #[inline]
    pub fn advance<R: Rng + ?Sized>(&mut self, env: &mut Environment, spec: &WalkSpec, rng: &mut R) {
        let next = self.s + spec.sample_increment(rng);
        if let Some(p) = self.profile.as_mut() {
            p.push(next);
        }
        let yn = env.target(next);
        self.clock.add((yn - self.y).abs());
        self.scenery.add(env.gap(next));
        self.s = next;
        self.y = yn;
        self.step += 1;
    }

    /// `T_n`.
    pub fn time(&self) -> f64 {
        self.clock.value()
    }

    /// `sum_{k<=n} zeta_{S_k}`.
    pub fn scenery_sum(&self) -> f64 {
        self.scenery.value()
    }

    pub fn profile(&self) -> Option<&LocalTimeProfile> {
        self.profile.as_ref()
    }
}

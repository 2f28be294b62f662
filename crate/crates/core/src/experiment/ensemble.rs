//! Ensemble routines. Every record is a pure function of the master seed and
//! its index, and ensembles are gathered in index order, so results do not
//! depend on the number of worker threads.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::heavy_tail::{sample_gap, GapDistribution, StableCalibration};
use crate::limit::{LimitDraw, LimitResolution, LimitStreams};
use crate::medium::{build_environment, Environment};
use crate::rng::{self, Purpose};
use crate::stats::{rescale_value, RescaleKind};
use crate::walker::{
    local_time_profile, run_trajectory, sample_walk, scenery_collision_time, simulate_until, WalkSpec, WalkState,
};
use crate::Result;

/// Medium of trajectory `index`: gap `zeta_k` lives on sub-stream `k` of
/// `(Medium, index)`.
pub fn trajectory_environment(dist: &GapDistribution, master: u64, index: u64) -> Environment {
    build_environment(dist, rng::derive_seed(master, Purpose::Medium, index))
}

/// Walk statistics of one trajectory after `n` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub s: i64,
    pub y: f64,
    pub t: f64,
    /// `sum_{k=1}^{n} zeta_{S_k}`.
    pub scenery: f64,
    pub range: u64,
    pub self_intersection: u64,
    /// `sum_y N_n(y)^{1/2}`.
    pub site_power_half: f64,
    /// `sum_y |bond(y) - mu_xi N_n(y)|^alpha`.
    pub bond_deviation: f64,
}

/// Streams one trajectory and records it at every step count in `scales`
/// (increasing).
pub fn walk_checkpoints(
    dist: &GapDistribution,
    spec: &WalkSpec,
    master: u64,
    index: u64,
    scales: &[usize],
) -> Vec<Checkpoint> {
    let mut env = trajectory_environment(dist, master, index);
    let mut r = rng::stream(master, Purpose::Walk, index, 0);
    let mut state = WalkState::new(true);
    let (mu, alpha) = (spec.mu_xi(), dist.alpha());
    scales
        .iter()
        .map(|&n| {
            while state.step < n {
                state.advance(&mut env, spec, &mut r);
            }
            let prof = state.profile().expect("local times are tracked");
            Checkpoint {
                n,
                s: state.s,
                y: state.y,
                t: state.time(),
                scenery: state.scenery_sum(),
                range: prof.range(),
                self_intersection: prof.self_intersection(),
                site_power_half: prof.sum_site_power(0.5),
                bond_deviation: prof.sum_bond_deviation_power(mu, alpha),
            }
        })
        .collect()
}

pub fn walk_ensemble(
    dist: &GapDistribution,
    spec: &WalkSpec,
    master: u64,
    n_trajectories: usize,
    scales: &[usize],
) -> Vec<Vec<Checkpoint>> {
    (0..n_trajectories as u64)
        .into_par_iter()
        .map(|i| walk_checkpoints(dist, spec, master, i, scales))
        .collect()
}

/// Positions of one trajectory at physical times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionRecord {
    /// `X(t)` at each requested time.
    pub x: Vec<f64>,
    /// `X(s q) / q^{1/(alpha+1)}` at each requested `s`.
    pub x_bar: Vec<f64>,
    pub steps: usize,
}

/// Simulates trajectory `index` until its collision time covers both `times`
/// and `q * max(s_points)`; uses the same medium and walk streams as
/// [`walk_checkpoints`].
#[allow(clippy::too_many_arguments)]
pub fn position_record(
    dist: &GapDistribution,
    spec: &WalkSpec,
    master: u64,
    index: u64,
    times: &[f64],
    q: f64,
    s_points: &[f64],
    max_steps: usize,
) -> Result<PositionRecord> {
    let horizon = times
        .iter()
        .copied()
        .chain(s_points.iter().map(|s| s * q))
        .fold(0.0, f64::max);
    let mut env = trajectory_environment(dist, master, index);
    let mut r = rng::stream(master, Purpose::Walk, index, 0);
    let traj = simulate_until(&mut env, spec, horizon, max_steps, &mut r)?;
    let mut cur = traj.cursor();
    let x = times.iter().map(|&t| cur.position_at(t)).collect::<Result<_>>()?;
    let x_bar = s_points
        .iter()
        .map(|&s| rescale_value(RescaleKind::XBar, q, dist.alpha(), s, &mut env, &traj))
        .collect::<Result<_>>()?;
    Ok(PositionRecord {
        x,
        x_bar,
        steps: traj.path().len(),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn position_ensemble(
    dist: &GapDistribution,
    spec: &WalkSpec,
    master: u64,
    n_trajectories: usize,
    times: &[f64],
    q: f64,
    s_points: &[f64],
    max_steps: usize,
) -> Result<Vec<PositionRecord>> {
    (0..n_trajectories as u64)
        .into_par_iter()
        .map(|i| position_record(dist, spec, master, i, times, q, s_points, max_steps))
        .collect()
}

/// One draw of the limit objects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRecord {
    /// `Delta(t)` at each requested time.
    pub delta: Vec<f64>,
    /// `Z(B(Delta^{-1}(s)))` at each requested `s`.
    pub composite: Vec<f64>,
    /// Horizon reached after any doublings.
    pub t_max: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct LimitSetup<'a> {
    pub v_xi: f64,
    pub mu_xi: f64,
    pub cal: &'a StableCalibration,
    pub res: LimitResolution,
}

pub fn limit_record(setup: &LimitSetup<'_>, master: u64, index: u64, times: &[f64], s_points: &[f64]) -> Result<LimitRecord> {
    let mut draw = LimitDraw::new(
        setup.v_xi,
        setup.mu_xi,
        setup.cal,
        &setup.res,
        LimitStreams::for_draw(master, index),
    )?;
    let delta = times.iter().map(|&t| draw.delta_at(t)).collect::<Result<_>>()?;
    let composite = s_points.iter().map(|&s| draw.composite(s)).collect::<Result<_>>()?;
    Ok(LimitRecord {
        delta,
        composite,
        t_max: draw.t_max(),
    })
}

pub fn limit_ensemble(
    setup: &LimitSetup<'_>,
    master: u64,
    indices: Range<u64>,
    times: &[f64],
    s_points: &[f64],
) -> Result<Vec<LimitRecord>> {
    indices
        .into_par_iter()
        .map(|i| limit_record(setup, master, i, times, s_points))
        .collect()
}

/// Exact identities checked on one randomized instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    /// `T_n` accumulated along the path.
    pub t_direct: f64,
    /// `T_n` as `sum_y bond(y) zeta_y`.
    pub t_scenery: f64,
    pub relative_error: f64,
    /// `bond = bond_minus + bond_plus` on every bond.
    pub bond_split: bool,
    /// `sum_y bond(y) = sum_k |S_k - S_{k-1}|`.
    pub path_length: bool,
    /// `|X(t2) - X(t1)| <= |t2 - t1|` at consecutive probe times.
    pub unit_speed: bool,
}

/// Verification instance `index`: medium on `(Verify, 2 index)`, walk on
/// `(Verify, 2 index + 1)`.
pub fn identity_record(dist: &GapDistribution, spec: &WalkSpec, master: u64, index: u64, n: usize) -> IdentityRecord {
    let mut env = build_environment(dist, rng::derive_seed(master, Purpose::Verify, 2 * index));
    let mut r = rng::stream(master, Purpose::Verify, 2 * index + 1, 0);
    let path = sample_walk(spec, n, &mut r);
    let traj = run_trajectory(&mut env, &path);
    let prof = local_time_profile(&path);
    let t_direct = traj.final_time();
    let t_scenery = scenery_collision_time(&mut env, &prof);
    let relative_error = (t_scenery - t_direct).abs() / t_direct.abs().max(f64::MIN_POSITIVE);

    let bond_split = prof
        .bonds()
        .iter()
        .all(|(y, c)| c == prof.bond_minus(y) + prof.bond_plus(y));
    let total: u64 = prof.bonds().iter().map(|(_, c)| c).sum();
    let travelled: u64 = path.positions().windows(2).map(|w| w[0].abs_diff(w[1])).sum();

    let horizon = t_direct;
    let probes = 64;
    let mut cur = traj.cursor();
    let xs: Vec<(f64, f64)> = (0..=probes)
        .map(|j| {
            let t = horizon * j as f64 / probes as f64;
            (t, cur.position_at(t).expect("probe within horizon"))
        })
        .collect();
    let unit_speed = xs
        .windows(2)
        .all(|w| (w[1].1 - w[0].1).abs() <= (w[1].0 - w[0].0) + 1e-12 * horizon.max(1.0));

    IdentityRecord {
        t_direct,
        t_scenery,
        relative_error,
        bond_split,
        path_length: total == travelled,
        unit_speed,
    }
}

pub fn identity_ensemble(dist: &GapDistribution, spec: &WalkSpec, master: u64, instances: usize, n: usize) -> Vec<IdentityRecord> {
    (0..instances as u64)
        .into_par_iter()
        .map(|i| identity_record(dist, spec, master, i, n))
        .collect()
}

/// Null self-test of the KS machinery: `repetitions` pairs of independent
/// samples of size `size` from the gap law; returns the p-values.
pub fn ks_null_pvalues(dist: &GapDistribution, master: u64, repetitions: usize, size: usize) -> Vec<f64> {
    (0..repetitions as u64)
        .into_par_iter()
        .map(|i| {
            let mut ra = rng::stream(master, Purpose::NullTest, i, 0);
            let mut rb = rng::stream(master, Purpose::NullTest, i, 1);
            let a: Vec<f64> = (0..size).map(|_| sample_gap(dist, &mut ra)).collect();
            let b: Vec<f64> = (0..size).map(|_| sample_gap(dist, &mut rb)).collect();
            crate::stats::ks_two_sample(&a, &b).expect("nonempty samples").p_value
        })
        .collect()
}

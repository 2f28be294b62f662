use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::analysis::{
    analyze_tables, AnalysisParams, Check, FitRow, KsRow, QuantileRow, SampleTable, IDENTITY_TOLERANCE,
    KS_ALLOWANCE, KS_LEVEL,
};
use super::config::{ConfigError, ExperimentConfig};
use super::ensemble::{
    identity_ensemble, ks_null_pvalues, limit_ensemble, position_ensemble, walk_ensemble, LimitSetup,
};
use crate::heavy_tail::{calibrate_stable_scale, CalibrationRequest, StableCalibration};
use crate::limit::{local_time_field, LimitDraw, LimitStreams};
use crate::rng::Purpose;

/// Repetitions and sample size of the KS null self-test.
pub const NULL_REPETITIONS: usize = 100;
pub const NULL_SIZE: usize = 10_000;
/// Minimum number of the null repetitions with `p > 0.01`.
pub const NULL_MIN_ACCEPTED: usize = 98;
/// Number of limit draws whose invariants `verify` checks.
pub const VERIFY_LIMIT_DRAWS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    LimitSample,
    Verify,
    Analyze,
    Calibrate,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed table {path}: {reason}")]
    Table { path: PathBuf, reason: String },
    #[error("no sample tables found in {0}")]
    NoSamples(PathBuf),
    #[error("cannot build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which streams a run consumed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamUse {
    pub purpose: Purpose,
    pub indices: String,
    pub sub_streams: String,
    pub role: String,
}

fn stream_use(purpose: Purpose, indices: String, sub_streams: &str, role: &str) -> StreamUse {
    StreamUse {
        purpose,
        indices,
        sub_streams: sub_streams.into(),
        role: role.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInfo {
    pub calibration: StableCalibration,
    pub analytic_scale: f64,
    pub relative_difference: f64,
    pub n_block: usize,
    pub n_samples: usize,
    pub ceiling: f64,
}

/// Run metadata written to `manifest.json`. Contains no wall-clock data, so
/// it is a pure function of the configuration and the code version.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub version: String,
    pub config: ExperimentConfig,
    pub stream_audit: Vec<StreamUse>,
    pub calibration: Option<CalibrationInfo>,
    pub ks_level: f64,
    pub ks_allowance: f64,
    pub summary: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub skipped: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub manifest: Manifest,
    pub quantiles: Vec<QuantileRow>,
    pub fits: Vec<FitRow>,
    pub kstests: Vec<KsRow>,
    /// Tables written under `samples/`; empty for `analyze`.
    pub samples: Vec<SampleTable>,
}

impl EnsembleResult {
    pub fn all_checks_passed(&self) -> bool {
        self.manifest.checks.iter().all(|c| c.passed)
    }
}

struct Partial {
    samples: Vec<SampleTable>,
    audit: Vec<StreamUse>,
    calibration: Option<CalibrationInfo>,
    summary: BTreeMap<String, f64>,
    checks: Vec<Check>,
}

impl Partial {
    fn new() -> Self {
        Self {
            samples: Vec::new(),
            audit: Vec::new(),
            calibration: None,
            summary: BTreeMap::new(),
            checks: Vec::new(),
        }
    }
}

/// Validates `cfg` and executes `command` on a pool of `cfg.workers` threads.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<EnsembleResult, RunError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    pool.install(|| run_in_pool(command, cfg))
}

fn run_in_pool(command: Command, cfg: &ExperimentConfig) -> Result<EnsembleResult, RunError> {
    let (part, inputs) = match command {
        Command::Simulate => (simulate(cfg)?, None),
        Command::LimitSample => (limit_sample(cfg)?, None),
        Command::Verify => (verify(cfg)?, None),
        Command::Calibrate => (calibrate(cfg)?, None),
        Command::Analyze => (Partial::new(), Some(read_samples(&cfg.output_dir.join("samples"))?)),
    };
    let spec = cfg.walk_spec()?;
    let params = AnalysisParams {
        alpha: cfg.alpha,
        mu_xi: spec.mu_xi(),
        x_bar_q: cfg.x_bar_q,
        quantile_levels: &cfg.quantile_levels,
    };
    let tables = inputs.as_deref().unwrap_or(&part.samples);
    let analysis = analyze_tables(tables, &params);
    let mut checks = part.checks;
    if command != Command::Verify && command != Command::Calibrate {
        checks.extend(analysis.checks);
    }
    Ok(EnsembleResult {
        manifest: Manifest {
            command,
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            stream_audit: part.audit,
            calibration: part.calibration,
            ks_level: KS_LEVEL,
            ks_allowance: KS_ALLOWANCE,
            summary: part.summary,
            checks,
            skipped: analysis.skipped,
        },
        quantiles: analysis.quantiles,
        fits: analysis.fits,
        kstests: analysis.kstests,
        samples: part.samples,
    })
}

fn simulate(cfg: &ExperimentConfig) -> Result<Partial, RunError> {
    let dist = cfg.gap_distribution()?;
    let spec = cfg.walk_spec()?;
    let n = cfg.n_trajectories;
    let mut part = Partial::new();
    part.audit = vec![
        stream_use(Purpose::Medium, format!("0..{n}"), "site k", "gap zeta_k of trajectory i"),
        stream_use(Purpose::Walk, format!("0..{n}"), "0", "increments of trajectory i"),
    ];

    let walks = walk_ensemble(&dist, &spec, cfg.master_seed, n, &cfg.scales);
    let names: [(&str, &str); 8] = [
        ("s", "s"),
        ("y", "y"),
        ("t", "t"),
        ("scenery", "scenery_sum"),
        ("range", "range"),
        ("self_intersection", "self_intersection"),
        ("site_power_half", "sum_sqrt_site_local_time"),
        ("bond_deviation", "sum_bond_deviation_power"),
    ];
    let mut tables: Vec<SampleTable> = names
        .iter()
        .map(|(name, value)| SampleTable::new(name, "trajectory", "n", value))
        .collect();
    for (k, &scale) in cfg.scales.iter().enumerate() {
        for (i, w) in walks.iter().enumerate() {
            let c = &w[k];
            let values = [
                c.s as f64,
                c.y,
                c.t,
                c.scenery,
                c.range as f64,
                c.self_intersection as f64,
                c.site_power_half,
                c.bond_deviation,
            ];
            for (tab, v) in tables.iter_mut().zip(values) {
                tab.push(i as u64, scale as f64, v);
            }
        }
    }

    let positions = position_ensemble(
        &dist,
        &spec,
        cfg.master_seed,
        n,
        &cfg.x_times,
        cfg.x_bar_q,
        &cfg.s_points,
        cfg.max_steps,
    )?;
    let mut x = SampleTable::new("x", "trajectory", "time", "x");
    let mut x_bar = SampleTable::new("x_bar", "trajectory", "s", "x_bar");
    for (j, &t) in cfg.x_times.iter().enumerate() {
        for (i, p) in positions.iter().enumerate() {
            x.push(i as u64, t, p.x[j]);
        }
    }
    for (j, &s) in cfg.s_points.iter().enumerate() {
        for (i, p) in positions.iter().enumerate() {
            x_bar.push(i as u64, s, p.x_bar[j]);
        }
    }
    let steps: Vec<f64> = positions.iter().map(|p| p.steps as f64).collect();
    part.summary.insert("x_steps_mean".into(), steps.iter().sum::<f64>() / steps.len() as f64);
    part.summary.insert("x_steps_max".into(), steps.iter().copied().fold(0.0, f64::max));
    tables.push(x);
    tables.push(x_bar);
    part.samples = tables;
    Ok(part)
}

fn calibration_info(cfg: &ExperimentConfig) -> Result<CalibrationInfo, crate::Error> {
    let dist = cfg.gap_distribution()?;
    let req = CalibrationRequest {
        n_block: cfg.calibration_block,
        n_samples: cfg.calibration_samples,
        seed: cfg.master_seed,
        ceiling: cfg.calibration_ceiling,
    };
    let cal = calibrate_stable_scale(&dist, &req)?;
    let analytic = cal.analytic_scale();
    Ok(CalibrationInfo {
        relative_difference: (cal.scale - analytic) / analytic,
        calibration: cal,
        analytic_scale: analytic,
        n_block: req.n_block,
        n_samples: req.n_samples,
        ceiling: req.ceiling,
    })
}

fn calibration_audit(cfg: &ExperimentConfig) -> [StreamUse; 2] {
    let m = cfg.calibration_samples;
    [
        stream_use(Purpose::CalibrationBlock, format!("0..{m}"), "0", "gap block sum i"),
        stream_use(Purpose::CalibrationStable, format!("0..{m}"), "0", "reference stable draw i"),
    ]
}

fn limit_sample(cfg: &ExperimentConfig) -> Result<Partial, RunError> {
    let spec = cfg.walk_spec()?;
    let info = calibration_info(cfg)?;
    let setup = LimitSetup {
        v_xi: spec.v_xi(),
        mu_xi: spec.mu_xi(),
        cal: &info.calibration,
        res: cfg.limit_resolution(spec.v_xi()),
    };
    let m = cfg.limit_draws;
    let records = limit_ensemble(&setup, cfg.master_seed, 0..m as u64, &cfg.limit_times, &cfg.s_points)?;

    let mut part = Partial::new();
    part.audit.extend(calibration_audit(cfg));
    part.audit.push(stream_use(Purpose::Brownian, format!("0..{m}"), "0", "Brownian path of draw i"));
    part.audit.push(stream_use(Purpose::Subordinator, format!("0..{m}"), "1, 2", "Z+ and Z- increments of draw i"));

    let mut delta = SampleTable::new("delta", "draw", "time", "delta");
    let mut comp = SampleTable::new("composite", "draw", "s", "composite");
    for (j, &t) in cfg.limit_times.iter().enumerate() {
        for (i, r) in records.iter().enumerate() {
            delta.push(i as u64, t, r.delta[j]);
        }
    }
    for (j, &s) in cfg.s_points.iter().enumerate() {
        for (i, r) in records.iter().enumerate() {
            comp.push(i as u64, s, r.composite[j]);
        }
    }
    let horizons: Vec<f64> = records.iter().map(|r| r.t_max).collect();
    part.summary.insert("limit_t_max_mean".into(), horizons.iter().sum::<f64>() / horizons.len() as f64);
    part.summary.insert("limit_t_max_max".into(), horizons.iter().copied().fold(0.0, f64::max));
    part.summary.insert("calibrated_scale".into(), info.calibration.scale);
    part.calibration = Some(info);
    part.samples = vec![delta, comp];
    Ok(part)
}

fn verify(cfg: &ExperimentConfig) -> Result<Partial, RunError> {
    let dist = cfg.gap_distribution()?;
    let spec = cfg.walk_spec()?;
    let mut part = Partial::new();
    let (k, n) = (cfg.verify_instances, cfg.verify_steps);

    let ids = identity_ensemble(&dist, &spec, cfg.master_seed, k, n);
    let worst = ids.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    let mut err_table = SampleTable::new("identity_error", "instance", "n", "relative_error");
    for (i, r) in ids.iter().enumerate() {
        err_table.push(i as u64, n as f64, r.relative_error);
    }
    part.summary.insert("identity_max_relative_error".into(), worst);
    part.checks.push(Check::new(
        "scenery_identity",
        worst <= IDENTITY_TOLERANCE,
        format!("max relative error {worst:e} over {k} instances of {n} steps"),
    ));
    let count = |f: fn(&super::ensemble::IdentityRecord) -> bool| ids.iter().filter(|r| f(r)).count();
    for (name, ok) in [
        ("bond_split", count(|r| r.bond_split)),
        ("path_length", count(|r| r.path_length)),
        ("unit_speed", count(|r| r.unit_speed)),
    ] {
        part.checks.push(Check::new(name, ok == k, format!("{ok} of {k} instances")));
    }

    let pvals = ks_null_pvalues(&dist, cfg.master_seed, NULL_REPETITIONS, NULL_SIZE);
    let accepted = pvals.iter().filter(|&&p| p > KS_LEVEL).count();
    let mut null_table = SampleTable::new("ks_null", "repetition", "size", "p_value");
    for (i, &p) in pvals.iter().enumerate() {
        null_table.push(i as u64, NULL_SIZE as f64, p);
    }
    part.checks.push(Check::new(
        "ks_null_rate",
        accepted >= NULL_MIN_ACCEPTED,
        format!("{accepted} of {NULL_REPETITIONS} null comparisons with p > {KS_LEVEL}"),
    ));

    // limit invariants, with the analytic stable scale
    let cal = StableCalibration::new(&dist, 1.0)?;
    let cal = StableCalibration::new(&dist, cal.analytic_scale())?;
    let res = cfg.limit_resolution(spec.v_xi());
    let m = VERIFY_LIMIT_DRAWS.min(cfg.limit_draws);
    let mut occupation_worst = 0.0f64;
    let (mut delta_ok, mut z_ok) = (0, 0);
    for i in 0..m as u64 {
        let draw = LimitDraw::new(spec.v_xi(), spec.mu_xi(), &cal, &res, LimitStreams::for_draw(cfg.master_seed, i))?;
        let ltf = local_time_field(draw.brownian(), res.dx, &cfg.limit_times)?;
        for j in 0..cfg.limit_times.len() {
            let snapped = (cfg.limit_times[j] / res.dt).round() * res.dt;
            occupation_worst = occupation_worst.max((ltf.occupation(j) - snapped).abs() / snapped);
        }
        delta_ok += draw.ks_sample().delta.windows(2).all(|w| w[1] > w[0]) as usize;
        z_ok += draw.field().edge_values().windows(2).all(|w| w[1].1 > w[0].1) as usize;
    }
    part.checks.push(Check::new(
        "occupation_identity",
        occupation_worst <= IDENTITY_TOLERANCE,
        format!("max relative error {occupation_worst:e} over {m} draws"),
    ));
    part.checks.push(Check::new("delta_monotone", delta_ok == m, format!("{delta_ok} of {m} draws")));
    part.checks.push(Check::new("z_monotone", z_ok == m, format!("{z_ok} of {m} draws")));

    part.audit = vec![
        stream_use(Purpose::Verify, format!("even 0..{}", 2 * k), "site k", "gap zeta_k of instance i / 2"),
        stream_use(Purpose::Verify, format!("odd 1..{}", 2 * k), "0", "increments of instance (i - 1) / 2"),
        stream_use(Purpose::NullTest, format!("0..{NULL_REPETITIONS}"), "0, 1", "the two null samples"),
        stream_use(Purpose::Brownian, format!("0..{m}"), "0", "Brownian path of draw i"),
        stream_use(Purpose::Subordinator, format!("0..{m}"), "1, 2", "Z+ and Z- increments of draw i"),
    ];
    part.samples = vec![err_table, null_table];
    Ok(part)
}

fn calibrate(cfg: &ExperimentConfig) -> Result<Partial, RunError> {
    let mut part = Partial::new();
    part.audit.extend(calibration_audit(cfg));
    match calibration_info(cfg) {
        Ok(info) => {
            let ks = info.calibration.achieved_ks.unwrap_or(f64::NAN);
            part.summary.insert("calibrated_scale".into(), info.calibration.scale);
            part.summary.insert("analytic_scale".into(), info.analytic_scale);
            part.summary.insert("achieved_ks".into(), ks);
            part.checks.push(Check::new(
                "calibration_ks",
                ks < info.ceiling,
                format!("achieved {ks:.4}, ceiling {:.4}", info.ceiling),
            ));
            part.calibration = Some(info);
        }
        Err(crate::Error::CalibrationFailure { achieved, ceiling }) => {
            part.summary.insert("achieved_ks".into(), achieved);
            part.checks.push(Check::new(
                "calibration_ks",
                false,
                format!("achieved {achieved:.4}, ceiling {ceiling:.4}"),
            ));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(part)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RunError::Table {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let table_err = |e: csv::Error| RunError::Table {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    w.write_record(header).map_err(table_err)?;
    for r in rows {
        w.write_record(&r).map_err(table_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `manifest.json`, `quantiles.csv`, `fits.csv`, `kstests.csv`,
/// `samples/<name>.csv` and `timing.json` under `dir`.
pub fn write_outputs(result: &EnsembleResult, dir: &Path, elapsed_seconds: f64) -> Result<(), RunError> {
    let samples_dir = dir.join("samples");
    fs::create_dir_all(&samples_dir).map_err(io_err(&samples_dir))?;

    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&result.manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;

    let timing_path = dir.join("timing.json");
    let timing = serde_json::json!({ "command": result.manifest.command, "wall_clock_seconds": elapsed_seconds });
    fs::write(&timing_path, timing.to_string() + "\n").map_err(io_err(&timing_path))?;

    write_csv(
        &dir.join("quantiles.csv"),
        &["quantity", "scale", "time_point", "quantile_level", "value"],
        result.quantiles.iter().map(|r| {
            vec![
                r.quantity.clone(),
                fmt_f64(r.scale),
                fmt_f64(r.time_point),
                fmt_f64(r.quantile_level),
                fmt_f64(r.value),
            ]
        }),
    )?;
    write_csv(
        &dir.join("fits.csv"),
        &["quantity", "slope", "stderr", "target_exponent"],
        result
            .fits
            .iter()
            .map(|r| vec![r.quantity.clone(), fmt_f64(r.slope), fmt_f64(r.stderr), fmt_f64(r.target_exponent)]),
    )?;
    write_csv(
        &dir.join("kstests.csv"),
        &["name", "D", "n_a", "n_b", "p", "threshold"],
        result.kstests.iter().map(|r| {
            vec![
                r.name.clone(),
                fmt_f64(r.d),
                r.n_a.to_string(),
                r.n_b.to_string(),
                fmt_f64(r.p),
                fmt_f64(r.threshold),
            ]
        }),
    )?;
    for t in &result.samples {
        let header: Vec<&str> = t.columns.iter().map(String::as_str).collect();
        write_csv(
            &samples_dir.join(format!("{}.csv", t.name)),
            &header,
            t.rows
                .iter()
                .map(|r| vec![r.index.to_string(), fmt_f64(r.abscissa), fmt_f64(r.value)]),
        )?;
    }
    Ok(())
}

/// Reads every `<name>.csv` under `dir` as a three-column sample table.
pub fn read_samples(dir: &Path) -> Result<Vec<SampleTable>, RunError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(RunError::NoSamples(dir.to_path_buf()));
    }
    paths.iter().map(|p| read_table(p)).collect()
}

fn read_table(path: &Path) -> Result<SampleTable, RunError> {
    let bad = |reason: String| RunError::Table {
        path: path.to_path_buf(),
        reason,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() != 3 {
        return Err(bad(format!("expected 3 columns, found {}", header.len())));
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let mut table = SampleTable::new(name, &header[0], &header[1], &header[2]);
    for rec in rdr.deserialize::<(u64, f64, f64)>() {
        let (index, abscissa, value) = rec.map_err(|e| bad(e.to_string()))?;
        table.push(index, abscissa, value);
    }
    Ok(table)
}

/// [`run`] followed by [`write_outputs`] into `cfg.output_dir`.
pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<EnsembleResult, RunError> {
    let start = Instant::now();
    let result = run(command, cfg)?;
    write_outputs(&result, &cfg.output_dir, start.elapsed().as_secs_f64())?;
    Ok(result)
}

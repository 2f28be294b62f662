//! Pure post-processing of sample tables: quantile tables, exponent fits, KS
//! comparisons and the pass/fail checks built on them.

use serde::{Deserialize, Serialize};

use crate::stats::{ks_critical_value, ks_two_sample, power_law_fit, quantile, quantile_exponent_fit, ExponentFit};

/// Extra KS distance allowed for discretization of the limit samplers and
/// finite simulation scales.
pub const KS_ALLOWANCE: f64 = 0.05;
/// Level of the KS critical values.
pub const KS_LEVEL: f64 = 0.01;
/// Maximum relative error of the scenery identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub index: u64,
    pub abscissa: f64,
    pub value: f64,
}

/// Raw per-realization values: `rows` are grouped by abscissa, in index order
/// within a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTable {
    pub name: String,
    pub columns: [String; 3],
    pub rows: Vec<SampleRow>,
}

impl SampleTable {
    pub fn new(name: &str, index: &str, abscissa: &str, value: &str) -> Self {
        Self {
            name: name.into(),
            columns: [index.into(), abscissa.into(), value.into()],
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, index: u64, abscissa: f64, value: f64) {
        self.rows.push(SampleRow { index, abscissa, value });
    }

    /// `(abscissa, values)` in order of first appearance.
    pub fn groups(&self) -> Vec<(f64, Vec<f64>)> {
        let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
        for r in &self.rows {
            match out.iter_mut().find(|(a, _)| a.to_bits() == r.abscissa.to_bits()) {
                Some((_, v)) => v.push(r.value),
                None => out.push((r.abscissa, vec![r.value])),
            }
        }
        out
    }

    pub fn at(&self, abscissa: f64) -> Option<Vec<f64>> {
        self.groups()
            .into_iter()
            .find(|(a, _)| (a - abscissa).abs() <= 1e-12 * abscissa.abs().max(1.0))
            .map(|(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub quantity: String,
    pub scale: f64,
    pub time_point: f64,
    pub quantile_level: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub quantity: String,
    pub slope: f64,
    pub stderr: f64,
    pub target_exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsRow {
    pub name: String,
    #[serde(rename = "D")]
    pub d: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub p: f64,
    /// `D` at the critical level plus the discretization allowance.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Model parameters the analysis needs.
#[derive(Clone, Copy, Debug)]
pub struct AnalysisParams<'a> {
    pub alpha: f64,
    pub mu_xi: f64,
    pub x_bar_q: f64,
    pub quantile_levels: &'a [f64],
}

/// Everything derived from a set of sample tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub quantiles: Vec<QuantileRow>,
    pub fits: Vec<FitRow>,
    pub kstests: Vec<KsRow>,
    pub checks: Vec<Check>,
    /// Analyses that could not be carried out, with the reason.
    pub skipped: Vec<String>,
}

/// How a quantity enters the fits.
#[derive(Clone, Copy)]
enum FitKind {
    /// Quantiles of `|value|` against the scale.
    Quantile,
    /// Ensemble mean against the scale.
    Mean,
}

struct FitPlan {
    table: &'static str,
    quantity: &'static str,
    kind: FitKind,
    target: f64,
    /// Accepted slope interval.
    band: (f64, f64),
}

fn fit_plans(alpha: f64) -> Vec<FitPlan> {
    let y = 1.0 / (2.0 * alpha);
    let t = (1.0 + alpha) / (2.0 * alpha);
    let x = 1.0 / (alpha + 1.0);
    let nb = 0.5 + alpha / 4.0;
    vec![
        FitPlan { table: "y", quantity: "abs_y", kind: FitKind::Quantile, target: y, band: (y - 0.07, y + 0.07) },
        FitPlan { table: "t", quantity: "t", kind: FitKind::Quantile, target: t, band: (t - 0.07, t + 0.07) },
        FitPlan { table: "x", quantity: "abs_x", kind: FitKind::Quantile, target: x, band: (x - 0.07, x + 0.07) },
        FitPlan { table: "range", quantity: "mean_range", kind: FitKind::Mean, target: 0.5, band: (0.45, 0.55) },
        FitPlan {
            table: "self_intersection",
            quantity: "mean_self_intersection",
            kind: FitKind::Mean,
            target: 1.5,
            band: (1.40, 1.60),
        },
        FitPlan {
            table: "site_power_half",
            quantity: "mean_site_power_half",
            kind: FitKind::Mean,
            target: 0.75,
            band: (0.70, 0.80),
        },
        FitPlan {
            table: "bond_deviation",
            quantity: "mean_bond_deviation",
            kind: FitKind::Mean,
            target: nb,
            band: (f64::NEG_INFINITY, nb + 0.075),
        },
    ]
}

fn fit_row(quantity: String, fit: &ExponentFit, target: f64) -> FitRow {
    FitRow {
        quantity,
        slope: fit.slope,
        stderr: fit.stderr_slope,
        target_exponent: target,
    }
}

fn level_tag(level: f64) -> String {
    format!("q{level}")
}

/// KS comparison with its acceptance threshold.
pub fn ks_row(name: impl Into<String>, a: &[f64], b: &[f64]) -> crate::Result<KsRow> {
    let r = ks_two_sample(a, b)?;
    Ok(KsRow {
        name: name.into(),
        d: r.statistic,
        n_a: r.n_a,
        n_b: r.n_b,
        p: r.p_value,
        threshold: ks_critical_value(KS_LEVEL, r.n_a, r.n_b) + KS_ALLOWANCE,
    })
}

fn ks_check(row: &KsRow) -> Check {
    Check::new(
        format!("ks:{}", row.name),
        row.d < row.threshold,
        format!("D = {:.4}, threshold {:.4}, p = {:.4}", row.d, row.threshold, row.p),
    )
}

fn find<'a>(tables: &'a [SampleTable], name: &str) -> Option<&'a SampleTable> {
    tables.iter().find(|t| t.name == name)
}

/// Quantile rows of every table that carries a distribution of interest.
fn quantile_rows(tables: &[SampleTable], p: &AnalysisParams<'_>) -> Vec<QuantileRow> {
    // (table, quantity, absolute values, scale of the record)
    let specs: [(&str, &str, bool, Option<f64>); 6] = [
        ("y", "abs_y", true, None),
        ("t", "t", false, None),
        ("x", "abs_x", true, None),
        ("x_bar", "x_bar", false, Some(p.x_bar_q)),
        ("delta", "delta", false, Some(f64::INFINITY)),
        ("composite", "composite", false, Some(f64::INFINITY)),
    ];
    let mut rows = Vec::new();
    for (table, quantity, abs, scale) in specs {
        let Some(tab) = find(tables, table) else { continue };
        for (a, values) in tab.groups() {
            let vals: Vec<f64> = if abs { values.iter().map(|v| v.abs()).collect() } else { values };
            for &level in p.quantile_levels {
                rows.push(QuantileRow {
                    quantity: quantity.into(),
                    scale: scale.unwrap_or(a),
                    time_point: a,
                    quantile_level: level,
                    value: quantile(&vals, level).expect("groups are nonempty"),
                });
            }
        }
    }
    rows
}

/// Runs every analysis the available tables allow.
pub fn analyze_tables(tables: &[SampleTable], p: &AnalysisParams<'_>) -> Analysis {
    let mut out = Analysis {
        quantiles: quantile_rows(tables, p),
        ..Default::default()
    };

    for plan in fit_plans(p.alpha) {
        let Some(tab) = find(tables, plan.table) else { continue };
        let groups = tab.groups();
        match plan.kind {
            FitKind::Quantile => {
                for &level in p.quantile_levels {
                    let quantity = format!("{}_{}", plan.quantity, level_tag(level));
                    match quantile_exponent_fit(&groups, level) {
                        Ok(fit) => {
                            if level == 0.5 {
                                out.checks.push(Check::new(
                                    format!("fit:{quantity}"),
                                    fit.slope >= plan.band.0 && fit.slope <= plan.band.1,
                                    format!("slope {:.4} +- {:.4}, accepted [{:.3}, {:.3}]", fit.slope, fit.stderr_slope, plan.band.0, plan.band.1),
                                ));
                            }
                            out.fits.push(fit_row(quantity, &fit, plan.target));
                        }
                        Err(e) => out.skipped.push(format!("fit {quantity}: {e}")),
                    }
                }
            }
            FitKind::Mean => {
                let scales: Vec<f64> = groups.iter().map(|g| g.0).collect();
                let means: Vec<f64> = groups.iter().map(|g| g.1.iter().sum::<f64>() / g.1.len() as f64).collect();
                match power_law_fit(&scales, &means) {
                    Ok(fit) => {
                        let band = if plan.band.0.is_finite() {
                            format!("accepted [{:.3}, {:.3}]", plan.band.0, plan.band.1)
                        } else {
                            format!("accepted at most {:.3}", plan.band.1)
                        };
                        out.checks.push(Check::new(
                            format!("fit:{}", plan.quantity),
                            fit.slope >= plan.band.0 && fit.slope <= plan.band.1,
                            format!("slope {:.4} +- {:.4}, {band}", fit.slope, fit.stderr_slope),
                        ));
                        out.fits.push(fit_row(plan.quantity.into(), &fit, plan.target));
                    }
                    Err(e) => out.skipped.push(format!("fit {}: {e}", plan.quantity)),
                }
            }
        }
    }

    let delta = find(tables, "delta");
    let t_exp = (1.0 + p.alpha) / (2.0 * p.alpha);

    if let (Some(xb), Some(comp)) = (find(tables, "x_bar"), find(tables, "composite")) {
        for (s, sim) in xb.groups() {
            if let Some(lim) = comp.at(s) {
                if let Ok(row) = ks_row(format!("x_bar_s{s}_vs_composite"), &sim, &lim) {
                    out.checks.push(ks_check(&row));
                    out.kstests.push(row);
                }
            }
        }
    }

    if let Some(d1) = delta.and_then(|d| d.at(1.0)) {
        if let Some(sc) = find(tables, "scenery") {
            if let Some((n, sums)) = sc.groups().pop() {
                let norm = n.powf(-t_exp);
                let rescaled: Vec<f64> = sums.iter().map(|v| v * norm).collect();
                let limit: Vec<f64> = d1.iter().map(|v| v / p.mu_xi).collect();
                if let Ok(row) = ks_row(format!("rwrs_n{n}_vs_delta_t1"), &rescaled, &limit) {
                    out.checks.push(ks_check(&row));
                    out.kstests.push(row);
                }
            }
        }
        if let Some(tt) = find(tables, "t") {
            if let Some((n, ts)) = tt.groups().pop() {
                let norm = n.powf(-t_exp);
                let rescaled: Vec<f64> = ts.iter().map(|v| v * norm).collect();
                if let Ok(row) = ks_row(format!("t_bar_n{n}_vs_delta_t1"), &rescaled, &d1) {
                    out.kstests.push(row);
                }
            }
        }
    }

    if let Some(d) = delta {
        let groups: Vec<(f64, Vec<f64>)> = d
            .groups()
            .into_iter()
            .map(|(t, v)| (t, v.into_iter().map(|x| x / t.powf(t_exp)).collect()))
            .collect();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let name = format!("delta_self_similarity_t{}_vs_t{}", groups[i].0, groups[j].0);
                if let Ok(row) = ks_row(name, &groups[i].1, &groups[j].1) {
                    out.checks.push(ks_check(&row));
                    out.kstests.push(row);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> AnalysisParams<'static> {
        AnalysisParams {
            alpha: 0.5,
            mu_xi: 1.0,
            x_bar_q: 1e4,
            quantile_levels: &[0.25, 0.5, 0.75],
        }
    }

    #[test]
    fn groups_keep_order() {
        let mut t = SampleTable::new("y", "trajectory", "n", "y");
        t.push(0, 10.0, 1.0);
        t.push(0, 100.0, 2.0);
        t.push(1, 10.0, 3.0);
        assert_eq!(t.groups(), vec![(10.0, vec![1.0, 3.0]), (100.0, vec![2.0])]);
        assert_eq!(t.at(100.0), Some(vec![2.0]));
        assert_eq!(t.at(5.0), None);
    }

    #[test]
    fn planted_exponents_pass_their_checks() {
        let mut y = SampleTable::new("y", "trajectory", "n", "y");
        let mut r = SampleTable::new("range", "trajectory", "n", "range");
        for &n in &[1e3, 1e4, 1e5, 1e6] {
            for i in 0..300u64 {
                let u = (i as f64 + 0.5) / 300.0;
                y.push(i, n, if i % 2 == 0 { n * u } else { -n * u });
                r.push(i, n, n.sqrt() * (1.0 + u));
            }
        }
        let a = analyze_tables(&[y, r], &params());
        assert!(a.checks.iter().all(|c| c.passed), "{:?}", a.checks);
        assert_eq!(a.checks.len(), 2);
        let fy = a.fits.iter().find(|f| f.quantity == "abs_y_q0.5").unwrap();
        assert!((fy.slope - 1.0).abs() < 1e-12);
        assert_eq!(a.quantiles.len(), 12);
    }

    #[test]
    fn too_few_scales_are_skipped_not_fatal() {
        let mut y = SampleTable::new("y", "trajectory", "n", "y");
        for i in 0..10u64 {
            y.push(i, 1000.0, i as f64);
        }
        let a = analyze_tables(&[y], &params());
        assert!(a.fits.is_empty());
        assert_eq!(a.skipped.len(), 3);
        assert_eq!(a.quantiles.len(), 3);
    }

    #[test]
    fn identical_samples_pass_ks_checks() {
        let mut xb = SampleTable::new("x_bar", "trajectory", "s", "x_bar");
        let mut comp = SampleTable::new("composite", "draw", "s", "composite");
        for i in 0..500u64 {
            xb.push(i, 1.0, i as f64);
            comp.push(i, 1.0, i as f64);
        }
        let a = analyze_tables(&[xb, comp], &params());
        assert_eq!(a.kstests.len(), 1);
        assert_eq!(a.kstests[0].d, 0.0);
        assert!(a.checks[0].passed);
    }
}

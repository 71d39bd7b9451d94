//! Replication harness for the simulation study: lag-selection frequencies,
//! sparsity-detection loss (SL) and averaged spectral distances (AD) of the
//! adaptive and debiased estimates, plus optional band coverage.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{companion, ma_coefficients, simulate_var, table1_dgp, DEFAULT_BURN_IN};
use crate::error::{HdlpError, Result};
use crate::inference::{bands_for_fit, fit_horizon, HorizonFit};
use crate::lp::select_lag;
use crate::panel::format_f64;
use crate::solver::PenaltyConfig;
use crate::stats::spectral_norm;

/// Share of failed replications above which a scenario is rejected.
pub const MAX_FAILURE_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McScenario {
    pub n_vars: usize,
    pub n_obs: usize,
    pub replications: usize,
    pub horizons: Vec<usize>,
    pub p_true: usize,
    pub p_max: usize,
    /// Horizons used for lag selection (one `p_hat` per entry).
    pub h_select: Vec<usize>,
    pub base_seed: u64,
    pub burn_in: usize,
    pub config: PenaltyConfig,
    /// True entries with `|b| <= tol_zero` count as zeros in SL.
    pub tol_zero: f64,
    /// Band level for coverage of the true nonzero impulse responses.
    pub coverage_level: Option<f64>,
}

impl McScenario {
    /// The simulation-study defaults for a given `(N, T, R)`.
    pub fn table1(n_vars: usize, n_obs: usize, replications: usize) -> Self {
        McScenario {
            n_vars,
            n_obs,
            replications,
            horizons: vec![1, 5, 10],
            p_true: 2,
            p_max: 5,
            h_select: vec![1, 2],
            base_seed: 0,
            burn_in: DEFAULT_BURN_IN,
            config: PenaltyConfig::default(),
            tol_zero: 0.0,
            coverage_level: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.replications == 0 {
            return Err(HdlpError::InvalidArgument("need at least one replication".into()));
        }
        if self.n_vars == 0 || self.n_vars % 2 != 0 {
            return Err(HdlpError::InvalidArgument(format!(
                "N must be even, got {}",
                self.n_vars
            )));
        }
        if self.horizons.is_empty() || self.h_select.is_empty() {
            return Err(HdlpError::InvalidArgument("horizon lists must be nonempty".into()));
        }
        if let Some(h) = self.horizons.iter().find(|h| **h == 0 || **h > self.n_obs / 2) {
            return Err(HdlpError::InvalidArgument(format!(
                "horizon {h} outside 1..={} (T/2)",
                self.n_obs / 2
            )));
        }
        if self.p_max == 0 || self.p_true == 0 {
            return Err(HdlpError::InvalidArgument("lag orders must be >= 1".into()));
        }
        if !(self.tol_zero >= 0.0) {
            return Err(HdlpError::InvalidArgument(format!(
                "tol_zero must be >= 0, got {}",
                self.tol_zero
            )));
        }
        if let Some(level) = self.coverage_level {
            if !(level > 0.0 && level < 1.0) {
                return Err(HdlpError::InvalidArgument(format!(
                    "coverage level must be in (0, 1), got {level}"
                )));
            }
        }
        Ok(())
    }

    fn seed(&self, r: usize) -> u64 {
        self.base_seed.wrapping_add(r as u64)
    }

    /// True impulse responses `B_h` for every requested horizon.
    pub fn truth(&self) -> Result<BTreeMap<usize, DMatrix<f64>>> {
        let cf = companion(&table1_dgp(self.n_vars)?)?;
        let max_h = self.horizons.iter().copied().max().unwrap_or(0);
        let bs = ma_coefficients(&cf, max_h);
        Ok(self.horizons.iter().map(|&h| (h, bs[h].clone())).collect())
    }
}

/// Band coverage of the true nonzero entries at one horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCount {
    pub covered: usize,
    /// Number of true nonzero entries.
    pub total: usize,
    /// True nonzeros outside the adaptive support (their bands still count).
    pub unselected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRecord {
    pub ell: usize,
    pub horizon: usize,
    pub p_hat: usize,
    /// Adaptive support of the impulse block.
    pub mask: DMatrix<bool>,
    pub a_adaptive: DMatrix<f64>,
    /// Debiased impulse block restricted to the adaptive support.
    pub a_debiased: DMatrix<f64>,
    pub sl: f64,
    pub ad_a: f64,
    pub ad_d: f64,
    pub coverage: Option<CoverageCount>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    /// `p_hat` per selection horizon.
    pub p_hat: BTreeMap<usize, usize>,
    pub horizons: Vec<HorizonRecord>,
    pub failure: Option<String>,
}

impl ReplicationRecord {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// `(1/N^2) sum |I(mask == 0) - I(|b| <= tol_zero)|`.
pub fn metric_sl(mask: &DMatrix<bool>, truth: &DMatrix<f64>, tol_zero: f64) -> Result<f64> {
    if mask.shape() != truth.shape() {
        return Err(HdlpError::DimensionMismatch(format!(
            "mask {:?} vs truth {:?}",
            mask.shape(),
            truth.shape()
        )));
    }
    let wrong = mask
        .iter()
        .zip(truth.iter())
        .filter(|(m, b)| **m == (b.abs() <= tol_zero))
        .count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Spectral norm of `est - truth`.
pub fn metric_ad(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(HdlpError::DimensionMismatch(format!(
            "estimate {:?} vs truth {:?}",
            est.shape(),
            truth.shape()
        )));
    }
    Ok(spectral_norm(&(est - truth)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionFrequencies {
    pub s_minus: f64,
    pub s_correct: f64,
    pub s_plus: f64,
}

/// Under-, correct and over-selection frequencies per selection horizon over
/// the successful records.
pub fn metric_selection(records: &[ReplicationRecord], p_true: usize) -> BTreeMap<usize, SelectionFrequencies> {
    let mut counts: BTreeMap<usize, [usize; 3]> = BTreeMap::new();
    for rec in records.iter().filter(|r| !r.failed()) {
        for (&ell, &p) in &rec.p_hat {
            let slot = counts.entry(ell).or_default();
            slot[usize::from(p >= p_true) + usize::from(p > p_true)] += 1;
        }
    }
    counts
        .into_iter()
        .map(|(ell, [under, correct, over])| {
            let total = (under + correct + over) as f64;
            (
                ell,
                SelectionFrequencies {
                    s_minus: under as f64 / total,
                    s_correct: correct as f64 / total,
                    s_plus: over as f64 / total,
                },
            )
        })
        .collect()
}

fn coverage_count(fit: &HorizonFit, level: f64, truth: &DMatrix<f64>, config: &PenaltyConfig) -> Result<CoverageCount> {
    let band = bands_for_fit(fit, level, config)?;
    let mut count = CoverageCount::default();
    for ((i, j), b) in (0..truth.nrows())
        .flat_map(|i| (0..truth.ncols()).map(move |j| (i, j)))
        .map(|ij| (ij, truth[ij]))
    {
        if b == 0.0 {
            continue;
        }
        count.total += 1;
        count.covered += usize::from(band.covers(i, j, b));
        count.unselected += usize::from(!band.selected[(i, j)]);
    }
    Ok(count)
}

fn replicate_inner(
    scenario: &McScenario,
    r: usize,
    truth: &BTreeMap<usize, DMatrix<f64>>,
) -> Result<(BTreeMap<usize, usize>, Vec<HorizonRecord>)> {
    let coefs = table1_dgp(scenario.n_vars)?;
    let series = simulate_var(&coefs, scenario.n_obs, scenario.burn_in, scenario.seed(r))?;
    let cfg = &scenario.config;

    let mut p_hat = BTreeMap::new();
    for &ell in &scenario.h_select {
        let sel = select_lag(&series, &[ell], scenario.p_max, cfg)?;
        p_hat.insert(ell, sel.p_hat);
    }

    // several selection horizons usually agree on p_hat; fit each (p, h) once
    let mut cache: BTreeMap<(usize, usize), (HorizonFit, Option<CoverageCount>)> = BTreeMap::new();
    let mut records = Vec::new();
    for (&ell, &p) in &p_hat {
        for &h in &scenario.horizons {
            let b = &truth[&h];
            let (fit, cov) = match cache.entry((p, h)) {
                Entry::Occupied(slot) => &*slot.into_mut(),
                Entry::Vacant(slot) => {
                    let fit = fit_horizon(&series, p, h, cfg).map_err(|e| e.context(format!("p={p}, h={h}")))?;
                    let cov = match scenario.coverage_level {
                        Some(level) => Some(coverage_count(&fit, level, b, cfg)?),
                        None => None,
                    };
                    &*slot.insert((fit, cov))
                }
            };
            let mask = fit.adaptive.mask_block();
            let a_adaptive = fit.adaptive.impulse_block();
            let a_debiased = fit.sparse_debiased.impulse_block();
            records.push(HorizonRecord {
                ell,
                horizon: h,
                p_hat: p,
                sl: metric_sl(&mask, b, scenario.tol_zero)?,
                ad_a: metric_ad(&a_adaptive, b)?,
                ad_d: metric_ad(&a_debiased, b)?,
                mask,
                a_adaptive,
                a_debiased,
                coverage: *cov,
            });
        }
    }
    Ok((p_hat, records))
}

/// One replication; estimation errors are captured in the record.
pub fn run_replication(scenario: &McScenario, r: usize) -> Result<ReplicationRecord> {
    scenario.validate()?;
    if r >= scenario.replications {
        return Err(HdlpError::InvalidArgument(format!(
            "replication {r} out of range (R={})",
            scenario.replications
        )));
    }
    let truth = scenario.truth()?;
    Ok(record_for(scenario, r, &truth))
}

fn record_for(scenario: &McScenario, r: usize, truth: &BTreeMap<usize, DMatrix<f64>>) -> ReplicationRecord {
    let seed = scenario.seed(r);
    match replicate_inner(scenario, r, truth) {
        Ok((p_hat, horizons)) => ReplicationRecord {
            index: r,
            seed,
            p_hat,
            horizons,
            failure: None,
        },
        Err(e) => {
            log::warn!("replication {r} (seed {seed}) failed: {e}");
            ReplicationRecord {
                index: r,
                seed,
                p_hat: BTreeMap::new(),
                horizons: Vec::new(),
                failure: Some(e.to_string()),
            }
        }
    }
}

/// Mean and Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub mc_se: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let mc_se = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Estimate { mean, mc_se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub ell: usize,
    pub s_minus: Estimate,
    pub s_correct: Estimate,
    pub s_plus: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub ell: usize,
    pub horizon: usize,
    pub sl: Estimate,
    pub ad_a: Estimate,
    pub ad_d: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub ell: usize,
    pub horizon: usize,
    pub level: f64,
    /// Pooled share of true nonzero entries inside their band.
    pub coverage: f64,
    /// Standard error across replications of the per-replication share.
    pub mc_se: f64,
    pub covered: usize,
    pub total: usize,
    pub unselected: usize,
}

/// Scenario aggregate. Wall time is deliberately absent so summaries are
/// byte-comparable across worker counts; the CLI manifest records it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_vars: usize,
    pub n_obs: usize,
    pub replications: usize,
    /// Replications that completed and enter the averages.
    pub replications_used: usize,
    pub failures: Vec<(usize, String)>,
    pub selection: Vec<SelectionSummary>,
    pub accuracy: Vec<AccuracySummary>,
    pub coverage: Vec<CoverageSummary>,
}

fn indicator_estimate(records: &[&ReplicationRecord], ell: usize, pred: impl Fn(usize) -> bool) -> Estimate {
    let xs: Vec<f64> = records
        .iter()
        .map(|r| if pred(r.p_hat[&ell]) { 1.0 } else { 0.0 })
        .collect();
    Estimate::from_samples(&xs)
}

/// Aggregates records in index order.
pub fn summarize(scenario: &McScenario, records: &[ReplicationRecord]) -> Result<McSummary> {
    // reduce in replication order whatever order the records arrived in
    let mut ordered: Vec<&ReplicationRecord> = records.iter().collect();
    ordered.sort_by_key(|r| r.index);
    let failures: Vec<(usize, String)> = ordered
        .iter()
        .filter_map(|r| r.failure.clone().map(|f| (r.index, f)))
        .collect();
    if failures.len() as f64 > MAX_FAILURE_SHARE * records.len() as f64 {
        return Err(HdlpError::ScenarioFailed {
            failures: failures.len(),
            total: records.len(),
        });
    }
    let ok: Vec<&ReplicationRecord> = ordered.into_iter().filter(|r| !r.failed()).collect();
    if ok.is_empty() {
        return Err(HdlpError::ScenarioFailed {
            failures: failures.len(),
            total: records.len(),
        });
    }

    let p = scenario.p_true;
    let selection = scenario
        .h_select
        .iter()
        .map(|&ell| SelectionSummary {
            ell,
            s_minus: indicator_estimate(&ok, ell, |q| q < p),
            s_correct: indicator_estimate(&ok, ell, |q| q == p),
            s_plus: indicator_estimate(&ok, ell, |q| q > p),
        })
        .collect();

    let mut accuracy = Vec::new();
    let mut coverage = Vec::new();
    for &ell in &scenario.h_select {
        for &h in &scenario.horizons {
            let rows: Vec<&HorizonRecord> = ok
                .iter()
                .filter_map(|r| r.horizons.iter().find(|x| x.ell == ell && x.horizon == h))
                .collect();
            let pick =
                |f: fn(&HorizonRecord) -> f64| Estimate::from_samples(&rows.iter().map(|x| f(x)).collect::<Vec<_>>());
            accuracy.push(AccuracySummary {
                ell,
                horizon: h,
                sl: pick(|x| x.sl),
                ad_a: pick(|x| x.ad_a),
                ad_d: pick(|x| x.ad_d),
            });
            if let Some(level) = scenario.coverage_level {
                let counts: Vec<CoverageCount> = rows.iter().filter_map(|x| x.coverage).collect();
                let covered = counts.iter().map(|c| c.covered).sum::<usize>();
                let total = counts.iter().map(|c| c.total).sum::<usize>();
                let shares: Vec<f64> = counts
                    .iter()
                    .filter(|c| c.total > 0)
                    .map(|c| c.covered as f64 / c.total as f64)
                    .collect();
                coverage.push(CoverageSummary {
                    ell,
                    horizon: h,
                    level,
                    coverage: if total > 0 {
                        covered as f64 / total as f64
                    } else {
                        f64::NAN
                    },
                    mc_se: if shares.is_empty() {
                        f64::NAN
                    } else {
                        Estimate::from_samples(&shares).mc_se
                    },
                    covered,
                    total,
                    unselected: counts.iter().map(|c| c.unselected).sum(),
                });
            }
        }
    }

    Ok(McSummary {
        n_vars: scenario.n_vars,
        n_obs: scenario.n_obs,
        replications: records.len(),
        replications_used: ok.len(),
        failures,
        selection,
        accuracy,
        coverage,
    })
}

/// Runs all replications on the global thread pool.
pub fn run_scenario(scenario: &McScenario) -> Result<McSummary> {
    let records = run_records(scenario)?;
    summarize(scenario, &records)
}

/// Runs all replications on a dedicated pool of `workers` threads.
pub fn run_scenario_with_workers(scenario: &McScenario, workers: usize) -> Result<McSummary> {
    if workers == 0 {
        return Err(HdlpError::InvalidArgument("need at least one worker".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HdlpError::InvalidArgument(format!("thread pool: {e}")))?;
    let records = pool.install(|| run_records(scenario))?;
    summarize(scenario, &records)
}

/// All replication records, ordered by index.
pub fn run_records(scenario: &McScenario) -> Result<Vec<ReplicationRecord>> {
    scenario.validate()?;
    let truth = scenario.truth()?;
    Ok((0..scenario.replications)
        .into_par_iter()
        .map(|r| record_for(scenario, r, &truth))
        .collect())
}

impl McSummary {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| HdlpError::InvalidArgument(format!("serializing summary: {e}")))
    }

    /// Long table with columns `N,T,metric,h,value`; `h` is blank for the
    /// selection frequencies. Metric names carry the selection horizon, as in
    /// `S_1`, `SL|p1`, `AD_d|p2`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| HdlpError::Io(std::io::Error::other(e));
        w.write_record(["N", "T", "metric", "h", "value"]).map_err(io)?;
        let (n, t) = (self.n_vars.to_string(), self.n_obs.to_string());
        let mut row = |metric: String, h: String, value: f64| {
            w.write_record([n.as_str(), t.as_str(), &metric, &h, &format_f64(value)])
        };
        for s in &self.selection {
            row(format!("S-_{}", s.ell), String::new(), s.s_minus.mean).map_err(io)?;
            row(format!("S_{}", s.ell), String::new(), s.s_correct.mean).map_err(io)?;
            row(format!("S+_{}", s.ell), String::new(), s.s_plus.mean).map_err(io)?;
        }
        for a in &self.accuracy {
            row(format!("SL|p{}", a.ell), a.horizon.to_string(), a.sl.mean).map_err(io)?;
            row(format!("AD_a|p{}", a.ell), a.horizon.to_string(), a.ad_a.mean).map_err(io)?;
            row(format!("AD_d|p{}", a.ell), a.horizon.to_string(), a.ad_d.mean).map_err(io)?;
        }
        for c in &self.coverage {
            row(format!("coverage|p{}", c.ell), c.horizon.to_string(), c.coverage).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn selection_for(&self, ell: usize) -> Option<&SelectionSummary> {
        self.selection.iter().find(|s| s.ell == ell)
    }

    pub fn accuracy_for(&self, ell: usize, h: usize) -> Option<&AccuracySummary> {
        self.accuracy.iter().find(|a| a.ell == ell && a.horizon == h)
    }

    pub fn coverage_for(&self, ell: usize, h: usize) -> Option<&CoverageSummary> {
        self.coverage.iter().find(|c| c.ell == ell && c.horizon == h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> McScenario {
        McScenario {
            horizons: vec![1, 3],
            p_max: 3,
            ..McScenario::table1(4, 120, 3)
        }
    }

    #[test]
    fn sl_extremes() {
        let truth = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, -0.1]);
        let exact = truth.map(|b| b != 0.0);
        assert_eq!(metric_sl(&exact, &truth, 0.0).unwrap(), 0.0);
        assert_eq!(metric_sl(&exact.map(|m| !m), &truth, 0.0).unwrap(), 1.0);
        assert_eq!(metric_sl(&exact, &truth, 0.2).unwrap(), 0.25);
        assert!(metric_sl(&DMatrix::from_element(1, 2, true), &truth, 0.0).is_err());
    }

    #[test]
    fn ad_rank_one() {
        let truth = DMatrix::from_fn(4, 4, |i, j| (i + 2 * j) as f64 * 0.1);
        assert_eq!(metric_ad(&truth, &truth).unwrap(), 0.0);
        let mut est = truth.clone();
        est[(0, 0)] -= 0.7;
        assert!((metric_ad(&est, &truth).unwrap() - 0.7).abs() < 1e-9);
    }

    #[test]
    fn selection_frequencies() {
        let rec = |p| ReplicationRecord {
            index: 0,
            seed: 0,
            p_hat: BTreeMap::from([(1, p)]),
            horizons: vec![],
            failure: None,
        };
        let recs = vec![rec(2), rec(2), rec(3), rec(1)];
        let s = metric_selection(&recs, 2)[&1];
        assert_eq!((s.s_minus, s.s_correct, s.s_plus), (0.25, 0.5, 0.25));
    }

    #[test]
    fn replication_is_reproducible() {
        let sc = tiny();
        let a = run_replication(&sc, 1).unwrap();
        let b = run_replication(&sc, 1).unwrap();
        assert_eq!(a, b);
        assert!(!a.failed());
        assert_eq!(a.horizons.len(), sc.h_select.len() * sc.horizons.len());
        assert!(run_replication(&sc, 3).is_err());
    }

    #[test]
    fn single_replication_summary_is_the_record() {
        let sc = McScenario {
            replications: 1,
            ..tiny()
        };
        let rec = run_replication(&sc, 0).unwrap();
        let sum = run_scenario(&sc).unwrap();
        let acc = sum.accuracy_for(1, 3).unwrap();
        let hr = rec.horizons.iter().find(|x| x.ell == 1 && x.horizon == 3).unwrap();
        assert_eq!(acc.sl.mean, hr.sl);
        assert_eq!(acc.ad_a.mean, hr.ad_a);
        assert_eq!(acc.ad_a.mc_se, 0.0);
        let s = sum.selection_for(1).unwrap();
        assert_eq!(s.s_minus.mean + s.s_correct.mean + s.s_plus.mean, 1.0);
    }

    #[test]
    fn worker_count_does_not_change_summary() {
        let sc = tiny();
        let one = run_scenario_with_workers(&sc, 1).unwrap();
        let three = run_scenario_with_workers(&sc, 3).unwrap();
        assert_eq!(one.to_json().unwrap(), three.to_json().unwrap());
    }

    #[test]
    fn too_many_failures_is_an_error() {
        let sc = tiny();
        let mut recs = run_records(&sc).unwrap();
        recs[0].failure = Some("boom".into());
        assert!(matches!(
            summarize(&sc, &recs),
            Err(HdlpError::ScenarioFailed { failures: 1, total: 3 })
        ));
    }

    #[test]
    fn scenario_validation() {
        assert!(McScenario::table1(5, 100, 1).validate().is_err());
        assert!(McScenario {
            replications: 0,
            ..tiny()
        }
        .validate()
        .is_err());
        assert!(McScenario {
            horizons: vec![61],
            ..tiny()
        }
        .validate()
        .is_err());
        assert!(McScenario {
            coverage_level: Some(1.0),
            ..tiny()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn csv_layout() {
        let sum = run_scenario(&tiny()).unwrap();
        let mut buf = Vec::new();
        sum.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("N,T,metric,h,value"));
        assert_eq!(text.lines().count(), 1 + 2 * 3 + 2 * 2 * 3);
        assert!(text.contains("4,120,S_1,,"));
        assert!(text.contains("4,120,AD_d|p2,3,"));
    }
}

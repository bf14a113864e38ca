//! Experiment runners behind the `covsim` binary.
//!
//! Every runner walks `layout × N_t`, builds the drops for that geometry and
//! then evaluates all requested estimators on common random numbers. Trials
//! of a drop run on the rayon pool but are collected in trial order and
//! reduced sequentially, so the output does not depend on the thread count.

pub mod config;
pub mod output;

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::error::CovError;
use crate::estimators::{AlaEstimator, Estimator, EstimatorKind, KappaFit};
use crate::geometry::{AntennaLayout, LayoutKind};
use crate::scenario::{CellScope, DropStatistics};

pub use config::{Experiment, RunConfig};
pub use output::{emit_csv, read_csv, write_csv, CsvRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] CovError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type HarnessResult<T> = Result<T, HarnessError>;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    /// Print per-cell progress and wall time to stderr.
    pub progress: bool,
}

/// Validates the configuration and runs one experiment.
pub fn run(experiment: Experiment, config: &RunConfig, options: &RunOptions) -> HarnessResult<Vec<CsvRow>> {
    config.validate(experiment)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    pool.install(|| match experiment {
        Experiment::MseSweep => run_mse_sweep(config, options.progress),
        Experiment::SeSweep => run_se_sweep(config, options.progress),
        Experiment::KappaTable => run_kappa_table(config, options.progress),
    })
}

/// Mean over drops of per-drop means. The standard error is the
/// fading-level Monte-Carlo error given the drops:
/// `sqrt(Σ_d se_d²) / D`.
#[derive(Clone, Debug, Default)]
struct DropAggregate {
    means: Vec<f64>,
    variances: Vec<f64>,
    successes: u64,
    failures: u64,
}

impl DropAggregate {
    fn add_samples(&mut self, values: &[f64], failures: u64) {
        self.failures += failures;
        self.successes += values.len() as u64;
        if values.is_empty() {
            return;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n
        } else {
            f64::NAN
        };
        self.means.push(mean);
        self.variances.push(var);
    }

    fn add_estimate(&mut self, value: f64, stderr: f64, successes: u64, failures: u64) {
        self.successes += successes;
        self.failures += failures;
        self.means.push(value);
        self.variances.push(stderr * stderr);
    }

    fn finish(&self) -> (f64, f64) {
        let d = self.means.len() as f64;
        if self.means.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        (
            self.means.iter().sum::<f64>() / d,
            self.variances.iter().sum::<f64>().sqrt() / d,
        )
    }
}

struct RowContext<'a> {
    experiment: Experiment,
    layout: &'a str,
    nt: usize,
    np: usize,
    seed: u64,
}

impl RowContext<'_> {
    fn row(&self, estimator: &str, metric: &str, value: f64, stderr: f64, trials: u64, failures: u64) -> CsvRow {
        CsvRow {
            experiment: self.experiment.name().into(),
            layout: self.layout.into(),
            nt: self.nt,
            np: self.np,
            estimator: estimator.into(),
            metric: metric.into(),
            value,
            stderr,
            trials,
            failures,
            seed: self.seed,
        }
    }
}

pub fn build_drops(config: &RunConfig, layout: &AntennaLayout, scope: CellScope) -> HarnessResult<Vec<DropStatistics>> {
    let params = config.scenario_params();
    (0..config.drops)
        .into_par_iter()
        .map(|d| DropStatistics::new(layout, &params, config.seed, d, scope))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Into::into)
}

fn log_rank(drops: &[DropStatistics], progress: bool) -> HarnessResult<()> {
    if !progress {
        return Ok(());
    }
    for d in drops {
        let rank = d.covariance_rank()?;
        if rank < d.scenario.cells {
            eprintln!("  note: drop {} covariance family has rank {rank} < {}", d.drop, d.scenario.cells);
        }
    }
    Ok(())
}

/// Fits the viaQ weights for `(R, Q)` of the center cell from
/// `calibration_samples` sample pairs per drop.
pub fn fit_viaq(drops: &[DropStatistics], seed: u64, n_p: usize, samples: u64) -> HarnessResult<(KappaFit, KappaFit)> {
    let pairs: Vec<(KappaFit, KappaFit)> = drops
        .par_iter()
        .map(|d| -> HarnessResult<(KappaFit, KappaFit)> {
            let mut fr = KappaFit::new();
            let mut fq = KappaFit::new();
            for s in 0..samples {
                let sample = d.calibration_sample(seed, n_p, s);
                fr.add(&sample.r, &d.center().truth.r)?;
                fq.add(&sample.q, &d.center().truth.q)?;
            }
            Ok((fr, fq))
        })
        .collect::<HarnessResult<_>>()?;
    let mut fr = KappaFit::new();
    let mut fq = KappaFit::new();
    for (r, q) in pairs {
        fr.merge(&r);
        fq.merge(&q);
    }
    Ok((fr, fq))
}

/// Estimators for one `(layout, N_p)` cell; viaQ weights are fitted on the
/// calibration drops (center-cell statistics suffice).
pub fn build_estimators(
    kinds: &[EstimatorKind],
    layout: &AntennaLayout,
    calibration: &[DropStatistics],
    config: &RunConfig,
    n_p: usize,
) -> HarnessResult<(Vec<Estimator>, Option<(KappaFit, KappaFit)>)> {
    let mut fit = None;
    let mut out = Vec::with_capacity(kinds.len());
    for kind in kinds {
        out.push(match kind {
            EstimatorKind::Ideal => Estimator::Ideal,
            EstimatorKind::SampleOnly => Estimator::SampleOnly,
            EstimatorKind::Ala => Estimator::Ala(AlaEstimator::new(layout)),
            EstimatorKind::ViaQ => {
                let (fr, fq) = fit_viaq(calibration, config.seed, n_p, config.calibration_samples)?;
                let e = Estimator::ViaQ {
                    kappa_r: fr.weight(),
                    kappa_q: fq.weight(),
                };
                fit = Some((fr, fq));
                e
            }
        });
    }
    Ok((out, fit))
}

fn kappa_rows(ctx: &RowContext<'_>, fit: &(KappaFit, KappaFit)) -> Vec<CsvRow> {
    let (fr, fq) = fit;
    vec![
        ctx.row("viaq", "kappa_q", fq.weight().value(), fq.jackknife_stderr(), fq.len() as u64, 0),
        ctx.row("viaq", "kappa_r", fr.weight().value(), fr.jackknife_stderr(), fr.len() as u64, 0),
    ]
}

fn layouts(config: &RunConfig, experiment: Experiment) -> HarnessResult<Vec<(LayoutKind, usize, AntennaLayout)>> {
    let mut out = Vec::new();
    for kind in config.layouts()? {
        for nt in config.nt_grid(experiment) {
            out.push((kind, nt, config.build_layout(kind, nt)?));
        }
    }
    Ok(out)
}

/// Normalized center-UE channel-estimation MSE per `(layout, N_t, N_p,
/// estimator)`, plus the closed-form ideal value and the fitted viaQ weights.
pub fn run_mse_sweep(config: &RunConfig, progress: bool) -> HarnessResult<Vec<CsvRow>> {
    let experiment = Experiment::MseSweep;
    let kinds = config.estimator_kinds()?;
    let mut rows = Vec::new();
    for (kind, nt, layout) in layouts(config, experiment)? {
        let drops = build_drops(config, &layout, CellScope::Center)?;
        log_rank(&drops, progress)?;
        let label = kind.to_string();
        for n_p in config.np_grid(experiment) {
            let start = Instant::now();
            let ctx = RowContext {
                experiment,
                layout: &label,
                nt,
                np: n_p,
                seed: config.seed,
            };
            let (estimators, fit) = build_estimators(&kinds, &layout, &drops, config, n_p)?;
            let mut aggregates = vec![DropAggregate::default(); estimators.len()];
            for drop in &drops {
                let trials: Vec<_> = (0..config.trials)
                    .into_par_iter()
                    .map(|t| drop.mse_trial(config.seed, t, n_p, &estimators))
                    .collect();
                for (e, agg) in aggregates.iter_mut().enumerate() {
                    let values: Vec<f64> = trials.iter().filter_map(|t| t[e].as_ref().ok().copied()).collect();
                    let failures = config.trials - values.len() as u64;
                    agg.add_samples(&values, failures);
                }
            }
            for (kind, agg) in kinds.iter().zip(&aggregates) {
                let (value, stderr) = agg.finish();
                rows.push(ctx.row(kind.name(), "nmse", value, stderr, agg.successes, agg.failures));
            }
            if kinds.contains(&EstimatorKind::Ideal) {
                let oracle: Vec<f64> = drops.iter().map(|d| d.ideal_mse()).collect::<Result<_, _>>()?;
                let mut agg = DropAggregate::default();
                for v in &oracle {
                    agg.add_estimate(*v, 0.0, 1, 0);
                }
                let (value, stderr) = agg.finish();
                rows.push(ctx.row("ideal", "nmse_closed_form", value, stderr, agg.successes, 0));
            }
            if let Some(fit) = &fit {
                rows.extend(kappa_rows(&ctx, fit));
            }
            if progress {
                eprintln!(
                    "[{experiment}] layout={label} nt={nt} np={n_p}: {:.1} s",
                    start.elapsed().as_secs_f64()
                );
            }
        }
    }
    Ok(rows)
}

/// Downlink spectral efficiency of the center UE and the cell average per
/// `(layout, N_t, N_p, estimator)`.
pub fn run_se_sweep(config: &RunConfig, progress: bool) -> HarnessResult<Vec<CsvRow>> {
    use crate::downlink::DropSinr;

    let experiment = Experiment::SeSweep;
    let kinds = config.estimator_kinds()?;
    let np_grid = config.np_grid(experiment);
    let mut rows = Vec::new();
    for (kind, nt, layout) in layouts(config, experiment)? {
        let start = Instant::now();
        let label = kind.to_string();
        let calibration = build_drops(config, &layout, CellScope::Center)?;
        log_rank(&calibration, progress)?;
        let mut cells = Vec::new();
        for &n_p in &np_grid {
            cells.push(build_estimators(&kinds, &layout, &calibration, config, n_p)?);
        }
        drop(calibration);

        let mut center = vec![vec![DropAggregate::default(); kinds.len()]; np_grid.len()];
        let mut average = center.clone();
        let params = config.scenario_params();
        for d in 0..config.drops {
            let stats = DropStatistics::new(&layout, &params, config.seed, d, CellScope::All)?;
            for (i, &n_p) in np_grid.iter().enumerate() {
                let estimators = &cells[i].0;
                let mut per_estimator: Vec<DropSinr> = estimators.iter().map(|_| DropSinr::new(&stats)).collect();
                // Consumed in chunks so per-trial results never pile up.
                let chunk = 16 * rayon::current_num_threads() as u64;
                for first in (0..config.trials).step_by(chunk as usize) {
                    let last = (first + chunk).min(config.trials);
                    let trials: Vec<_> = (first..last)
                        .into_par_iter()
                        .map(|t| stats.downlink_trial(config.seed, t, n_p, estimators))
                        .collect::<Result<_, _>>()?;
                    for (t, trial) in (first..).zip(trials) {
                        for (acc, outcome) in per_estimator.iter_mut().zip(trial) {
                            acc.push(t, outcome);
                        }
                    }
                }
                for (e, acc) in per_estimator.iter().enumerate() {
                    let ok = acc.successes() as u64;
                    let failed = acc.failures as u64;
                    if ok < 2 {
                        center[i][e].add_samples(&[], config.trials);
                        average[i][e].add_samples(&[], config.trials);
                        continue;
                    }
                    let (v, s) = acc.center_se()?;
                    center[i][e].add_estimate(v, s, ok, failed);
                    let (v, s) = acc.average_se()?;
                    average[i][e].add_estimate(v, s, ok, failed);
                }
            }
        }
        for (i, &n_p) in np_grid.iter().enumerate() {
            let ctx = RowContext {
                experiment,
                layout: &label,
                nt,
                np: n_p,
                seed: config.seed,
            };
            for (e, kind) in kinds.iter().enumerate() {
                for (metric, agg) in [("se_center", &center[i][e]), ("se_average", &average[i][e])] {
                    let (value, stderr) = agg.finish();
                    rows.push(ctx.row(kind.name(), metric, value, stderr, agg.successes, agg.failures));
                }
            }
            if let Some(fit) = &cells[i].1 {
                rows.extend(kappa_rows(&ctx, fit));
            }
        }
        if progress {
            eprintln!(
                "[{experiment}] layout={label} nt={nt}: {:.1} s",
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(rows)
}

/// Fitted viaQ weights per `(layout, N_t, N_p)`.
pub fn run_kappa_table(config: &RunConfig, progress: bool) -> HarnessResult<Vec<CsvRow>> {
    let experiment = Experiment::KappaTable;
    let mut rows = Vec::new();
    for (kind, nt, layout) in layouts(config, experiment)? {
        let label = kind.to_string();
        let drops = build_drops(config, &layout, CellScope::Center)?;
        for n_p in config.np_grid(experiment) {
            let start = Instant::now();
            let ctx = RowContext {
                experiment,
                layout: &label,
                nt,
                np: n_p,
                seed: config.seed,
            };
            let fit = fit_viaq(&drops, config.seed, n_p, config.calibration_samples)?;
            rows.extend(kappa_rows(&ctx, &fit));
            if progress {
                eprintln!(
                    "[{experiment}] layout={label} nt={nt} np={n_p}: kappa_q={:.3} ({:.1} s)",
                    fit.1.weight().value(),
                    start.elapsed().as_secs_f64()
                );
            }
        }
    }
    Ok(rows)
}

//! Seven-cell evaluation network, per-drop statistics and the per-trial
//! Monte-Carlo kernels shared by the experiments.
//!
//! A *drop* fixes the angles of arrival (and therefore every covariance);
//! a *trial* redraws fast fading, pilot noise and the sample covariances.
//! Every trial draws from its own `(seed, drop, trial)` streams, and all
//! estimators of a trial see the same random numbers.

use std::f64::consts::{FRAC_PI_2, PI};

use faer::{c64, Col, Mat};
use rand::Rng;

use crate::corrmodel::{link_covariance, CorrelationParams};
use crate::downlink::{gain, LeakageRegularizer};
use crate::error::{CovError, Result};
use crate::estimators::{CovariancePair, Estimator};
use crate::geometry::AntennaLayout;
use crate::matrix::{frobenius_inner, CovarianceMatrix};
use crate::mmse::{ideal_normalized_mse, squared_error, LinearSolver, MmseFilter};
use crate::rng::{stream, SimRng, StreamTag};
use crate::sampling::{SampleCovariances, UplinkModel};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Power and correlation settings of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParams {
    pub cells: usize,
    pub ul_serving_db: f64,
    pub ul_cross_db: f64,
    pub dl_serving_db: f64,
    /// BS-to-foreign-UE distance in units of the serving distance.
    pub neighbor_distance: f64,
    /// Optional per-neighbor distances for the center UE (`cells - 1` values).
    pub neighbor_distance_overrides: Option<Vec<f64>>,
    pub path_loss_exponent: f64,
    pub r_h: f64,
    pub r_v: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            cells: 7,
            ul_serving_db: -7.0,
            ul_cross_db: -8.6,
            dl_serving_db: 13.0,
            neighbor_distance: 2.0,
            neighbor_distance_overrides: None,
            path_loss_exponent: 2.0,
            r_h: 0.5,
            r_v: 0.65,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(CovError::InvalidParameter("cells must be at least 1".into()));
        }
        if !(self.neighbor_distance > 0.0) || !(self.path_loss_exponent >= 0.0) {
            return Err(CovError::InvalidParameter("distances and path-loss exponent must be positive".into()));
        }
        if let Some(o) = &self.neighbor_distance_overrides {
            if o.len() + 1 != self.cells || o.iter().any(|d| !(*d > 0.0)) {
                return Err(CovError::InvalidParameter(format!(
                    "neighbor_distance_overrides needs {} positive values",
                    self.cells.saturating_sub(1)
                )));
            }
        }
        for r in [self.r_h, self.r_v] {
            if !(0.0..1.0).contains(&r) {
                return Err(CovError::InvalidCorrelation(r));
            }
        }
        for db in [self.ul_serving_db, self.ul_cross_db, self.dl_serving_db] {
            if !db.is_finite() {
                return Err(CovError::InvalidParameter(format!("SNR {db} dB is not finite")));
            }
        }
        Ok(())
    }

    /// Downlink SNR in dB at relative distance `d` from the BS.
    pub fn dl_db_at(&self, d: f64) -> f64 {
        self.dl_serving_db - 10.0 * self.path_loss_exponent * d.log10()
    }

    fn distance(&self, l: usize, k: usize) -> f64 {
        if l == k {
            return 1.0;
        }
        match (&self.neighbor_distance_overrides, l.min(k)) {
            (Some(o), 0) => o[l.max(k) - 1],
            _ => self.neighbor_distance,
        }
    }
}

/// Cell count, SNR tables and per-link correlation parameters of one drop.
/// Table entry `[l][k]` refers to BS `l` and the UE of cell `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkScenario {
    pub cells: usize,
    pub layout: AntennaLayout,
    pub snr_ul: Vec<Vec<f64>>,
    pub snr_dl: Vec<Vec<f64>>,
    pub links: Vec<Vec<CorrelationParams>>,
    pub seed: u64,
}

/// Uniform angles of arrival for `cells × cells` links:
/// `θ_h ∈ (-π, π)`, `θ_v ∈ (-π/2, π/2)`.
pub fn draw_aoas<R: Rng + ?Sized>(cells: usize, rng: &mut R) -> Vec<Vec<(f64, f64)>> {
    (0..cells)
        .map(|_| {
            (0..cells)
                .map(|_| (rng.random_range(-PI..PI), rng.random_range(-FRAC_PI_2..FRAC_PI_2)))
                .collect()
        })
        .collect()
}

pub fn build_seven_cell<R: Rng + ?Sized>(
    layout: &AntennaLayout,
    params: &ScenarioParams,
    rng: &mut R,
    seed: u64,
) -> Result<NetworkScenario> {
    params.validate()?;
    let l = params.cells;
    let table = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..l).map(|a| (0..l).map(|b| f(a, b)).collect()).collect()
    };
    let snr_ul = table(&|a, b| db_to_linear(if a == b { params.ul_serving_db } else { params.ul_cross_db }));
    let snr_dl = table(&|a, b| db_to_linear(params.dl_db_at(params.distance(a, b))));
    let links = draw_aoas(l, rng)
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(theta_h, theta_v)| CorrelationParams {
                    r_h: params.r_h,
                    r_v: params.r_v,
                    theta_h,
                    theta_v,
                })
                .collect()
        })
        .collect();
    Ok(NetworkScenario {
        cells: l,
        layout: layout.clone(),
        snr_ul,
        snr_dl,
        links,
        seed,
    })
}

/// Which base stations a drop needs full statistics for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellScope {
    /// Only the center BS (uplink estimation experiments).
    Center,
    /// Every BS, including downlink precoding statistics.
    All,
}

/// True second-order statistics of one base station.
#[derive(Debug)]
pub struct CellStatistics {
    pub uplink: UplinkModel,
    pub truth: CovariancePair,
    /// `R Q⁻¹` of the serving link.
    pub ideal_filter: Mat<c64>,
    pub regularizer: Option<LeakageRegularizer>,
}

impl CellStatistics {
    fn new(scenario: &NetworkScenario, l: usize, downlink: bool) -> Result<Self> {
        let r_list = (0..scenario.cells)
            .map(|k| link_covariance(&scenario.layout, &scenario.links[l][k]))
            .collect::<Result<Vec<_>>>()?;
        let uplink = UplinkModel::new(&r_list, &scenario.snr_ul[l], l)?;
        let truth = CovariancePair {
            r: r_list[l].clone(),
            q: uplink.q().clone(),
        };
        let ideal_filter = MmseFilter::new(&truth.r, &truth.q)?.to_matrix();
        let regularizer = if downlink {
            // Error covariance of every channel estimated at this BS:
            // ĝ_k = a_k R_k Q⁻¹ y, so Φ_k = a_k² R_k Q⁻¹ R_k.
            let solver = LinearSolver::new(truth.q.as_mat())?;
            let phi_list = r_list
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let x = solver.solve_mat(r.as_mat());
                    let a2 = uplink.amplitude(k).powi(2);
                    CovarianceMatrix::new(r.as_mat() * &x)
                        .expect("square")
                        .hermitian_part()
                        .scaled(a2)
                })
                .collect::<Vec<_>>();
            Some(LeakageRegularizer::new(&r_list, &phi_list, truth.r.dim())?)
        } else {
            None
        };
        Ok(Self {
            uplink,
            truth,
            ideal_filter,
            regularizer,
        })
    }
}

/// Outcome of one estimator in one uplink trial.
pub type TrialOutcome<T> = std::result::Result<T, CovError>;

/// Effective downlink gains of one trial: `desired[k] = g_kkᴴ w_k`,
/// `interference[k][l] = |g_lkᴴ w_l|²` (zero at `l = k`).
#[derive(Clone, Debug, PartialEq)]
pub struct DownlinkGains {
    pub desired: Vec<c64>,
    pub interference: Vec<Vec<f64>>,
}

/// Everything fixed within a drop.
#[derive(Debug)]
pub struct DropStatistics {
    pub drop: u64,
    pub scenario: NetworkScenario,
    pub cells: Vec<CellStatistics>,
}

impl DropStatistics {
    pub fn new(
        layout: &AntennaLayout,
        params: &ScenarioParams,
        seed: u64,
        drop: u64,
        scope: CellScope,
    ) -> Result<Self> {
        let mut rng = stream(seed, StreamTag::Scenario, drop, 0);
        let scenario = build_seven_cell(layout, params, &mut rng, seed)?;
        let (count, downlink) = match scope {
            CellScope::Center => (1, false),
            CellScope::All => (scenario.cells, true),
        };
        let cells = (0..count)
            .map(|l| CellStatistics::new(&scenario, l, downlink))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { drop, scenario, cells })
    }

    pub fn center(&self) -> &CellStatistics {
        &self.cells[0]
    }

    /// Closed-form ideal-covariance MSE of the center UE.
    pub fn ideal_mse(&self) -> Result<f64> {
        let c = self.center();
        ideal_normalized_mse(&c.truth.r, &c.truth.q)
    }

    /// Numerical rank of the vectorized covariances seen by the center BS.
    pub fn covariance_rank(&self) -> Result<usize> {
        let r: Vec<CovarianceMatrix> = (0..self.scenario.cells)
            .map(|k| link_covariance(&self.scenario.layout, &self.scenario.links[0][k]))
            .collect::<Result<_>>()?;
        let gram = CovarianceMatrix::from_fn(r.len(), |i, j| frobenius_inner(&r[i], &r[j]));
        let eig = gram.eigenvalues()?;
        let max = eig.iter().cloned().fold(0.0, f64::max);
        Ok(eig.iter().filter(|e| **e > 1e-10 * max).count())
    }

    /// Sample covariances of the center BS for calibration sample `index`.
    pub fn calibration_sample(&self, seed: u64, n_p: usize, index: u64) -> SampleCovariances {
        let mut rng = stream(seed, StreamTag::Calibration, self.drop, index);
        self.center().uplink.sample_covariances(n_p, &mut rng)
    }

    fn estimate_channel(
        cell: &CellStatistics,
        estimator: &Estimator,
        sample: Option<&SampleCovariances>,
        y: &Col<c64>,
    ) -> Result<Col<c64>> {
        match (estimator, sample) {
            (Estimator::Ideal, _) => Ok(&cell.ideal_filter * y),
            (_, Some(s)) => {
                let pair = estimator.estimate(s, &cell.truth)?;
                MmseFilter::new(&pair.r, &pair.q)?.apply(y)
            }
            (_, None) => unreachable!("samples drawn whenever a non-ideal estimator is present"),
        }
    }

    /// Normalized squared estimation error of the center UE, per estimator.
    pub fn mse_trial(&self, seed: u64, trial: u64, n_p: usize, estimators: &[Estimator]) -> Vec<TrialOutcome<f64>> {
        let cell = self.center();
        let sample = estimators.iter().any(|e| !matches!(e, Estimator::Ideal)).then(|| {
            let mut rng = stream(seed, StreamTag::Covariance, self.drop, trial);
            cell.uplink.sample_covariances(n_p, &mut rng)
        });
        let mut rng = stream(seed, StreamTag::Fading, self.drop, trial);
        let g = cell.uplink.draw_channels(&mut rng);
        let y = cell.uplink.snapshot(&g, &mut rng);
        let serving = &g[cell.uplink.serving()];
        let tr = cell.truth.r.trace().re;
        estimators
            .iter()
            .map(|e| {
                let g_hat = Self::estimate_channel(cell, e, sample.as_ref(), &y)?;
                let err = squared_error(serving, &g_hat) / tr;
                if err.is_finite() {
                    Ok(err)
                } else {
                    Err(CovError::Singular { condition: f64::INFINITY })
                }
            })
            .collect()
    }

    /// Downlink gains of every UE for one trial, per estimator.
    pub fn downlink_trial(
        &self,
        seed: u64,
        trial: u64,
        n_p: usize,
        estimators: &[Estimator],
    ) -> Result<Vec<TrialOutcome<DownlinkGains>>> {
        let l_cells = self.scenario.cells;
        if self.cells.len() != l_cells {
            return Err(CovError::InvalidParameter("downlink trials need CellScope::All".into()));
        }
        let samples: Option<Vec<SampleCovariances>> =
            estimators.iter().any(|e| !matches!(e, Estimator::Ideal)).then(|| {
                let mut rng = stream(seed, StreamTag::Covariance, self.drop, trial);
                self.cells.iter().map(|c| c.uplink.sample_covariances(n_p, &mut rng)).collect()
            });
        let mut rng: SimRng = stream(seed, StreamTag::Fading, self.drop, trial);
        // channels[l][k]: BS l to UE k.
        let mut channels = Vec::with_capacity(l_cells);
        let mut observations = Vec::with_capacity(l_cells);
        for cell in &self.cells {
            let g = cell.uplink.draw_channels(&mut rng);
            observations.push(cell.uplink.snapshot(&g, &mut rng));
            channels.push(g);
        }
        Ok(estimators
            .iter()
            .map(|e| {
                let mut precoders = Vec::with_capacity(l_cells);
                for (l, cell) in self.cells.iter().enumerate() {
                    let sample = samples.as_ref().map(|s| &s[l]);
                    let g_hat = Self::estimate_channel(cell, e, sample, &observations[l])?;
                    let reg = cell.regularizer.as_ref().expect("downlink scope");
                    precoders.push(reg.precoder(&g_hat)?);
                }
                let desired = (0..l_cells).map(|k| gain(&channels[k][k], &precoders[k])).collect();
                let interference = (0..l_cells)
                    .map(|k| {
                        (0..l_cells)
                            .map(|l| if l == k { 0.0 } else { gain(&channels[l][k], &precoders[l]).norm_sqr() })
                            .collect()
                    })
                    .collect();
                Ok(DownlinkGains { desired, interference })
            })
            .collect())
    }

    /// `(ρ_kk, [ρ_lk]_l)` downlink SNRs seen by UE `k`, serving entry zeroed.
    pub fn dl_snrs(&self, k: usize) -> (f64, Vec<f64>) {
        let s = &self.scenario.snr_dl;
        let cross = (0..self.scenario.cells).map(|l| if l == k { 0.0 } else { s[l][k] }).collect();
        (s[k][k], cross)
    }
}

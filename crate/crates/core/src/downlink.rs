//! Leakage-minimizing downlink precoding and the channel-hardening SINR bound.

use faer::linalg::solvers::{Llt, Solve};
use faer::{c64, Col, Mat, Side};

use crate::error::{CovError, Result};
use crate::estimators::Estimator;
use crate::matrix::CovarianceMatrix;
use crate::mmse::LinearSolver;
use crate::scenario::{DownlinkGains, DropStatistics, TrialOutcome};

/// Unit-norm precoding vector of one base station.
#[derive(Clone, Debug, PartialEq)]
pub struct Precoder {
    pub w: Col<c64>,
    pub cell: usize,
}

fn normalize(v: Col<c64>) -> Result<Col<c64>> {
    let norm = v.norm_l2();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(CovError::DegeneratePrecoder);
    }
    Ok(scaled(&v, c64::new(1.0 / norm, 0.0)))
}

fn scaled(v: &Col<c64>, s: c64) -> Col<c64> {
    Col::from_fn(v.nrows(), |i| v[i] * s)
}

fn leakage_matrix(r_list: &[CovarianceMatrix], phi_list: &[CovarianceMatrix], n: usize) -> Result<Mat<c64>> {
    if r_list.len() != phi_list.len() {
        return Err(CovError::DimensionMismatch {
            expected: r_list.len(),
            actual: phi_list.len(),
        });
    }
    let mut k = Mat::<c64>::identity(n, n);
    for (r, phi) in r_list.iter().zip(phi_list) {
        for m in [r, phi] {
            if m.dim() != n {
                return Err(CovError::DimensionMismatch {
                    expected: n,
                    actual: m.dim(),
                });
            }
        }
        k += r.as_mat() - phi.as_mat();
    }
    Ok(k)
}

/// `w ∝ (ĝ ĝᴴ + Σ_k (R_k - Φ_k) + I)⁻¹ ĝ`, normalized to unit norm.
pub fn precoder(g_hat: &Col<c64>, r_list: &[CovarianceMatrix], phi_list: &[CovarianceMatrix]) -> Result<Col<c64>> {
    let n = g_hat.nrows();
    if g_hat.norm_l2() == 0.0 {
        return Err(CovError::DegeneratePrecoder);
    }
    let mut a = leakage_matrix(r_list, phi_list, n)?;
    a += g_hat * g_hat.adjoint();
    let solver = LinearSolver::new(a.as_ref())?;
    normalize(solver.solve_vec(g_hat))
}

/// The estimate-independent part `G = Σ_k (R_k - Φ_k) + I`, factored once.
///
/// By Sherman–Morrison `(ĝĝᴴ + G)⁻¹ĝ = G⁻¹ĝ / (1 + ĝᴴG⁻¹ĝ)`, so the
/// normalized precoder is the normalized `G⁻¹ĝ` and only `G` needs factoring.
#[derive(Debug)]
pub struct LeakageRegularizer {
    llt: Llt<c64>,
    n: usize,
}

impl LeakageRegularizer {
    pub fn new(r_list: &[CovarianceMatrix], phi_list: &[CovarianceMatrix], n: usize) -> Result<Self> {
        let g = leakage_matrix(r_list, phi_list, n)?;
        let llt = g
            .llt(Side::Lower)
            .map_err(|_| CovError::NotPositiveSemidefinite { min_eigenvalue: f64::NAN })?;
        Ok(Self { llt, n })
    }

    pub fn precoder(&self, g_hat: &Col<c64>) -> Result<Col<c64>> {
        if g_hat.nrows() != self.n {
            return Err(CovError::DimensionMismatch {
                expected: self.n,
                actual: g_hat.nrows(),
            });
        }
        let mut v = g_hat.clone();
        self.llt.solve_in_place(v.as_mat_mut());
        normalize(v)
    }
}

/// Hardening-bound components for one UE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinrReport {
    pub signal_power: f64,
    pub noise_term: f64,
    pub variance_term: f64,
    pub interference_term: f64,
    pub gamma: f64,
    pub se: f64,
}

pub fn spectral_efficiency(report: &SinrReport) -> f64 {
    (1.0 + report.gamma).log2()
}

/// Per-trial effective gains seen by one UE: `x = g_kkᴴ w_k` from its own
/// BS and `|g_lkᴴ w_l|²` from every other BS `l` (entry `k` unused).
#[derive(Clone, Debug, Default)]
pub struct SinrAccumulator {
    desired: Vec<c64>,
    // Row-major, one row of `width` entries per trial. Kept flat: a small
    // heap block per trial fragments the allocator badly over long runs.
    interference: Vec<f64>,
    width: usize,
    ragged: bool,
}

impl SinrAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, desired: c64, interference: &[f64]) {
        if self.desired.is_empty() {
            self.width = interference.len();
        }
        self.ragged |= interference.len() != self.width;
        self.desired.push(desired);
        self.interference.extend(interference.iter().take(self.width));
        self.interference.resize(self.desired.len() * self.width, 0.0);
    }

    pub fn len(&self) -> usize {
        self.desired.len()
    }

    pub fn is_empty(&self) -> bool {
        self.desired.is_empty()
    }

    /// SINR from the trials with index not equal to `skip`.
    fn report_excluding(&self, rho_desired: f64, rho_cross: &[f64], skip: Option<usize>) -> SinrReport {
        let n = self.len() - usize::from(skip.is_some());
        let keep = |t: &usize| Some(*t) != skip;
        // Moments about a reference sample, so identical trials give an
        // exactly zero variance.
        let pivot = self.desired[if skip == Some(0) { 1 } else { 0 }];
        let shift = (0..self.len()).filter(keep).map(|t| self.desired[t] - pivot).sum::<c64>() / n as f64;
        let spread: f64 = (0..self.len())
            .filter(keep)
            .map(|t| (self.desired[t] - pivot).norm_sqr())
            .sum();
        let mean = pivot + shift;
        let var = ((spread - n as f64 * shift.norm_sqr()) / (n - 1) as f64).max(0.0);
        let mut interference = 0.0;
        for (l, rho) in rho_cross.iter().enumerate() {
            let e: f64 = (0..self.len()).filter(keep).map(|t| self.interference[t * self.width + l]).sum::<f64>() / n as f64;
            interference += rho * e;
        }
        assemble(rho_desired * mean.norm_sqr(), rho_desired * var, interference)
    }

    /// Hardening bound with `rho_cross[l]` the SNR from BS `l` (zero for the
    /// serving BS).
    pub fn report(&self, rho_desired: f64, rho_cross: &[f64]) -> Result<SinrReport> {
        self.check(rho_cross)?;
        Ok(self.report_excluding(rho_desired, rho_cross, None))
    }

    /// Leave-one-trial-out jackknife standard error of the spectral efficiency.
    pub fn se_stderr(&self, rho_desired: f64, rho_cross: &[f64]) -> Result<f64> {
        self.check(rho_cross)?;
        let n = self.len();
        if n < 3 {
            return Ok(f64::NAN);
        }
        let loo: Vec<f64> = (0..n)
            .map(|t| self.report_excluding(rho_desired, rho_cross, Some(t)).se)
            .collect();
        let mean = loo.iter().sum::<f64>() / n as f64;
        let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
        Ok(((n - 1) as f64 / n as f64 * ss).sqrt())
    }

    fn check(&self, rho_cross: &[f64]) -> Result<()> {
        if self.len() < 2 {
            return Err(CovError::InvalidParameter("SINR needs at least two trials".into()));
        }
        if self.ragged || self.width != rho_cross.len() {
            return Err(CovError::DimensionMismatch {
                expected: rho_cross.len(),
                actual: self.width,
            });
        }
        Ok(())
    }
}

fn assemble(signal: f64, variance: f64, interference: f64) -> SinrReport {
    let noise = 1.0;
    let gamma = signal / (noise + variance + interference);
    let mut report = SinrReport {
        signal_power: signal,
        noise_term: noise,
        variance_term: variance,
        interference_term: interference,
        gamma,
        se: 0.0,
    };
    report.se = spectral_efficiency(&report);
    report
}

/// Effective scalar gain `gᴴ w`.
pub fn gain(g: &Col<c64>, w: &Col<c64>) -> c64 {
    g.adjoint() * w
}

/// Hardening-bound statistics of every UE of one drop, for one estimator.
#[derive(Clone, Debug)]
pub struct DropSinr {
    ues: Vec<SinrAccumulator>,
    snrs: Vec<(f64, Vec<f64>)>,
    trials: Vec<u64>,
    pub failures: usize,
}

impl DropSinr {
    pub fn new(drop: &DropStatistics) -> Self {
        let cells = drop.scenario.cells;
        Self {
            ues: vec![SinrAccumulator::new(); cells],
            snrs: (0..cells).map(|k| drop.dl_snrs(k)).collect(),
            trials: Vec::new(),
            failures: 0,
        }
    }

    /// Records trial `trial`; failed trials only increment the failure count.
    pub fn push(&mut self, trial: u64, outcome: TrialOutcome<DownlinkGains>) {
        match outcome {
            Ok(g) => {
                self.trials.push(trial);
                for (k, acc) in self.ues.iter_mut().enumerate() {
                    acc.push(g.desired[k], &g.interference[k]);
                }
            }
            Err(_) => self.failures += 1,
        }
    }

    pub fn successes(&self) -> usize {
        self.ues.first().map_or(0, SinrAccumulator::len)
    }

    pub fn reports(&self) -> Result<Vec<SinrReport>> {
        self.ues
            .iter()
            .zip(&self.snrs)
            .map(|(acc, (rho, cross))| acc.report(*rho, cross))
            .collect()
    }

    /// Center-UE spectral efficiency and its jackknife standard error.
    pub fn center_se(&self) -> Result<(f64, f64)> {
        let (rho, cross) = &self.snrs[0];
        Ok((self.ues[0].report(*rho, cross)?.se, self.ues[0].se_stderr(*rho, cross)?))
    }

    /// `SE_center(self) - SE_center(other)` with the jackknife standard error
    /// of the difference; both must hold the same successful trials, which
    /// is the case for estimators evaluated on common random numbers.
    pub fn center_se_difference(&self, other: &DropSinr) -> Result<(f64, f64)> {
        if self.trials != other.trials {
            return Err(CovError::InvalidParameter("paired comparison needs identical trial sets".into()));
        }
        let (a, _) = self.center_se()?;
        let (b, _) = other.center_se()?;
        let n = self.successes();
        let loo: Vec<f64> = (0..n)
            .map(|t| self.center_se_without(t) - other.center_se_without(t))
            .collect();
        let mean = loo.iter().sum::<f64>() / n as f64;
        let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
        Ok((a - b, ((n - 1) as f64 / n as f64 * ss).sqrt()))
    }

    fn center_se_without(&self, t: usize) -> f64 {
        let (rho, cross) = &self.snrs[0];
        self.ues[0].report_excluding(*rho, cross, Some(t)).se
    }

    /// Cell-average spectral efficiency and its jackknife standard error.
    pub fn average_se(&self) -> Result<(f64, f64)> {
        let value = self.reports()?.iter().map(|r| r.se).sum::<f64>() / self.ues.len() as f64;
        let n = self.successes();
        if n < 3 {
            return Ok((value, f64::NAN));
        }
        let loo: Vec<f64> = (0..n)
            .map(|t| {
                self.ues
                    .iter()
                    .zip(&self.snrs)
                    .map(|(acc, (rho, cross))| acc.report_excluding(*rho, cross, Some(t)).se)
                    .sum::<f64>()
                    / self.ues.len() as f64
            })
            .collect();
        let mean = loo.iter().sum::<f64>() / n as f64;
        let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
        Ok((value, ((n - 1) as f64 / n as f64 * ss).sqrt()))
    }
}

/// Runs `n_trials` downlink trials of one drop with a single estimator.
pub fn sinr_monte_carlo(
    drop: &DropStatistics,
    estimator: &Estimator,
    seed: u64,
    n_p: usize,
    n_trials: u64,
) -> Result<DropSinr> {
    if n_trials < 2 {
        return Err(CovError::InvalidParameter("sinr_monte_carlo needs at least two trials".into()));
    }
    let mut out = DropSinr::new(drop);
    for t in 0..n_trials {
        let mut r = drop.downlink_trial(seed, t, n_p, std::slice::from_ref(estimator))?;
        out.push(t, r.pop().expect("one estimator"));
    }
    Ok(out)
}

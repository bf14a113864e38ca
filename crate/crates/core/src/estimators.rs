//! Covariance post-processing: viaQ shrinkage and antenna-layout-aware (ALA)
//! averaging.
//!
//! ALA replaces every entry of a sample covariance by the mean of all entries
//! whose antenna pairs are translations of each other. For a ULA those are
//! the matrix diagonals; for a UPA they are the classes of
//! [`crate::geometry::PairPartition`]. Only one class of each conjugate couple
//! `{d, -d}` is averaged, its partner receives the conjugate value, so the
//! output is Hermitian and every entry is written exactly once.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use faer::{c64, Mat};

use crate::error::{CovError, Result};
use crate::geometry::{AntennaCoord, AntennaLayout, LayoutKind, PairPartition};
use crate::matrix::CovarianceMatrix;
use crate::sampling::{sample_q, sample_r, PilotObservation, SampleCovariances};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    /// True covariances, no estimation.
    Ideal,
    /// Raw sample covariances.
    SampleOnly,
    /// Shrinkage toward the diagonal.
    ViaQ,
    /// Antenna-layout-aware class averaging.
    Ala,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Ideal,
        EstimatorKind::SampleOnly,
        EstimatorKind::ViaQ,
        EstimatorKind::Ala,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ideal => "ideal",
            EstimatorKind::SampleOnly => "sample",
            EstimatorKind::ViaQ => "viaq",
            EstimatorKind::Ala => "ala",
        }
    }

    /// Whether the estimator consumes sample covariances.
    pub fn needs_samples(self) -> bool {
        !matches!(self, EstimatorKind::Ideal)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = CovError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ideal" => Ok(EstimatorKind::Ideal),
            "sample" => Ok(EstimatorKind::SampleOnly),
            "viaq" => Ok(EstimatorKind::ViaQ),
            "ala" => Ok(EstimatorKind::Ala),
            other => Err(CovError::InvalidParameter(format!(
                "unknown estimator '{other}' (expected ideal|sample|viaq|ala)"
            ))),
        }
    }
}

/// viaQ regularization factor κ ∈ [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ShrinkageWeight(f64);

impl ShrinkageWeight {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(CovError::InvalidKappa(kappa));
        }
        Ok(Self(kappa))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `(1 - κ) S + κ diag(S)`: off-diagonal entries scaled by `1 - κ`.
pub fn viaq(q_sample: &CovarianceMatrix, kappa: ShrinkageWeight) -> CovarianceMatrix {
    let keep = 1.0 - kappa.value();
    let n = q_sample.dim();
    CovarianceMatrix::from_fn(n, |i, j| {
        if i == j {
            q_sample[(i, i)]
        } else {
            q_sample[(i, j)] * keep
        }
    })
}

/// Running least-squares fit of the viaQ weight against known truths.
///
/// With `E = S - T` and `O` the off-diagonal part of `S`, the shrunk error is
/// `E - κ O`, so the minimizer of `Σ ||E_t - κ O_t||_F^2` is
/// `Re Σ <O_t, E_t> / Σ ||O_t||_F^2`, clamped to `[0, 1]`.
#[derive(Clone, Debug, Default)]
pub struct KappaFit {
    terms: Vec<(f64, f64)>,
    numerator: f64,
    denominator: f64,
}

impl KappaFit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, sample: &CovarianceMatrix, truth: &CovarianceMatrix) -> Result<()> {
        sample.check_same_dim(truth)?;
        let n = sample.dim();
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                if i == j {
                    continue;
                }
                let o = sample[(i, j)];
                let e = o - truth[(i, j)];
                num += (o.conj() * e).re;
                den += o.norm_sqr();
            }
        }
        self.terms.push((num, den));
        self.numerator += num;
        self.denominator += den;
        Ok(())
    }

    /// Appends the samples of another fit.
    pub fn merge(&mut self, other: &KappaFit) {
        self.terms.extend_from_slice(&other.terms);
        self.numerator += other.numerator;
        self.denominator += other.denominator;
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn ratio(num: f64, den: f64) -> f64 {
        if den > 0.0 {
            (num / den).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn weight(&self) -> ShrinkageWeight {
        ShrinkageWeight(Self::ratio(self.numerator, self.denominator))
    }

    /// Leave-one-sample-out jackknife standard error of κ.
    pub fn jackknife_stderr(&self) -> f64 {
        let n = self.terms.len();
        if n < 2 {
            return f64::NAN;
        }
        let loo: Vec<f64> = self
            .terms
            .iter()
            .map(|(a, b)| Self::ratio(self.numerator - a, self.denominator - b))
            .collect();
        let mean = loo.iter().sum::<f64>() / n as f64;
        let ss: f64 = loo.iter().map(|k| (k - mean).powi(2)).sum();
        ((n - 1) as f64 / n as f64 * ss).sqrt()
    }
}

/// κ* minimizing the average `||viaq(S_t, κ) - Q_true||_F^2` over the samples.
pub fn optimal_kappa(samples: &[CovarianceMatrix], truth: &CovarianceMatrix) -> Result<ShrinkageWeight> {
    if samples.is_empty() {
        return Err(CovError::InvalidParameter("optimal_kappa needs at least one sample".into()));
    }
    let mut fit = KappaFit::new();
    for s in samples {
        fit.add(s, truth)?;
    }
    Ok(fit.weight())
}

/// ULA averaging: each diagonal offset `d = q - p` is replaced by its mean
/// over the `N_t - |d|` entries; the lower triangle is the conjugate mirror.
pub fn ala_ula(q_sample: &CovarianceMatrix) -> CovarianceMatrix {
    let n = q_sample.dim();
    let mut out = Mat::<c64>::zeros(n, n);
    for d in 0..n {
        let mut sum = c64::new(0.0, 0.0);
        for p in 0..n - d {
            sum += q_sample[(p, p + d)];
        }
        let mean = sum / (n - d) as f64;
        if d == 0 {
            let v = c64::new(mean.re, 0.0);
            for p in 0..n {
                out[(p, p)] = v;
            }
        } else {
            for p in 0..n - d {
                out[(p, p + d)] = mean;
                out[(p + d, p)] = mean.conj();
            }
        }
    }
    CovarianceMatrix::new(out).expect("square")
}

/// Class averaging over a precomputed translation-equivalence partition.
pub fn ala_with_partition(q_sample: &CovarianceMatrix, partition: &PairPartition) -> Result<CovarianceMatrix> {
    let n = partition.nt();
    if q_sample.dim() != n {
        return Err(CovError::DimensionMismatch {
            expected: n,
            actual: q_sample.dim(),
        });
    }
    let ids = partition.class_index();
    let m = q_sample.as_mat();
    let mut sums = vec![c64::new(0.0, 0.0); partition.len()];
    for q in 0..n {
        let col = m.col(q);
        let col_ids = &ids[q * n..(q + 1) * n];
        for p in 0..n {
            sums[col_ids[p] as usize] += col[p];
        }
    }
    let mut values = vec![c64::new(0.0, 0.0); partition.len()];
    for (c, class) in partition.classes().iter().enumerate() {
        if !partition.is_canonical(c) {
            continue;
        }
        let mean = sums[c] / class.cardinality() as f64;
        let partner = partition.conjugate_of(c);
        if partner == c {
            values[c] = c64::new(mean.re, 0.0);
        } else {
            values[c] = mean;
            values[partner] = mean.conj();
        }
    }
    let out = Mat::from_fn(n, n, |p, q| values[ids[p + q * n] as usize]);
    Ok(CovarianceMatrix::new(out).expect("square"))
}

/// UPA averaging over translation classes of the panel (ULA accepted as the
/// single-row case).
pub fn ala_upa(q_sample: &CovarianceMatrix, layout: &AntennaLayout) -> Result<CovarianceMatrix> {
    if layout.kind() == LayoutKind::Generic {
        return Err(CovError::InvalidLayout("ala_upa needs a ULA or UPA layout".into()));
    }
    ala_with_partition(q_sample, &layout.partition())
}

/// Averaging for arbitrary lattice layouts; only exact translations share a
/// class.
pub fn ala_generic(q_sample: &CovarianceMatrix, coords: &[AntennaCoord]) -> Result<CovarianceMatrix> {
    let layout = AntennaLayout::generic(coords.to_vec())?;
    ala_with_partition(q_sample, &layout.partition())
}

/// ALA bound to one layout, holding its partition for reuse across trials.
#[derive(Clone, Debug)]
pub struct AlaEstimator {
    partition: Arc<PairPartition>,
    diagonal_walk: bool,
}

impl AlaEstimator {
    pub fn new(layout: &AntennaLayout) -> Self {
        Self {
            partition: layout.partition(),
            diagonal_walk: layout.kind() == LayoutKind::Ula,
        }
    }

    pub fn partition(&self) -> &PairPartition {
        &self.partition
    }

    pub fn apply(&self, q_sample: &CovarianceMatrix) -> Result<CovarianceMatrix> {
        if self.diagonal_walk {
            if q_sample.dim() != self.partition.nt() {
                return Err(CovError::DimensionMismatch {
                    expected: self.partition.nt(),
                    actual: q_sample.dim(),
                });
            }
            return Ok(ala_ula(q_sample));
        }
        ala_with_partition(q_sample, &self.partition)
    }
}

/// A covariance pair `(R, Q)` for one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariancePair {
    pub r: CovarianceMatrix,
    pub q: CovarianceMatrix,
}

/// Configured post-processing `f(·)` applied to both sample matrices.
#[derive(Clone, Debug)]
pub enum Estimator {
    Ideal,
    SampleOnly,
    /// Separately fitted weights for the R and Q families.
    ViaQ {
        kappa_r: ShrinkageWeight,
        kappa_q: ShrinkageWeight,
    },
    Ala(AlaEstimator),
}

impl Estimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Ideal => EstimatorKind::Ideal,
            Estimator::SampleOnly => EstimatorKind::SampleOnly,
            Estimator::ViaQ { .. } => EstimatorKind::ViaQ,
            Estimator::Ala(_) => EstimatorKind::Ala,
        }
    }

    /// Applies `f` to `(R_sample, Q_sample)`; `Ideal` returns `truth`.
    pub fn estimate(&self, sample: &SampleCovariances, truth: &CovariancePair) -> Result<CovariancePair> {
        Ok(match self {
            Estimator::Ideal => truth.clone(),
            Estimator::SampleOnly => CovariancePair {
                r: sample.r.clone(),
                q: sample.q.clone(),
            },
            Estimator::ViaQ { kappa_r, kappa_q } => CovariancePair {
                r: viaq(&sample.r, *kappa_r),
                q: viaq(&sample.q, *kappa_q),
            },
            Estimator::Ala(ala) => CovariancePair {
                r: ala.apply(&sample.r)?,
                q: ala.apply(&sample.q)?,
            },
        })
    }
}

/// Sample covariances of `obs` passed through `estimator`.
pub fn estimate_pair(
    obs: &PilotObservation,
    estimator: &Estimator,
    truth: &CovariancePair,
) -> Result<CovariancePair> {
    if obs.nt() != truth.q.dim() {
        return Err(CovError::DimensionMismatch {
            expected: truth.q.dim(),
            actual: obs.nt(),
        });
    }
    let sample = SampleCovariances {
        r: sample_r(obs),
        q: sample_q(obs),
    };
    estimator.estimate(&sample, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmodel::{exp_correlation_matrix, link_covariance, CorrelationParams};
    use crate::rng::{complex_normal, stream, StreamTag};
    use std::collections::HashMap;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    fn random_hermitian(n: usize, seed: u64) -> CovarianceMatrix {
        let mut rng = stream(seed, StreamTag::Calibration, 0, 0);
        CovarianceMatrix::hermitian_from_upper(n, |_, _| complex_normal(&mut rng) * 2.0)
    }

    /// Group entries by `q - p`, average each group, scatter back.
    fn brute_force_toeplitz(x: &CovarianceMatrix) -> CovarianceMatrix {
        let n = x.dim();
        let mut groups: HashMap<i64, Vec<c64>> = HashMap::new();
        for p in 0..n {
            for q in 0..n {
                groups.entry(q as i64 - p as i64).or_default().push(x[(p, q)]);
            }
        }
        let means: HashMap<i64, c64> = groups
            .into_iter()
            .map(|(d, v)| (d, v.iter().sum::<c64>() / v.len() as f64))
            .collect();
        CovarianceMatrix::from_fn(n, |p, q| means[&(q as i64 - p as i64)])
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("mmse".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn kappa_range_is_enforced() {
        assert!(ShrinkageWeight::new(1.5).is_err());
        assert!(ShrinkageWeight::new(-0.1).is_err());
        assert_eq!(ShrinkageWeight::new(0.3).unwrap().value(), 0.3);
    }

    #[test]
    fn viaq_endpoints_and_midpoint() {
        let s = random_hermitian(5, 1);
        assert_eq!(viaq(&s, ShrinkageWeight::new(0.0).unwrap()), s);
        assert_eq!(viaq(&s, ShrinkageWeight::new(1.0).unwrap()), s.diagonal());
        let m = CovarianceMatrix::from_fn(2, |i, j| if i == j { c(2.0, 0.0) } else { c(1.0, 0.0) });
        let out = viaq(&m, ShrinkageWeight::new(0.5).unwrap());
        assert_eq!(out[(0, 0)], c(2.0, 0.0));
        assert_eq!(out[(0, 1)], c(0.5, 0.0));
        assert_eq!(out[(1, 0)], c(0.5, 0.0));
    }

    #[test]
    fn kappa_zero_for_exact_samples() {
        let t = exp_correlation_matrix(6, 0.5, 0.2).unwrap();
        let k = optimal_kappa(&[t.clone(), t.clone()], &t).unwrap();
        assert_eq!(k.value(), 0.0);
    }

    #[test]
    fn kappa_one_for_huge_off_diagonal_noise() {
        let t = exp_correlation_matrix(6, 0.5, 0.2).unwrap();
        let mut s = t.clone();
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    s[(i, j)] += c(1e6 * ((i + j) % 3) as f64, 0.0);
                }
            }
        }
        let k = optimal_kappa(&[s.hermitian_part()], &t).unwrap();
        assert!(k.value() > 0.999_999, "{}", k.value());
    }

    #[test]
    fn kappa_matches_grid_search() {
        let t = exp_correlation_matrix(5, 0.6, 0.4).unwrap();
        let samples: Vec<_> = (0..4)
            .map(|s| {
                let mut m = t.clone();
                let noise = random_hermitian(5, 100 + s);
                m.add_scaled(&noise, 0.3).unwrap();
                m
            })
            .collect();
        let k = optimal_kappa(&samples, &t).unwrap().value();
        let loss = |kappa: f64| -> f64 {
            samples
                .iter()
                .map(|s| viaq(s, ShrinkageWeight::new(kappa).unwrap()).frobenius_distance(&t).powi(2))
                .sum()
        };
        let best = (0..=10_000)
            .map(|i| i as f64 / 10_000.0)
            .min_by(|a, b| loss(*a).partial_cmp(&loss(*b)).unwrap())
            .unwrap();
        assert!((k - best).abs() <= 1e-4, "{k} vs {best}");
    }

    #[test]
    fn ala_ula_fixed_point_on_toeplitz() {
        let t = exp_correlation_matrix(7, 0.5, 1.1).unwrap();
        assert!(ala_ula(&t).max_abs_diff(&t) < 1e-15);
    }

    #[test]
    fn ala_ula_averages_diagonal() {
        let mut x = CovarianceMatrix::zeros(3);
        x[(0, 0)] = c(1.0, 0.0);
        x[(1, 1)] = c(2.0, 0.0);
        x[(2, 2)] = c(3.0, 0.0);
        let out = ala_ula(&x);
        for i in 0..3 {
            assert_eq!(out[(i, i)], c(2.0, 0.0));
        }
        assert_eq!(out[(0, 1)], c(0.0, 0.0));
    }

    #[test]
    fn ala_ula_matches_brute_force() {
        let x = random_hermitian(4, 7);
        let out = ala_ula(&x);
        assert!(out.max_abs_diff(&brute_force_toeplitz(&x)) < 1e-12);
        assert!(out.is_toeplitz(1e-15));
        assert!(out.is_hermitian(0.0));
    }

    #[test]
    fn ala_upa_fixed_point_on_model() {
        let layout = AntennaLayout::upa(4, 6).unwrap();
        let params = CorrelationParams {
            r_h: 0.5,
            r_v: 0.65,
            theta_h: 2.5,
            theta_v: -0.7,
        };
        let r = link_covariance(&layout, &params).unwrap();
        assert!(ala_upa(&r, &layout).unwrap().max_abs_diff(&r) < 1e-12);
    }

    #[test]
    fn ala_upa_single_row_equals_ula() {
        for n in [1, 2, 9, 16] {
            let x = random_hermitian(n, 20 + n as u64);
            let layout = AntennaLayout::upa(1, n).unwrap();
            assert_eq!(ala_upa(&x, &layout).unwrap(), ala_ula(&x));
        }
    }

    #[test]
    fn ala_upa_two_by_two_diagonal() {
        let mut x = CovarianceMatrix::zeros(4);
        for i in 0..4 {
            x[(i, i)] = c(i as f64 + 1.0, 0.0);
        }
        let out = ala_upa(&x, &AntennaLayout::upa(2, 2).unwrap()).unwrap();
        for i in 0..4 {
            assert_eq!(out[(i, i)], c(2.5, 0.0));
        }
    }

    #[test]
    fn ala_upa_rejects_mismatch() {
        let x = random_hermitian(5, 3);
        let err = ala_upa(&x, &AntennaLayout::upa(2, 2).unwrap()).unwrap_err();
        assert_eq!(err, CovError::DimensionMismatch { expected: 4, actual: 5 });
    }

    #[test]
    fn ala_generic_cross_checks() {
        let panel = AntennaLayout::upa(4, 6).unwrap();
        let x = random_hermitian(24, 4);
        let a = ala_generic(&x, &panel.coords()).unwrap();
        let b = ala_upa(&x, &panel).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);

        let line: Vec<_> = (0..16).map(|i| AntennaCoord::new(i, 0)).collect();
        let y = random_hermitian(16, 5);
        assert!(ala_generic(&y, &line).unwrap().max_abs_diff(&ala_ula(&y)) < 1e-12);
    }

    #[test]
    fn ala_generic_singleton_classes() {
        // Spacings 1 and 3: displacements ±1, ±3, ±4 are all unique.
        let coords = [AntennaCoord::new(0, 0), AntennaCoord::new(1, 0), AntennaCoord::new(4, 0)];
        let x = random_hermitian(3, 6);
        let out = ala_generic(&x, &coords).unwrap();
        let mean_diag = (x[(0, 0)].re + x[(1, 1)].re + x[(2, 2)].re) / 3.0;
        for p in 0..3 {
            for q in 0..3 {
                if p == q {
                    assert!((out[(p, p)].re - mean_diag).abs() < 1e-14);
                } else {
                    assert_eq!(out[(p, q)], x[(p, q)]);
                }
            }
        }
    }

    #[test]
    fn ala_generic_rejects_duplicates() {
        let coords = [AntennaCoord::new(0, 0), AntennaCoord::new(0, 0)];
        assert!(matches!(
            ala_generic(&CovarianceMatrix::identity(2), &coords),
            Err(CovError::DuplicateCoordinate { .. })
        ));
    }

    #[test]
    fn estimator_dispatch() {
        let layout = AntennaLayout::ula(6).unwrap();
        let truth = CovariancePair {
            r: exp_correlation_matrix(6, 0.5, 0.1).unwrap(),
            q: exp_correlation_matrix(6, 0.5, 0.1).unwrap().scaled(3.0),
        };
        let sample = SampleCovariances {
            r: random_hermitian(6, 30),
            q: random_hermitian(6, 31),
        };
        let ideal = Estimator::Ideal.estimate(&sample, &truth).unwrap();
        assert_eq!(ideal, truth);
        let raw = Estimator::SampleOnly.estimate(&sample, &truth).unwrap();
        assert_eq!(raw.r, sample.r);
        assert_eq!(raw.q, sample.q);
        let ala = Estimator::Ala(AlaEstimator::new(&layout)).estimate(&sample, &truth).unwrap();
        assert!(ala.r.is_toeplitz(1e-15) && ala.q.is_toeplitz(1e-15));
        let shrink = Estimator::ViaQ {
            kappa_r: ShrinkageWeight::new(1.0).unwrap(),
            kappa_q: ShrinkageWeight::new(0.0).unwrap(),
        }
        .estimate(&sample, &truth)
        .unwrap();
        assert_eq!(shrink.r, sample.r.diagonal());
        assert_eq!(shrink.q, sample.q);
    }

    #[test]
    fn estimate_pair_from_observation() {
        let mut rng = stream(40, StreamTag::Covariance, 0, 0);
        let y = Mat::from_fn(4, 10, |_, _| complex_normal(&mut rng));
        let obs = PilotObservation::new(y.clone(), y).unwrap();
        let truth = CovariancePair {
            r: CovarianceMatrix::identity(4),
            q: CovarianceMatrix::identity(4),
        };
        let out = estimate_pair(&obs, &Estimator::SampleOnly, &truth).unwrap();
        assert_eq!(out.r.frobenius_norm(), 0.0);
        assert_eq!(out.q, sample_q(&obs));
    }
}

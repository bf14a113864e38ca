//! Correlated channel draws, two-slot pilot observations and sample
//! covariance matrices.
//!
//! Pilot snapshots are independent: every column of an observation carries
//! fresh fading and fresh noise, and the second slot (neighbors only) is
//! independent of the first. Under that model each slot's columns are i.i.d.
//! `CN(0, Q)` (resp. `CN(0, Q')`), so the sample second moments are complex
//! Wishart and [`UplinkModel::sample_covariances`] draws them directly through
//! the Bartlett decomposition instead of materializing `N_p` columns.

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{c64, Accum, Col, Mat, MatRef, Par, Side};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::corrmodel::build_q;
use crate::error::{CovError, Result};
use crate::matrix::{CovarianceMatrix, PSD_TOLERANCE};
use crate::rng::complex_normal;

/// Square root `A` of a covariance, `A A^H = R`.
///
/// Cholesky when `R` is positive definite, otherwise the eigenvalue square
/// root with tiny negative eigenvalues clamped to zero.
#[derive(Clone, Debug)]
pub struct CovarianceFactor {
    factor: Mat<c64>,
    lower_triangular: bool,
}

impl CovarianceFactor {
    pub fn new(r: &CovarianceMatrix) -> Result<Self> {
        if let Ok(llt) = r.as_mat().llt(Side::Lower) {
            return Ok(Self {
                factor: llt.L().to_owned(),
                lower_triangular: true,
            });
        }
        let h = r.hermitian_part();
        let evd = h
            .as_mat()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| CovError::EigenFailure)?;
        let n = r.dim();
        let s = evd.S().column_vector();
        let scale = (0..n).map(|i| s[i].re.abs()).fold(0.0, f64::max);
        let mut roots = Vec::with_capacity(n);
        for i in 0..n {
            let lambda = s[i].re;
            if lambda < -PSD_TOLERANCE * scale.max(1e-300) {
                return Err(CovError::NotPositiveSemidefinite {
                    min_eigenvalue: lambda,
                });
            }
            roots.push(lambda.max(0.0).sqrt());
        }
        let u = evd.U();
        Ok(Self {
            factor: Mat::from_fn(n, n, |i, j| u[(i, j)] * roots[j]),
            lower_triangular: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.factor.as_ref()
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.lower_triangular
    }

    fn structure(&self) -> BlockStructure {
        if self.lower_triangular {
            BlockStructure::TriangularLower
        } else {
            BlockStructure::Rectangular
        }
    }

    /// `A z` for a given white vector `z`.
    pub fn color(&self, z: &[c64]) -> Col<c64> {
        let n = self.dim();
        assert_eq!(z.len(), n, "dimension mismatch");
        let mut g = Col::<c64>::zeros(n);
        for (j, &zj) in z.iter().enumerate() {
            let start = if self.lower_triangular { j } else { 0 };
            let col = self.factor.col(j);
            for i in start..n {
                g[i] += col[i] * zj;
            }
        }
        g
    }

    /// One draw from `CN(0, A A^H)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Col<c64> {
        let z: Vec<c64> = (0..self.dim()).map(|_| complex_normal(rng)).collect();
        self.color(&z)
    }

    /// `(1/n_p) Σ_t y_t y_t^H` for `n_p` i.i.d. columns `y_t ~ CN(0, A A^H)`,
    /// drawn in distribution without forming the columns when `n_p >= n`.
    pub fn sample_second_moment<R: Rng + ?Sized>(&self, n_p: usize, rng: &mut R) -> CovarianceMatrix {
        assert!(n_p >= 1, "need at least one pilot snapshot");
        let n = self.dim();
        let (white, white_structure) = if n_p >= n {
            (bartlett_factor(n, n_p, rng), BlockStructure::TriangularLower)
        } else {
            (
                Mat::from_fn(n, n_p, |_, _| complex_normal(rng)),
                BlockStructure::Rectangular,
            )
        };
        let mut colored = Mat::<c64>::zeros(n, white.ncols());
        let colored_structure = if self.lower_triangular && n_p >= n {
            BlockStructure::TriangularLower
        } else {
            BlockStructure::Rectangular
        };
        triangular::matmul(
            colored.as_mut(),
            colored_structure,
            Accum::Replace,
            self.factor.as_ref(),
            self.structure(),
            white.as_ref(),
            white_structure,
            c64::new(1.0, 0.0),
            Par::Seq,
        );
        gram_lower(colored.as_ref(), colored_structure, 1.0 / n_p as f64)
    }
}

/// Lower Bartlett factor `T` of a complex Wishart `CW(n, dof, I)`:
/// `T_ii = sqrt(Gamma(dof - i, 1))`, `T_ij ~ CN(0, 1)` below the diagonal.
fn bartlett_factor<R: Rng + ?Sized>(n: usize, dof: usize, rng: &mut R) -> Mat<c64> {
    let mut t = Mat::<c64>::zeros(n, n);
    for j in 0..n {
        let gamma = Gamma::new((dof - j) as f64, 1.0).expect("positive shape");
        t[(j, j)] = c64::new(gamma.sample(rng).sqrt(), 0.0);
        for i in j + 1..n {
            t[(i, j)] = complex_normal(rng);
        }
    }
    t
}

/// `scale * B B^H`, computed on the lower triangle and mirrored so the result
/// is exactly Hermitian.
fn gram_lower(b: MatRef<'_, c64>, structure: BlockStructure, scale: f64) -> CovarianceMatrix {
    let n = b.nrows();
    let mut out = Mat::<c64>::zeros(n, n);
    let adjoint_structure = match structure {
        BlockStructure::TriangularLower => BlockStructure::TriangularUpper,
        _ => BlockStructure::Rectangular,
    };
    triangular::matmul(
        out.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        b,
        structure,
        b.adjoint(),
        adjoint_structure,
        c64::new(scale, 0.0),
        Par::Seq,
    );
    for j in 0..n {
        out[(j, j)] = c64::new(out[(j, j)].re, 0.0);
        for i in j + 1..n {
            out[(j, i)] = out[(i, j)].conj();
        }
    }
    CovarianceMatrix::new(out).expect("square")
}

/// One draw `g = A z ~ CN(0, R)`.
pub fn draw_channel<R: Rng + ?Sized>(r: &CovarianceMatrix, rng: &mut R) -> Result<Col<c64>> {
    Ok(CovarianceFactor::new(r)?.draw(rng))
}

/// Received pilot snapshots of one cell for both slots.
#[derive(Clone, Debug)]
pub struct PilotObservation {
    /// Slot 1: every UE transmits. `N_t x N_p`.
    pub y_all: Mat<c64>,
    /// Slot 2: only UEs of neighboring cells transmit. `N_t x N_p`.
    pub y_neighbors: Mat<c64>,
}

impl PilotObservation {
    pub fn new(y_all: Mat<c64>, y_neighbors: Mat<c64>) -> Result<Self> {
        if y_all.ncols() == 0 {
            return Err(CovError::InvalidParameter("need at least one pilot snapshot".into()));
        }
        if y_all.nrows() != y_neighbors.nrows() || y_all.ncols() != y_neighbors.ncols() {
            return Err(CovError::DimensionMismatch {
                expected: y_all.ncols(),
                actual: y_neighbors.ncols(),
            });
        }
        Ok(Self { y_all, y_neighbors })
    }

    pub fn n_p(&self) -> usize {
        self.y_all.ncols()
    }

    pub fn nt(&self) -> usize {
        self.y_all.nrows()
    }
}

/// `(1/N_p) Y Y^H` of the first slot.
pub fn sample_q(obs: &PilotObservation) -> CovarianceMatrix {
    gram_lower(obs.y_all.as_ref(), BlockStructure::Rectangular, 1.0 / obs.n_p() as f64)
}

/// `Q_sample - (1/N_p) Y' Y'^H`. Hermitian, not necessarily PSD.
pub fn sample_r(obs: &PilotObservation) -> CovarianceMatrix {
    let neighbors = gram_lower(
        obs.y_neighbors.as_ref(),
        BlockStructure::Rectangular,
        1.0 / obs.n_p() as f64,
    );
    &sample_q(obs) - &neighbors
}

/// Sample `(R, Q)` pair of one cell.
#[derive(Clone, Debug)]
pub struct SampleCovariances {
    pub r: CovarianceMatrix,
    pub q: CovarianceMatrix,
}

/// Uplink pilot model seen by one base station, normalized by the serving
/// link's amplitude: `y = Σ_k sqrt(ρ_k/ρ_s) g_k + n / sqrt(ρ_s)`.
#[derive(Clone, Debug)]
pub struct UplinkModel {
    serving: usize,
    links: Vec<CovarianceFactor>,
    amplitudes: Vec<f64>,
    noise_std: f64,
    q: CovarianceMatrix,
    q_neighbors: CovarianceMatrix,
    q_factor: CovarianceFactor,
    q_neighbors_factor: CovarianceFactor,
}

impl UplinkModel {
    /// `r_list[k]` is the covariance of UE `k` at this BS and `snr_ul[k]`
    /// its linear uplink SNR; `serving` indexes this BS's own UE.
    pub fn new(r_list: &[CovarianceMatrix], snr_ul: &[f64], serving: usize) -> Result<Self> {
        if r_list.len() != snr_ul.len() {
            return Err(CovError::DimensionMismatch {
                expected: r_list.len(),
                actual: snr_ul.len(),
            });
        }
        if serving >= r_list.len() {
            return Err(CovError::IndexOutOfRange {
                index: serving,
                nt: r_list.len(),
            });
        }
        let rho_serving = snr_ul[serving];
        if !(rho_serving > 0.0) {
            return Err(CovError::InvalidParameter(format!(
                "serving SNR {rho_serving} must be positive"
            )));
        }
        let weights: Vec<f64> = snr_ul.iter().map(|rho| rho / rho_serving).collect();
        let noise = 1.0 / rho_serving;
        let q = build_q(r_list, &weights, noise)?;
        let (others, other_weights): (Vec<_>, Vec<_>) = r_list
            .iter()
            .zip(&weights)
            .enumerate()
            .filter(|(k, _)| *k != serving)
            .map(|(_, (r, w))| (r.clone(), *w))
            .unzip();
        let q_neighbors = if others.is_empty() {
            let mut m = CovarianceMatrix::zeros(q.dim());
            m.add_identity(noise);
            m
        } else {
            build_q(&others, &other_weights, noise)?
        };
        let links = r_list
            .iter()
            .map(CovarianceFactor::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            serving,
            links,
            amplitudes: weights.iter().map(|w| w.sqrt()).collect(),
            noise_std: noise.sqrt(),
            q_factor: CovarianceFactor::new(&q)?,
            q_neighbors_factor: CovarianceFactor::new(&q_neighbors)?,
            q,
            q_neighbors,
        })
    }

    pub fn nt(&self) -> usize {
        self.q.dim()
    }

    pub fn serving(&self) -> usize {
        self.serving
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// Second moment of the normalized slot-1 observation.
    pub fn q(&self) -> &CovarianceMatrix {
        &self.q
    }

    /// Second moment of the normalized slot-2 observation.
    pub fn q_neighbors(&self) -> &CovarianceMatrix {
        &self.q_neighbors
    }

    pub fn amplitude(&self, k: usize) -> f64 {
        self.amplitudes[k]
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn link_factor(&self, k: usize) -> &CovarianceFactor {
        &self.links[k]
    }

    /// Fresh channel vectors of every UE at this BS.
    pub fn draw_channels<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Col<c64>> {
        self.links.iter().map(|f| f.draw(rng)).collect()
    }

    /// Normalized observation of one pilot symbol for given channels.
    pub fn snapshot<R: Rng + ?Sized>(&self, channels: &[Col<c64>], rng: &mut R) -> Col<c64> {
        self.combine(channels, None, rng)
    }

    fn combine<R: Rng + ?Sized>(
        &self,
        channels: &[Col<c64>],
        skip: Option<usize>,
        rng: &mut R,
    ) -> Col<c64> {
        let n = self.nt();
        let mut y = Col::<c64>::zeros(n);
        for (k, g) in channels.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            let a = self.amplitudes[k];
            for i in 0..n {
                y[i] += g[i] * a;
            }
        }
        for i in 0..n {
            y[i] += complex_normal(rng) * self.noise_std;
        }
        y
    }

    /// `n_p` explicit snapshots per slot, each with fresh fading and noise.
    pub fn observe_uplink<R: Rng + ?Sized>(&self, n_p: usize, rng: &mut R) -> Result<PilotObservation> {
        let n = self.nt();
        let mut y_all = Mat::<c64>::zeros(n, n_p);
        let mut y_neighbors = Mat::<c64>::zeros(n, n_p);
        for t in 0..n_p {
            let g = self.draw_channels(rng);
            let y = self.combine(&g, None, rng);
            y_all.col_mut(t).copy_from(&y);
        }
        for t in 0..n_p {
            let g = self.draw_channels(rng);
            let y = self.combine(&g, Some(self.serving), rng);
            y_neighbors.col_mut(t).copy_from(&y);
        }
        PilotObservation::new(y_all, y_neighbors)
    }

    /// Sample `(R, Q)` with the same distribution as
    /// `(sample_r(obs), sample_q(obs))` for `obs = observe_uplink(n_p)`.
    pub fn sample_covariances<R: Rng + ?Sized>(&self, n_p: usize, rng: &mut R) -> SampleCovariances {
        let q = self.q_factor.sample_second_moment(n_p, rng);
        let q_neighbors = self.q_neighbors_factor.sample_second_moment(n_p, rng);
        SampleCovariances {
            r: &q - &q_neighbors,
            q,
        }
    }
}

//! Exponential spatial correlation model and Kronecker covariances.
//!
//! With the column-major antenna numbering of [`crate::geometry`], the UPA
//! covariance entry for antennas `p`, `q` is `R_h(x_p, x_q) * R_v(y_p, y_q)`,
//! which is the Kronecker product with the horizontal factor outermost.

use faer::c64;

use crate::error::{CovError, Result};
use crate::geometry::{AntennaLayout, LayoutKind};
use crate::matrix::CovarianceMatrix;

/// Correlation factors and angles of one BS-UE link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationParams {
    /// Azimuth correlation factor in `[0, 1]`.
    pub r_h: f64,
    /// Elevation correlation factor in `[0, 1]`.
    pub r_v: f64,
    /// Azimuth angle of arrival, radians.
    pub theta_h: f64,
    /// Elevation angle of arrival, radians.
    pub theta_v: f64,
}

impl CorrelationParams {
    pub fn validate(&self) -> Result<()> {
        check_factor(self.r_h)?;
        check_factor(self.r_v)
    }
}

fn check_factor(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(CovError::InvalidCorrelation(r));
    }
    Ok(())
}

/// Correlation coefficient `r^|d| e^{j d θ}` for an index offset `d`.
#[inline]
pub fn exp_correlation(r: f64, theta: f64, offset: i32) -> c64 {
    let mag = r.powi(offset.abs());
    let phase = offset as f64 * theta;
    c64::new(mag * phase.cos(), mag * phase.sin())
}

/// `n x n` matrix with entry `(m, k) = r^|k-m| e^{j(k-m)θ}`.
///
/// Every entry on a diagonal is produced by the same expression, so the
/// result is exactly Toeplitz and exactly Hermitian.
pub fn exp_correlation_matrix(n: usize, r: f64, theta: f64) -> Result<CovarianceMatrix> {
    check_factor(r)?;
    let row: Vec<c64> = (0..n as i32).map(|d| exp_correlation(r, theta, d)).collect();
    Ok(CovarianceMatrix::hermitian_from_upper(n, |m, k| row[k - m]))
}

/// Kronecker covariance of an `M x N` panel from the elevation factor
/// `r_v` (`M x M`) and the azimuth factor `r_h` (`N x N`).
///
/// Entry `(x*M + y, x'*M + y')` equals `r_h[(x, x')] * r_v[(y, y')]`.
pub fn kronecker_covariance(r_v: &CovarianceMatrix, r_h: &CovarianceMatrix) -> CovarianceMatrix {
    let m = r_v.dim();
    let n = r_h.dim();
    let mut out = CovarianceMatrix::zeros(m * n);
    for xq in 0..n {
        for yq in 0..m {
            let q = xq * m + yq;
            for xp in 0..n {
                let h = r_h[(xp, xq)];
                for yp in 0..m {
                    out[(xp * m + yp, q)] = h * r_v[(yp, yq)];
                }
            }
        }
    }
    out
}

/// True covariance of one link for the given layout.
///
/// ULA and UPA use the separable construction; generic layouts evaluate the
/// same separable formula from the antenna displacements directly.
pub fn link_covariance(layout: &AntennaLayout, params: &CorrelationParams) -> Result<CovarianceMatrix> {
    params.validate()?;
    match layout.kind() {
        LayoutKind::Ula => exp_correlation_matrix(layout.nt(), params.r_h, params.theta_h),
        LayoutKind::Upa => {
            let rows = layout.rows().expect("UPA has rows");
            let cols = layout.cols().expect("UPA has cols");
            let r_v = exp_correlation_matrix(rows, params.r_v, params.theta_v)?;
            let r_h = exp_correlation_matrix(cols, params.r_h, params.theta_h)?;
            Ok(kronecker_covariance(&r_v, &r_h))
        }
        LayoutKind::Generic => {
            let coords = layout.coords();
            Ok(CovarianceMatrix::hermitian_from_upper(coords.len(), |p, q| {
                let dx = coords[q].x - coords[p].x;
                let dy = coords[q].y - coords[p].y;
                exp_correlation(params.r_h, params.theta_h, dx)
                    * exp_correlation(params.r_v, params.theta_v, dy)
            }))
        }
    }
}

/// `Q = Σ_k w_k R_k + noise_scale · I`.
///
/// Unit weights with `noise_scale = 1/ρ` give the equal-SNR aggregate; the
/// weighted form is the second moment of an observation normalized by the
/// serving link's amplitude.
pub fn build_q(
    r_list: &[CovarianceMatrix],
    snr_weights: &[f64],
    noise_scale: f64,
) -> Result<CovarianceMatrix> {
    let first = r_list
        .first()
        .ok_or_else(|| CovError::InvalidParameter("build_q needs at least one matrix".into()))?;
    if snr_weights.len() != r_list.len() {
        return Err(CovError::DimensionMismatch {
            expected: r_list.len(),
            actual: snr_weights.len(),
        });
    }
    if let Some(w) = snr_weights.iter().find(|w| !(**w > 0.0)) {
        return Err(CovError::InvalidParameter(format!("SNR weight {w} must be positive")));
    }
    let mut q = CovarianceMatrix::zeros(first.dim());
    for (r, &w) in r_list.iter().zip(snr_weights) {
        q.add_scaled(r, w)?;
    }
    q.add_identity(noise_scale);
    Ok(q)
}

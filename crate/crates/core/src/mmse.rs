//! Linear MMSE channel estimation and its error statistics.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{c64, Col, Mat, MatRef};

use crate::error::{CovError, Result};
use crate::matrix::CovarianceMatrix;

/// Largest accepted pivot-ratio condition estimate before a system is
/// declared numerically singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// LU factorization with partial pivoting plus a cheap conditioning guard.
///
/// Sample and ALA matrices can be indefinite at small `N_p`, so Cholesky is
/// not an option. The guard uses `max|u_ii| / min|u_ii|`, a lower bound on
/// the 2-norm condition number that catches the rank-deficient cases seen in
/// practice.
#[derive(Debug)]
pub struct LinearSolver {
    lu: PartialPivLu<c64>,
    condition: f64,
}

impl LinearSolver {
    pub fn new(a: MatRef<'_, c64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(CovError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..u.nrows() {
            let m = u[(i, i)].norm();
            lo = lo.min(m);
            hi = hi.max(m);
        }
        let condition = if lo > 0.0 && hi.is_finite() { hi / lo } else { f64::INFINITY };
        if !(condition <= CONDITION_LIMIT) {
            return Err(CovError::Singular { condition });
        }
        Ok(Self { lu, condition })
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn solve_vec(&self, b: &Col<c64>) -> Col<c64> {
        let mut x = b.clone();
        self.lu.solve_in_place(x.as_mat_mut());
        x
    }

    pub fn solve_mat(&self, b: MatRef<'_, c64>) -> Mat<c64> {
        self.lu.solve(b)
    }
}

/// Channel estimate of UE `ue` at base station `cell`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelEstimate {
    pub g_hat: Col<c64>,
    pub cell: usize,
    pub ue: usize,
}

/// `ĝ = R̂ Q̂⁻¹ y` via a linear solve.
pub fn mmse_estimate(r_hat: &CovarianceMatrix, q_hat: &CovarianceMatrix, y: &Col<c64>) -> Result<Col<c64>> {
    MmseFilter::new(r_hat, q_hat)?.apply(y)
}

/// MMSE filter with `Q̂` factored once, reusable across observations.
#[derive(Debug)]
pub struct MmseFilter {
    r_hat: CovarianceMatrix,
    solver: LinearSolver,
}

impl MmseFilter {
    pub fn new(r_hat: &CovarianceMatrix, q_hat: &CovarianceMatrix) -> Result<Self> {
        r_hat.check_same_dim(q_hat)?;
        Ok(Self {
            r_hat: r_hat.clone(),
            solver: LinearSolver::new(q_hat.as_mat())?,
        })
    }

    pub fn dim(&self) -> usize {
        self.r_hat.dim()
    }

    pub fn apply(&self, y: &Col<c64>) -> Result<Col<c64>> {
        if y.nrows() != self.dim() {
            return Err(CovError::DimensionMismatch {
                expected: self.dim(),
                actual: y.nrows(),
            });
        }
        let z = self.solver.solve_vec(y);
        Ok(self.r_hat.as_mat() * &z)
    }

    /// The filter as an explicit matrix `R̂ Q̂⁻¹ = (Q̂⁻¹ R̂)ᴴ` (both inputs
    /// Hermitian), for repeated cheap use.
    pub fn to_matrix(&self) -> Mat<c64> {
        self.solver.solve_mat(self.r_hat.as_mat()).adjoint().to_owned()
    }
}

/// `Φ = R Q⁻¹ R`, symmetrized to remove rounding asymmetry.
pub fn error_covariance(r: &CovarianceMatrix, q: &CovarianceMatrix) -> Result<CovarianceMatrix> {
    r.check_same_dim(q)?;
    let solver = LinearSolver::new(q.as_mat())?;
    let x = solver.solve_mat(r.as_mat());
    let phi = CovarianceMatrix::new(r.as_mat() * &x).expect("square");
    Ok(phi.hermitian_part())
}

/// `Σ ||g - ĝ||² / (n · tr R)` over the provided pairs.
pub fn normalized_mse<'a, I>(pairs: I, r_true: &CovarianceMatrix) -> Result<f64>
where
    I: IntoIterator<Item = (&'a Col<c64>, &'a Col<c64>)>,
{
    let tr = r_true.trace().re;
    let (mut sum, mut count) = (0.0, 0usize);
    for (g, g_hat) in pairs {
        sum += squared_error(g, g_hat) / tr;
        count += 1;
    }
    if count == 0 {
        return Err(CovError::InvalidParameter("normalized_mse needs at least one pair".into()));
    }
    Ok(sum / count as f64)
}

pub fn squared_error(g: &Col<c64>, g_hat: &Col<c64>) -> f64 {
    (0..g.nrows()).map(|i| (g[i] - g_hat[i]).norm_sqr()).sum()
}

/// Closed-form ideal-covariance MSE `tr(R - Φ) / tr R`.
pub fn ideal_normalized_mse(r: &CovarianceMatrix, q: &CovarianceMatrix) -> Result<f64> {
    let phi = error_covariance(r, q)?;
    Ok((r.trace().re - phi.trace().re) / r.trace().re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmodel::exp_correlation_matrix;
    use crate::rng::{complex_normal, stream, StreamTag};
    use crate::sampling::UplinkModel;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    fn scalar(v: f64) -> CovarianceMatrix {
        CovarianceMatrix::from_fn(1, |_, _| c(v))
    }

    fn col(v: &[c64]) -> Col<c64> {
        Col::from_fn(v.len(), |i| v[i])
    }

    #[test]
    fn scalar_cases() {
        let g = mmse_estimate(&scalar(1.0), &scalar(2.0), &col(&[c(3.0)])).unwrap();
        assert!((g[0] - c(1.5)).norm() < 1e-15);
        let phi = error_covariance(&scalar(1.0), &scalar(2.0)).unwrap();
        assert!((phi[(0, 0)] - c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn identity_and_zero_filters() {
        let r = exp_correlation_matrix(6, 0.5, 0.3).unwrap();
        let mut rng = stream(1, StreamTag::Fading, 0, 0);
        let y = Col::from_fn(6, |_| complex_normal(&mut rng));
        let g = mmse_estimate(&r, &r, &y).unwrap();
        assert!((0..6).all(|i| (g[i] - y[i]).norm() < 1e-12));
        let z = mmse_estimate(&CovarianceMatrix::zeros(6), &r, &y).unwrap();
        assert!((0..6).all(|i| z[i].norm() == 0.0));
        let phi = error_covariance(&r, &r).unwrap();
        assert!(phi.max_abs_diff(&r) < 1e-12);
    }

    #[test]
    fn singular_q_is_reported() {
        let q = CovarianceMatrix::from_fn(3, |_, _| c(1.0));
        assert!(matches!(
            mmse_estimate(&q, &q, &col(&[c(1.0); 3])),
            Err(CovError::Singular { .. })
        ));
        assert!(matches!(
            LinearSolver::new(CovarianceMatrix::zeros(2).as_mat()),
            Err(CovError::Singular { .. })
        ));
    }

    #[test]
    fn filter_matrix_matches_solve() {
        let r = exp_correlation_matrix(5, 0.6, 1.0).unwrap();
        let mut q = exp_correlation_matrix(5, 0.3, -0.5).unwrap();
        q.add_scaled(&r, 1.0).unwrap();
        q.add_identity(0.2);
        let f = MmseFilter::new(&r, &q).unwrap();
        let a = f.to_matrix();
        let mut rng = stream(2, StreamTag::Fading, 0, 0);
        let y = Col::from_fn(5, |_| complex_normal(&mut rng));
        let direct = f.apply(&y).unwrap();
        let via = &a * &y;
        assert!((0..5).all(|i| (direct[i] - via[i]).norm() < 1e-12));
    }

    fn seven_cell_like(n: usize) -> UplinkModel {
        let r_list: Vec<_> = (0..7)
            .map(|k| exp_correlation_matrix(n, 0.5, -2.0 + 0.6 * k as f64).unwrap())
            .collect();
        let mut snr = vec![10f64.powf(-0.86); 7];
        snr[0] = 10f64.powf(-0.7);
        UplinkModel::new(&r_list, &snr, 0).unwrap()
    }

    #[test]
    fn r_minus_phi_is_psd() {
        let model = seven_cell_like(8);
        let r = model.link_factor(0).matrix() * model.link_factor(0).matrix().adjoint();
        let r = CovarianceMatrix::new(r).unwrap().hermitian_part();
        let phi = error_covariance(&r, model.q()).unwrap();
        assert!((&r - &phi).min_eigenvalue().unwrap() > -1e-12);
        assert!(phi.is_hermitian(0.0));
    }

    /// Orthogonality, estimate covariance and closed-form MSE with ideal
    /// matrices, checked empirically.
    #[test]
    fn ideal_filter_statistics() {
        let n = 8;
        let model = seven_cell_like(n);
        let r0 = exp_correlation_matrix(n, 0.5, -2.0).unwrap();
        let filter = MmseFilter::new(&r0, model.q()).unwrap();
        let phi = error_covariance(&r0, model.q()).unwrap();
        let trials = 10_000;
        let mut rng = stream(3, StreamTag::Fading, 0, 0);
        let mut cross = Mat::<c64>::zeros(n, n);
        let mut cov = Mat::<c64>::zeros(n, n);
        let mut err = 0.0;
        for _ in 0..trials {
            let g = model.draw_channels(&mut rng);
            let y = model.snapshot(&g, &mut rng);
            let gh = filter.apply(&y).unwrap();
            let e = &g[0] - &gh;
            for j in 0..n {
                for i in 0..n {
                    cross[(i, j)] += gh[i] * e[j].conj();
                    cov[(i, j)] += gh[i] * gh[j].conj();
                }
            }
            err += squared_error(&g[0], &gh) / n as f64;
        }
        let scale = 1.0 / trials as f64;
        for j in 0..n {
            for i in 0..n {
                assert!((cross[(i, j)] * scale).norm() < 0.02);
            }
        }
        let emp = CovarianceMatrix::from_fn(n, |i, j| cov[(i, j)] * scale);
        assert!(emp.frobenius_distance(&phi) / phi.frobenius_norm() < 0.05);
        let oracle = ideal_normalized_mse(&r0, model.q()).unwrap();
        assert!(((err * scale) - oracle).abs() / oracle < 0.03, "{} vs {oracle}", err * scale);
    }

    #[test]
    fn normalized_mse_endpoints() {
        let r = CovarianceMatrix::identity(4);
        let mut rng = stream(4, StreamTag::Fading, 0, 0);
        let gs: Vec<Col<c64>> = (0..20_000).map(|_| Col::from_fn(4, |_| complex_normal(&mut rng))).collect();
        let zeros = Col::<c64>::zeros(4);
        assert_eq!(normalized_mse(gs.iter().map(|g| (g, g)), &r).unwrap(), 0.0);
        let m = normalized_mse(gs.iter().map(|g| (g, &zeros)), &r).unwrap();
        assert!((m - 1.0).abs() < 0.02);
        assert!(normalized_mse(std::iter::empty(), &r).is_err());
    }
}

//! QR least squares with collinearity detection and a ridge fallback.

use nalgebra::{DMatrix, DVector};

/// Relative size below which a QR pivot marks its column as collinear.
const COLLINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Diagonal of `(XᵀX)⁻¹` (of the ridge system when `ridge` is set).
    pub xtx_inv_diag: DVector<f64>,
    pub ssr: f64,
    pub ridge: bool,
}

impl LeastSquares {
    /// Homoskedastic standard errors with `ssr / (n - k)` as noise variance.
    pub fn std_errors(&self) -> DVector<f64> {
        let n = self.residuals.len();
        let k = self.coef.len();
        let s2 = if n > k { self.ssr / (n - k) as f64 } else { f64::NAN };
        self.xtx_inv_diag.map(|d| (s2 * d).sqrt())
    }
}

/// Thin QR factors of a full-column-rank matrix.
#[derive(Debug, Clone)]
pub struct ThinQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl ThinQr {
    /// Factorizes `x`, or returns the indices of columns that lie (numerically)
    /// in the span of the columns before them.
    pub fn new(x: &DMatrix<f64>) -> Result<Self, Vec<usize>> {
        let qr = x.clone().qr();
        let r = qr.r();
        let collinear: Vec<usize> = (0..x.ncols())
            .filter(|&j| {
                let norm = x.column(j).norm();
                norm == 0.0 || r[(j, j)].abs() <= COLLINEAR_TOL * norm
            })
            .collect();
        if !collinear.is_empty() {
            return Err(collinear);
        }
        Ok(Self { q: qr.q(), r })
    }

    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let qty = self.q.transpose() * y;
        self.r.solve_upper_triangular(&qty).expect("nonsingular R")
    }

    /// `(XᵀX)⁻¹ = R⁻¹ R⁻ᵀ`.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        let k = self.r.ncols();
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .expect("nonsingular R");
        &r_inv * r_inv.transpose()
    }

    /// Component of `v` orthogonal to the column space.
    pub fn residualize(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        v - &self.q * (self.q.transpose() * v)
    }
}

/// Ordinary least squares via QR. Errors with the collinear column indices.
pub fn qr_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares, Vec<usize>> {
    let qr = ThinQr::new(x)?;
    let coef = qr.solve(y);
    let residuals = y - x * &coef;
    let ssr = residuals.norm_squared();
    Ok(LeastSquares {
        coef,
        residuals,
        xtx_inv_diag: qr.xtx_inverse().diagonal(),
        ssr,
        ridge: false,
    })
}

/// Ridge solution with `ε = 1e-8 · trace(XᵀX) / k` added to the diagonal of
/// every column not listed in `unpenalized`.
pub fn ridge_least_squares(x: &DMatrix<f64>, y: &DVector<f64>, unpenalized: &[usize]) -> LeastSquares {
    let k = x.ncols();
    let mut xtx = x.transpose() * x;
    let eps = 1e-8 * xtx.trace() / k as f64;
    for j in 0..k {
        if !unpenalized.contains(&j) {
            xtx[(j, j)] += eps;
        }
    }
    let xty = x.transpose() * y;
    let inv = xtx
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| xtx.clone().pseudo_inverse(1e-14).ok())
        .unwrap_or_else(|| DMatrix::zeros(k, k));
    let coef = &inv * xty;
    let residuals = y - x * &coef;
    let ssr = residuals.norm_squared();
    LeastSquares { coef, residuals, xtx_inv_diag: inv.diagonal(), ssr, ridge: true }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let fit = qr_least_squares(&x, &y).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-12);
        assert!((fit.coef[1] - 2.0).abs() < 1e-12);
        assert!(fit.ssr < 1e-20);
    }

    #[test]
    fn detects_collinear_columns() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(qr_least_squares(&x, &y).unwrap_err(), vec![1, 2]);
    }

    #[test]
    fn ridge_leaves_intercept_unpenalized() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 6.0]);
        let fit = ridge_least_squares(&x, &y, &[0]);
        assert!((fit.coef[0] - 3.0).abs() < 1e-12);
        assert_eq!(fit.coef[1], 0.0);
    }
}

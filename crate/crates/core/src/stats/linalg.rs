//! Matrix-normal densities with Kronecker covariance and inverse-Wishart draws.
//!
//! A matrix-normal `X ~ MN(μ, A, Σ)` (rows × columns) is the Gaussian whose row-major
//! vectorisation has covariance `A ⊗ Σ`, i.e. `Cov(X_ab, X_cd) = A_ac Σ_bd`.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use super::dist::{chi_squared, std_normal};
use super::rng::RngStream;
use crate::error::{Error, Result};
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub type Chol = Cholesky<f64, Dyn>;

/// Cholesky factor of a symmetric positive definite matrix.
pub fn spd_cholesky(m: &DMatrix<f64>, what: &str) -> Result<Chol> {
    if !m.is_square() {
        return Err(Error::NotSpd(format!("{what} is {}x{}", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(Error::NotSpd(format!("{what} is not symmetric")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSpd(format!("{what} has non-finite entries")));
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotSpd(format!("{what}: Cholesky failed")))
}

pub fn chol_log_det(c: &Chol) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixNormalParams {
    pub mean: DMatrix<f64>,
    pub row_cov: DMatrix<f64>,
    pub col_cov: DMatrix<f64>,
}

impl MatrixNormalParams {
    pub fn new(mean: DMatrix<f64>, row_cov: DMatrix<f64>, col_cov: DMatrix<f64>) -> Result<Self> {
        let p = Self {
            mean,
            row_cov,
            col_cov,
        };
        p.check_dims()?;
        spd_cholesky(&p.row_cov, "row covariance")?;
        spd_cholesky(&p.col_cov, "column covariance")?;
        Ok(p)
    }

    fn check_dims(&self) -> Result<()> {
        if self.row_cov.nrows() != self.mean.nrows() || self.col_cov.nrows() != self.mean.ncols() {
            return Err(Error::InvalidParameter(format!(
                "matrix-normal dimensions: mean {}x{}, row cov {}x{}, column cov {}x{}",
                self.mean.nrows(),
                self.mean.ncols(),
                self.row_cov.nrows(),
                self.row_cov.ncols(),
                self.col_cov.nrows(),
                self.col_cov.ncols()
            )));
        }
        Ok(())
    }
}

/// Pre-factorised matrix-normal density for repeated evaluation.
pub struct MatrixNormalEval {
    mean: DMatrix<f64>,
    row: Chol,
    col: Chol,
    constant: f64,
}

impl MatrixNormalEval {
    pub fn new(params: &MatrixNormalParams) -> Result<Self> {
        params.check_dims()?;
        let row = spd_cholesky(&params.row_cov, "row covariance")?;
        let col = spd_cholesky(&params.col_cov, "column covariance")?;
        let (j, c) = (params.mean.nrows() as f64, params.mean.ncols() as f64);
        let constant =
            -0.5 * j * c * LN_2PI - 0.5 * c * chol_log_det(&row) - 0.5 * j * chol_log_det(&col);
        Ok(Self {
            mean: params.mean.clone(),
            row,
            col,
            constant,
        })
    }

    pub fn logpdf(&self, x: &DMatrix<f64>) -> Result<f64> {
        if x.shape() != self.mean.shape() {
            return Err(Error::InvalidParameter(format!(
                "matrix-normal argument is {}x{}, expected {}x{}",
                x.nrows(),
                x.ncols(),
                self.mean.nrows(),
                self.mean.ncols()
            )));
        }
        let r = x - &self.mean;
        // tr(Σ⁻¹ Rᵀ A⁻¹ R) = Σ_ab (A⁻¹R)_ab (RΣ⁻¹)_ab
        let left = self.row.solve(&r);
        let right = self.col.solve(&r.transpose()).transpose();
        Ok(self.constant - 0.5 * left.component_mul(&right).sum())
    }
}

pub fn matrix_normal_logpdf(x: &DMatrix<f64>, params: &MatrixNormalParams) -> Result<f64> {
    MatrixNormalEval::new(params)?.logpdf(x)
}

pub fn sample_matrix_normal(params: &MatrixNormalParams, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    params.check_dims()?;
    let la = spd_cholesky(&params.row_cov, "row covariance")?.l();
    let ls = spd_cholesky(&params.col_cov, "column covariance")?.l();
    let z = DMatrix::from_fn(params.mean.nrows(), params.mean.ncols(), |_, _| std_normal(rng));
    Ok(&params.mean + la * z * ls.transpose())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseWishartParams {
    pub df: f64,
    pub scale: DMatrix<f64>,
}

impl InverseWishartParams {
    pub fn new(df: f64, scale: DMatrix<f64>) -> Result<Self> {
        let p = Self { df, scale };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim() as f64;
        if !(self.df > p - 1.0) || !self.df.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "inverse-Wishart degrees of freedom {} must exceed dimension - 1 = {}",
                self.df,
                p - 1.0
            )));
        }
        spd_cholesky(&self.scale, "inverse-Wishart scale")?;
        Ok(())
    }

    /// scale / (df − dim − 1), defined for df > dim + 1.
    pub fn mean(&self) -> Option<DMatrix<f64>> {
        let d = self.df - self.dim() as f64 - 1.0;
        (d > 0.0).then(|| &self.scale / d)
    }
}

fn ln_multigamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (1..=p).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

pub fn inverse_wishart_ln_pdf(x: &DMatrix<f64>, params: &InverseWishartParams) -> Result<f64> {
    let p = params.dim();
    let nu = params.df;
    let cx = spd_cholesky(x, "inverse-Wishart argument")?;
    let cs = spd_cholesky(&params.scale, "inverse-Wishart scale")?;
    let tr = cx.solve(&params.scale).trace();
    Ok(0.5 * nu * chol_log_det(&cs)
        - 0.5 * nu * p as f64 * std::f64::consts::LN_2
        - ln_multigamma(p, 0.5 * nu)
        - 0.5 * (nu + p as f64 + 1.0) * chol_log_det(&cx)
        - 0.5 * tr)
}

/// Inverse-Wishart draw: a Bartlett-decomposed Wishart(df, scale⁻¹) draw, inverted.
pub fn sample_inverse_wishart(params: &InverseWishartParams, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    params.validate()?;
    let p = params.dim();
    let scale_inv = spd_cholesky(&params.scale, "inverse-Wishart scale")?.inverse();
    let mut scale_inv = scale_inv;
    symmetrize(&mut scale_inv);
    let l = spd_cholesky(&scale_inv, "inverse scale")?.l();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        a[(i, i)] = chi_squared(params.df - i as f64, rng).sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    // W = (LA)(LA)ᵀ, so W⁻¹ = (LA)⁻ᵀ(LA)⁻¹
    let b = l * a;
    let b_inv = b
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::NotSpd("singular Bartlett factor".into()))?;
    let mut x = b_inv.transpose() * b_inv;
    symmetrize(&mut x);
    spd_cholesky(&x, "inverse-Wishart draw")?;
    Ok(x)
}

/// Full conditional of the row covariance A given replicated residual matrices R_t
/// (each rows × cols), the column covariance Σ and an IW(df, A₀) prior.
pub fn row_cov_conditional(
    prior: &InverseWishartParams,
    residuals: &[DMatrix<f64>],
    col_cov: &DMatrix<f64>,
) -> Result<InverseWishartParams> {
    let cs = spd_cholesky(col_cov, "column covariance")?;
    let mut scale = prior.scale.clone();
    let mut extra = 0.0;
    for r in residuals {
        scale += r * cs.solve(&r.transpose());
        extra += r.ncols() as f64;
    }
    symmetrize(&mut scale);
    InverseWishartParams::new(prior.df + extra, scale)
}

/// Full conditional of the column covariance Σ given residuals, A and an IW(df, Σ₀) prior.
pub fn col_cov_conditional(
    prior: &InverseWishartParams,
    residuals: &[DMatrix<f64>],
    row_cov: &DMatrix<f64>,
) -> Result<InverseWishartParams> {
    let ca = spd_cholesky(row_cov, "row covariance")?;
    let mut scale = prior.scale.clone();
    let mut extra = 0.0;
    for r in residuals {
        scale += r.transpose() * ca.solve(r);
        extra += r.nrows() as f64;
    }
    symmetrize(&mut scale);
    InverseWishartParams::new(prior.df + extra, scale)
}

pub fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

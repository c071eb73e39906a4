//! Reference estimators: pooled OLS and two-stage least squares with the
//! environment indicator as instrument, plus the large-sample prediction
//! intervals used in the coverage comparisons.

use nalgebra::{DMatrix, DVector};

use crate::data::TrainingData;
use crate::error::{Error, Result};
use crate::stats::{normal_quantile, two_sided_p};

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Coefficients, intercept first when present.
    pub coefficients: DVector<f64>,
    pub intercept: bool,
    /// Unbiased residual variance `RSS / (n - k)`.
    pub residual_variance: f64,
    pub standard_errors: DVector<f64>,
    /// Two-sided normal-approximation p-values.
    pub p_values: DVector<f64>,
    pub n: usize,
}

impl OlsFit {
    pub fn predict(&self, x0: &DMatrix<f64>) -> Result<DVector<f64>> {
        predict_linear(&self.coefficients, self.intercept, x0)
    }

    /// P-values for the covariate slopes only (intercept excluded).
    pub fn slope_p_values(&self) -> Vec<f64> {
        let off = usize::from(self.intercept);
        self.p_values.iter().skip(off).copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct IvFit {
    /// Coefficients, intercept first when present.
    pub coefficients: DVector<f64>,
    pub intercept: bool,
    /// Residual variance of `y - x b` with the actual covariates.
    pub residual_variance: f64,
    pub n: usize,
}

impl IvFit {
    pub fn predict(&self, x0: &DMatrix<f64>) -> Result<DVector<f64>> {
        predict_linear(&self.coefficients, self.intercept, x0)
    }
}

fn predict_linear(coef: &DVector<f64>, intercept: bool, x0: &DMatrix<f64>) -> Result<DVector<f64>> {
    let off = usize::from(intercept);
    if x0.ncols() + off != coef.len() {
        return Err(Error::Contract(format!(
            "prediction needs {} covariates, got {}",
            coef.len() - off,
            x0.ncols()
        )));
    }
    let mut out = DVector::from_element(x0.nrows(), if intercept { coef[0] } else { 0.0 });
    for i in 0..x0.nrows() {
        for j in 0..x0.ncols() {
            out[i] += coef[off + j] * x0[(i, j)];
        }
    }
    Ok(out)
}

/// Pools all environments (in env-id order) into one design matrix.
fn pooled_design(data: &TrainingData, intercept: bool) -> (DMatrix<f64>, DVector<f64>) {
    let k = data.p + usize::from(intercept);
    let mut x = DMatrix::zeros(data.m, k);
    let mut y = DVector::zeros(data.m);
    let mut row = 0;
    for &i in &TrainingData::id_sorted_indices(&data.environments) {
        let env = &data.environments[i];
        for r in 0..env.n() {
            if intercept {
                x[(row, 0)] = 1.0;
            }
            for j in 0..data.p {
                x[(row, usize::from(intercept) + j)] = env.x[(r, j)];
            }
            y[row] = env.y[r];
            row += 1;
        }
    }
    (x, y)
}

fn solve_normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let gram = x.transpose() * x;
    let rhs = x.transpose() * y;
    let chol = match gram.clone().cholesky() {
        Some(c) => c,
        None => {
            let k = gram.nrows();
            let trace: f64 = gram.diagonal().sum();
            let ridge = if trace > 0.0 { 1e-8 * trace / k as f64 } else { 1e-8 };
            let mut g = gram;
            for j in 0..k {
                g[(j, j)] += ridge;
            }
            log::warn!("rank-deficient design; ridge {ridge:.3e} applied");
            g.cholesky().ok_or_else(|| {
                Error::Numerical("design rank-deficient beyond ridge rescue".into())
            })?
        }
    };
    let coef = chol.solve(&rhs);
    Ok((coef, chol.inverse()))
}

/// Pooled ordinary least squares with classical standard errors and
/// two-sided normal p-values.
pub fn ols_fit(data: &TrainingData, intercept: bool) -> Result<OlsFit> {
    let (x, y) = pooled_design(data, intercept);
    let k = x.ncols();
    let n = x.nrows();
    if n <= k {
        return Err(Error::Contract(format!(
            "OLS needs more than {k} observations, got {n}"
        )));
    }
    let (coef, gram_inv) = solve_normal_equations(&x, &y)?;
    let resid = &y - &x * &coef;
    let rss = resid.norm_squared();
    let residual_variance = (rss / (n - k) as f64).max(0.0);
    let standard_errors = gram_inv
        .diagonal()
        .map(|v| (v * residual_variance).max(0.0).sqrt());
    let p_values = DVector::from_fn(k, |j, _| {
        let se = standard_errors[j];
        if se > 0.0 {
            two_sided_p(coef[j] / se)
        } else if coef[j] == 0.0 {
            1.0
        } else {
            0.0
        }
    });
    Ok(OlsFit {
        coefficients: coef,
        intercept,
        residual_variance,
        standard_errors,
        p_values,
        n,
    })
}

/// Large-sample prediction intervals `y_hat +- z_{1-alpha/2} * sigma_hat`
/// with `sigma_hat^2` the residual variance. Parameter uncertainty is
/// deliberately ignored, consistent with the large-sample normal
/// approximation.
pub fn ols_predict_interval(
    fit: &OlsFit,
    x0: &DMatrix<f64>,
    alpha: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha {alpha} outside (0,1)")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let half = z * fit.residual_variance.sqrt();
    let preds = fit.predict(x0)?;
    Ok(preds.iter().map(|&m| (m - half, m + half)).collect())
}

/// Generic two-stage least squares: projects the design onto the column
/// space of the instruments, then solves the second stage.
pub fn tsls(x: &DMatrix<f64>, z: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = x.nrows();
    if z.nrows() != n || y.len() != n {
        return Err(Error::Contract("tsls dimension mismatch".into()));
    }
    if z.ncols() < x.ncols() {
        return Err(Error::Contract(format!(
            "instrument insufficient: {} instrument column(s) for {} regressor(s)",
            z.ncols(),
            x.ncols()
        )));
    }
    let ztz = z.transpose() * z;
    let chol = ztz
        .cholesky()
        .ok_or_else(|| Error::Numerical("instrument insufficient: first stage rank-deficient".into()))?;
    // X_hat = Z (Z'Z)^{-1} Z' X
    let ztx = z.transpose() * x;
    let mut proj = DMatrix::zeros(z.ncols(), x.ncols());
    for c in 0..x.ncols() {
        proj.set_column(c, &chol.solve(&ztx.column(c).into_owned()));
    }
    let x_hat = z * proj;
    let gram = x_hat.transpose() * &x_hat;
    let gchol = gram.cholesky().ok_or_else(|| {
        Error::Numerical("instrument insufficient: second stage rank-deficient".into())
    })?;
    Ok(gchol.solve(&(x_hat.transpose() * y)))
}

/// Two-stage least squares with the environment indicator as instrument.
/// A single environment is allowed only in the no-intercept single-covariate
/// case, where the estimator reduces to the ratio of means.
pub fn iv_fit(data: &TrainingData, intercept: bool) -> Result<IvFit> {
    let e = data.e_count();
    if e == 1 {
        if intercept || data.p > 1 {
            return Err(Error::Contract(
                "instrument insufficient: one environment identifies only a \
                 single no-intercept coefficient"
                    .into(),
            ));
        }
        let env = &data.environments[0];
        let xbar = env.mu_hat[0];
        let ybar = env.y.sum() / env.n() as f64;
        if xbar == 0.0 || xbar.abs() < 1e-12 * (1.0 + env.x.abs().max()) {
            return Err(Error::Numerical(
                "ratio estimator undefined: covariate mean is zero".into(),
            ));
        }
        let b = ybar / xbar;
        let coefficients = DVector::from_element(1, b);
        let resid_var = {
            let mut rss = 0.0;
            for i in 0..env.n() {
                let r = env.y[i] - b * env.x[(i, 0)];
                rss += r * r;
            }
            rss / (env.n() as f64 - 1.0)
        };
        return Ok(IvFit {
            coefficients,
            intercept: false,
            residual_variance: resid_var,
            n: env.n(),
        });
    }

    let (x, y) = pooled_design(data, intercept);
    // One-hot environment dummies; they span the constant column.
    let mut z = DMatrix::zeros(data.m, e);
    let mut row = 0;
    for (pos, &i) in TrainingData::id_sorted_indices(&data.environments)
        .iter()
        .enumerate()
    {
        for _ in 0..data.environments[i].n() {
            z[(row, pos)] = 1.0;
            row += 1;
        }
    }
    let coef = tsls(&x, &z, &y)?;
    let resid = &y - &x * &coef;
    let k = x.ncols();
    let residual_variance = resid.norm_squared() / (data.m - k) as f64;
    Ok(IvFit {
        coefficients: coef,
        intercept,
        residual_variance,
        n: data.m,
    })
}

/// Prediction intervals for an IV fit, same construction as
/// [`ols_predict_interval`].
pub fn iv_predict_interval(fit: &IvFit, x0: &DMatrix<f64>, alpha: f64) -> Result<Vec<(f64, f64)>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha {alpha} outside (0,1)")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let half = z * fit.residual_variance.sqrt();
    let preds = fit.predict(x0)?;
    Ok(preds.iter().map(|&m| (m - half, m + half)).collect())
}

//! Domain types and dataset ingestion.
//!
//! Training data is a collection of labeled environments, each carrying its
//! plug-in first and second moments of the covariates. The moments feed both
//! the sampler (the covariate likelihood and the precision-weighted
//! correction regressor) and the baselines. Test data is unlabeled; its
//! plug-in moments stand in for the population moments of the shifted
//! domain.
//!
//! CSV formats:
//! - training: header `env,x1,...,xp,y`, UTF-8, `.` decimal separator;
//! - test: header `x1,...,xp` with an optional trailing `y` column that is
//!   ignored by fitting and only used for coverage evaluation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition-number threshold above which a plug-in covariance is ridged
/// before inversion.
pub const RIDGE_CONDITION_LIMIT: f64 = 1e12;

/// Relative ridge added to an ill-conditioned covariance: `1e-8 * tr/p * I`.
pub const RIDGE_SCALE: f64 = 1e-8;

/// One training environment: raw observations plus plug-in moments.
#[derive(Debug, Clone)]
pub struct EnvironmentData {
    /// Small integer label; unique within a `TrainingData`.
    pub env_id: usize,
    /// `n_e x p` covariates (raw, no intercept column).
    pub x: DMatrix<f64>,
    /// Responses, length `n_e`.
    pub y: DVector<f64>,
    /// Column means of `x`.
    pub mu_hat: DVector<f64>,
    /// Plug-in (1/n) covariance of `x`, ridged if ill-conditioned.
    pub sigma_hat: DMatrix<f64>,
    /// True when the ridge rule fired at construction.
    pub sigma_ridged: bool,
}

impl EnvironmentData {
    /// Builds an environment from raw observations, computing the plug-in
    /// moments.
    pub fn new(env_id: usize, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let sigma = plugin_covariance(&x)?;
        Self::with_sigma_hat(env_id, x, y, sigma)
    }

    /// Builds an environment with a caller-supplied covariance in place of
    /// the plug-in estimate, for the case where the covariate covariance is
    /// known rather than estimated. The mean is still the empirical one.
    pub fn with_sigma_hat(
        env_id: usize,
        x: DMatrix<f64>,
        y: DVector<f64>,
        sigma_hat: DMatrix<f64>,
    ) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if n < 2 {
            return Err(Error::Contract(format!(
                "environment {env_id} has {n} observation{}; at least 2 required",
                if n == 1 { "" } else { "s" }
            )));
        }
        if y.len() != n {
            return Err(Error::Contract(format!(
                "environment {env_id}: {} responses for {n} covariate rows",
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "environment {env_id} contains non-finite values"
            )));
        }
        if sigma_hat.nrows() != p || sigma_hat.ncols() != p {
            return Err(Error::Contract(format!(
                "environment {env_id}: covariance is {}x{}, expected {p}x{p}",
                sigma_hat.nrows(),
                sigma_hat.ncols()
            )));
        }
        let asym = (&sigma_hat - sigma_hat.transpose()).abs().max();
        if asym > 1e-10 * (1.0 + sigma_hat.abs().max()) {
            return Err(Error::Contract(format!(
                "environment {env_id}: covariance not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let eigs = sigma_hat.clone().symmetric_eigenvalues();
        let min_eig = eigs.min();
        let max_eig = eigs.max();
        if min_eig < -1e-10 {
            return Err(Error::Contract(format!(
                "environment {env_id}: covariance has eigenvalue {min_eig:.3e} < -1e-10"
            )));
        }
        let (sigma_hat, sigma_ridged) = apply_ridge(sigma_hat, min_eig, max_eig);
        if sigma_ridged {
            log::warn!(
                "environment {env_id}: near-singular covariate covariance; ridge applied"
            );
        }

        let mut mu_hat = DVector::zeros(p);
        for j in 0..p {
            mu_hat[j] = x.column(j).sum() / n as f64;
        }

        Ok(Self {
            env_id,
            x,
            y,
            mu_hat,
            sigma_hat,
            sigma_ridged,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Ridge rule for near-singular covariances: when the condition number
/// exceeds [`RIDGE_CONDITION_LIMIT`], add `1e-8 * tr/p` to the diagonal
/// (falling back to `1e-8` when the trace is zero, i.e. constant columns).
fn apply_ridge(mut sigma: DMatrix<f64>, min_eig: f64, max_eig: f64) -> (DMatrix<f64>, bool) {
    let p = sigma.nrows();
    let cond = if min_eig <= 0.0 {
        f64::INFINITY
    } else {
        max_eig / min_eig
    };
    if cond <= RIDGE_CONDITION_LIMIT {
        return (sigma, false);
    }
    let trace: f64 = sigma.diagonal().sum();
    let ridge = if trace > 0.0 {
        RIDGE_SCALE * trace / p as f64
    } else {
        RIDGE_SCALE
    };
    for j in 0..p {
        sigma[(j, j)] += ridge;
    }
    (sigma, true)
}

/// Labeled observations grouped by environment.
#[derive(Debug, Clone)]
pub struct TrainingData {
    /// Environments in presentation order (the order draws index them by).
    pub environments: Vec<EnvironmentData>,
    /// Original environment labels, aligned with `environments`.
    pub env_labels: Vec<String>,
    /// Covariate dimension.
    pub p: usize,
    /// Whether the model fitted to this data carries an intercept.
    pub intercept: bool,
    /// Total observation count.
    pub m: usize,
    /// Unweighted mean of the per-environment covariate means.
    pub grand_mu_hat: DVector<f64>,
}

impl TrainingData {
    pub fn new(
        environments: Vec<EnvironmentData>,
        env_labels: Vec<String>,
        intercept: bool,
    ) -> Result<Self> {
        if environments.is_empty() {
            return Err(Error::Contract("no environments".into()));
        }
        if env_labels.len() != environments.len() {
            return Err(Error::Contract(format!(
                "{} labels for {} environments",
                env_labels.len(),
                environments.len()
            )));
        }
        let p = environments[0].p();
        for env in &environments {
            if env.p() != p {
                return Err(Error::Contract(format!(
                    "environment {} has {} covariates, expected {p}",
                    env.env_id,
                    env.p()
                )));
            }
        }
        let mut ids: Vec<usize> = environments.iter().map(|e| e.env_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != environments.len() {
            return Err(Error::Contract("duplicate environment ids".into()));
        }
        let m = environments.iter().map(|e| e.n()).sum();

        // Reductions over environments run in env_id order so that the
        // result is bit-identical under permutations of the list.
        let mut grand_mu_hat = DVector::zeros(p);
        for idx in Self::id_sorted_indices(&environments) {
            grand_mu_hat += &environments[idx].mu_hat;
        }
        grand_mu_hat /= environments.len() as f64;

        let data = Self {
            environments,
            env_labels,
            p,
            intercept,
            m,
            grand_mu_hat,
        };
        if let Some(msg) = data.identifiability_warning() {
            log::warn!("{msg}");
        }
        Ok(data)
    }

    /// Convenience constructor for generated data: labels are the decimal
    /// env ids.
    pub fn from_environments(environments: Vec<EnvironmentData>, intercept: bool) -> Result<Self> {
        let labels = environments.iter().map(|e| e.env_id.to_string()).collect();
        Self::new(environments, labels, intercept)
    }

    pub fn e_count(&self) -> usize {
        self.environments.len()
    }

    /// Indices of `environments` sorted by `env_id`.
    pub(crate) fn id_sorted_indices(environments: &[EnvironmentData]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..environments.len()).collect();
        idx.sort_by_key(|&i| environments[i].env_id);
        idx
    }

    /// With an intercept the coefficient vector has `p+1` entries and
    /// identification needs at least `p+1` environments. Returns a warning
    /// message, not an error: weakly identified inputs are legal.
    pub fn identifiability_warning(&self) -> Option<String> {
        let needed = self.p + usize::from(self.intercept);
        if self.e_count() < needed {
            Some(format!(
                "{} environment(s) for {} coefficient(s); identification is weak \
                 (the prior will dominate poorly separated directions)",
                self.e_count(),
                needed
            ))
        } else {
            None
        }
    }
}

/// Unlabeled test-domain covariates with their plug-in moments.
#[derive(Debug, Clone)]
pub struct TestCovariates {
    /// `n0 x p` covariates.
    pub x0: DMatrix<f64>,
    /// Column means.
    pub mu0_hat: DVector<f64>,
    /// Plug-in covariance, ridged if ill-conditioned.
    pub sigma0_hat: DMatrix<f64>,
    pub sigma_ridged: bool,
}

impl TestCovariates {
    pub fn new(x0: DMatrix<f64>) -> Result<Self> {
        let n0 = x0.nrows();
        let p = x0.ncols();
        if n0 < 2 {
            return Err(Error::Contract(format!(
                "test set has {n0} row(s); at least 2 required"
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("test covariates contain non-finite values".into()));
        }
        let sigma = plugin_covariance(&x0)?;
        let eigs = sigma.clone().symmetric_eigenvalues();
        let (sigma0_hat, sigma_ridged) = apply_ridge(sigma, eigs.min(), eigs.max());
        let mut mu0_hat = DVector::zeros(p);
        for j in 0..p {
            mu0_hat[j] = x0.column(j).sum() / n0 as f64;
        }
        Ok(Self {
            x0,
            mu0_hat,
            sigma0_hat,
            sigma_ridged,
        })
    }

    pub fn n0(&self) -> usize {
        self.x0.nrows()
    }

    pub fn p(&self) -> usize {
        self.x0.ncols()
    }
}

/// Plug-in (1/n) covariance of the rows of `x`.
pub fn plugin_covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let p = x.ncols();
    if n < 2 {
        return Err(Error::Contract(
            "plug-in covariance needs at least 2 rows".into(),
        ));
    }
    let mut mu = DVector::zeros(p);
    for j in 0..p {
        mu[j] = x.column(j).sum() / n as f64;
    }
    let mut sigma = DMatrix::zeros(p, p);
    for i in 0..n {
        let d = x.row(i).transpose() - &mu;
        sigma.syger(1.0 / n as f64, &d, &d, 1.0);
    }
    // syger fills the lower triangle; mirror it.
    for r in 0..p {
        for c in (r + 1)..p {
            sigma[(r, c)] = sigma[(c, r)];
        }
    }
    Ok(sigma)
}

/// One row of the stacked regression design:
/// `[1 (if intercept), x, sigma_hat^{-1} (x - mu_e)]`.
///
/// The correction block is the precision-weighted centered covariate, so the
/// coefficient attached to it is the invariant noise-covariate covariance
/// that transfers across domains. The block has conditional expectation zero
/// within an environment; it carries no intercept coordinate.
pub fn design_row(
    x: &DVector<f64>,
    env: usize,
    draw_mu: &[DVector<f64>],
    sigma_hat: &DMatrix<f64>,
    intercept: bool,
) -> Result<DVector<f64>> {
    let p = x.len();
    if env >= draw_mu.len() {
        return Err(Error::Contract(format!(
            "environment index {env} out of range ({} environments)",
            draw_mu.len()
        )));
    }
    let mu = &draw_mu[env];
    if mu.len() != p || sigma_hat.nrows() != p || sigma_hat.ncols() != p {
        return Err(Error::Contract(format!(
            "design_row dimension mismatch: x has {p}, mu has {}, sigma is {}x{}",
            mu.len(),
            sigma_hat.nrows(),
            sigma_hat.ncols()
        )));
    }
    let centered = x - mu;
    let corr = solve_spd(sigma_hat, &centered)?;
    let off = usize::from(intercept);
    let mut row = DVector::zeros(off + 2 * p);
    if intercept {
        row[0] = 1.0;
    }
    row.rows_mut(off, p).copy_from(x);
    row.rows_mut(off + p, p).copy_from(&corr);
    Ok(row)
}

/// Solves `a v = b` for symmetric positive definite `a`, applying the ridge
/// rule once if the factorization fails.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    let p = a.nrows();
    let trace: f64 = a.diagonal().sum();
    let ridge = if trace > 0.0 {
        RIDGE_SCALE * trace / p as f64
    } else {
        RIDGE_SCALE
    };
    let mut a2 = a.clone();
    for j in 0..p {
        a2[(j, j)] += ridge;
    }
    log::warn!("singular matrix in solve; ridge applied");
    a2.cholesky()
        .map(|c| c.solve(b))
        .ok_or_else(|| Error::Numerical("matrix singular even after ridge".into()))
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Loads a training CSV (`env,x1,...,xp,y`). Environment labels are mapped
/// to dense ids in first-appearance order; row order within an environment
/// is preserved.
pub fn load_training_csv<P: AsRef<Path>>(path: P, intercept: bool) -> Result<TrainingData> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::Parse(format!("cannot open {}: {e}", path.as_ref().display()))
    })?;
    read_training_csv(file, intercept)
}

pub fn read_training_csv<R: Read>(reader: R, intercept: bool) -> Result<TrainingData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("cannot read header: {e}")))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 {
        return Err(Error::Parse(format!(
            "expected header env,x1,...,xp,y; found {} column(s)",
            cols.len()
        )));
    }
    if cols[0] != "env" {
        return Err(Error::Parse(format!(
            "missing required column 'env' (first column is '{}')",
            cols[0]
        )));
    }
    if cols[cols.len() - 1] != "y" {
        return Err(Error::Parse(format!(
            "missing required column 'y' (last column is '{}')",
            cols[cols.len() - 1]
        )));
    }
    let p = cols.len() - 2;
    for (j, name) in cols[1..=p].iter().enumerate() {
        let expected = format!("x{}", j + 1);
        if *name != expected {
            return Err(Error::Parse(format!(
                "expected column '{}' at position {}, found '{}'",
                expected,
                j + 1,
                name
            )));
        }
    }

    // Group rows by label in first-appearance order.
    let mut labels: Vec<String> = Vec::new();
    let mut groups: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (ridx, record) in rdr.records().enumerate() {
        let rownum = ridx + 2; // 1-based, counting the header line
        let record = record.map_err(|e| Error::Parse(format!("row {rownum}: {e}")))?;
        if record.len() != cols.len() {
            return Err(Error::Parse(format!(
                "row {rownum}: {} fields, expected {}",
                record.len(),
                cols.len()
            )));
        }
        let label = record[0].to_string();
        let gidx = match labels.iter().position(|l| *l == label) {
            Some(i) => i,
            None => {
                labels.push(label);
                groups.push((Vec::new(), Vec::new()));
                labels.len() - 1
            }
        };
        for j in 0..p {
            let v = parse_cell(&record[j + 1], rownum, cols[j + 1])?;
            groups[gidx].0.push(v);
        }
        let y = parse_cell(&record[cols.len() - 1], rownum, "y")?;
        groups[gidx].1.push(y);
    }
    if groups.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }

    let mut environments = Vec::with_capacity(groups.len());
    for (env_id, ((xflat, yvec), label)) in groups.into_iter().zip(labels.iter()).enumerate() {
        let n = yvec.len();
        if n < 2 {
            return Err(Error::Parse(format!(
                "environment {label} has {n} observation{}; at least 2 required",
                if n == 1 { "" } else { "s" }
            )));
        }
        let x = DMatrix::from_row_slice(n, p, &xflat);
        let y = DVector::from_vec(yvec);
        environments.push(EnvironmentData::new(env_id, x, y)?);
    }
    TrainingData::new(environments, labels, intercept)
}

fn parse_cell(cell: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| {
        Error::Parse(format!("row {row}, column {col}: invalid number \"{cell}\""))
    })?;
    if !v.is_finite() {
        return Err(Error::Parse(format!(
            "row {row}, column {col}: non-finite value \"{cell}\""
        )));
    }
    Ok(v)
}

/// Writes training data back out, grouped by environment in presentation
/// order. Floats use the shortest representation that round-trips exactly,
/// so write -> read -> write is byte-identical.
pub fn write_training_csv<W: Write>(data: &TrainingData, mut w: W) -> Result<()> {
    write!(w, "env")?;
    for j in 1..=data.p {
        write!(w, ",x{j}")?;
    }
    writeln!(w, ",y")?;
    for (env, label) in data.environments.iter().zip(&data.env_labels) {
        for i in 0..env.n() {
            write!(w, "{label}")?;
            for j in 0..data.p {
                write!(w, ",{}", env.x[(i, j)])?;
            }
            writeln!(w, ",{}", env.y[i])?;
        }
    }
    Ok(())
}

pub fn save_training_csv<P: AsRef<Path>>(data: &TrainingData, path: P) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_training_csv(data, std::io::BufWriter::new(f))
}

/// Loads a test CSV (`x1,...,xp` with optional trailing `y`). Returns the
/// covariates and, when present, the response column.
pub fn load_test_csv<P: AsRef<Path>>(path: P) -> Result<(TestCovariates, Option<DVector<f64>>)> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::Parse(format!("cannot open {}: {e}", path.as_ref().display()))
    })?;
    read_test_csv(file)
}

pub fn read_test_csv<R: Read>(reader: R) -> Result<(TestCovariates, Option<DVector<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("cannot read header: {e}")))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_y = cols.last() == Some(&"y");
    let p = cols.len() - usize::from(has_y);
    if p == 0 {
        return Err(Error::Parse("no covariate columns".into()));
    }
    for (j, name) in cols[..p].iter().enumerate() {
        let expected = format!("x{}", j + 1);
        if *name != expected {
            return Err(Error::Parse(format!(
                "expected column '{}' at position {}, found '{}'",
                expected, j, name
            )));
        }
    }
    let mut xflat = Vec::new();
    let mut ys = Vec::new();
    let mut n = 0usize;
    for (ridx, record) in rdr.records().enumerate() {
        let rownum = ridx + 2;
        let record = record.map_err(|e| Error::Parse(format!("row {rownum}: {e}")))?;
        if record.len() != cols.len() {
            return Err(Error::Parse(format!(
                "row {rownum}: {} fields, expected {}",
                record.len(),
                cols.len()
            )));
        }
        for j in 0..p {
            xflat.push(parse_cell(&record[j], rownum, cols[j])?);
        }
        if has_y {
            ys.push(parse_cell(&record[p], rownum, "y")?);
        }
        n += 1;
    }
    let x0 = DMatrix::from_row_slice(n, p, &xflat);
    let test = TestCovariates::new(x0)?;
    Ok((test, has_y.then(|| DVector::from_vec(ys))))
}

/// Writes test covariates, optionally with a response column.
pub fn write_test_csv<W: Write>(
    x0: &DMatrix<f64>,
    y: Option<&DVector<f64>>,
    mut w: W,
) -> Result<()> {
    let p = x0.ncols();
    for j in 1..=p {
        if j > 1 {
            write!(w, ",")?;
        }
        write!(w, "x{j}")?;
    }
    if y.is_some() {
        write!(w, ",y")?;
    }
    writeln!(w)?;
    for i in 0..x0.nrows() {
        for j in 0..p {
            if j > 0 {
                write!(w, ",")?;
            }
            write!(w, "{}", x0[(i, j)])?;
        }
        if let Some(y) = y {
            write!(w, ",{}", y[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toy_env(env_id: usize, rows: &[(f64, f64)]) -> EnvironmentData {
        let x = DMatrix::from_row_slice(rows.len(), 1, &rows.iter().map(|r| r.0).collect::<Vec<_>>());
        let y = DVector::from_vec(rows.iter().map(|r| r.1).collect());
        EnvironmentData::new(env_id, x, y).unwrap()
    }

    #[test]
    fn rejects_environment_with_one_observation() {
        let csv = "env,x1,y\na,1.0,2.0\na,1.5,2.5\nb,3.0,4.0\n";
        let err = read_training_csv(csv.as_bytes(), false).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("environment b has 1 observation"),
            "unexpected message: {msg}"
        );
    }

    #[test]
    fn rejects_missing_and_misnamed_columns() {
        let err = read_training_csv("env,x1\na,1.0\n".as_bytes(), false).unwrap_err();
        assert!(err.to_string().contains("column"), "{err}");

        let err = read_training_csv("group,x1,y\na,1.0,2.0\n".as_bytes(), false).unwrap_err();
        assert!(err.to_string().contains("'env'"), "{err}");

        let err = read_training_csv("env,z1,y\na,1.0,2.0\n".as_bytes(), false).unwrap_err();
        assert!(err.to_string().contains("'x1'"), "{err}");
    }

    #[test]
    fn names_row_and_column_for_bad_cells() {
        let csv = "env,x1,y\na,1.0,2.0\na,oops,2.5\n";
        let err = read_training_csv(csv.as_bytes(), false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains("column x1"), "{msg}");
        assert!(msg.contains("oops"), "{msg}");
    }

    #[test]
    fn constant_column_loads_with_ridge_flag() {
        let csv = "env,x1,y\na,2.0,1.0\na,2.0,1.5\nb,2.0,0.5\nb,2.0,0.9\n";
        let data = read_training_csv(csv.as_bytes(), false).unwrap();
        assert_eq!(data.e_count(), 2);
        assert!(data.environments.iter().all(|e| e.sigma_ridged));
        assert!(data.environments[0].sigma_hat[(0, 0)] > 0.0);
    }

    #[test]
    fn first_appearance_order_is_deterministic() {
        let csv = "env,x1,y\nB,1.0,0.0\nA,2.0,0.0\nB,3.0,0.0\nA,4.0,0.0\n";
        let d1 = read_training_csv(csv.as_bytes(), false).unwrap();
        let d2 = read_training_csv(csv.as_bytes(), false).unwrap();
        assert_eq!(d1.env_labels, vec!["B", "A"]);
        assert_eq!(d1.env_labels, d2.env_labels);
        assert_eq!(d1.environments[0].env_id, 0);
        // Row order within environments preserved.
        assert_eq!(d1.environments[0].x[(0, 0)], 1.0);
        assert_eq!(d1.environments[0].x[(1, 0)], 3.0);
    }

    #[test]
    fn moments_match_column_means() {
        let env = toy_env(0, &[(1.0, 0.0), (2.0, 0.0), (4.0, 0.0)]);
        assert_abs_diff_eq!(env.mu_hat[0], 7.0 / 3.0, epsilon = 1e-12);
        // Plug-in variance uses 1/n.
        let mu = 7.0 / 3.0;
        let expected =
            ((1.0f64 - mu).powi(2) + (2.0 - mu).powi(2) + (4.0 - mu).powi(2)) / 3.0;
        assert_abs_diff_eq!(env.sigma_hat[(0, 0)], expected, epsilon = 1e-12);
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let envs = vec![
            toy_env(0, &[(1.0, 2.0), (0.125, -3.5e-7), (7.25e11, 0.1)]),
            toy_env(1, &[(-0.3333333333333333, 1e-300), (2.0, 3.0)]),
        ];
        let data = TrainingData::new(envs, vec!["first".into(), "second".into()], false).unwrap();
        let mut buf1 = Vec::new();
        write_training_csv(&data, &mut buf1).unwrap();
        let reread = read_training_csv(buf1.as_slice(), false).unwrap();
        let mut buf2 = Vec::new();
        write_training_csv(&reread, &mut buf2).unwrap();
        assert_eq!(buf1, buf2);
    }

    #[test]
    fn round_trip_preserves_moments() {
        let envs = vec![
            toy_env(0, &[(0.7, 0.11), (1.3, -2.0), (0.9, 0.55)]),
            toy_env(1, &[(5.5, 1.0), (6.5, 2.0)]),
        ];
        let data = TrainingData::from_environments(envs, true).unwrap();
        let mut buf = Vec::new();
        write_training_csv(&data, &mut buf).unwrap();
        let reread = read_training_csv(buf.as_slice(), true).unwrap();
        for (a, b) in data.environments.iter().zip(&reread.environments) {
            assert_abs_diff_eq!(a.mu_hat[0], b.mu_hat[0], epsilon = 1e-12);
            assert_abs_diff_eq!(a.sigma_hat[(0, 0)], b.sigma_hat[(0, 0)], epsilon = 1e-12);
        }
    }

    #[test]
    fn design_row_centering_and_scalar_case() {
        // x equal to the environment mean: the correction block vanishes.
        let mu = vec![DVector::from_vec(vec![1.5, -2.0])];
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let row = design_row(&x, 0, &mu, &sigma, true).unwrap();
        assert_eq!(row.len(), 1 + 2 + 2);
        assert_eq!(row[0], 1.0);
        assert_abs_diff_eq!(row[3], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(row[4], 0.0, epsilon = 1e-14);

        // Scalar arithmetic: 0.5 / 0.25 = 2.
        let mu = vec![DVector::from_vec(vec![1.0])];
        let sigma = DMatrix::from_element(1, 1, 0.25);
        let x = DVector::from_vec(vec![1.5]);
        let row = design_row(&x, 0, &mu, &sigma, false).unwrap();
        assert_eq!(row.len(), 2);
        assert_abs_diff_eq!(row[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn design_row_dimension_mismatch_is_contract_error() {
        let mu = vec![DVector::from_vec(vec![1.0, 2.0])];
        let sigma = DMatrix::identity(2, 2);
        let x = DVector::from_vec(vec![1.0]);
        assert!(matches!(
            design_row(&x, 0, &mu, &sigma, false),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn correction_block_has_zero_mean_at_empirical_means() {
        // Mean over rows of the correction block, evaluated at the empirical
        // means, is the zero vector.
        let mut rows = Vec::new();
        let mut state = 1u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for _ in 0..50 {
            rows.push((next() * 2.0 + 1.0, next()));
        }
        let env = toy_env(3, &rows);
        let mu = vec![env.mu_hat.clone()];
        let mut acc = DVector::zeros(1);
        for i in 0..env.n() {
            let x = env.x.row(i).transpose();
            let row = design_row(&x, 0, &mu, &env.sigma_hat, false).unwrap();
            acc[0] += row[1];
        }
        acc /= env.n() as f64;
        assert_abs_diff_eq!(acc[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn intercept_identifiability_warns_but_does_not_abort() {
        let envs = vec![toy_env(0, &[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])];
        let data = TrainingData::from_environments(envs, true).unwrap();
        assert!(data.identifiability_warning().is_some());
        let envs = vec![
            toy_env(0, &[(0.0, 0.0), (1.0, 1.0)]),
            toy_env(1, &[(2.0, 2.0), (3.0, 3.0)]),
        ];
        let data = TrainingData::from_environments(envs, true).unwrap();
        assert!(data.identifiability_warning().is_none());
    }

    proptest! {
        // sigma_hat * correction_block recovers (x - mu) to 1e-10.
        #[test]
        fn correction_block_solves_linear_system(
            xs in proptest::collection::vec(-5.0f64..5.0, 3),
            mus in proptest::collection::vec(-5.0f64..5.0, 3),
            diag in proptest::collection::vec(0.1f64..4.0, 3),
            offd in -0.05f64..0.05,
        ) {
            let p = 3;
            let mut sigma = DMatrix::from_element(p, p, offd);
            for j in 0..p { sigma[(j, j)] = diag[j]; }
            let x = DVector::from_vec(xs);
            let mu = vec![DVector::from_vec(mus)];
            let row = design_row(&x, 0, &mu, &sigma, false).unwrap();
            let corr = row.rows(p, p).into_owned();
            let recovered = &sigma * corr;
            let target = &x - &mu[0];
            for j in 0..p {
                prop_assert!((recovered[j] - target[j]).abs() < 1e-10);
            }
        }
    }
}

//! Posterior draws and their on-disk representations.
//!
//! Draws are grouped by chain; every chain keeps the same number of
//! post-warmup draws. Two dump formats are supported: a long-format CSV
//! (`chain,iter,param,value`, floats written with the shortest exact
//! representation) and a compact binary dump. Both embed the seed ledger so
//! post-processing can be re-derived exactly.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One posterior draw of all model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDraw {
    /// Coefficients on `[1 (if intercept), x]`; intercept first when present.
    pub beta: DVector<f64>,
    /// Correction coefficients (covariance scale), length `p`.
    pub k: DVector<f64>,
    /// Environment means, aligned with the training environments.
    pub mu: Vec<DVector<f64>>,
    /// Response noise variance.
    pub sigma_y2: f64,
    /// Global shrinkage scale (squared).
    pub tau2: f64,
    /// Half-Cauchy auxiliary.
    pub phi: f64,
    /// Per-coordinate scales of the environment-mean prior.
    pub mu_scales: DVector<f64>,
}

/// Seed ledger and shape information for a sampling run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SampleMeta {
    pub p: usize,
    pub intercept: bool,
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_kept: usize,
    pub base_seed: u64,
    pub chain_seeds: Vec<u64>,
    pub env_ids: Vec<usize>,
    /// Observation counts per environment, aligned with `env_ids`.
    #[serde(default)]
    pub env_ns: Vec<usize>,
    /// Flattened plug-in covariances of the training environments, aligned
    /// with `env_ids` (symmetric, so the storage order is immaterial). The
    /// sampled noise variance is conditional on these; the predictive
    /// reconstructs the marginal structural-noise variance from them.
    /// Empty when the samples were not produced by a fit.
    #[serde(default)]
    pub sigma_hats: Vec<Vec<f64>>,
    pub ridge_events: u64,
}

/// Ordered posterior draws across chains plus the seed ledger.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub chains: Vec<Vec<ParamDraw>>,
    pub meta: SampleMeta,
}

impl PosteriorSamples {
    pub fn new(chains: Vec<Vec<ParamDraw>>, meta: SampleMeta) -> Result<Self> {
        if chains.is_empty() {
            return Err(Error::Contract("no chains".into()));
        }
        let len = chains[0].len();
        if chains.iter().any(|c| c.len() != len) {
            return Err(Error::Contract("chains have unequal kept lengths".into()));
        }
        Ok(Self { chains, meta })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_kept(&self) -> usize {
        self.chains.first().map_or(0, |c| c.len())
    }

    /// Total kept draws across chains.
    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.n_kept()
    }

    pub fn p(&self) -> usize {
        self.meta.p
    }

    pub fn intercept(&self) -> bool {
        self.meta.intercept
    }

    /// Draws in chain-major order.
    pub fn iter_draws(&self) -> impl Iterator<Item = &ParamDraw> {
        self.chains.iter().flatten()
    }

    /// Scalar parameter names, defining the flat layout used by dumps and
    /// diagnostics. `mu` entries are keyed by environment id.
    pub fn scalar_names(&self) -> Vec<String> {
        scalar_names(&self.meta)
    }

    /// Per-chain series of one scalar parameter (index into
    /// [`Self::scalar_names`]).
    pub fn scalar_series(&self, idx: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|chain| chain.iter().map(|d| flatten_at(d, idx)).collect())
            .collect()
    }

    /// All draws of the slope coefficient for covariate `j` (1-based),
    /// flattened in chain order. The intercept is not addressable here.
    pub fn beta_coordinate_draws(&self, j: usize) -> Result<Vec<f64>> {
        if j == 0 || j > self.meta.p {
            return Err(Error::Contract(format!(
                "covariate index {j} out of range 1..={}",
                self.meta.p
            )));
        }
        let off = usize::from(self.meta.intercept);
        Ok(self.iter_draws().map(|d| d.beta[off + j - 1]).collect())
    }

    /// Posterior mean of the full coefficient vector (intercept included
    /// when present).
    pub fn beta_posterior_mean(&self) -> DVector<f64> {
        let dim = self.meta.p + usize::from(self.meta.intercept);
        let mut acc = DVector::zeros(dim);
        for d in self.iter_draws() {
            acc += &d.beta;
        }
        acc / self.total_draws() as f64
    }

    pub fn beta_posterior_sd(&self) -> DVector<f64> {
        let mean = self.beta_posterior_mean();
        let dim = mean.len();
        let mut acc = DVector::zeros(dim);
        for d in self.iter_draws() {
            let diff = &d.beta - &mean;
            acc += diff.component_mul(&diff);
        }
        (acc / (self.total_draws() as f64 - 1.0)).map(f64::sqrt)
    }

    pub fn k_posterior_mean(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.meta.p);
        for d in self.iter_draws() {
            acc += &d.k;
        }
        acc / self.total_draws() as f64
    }

    pub fn sigma_y2_posterior_mean(&self) -> f64 {
        self.iter_draws().map(|d| d.sigma_y2).sum::<f64>() / self.total_draws() as f64
    }

    // -- CSV dump ----------------------------------------------------------

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = serde_json::to_string(&self.meta)
            .map_err(|e| Error::Parse(format!("cannot serialize meta: {e}")))?;
        writeln!(w, "# bgi posterior dump v1")?;
        writeln!(w, "# meta={meta}")?;
        writeln!(w, "chain,iter,param,value")?;
        let names = self.scalar_names();
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, draw) in chain.iter().enumerate() {
                let flat = flatten(draw);
                for (name, v) in names.iter().zip(flat) {
                    writeln!(w, "{c},{i},{name},{v}")?;
                }
            }
        }
        Ok(())
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let mut meta: Option<SampleMeta> = None;
        let mut header_seen = false;
        let mut values: Vec<f64> = Vec::new();
        for line in &mut lines {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(json) = rest.trim().strip_prefix("meta=") {
                    meta = Some(
                        serde_json::from_str(json)
                            .map_err(|e| Error::Parse(format!("bad meta line: {e}")))?,
                    );
                }
                continue;
            }
            if !header_seen {
                if line.trim() != "chain,iter,param,value" {
                    return Err(Error::Parse(format!(
                        "expected dump header 'chain,iter,param,value', found '{line}'"
                    )));
                }
                header_seen = true;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let value = line
                .rsplit(',')
                .next()
                .ok_or_else(|| Error::Parse(format!("malformed dump line '{line}'")))?;
            values.push(value.parse().map_err(|_| {
                Error::Parse(format!("invalid value in dump line '{line}'"))
            })?);
        }
        let meta = meta.ok_or_else(|| Error::Parse("dump is missing its meta line".into()))?;
        Self::from_flat(meta, &values)
    }

    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Parse(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::read_csv(f)
    }

    // -- binary dump ---------------------------------------------------------

    const MAGIC: &'static [u8; 8] = b"BGIPOST1";

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = serde_json::to_vec(&self.meta)
            .map_err(|e| Error::Parse(format!("cannot serialize meta: {e}")))?;
        w.write_all(Self::MAGIC)?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        for chain in &self.chains {
            for draw in chain {
                for v in flatten(draw) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn save_binary<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_binary(BufWriter::new(f))
    }

    pub fn read_binary<R: Read>(mut reader: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Parse("not a bgi binary posterior dump".into()));
        }
        let mut len8 = [0u8; 8];
        reader.read_exact(&mut len8)?;
        let meta_len = u64::from_le_bytes(len8) as usize;
        let mut meta_buf = vec![0u8; meta_len];
        reader.read_exact(&mut meta_buf)?;
        let meta: SampleMeta = serde_json::from_slice(&meta_buf)
            .map_err(|e| Error::Parse(format!("bad meta block: {e}")))?;
        let mut rest = Vec::new();
        reader.read_to_end(&mut rest)?;
        if rest.len() % 8 != 0 {
            return Err(Error::Parse("truncated binary dump".into()));
        }
        let values: Vec<f64> = rest
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::from_flat(meta, &values)
    }

    pub fn load_binary<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Parse(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::read_binary(BufReader::new(f))
    }

    /// Loads a dump in either format, sniffing the magic bytes.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| {
            Error::Parse(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        if bytes.starts_with(Self::MAGIC) {
            Self::read_binary(bytes.as_slice())
        } else {
            Self::read_csv(bytes.as_slice())
        }
    }

    fn from_flat(meta: SampleMeta, values: &[f64]) -> Result<Self> {
        let dim = draw_dim(&meta);
        let expected = meta.n_chains * meta.n_kept * dim;
        if values.len() != expected {
            return Err(Error::Parse(format!(
                "dump holds {} values, expected {expected}",
                values.len()
            )));
        }
        let mut chains = Vec::with_capacity(meta.n_chains);
        let mut off = 0;
        for _ in 0..meta.n_chains {
            let mut chain = Vec::with_capacity(meta.n_kept);
            for _ in 0..meta.n_kept {
                chain.push(unflatten(&meta, &values[off..off + dim]));
                off += dim;
            }
            chains.push(chain);
        }
        Self::new(chains, meta)
    }
}

/// Number of scalars in one draw.
pub fn draw_dim(meta: &SampleMeta) -> usize {
    let e = meta.env_ids.len();
    usize::from(meta.intercept) + meta.p // beta
        + meta.p                          // k
        + e * meta.p                      // mu
        + 3                               // sigma_y2, tau2, phi
        + meta.p // mu_scales
}

pub(crate) fn scalar_names(meta: &SampleMeta) -> Vec<String> {
    let mut names = Vec::with_capacity(draw_dim(meta));
    if meta.intercept {
        names.push("intercept".to_string());
    }
    for j in 1..=meta.p {
        names.push(format!("beta[{j}]"));
    }
    for j in 1..=meta.p {
        names.push(format!("k[{j}]"));
    }
    for id in &meta.env_ids {
        for j in 1..=meta.p {
            names.push(format!("mu[{id}][{j}]"));
        }
    }
    names.push("sigma_y2".to_string());
    names.push("tau2".to_string());
    names.push("phi".to_string());
    for j in 1..=meta.p {
        names.push(format!("mu_scale[{j}]"));
    }
    names
}

fn flatten(d: &ParamDraw) -> Vec<f64> {
    let mut out =
        Vec::with_capacity(d.beta.len() + d.k.len() + d.mu.iter().map(|m| m.len()).sum::<usize>() + 3 + d.mu_scales.len());
    out.extend(d.beta.iter());
    out.extend(d.k.iter());
    for m in &d.mu {
        out.extend(m.iter());
    }
    out.push(d.sigma_y2);
    out.push(d.tau2);
    out.push(d.phi);
    out.extend(d.mu_scales.iter());
    out
}

fn flatten_at(d: &ParamDraw, idx: usize) -> f64 {
    let nb = d.beta.len();
    let nk = d.k.len();
    let p = d.mu_scales.len();
    let nmu = d.mu.len() * p;
    if idx < nb {
        d.beta[idx]
    } else if idx < nb + nk {
        d.k[idx - nb]
    } else if idx < nb + nk + nmu {
        let r = idx - nb - nk;
        d.mu[r / p][r % p]
    } else {
        match idx - nb - nk - nmu {
            0 => d.sigma_y2,
            1 => d.tau2,
            2 => d.phi,
            r => d.mu_scales[r - 3],
        }
    }
}

fn unflatten(meta: &SampleMeta, flat: &[f64]) -> ParamDraw {
    let nb = meta.p + usize::from(meta.intercept);
    let mut off = 0;
    let beta = DVector::from_column_slice(&flat[off..off + nb]);
    off += nb;
    let k = DVector::from_column_slice(&flat[off..off + meta.p]);
    off += meta.p;
    let mut mu = Vec::with_capacity(meta.env_ids.len());
    for _ in 0..meta.env_ids.len() {
        mu.push(DVector::from_column_slice(&flat[off..off + meta.p]));
        off += meta.p;
    }
    let sigma_y2 = flat[off];
    let tau2 = flat[off + 1];
    let phi = flat[off + 2];
    off += 3;
    let mu_scales = DVector::from_column_slice(&flat[off..off + meta.p]);
    ParamDraw {
        beta,
        k,
        mu,
        sigma_y2,
        tau2,
        phi,
        mu_scales,
    }
}

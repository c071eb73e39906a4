//! Convergence diagnostics: split R-hat and rank-normalized effective
//! sample size, following the split-chain formulation used by Stan.

use std::fmt;

use crate::draws::PosteriorSamples;
use crate::stats::normal_quantile;

/// Splits each chain in half, dropping the middle draw of odd-length
/// chains, and returns the resulting sequences.
fn split_chains(series: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(series.len() * 2);
    for chain in series {
        let n = chain.len();
        let half = n / 2;
        if half == 0 {
            continue;
        }
        out.push(&chain[..half]);
        out.push(&chain[n - half..]);
    }
    out
}

fn seq_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn seq_var(xs: &[f64], mean: f64) -> f64 {
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Between/within decomposition over split sequences: returns
/// `(w, var_plus, n)` or `None` when degenerate.
fn within_var_plus(seqs: &[&[f64]]) -> Option<(f64, f64, usize)> {
    if seqs.len() < 2 {
        return None;
    }
    let n = seqs[0].len();
    if n < 2 || seqs.iter().any(|s| s.len() != n) {
        return None;
    }
    let m = seqs.len() as f64;
    let means: Vec<f64> = seqs.iter().map(|s| seq_mean(s)).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n as f64 / (m - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    let w = seqs
        .iter()
        .zip(&means)
        .map(|(s, &mu)| seq_var(s, mu))
        .sum::<f64>()
        / m;
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    Some((w, var_plus, n))
}

/// Split R-hat over the kept draws of each chain. Returns `None` when the
/// statistic is undefined (fewer than two chains, too-short chains, or zero
/// within-sequence variance).
pub fn split_rhat(series: &[Vec<f64>]) -> Option<f64> {
    if series.len() < 2 {
        return None;
    }
    let seqs = split_chains(series);
    let (w, var_plus, _) = within_var_plus(&seqs)?;
    if !(w > 0.0) || !var_plus.is_finite() {
        return None;
    }
    let r = (var_plus / w).sqrt();
    r.is_finite().then_some(r)
}

/// Replaces draws by normal quantiles of their pooled average ranks.
fn rank_normalize(series: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = series.iter().map(|c| c.len()).sum();
    let mut indexed: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (c, chain) in series.iter().enumerate() {
        for (i, &v) in chain.iter().enumerate() {
            indexed.push((v, c, i));
        }
    }
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![vec![0.0; 0]; series.len()];
    for (c, chain) in series.iter().enumerate() {
        ranks[c] = vec![0.0; chain.len()];
    }
    let mut i = 0;
    while i < indexed.len() {
        let mut j = i;
        while j + 1 < indexed.len() && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0; // 1-based average rank
        for item in &indexed[i..=j] {
            ranks[item.1][item.2] = avg_rank;
        }
        i = j + 1;
    }
    let s = total as f64;
    ranks
        .into_iter()
        .map(|chain| {
            chain
                .into_iter()
                .map(|r| normal_quantile(((r - 0.375) / (s + 0.25)).clamp(1e-12, 1.0 - 1e-12)).unwrap())
                .collect()
        })
        .collect()
}

/// Autocovariance at lags `0..max_lag` with the 1/N normalization.
fn autocovariance(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let mean = seq_mean(xs);
    let centered: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    (0..max_lag)
        .map(|t| {
            let mut acc = 0.0;
            for i in 0..(n - t) {
                acc += centered[i] * centered[i + t];
            }
            acc / n as f64
        })
        .collect()
}

/// Rank-normalized (bulk) effective sample size over split chains, using
/// Geyer's initial monotone positive sequence. Returns `None` for
/// degenerate inputs (constant draws).
pub fn rank_normalized_ess(series: &[Vec<f64>]) -> Option<f64> {
    if series.is_empty() || series.iter().any(|c| c.len() < 4) {
        return None;
    }
    let z = rank_normalize(series);
    let seqs = split_chains(&z);
    let m = seqs.len();
    let (w, var_plus, n) = match within_var_plus(&seqs) {
        Some(t) => t,
        // A single short chain split to one pair is still handled above;
        // anything else is degenerate.
        None => return None,
    };
    if !(var_plus > 0.0) || !(w > 0.0) {
        return None;
    }
    let max_lag = n.saturating_sub(3).max(1);
    let acovs: Vec<Vec<f64>> = seqs.iter().map(|s| autocovariance(s, max_lag)).collect();
    let mean_acov = |t: usize| acovs.iter().map(|a| a[t]).sum::<f64>() / m as f64;

    let mut rho = Vec::with_capacity(max_lag);
    rho.push(1.0);
    for t in 1..max_lag {
        rho.push(1.0 - (w - mean_acov(t)) / var_plus);
    }

    let mut tau = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    loop {
        let t = 2 * k;
        if t + 1 >= rho.len() {
            break;
        }
        let mut pair = rho[t] + rho[t + 1];
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = (-1.0 + 2.0 * tau).max(1.0 / (m as f64 * n as f64));
    let ess = (m * n) as f64 / tau;
    ess.is_finite().then_some(ess)
}

/// Diagnostics for one scalar parameter.
#[derive(Debug, Clone)]
pub struct ParamDiagnostics {
    pub name: String,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
    /// Set when R-hat exceeds the threshold or is undefined despite
    /// multiple chains being available.
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct DiagnosticsTable {
    pub rows: Vec<ParamDiagnostics>,
    pub threshold: f64,
}

impl DiagnosticsTable {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }
}

impl fmt::Display for DiagnosticsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>10} {:>10}  flag", "parameter", "split-Rhat", "ESS")?;
        for r in &self.rows {
            let rhat = r
                .rhat
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "undefined".into());
            let ess = r
                .ess
                .map(|v| format!("{v:.0}"))
                .unwrap_or_else(|| "undefined".into());
            writeln!(
                f,
                "{:<16} {:>10} {:>10}  {}",
                r.name,
                rhat,
                ess,
                if r.flagged { "!" } else { "" }
            )?;
        }
        Ok(())
    }
}

/// Per-scalar split R-hat and rank-normalized ESS over the kept draws.
/// R-hat needs at least two chains and is reported as undefined otherwise.
pub fn diagnostics(samples: &PosteriorSamples, threshold: f64) -> DiagnosticsTable {
    let names = samples.scalar_names();
    let multi = samples.n_chains() >= 2;
    let rows = names
        .iter()
        .enumerate()
        .map(|(idx, name)| {
            let series = samples.scalar_series(idx);
            let rhat = split_rhat(&series);
            let ess = rank_normalized_ess(&series);
            let flagged = multi && rhat.map_or(true, |r| r > threshold);
            ParamDiagnostics {
                name: name.clone(),
                rhat,
                ess,
                flagged,
            }
        })
        .collect();
    DiagnosticsTable { rows, threshold }
}

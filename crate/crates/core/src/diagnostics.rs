//! Convergence and accuracy metrics: Geweke z-scores, effective sample size,
//! Hellinger distance, and per-chain diagnostic reports.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{CcmError, Result};
use crate::svg;

/// Chains shorter than this are rejected.
pub const MIN_CHAIN_LEN: usize = 20;

/// Sample variance below which a window counts as having no variability.
pub const DEFAULT_MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geweke {
    Z(f64),
    /// One of the windows has (almost) no variability.
    NotComputable,
}

impl Geweke {
    pub fn z(self) -> Option<f64> {
        match self {
            Geweke::Z(z) => Some(z),
            Geweke::NotComputable => None,
        }
    }
}

fn check_chain(chain: &[f64]) -> Result<()> {
    if chain.len() < MIN_CHAIN_LEN {
        return Err(CcmError::invalid(format!(
            "chain of length {} is shorter than {MIN_CHAIN_LEN}",
            chain.len()
        )));
    }
    if chain.iter().any(|x| !x.is_finite()) {
        return Err(CcmError::invalid("chain contains non-finite values"));
    }
    Ok(())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Autocovariance at `lag` with the 1/n normalization.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Spectral density at frequency zero from an autoregressive fit: Yule-Walker
/// coefficients by Levinson-Durbin for orders up to `10·log10(n)`, the order
/// chosen by AIC, then `σ² / (1 − Σφ)²`.
pub fn spectral_density_zero(x: &[f64]) -> f64 {
    let n = x.len();
    let m = mean(x);
    let max_order = ((10.0 * (n as f64).log10()).floor() as usize).min(n - 1);
    let r: Vec<f64> = (0..=max_order).map(|k| autocov(x, m, k)).collect();
    if r[0] <= 0.0 {
        return 0.0;
    }
    let mut phi: Vec<f64> = Vec::new();
    let mut v = r[0];
    let (mut best_aic, mut best_phi, mut best_v) = (n as f64 * v.ln(), Vec::new(), v);
    for k in 1..=max_order {
        let acc: f64 = phi.iter().enumerate().map(|(j, p)| p * r[k - 1 - j]).sum();
        let pk = (r[k] - acc) / v;
        let prev = phi.clone();
        for j in 0..prev.len() {
            phi[j] = prev[j] - pk * prev[prev.len() - 1 - j];
        }
        phi.push(pk);
        v *= 1.0 - pk * pk;
        if !(v > 0.0) {
            break;
        }
        let aic = n as f64 * v.ln() + 2.0 * k as f64;
        if aic < best_aic {
            best_aic = aic;
            best_phi = phi.clone();
            best_v = v;
        }
    }
    let order = best_phi.len();
    let sigma2 = best_v * n as f64 / (n - (order + 1)).max(1) as f64;
    let denom = 1.0 - best_phi.iter().sum::<f64>();
    sigma2 / (denom * denom)
}

/// Geweke z-score comparing the mean of the first `first_frac` of the chain
/// with the mean of the last `last_frac`.
pub fn geweke_z(chain: &[f64], first_frac: f64, last_frac: f64) -> Result<Geweke> {
    geweke_z_with(chain, first_frac, last_frac, DEFAULT_MIN_VARIANCE)
}

pub fn geweke_z_with(
    chain: &[f64],
    first_frac: f64,
    last_frac: f64,
    min_variance: f64,
) -> Result<Geweke> {
    check_chain(chain)?;
    if !(first_frac > 0.0 && last_frac > 0.0 && first_frac + last_frac <= 1.0) {
        return Err(CcmError::invalid(
            "Geweke window fractions must be positive and sum to at most 1",
        ));
    }
    let n = chain.len();
    let na = ((first_frac * n as f64).floor() as usize).max(2);
    let nb = ((last_frac * n as f64).floor() as usize).max(2);
    let a = &chain[..na];
    let b = &chain[n - nb..];
    if sample_variance(a) < min_variance || sample_variance(b) < min_variance {
        return Ok(Geweke::NotComputable);
    }
    let se2 = spectral_density_zero(a) / na as f64 + spectral_density_zero(b) / nb as f64;
    if !(se2 > 0.0) {
        return Ok(Geweke::NotComputable);
    }
    Ok(Geweke::Z((mean(a) - mean(b)) / se2.sqrt()))
}

/// Effective sample size `n / (1 + 2 Σ ρ_k)` with Geyer's initial positive
/// sequence truncation: lag pairs `ρ_{2m} + ρ_{2m+1}` are summed until the
/// first non-positive pair. Capped at `n·log10(n)`.
pub fn ess(chain: &[f64]) -> Result<f64> {
    check_chain(chain)?;
    let n = chain.len();
    let m = mean(chain);
    let g0 = autocov(chain, m, 0);
    if sample_variance(chain) < DEFAULT_MIN_VARIANCE || g0 <= 0.0 {
        return Err(CcmError::invalid("ESS undefined for a constant chain"));
    }
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(chain, m, lag) + autocov(chain, m, lag + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    let cap = n as f64 * (n as f64).log10();
    if tau <= 0.0 {
        return Ok(cap);
    }
    Ok((n as f64 / tau).min(cap))
}

/// Hellinger distance `(1/√2)·‖√p − √q‖₂` between probability vectors.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(CcmError::Dimension(format!(
            "probability vectors of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    for v in [p, q] {
        if v.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(CcmError::invalid(
                "probability vector has negative or non-finite entries",
            ));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(CcmError::invalid(format!("probability vector sums to {s}")));
        }
    }
    let ss: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum();
    Ok((ss / 2.0).sqrt().clamp(0.0, 1.0))
}

/// Hellinger distance between two count (or weight) vectors after
/// normalizing each; shorter vectors are zero-padded.
pub fn hellinger_counts(a: &[f64], b: &[f64]) -> Result<f64> {
    let len = a.len().max(b.len());
    let norm = |v: &[f64]| -> Result<Vec<f64>> {
        let s: f64 = v.iter().sum();
        if !(s > 0.0) {
            return Err(CcmError::invalid("count vector has zero total"));
        }
        let mut out: Vec<f64> = v.iter().map(|x| x / s).collect();
        out.resize(len, 0.0);
        Ok(out)
    };
    hellinger(&norm(a)?, &norm(b)?)
}

/// Per-parameter diagnostics for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDiagnostics {
    pub param_id: String,
    pub n_iter: usize,
    pub geweke: Geweke,
    /// `None` for constant chains.
    pub ess: Option<f64>,
}

impl ChainDiagnostics {
    pub fn computable(&self) -> bool {
        matches!(self.geweke, Geweke::Z(_))
    }
}

pub fn diagnose(param_id: &str, chain: &[f64], min_variance: f64) -> Result<ChainDiagnostics> {
    let geweke = geweke_z_with(chain, 0.1, 0.5, min_variance)?;
    let ess = if sample_variance(chain) < min_variance {
        None
    } else {
        ess(chain).ok()
    };
    Ok(ChainDiagnostics {
        param_id: param_id.to_string(),
        n_iter: chain.len(),
        geweke,
        ess,
    })
}

pub fn write_diagnostics_csv<W: Write>(w: W, rows: &[ChainDiagnostics]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["param_id", "n_iter", "computable", "geweke_z", "ess"])?;
    for r in rows {
        wtr.write_record([
            r.param_id.clone(),
            r.n_iter.to_string(),
            r.computable().to_string(),
            r.geweke.z().map(|z| z.to_string()).unwrap_or_default(),
            r.ess.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// A named trace, optionally with a reference value drawn as a line.
#[derive(Debug, Clone)]
pub struct Trace {
    pub param_id: String,
    pub values: Vec<f64>,
    pub truth: Option<f64>,
}

/// Writes `diagnostics.csv` for all traces and one `trace_<param>.svg` per
/// trace in `selected` (all traces when `selected` is `None`).
pub fn trace_report(
    traces: &[Trace],
    selected: Option<&[String]>,
    min_variance: f64,
    out_dir: &Path,
) -> Result<Vec<ChainDiagnostics>> {
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::with_capacity(traces.len());
    for t in traces {
        rows.push(diagnose(&t.param_id, &t.values, min_variance)?);
        if selected.is_none_or(|s| s.contains(&t.param_id)) {
            let doc = svg::trace_plot(&t.param_id, &t.values, t.truth);
            fs::write(
                out_dir.join(format!("trace_{}.svg", sanitize(&t.param_id))),
                doc,
            )?;
        }
    }
    let f = fs::File::create(out_dir.join("diagnostics.csv"))?;
    write_diagnostics_csv(f, &rows)?;
    Ok(rows)
}

/// File-name-safe form of a parameter id.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

//! Ratios of the normalizing mass `W(θ) = Σ_u Q(u|θ)` estimated over a
//! sample of congruence classes harvested from a uniform-law chain.

use std::io::Write;

use rayon::prelude::*;
use rustc_hash::FxHashSet;

use crate::error::{CcmError, Result};
use crate::gibbs::LogNormalizer;
use crate::harness::build_nb_theta;
use crate::model::{log_q_class, CcmSpec, ClassLaw, CongruenceMapping, PriorSpec, Statistic};
use crate::rng::derive_seed;
use crate::sampler::{generate_networks, SamplerConfig};

const HARVEST_STREAM: u64 = 0x7768_6172_7665_7374;

/// Distinct statistics seen by one or more uniform-law chains, in order of
/// first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSample {
    pub mapping: CongruenceMapping,
    pub n: usize,
    pub classes: Vec<Statistic>,
    /// Retained draws before deduplication.
    pub draws: usize,
}

impl ClassSample {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Builds a sample from statistics, dropping repeats.
    pub fn from_statistics<I: IntoIterator<Item = Statistic>>(
        mapping: CongruenceMapping,
        n: usize,
        stats: I,
    ) -> Self {
        let mut seen = FxHashSet::default();
        let mut classes = Vec::new();
        let mut draws = 0;
        for s in stats {
            draws += 1;
            if seen.insert(s.cells()) {
                classes.push(s);
            }
        }
        ClassSample {
            mapping,
            n,
            classes,
            draws,
        }
    }

    /// `ln Σ_u Q(u|law)` over the sample.
    pub fn log_q_sum(&self, law: &ClassLaw) -> Result<f64> {
        if self.classes.is_empty() {
            return Err(CcmError::invalid("class sample is empty"));
        }
        let logs = self
            .classes
            .iter()
            .map(|c| log_q_class(c, law))
            .collect::<Result<Vec<_>>>()?;
        let lse = log_sum_exp(&logs);
        if lse == f64::NEG_INFINITY {
            return Err(CcmError::invalid("every sampled class has zero mass"));
        }
        Ok(lse)
    }

    /// Average unnormalized mass per sampled class.
    pub fn mean_q(&self, law: &ClassLaw) -> Result<f64> {
        Ok((self.log_q_sum(law)? - (self.classes.len() as f64).ln()).exp())
    }
}

impl LogNormalizer for ClassSample {
    fn log_w(&self, law: &ClassLaw) -> Result<f64> {
        self.log_q_sum(law)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn uniform_spec(mapping: &CongruenceMapping, n: usize) -> CcmSpec {
    let dim = match mapping {
        CongruenceMapping::DegreeDistribution => n,
        CongruenceMapping::MixingMatrix(c) => c.cell_count(),
    };
    CcmSpec::new(
        mapping.clone(),
        ClassLaw::Uniform,
        PriorSpec::flat(dim, 1.0),
    )
}

/// Runs one uniform-law chain from the empty network and keeps the distinct
/// statistics among its retained draws.
pub fn harvest_unique_classes(
    mapping: &CongruenceMapping,
    n: usize,
    cfg: &SamplerConfig,
) -> Result<ClassSample> {
    cfg.validate()?;
    let spec = uniform_spec(mapping, n);
    let stats = generate_networks(&spec, n, cfg.retained(), cfg)?;
    Ok(ClassSample::from_statistics(mapping.clone(), n, stats))
}

/// Runs `chains` independent chains (seeds derived from `cfg.seed`) on up to
/// `workers` threads and merges their classes in chain order.
pub fn harvest_chains(
    mapping: &CongruenceMapping,
    n: usize,
    cfg: &SamplerConfig,
    chains: usize,
    workers: usize,
) -> Result<ClassSample> {
    let run = |k: usize| {
        let c = SamplerConfig {
            seed: derive_seed(cfg.seed, HARVEST_STREAM, k as u64),
            ..cfg.clone()
        };
        harvest_unique_classes(mapping, n, &c)
    };
    let parts: Vec<ClassSample> = crate::harness::with_workers(workers, || {
        (0..chains)
            .into_par_iter()
            .map(run)
            .collect::<Result<Vec<_>>>()
    })?;
    let draws = parts.iter().map(|p| p.draws).sum();
    let mut merged = ClassSample::from_statistics(
        mapping.clone(),
        n,
        parts.into_iter().flat_map(|p| p.classes),
    );
    merged.draws = draws;
    Ok(merged)
}

/// Estimated `W(law1) / W(law2)`; the unknown number of classes cancels.
pub fn w_ratio(sample: &ClassSample, law1: &ClassLaw, law2: &ClassLaw) -> Result<f64> {
    Ok((sample.log_q_sum(law1)? - sample.log_q_sum(law2)?).exp())
}

/// Base parameters of a perturbation study.
#[derive(Debug, Clone, PartialEq)]
pub enum StudyBase {
    /// `θ` proportional to a negative binomial pmf on `0..n`.
    Degree { size: f64, mu: f64 },
    /// Poisson total with rate `lambda`, cell probabilities `alpha`.
    Mixing { lambda: f64, alpha: Vec<f64> },
}

impl StudyBase {
    /// Law with the mean parameter (`mu` or `lambda`) scaled by `1 + delta`.
    pub fn law(&self, n: usize, delta: f64) -> Result<ClassLaw> {
        if !(delta > -1.0) {
            return Err(CcmError::invalid(format!(
                "perturbation {delta} must exceed -1"
            )));
        }
        match self {
            StudyBase::Degree { size, mu } => Ok(ClassLaw::MultinomialDegree {
                theta: build_nb_theta(*size, mu * (1.0 + delta), n)?,
            }),
            StudyBase::Mixing { lambda, alpha } => Ok(ClassLaw::PoissonMultinomialMixing {
                lambda: lambda * (1.0 + delta),
                alpha: alpha.clone(),
            }),
        }
    }

    pub fn parameter(&self, delta: f64) -> f64 {
        match self {
            StudyBase::Degree { mu, .. } => mu * (1.0 + delta),
            StudyBase::Mixing { lambda, .. } => lambda * (1.0 + delta),
        }
    }
}

pub const DEFAULT_DELTAS: [f64; 4] = [-0.2, -0.1, 0.1, 0.2];

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationRow {
    pub delta: f64,
    /// Perturbed `mu` or `lambda`.
    pub parameter: f64,
    /// Summed mass of the sampled classes at the base parameters; at most
    /// one, and the share of `W` the sample covers.
    pub w_base: f64,
    pub w_perturbed: f64,
    /// `|W(θ₂) − W(θ₁)| / W(θ₁)`.
    pub deviation: f64,
}

pub fn perturbation_table(
    sample: &ClassSample,
    base: &StudyBase,
    deltas: &[f64],
) -> Result<Vec<PerturbationRow>> {
    let law1 = base.law(sample.n, 0.0)?;
    let log1 = sample.log_q_sum(&law1)?;
    deltas
        .iter()
        .map(|&delta| {
            let log2 = sample.log_q_sum(&base.law(sample.n, delta)?)?;
            Ok(PerturbationRow {
                delta,
                parameter: base.parameter(delta),
                w_base: log1.exp(),
                w_perturbed: log2.exp(),
                deviation: ((log2 - log1).exp() - 1.0).abs(),
            })
        })
        .collect()
}

pub fn write_perturbation_csv<W: Write>(w: W, rows: &[PerturbationRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["w_base", "delta", "parameter", "w_perturbed", "deviation"])?;
    for r in rows {
        wtr.write_record([
            r.w_base.to_string(),
            r.delta.to_string(),
            r.parameter.to_string(),
            r.w_perturbed.to_string(),
            r.deviation.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

//! Simulation studies: truth generation, observation, inference, evaluation.
//!
//! Every replication draws its seeds from the master seed by counter-mode
//! derivation, so results do not depend on how replications are scheduled.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::diagnostics::{self, Geweke};
use crate::error::{CcmError, Result};
use crate::gibbs::{gibbs_run, GibbsConfig, PosteriorSample};
use crate::graph::{
    degree_distribution, mixing_matrix, pairs, sample_induced_observation,
    sample_stratified_observation, Network, NodeClassification,
};
use crate::model::{normalize, CcmSpec, ClassLaw, CongruenceMapping, PriorSpec, Statistic};
use crate::rng::{chain_rng, derive_seed};
use crate::sampler::{generate_networks, MhChain, SamplerConfig};

/// Negative binomial pmf with the given size and mean, truncated to `0..n`
/// and renormalized.
pub fn build_nb_theta(size: f64, mu: f64, n: usize) -> Result<Vec<f64>> {
    if !(size > 0.0 && size.is_finite() && mu > 0.0 && mu.is_finite()) {
        return Err(CcmError::invalid(format!(
            "negative binomial needs size, mu > 0 (got {size}, {mu})"
        )));
    }
    if n == 0 {
        return Err(CcmError::invalid("theta needs at least one bin"));
    }
    let p = size / (size + mu);
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let logs: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            ln_gamma(k + size) - ln_gamma(size) - ln_gamma(k + 1.0) + size * lp + k * lq
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    normalize(&logs.iter().map(|l| (l - m).exp()).collect::<Vec<_>>())
}

/// Runs `f` on a rayon pool with `workers` threads (0 means the global
/// default pool).
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: usize, f: F) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Illustration,
    DegreeRecovery,
    MixingRecovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: Scenario,
    pub n: usize,
    /// Node sampling fractions, one study arm each.
    pub fractions: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    /// Truth-network burn-in in expected sweeps (multiples of the dyad count).
    pub truth_sweeps: f64,
    /// Negative binomial size and mean for the degree law.
    pub nb_size: f64,
    pub nb_mu: f64,
    /// Dirichlet concentration per component.
    pub prior_alpha0: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    /// Mixing scenario: class shares of the population, total-edge rate and
    /// cell probabilities.
    pub class_proportions: Vec<f64>,
    pub lambda: f64,
    pub alpha: Vec<f64>,
    /// Mixing scenario: per-class sampling fractions for each arm. When
    /// empty, each entry of `fractions` is applied to every class.
    pub class_coverage: Vec<Vec<f64>>,
    /// Run inference; when false only truth and observation are evaluated.
    pub infer: bool,
    pub gibbs: GibbsConfig,
    /// Illustration: number of networks and the chain producing them.
    pub samples: usize,
    pub sampler: SamplerConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan::preset(Scenario::DegreeRecovery, Profile::Desk)
    }
}

impl ExperimentPlan {
    pub fn preset(scenario: Scenario, profile: Profile) -> Self {
        let paper = profile == Profile::Paper;
        let base = ExperimentPlan {
            scenario,
            n: 200,
            fractions: vec![0.3, 0.5, 0.7],
            replications: 10,
            seed: 1,
            truth_sweeps: 20.0,
            nb_size: 1.02,
            nb_mu: 6.19,
            prior_alpha0: 1e-4,
            gamma_shape: 1e-3,
            gamma_rate: 1e-3,
            class_proportions: vec![0.5, 0.5],
            lambda: 200.0,
            alpha: vec![0.4, 0.2, 0.4],
            class_coverage: Vec::new(),
            infer: true,
            gibbs: GibbsConfig::default(),
            samples: 5000,
            sampler: SamplerConfig {
                iterations: 100_000 + 5000 * 1000,
                burn_in: 100_000,
                thin: 1000,
                ..Default::default()
            },
        };
        match (scenario, paper) {
            (Scenario::DegreeRecovery, false) => base,
            (Scenario::DegreeRecovery, true) => ExperimentPlan {
                n: 1000,
                fractions: (1..=9).map(|k| k as f64 / 10.0).collect(),
                replications: 100,
                ..base
            },
            (Scenario::MixingRecovery, false) => ExperimentPlan {
                fractions: vec![0.5],
                class_coverage: vec![vec![0.5, 0.5], vec![0.8, 0.4]],
                replications: 10,
                gibbs: GibbsConfig {
                    outer_iterations: 500,
                    outer_burn_in: 100,
                    ..Default::default()
                },
                ..base
            },
            (Scenario::MixingRecovery, true) => ExperimentPlan {
                n: 1000,
                lambda: 1000.0,
                fractions: (1..=9).map(|k| k as f64 / 10.0).collect(),
                class_coverage: Vec::new(),
                replications: 50,
                ..base
            },
            (Scenario::Illustration, false) => ExperimentPlan { n: 100, ..base },
            (Scenario::Illustration, true) => ExperimentPlan {
                n: 100,
                samples: 50_000,
                sampler: SamplerConfig {
                    iterations: 100_000 + 50_000 * 1000,
                    burn_in: 100_000,
                    thin: 1000,
                    ..Default::default()
                },
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(CcmError::config("n must be at least 2"));
        }
        if self.replications == 0 {
            return Err(CcmError::config("replications must be at least 1"));
        }
        if self.fractions.is_empty() && self.class_coverage.is_empty() {
            return Err(CcmError::config("no sampling fractions given"));
        }
        for &s in self
            .fractions
            .iter()
            .chain(self.class_coverage.iter().flatten())
        {
            if !(s > 0.0 && s <= 1.0) {
                return Err(CcmError::config(format!(
                    "sampling fraction {s} outside (0, 1]"
                )));
            }
        }
        if !(self.truth_sweeps >= 0.0 && self.truth_sweeps.is_finite()) {
            return Err(CcmError::config("truth_sweeps must be non-negative"));
        }
        if !(self.prior_alpha0 > 0.0) {
            return Err(CcmError::config("prior_alpha0 must be positive"));
        }
        self.gibbs.validate()?;
        if self.scenario == Scenario::MixingRecovery {
            let q = self.class_proportions.len();
            if q == 0 || self.alpha.len() != q * (q + 1) / 2 {
                return Err(CcmError::config(format!(
                    "{q} classes need {} alpha entries, got {}",
                    q * (q + 1) / 2,
                    self.alpha.len()
                )));
            }
            if self.class_coverage.iter().any(|c| c.len() != q) {
                return Err(CcmError::config(
                    "class_coverage rows need one fraction per class",
                ));
            }
        }
        if self.scenario == Scenario::Illustration {
            self.sampler.validate()?;
            if self.samples == 0 {
                return Err(CcmError::config("samples must be positive"));
            }
        }
        Ok(())
    }

    fn degree_spec(&self) -> Result<CcmSpec> {
        Ok(CcmSpec::new(
            CongruenceMapping::DegreeDistribution,
            ClassLaw::MultinomialDegree {
                theta: build_nb_theta(self.nb_size, self.nb_mu, self.n)?,
            },
            self.priors(self.n),
        ))
    }

    fn priors(&self, dim: usize) -> PriorSpec {
        PriorSpec {
            dirichlet_alpha0: vec![self.prior_alpha0; dim],
            gamma_shape: self.gamma_shape,
            gamma_rate: self.gamma_rate,
        }
    }

    /// Class sizes from the proportions; the last class takes the remainder.
    pub fn class_sizes(&self) -> Result<Vec<usize>> {
        let props = normalize(&self.class_proportions)?;
        let mut sizes: Vec<usize> = props
            .iter()
            .map(|p| (p * self.n as f64).round() as usize)
            .collect();
        let head: usize = sizes[..sizes.len() - 1].iter().sum();
        if head > self.n {
            return Err(CcmError::config("class proportions exceed the population"));
        }
        *sizes.last_mut().expect("non-empty") = self.n - head;
        Ok(sizes)
    }

    fn mixing_spec(&self) -> Result<CcmSpec> {
        let classes = NodeClassification::from_class_sizes(&self.class_sizes()?)?;
        let cells = classes.cell_count();
        Ok(CcmSpec::new(
            CongruenceMapping::MixingMatrix(classes),
            ClassLaw::PoissonMultinomialMixing {
                lambda: self.lambda,
                alpha: normalize(&self.alpha)?,
            },
            self.priors(cells),
        ))
    }

    /// Per-class sampling fractions of each arm.
    fn coverage_arms(&self) -> Vec<Vec<f64>> {
        if !self.class_coverage.is_empty() {
            return self.class_coverage.clone();
        }
        let q = self.class_proportions.len();
        self.fractions.iter().map(|&s| vec![s; q]).collect()
    }
}

const STREAM_TRUTH: u64 = 1;
const STREAM_OBSERVE: u64 = 2;
const STREAM_GIBBS: u64 = 3;
const STREAM_DIRECT: u64 = 4;
const STREAM_CCM: u64 = 5;

/// Seed for one arm/replication/purpose triple.
fn task_seed(master: u64, arm: usize, rep: usize, stream: u64) -> u64 {
    derive_seed(derive_seed(master, arm as u64, rep as u64), stream, 0)
}

/// Draws a network from the CCM by MH from the empty network for
/// `sweeps × n(n−1)/2` steps.
pub fn generate_truth(spec: &CcmSpec, n: usize, sweeps: f64, seed: u64) -> Result<Network> {
    let mut chain = MhChain::new(spec, Network::empty(n), None, 0.5, false)?;
    let steps = (sweeps * pairs(n) as f64).ceil() as u64;
    chain.run(steps, &mut chain_rng(seed))?;
    Ok(chain.into_network())
}

fn proportions_u64(cells: &[u64]) -> Vec<f64> {
    let total: u64 = cells.iter().sum();
    if total == 0 {
        return vec![0.0; cells.len()];
    }
    cells.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Mean over retained samples of the normalized statistic.
fn posterior_mean_proportions(samples: &[PosteriorSample]) -> Vec<f64> {
    let width = samples
        .first()
        .map(|s| s.statistic.cells().len())
        .unwrap_or(0);
    let mut acc = vec![0.0; width];
    for s in samples {
        for (a, p) in acc.iter_mut().zip(proportions_u64(&s.statistic.cells())) {
            *a += p;
        }
    }
    acc.iter().map(|a| a / samples.len() as f64).collect()
}

fn mean_columns(rows: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut k = 0;
    for r in rows {
        if acc.is_empty() {
            acc = vec![0.0; r.len()];
        }
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
        k += 1;
    }
    acc.iter().map(|a| a / k.max(1) as f64).collect()
}

/// Convergence summary over the parameter chains of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRollup {
    pub chains: usize,
    pub not_computable: usize,
    /// |z| of the computable chains.
    pub abs_z: Vec<f64>,
    pub ess: Vec<f64>,
}

fn rollup(samples: &[PosteriorSample]) -> ChainRollup {
    let width = samples.first().map(|s| s.theta.len()).unwrap_or(0);
    let mut out = ChainRollup {
        chains: width,
        not_computable: 0,
        abs_z: Vec::new(),
        ess: Vec::new(),
    };
    let mut col = Vec::with_capacity(samples.len());
    for j in 0..width {
        col.clear();
        col.extend(samples.iter().map(|s| s.theta[j]));
        match diagnostics::diagnose("", &col, diagnostics::DEFAULT_MIN_VARIANCE) {
            Ok(d) => {
                match d.geweke {
                    Geweke::Z(z) => out.abs_z.push(z.abs()),
                    Geweke::NotComputable => out.not_computable += 1,
                }
                if d.computable() {
                    out.ess.extend(d.ess);
                }
            }
            Err(_) => out.not_computable += 1,
        }
    }
    out
}

/// One replication of a degree- or mixing-recovery arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub arm: usize,
    pub replication: usize,
    /// Node sampling fraction per class (one entry for degree studies).
    pub coverage: Vec<f64>,
    pub truth: Vec<f64>,
    pub complete_case: Vec<f64>,
    /// Posterior mean of the normalized statistic; empty without inference.
    pub estimate: Vec<f64>,
    /// Posterior mean of the law parameters; empty without inference.
    pub parameter_mean: Vec<f64>,
    pub hellinger_estimate: Option<f64>,
    pub hellinger_complete_case: f64,
    pub true_edges: usize,
    pub observed_edges: usize,
    /// Trace of one statistic cell over all outer iterations.
    pub trace: Vec<f64>,
    pub rollup: Option<ChainRollup>,
}

impl ReplicationResult {
    pub fn observed_edge_fraction(&self) -> f64 {
        if self.true_edges == 0 {
            return f64::NAN;
        }
        self.observed_edges as f64 / self.true_edges as f64
    }

    pub fn reduction(&self) -> Option<f64> {
        self.hellinger_estimate
            .map(|e| 1.0 - e / self.hellinger_complete_case)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    pub replications: Vec<ReplicationResult>,
}

/// Statistic cell traced for figures: degree 2, or the first cell of the
/// mixing matrix.
const TRACE_CELL_DEGREE: usize = 2;

fn run_replication(
    plan: &ExperimentPlan,
    spec: &CcmSpec,
    arm: usize,
    rep: usize,
    coverage: &[f64],
) -> Result<ReplicationResult> {
    let n = plan.n;
    let truth = generate_truth(
        spec,
        n,
        plan.truth_sweeps,
        task_seed(plan.seed, arm, rep, STREAM_TRUTH),
    )?;
    let mut orng = chain_rng(task_seed(plan.seed, arm, rep, STREAM_OBSERVE));
    let (mask, observed) = match &spec.mapping {
        CongruenceMapping::DegreeDistribution => {
            sample_induced_observation(&truth, coverage[0], &mut orng)?
        }
        CongruenceMapping::MixingMatrix(c) => {
            sample_stratified_observation(&truth, c, coverage, &mut orng)?
        }
    };
    let cells = |g: &Network| -> Result<Vec<u64>> {
        Ok(match &spec.mapping {
            CongruenceMapping::DegreeDistribution => degree_distribution(g)
                .counts
                .iter()
                .map(|&c| c as u64)
                .collect(),
            CongruenceMapping::MixingMatrix(c) => mixing_matrix(g, c)?.cells(),
        })
    };
    let truth_p = proportions_u64(&cells(&truth)?);
    let cc_p = proportions_u64(&cells(&observed)?);
    let h_cc = hellinger_or_one(&cc_p, &truth_p)?;
    let mut out = ReplicationResult {
        arm,
        replication: rep,
        coverage: coverage.to_vec(),
        truth: truth_p.clone(),
        complete_case: cc_p,
        estimate: Vec::new(),
        parameter_mean: Vec::new(),
        hellinger_estimate: None,
        hellinger_complete_case: h_cc,
        true_edges: truth.edge_count(),
        observed_edges: observed.edge_count(),
        trace: Vec::new(),
        rollup: None,
    };
    if !plan.infer {
        return Ok(out);
    }
    let gcfg = GibbsConfig {
        seed: task_seed(plan.seed, arm, rep, STREAM_GIBBS),
        ..plan.gibbs.clone()
    };
    let run = gibbs_run(&observed, &mask, spec, &gcfg)?;
    let kept = &run.samples[gcfg.outer_burn_in as usize..];
    let est = posterior_mean_proportions(kept);
    out.hellinger_estimate = Some(hellinger_or_one(&est, &truth_p)?);
    out.estimate = est;
    out.parameter_mean = mean_columns(kept.iter().map(|s| s.theta.clone()));
    let cell = match spec.mapping {
        CongruenceMapping::DegreeDistribution => TRACE_CELL_DEGREE.min(n - 1),
        CongruenceMapping::MixingMatrix(_) => 0,
    };
    out.trace = run
        .samples
        .iter()
        .map(|s| s.statistic.cells()[cell] as f64)
        .collect();
    out.rollup = Some(rollup(kept));
    Ok(out)
}

/// Hellinger distance of two proportion vectors; an all-zero vector (no
/// observed edges) is maximally distant.
fn hellinger_or_one(p: &[f64], q: &[f64]) -> Result<f64> {
    let zero = |v: &[f64]| v.iter().all(|&x| x == 0.0);
    if zero(p) || zero(q) {
        return Ok(if zero(p) && zero(q) { 0.0 } else { 1.0 });
    }
    diagnostics::hellinger_counts(p, q)
}

fn run_arms(
    plan: &ExperimentPlan,
    spec: &CcmSpec,
    arms: &[Vec<f64>],
    workers: usize,
) -> Result<ExperimentResult> {
    let tasks: Vec<(usize, usize)> = (0..arms.len())
        .flat_map(|a| (0..plan.replications).map(move |r| (a, r)))
        .collect();
    let replications = with_workers(workers, || {
        tasks
            .par_iter()
            .map(|&(a, r)| run_replication(plan, spec, a, r, &arms[a]))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(ExperimentResult {
        plan: plan.clone(),
        replications,
    })
}

/// Degree-distribution recovery under induced node sampling.
pub fn run_degree_recovery(plan: &ExperimentPlan, workers: usize) -> Result<ExperimentResult> {
    plan.validate()?;
    let spec = plan.degree_spec()?;
    let arms: Vec<Vec<f64>> = plan.fractions.iter().map(|&s| vec![s]).collect();
    run_arms(plan, &spec, &arms, workers)
}

/// Mixing-matrix recovery under per-class node sampling.
pub fn run_mixing_recovery(plan: &ExperimentPlan, workers: usize) -> Result<ExperimentResult> {
    plan.validate()?;
    let spec = plan.mixing_spec()?;
    run_arms(plan, &spec, &plan.coverage_arms(), workers)
}

/// Per-arm means of a recovery experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: usize,
    pub coverage: Vec<f64>,
    pub hellinger_estimate: f64,
    pub hellinger_complete_case: f64,
    /// `1 − estimate / complete_case` of the two means.
    pub reduction: f64,
    pub observed_edge_fraction: f64,
    pub estimate_wins: usize,
    pub replications: usize,
}

impl ExperimentResult {
    pub fn arms(&self) -> Vec<ArmSummary> {
        let n_arms = self
            .replications
            .iter()
            .map(|r| r.arm + 1)
            .max()
            .unwrap_or(0);
        (0..n_arms)
            .map(|a| {
                let reps: Vec<&ReplicationResult> =
                    self.replications.iter().filter(|r| r.arm == a).collect();
                let k = reps.len() as f64;
                let he = reps
                    .iter()
                    .map(|r| r.hellinger_estimate.unwrap_or(f64::NAN))
                    .sum::<f64>()
                    / k;
                let hc = reps.iter().map(|r| r.hellinger_complete_case).sum::<f64>() / k;
                ArmSummary {
                    arm: a,
                    coverage: reps[0].coverage.clone(),
                    hellinger_estimate: he,
                    hellinger_complete_case: hc,
                    reduction: 1.0 - he / hc,
                    observed_edge_fraction: reps
                        .iter()
                        .map(|r| r.observed_edge_fraction())
                        .sum::<f64>()
                        / k,
                    estimate_wins: reps
                        .iter()
                        .filter(|r| {
                            r.hellinger_estimate
                                .is_some_and(|e| e < r.hellinger_complete_case)
                        })
                        .count(),
                    replications: reps.len(),
                }
            })
            .collect()
    }

    /// Replication with the median estimate distance in each arm.
    pub fn median_replications(&self) -> Vec<&ReplicationResult> {
        let n_arms = self
            .replications
            .iter()
            .map(|r| r.arm + 1)
            .max()
            .unwrap_or(0);
        (0..n_arms)
            .filter_map(|a| {
                let mut reps: Vec<&ReplicationResult> =
                    self.replications.iter().filter(|r| r.arm == a).collect();
                reps.sort_by(|x, y| {
                    let key = |r: &ReplicationResult| {
                        r.hellinger_estimate.unwrap_or(r.hellinger_complete_case)
                    };
                    key(x)
                        .total_cmp(&key(y))
                        .then(x.replication.cmp(&y.replication))
                });
                reps.get(reps.len().saturating_sub(1) / 2).copied()
            })
            .collect()
    }
}

fn coverage_label(c: &[f64]) -> String {
    c.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("/")
}

/// Per-arm table: `fraction, hellinger_estimate, hellinger_complete_case,
/// reduction`, plus edge coverage and win counts.
pub fn write_results_csv<W: Write>(w: W, result: &ExperimentResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "fraction",
        "hellinger_estimate",
        "hellinger_complete_case",
        "reduction",
        "observed_edge_fraction",
        "estimate_wins",
        "replications",
    ])?;
    for a in result.arms() {
        wtr.write_record([
            coverage_label(&a.coverage),
            a.hellinger_estimate.to_string(),
            a.hellinger_complete_case.to_string(),
            a.reduction.to_string(),
            a.observed_edge_fraction.to_string(),
            a.estimate_wins.to_string(),
            a.replications.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row per replication with the same distance columns.
pub fn write_replications_csv<W: Write>(w: W, result: &ExperimentResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "fraction",
        "replication",
        "hellinger_estimate",
        "hellinger_complete_case",
        "reduction",
        "true_edges",
        "observed_edges",
    ])?;
    for r in &result.replications {
        wtr.write_record([
            coverage_label(&r.coverage),
            r.replication.to_string(),
            r.hellinger_estimate
                .map(|x| x.to_string())
                .unwrap_or_default(),
            r.hellinger_complete_case.to_string(),
            r.reduction().map(|x| x.to_string()).unwrap_or_default(),
            r.true_edges.to_string(),
            r.observed_edges.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-cell proportions: truth, complete case and posterior mean.
pub fn write_cells_csv<W: Write>(w: W, result: &ExperimentResult, names: &[String]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "fraction",
        "replication",
        "cell",
        "truth",
        "complete_case",
        "estimate",
        "parameter_mean",
    ])?;
    for r in &result.replications {
        for (k, name) in names.iter().enumerate() {
            let opt = |v: &[f64], k: usize| v.get(k).map(|x| x.to_string()).unwrap_or_default();
            wtr.write_record([
                coverage_label(&r.coverage),
                r.replication.to_string(),
                name.clone(),
                r.truth[k].to_string(),
                r.complete_case[k].to_string(),
                opt(&r.estimate, k),
                opt(&r.parameter_mean, k),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Per-replication convergence rollup over the parameter chains.
pub fn write_rollup_csv<W: Write>(w: W, result: &ExperimentResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "fraction",
        "replication",
        "chains",
        "not_computable",
        "median_abs_z",
        "share_abs_z_above_1.96",
        "median_ess",
    ])?;
    for r in &result.replications {
        let Some(ro) = &r.rollup else { continue };
        let med = |v: &[f64]| {
            if v.is_empty() {
                String::new()
            } else {
                let mut s = v.to_vec();
                s.sort_by(f64::total_cmp);
                crate::gibbs::quantile_sorted(&s, 0.5).to_string()
            }
        };
        let share = if ro.abs_z.is_empty() {
            String::new()
        } else {
            (ro.abs_z.iter().filter(|&&z| z > 1.96).count() as f64 / ro.abs_z.len() as f64)
                .to_string()
        };
        wtr.write_record([
            coverage_label(&r.coverage),
            r.replication.to_string(),
            ro.chains.to_string(),
            ro.not_computable.to_string(),
            med(&ro.abs_z),
            share,
            med(&ro.ess),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Comparison of CCM-sampled degree distributions with direct multinomial
/// draws.
#[derive(Debug, Clone, PartialEq)]
pub struct IllustrationResult {
    /// Degree counts per network, `samples × n`.
    pub ccm: Vec<Vec<u64>>,
    pub direct: Vec<Vec<u64>>,
    pub tests: Vec<BinTest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinTest {
    pub degree: usize,
    pub ccm_mean: f64,
    pub ccm_median: f64,
    pub ccm_sd: f64,
    pub ccm_ess: f64,
    pub direct_mean: f64,
    pub direct_median: f64,
    pub direct_sd: f64,
    pub z: f64,
    pub p_value: f64,
    pub reject: bool,
}

/// Highest degree bin compared.
pub const ILLUSTRATION_MAX_DEGREE: usize = 20;
pub const ILLUSTRATION_ALPHA: f64 = 0.01;

/// Two-sample z-test per degree bin. The CCM draws are serially correlated,
/// so their variance of the mean uses the effective sample size.
pub fn bin_tests(
    ccm: &[Vec<u64>],
    direct: &[Vec<u64>],
    max_degree: usize,
    alpha: f64,
) -> Vec<BinTest> {
    let bins = max_degree + 1;
    let threshold = alpha / bins as f64;
    let normal = Normal::standard();
    (0..bins)
        .map(|d| {
            let col = |s: &[Vec<u64>]| -> Vec<f64> {
                s.iter()
                    .map(|r| r.get(d).copied().unwrap_or(0) as f64)
                    .collect()
            };
            let a = col(ccm);
            let b = col(direct);
            let (ma, mb) = (diagnostics::mean(&a), diagnostics::mean(&b));
            let (va, vb) = (
                diagnostics::sample_variance(&a),
                diagnostics::sample_variance(&b),
            );
            let ess =
                if va < diagnostics::DEFAULT_MIN_VARIANCE || a.len() < diagnostics::MIN_CHAIN_LEN {
                    a.len() as f64
                } else {
                    diagnostics::ess(&a)
                        .unwrap_or(a.len() as f64)
                        .min(a.len() as f64)
                };
            let se = (va / ess + vb / b.len() as f64).sqrt();
            let (z, p) = if se > 0.0 {
                let z = (ma - mb) / se;
                (z, 2.0 * (1.0 - normal.cdf(z.abs())))
            } else if ma == mb {
                (0.0, 1.0)
            } else {
                (f64::INFINITY, 0.0)
            };
            let median = |v: &[f64]| {
                let mut s = v.to_vec();
                s.sort_by(f64::total_cmp);
                crate::gibbs::quantile_sorted(&s, 0.5)
            };
            BinTest {
                degree: d,
                ccm_mean: ma,
                ccm_median: median(&a),
                ccm_sd: va.sqrt(),
                ccm_ess: ess,
                direct_mean: mb,
                direct_median: median(&b),
                direct_sd: vb.sqrt(),
                z,
                p_value: p,
                reject: p < threshold,
            }
        })
        .collect()
}

/// Draws `count` degree distributions of `n` iid degrees from `theta`.
pub fn direct_multinomial_samples(
    theta: &[f64],
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<u64>>> {
    let dist = rand_distr::weighted::WeightedIndex::new(theta)
        .map_err(|e| CcmError::invalid(format!("theta: {e}")))?;
    let mut rng = chain_rng(seed);
    Ok((0..count)
        .map(|_| {
            let mut c = vec![0u64; theta.len()];
            for _ in 0..n {
                c[rand_distr::Distribution::sample(&dist, &mut rng)] += 1;
            }
            c
        })
        .collect())
}

/// CCM networks versus direct multinomial draws of the degree distribution.
pub fn run_illustration(plan: &ExperimentPlan, workers: usize) -> Result<IllustrationResult> {
    plan.validate()?;
    let spec = plan.degree_spec()?;
    let ClassLaw::MultinomialDegree { theta } = &spec.law else {
        unreachable!("degree law")
    };
    let cfg = SamplerConfig {
        seed: task_seed(plan.seed, 0, 0, STREAM_CCM),
        ..plan.sampler.clone()
    };
    let n = plan.n;
    let samples = plan.samples as u64;
    let (ccm, direct) = with_workers(workers, || {
        rayon::join(
            || generate_networks(&spec, n, samples, &cfg),
            || {
                direct_multinomial_samples(
                    theta,
                    n,
                    plan.samples,
                    task_seed(plan.seed, 0, 0, STREAM_DIRECT),
                )
            },
        )
    });
    let ccm: Vec<Vec<u64>> = ccm?.iter().map(Statistic::cells).collect();
    let direct = direct?;
    let tests = bin_tests(
        &ccm,
        &direct,
        ILLUSTRATION_MAX_DEGREE.min(n - 1),
        ILLUSTRATION_ALPHA,
    );
    Ok(IllustrationResult { ccm, direct, tests })
}

pub fn write_bin_tests_csv<W: Write>(w: W, tests: &[BinTest]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "degree",
        "ccm_mean",
        "ccm_median",
        "ccm_sd",
        "ccm_ess",
        "direct_mean",
        "direct_median",
        "direct_sd",
        "z",
        "p_value",
        "reject",
    ])?;
    for t in tests {
        wtr.write_record([
            t.degree.to_string(),
            t.ccm_mean.to_string(),
            t.ccm_median.to_string(),
            t.ccm_sd.to_string(),
            t.ccm_ess.to_string(),
            t.direct_mean.to_string(),
            t.direct_median.to_string(),
            t.direct_sd.to_string(),
            t.z.to_string(),
            t.p_value.to_string(),
            t.reject.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Raw degree-count dumps, one row per network: `sample, d0, d1, ..`.
pub fn write_samples_csv<W: Write>(w: W, samples: &[Vec<u64>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let width = samples.first().map(Vec::len).unwrap_or(0);
    let mut header = vec!["sample".to_string()];
    header.extend((0..width).map(|k| format!("d{k}")));
    wtr.write_record(&header)?;
    for (i, s) in samples.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(s.iter().map(|c| c.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

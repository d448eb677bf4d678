//! Gibbs sampling over the unobserved part of a network and the class-law
//! parameters. Each outer iteration runs a masked MH sweep over the unknown
//! dyads with the parameters fixed, then draws the parameters from their
//! conjugate full conditional given the completed network's statistic.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{CcmError, Result};
use crate::graph::{Network, ObservationMask};
use crate::model::{
    phi, statistic_header, CcmSpec, ClassLaw, CongruenceMapping, PriorSpec, Statistic,
};
use crate::rng::{chain_rng, ChainRng};
use crate::sampler::MhChain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub outer_iterations: u64,
    pub outer_burn_in: u64,
    /// Inner MH proposals per outer iteration, as a multiple of the number of
    /// unknown dyads.
    pub inner_sweep_factor: f64,
    pub tnt_edge_prob: f64,
    pub paper_faithful_acceptance: bool,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            outer_iterations: 1000,
            outer_burn_in: 100,
            inner_sweep_factor: 1.0,
            tnt_edge_prob: 0.5,
            paper_faithful_acceptance: false,
            seed: 0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iterations == 0 {
            return Err(CcmError::config("outer_iterations must be positive"));
        }
        if self.outer_burn_in >= self.outer_iterations {
            return Err(CcmError::config(format!(
                "outer_burn_in ({}) must be below outer_iterations ({})",
                self.outer_burn_in, self.outer_iterations
            )));
        }
        if !(self.inner_sweep_factor > 0.0 && self.inner_sweep_factor.is_finite()) {
            return Err(CcmError::config("inner_sweep_factor must be positive"));
        }
        if !(0.0..=1.0).contains(&self.tnt_edge_prob) {
            return Err(CcmError::config("tnt_edge_prob must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Inner MH proposals for a mask with `unknown` dyads.
    pub fn inner_steps(&self, unknown: usize) -> u64 {
        if unknown == 0 {
            0
        } else {
            ((self.inner_sweep_factor * unknown as f64).ceil() as u64).max(1)
        }
    }
}

/// State after one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub iteration: u64,
    /// `theta` for degree models, `(lambda, alpha..)` for mixing models.
    pub theta: Vec<f64>,
    /// Statistic of the completed network.
    pub statistic: Statistic,
}

/// Correction for the normalizing mass `W(θ)` that the conjugate updates
/// treat as constant. When supplied, the conjugate draw becomes an
/// independence proposal accepted with probability `W(θ_cur)/W(θ_new)`.
pub trait LogNormalizer {
    fn log_w(&self, law: &ClassLaw) -> Result<f64>;
}

/// Draws a Dirichlet vector by normalizing log-Gamma variates, so tiny
/// concentrations do not underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut logs = Vec::with_capacity(conc.len());
    for &a in conc {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(CcmError::invalid(format!("Dirichlet concentration {a}")));
        }
        logs.push(if a == 0.0 {
            f64::NEG_INFINITY
        } else {
            log_gamma_variate(a, rng)
        });
    }
    let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return Err(CcmError::invalid("Dirichlet concentrations are all zero"));
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / s).collect())
}

/// `ln X` for `X ~ Gamma(a, 1)`; for `a < 1` uses `X = Y·U^{1/a}`,
/// `Y ~ Gamma(a+1, 1)`.
fn log_gamma_variate<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a >= 1.0 {
        Gamma::new(a, 1.0).expect("positive shape").sample(rng).ln()
    } else {
        let y: f64 = Gamma::new(a + 1.0, 1.0)
            .expect("positive shape")
            .sample(rng);
        let u: f64 = 1.0 - rng.random::<f64>();
        y.ln() + u.ln() / a
    }
}

fn posterior_concentration(prior: &PriorSpec, counts: &[u64]) -> Result<Vec<f64>> {
    if prior.dirichlet_alpha0.len() != counts.len() {
        return Err(CcmError::Dimension(format!(
            "Dirichlet prior has {} entries, statistic has {}",
            prior.dirichlet_alpha0.len(),
            counts.len()
        )));
    }
    Ok(prior
        .dirichlet_alpha0
        .iter()
        .zip(counts)
        .map(|(a, &c)| a + c as f64)
        .collect())
}

/// `θ ~ Dirichlet(α₀ + D)`.
pub fn update_theta_degree<R: Rng + ?Sized>(
    counts: &[u64],
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    sample_dirichlet(&posterior_concentration(prior, counts)?, rng)
}

/// `λ ~ Gamma(shape + T, rate + 1)`, `α ~ Dirichlet(α₀ + MM)`.
pub fn update_theta_mixing<R: Rng + ?Sized>(
    cells: &[u64],
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    let total: u64 = cells.iter().sum();
    let shape = prior.gamma_shape + total as f64;
    let rate = prior.gamma_rate + 1.0;
    let lambda = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| CcmError::invalid(format!("Gamma posterior: {e}")))?
        .sample(rng)
        // a vanishing shape can round the draw to zero
        .max(f64::MIN_POSITIVE);
    let alpha = sample_dirichlet(&posterior_concentration(prior, cells)?, rng)?;
    Ok((lambda, alpha))
}

/// Conjugate draw of the class-law parameters given a statistic.
pub fn update_theta<R: Rng + ?Sized>(
    stat: &Statistic,
    spec: &CcmSpec,
    rng: &mut R,
) -> Result<ClassLaw> {
    match (stat, &spec.law) {
        (Statistic::Degree(d), ClassLaw::MultinomialDegree { .. }) => {
            let counts: Vec<u64> = d.counts.iter().map(|&c| c as u64).collect();
            Ok(ClassLaw::MultinomialDegree {
                theta: update_theta_degree(&counts, &spec.priors, rng)?,
            })
        }
        (Statistic::Mixing(mm), ClassLaw::PoissonMultinomialMixing { .. }) => {
            let (lambda, alpha) = update_theta_mixing(&mm.cells(), &spec.priors, rng)?;
            Ok(ClassLaw::PoissonMultinomialMixing { lambda, alpha })
        }
        _ => Err(CcmError::invalid(
            "posterior inference needs a multinomial degree or Poisson-multinomial mixing law",
        )),
    }
}

/// Posterior mean of the parameters given a statistic; used to initialize
/// the chain from complete-case data.
pub fn posterior_mean_law(stat: &Statistic, spec: &CcmSpec) -> Result<ClassLaw> {
    let cells = stat.cells();
    let conc = posterior_concentration(&spec.priors, &cells)?;
    let s: f64 = conc.iter().sum();
    if !(s > 0.0) {
        return Err(CcmError::config(
            "prior and data give an empty Dirichlet posterior",
        ));
    }
    let mean: Vec<f64> = conc.iter().map(|c| c / s).collect();
    match &spec.law {
        ClassLaw::MultinomialDegree { .. } => Ok(ClassLaw::MultinomialDegree { theta: mean }),
        ClassLaw::PoissonMultinomialMixing { .. } => {
            let total: u64 = cells.iter().sum();
            Ok(ClassLaw::PoissonMultinomialMixing {
                lambda: (spec.priors.gamma_shape + total as f64) / (spec.priors.gamma_rate + 1.0),
                alpha: mean,
            })
        }
        ClassLaw::Uniform => Err(CcmError::invalid(
            "posterior inference needs a multinomial degree or Poisson-multinomial mixing law",
        )),
    }
}

/// Resumable sampler state.
#[derive(Debug, Clone)]
pub struct GibbsState {
    chain: MhChain,
    mapping: CongruenceMapping,
    spec: CcmSpec,
    law: ClassLaw,
    iteration: u64,
    rng: ChainRng,
    seed: u64,
}

impl GibbsState {
    /// Starts with `g_u` empty and the parameters at their posterior mean
    /// given the observed network.
    pub fn new(
        observed: &Network,
        mask: &ObservationMask,
        spec: &CcmSpec,
        cfg: &GibbsConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        spec.validate(observed.n())?;
        if mask.n() != observed.n() {
            return Err(CcmError::Dimension(format!(
                "mask covers {} nodes, observed network has {}",
                mask.n(),
                observed.n()
            )));
        }
        if let Some(&(i, j)) = observed
            .edges()
            .iter()
            .find(|&&(i, j)| !mask.is_known(i, j))
        {
            return Err(CcmError::invalid(format!(
                "observed edge ({i},{j}) lies on an unknown dyad"
            )));
        }
        let law = posterior_mean_law(&phi(observed, &spec.mapping)?, spec)?;
        Self::assemble(
            observed.clone(),
            mask,
            spec,
            cfg,
            law,
            0,
            chain_rng(cfg.seed),
        )
    }

    fn assemble(
        g: Network,
        mask: &ObservationMask,
        spec: &CcmSpec,
        cfg: &GibbsConfig,
        law: ClassLaw,
        iteration: u64,
        rng: ChainRng,
    ) -> Result<Self> {
        let mut working = spec.clone();
        working.law = law.clone();
        let chain = MhChain::new(
            &working,
            g,
            Some(mask),
            cfg.tnt_edge_prob,
            cfg.paper_faithful_acceptance,
        )?;
        Ok(GibbsState {
            chain,
            mapping: spec.mapping.clone(),
            spec: spec.clone(),
            law,
            iteration,
            rng,
            seed: cfg.seed,
        })
    }

    pub fn network(&self) -> &Network {
        self.chain.network()
    }

    pub fn law(&self) -> &ClassLaw {
        &self.law
    }

    /// Replaces the current parameters, e.g. to impute under a fixed law.
    pub fn set_law(&mut self, law: ClassLaw) -> Result<()> {
        self.chain.set_law(&law)?;
        self.law = law;
        Ok(())
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// MH proposals and acceptances so far in this process.
    pub fn counts(&self) -> (u64, u64) {
        self.chain.counts()
    }

    /// Masked MH sweep of `steps` proposals with the parameters fixed.
    pub fn update_gu(&mut self, steps: u64) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        self.chain.set_law(&self.law)?;
        self.chain.resync();
        self.chain.run(steps, &mut self.rng)
    }

    /// Conjugate parameter draw, optionally filtered through a W correction.
    pub fn update_theta(&mut self, w: Option<&dyn LogNormalizer>) -> Result<Statistic> {
        let stat = phi(self.chain.network(), &self.mapping)?;
        let proposal = update_theta(&stat, &self.spec, &mut self.rng)?;
        match w {
            None => self.law = proposal,
            Some(w) => {
                let log_a = w.log_w(&self.law)? - w.log_w(&proposal)?;
                if log_a >= 0.0 || self.rng.random::<f64>().ln() < log_a {
                    self.law = proposal;
                }
            }
        }
        Ok(stat)
    }

    /// One outer iteration.
    pub fn step(
        &mut self,
        cfg: &GibbsConfig,
        w: Option<&dyn LogNormalizer>,
    ) -> Result<PosteriorSample> {
        let unknown = self.chain.proposer().toggleable_count(self.chain.network());
        self.update_gu(cfg.inner_steps(unknown))?;
        let statistic = self.update_theta(w)?;
        self.iteration += 1;
        Ok(PosteriorSample {
            iteration: self.iteration,
            theta: self.law.parameters(),
            statistic,
        })
    }

    /// Writes a text checkpoint: RNG position, parameters, and the current
    /// network's edges in internal order so a resumed run is bit-identical.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let g = self.chain.network();
        let mut s = String::new();
        let _ = writeln!(s, "{CHECKPOINT_HEADER}");
        let _ = writeln!(s, "master_seed {}", self.seed);
        let _ = writeln!(s, "rng_seed {}", hex(&self.rng.get_seed()));
        let _ = writeln!(s, "rng_stream {}", self.rng.get_stream());
        let _ = writeln!(s, "rng_word_pos {}", self.rng.get_word_pos());
        let _ = writeln!(s, "iteration {}", self.iteration);
        let _ = writeln!(s, "n {}", g.n());
        let params: Vec<String> = self
            .law
            .parameters()
            .iter()
            .map(|x| format!("{:016x}", x.to_bits()))
            .collect();
        let _ = writeln!(s, "params {}", params.join(" "));
        let _ = writeln!(s, "edges {}", g.edge_count());
        for &(i, j) in g.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Restores a state written by [`GibbsState::write_checkpoint`].
    pub fn read_checkpoint<R: BufRead>(
        reader: R,
        mask: &ObservationMask,
        spec: &CcmSpec,
        cfg: &GibbsConfig,
    ) -> Result<Self> {
        const NAME: &str = "checkpoint";
        let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines.iter().enumerate().map(|(k, l)| (k + 1, l.as_str()));
        let mut next = |key: &str| -> Result<(usize, String)> {
            let (ln, line) = it
                .next()
                .ok_or_else(|| CcmError::parse(NAME, lines.len(), format!("missing `{key}`")))?;
            if key.is_empty() {
                return Ok((ln, line.to_string()));
            }
            let rest = line
                .strip_prefix(key)
                .and_then(|r| {
                    r.strip_prefix(' ')
                        .or(if r.is_empty() { Some("") } else { None })
                })
                .ok_or_else(|| CcmError::parse(NAME, ln, format!("expected `{key}`")))?;
            Ok((ln, rest.to_string()))
        };
        let (ln, header) = next("")?;
        if header != CHECKPOINT_HEADER {
            return Err(CcmError::parse(
                NAME,
                ln,
                format!("unsupported header `{header}`"),
            ));
        }
        let num = |(ln, v): (usize, String)| -> Result<u128> {
            v.trim()
                .parse()
                .map_err(|_| CcmError::parse(NAME, ln, format!("bad number `{v}`")))
        };
        let master = num(next("master_seed")?)? as u64;
        if master != cfg.seed {
            return Err(CcmError::config(format!(
                "checkpoint was written with seed {master}, config has {}",
                cfg.seed
            )));
        }
        let (ln, seed_hex) = next("rng_seed")?;
        let seed_bytes =
            unhex(&seed_hex).ok_or_else(|| CcmError::parse(NAME, ln, "bad rng seed"))?;
        let stream = num(next("rng_stream")?)? as u64;
        let word_pos = num(next("rng_word_pos")?)?;
        let iteration = num(next("iteration")?)? as u64;
        let n = num(next("n")?)? as usize;
        let (ln, params) = next("params")?;
        let params: Vec<f64> = params
            .split_whitespace()
            .map(|t| u64::from_str_radix(t, 16).map(f64::from_bits))
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CcmError::parse(NAME, ln, "bad parameter encoding"))?;
        let m = num(next("edges")?)? as usize;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, line) = next("")?;
            let mut toks = line.split_whitespace().map(str::parse::<usize>);
            match (toks.next(), toks.next(), toks.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => edges.push((i, j)),
                _ => return Err(CcmError::parse(NAME, ln, format!("bad edge `{line}`"))),
            }
        }
        let g = Network::from_edges(n, edges)?;
        let law = match &spec.law {
            ClassLaw::MultinomialDegree { .. } => ClassLaw::MultinomialDegree { theta: params },
            ClassLaw::PoissonMultinomialMixing { .. } => {
                let (lambda, alpha) = params
                    .split_first()
                    .ok_or_else(|| CcmError::invalid("checkpoint has no parameters"))?;
                ClassLaw::PoissonMultinomialMixing {
                    lambda: *lambda,
                    alpha: alpha.to_vec(),
                }
            }
            ClassLaw::Uniform => return Err(CcmError::invalid("uniform law has no posterior")),
        };
        let mut rng = ChainRng::from_seed(seed_bytes);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        Self::assemble(g, mask, spec, cfg, law, iteration, rng)
    }
}

const CHECKPOINT_HEADER: &str = "ccm-gibbs-checkpoint v1";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<[u8; 32]> {
    let s = s.trim();
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (k, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * k..2 * k + 2], 16).ok()?;
    }
    Some(out)
}

/// Output of a Gibbs run.
#[derive(Debug, Clone)]
pub struct GibbsOutput {
    /// One sample per outer iteration, burn-in included.
    pub samples: Vec<PosteriorSample>,
    pub proposed: u64,
    pub accepted: u64,
    pub final_network: Network,
}

/// Runs the sampler from scratch.
pub fn gibbs_run(
    observed: &Network,
    mask: &ObservationMask,
    spec: &CcmSpec,
    cfg: &GibbsConfig,
) -> Result<GibbsOutput> {
    gibbs_run_with(observed, mask, spec, cfg, None)
}

pub fn gibbs_run_with(
    observed: &Network,
    mask: &ObservationMask,
    spec: &CcmSpec,
    cfg: &GibbsConfig,
    w: Option<&dyn LogNormalizer>,
) -> Result<GibbsOutput> {
    let state = GibbsState::new(observed, mask, spec, cfg)?;
    gibbs_continue(state, cfg, w)
}

/// Runs `state` up to `cfg.outer_iterations`.
pub fn gibbs_continue(
    mut state: GibbsState,
    cfg: &GibbsConfig,
    w: Option<&dyn LogNormalizer>,
) -> Result<GibbsOutput> {
    let mut samples =
        Vec::with_capacity(cfg.outer_iterations.saturating_sub(state.iteration) as usize);
    while state.iteration < cfg.outer_iterations {
        samples.push(state.step(cfg, w)?);
    }
    let (proposed, accepted) = state.counts();
    Ok(GibbsOutput {
        samples,
        proposed,
        accepted,
        final_network: state.chain.into_network(),
    })
}

/// Posterior means and 2.5/50/97.5% quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub retained: usize,
    pub param_names: Vec<String>,
    pub param_mean: Vec<f64>,
    pub param_quantiles: Vec<[f64; 3]>,
    pub stat_names: Vec<String>,
    pub stat_mean: Vec<f64>,
    pub stat_quantiles: Vec<[f64; 3]>,
}

pub const SUMMARY_PROBS: [f64; 3] = [0.025, 0.5, 0.975];

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn column_summary(cols: Vec<Vec<f64>>) -> (Vec<f64>, Vec<[f64; 3]>) {
    cols.into_iter()
        .map(|mut c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.sort_by(f64::total_cmp);
            (m, SUMMARY_PROBS.map(|p| quantile_sorted(&c, p)))
        })
        .unzip()
}

fn columns<F: Fn(&PosteriorSample) -> Vec<f64>>(
    samples: &[PosteriorSample],
    f: F,
) -> Vec<Vec<f64>> {
    let width = samples.first().map(|s| f(s).len()).unwrap_or(0);
    let mut cols = vec![Vec::with_capacity(samples.len()); width];
    for s in samples {
        for (c, v) in cols.iter_mut().zip(f(s)) {
            c.push(v);
        }
    }
    cols
}

/// Summarizes the samples after the first `burn_in`.
pub fn summarize(
    samples: &[PosteriorSample],
    burn_in: usize,
    spec: &CcmSpec,
    n: usize,
) -> Result<PosteriorSummary> {
    if burn_in >= samples.len() {
        return Err(CcmError::invalid(format!(
            "burn-in {burn_in} leaves no retained samples out of {}",
            samples.len()
        )));
    }
    let kept = &samples[burn_in..];
    let (param_mean, param_quantiles) = column_summary(columns(kept, |s| s.theta.clone()));
    let (stat_mean, stat_quantiles) = column_summary(columns(kept, |s| {
        s.statistic.cells().iter().map(|&c| c as f64).collect()
    }));
    Ok(PosteriorSummary {
        retained: kept.len(),
        param_names: param_header(spec, n),
        param_mean,
        param_quantiles,
        stat_names: statistic_header(&spec.mapping, n),
        stat_mean,
        stat_quantiles,
    })
}

/// Names of the parameter columns.
pub fn param_header(spec: &CcmSpec, n: usize) -> Vec<String> {
    match &spec.mapping {
        CongruenceMapping::DegreeDistribution => (0..n).map(|k| format!("theta_{k}")).collect(),
        CongruenceMapping::MixingMatrix(c) => std::iter::once("lambda".to_string())
            .chain(crate::model::cell_names(c.q(), "alpha"))
            .collect(),
    }
}

/// Chain CSV: `iteration`, parameter columns, statistic columns.
pub fn write_posterior_csv<W: Write>(
    w: W,
    spec: &CcmSpec,
    n: usize,
    samples: &[PosteriorSample],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["iteration".to_string()];
    header.extend(param_header(spec, n));
    header.extend(statistic_header(&spec.mapping, n));
    wtr.write_record(&header)?;
    for s in samples {
        let mut row = vec![s.iteration.to_string()];
        row.extend(s.theta.iter().map(|x| x.to_string()));
        row.extend(s.statistic.cells().iter().map(|c| c.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: W, summary: &PosteriorSummary) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["name", "mean", "q025", "q500", "q975"])?;
    let rows = summary
        .param_names
        .iter()
        .zip(summary.param_mean.iter().zip(&summary.param_quantiles))
        .chain(
            summary
                .stat_names
                .iter()
                .zip(summary.stat_mean.iter().zip(&summary.stat_quantiles)),
        );
    for (name, (m, q)) in rows {
        wtr.write_record([
            name.clone(),
            m.to_string(),
            q[0].to_string(),
            q[1].to_string(),
            q[2].to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

//! Run configuration files. Every table rejects unknown keys; command-line
//! flags are applied on top after loading.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use ccm_core::gibbs::GibbsConfig;
use ccm_core::graph::{read_labels, NodeClassification};
use ccm_core::harness::build_nb_theta;
use ccm_core::model::{normalize, CcmSpec, ClassLaw, CongruenceMapping, PriorSpec};
use ccm_core::sampler::SamplerConfig;
use ccm_core::vgl::AmbiguityPolicy;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MappingKind {
    #[default]
    Degree,
    Mixing,
}

/// CCM settings as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mapping: MappingKind,
    /// Node count. Inferred from the inputs when absent.
    pub n: Option<usize>,
    /// Use the uniform class law.
    pub uniform: bool,
    /// Explicit degree probabilities; padded with zeros to length n.
    pub theta: Vec<f64>,
    /// Negative binomial degree law, used when `theta` is empty.
    pub nb_size: f64,
    pub nb_mu: f64,
    /// Mixing: contiguous class sizes, used when `labels` is absent.
    pub class_sizes: Vec<usize>,
    /// Mixing: `node,label` file.
    pub labels: Option<PathBuf>,
    pub lambda: f64,
    /// Mixing cell probabilities in upper-triangle order; uniform when empty.
    pub alpha: Vec<f64>,
    pub prior_alpha0: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mapping: MappingKind::Degree,
            n: None,
            uniform: false,
            theta: Vec::new(),
            nb_size: 1.02,
            nb_mu: 6.19,
            class_sizes: Vec::new(),
            labels: None,
            lambda: 50.0,
            alpha: Vec::new(),
            prior_alpha0: 1e-4,
            gamma_shape: 1e-3,
            gamma_rate: 1e-3,
        }
    }
}

pub fn open_input(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))
}

impl ModelConfig {
    /// Node classification for mixing models, read from `labels` or built
    /// from `class_sizes`. `n_hint` is used when `n` is unset.
    pub fn classification(
        &self,
        n_hint: Option<usize>,
    ) -> Result<(NodeClassification, Vec<String>), Failure> {
        if let Some(path) = &self.labels {
            let n = match self.n.or(n_hint) {
                Some(n) => n,
                None => count_label_rows(path)?,
            };
            let name = path.display().to_string();
            return Ok(read_labels(open_input(path)?, n, &name)?);
        }
        if self.class_sizes.is_empty() {
            return Err(Failure::Usage(
                "mixing models need `labels` or `class_sizes`".into(),
            ));
        }
        let c = NodeClassification::from_class_sizes(&self.class_sizes)?;
        if let Some(n) = self.n.or(n_hint) {
            if n != c.n() {
                return Err(Failure::Data(format!(
                    "class sizes cover {} nodes but n = {n}",
                    c.n()
                )));
            }
        }
        let names = (0..c.q()).map(|k| k.to_string()).collect();
        Ok((c, names))
    }

    /// Builds the CCM on `n` nodes (mixing models take n from the
    /// classification).
    pub fn spec(&self, n_hint: Option<usize>) -> Result<(CcmSpec, usize, Vec<String>), Failure> {
        match self.mapping {
            MappingKind::Degree => {
                let n = self
                    .n
                    .or(n_hint)
                    .ok_or_else(|| Failure::Usage("node count `n` is required".into()))?;
                let law = if self.uniform {
                    ClassLaw::Uniform
                } else if self.theta.is_empty() {
                    ClassLaw::MultinomialDegree {
                        theta: build_nb_theta(self.nb_size, self.nb_mu, n)?,
                    }
                } else {
                    if self.theta.len() > n {
                        return Err(Failure::Data(format!(
                            "theta has {} entries but n = {n}",
                            self.theta.len()
                        )));
                    }
                    let mut t = self.theta.clone();
                    t.resize(n, 0.0);
                    ClassLaw::MultinomialDegree {
                        theta: normalize(&t)?,
                    }
                };
                let spec = CcmSpec::new(CongruenceMapping::DegreeDistribution, law, self.priors(n));
                spec.validate(n)?;
                Ok((spec, n, Vec::new()))
            }
            MappingKind::Mixing => {
                let (c, names) = self.classification(n_hint)?;
                let n = c.n();
                let cells = c.cell_count();
                let law = if self.uniform {
                    ClassLaw::Uniform
                } else {
                    let alpha = if self.alpha.is_empty() {
                        vec![1.0 / cells as f64; cells]
                    } else if self.alpha.len() != cells {
                        return Err(Failure::Data(format!(
                            "{} classes need {cells} alpha entries, got {}",
                            c.q(),
                            self.alpha.len()
                        )));
                    } else {
                        normalize(&self.alpha)?
                    };
                    ClassLaw::PoissonMultinomialMixing {
                        lambda: self.lambda,
                        alpha,
                    }
                };
                let spec =
                    CcmSpec::new(CongruenceMapping::MixingMatrix(c), law, self.priors(cells));
                spec.validate(n)?;
                Ok((spec, n, names))
            }
        }
    }

    fn priors(&self, dim: usize) -> PriorSpec {
        PriorSpec {
            dirichlet_alpha0: vec![self.prior_alpha0; dim],
            gamma_shape: self.gamma_shape,
            gamma_rate: self.gamma_rate,
        }
    }
}

fn count_label_rows(path: &Path) -> Result<usize, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .count())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub save_networks: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub model: ModelConfig,
    pub gibbs: GibbsConfig,
    pub edges: Option<PathBuf>,
    /// Sampled node ids; all dyads are known when absent.
    pub mask: Option<PathBuf>,
    /// Parameters to draw trace plots for; a default handful when empty.
    pub traces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WphiConfig {
    pub mapping: MappingKind,
    pub n: usize,
    /// Degree study base: negative binomial size and mean.
    pub nb_size: f64,
    pub nb_mu: f64,
    /// Mixing study base.
    pub class_sizes: Vec<usize>,
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Independent harvesting chains, each run with `sampler`.
    pub chains: usize,
    pub sampler: SamplerConfig,
}

impl WphiConfig {
    /// Mixing study at desk scale: many short chains from the empty network.
    pub fn desk() -> Self {
        WphiConfig {
            mapping: MappingKind::Mixing,
            n: 50,
            nb_size: 1000.0,
            nb_mu: 3.0,
            class_sizes: vec![25, 25],
            lambda: 50.0,
            alpha: vec![1.0 / 3.0; 3],
            deltas: ccm_core::wphi::DEFAULT_DELTAS.to_vec(),
            chains: 500,
            sampler: SamplerConfig {
                iterations: 20_000,
                burn_in: 0,
                thin: 10,
                ..Default::default()
            },
        }
    }

    /// One long chain with 100,000 burn-in steps and every 1,000th network
    /// kept thereafter.
    pub fn paper() -> Self {
        WphiConfig {
            chains: 1,
            sampler: SamplerConfig::default(),
            ..WphiConfig::desk()
        }
    }
}

impl Default for WphiConfig {
    fn default() -> Self {
        WphiConfig::desk()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RealizeMethod {
    #[default]
    Removal,
    Direct,
    Random,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RealizeConfig {
    pub matrix: Option<PathBuf>,
    pub class_sizes: Vec<usize>,
    pub method: RealizeMethod,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VglConfig {
    pub fasta: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub threshold: f64,
    pub ambiguity: AmbiguityPolicy,
}

impl Default for VglConfig {
    fn default() -> Self {
        VglConfig {
            fasta: None,
            attributes: None,
            threshold: ccm_core::vgl::DEFAULT_THRESHOLD,
            ambiguity: AmbiguityPolicy::Skip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub chain: Option<PathBuf>,
    /// Leading rows to drop.
    pub burn_in: usize,
    /// Columns to plot; all columns get diagnostics.
    pub columns: Vec<String>,
    pub min_variance: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            chain: None,
            burn_in: 0,
            columns: Vec::new(),
            min_variance: ccm_core::diagnostics::DEFAULT_MIN_VARIANCE,
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Reads a TOML file and lays its keys over `base`. Unknown keys are
/// rejected.
pub fn load_over<T: Serialize + DeserializeOwned>(path: &Path, base: &T) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let bad = |e: &dyn std::fmt::Display| {
        let msg = e.to_string();
        Failure::Data(format!(
            "{}: {}",
            path.display(),
            msg.lines()
                .filter(|l| !l.trim().is_empty())
                .collect::<Vec<_>>()
                .join("; ")
        ))
    };
    let over: toml::Value = toml::from_str(&text).map_err(|e| bad(&e))?;
    let mut merged = toml::Value::try_from(base).map_err(|e| Failure::Internal(e.to_string()))?;
    merge(&mut merged, over);
    merged.try_into().map_err(|e: toml::de::Error| bad(&e))
}

use std::io::BufRead;
use std::path::{Path, PathBuf};

use ccm_core::diagnostics::{self, Trace};
use ccm_core::gibbs::{self, GibbsState};
use ccm_core::graph::{read_edge_list, read_mask, Network, ObservationMask};
use ccm_core::graphical::{self, MmTarget};
use ccm_core::harness::{self, ExperimentPlan, ExperimentResult, Profile, Scenario};
use ccm_core::model::{statistic_header, CongruenceMapping};
use ccm_core::rng::chain_rng;
use ccm_core::sampler::{self, SamplerConfig};
use ccm_core::svg;
use ccm_core::vgl;
use ccm_core::wphi::{self, StudyBase};
use serde::Serialize;

use crate::config::*;
use crate::failure::Failure;
use crate::output::{Manifest, OutDir};
use crate::*;

impl ModelArgs {
    fn apply(&self, m: &mut ModelConfig) {
        if let Some(v) = self.mapping {
            m.mapping = v;
        }
        if self.n.is_some() {
            m.n = self.n;
        }
        if self.uniform {
            m.uniform = true;
        }
        if let Some(v) = &self.theta {
            m.theta = v.clone();
        }
        if let Some(v) = self.nb_size {
            m.nb_size = v;
        }
        if let Some(v) = self.nb_mu {
            m.nb_mu = v;
        }
        if let Some(v) = &self.class_sizes {
            m.class_sizes = v.clone();
        }
        if self.labels.is_some() {
            m.labels = self.labels.clone();
        }
        if let Some(v) = self.lambda {
            m.lambda = v;
        }
        if let Some(v) = &self.alpha {
            m.alpha = v.clone();
        }
        if let Some(v) = self.prior_alpha0 {
            m.prior_alpha0 = v;
        }
        if let Some(v) = self.gamma_shape {
            m.gamma_shape = v;
        }
        if let Some(v) = self.gamma_rate {
            m.gamma_rate = v;
        }
    }
}

impl SamplerArgs {
    fn apply(&self, s: &mut SamplerConfig) {
        if let Some(v) = self.iterations {
            s.iterations = v;
        }
        if let Some(v) = self.burn_in {
            s.burn_in = v;
        }
        if let Some(v) = self.thin {
            s.thin = v;
        }
        if let Some(v) = self.tnt_edge_prob {
            s.tnt_edge_prob = v;
        }
        if self.paper_faithful {
            s.paper_faithful_acceptance = true;
        }
    }
}

fn load_or<T: Serialize + serde::de::DeserializeOwned>(
    path: &Option<PathBuf>,
    base: T,
) -> Result<T, Failure> {
    match path {
        Some(p) => load_over(p, &base),
        None => Ok(base),
    }
}

fn inputs<C: Serialize>(
    m: &mut Manifest<'_, C>,
    paths: &[Option<&PathBuf>],
) -> Result<(), Failure> {
    for p in paths.iter().flatten() {
        m.input(p)?;
    }
    Ok(())
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf, Failure> {
    p.as_ref().ok_or_else(|| {
        Failure::Usage(format!(
            "--{flag} is required (or set `{flag}` in the config)"
        ))
    })
}

pub fn generate(g: &Global, a: GenerateArgs) -> Result<(), Failure> {
    let mut cfg = load_or(&a.config, GenerateConfig::default())?;
    a.model.apply(&mut cfg.model);
    a.sampler.apply(&mut cfg.sampler);
    cfg.save_networks |= a.save_networks;
    if let Some(s) = g.seed {
        cfg.sampler.seed = s;
    }
    cfg.sampler.validate()?;
    let (spec, n, _) = cfg.model.spec(None)?;
    let mut manifest = Manifest::new("generate", cfg.sampler.seed, g.profile.name(), &cfg);
    inputs(
        &mut manifest,
        &[a.config.as_ref(), cfg.model.labels.as_ref()],
    )?;

    let stream = sampler::mh_run_with(
        &spec,
        Network::empty(n),
        &cfg.sampler,
        None,
        cfg.save_networks,
    )?;
    let out = OutDir::create(&g.out)?;
    out.write("chain.csv", |w| {
        Ok(sampler::write_chain_csv(w, &spec, n, &stream)?)
    })?;
    if let Some(nets) = &stream.networks {
        for (t, net) in stream.iterations.iter().zip(nets) {
            out.write(&format!("networks/network_{t:09}.txt"), |w| {
                Ok(net.write_edge_list(w)?)
            })?;
        }
    }
    out.write_str(
        "run.csv",
        &format!(
            "retained,proposed,accepted,acceptance_rate\n{},{},{},{}\n",
            stream.len(),
            stream.proposed,
            stream.accepted,
            stream.acceptance_rate()
        ),
    )?;
    manifest.write(&out)
}

fn max_id_in_mask(path: &Path) -> Result<usize, Failure> {
    let mut max = 0;
    for line in open_input(path)?.lines() {
        let line = line.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        if let Ok(v) = line.trim().parse::<usize>() {
            max = max.max(v + 1);
        }
    }
    Ok(max)
}

pub fn infer(g: &Global, a: InferArgs) -> Result<(), Failure> {
    let mut cfg = load_or(&a.config, InferConfig::default())?;
    a.model.apply(&mut cfg.model);
    if a.edges.is_some() {
        cfg.edges = a.edges.clone();
    }
    if a.mask.is_some() {
        cfg.mask = a.mask.clone();
    }
    if let Some(t) = &a.traces {
        cfg.traces = t.clone();
    }
    let gc = &mut cfg.gibbs;
    if let Some(v) = a.outer_iterations {
        gc.outer_iterations = v;
    }
    if let Some(v) = a.outer_burn_in {
        gc.outer_burn_in = v;
    }
    if let Some(v) = a.inner_sweep_factor {
        gc.inner_sweep_factor = v;
    }
    if let Some(v) = a.tnt_edge_prob {
        gc.tnt_edge_prob = v;
    }
    gc.paper_faithful_acceptance |= a.paper_faithful;
    if let Some(s) = g.seed {
        gc.seed = s;
    }
    cfg.gibbs.validate()?;

    let edges_path = required(&cfg.edges, "edges")?.clone();
    let edges_name = edges_path.display().to_string();
    let n = match cfg.model.n {
        Some(n) => n,
        None => {
            let mut n = read_edge_list(open_input(&edges_path)?, None, &edges_name)?.n();
            if let Some(m) = &cfg.mask {
                n = n.max(max_id_in_mask(m)?);
            }
            if cfg.model.mapping == MappingKind::Mixing && cfg.model.labels.is_some() {
                n = cfg.model.classification(None)?.0.n();
            }
            n
        }
    };
    let (spec, n, _) = cfg.model.spec(Some(n))?;
    let observed = read_edge_list(open_input(&edges_path)?, Some(n), &edges_name)?;
    let mask = match &cfg.mask {
        Some(p) => read_mask(open_input(p)?, n, &p.display().to_string())?,
        None => ObservationMask::all_known(n),
    };

    let mut manifest = Manifest::new("infer", cfg.gibbs.seed, g.profile.name(), &cfg);
    inputs(
        &mut manifest,
        &[
            a.config.as_ref(),
            Some(&edges_path),
            cfg.mask.as_ref(),
            cfg.model.labels.as_ref(),
            a.resume.as_ref(),
        ],
    )?;

    let mut state = match &a.resume {
        Some(p) => GibbsState::read_checkpoint(open_input(p)?, &mask, &spec, &cfg.gibbs)?,
        None => GibbsState::new(&observed, &mask, &spec, &cfg.gibbs)?,
    };
    let start = state.iteration();
    let mut samples = Vec::new();
    while state.iteration() < cfg.gibbs.outer_iterations {
        samples.push(state.step(&cfg.gibbs, None)?);
    }

    let out = OutDir::create(&g.out)?;
    out.write("posterior.csv", |w| {
        Ok(gibbs::write_posterior_csv(w, &spec, n, &samples)?)
    })?;
    out.write("checkpoint.txt", |w| Ok(state.write_checkpoint(w)?))?;
    out.write("network.txt", |w| Ok(state.network().write_edge_list(w)?))?;
    let (proposed, accepted) = state.counts();
    out.write_str(
        "run.csv",
        &format!("start_iteration,outer_iterations,proposed,accepted\n{start},{},{proposed},{accepted}\n", state.iteration()),
    )?;

    let burn = cfg.gibbs.outer_burn_in.saturating_sub(start) as usize;
    if burn < samples.len() {
        let summary = gibbs::summarize(&samples, burn, &spec, n)?;
        out.write("summary.csv", |w| {
            Ok(gibbs::write_summary_csv(w, &summary)?)
        })?;
        let kept = &samples[burn..];
        if kept.len() >= diagnostics::MIN_CHAIN_LEN {
            let names = gibbs::param_header(&spec, n);
            let traces: Vec<Trace> = names
                .iter()
                .enumerate()
                .map(|(j, name)| Trace {
                    param_id: name.clone(),
                    values: kept.iter().map(|s| s.theta[j]).collect(),
                    truth: None,
                })
                .collect();
            let selected: Vec<String> = if cfg.traces.is_empty() {
                names.iter().take(6).cloned().collect()
            } else {
                cfg.traces.clone()
            };
            diagnostics::trace_report(
                &traces,
                Some(&selected),
                diagnostics::DEFAULT_MIN_VARIANCE,
                out.root(),
            )?;
        }
    }
    manifest.write(&out)
}

fn scenario_of(a: Option<ScenarioArg>) -> Option<Scenario> {
    a.map(|s| match s {
        ScenarioArg::Illustration => Scenario::Illustration,
        ScenarioArg::Degree => Scenario::DegreeRecovery,
        ScenarioArg::Mixing => Scenario::MixingRecovery,
    })
}

fn peek_scenario(path: &Path) -> Result<Option<Scenario>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let v: toml::Value =
        toml::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    match v.get("scenario") {
        Some(s) => s
            .clone()
            .try_into()
            .map(Some)
            .map_err(|e: toml::de::Error| {
                Failure::Data(format!("{}: scenario: {e}", path.display()))
            }),
        None => Ok(None),
    }
}

pub fn simulate(g: &Global, a: SimulateArgs) -> Result<(), Failure> {
    let scenario = match (scenario_of(a.scenario), &a.config) {
        (Some(s), _) => s,
        (None, Some(p)) => peek_scenario(p)?.unwrap_or(Scenario::DegreeRecovery),
        (None, None) => Scenario::DegreeRecovery,
    };
    let profile = match g.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    };
    let mut plan = load_or(&a.config, ExperimentPlan::preset(scenario, profile))?;
    plan.scenario = scenario;
    if let Some(v) = a.n {
        plan.n = v;
    }
    if let Some(v) = a.replications {
        plan.replications = v;
    }
    if let Some(v) = &a.fractions {
        plan.fractions = v.clone();
        plan.class_coverage.clear();
    }
    if let Some(v) = a.outer_iterations {
        plan.gibbs.outer_iterations = v;
    }
    if let Some(v) = a.outer_burn_in {
        plan.gibbs.outer_burn_in = v;
    }
    if let Some(v) = a.prior_alpha0 {
        plan.prior_alpha0 = v;
    }
    if let Some(v) = a.samples {
        plan.samples = v;
        plan.sampler.iterations = plan.sampler.burn_in + v as u64 * plan.sampler.thin;
    }
    if a.no_infer {
        plan.infer = false;
    }
    if let Some(s) = g.seed {
        plan.seed = s;
    }
    plan.validate()?;
    let mut manifest = Manifest::new("simulate", plan.seed, g.profile.name(), &plan);
    inputs(&mut manifest, &[a.config.as_ref()])?;

    let out = OutDir::create(&g.out)?;
    match scenario {
        Scenario::Illustration => {
            let r = harness::run_illustration(&plan, g.workers)?;
            out.write("samples_ccm.csv", |w| {
                Ok(harness::write_samples_csv(w, &r.ccm)?)
            })?;
            out.write("samples_direct.csv", |w| {
                Ok(harness::write_samples_csv(w, &r.direct)?)
            })?;
            out.write("bin_tests.csv", |w| {
                Ok(harness::write_bin_tests_csv(w, &r.tests)?)
            })?;
            let bins = r.tests.len();
            let column =
                |s: &[Vec<u64>], d: usize| s.iter().map(|row| row[d] as f64).collect::<Vec<_>>();
            let cats: Vec<String> = (0..bins).map(|d| d.to_string()).collect();
            let doc = svg::box_plot(
                "Nodes by degree: CCM vs direct multinomial",
                &cats,
                &[
                    ("CCM".into(), (0..bins).map(|d| column(&r.ccm, d)).collect()),
                    (
                        "multinomial".into(),
                        (0..bins).map(|d| column(&r.direct, d)).collect(),
                    ),
                ],
            );
            out.write_str("illustration.svg", &doc)?;
        }
        Scenario::DegreeRecovery => {
            let r = harness::run_degree_recovery(&plan, g.workers)?;
            write_recovery(&out, &plan, &r)?;
        }
        Scenario::MixingRecovery => {
            let r = harness::run_mixing_recovery(&plan, g.workers)?;
            write_recovery(&out, &plan, &r)?;
        }
    }
    manifest.write(&out)
}

/// Degree bins shown in per-degree tables and plots.
const SHOWN_DEGREES: usize = 35;

fn arm_label(c: &[f64]) -> String {
    c.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("_")
}

fn write_recovery(
    out: &OutDir,
    plan: &ExperimentPlan,
    r: &ExperimentResult,
) -> Result<(), Failure> {
    out.write("results.csv", |w| Ok(harness::write_results_csv(w, r)?))?;
    out.write("replications.csv", |w| {
        Ok(harness::write_replications_csv(w, r)?)
    })?;
    if plan.infer {
        out.write("diagnostics.csv", |w| Ok(harness::write_rollup_csv(w, r)?))?;
    }
    let degree = plan.scenario == Scenario::DegreeRecovery;
    let names: Vec<String> = if degree {
        (0..plan.n.min(SHOWN_DEGREES))
            .map(|k| format!("d{k}"))
            .collect()
    } else {
        let classes = ccm_core::graph::NodeClassification::from_class_sizes(&plan.class_sizes()?)?;
        statistic_header(&CongruenceMapping::MixingMatrix(classes), plan.n)
    };
    out.write("cells.csv", |w| Ok(harness::write_cells_csv(w, r, &names)?))?;

    // distributions are plotted as node counts for degrees and as
    // proportions for mixing cells
    let scale = if degree { plan.n as f64 } else { 1.0 };
    let arms = r.arms();
    for arm in &arms {
        let reps: Vec<_> = r.replications.iter().filter(|x| x.arm == arm.arm).collect();
        let col = |f: &dyn Fn(&harness::ReplicationResult) -> &Vec<f64>, k: usize| {
            reps.iter()
                .filter_map(|x| f(x).get(k).map(|v| v * scale))
                .collect::<Vec<f64>>()
        };
        let mut series = vec![
            (
                "truth".to_string(),
                (0..names.len()).map(|k| col(&|x| &x.truth, k)).collect(),
            ),
            (
                "complete case".to_string(),
                (0..names.len())
                    .map(|k| col(&|x| &x.complete_case, k))
                    .collect(),
            ),
        ];
        if plan.infer {
            series.push((
                "estimate".to_string(),
                (0..names.len()).map(|k| col(&|x| &x.estimate, k)).collect(),
            ));
        }
        let label = arm_label(&arm.coverage);
        let doc = svg::box_plot(
            &format!("Sampling fraction {}", label.replace('_', "/")),
            &names,
            &series,
        );
        out.write_str(
            &format!("boxplot_s{}.svg", diagnostics::sanitize(&label)),
            &doc,
        )?;
    }
    if plan.infer {
        for rep in r.median_replications() {
            let truth = if degree {
                rep.truth.get(2).map(|p| p * plan.n as f64)
            } else {
                rep.truth.first().map(|p| p * rep.true_edges as f64)
            };
            let title = format!(
                "{} at sampling fraction {} (replication {})",
                if degree {
                    "Nodes with degree 2"
                } else {
                    "Edges in the first mixing cell"
                },
                arm_label(&rep.coverage).replace('_', "/"),
                rep.replication
            );
            let doc = svg::trace_plot(&title, &rep.trace, truth);
            out.write_str(
                &format!(
                    "trace_s{}.svg",
                    diagnostics::sanitize(&arm_label(&rep.coverage))
                ),
                &doc,
            )?;
        }
    }
    let cats: Vec<String> = arms
        .iter()
        .map(|x| arm_label(&x.coverage).replace('_', "/"))
        .collect();
    let per_arm = |f: &dyn Fn(&harness::ReplicationResult) -> Option<f64>| {
        arms.iter()
            .map(|arm| {
                r.replications
                    .iter()
                    .filter(|x| x.arm == arm.arm)
                    .filter_map(f)
                    .collect()
            })
            .collect::<Vec<Vec<f64>>>()
    };
    let mut series = vec![(
        "complete case".to_string(),
        per_arm(&|x| Some(x.hellinger_complete_case)),
    )];
    if plan.infer {
        series.push(("estimate".to_string(), per_arm(&|x| x.hellinger_estimate)));
    }
    out.write_str(
        "hellinger.svg",
        &svg::box_plot("Hellinger distance to the truth", &cats, &series),
    )
}

pub fn wphi_study(g: &Global, a: WphiArgs) -> Result<(), Failure> {
    let base = match g.profile {
        ProfileArg::Desk => WphiConfig::desk(),
        ProfileArg::Paper => WphiConfig::paper(),
    };
    let mut cfg = load_or(&a.config, base)?;
    if let Some(v) = a.mapping {
        cfg.mapping = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.nb_size {
        cfg.nb_size = v;
    }
    if let Some(v) = a.nb_mu {
        cfg.nb_mu = v;
    }
    if let Some(v) = &a.class_sizes {
        cfg.class_sizes = v.clone();
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = &a.alpha {
        cfg.alpha = v.clone();
    }
    if let Some(v) = &a.deltas {
        cfg.deltas = v.clone();
    }
    if let Some(v) = a.chains {
        cfg.chains = v;
    }
    a.sampler.apply(&mut cfg.sampler);
    if let Some(s) = g.seed {
        cfg.sampler.seed = s;
    }
    cfg.sampler.validate()?;
    if cfg.chains == 0 {
        return Err(Failure::Usage("chains must be at least 1".into()));
    }
    let (mapping, study) = match cfg.mapping {
        MappingKind::Degree => (
            CongruenceMapping::DegreeDistribution,
            StudyBase::Degree {
                size: cfg.nb_size,
                mu: cfg.nb_mu,
            },
        ),
        MappingKind::Mixing => {
            let c = ccm_core::graph::NodeClassification::from_class_sizes(&cfg.class_sizes)?;
            if c.n() != cfg.n {
                return Err(Failure::Data(format!(
                    "class sizes cover {} nodes but n = {}",
                    c.n(),
                    cfg.n
                )));
            }
            if cfg.alpha.len() != c.cell_count() {
                return Err(Failure::Data(format!(
                    "{} classes need {} alpha entries, got {}",
                    c.q(),
                    c.cell_count(),
                    cfg.alpha.len()
                )));
            }
            (
                CongruenceMapping::MixingMatrix(c),
                StudyBase::Mixing {
                    lambda: cfg.lambda,
                    alpha: ccm_core::model::normalize(&cfg.alpha)?,
                },
            )
        }
    };
    let mut manifest = Manifest::new("wphi-study", cfg.sampler.seed, g.profile.name(), &cfg);
    inputs(&mut manifest, &[a.config.as_ref()])?;
    let sample = wphi::harvest_chains(&mapping, cfg.n, &cfg.sampler, cfg.chains, g.workers)?;
    let rows = wphi::perturbation_table(&sample, &study, &cfg.deltas)?;
    let out = OutDir::create(&g.out)?;
    out.write("wphi.csv", |w| Ok(wphi::write_perturbation_csv(w, &rows)?))?;
    out.write_str(
        "harvest.csv",
        &format!(
            "chains,draws,unique_classes\n{},{},{}\n",
            cfg.chains,
            sample.draws,
            sample.len()
        ),
    )?;
    manifest.write(&out)
}

pub fn realize_mm(g: &Global, a: RealizeArgs) -> Result<(), Failure> {
    let mut cfg = load_or(&a.config, RealizeConfig::default())?;
    if a.matrix.is_some() {
        cfg.matrix = a.matrix.clone();
    }
    if let Some(v) = &a.class_sizes {
        cfg.class_sizes = v.clone();
    }
    if let Some(v) = a.method {
        cfg.method = v;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let path = required(&cfg.matrix, "matrix")?.clone();
    if cfg.class_sizes.is_empty() {
        return Err(Failure::Usage("--class-sizes is required".into()));
    }
    let rows = graphical::read_matrix(open_input(&path)?, &path.display().to_string())?;
    let target = MmTarget::new(&cfg.class_sizes, &rows)?;
    if !graphical::is_graphical(&target) {
        return Err(Failure::Data(format!(
            "{}: mixing matrix exceeds the node pairs available for class sizes {:?}",
            path.display(),
            cfg.class_sizes
        )));
    }
    let mut manifest = Manifest::new("realize-mm", cfg.seed, g.profile.name(), &cfg);
    inputs(&mut manifest, &[a.config.as_ref(), Some(&path)])?;
    let (net, removals) = match cfg.method {
        RealizeMethod::Removal => {
            let (n, r) = graphical::realize_by_removal(&target)?;
            (n, Some(r))
        }
        RealizeMethod::Direct => (graphical::realize_direct(&target)?, None),
        RealizeMethod::Random => (
            graphical::realize_random(&target, &mut chain_rng(cfg.seed))?,
            None,
        ),
    };
    let out = OutDir::create(&g.out)?;
    out.write("edges.txt", |w| Ok(net.write_edge_list(w)?))?;
    let mut labels = String::from("node,label\n");
    for (v, l) in target.classes().labels().iter().enumerate() {
        labels.push_str(&format!("{v},{l}\n"));
    }
    out.write_str("labels.csv", &labels)?;
    out.write_str(
        "run.csv",
        &format!(
            "nodes,edges,removals\n{},{},{}\n",
            net.n(),
            net.edge_count(),
            removals.map(|r| r.to_string()).unwrap_or_default()
        ),
    )?;
    manifest.write(&out)
}

pub fn ingest_vgl(g: &Global, a: VglArgs) -> Result<(), Failure> {
    let mut cfg = load_or(&a.config, VglConfig::default())?;
    if a.fasta.is_some() {
        cfg.fasta = a.fasta.clone();
    }
    if a.attributes.is_some() {
        cfg.attributes = a.attributes.clone();
    }
    if let Some(v) = a.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = a.ambiguity {
        cfg.ambiguity = v;
    }
    let fasta = required(&cfg.fasta, "fasta")?.clone();
    let seqs = vgl::read_fasta(open_input(&fasta)?, &fasta.display().to_string())?;
    let attrs = match &cfg.attributes {
        Some(p) => Some(vgl::read_attributes(
            open_input(p)?,
            &p.display().to_string(),
        )?),
        None => None,
    };
    let mut manifest = Manifest::new("ingest-vgl", g.seed.unwrap_or(0), g.profile.name(), &cfg);
    inputs(
        &mut manifest,
        &[a.config.as_ref(), Some(&fasta), cfg.attributes.as_ref()],
    )?;
    let net = harness::with_workers(g.workers, || {
        vgl::build_vgl_network(&seqs, cfg.threshold, cfg.ambiguity, attrs.as_deref())
    })?;
    let out = OutDir::create(&g.out)?;
    out.write("edges.txt", |w| Ok(net.network.write_edge_list(w)?))?;
    out.write("mask.txt", |w| Ok(net.mask.write_sampled(w)?))?;
    out.write("ids.csv", |w| Ok(net.write_ids(w)?))?;
    if net.labels.is_some() {
        out.write("labels.csv", |w| Ok(net.write_labels(w)?))?;
    }
    let wn = &net.warnings;
    let mut warn = String::from("kind,id\n");
    for (kind, ids) in [
        ("unmatched_attribute", &wn.unmatched_attribute_ids),
        ("unlabeled_sequence", &wn.unlabeled_sequence_ids),
        ("sequenced_flag_mismatch", &wn.sequenced_flag_mismatches),
    ] {
        for id in ids {
            warn.push_str(&format!("{kind},{id}\n"));
        }
    }
    out.write_str("warnings.csv", &warn)?;
    out.write_str(
        "run.csv",
        &format!(
            "nodes,sequenced,edges,inestimable_pairs\n{},{},{},{}\n",
            net.network.n(),
            seqs.len(),
            net.network.edge_count(),
            wn.inestimable_pairs
        ),
    )?;
    if wn.count() > 0 {
        eprintln!(
            "warning: {} inestimable pairs, {} unmatched attribute ids, {} unlabeled sequences, {} sequenced-flag mismatches",
            wn.inestimable_pairs,
            wn.unmatched_attribute_ids.len(),
            wn.unlabeled_sequence_ids.len(),
            wn.sequenced_flag_mismatches.len()
        );
    }
    manifest.write(&out)
}

pub fn diagnose(g: &Global, a: DiagnoseArgs) -> Result<(), Failure> {
    let mut cfg = load_or(&a.config, DiagnoseConfig::default())?;
    if a.chain.is_some() {
        cfg.chain = a.chain.clone();
    }
    if let Some(v) = a.burn_in {
        cfg.burn_in = v;
    }
    if let Some(v) = &a.columns {
        cfg.columns = v.clone();
    }
    if let Some(v) = a.min_variance {
        cfg.min_variance = v;
    }
    let path = required(&cfg.chain, "chain")?.clone();
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_input(&path)?);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Failure::Data(format!("{name}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&k| header[k] != "iteration")
        .collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); keep.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Failure::Data(format!("{name}: {e}")))?;
        if row < cfg.burn_in {
            continue;
        }
        for (c, &k) in keep.iter().enumerate() {
            let v: f64 = rec.get(k).unwrap_or("").parse().map_err(|_| {
                Failure::Data(format!(
                    "{name}:{}: column {} is not numeric",
                    row + 2,
                    header[k]
                ))
            })?;
            cols[c].push(v);
        }
    }
    for c in &cfg.columns {
        if !header.contains(c) {
            return Err(Failure::Data(format!("{name}: no column `{c}`")));
        }
    }
    let traces: Vec<Trace> = keep
        .iter()
        .zip(cols)
        .map(|(&k, values)| Trace {
            param_id: header[k].clone(),
            values,
            truth: None,
        })
        .collect();
    let mut manifest = Manifest::new("diagnose", g.seed.unwrap_or(0), g.profile.name(), &cfg);
    inputs(&mut manifest, &[a.config.as_ref(), Some(&path)])?;
    let out = OutDir::create(&g.out)?;
    let selected = if cfg.columns.is_empty() {
        None
    } else {
        Some(cfg.columns.as_slice())
    };
    diagnostics::trace_report(&traces, selected, cfg.min_variance, out.root())?;
    manifest.write(&out)
}

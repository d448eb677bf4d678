//! Congruence class models.
//!
//! A CCM assigns a mass `Q(x | θ)` to each congruence class `x = φ(g)` and
//! spreads it evenly over the class members, so a network gets
//! `Q(φ(g) | θ) / |c(φ(g))|` up to the normalizer `W(θ)`. The samplers only
//! ever need ratios across a single dyad toggle, in which `W(θ)` cancels.
//!
//! Class sizes are exact for mixing matrices (a product of binomials over the
//! class-pair cells) and estimated for degree distributions with the sparse
//! asymptotic graph-enumeration formula, applied to whichever of the degree
//! sequence and its complement is sparser.

use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{CcmError, Result};
use crate::graph::{
    degree_distribution, mixing_matrix, ordered, DegreeDistribution, MixingMatrix, Network,
    NodeClassification,
};

/// Tolerance on the unit sum of probability vectors.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Congruence mapping φ.
#[derive(Debug, Clone, PartialEq)]
pub enum CongruenceMapping {
    DegreeDistribution,
    MixingMatrix(NodeClassification),
}

/// Value of φ on a network.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Statistic {
    Degree(DegreeDistribution),
    Mixing(MixingMatrix),
}

impl Statistic {
    /// Flattened cells: degree counts, or upper-triangular mixing cells.
    pub fn cells(&self) -> Vec<u64> {
        match self {
            Statistic::Degree(d) => d.counts.iter().map(|&c| c as u64).collect(),
            Statistic::Mixing(m) => m.cells(),
        }
    }
}

/// Column names for flattened statistics: `d0..d{n-1}` or `mm_k_l`.
pub fn statistic_header(mapping: &CongruenceMapping, n: usize) -> Vec<String> {
    match mapping {
        CongruenceMapping::DegreeDistribution => (0..n).map(|j| format!("d{j}")).collect(),
        CongruenceMapping::MixingMatrix(c) => cell_names(c.q(), "mm"),
    }
}

pub(crate) fn cell_names(q: usize, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    for k in 0..q {
        for l in k..q {
            out.push(format!("{prefix}_{k}_{l}"));
        }
    }
    out
}

/// Distribution over congruence classes, up to normalization.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassLaw {
    /// Node degrees iid with probabilities `theta[0..n]`.
    MultinomialDegree { theta: Vec<f64> },
    /// Total edges Poisson(lambda); edges fall in class-pair cells with
    /// probabilities `alpha`.
    PoissonMultinomialMixing { lambda: f64, alpha: Vec<f64> },
    /// Every class gets the same mass.
    Uniform,
}

impl ClassLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            ClassLaw::MultinomialDegree { theta } => check_probability_vector(theta, "theta"),
            ClassLaw::PoissonMultinomialMixing { lambda, alpha } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return Err(CcmError::invalid(format!(
                        "lambda must be positive, got {lambda}"
                    )));
                }
                check_probability_vector(alpha, "alpha")
            }
            ClassLaw::Uniform => Ok(()),
        }
    }

    /// Parameter vector: `theta`, or `(lambda, alpha..)`.
    pub fn parameters(&self) -> Vec<f64> {
        match self {
            ClassLaw::MultinomialDegree { theta } => theta.clone(),
            ClassLaw::PoissonMultinomialMixing { lambda, alpha } => std::iter::once(*lambda)
                .chain(alpha.iter().copied())
                .collect(),
            ClassLaw::Uniform => Vec::new(),
        }
    }
}

fn check_probability_vector(p: &[f64], name: &str) -> Result<()> {
    if p.is_empty() {
        return Err(CcmError::invalid(format!("{name} is empty")));
    }
    if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(CcmError::invalid(format!(
            "{name} has negative or non-finite entries"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_SUM_TOL {
        return Err(CcmError::invalid(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Rescales non-negative weights to sum to one.
pub fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(CcmError::invalid("weights must be finite and non-negative"));
    }
    let s: f64 = weights.iter().sum();
    if s <= 0.0 {
        return Err(CcmError::invalid("weights sum to zero"));
    }
    Ok(weights.iter().map(|w| w / s).collect())
}

/// Conjugate prior hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    /// Dirichlet concentration for `theta` or `alpha`.
    pub dirichlet_alpha0: Vec<f64>,
    /// Gamma(shape, rate) prior on `lambda`; unused for degree models.
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

impl PriorSpec {
    /// Flat Dirichlet with the given concentration per component.
    pub fn flat(dim: usize, alpha0: f64) -> Self {
        PriorSpec {
            dirichlet_alpha0: vec![alpha0; dim],
            gamma_shape: 1e-3,
            gamma_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcmSpec {
    pub mapping: CongruenceMapping,
    pub law: ClassLaw,
    pub priors: PriorSpec,
}

impl CcmSpec {
    pub fn new(mapping: CongruenceMapping, law: ClassLaw, priors: PriorSpec) -> Self {
        CcmSpec {
            mapping,
            law,
            priors,
        }
    }

    /// Checks parameter dimensions against an `n`-node network.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.law.validate()?;
        let dim = match (&self.mapping, &self.law) {
            (CongruenceMapping::DegreeDistribution, ClassLaw::MultinomialDegree { theta }) => {
                if theta.len() != n {
                    return Err(CcmError::Dimension(format!(
                        "theta has {} entries, expected {n}",
                        theta.len()
                    )));
                }
                n
            }
            (
                CongruenceMapping::MixingMatrix(c),
                ClassLaw::PoissonMultinomialMixing { alpha, .. },
            ) => {
                if alpha.len() != c.cell_count() {
                    return Err(CcmError::Dimension(format!(
                        "alpha has {} entries, expected {}",
                        alpha.len(),
                        c.cell_count()
                    )));
                }
                c.cell_count()
            }
            (CongruenceMapping::DegreeDistribution, ClassLaw::Uniform) => n,
            (CongruenceMapping::MixingMatrix(c), ClassLaw::Uniform) => c.cell_count(),
            _ => {
                return Err(CcmError::invalid(
                    "class law does not match the congruence mapping",
                ))
            }
        };
        if let CongruenceMapping::MixingMatrix(c) = &self.mapping {
            if c.n() != n {
                return Err(CcmError::Dimension(format!(
                    "classification covers {} nodes, network has {n}",
                    c.n()
                )));
            }
        }
        let a0 = &self.priors.dirichlet_alpha0;
        if a0.len() != dim {
            return Err(CcmError::Dimension(format!(
                "Dirichlet prior has {} entries, expected {dim}",
                a0.len()
            )));
        }
        if a0.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(CcmError::invalid(
                "Dirichlet prior entries must be non-negative",
            ));
        }
        if !(self.priors.gamma_shape > 0.0 && self.priors.gamma_rate > 0.0) {
            return Err(CcmError::invalid("Gamma prior parameters must be positive"));
        }
        Ok(())
    }
}

pub fn phi(g: &Network, mapping: &CongruenceMapping) -> Result<Statistic> {
    Ok(match mapping {
        CongruenceMapping::DegreeDistribution => Statistic::Degree(degree_distribution(g)),
        CongruenceMapping::MixingMatrix(c) => Statistic::Mixing(mixing_matrix(g, c)?),
    })
}

#[inline]
fn ln_fact(k: u64) -> f64 {
    ln_factorial(k)
}

/// `k · ln p` with the convention `0 · ln 0 = 0`.
#[inline]
fn xlogp(k: f64, p: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * p.ln()
    }
}

/// Log of the unnormalized class mass `Q(x | θ)`. Classes with positive
/// counts in zero-probability cells get `-inf`.
pub fn log_q_class(x: &Statistic, law: &ClassLaw) -> Result<f64> {
    match (x, law) {
        (_, ClassLaw::Uniform) => Ok(0.0),
        (Statistic::Degree(d), ClassLaw::MultinomialDegree { theta }) => {
            if theta.len() != d.counts.len() {
                return Err(CcmError::Dimension(format!(
                    "degree distribution has {} bins, theta has {}",
                    d.counts.len(),
                    theta.len()
                )));
            }
            let n = d.n() as u64;
            let mut lp = ln_fact(n);
            for (&c, &t) in d.counts.iter().zip(theta) {
                lp += xlogp(c as f64, t) - ln_fact(c as u64);
            }
            Ok(lp)
        }
        (Statistic::Mixing(m), ClassLaw::PoissonMultinomialMixing { lambda, alpha }) => {
            let cells = m.cells();
            if cells.len() != alpha.len() {
                return Err(CcmError::Dimension(format!(
                    "mixing matrix has {} cells, alpha has {}",
                    cells.len(),
                    alpha.len()
                )));
            }
            // Poisson(T | λ) · Multinomial(cells | T, α); the T! terms cancel.
            let total: u64 = cells.iter().sum();
            let mut lp = -lambda + xlogp(total as f64, *lambda);
            for (&c, &a) in cells.iter().zip(alpha) {
                lp += xlogp(c as f64, a) - ln_fact(c);
            }
            Ok(lp)
        }
        _ => Err(CcmError::invalid("statistic does not match the class law")),
    }
}

/// `ln Γ`-based sparse enumeration term for a degree sequence with degree sum
/// `m_sum` and `Σ d(d-1) = m2`, excluding the `Π d_i!` factor.
fn sparse_enumeration_core(m_sum: u64, m2: u64) -> f64 {
    if m_sum == 0 {
        return 0.0;
    }
    let half = m_sum / 2;
    let lambda = m2 as f64 / (2.0 * m_sum as f64);
    ln_fact(m_sum) - ln_fact(half) - half as f64 * std::f64::consts::LN_2 - lambda - lambda * lambda
}

/// Degree-sequence moments needed by the enumeration estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SequenceMoments {
    n: u64,
    sum: u64,
    sq_sum: u64,
}

impl SequenceMoments {
    fn dense(&self) -> bool {
        // use the complement once more than half the dyads are edges
        self.sum > self.n * self.n.saturating_sub(1) / 2
    }

    /// `(Σ d, Σ d(d-1))` on the side the estimate is evaluated on.
    fn side_moments(&self) -> (u64, u64) {
        let n = self.n as i128;
        let (s, sq) = (self.sum as i128, self.sq_sum as i128);
        if self.dense() {
            let cs = n * (n - 1) - s;
            let csq = n * (n - 1) * (n - 1) - 2 * (n - 1) * s + sq;
            (cs as u64, (csq - cs) as u64)
        } else {
            (s as u64, (sq - s) as u64)
        }
    }

    fn side_degree(&self, d: usize, dense: bool) -> u64 {
        if dense {
            self.n - 1 - d as u64
        } else {
            d as u64
        }
    }
}

/// Estimated log number of labeled simple graphs with degree sequence `seq`.
///
/// Odd degree sums give `-inf`. Sequences denser than half-complete are
/// evaluated through their complement, which has the same count.
pub fn log_graph_count_estimate(seq: &[usize]) -> f64 {
    let n = seq.len() as u64;
    let sum: u64 = seq.iter().map(|&d| d as u64).sum();
    if sum % 2 == 1 || seq.iter().any(|&d| d as u64 >= n.max(1)) {
        return f64::NEG_INFINITY;
    }
    let sq_sum = seq.iter().map(|&d| (d * d) as u64).sum();
    let m = SequenceMoments { n, sum, sq_sum };
    let dense = m.dense();
    let (s, m2) = m.side_moments();
    let mut acc = sparse_enumeration_core(s, m2);
    for &d in seq {
        acc -= ln_fact(m.side_degree(d, dense));
    }
    acc
}

/// Log class size `ln |c(x)|`: exact for mixing matrices, estimated for
/// degree distributions.
pub fn log_class_size(x: &Statistic, mapping: &CongruenceMapping) -> Result<f64> {
    match (x, mapping) {
        (Statistic::Mixing(m), CongruenceMapping::MixingMatrix(c)) => {
            if m.q() != c.q() {
                return Err(CcmError::Dimension(
                    "mixing matrix q differs from classification".into(),
                ));
            }
            Ok(m.cells()
                .iter()
                .zip(c.cell_capacities())
                .map(|(&k, cap)| ln_choose(cap, k))
                .sum())
        }
        (Statistic::Degree(d), CongruenceMapping::DegreeDistribution) => {
            let n = d.n() as u64;
            let mut arrangements = ln_fact(n);
            for &c in &d.counts {
                arrangements -= ln_fact(c as u64);
            }
            Ok(arrangements + log_graph_count_estimate(&d.representative_sequence()))
        }
        _ => Err(CcmError::invalid(
            "statistic does not match the congruence mapping",
        )),
    }
}

#[inline]
fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else {
        ln_binomial(n, k)
    }
}

/// Toggle-ratio evaluator prepared from a [`CcmSpec`].
///
/// [`Target::log_ratio`] returns `ln P(g') − ln P(g)` for `g'` = `g` with one
/// dyad flipped. All terms are differences of state functions summed in a
/// fixed order, so a toggle and its reversal give exactly opposite values.
#[derive(Debug, Clone)]
pub struct Target {
    kind: TargetKind,
}

#[derive(Debug, Clone)]
enum TargetKind {
    Degree {
        /// `None` for the uniform class law.
        log_theta: Option<Vec<f64>>,
    },
    Mixing {
        classes: NodeClassification,
        capacities: Vec<u64>,
        /// `(ln λ, ln α)`, `None` for the uniform class law.
        law: Option<(f64, Vec<f64>)>,
    },
}

impl Target {
    pub fn new(spec: &CcmSpec) -> Result<Self> {
        let kind = match (&spec.mapping, &spec.law) {
            (CongruenceMapping::DegreeDistribution, ClassLaw::MultinomialDegree { theta }) => {
                TargetKind::Degree {
                    log_theta: Some(theta.iter().map(|t| t.ln()).collect()),
                }
            }
            (CongruenceMapping::DegreeDistribution, ClassLaw::Uniform) => {
                TargetKind::Degree { log_theta: None }
            }
            (CongruenceMapping::MixingMatrix(c), law) => TargetKind::Mixing {
                classes: c.clone(),
                capacities: c.cell_capacities(),
                law: match law {
                    ClassLaw::PoissonMultinomialMixing { lambda, alpha } => {
                        Some((lambda.ln(), alpha.iter().map(|a| a.ln()).collect()))
                    }
                    ClassLaw::Uniform => None,
                    _ => return Err(CcmError::invalid("class law does not match mapping")),
                },
            },
            _ => return Err(CcmError::invalid("class law does not match mapping")),
        };
        Ok(Target { kind })
    }

    /// Replaces the class-law parameters, keeping the mapping.
    pub fn set_law(&mut self, law: &ClassLaw) -> Result<()> {
        match (&mut self.kind, law) {
            (TargetKind::Degree { log_theta }, ClassLaw::MultinomialDegree { theta }) => {
                let lt = log_theta.get_or_insert_with(Vec::new);
                lt.clear();
                lt.extend(theta.iter().map(|t| t.ln()));
            }
            (TargetKind::Degree { log_theta }, ClassLaw::Uniform) => *log_theta = None,
            (
                TargetKind::Mixing { law: slot, .. },
                ClassLaw::PoissonMultinomialMixing { lambda, alpha },
            ) => {
                *slot = Some((lambda.ln(), alpha.iter().map(|a| a.ln()).collect()));
            }
            (TargetKind::Mixing { law: slot, .. }, ClassLaw::Uniform) => *slot = None,
            _ => return Err(CcmError::invalid("class law does not match mapping")),
        }
        Ok(())
    }

    /// Whether the network must carry a mixing view (see [`Network::track_mixing`]).
    pub fn classification(&self) -> Option<&NodeClassification> {
        match &self.kind {
            TargetKind::Mixing { classes, .. } => Some(classes),
            TargetKind::Degree { .. } => None,
        }
    }

    /// `ln P(g') − ln P(g)` for toggling `(i, j)`; `i != j`.
    pub fn log_ratio(&self, g: &Network, i: usize, j: usize) -> f64 {
        let (dq, dc) = self.log_ratio_parts(g, i, j);
        dq - dc
    }

    /// `(Δ ln Q, Δ ln |c|)` for toggling `(i, j)`.
    pub fn log_ratio_parts(&self, g: &Network, i: usize, j: usize) -> (f64, f64) {
        let (i, j) = ordered(i, j);
        let added = !g.has_edge(i, j);
        match &self.kind {
            TargetKind::Degree { log_theta } => {
                degree_log_ratio(g, i, j, added, log_theta.as_deref())
            }
            TargetKind::Mixing {
                classes,
                capacities,
                law,
            } => {
                let c = classes.cell_index(classes.label(i), classes.label(j));
                let count = match g.mixing_cells() {
                    Some(cells) => cells[c],
                    None => count_cell(g, classes, c),
                };
                mixing_log_ratio(
                    count,
                    capacities[c],
                    added,
                    law.as_ref().map(|(ll, la)| (*ll, la[c])),
                )
            }
        }
    }
}

fn count_cell(g: &Network, classes: &NodeClassification, c: usize) -> u64 {
    g.edges()
        .iter()
        .filter(|&&(a, b)| classes.cell_index(classes.label(a), classes.label(b)) == c)
        .count() as u64
}

/// Mixing toggle in a cell with `count` edges and `cap` slots.
fn mixing_log_ratio(count: u64, cap: u64, added: bool, law: Option<(f64, f64)>) -> (f64, f64) {
    // |c| = Π C(N, M): adding multiplies by (N-M)/(M+1), removing by M/(N-M+1).
    let (dc, dq) = if added {
        let dc = (cap - count) as f64;
        let up = (count + 1) as f64;
        let dc = dc.ln() - up.ln();
        let dq = law.map_or(0.0, |(ll, la)| ll - up.ln() + la);
        (dc, dq)
    } else {
        let m = count as f64;
        let free = (cap - count + 1) as f64;
        let dc = m.ln() - free.ln();
        let dq = law.map_or(0.0, |(ll, la)| -ll + m.ln() - la);
        (dc, dq)
    };
    (dq, dc)
}

/// Degree-count changes for moving the degrees of two nodes, merged by bin.
fn bin_moves(di: usize, dj: usize, added: bool) -> ([(usize, i64); 4], usize) {
    let step = |d: usize| if added { d + 1 } else { d - 1 };
    let raw = [(di, -1i64), (step(di), 1), (dj, -1), (step(dj), 1)];
    let mut sorted = raw;
    sorted.sort_unstable_by_key(|&(b, _)| b);
    let mut out = [(0usize, 0i64); 4];
    let mut len = 0;
    for (b, d) in sorted {
        if len > 0 && out[len - 1].0 == b {
            out[len - 1].1 += d;
        } else {
            out[len] = (b, d);
            len += 1;
        }
    }
    let mut k = 0;
    for idx in 0..len {
        if out[idx].1 != 0 {
            out[k] = out[idx];
            k += 1;
        }
    }
    (out, k)
}

fn degree_log_ratio(
    g: &Network,
    i: usize,
    j: usize,
    added: bool,
    log_theta: Option<&[f64]>,
) -> (f64, f64) {
    let (di, dj) = (g.degree(i), g.degree(j));
    let counts = g.degree_counts();
    let (moves, len) = bin_moves(di, dj, added);

    // Multinomial coefficient n!/Π D_j! appears in both Q and |c|.
    let mut d_coef = 0.0;
    let mut d_theta = 0.0;
    for &(bin, delta) in &moves[..len] {
        let before = counts[bin] as u64;
        let after = (counts[bin] as i64 + delta) as u64;
        d_coef -= ln_fact(after) - ln_fact(before);
        if let Some(lt) = log_theta {
            d_theta += delta as f64 * lt[bin];
        }
    }
    let dq = match log_theta {
        Some(_) => d_coef + d_theta,
        None => 0.0,
    };
    let dc = d_coef + graph_count_log_ratio(g, i, j, added);
    (dq, dc)
}

/// Change in the estimated log graph count of the degree sequence.
fn graph_count_log_ratio(g: &Network, i: usize, j: usize, added: bool) -> f64 {
    let n = g.n() as u64;
    let (di, dj) = (g.degree(i), g.degree(j));
    let step = |d: usize| if added { d + 1 } else { d - 1 };
    let (ni, nj) = (step(di), step(dj));
    let before = SequenceMoments {
        n,
        sum: 2 * g.edge_count() as u64,
        sq_sum: g.degree_sq_sum(),
    };
    let sq = |d: usize| (d * d) as u64;
    let after = SequenceMoments {
        n,
        sum: if added {
            before.sum + 2
        } else {
            before.sum - 2
        },
        sq_sum: before.sq_sum + sq(ni) + sq(nj) - sq(di) - sq(dj),
    };
    let (b_dense, a_dense) = (before.dense(), after.dense());
    let (bs, bm2) = before.side_moments();
    let (as_, am2) = after.side_moments();
    let core = sparse_enumeration_core(as_, am2) - sparse_enumeration_core(bs, bm2);
    if b_dense == a_dense {
        let local = |d_old: usize, d_new: usize| {
            ln_fact(after.side_degree(d_new, a_dense)) - ln_fact(before.side_degree(d_old, b_dense))
        };
        core - local(di, ni) - local(dj, nj)
    } else {
        // side switch: re-evaluate Σ ln d! on both sides in node order
        let side_sum = |m: &SequenceMoments, dense: bool, override_deg: bool| {
            let mut acc = 0.0;
            for (v, &d) in g.degrees().iter().enumerate() {
                let d = if override_deg && v == i {
                    ni
                } else if override_deg && v == j {
                    nj
                } else {
                    d
                };
                acc += ln_fact(m.side_degree(d, dense));
            }
            acc
        };
        let full_after = sparse_enumeration_core(as_, am2) - side_sum(&after, a_dense, true);
        let full_before = sparse_enumeration_core(bs, bm2) - side_sum(&before, b_dense, false);
        full_after - full_before
    }
}

/// `ln(|c(φ(g'))| / |c(φ(g))|)` for toggling `(i, j)`.
pub fn log_class_size_ratio(
    g: &Network,
    toggle: (usize, usize),
    mapping: &CongruenceMapping,
) -> Result<f64> {
    check_toggle(g, toggle)?;
    let spec = CcmSpec::new(mapping.clone(), ClassLaw::Uniform, PriorSpec::flat(0, 0.0));
    Ok(Target::new(&spec)?.log_ratio_parts(g, toggle.0, toggle.1).1)
}

/// `ln P(g') − ln P(g)` under the CCM; `W(θ)` cancels.
pub fn log_network_prob_ratio(g: &Network, toggle: (usize, usize), spec: &CcmSpec) -> Result<f64> {
    check_toggle(g, toggle)?;
    Ok(Target::new(spec)?.log_ratio(g, toggle.0, toggle.1))
}

fn check_toggle(g: &Network, (i, j): (usize, usize)) -> Result<()> {
    if i == j || i >= g.n() || j >= g.n() {
        return Err(CcmError::invalid(format!("invalid toggle ({i},{j})")));
    }
    Ok(())
}

/// Unnormalized `ln P(g) = ln Q(φ(g)) − ln |c(φ(g))|`.
pub fn log_network_weight(g: &Network, spec: &CcmSpec) -> Result<f64> {
    let x = phi(g, &spec.mapping)?;
    Ok(log_q_class(&x, &spec.law)? - log_class_size(&x, &spec.mapping)?)
}

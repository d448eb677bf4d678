//! Labeled undirected simple networks with incrementally maintained summary
//! statistics, node classifications and dyad observation masks.
//!
//! Nodes are dense integers `0..n`. Adjacency is a bitset over the upper
//! triangle of the dyad matrix plus an edge list with a position index, so that
//! edge membership, uniform edge draws and toggles are all O(1).

use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use rustc_hash::FxHashMap;

use crate::error::{CcmError, Result};

/// Unordered node pair stored with `i < j`.
pub type Dyad = (usize, usize);

#[inline]
pub fn ordered(i: usize, j: usize) -> Dyad {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Number of unordered pairs among `n` items.
#[inline]
pub fn pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Per-node category labels `0..q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeClassification {
    q: usize,
    labels: Vec<usize>,
    class_sizes: Vec<usize>,
}

impl NodeClassification {
    pub fn new(labels: Vec<usize>, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(CcmError::invalid(
                "classification needs at least one category",
            ));
        }
        let mut class_sizes = vec![0; q];
        for (v, &l) in labels.iter().enumerate() {
            if l >= q {
                return Err(CcmError::invalid(format!(
                    "label {l} of node {v} out of range for q = {q}"
                )));
            }
            class_sizes[l] += 1;
        }
        Ok(NodeClassification {
            q,
            labels,
            class_sizes,
        })
    }

    /// Contiguous blocks: the first `sizes[0]` nodes get label 0, and so on.
    pub fn from_class_sizes(sizes: &[usize]) -> Result<Self> {
        let labels = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect();
        Self::new(labels, sizes.len())
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_sizes(&self) -> &[usize] {
        &self.class_sizes
    }

    /// Number of unordered class pairs `q(q+1)/2`.
    pub fn cell_count(&self) -> usize {
        self.q * (self.q + 1) / 2
    }

    /// Flattened index of the unordered class pair `{k, l}`; cells are ordered
    /// `(0,0), (0,1), .., (0,q-1), (1,1), ..`.
    #[inline]
    pub fn cell_index(&self, k: usize, l: usize) -> usize {
        cell_index(self.q, k, l)
    }

    /// Number of node pairs falling in each cell.
    pub fn cell_capacities(&self) -> Vec<u64> {
        let mut caps = Vec::with_capacity(self.cell_count());
        for k in 0..self.q {
            for l in k..self.q {
                let (a, b) = (self.class_sizes[k] as u64, self.class_sizes[l] as u64);
                caps.push(if k == l {
                    a * a.saturating_sub(1) / 2
                } else {
                    a * b
                });
            }
        }
        caps
    }
}

#[inline]
pub fn cell_index(q: usize, k: usize, l: usize) -> usize {
    let (k, l) = if k <= l { (k, l) } else { (l, k) };
    k * (2 * q - k + 1) / 2 + (l - k)
}

/// Counts of nodes by degree, indexed `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DegreeDistribution {
    pub counts: Vec<usize>,
}

impl DegreeDistribution {
    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Σ_j j·D_j, i.e. twice the edge count.
    pub fn degree_sum(&self) -> usize {
        self.counts.iter().enumerate().map(|(j, &c)| j * c).sum()
    }

    /// A degree sequence realizing this distribution, in non-increasing order.
    pub fn representative_sequence(&self) -> Vec<usize> {
        let mut seq = Vec::with_capacity(self.n());
        for (j, &c) in self.counts.iter().enumerate().rev() {
            seq.extend(std::iter::repeat_n(j, c));
        }
        seq
    }

    pub fn proportions(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Symmetric `q x q` matrix of edge counts between node classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MixingMatrix {
    q: usize,
    data: Vec<u64>,
}

impl MixingMatrix {
    pub fn zeros(q: usize) -> Self {
        MixingMatrix {
            q,
            data: vec![0; q * q],
        }
    }

    /// Builds from a full row-major matrix; rejects asymmetric input.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let q = rows.len();
        let mut data = Vec::with_capacity(q * q);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != q {
                return Err(CcmError::Dimension(format!(
                    "mixing matrix row {k} has {} entries, expected {q}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        for k in 0..q {
            for l in 0..k {
                if data[k * q + l] != data[l * q + k] {
                    return Err(CcmError::invalid(format!(
                        "mixing matrix not symmetric at ({k},{l})"
                    )));
                }
            }
        }
        Ok(MixingMatrix { q, data })
    }

    /// Builds from the flattened upper-triangular cells.
    pub fn from_cells(q: usize, cells: &[u64]) -> Result<Self> {
        if cells.len() != q * (q + 1) / 2 {
            return Err(CcmError::Dimension(format!(
                "{} cells given for q = {q}",
                cells.len()
            )));
        }
        let mut m = MixingMatrix::zeros(q);
        let mut c = 0;
        for k in 0..q {
            for l in k..q {
                m.set(k, l, cells[c]);
                c += 1;
            }
        }
        Ok(m)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> u64 {
        self.data[k * self.q + l]
    }

    pub fn set(&mut self, k: usize, l: usize, v: u64) {
        self.data[k * self.q + l] = v;
        self.data[l * self.q + k] = v;
    }

    /// Upper-triangular cells in [`cell_index`] order.
    pub fn cells(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.q * (self.q + 1) / 2);
        for k in 0..self.q {
            for l in k..self.q {
                out.push(self.get(k, l));
            }
        }
        out
    }

    pub fn total_edges(&self) -> u64 {
        self.cells().iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.data
            .chunks(self.q.max(1))
            .map(|r| r.to_vec())
            .collect()
    }
}

/// Tracked mixing-matrix view kept in sync by [`Network::toggle`].
#[derive(Debug, Clone)]
struct MixingView {
    classes: NodeClassification,
    cells: Vec<u64>,
}

/// What changed in a single toggle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToggleDelta {
    pub dyad: Dyad,
    /// `true` if the edge was added, `false` if removed.
    pub added: bool,
    /// Degrees of `dyad.0` and `dyad.1` before the toggle.
    pub degrees_before: (usize, usize),
    /// Mixing cell touched, if a mixing view is registered.
    pub cell: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    adjacency: Vec<u64>,
    edges: Vec<Dyad>,
    edge_pos: FxHashMap<usize, usize>,
    degree: Vec<usize>,
    degree_counts: Vec<usize>,
    degree_sq_sum: u64,
    mixing: Option<MixingView>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.adjacency == other.adjacency
    }
}

impl Eq for Network {}

impl Network {
    pub fn empty(n: usize) -> Self {
        let words = pairs(n).div_ceil(64);
        let mut degree_counts = vec![0; n.max(1)];
        if n > 0 {
            degree_counts[0] = n;
        }
        Network {
            n,
            adjacency: vec![0; words],
            edges: Vec::new(),
            edge_pos: FxHashMap::default(),
            degree: vec![0; n],
            degree_counts,
            degree_sq_sum: 0,
            mixing: None,
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Network::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                g.insert_unchecked(i, j);
            }
        }
        g
    }

    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(n: usize, edges: I) -> Result<Self> {
        let mut g = Network::empty(n);
        for (i, j) in edges {
            g.check_pair(i, j)?;
            if g.has_edge(i, j) {
                return Err(CcmError::invalid(format!("duplicate edge ({i},{j})")));
            }
            g.insert_unchecked(i, j);
        }
        Ok(g)
    }

    /// Registers a mixing-matrix view that is maintained on every toggle.
    pub fn track_mixing(&mut self, classes: &NodeClassification) -> Result<()> {
        if classes.n() != self.n {
            return Err(CcmError::Dimension(format!(
                "classification covers {} nodes, network has {}",
                classes.n(),
                self.n
            )));
        }
        let mm = mixing_matrix(self, classes)?;
        self.mixing = Some(MixingView {
            classes: classes.clone(),
            cells: mm.cells(),
        });
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in internal order; the order is a deterministic function of the
    /// toggle history.
    pub fn edges(&self) -> &[Dyad] {
        &self.edges
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.degree[v]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degree
    }

    /// Incrementally maintained degree counts.
    pub fn degree_counts(&self) -> &[usize] {
        &self.degree_counts
    }

    /// Σ_v d_v².
    pub fn degree_sq_sum(&self) -> u64 {
        self.degree_sq_sum
    }

    /// Incrementally maintained mixing cells, when a view is registered.
    pub fn mixing_cells(&self) -> Option<&[u64]> {
        self.mixing.as_ref().map(|m| m.cells.as_slice())
    }

    pub fn classification(&self) -> Option<&NodeClassification> {
        self.mixing.as_ref().map(|m| &m.classes)
    }

    #[inline]
    fn dyad_index(&self, i: usize, j: usize) -> usize {
        // i < j
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (i, j) = ordered(i, j);
        let k = self.dyad_index(i, j);
        self.adjacency[k >> 6] >> (k & 63) & 1 == 1
    }

    /// Uniformly drawn existing edge.
    pub fn random_edge<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Dyad> {
        if self.edges.is_empty() {
            None
        } else {
            Some(self.edges[rng.random_range(0..self.edges.len())])
        }
    }

    /// Uniformly drawn dyad among all `n(n-1)/2`.
    pub fn random_dyad<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Dyad> {
        if self.n < 2 {
            return None;
        }
        let i = rng.random_range(0..self.n);
        let mut j = rng.random_range(0..self.n - 1);
        if j >= i {
            j += 1;
        }
        Some(ordered(i, j))
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.n).filter(|&u| self.has_edge(u, v)).collect()
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(CcmError::invalid(format!("self-loop at node {i}")));
        }
        if i >= self.n || j >= self.n {
            return Err(CcmError::invalid(format!(
                "node pair ({i},{j}) out of range for n = {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Flips the dyad `(i, j)`, updating every maintained statistic.
    pub fn toggle(&mut self, i: usize, j: usize) -> Result<ToggleDelta> {
        self.check_pair(i, j)?;
        Ok(self.toggle_unchecked(i, j))
    }

    /// As [`Network::toggle`] without range checks; `i != j` must hold.
    pub fn toggle_unchecked(&mut self, i: usize, j: usize) -> ToggleDelta {
        let (i, j) = ordered(i, j);
        let degrees_before = (self.degree[i], self.degree[j]);
        let added = !self.has_edge(i, j);
        if added {
            self.insert_unchecked(i, j);
        } else {
            self.remove_unchecked(i, j);
        }
        let cell = self
            .mixing
            .as_ref()
            .map(|m| m.classes.cell_index(m.classes.label(i), m.classes.label(j)));
        ToggleDelta {
            dyad: (i, j),
            added,
            degrees_before,
            cell,
        }
    }

    fn insert_unchecked(&mut self, i: usize, j: usize) {
        let (i, j) = ordered(i, j);
        let k = self.dyad_index(i, j);
        self.adjacency[k >> 6] |= 1 << (k & 63);
        self.edge_pos.insert(k, self.edges.len());
        self.edges.push((i, j));
        self.bump_degree(i, true);
        self.bump_degree(j, true);
        if let Some(m) = self.mixing.as_mut() {
            let c = m.classes.cell_index(m.classes.label(i), m.classes.label(j));
            m.cells[c] += 1;
        }
    }

    fn remove_unchecked(&mut self, i: usize, j: usize) {
        let (i, j) = ordered(i, j);
        let k = self.dyad_index(i, j);
        self.adjacency[k >> 6] &= !(1 << (k & 63));
        let pos = self.edge_pos.remove(&k).expect("edge index out of sync");
        let last = self.edges.pop().expect("edge list out of sync");
        if pos < self.edges.len() {
            self.edges[pos] = last;
            let lk = self.dyad_index(last.0, last.1);
            self.edge_pos.insert(lk, pos);
        }
        self.bump_degree(i, false);
        self.bump_degree(j, false);
        if let Some(m) = self.mixing.as_mut() {
            let c = m.classes.cell_index(m.classes.label(i), m.classes.label(j));
            m.cells[c] -= 1;
        }
    }

    #[inline]
    fn bump_degree(&mut self, v: usize, up: bool) {
        let d = self.degree[v];
        self.degree_counts[d] -= 1;
        let nd = if up { d + 1 } else { d - 1 };
        self.degree_counts[nd] += 1;
        self.degree[v] = nd;
        let (d, nd) = (d as u64, nd as u64);
        self.degree_sq_sum = self.degree_sq_sum + nd * nd - d * d;
    }

    /// Network restricted to the edges whose dyads satisfy `keep`.
    pub fn filtered<F: Fn(usize, usize) -> bool>(&self, keep: F) -> Network {
        let mut g = Network::empty(self.n);
        for &(i, j) in &self.edges {
            if keep(i, j) {
                g.insert_unchecked(i, j);
            }
        }
        g
    }

    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        let mut sorted = self.edges.clone();
        sorted.sort_unstable();
        for (i, j) in sorted {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }
}

pub fn degree_distribution(g: &Network) -> DegreeDistribution {
    let mut counts = vec![0; g.n().max(1)];
    for &d in g.degrees() {
        counts[d] += 1;
    }
    if g.n() == 0 {
        counts.clear();
    }
    DegreeDistribution { counts }
}

pub fn mixing_matrix(g: &Network, c: &NodeClassification) -> Result<MixingMatrix> {
    if c.n() != g.n() {
        return Err(CcmError::Dimension(format!(
            "classification covers {} nodes, network has {}",
            c.n(),
            g.n()
        )));
    }
    let mut mm = MixingMatrix::zeros(c.q());
    for &(i, j) in g.edges() {
        let (k, l) = (c.label(i), c.label(j));
        let v = mm.get(k, l) + 1;
        mm.set(k, l, v);
    }
    Ok(mm)
}

/// Which dyads have known values.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    n: usize,
    kind: MaskKind,
}

#[derive(Debug, Clone, PartialEq)]
enum MaskKind {
    /// A dyad is known iff both endpoints were sampled.
    Induced {
        sampled: Vec<bool>,
        sampled_ids: Vec<usize>,
        unsampled_ids: Vec<usize>,
    },
    /// Explicit list of unknown dyads.
    Dyads {
        unknown: Vec<Dyad>,
        lookup: rustc_hash::FxHashSet<Dyad>,
    },
}

impl ObservationMask {
    pub fn induced(sampled: Vec<bool>) -> Self {
        let n = sampled.len();
        let sampled_ids = (0..n).filter(|&v| sampled[v]).collect();
        let unsampled_ids = (0..n).filter(|&v| !sampled[v]).collect();
        ObservationMask {
            n,
            kind: MaskKind::Induced {
                sampled,
                sampled_ids,
                unsampled_ids,
            },
        }
    }

    pub fn from_sampled_ids(n: usize, ids: &[usize]) -> Result<Self> {
        let mut sampled = vec![false; n];
        for &v in ids {
            if v >= n {
                return Err(CcmError::invalid(format!(
                    "sampled node {v} out of range for n = {n}"
                )));
            }
            sampled[v] = true;
        }
        Ok(Self::induced(sampled))
    }

    pub fn all_known(n: usize) -> Self {
        Self::induced(vec![true; n])
    }

    pub fn all_unknown(n: usize) -> Self {
        Self::induced(vec![false; n])
    }

    /// General dyad-level mask listing the unknown dyads.
    pub fn from_unknown_dyads(n: usize, dyads: &[Dyad]) -> Result<Self> {
        let mut unknown = Vec::with_capacity(dyads.len());
        let mut lookup = rustc_hash::FxHashSet::default();
        for &(i, j) in dyads {
            if i == j || i >= n || j >= n {
                return Err(CcmError::invalid(format!("invalid dyad ({i},{j})")));
            }
            let d = ordered(i, j);
            if lookup.insert(d) {
                unknown.push(d);
            }
        }
        Ok(ObservationMask {
            n,
            kind: MaskKind::Dyads { unknown, lookup },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_known(&self, i: usize, j: usize) -> bool {
        match &self.kind {
            MaskKind::Induced { sampled, .. } => sampled[i] && sampled[j],
            MaskKind::Dyads { lookup, .. } => !lookup.contains(&ordered(i, j)),
        }
    }

    pub fn unknown_dyad_count(&self) -> usize {
        match &self.kind {
            MaskKind::Induced { sampled_ids, .. } => pairs(self.n) - pairs(sampled_ids.len()),
            MaskKind::Dyads { unknown, .. } => unknown.len(),
        }
    }

    /// Node-level sampling indicator, for induced masks.
    pub fn sampled(&self) -> Option<&[bool]> {
        match &self.kind {
            MaskKind::Induced { sampled, .. } => Some(sampled),
            MaskKind::Dyads { .. } => None,
        }
    }

    pub fn sampled_ids(&self) -> Option<&[usize]> {
        match &self.kind {
            MaskKind::Induced { sampled_ids, .. } => Some(sampled_ids),
            MaskKind::Dyads { .. } => None,
        }
    }

    /// Uniform draw among the unknown dyads.
    pub fn random_unknown<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Dyad> {
        match &self.kind {
            MaskKind::Induced {
                sampled_ids,
                unsampled_ids,
                ..
            } => {
                let u = unsampled_ids.len();
                let within = pairs(u);
                let total = within + u * sampled_ids.len();
                if total == 0 {
                    return None;
                }
                let r = rng.random_range(0..total);
                if r < within {
                    let a = rng.random_range(0..u);
                    let mut b = rng.random_range(0..u - 1);
                    if b >= a {
                        b += 1;
                    }
                    Some(ordered(unsampled_ids[a], unsampled_ids[b]))
                } else {
                    let a = unsampled_ids[rng.random_range(0..u)];
                    let b = sampled_ids[rng.random_range(0..sampled_ids.len())];
                    Some(ordered(a, b))
                }
            }
            MaskKind::Dyads { unknown, .. } => {
                if unknown.is_empty() {
                    None
                } else {
                    Some(unknown[rng.random_range(0..unknown.len())])
                }
            }
        }
    }

    /// All unknown dyads in lexicographic order.
    pub fn unknown_dyads(&self) -> Vec<Dyad> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if !self.is_known(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Whether `g` agrees with `observed` on every known dyad.
    pub fn consistent_with(&self, g: &Network, observed: &Network) -> bool {
        if g.n() != self.n || observed.n() != self.n {
            return false;
        }
        if observed
            .edges()
            .iter()
            .any(|&(i, j)| self.is_known(i, j) && !g.has_edge(i, j))
        {
            return false;
        }
        g.edges()
            .iter()
            .all(|&(i, j)| !self.is_known(i, j) || observed.has_edge(i, j))
    }

    pub fn write_sampled<W: Write>(&self, mut w: W) -> Result<()> {
        let ids = self
            .sampled_ids()
            .ok_or_else(|| CcmError::invalid("only node-level masks can be written"))?;
        for v in ids {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

/// Samples `round(s·n)` nodes without replacement and observes the induced
/// subgraph. Dyads between two sampled nodes are known, present or absent.
pub fn sample_induced_observation<R: Rng + ?Sized>(
    g: &Network,
    fraction: f64,
    rng: &mut R,
) -> Result<(ObservationMask, Network)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CcmError::invalid(format!(
            "sampling fraction {fraction} outside [0, 1]"
        )));
    }
    let n = g.n();
    let m = (fraction * n as f64).round() as usize;
    let mut sampled = vec![false; n];
    for v in index::sample(rng, n, m.min(n)) {
        sampled[v] = true;
    }
    Ok(observe(g, sampled))
}

/// Samples nodes class by class with per-class fractions.
pub fn sample_stratified_observation<R: Rng + ?Sized>(
    g: &Network,
    classes: &NodeClassification,
    fractions: &[f64],
    rng: &mut R,
) -> Result<(ObservationMask, Network)> {
    if fractions.len() != classes.q() {
        return Err(CcmError::Dimension(format!(
            "{} sampling fractions for {} classes",
            fractions.len(),
            classes.q()
        )));
    }
    let mut sampled = vec![false; g.n()];
    for (k, &s) in fractions.iter().enumerate() {
        if !(0.0..=1.0).contains(&s) {
            return Err(CcmError::invalid(format!(
                "sampling fraction {s} outside [0, 1]"
            )));
        }
        let members: Vec<usize> = (0..g.n()).filter(|&v| classes.label(v) == k).collect();
        let m = (s * members.len() as f64).round() as usize;
        for idx in index::sample(rng, members.len(), m.min(members.len())) {
            sampled[members[idx]] = true;
        }
    }
    Ok(observe(g, sampled))
}

fn observe(g: &Network, sampled: Vec<bool>) -> (ObservationMask, Network) {
    let observed = g.filtered(|i, j| sampled[i] && sampled[j]);
    (ObservationMask::induced(sampled), observed)
}

fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader.lines().enumerate().map(|(k, l)| (k + 1, l))
}

/// Reads "i j" pairs, 0-based; `#` comment lines and blank lines are skipped.
/// When `n` is `None` the node count is one past the largest id.
pub fn read_edge_list<R: BufRead>(reader: R, n: Option<usize>, name: &str) -> Result<Network> {
    let mut pairs_read = Vec::new();
    for (line_no, line) in data_lines(reader) {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut it = t.split_whitespace();
        let mut next = || -> Result<usize> {
            it.next()
                .ok_or_else(|| CcmError::parse(name, line_no, "expected two node ids"))?
                .parse()
                .map_err(|_| CcmError::parse(name, line_no, "node id is not an integer"))
        };
        let (i, j) = (next()?, next()?);
        pairs_read.push((i, j));
    }
    let max_id = pairs_read
        .iter()
        .map(|&(i, j)| i.max(j) + 1)
        .max()
        .unwrap_or(0);
    let n = match n {
        Some(n) if n < max_id => {
            return Err(CcmError::Dimension(format!(
                "{name} references node {} but n = {n}",
                max_id - 1
            )))
        }
        Some(n) => n,
        None => max_id,
    };
    Network::from_edges(n, pairs_read)
}

/// Reads a "node,label" file. Labels are arbitrary strings mapped to category
/// indices in order of first appearance after sorting; returns the
/// classification and the category names.
pub fn read_labels<R: BufRead>(
    reader: R,
    n: usize,
    name: &str,
) -> Result<(NodeClassification, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "node" || &headers[1] != "label" {
        return Err(CcmError::parse(name, 1, "expected header \"node,label\""));
    }
    let mut raw: Vec<Option<String>> = vec![None; n];
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let v: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CcmError::parse(name, line, "node id is not an integer"))?;
        if v >= n {
            return Err(CcmError::Dimension(format!(
                "{name}:{line}: node {v} out of range for n = {n}"
            )));
        }
        if raw[v].is_some() {
            return Err(CcmError::parse(
                name,
                line,
                format!("node {v} labeled twice"),
            ));
        }
        raw[v] = Some(rec.get(1).unwrap_or("").to_string());
    }
    let mut names: Vec<String> = raw.iter().flatten().cloned().collect();
    names.sort();
    names.dedup();
    let mut labels = Vec::with_capacity(n);
    for (v, r) in raw.iter().enumerate() {
        let r = r
            .as_ref()
            .ok_or_else(|| CcmError::invalid(format!("{name}: node {v} has no label")))?;
        labels.push(names.binary_search(r).expect("label indexed"));
    }
    let q = names.len().max(1);
    Ok((NodeClassification::new(labels, q)?, names))
}

/// Reads one sampled node id per line.
pub fn read_mask<R: BufRead>(reader: R, n: usize, name: &str) -> Result<ObservationMask> {
    let mut ids = Vec::new();
    for (line_no, line) in data_lines(reader) {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: usize = t
            .parse()
            .map_err(|_| CcmError::parse(name, line_no, "node id is not an integer"))?;
        if v >= n {
            return Err(CcmError::Dimension(format!(
                "{name}:{line_no}: sampled node {v} out of range for n = {n}"
            )));
        }
        ids.push(v);
    }
    ObservationMask::from_sampled_ids(n, &ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path4() -> Network {
        Network::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn degree_distribution_examples() {
        assert_eq!(degree_distribution(&path4()).counts, vec![0, 2, 2, 0]);
        assert_eq!(
            degree_distribution(&Network::empty(3)).counts,
            vec![3, 0, 0]
        );
        assert_eq!(
            degree_distribution(&Network::complete(5)).counts,
            vec![0, 0, 0, 0, 5]
        );
    }

    #[test]
    fn mixing_matrix_examples() {
        let c = NodeClassification::new(vec![0, 0, 1, 1], 2).unwrap();
        let g = Network::from_edges(4, [(0, 2), (1, 3), (0, 1)]).unwrap();
        let mm = mixing_matrix(&g, &c).unwrap();
        assert_eq!(mm.rows(), vec![vec![1, 2], vec![2, 0]]);
        assert_eq!(mm.cells(), vec![1, 2, 0]);

        let mm = mixing_matrix(&Network::empty(4), &c).unwrap();
        assert_eq!(mm.total_edges(), 0);

        let c = NodeClassification::from_class_sizes(&[3, 2]).unwrap();
        let mm = mixing_matrix(&Network::complete(5), &c).unwrap();
        assert_eq!(mm.rows(), vec![vec![3, 6], vec![6, 1]]);
    }

    #[test]
    fn label_out_of_range() {
        assert!(NodeClassification::new(vec![0, 2], 2).is_err());
    }

    #[test]
    fn cell_indices_are_dense() {
        for q in 1..6 {
            let mut seen = vec![];
            for k in 0..q {
                for l in k..q {
                    seen.push(cell_index(q, k, l));
                    assert_eq!(cell_index(q, k, l), cell_index(q, l, k));
                }
            }
            assert_eq!(seen, (0..q * (q + 1) / 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn toggle_is_an_involution() {
        let mut g = path4();
        let before = g.clone();
        g.toggle(0, 3).unwrap();
        assert!(g.has_edge(3, 0));
        g.toggle(3, 0).unwrap();
        assert_eq!(g, before);
        assert!(g.toggle(1, 1).is_err());
    }

    #[test]
    fn toggle_updates_degree_counts() {
        let mut g = path4();
        let delta = g.toggle(1, 2).unwrap();
        assert!(!delta.added);
        assert_eq!(delta.degrees_before, (2, 2));
        assert_eq!(g.degree_counts(), &[0, 4, 0, 0]);
    }

    #[test]
    fn toggle_touches_one_mixing_cell() {
        let c = NodeClassification::new(vec![0, 0, 1, 1], 2).unwrap();
        let mut g = path4();
        g.track_mixing(&c).unwrap();
        let before = g.mixing_cells().unwrap().to_vec();
        let delta = g.toggle(0, 3).unwrap();
        let after = g.mixing_cells().unwrap();
        let changed: Vec<usize> = (0..3).filter(|&k| before[k] != after[k]).collect();
        assert_eq!(changed, vec![delta.cell.unwrap()]);
        assert_eq!(delta.cell, Some(c.cell_index(0, 1)));
    }

    #[test]
    fn induced_observation_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Network::complete(6);
        let (mask, obs) = sample_induced_observation(&g, 1.0, &mut rng).unwrap();
        assert_eq!(obs, g);
        assert_eq!(mask.unknown_dyad_count(), 0);
        let (mask, obs) = sample_induced_observation(&g, 0.0, &mut rng).unwrap();
        assert_eq!(obs.edge_count(), 0);
        assert_eq!(mask.unknown_dyad_count(), 15);
        assert!(sample_induced_observation(&g, 1.5, &mut rng).is_err());
    }

    #[test]
    fn induced_observation_is_seed_deterministic() {
        let g = Network::complete(30);
        let a = sample_induced_observation(&g, 0.4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_induced_observation(&g, 0.4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.0.sampled(), b.0.sampled());
        assert_eq!(a.1.edges(), b.1.edges());
        assert_eq!(a.0.sampled_ids().unwrap().len(), 12);
    }

    #[test]
    fn random_unknown_covers_exactly_unknown_dyads() {
        let mask = ObservationMask::from_sampled_ids(6, &[0, 2, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hits = std::collections::BTreeMap::new();
        for _ in 0..24_000 {
            let d = mask.random_unknown(&mut rng).unwrap();
            assert!(!mask.is_known(d.0, d.1));
            *hits.entry(d).or_insert(0usize) += 1;
        }
        assert_eq!(hits.len(), mask.unknown_dyad_count());
        assert_eq!(mask.unknown_dyad_count(), 12);
        for &c in hits.values() {
            // 2000 expected per dyad
            assert!((1750..2250).contains(&c), "{c}");
        }
    }

    #[test]
    fn dyad_mask() {
        let mask = ObservationMask::from_unknown_dyads(4, &[(2, 1), (0, 3)]).unwrap();
        assert!(!mask.is_known(1, 2));
        assert!(mask.is_known(0, 1));
        assert_eq!(mask.unknown_dyads(), vec![(0, 3), (1, 2)]);
    }

    #[test]
    fn edge_list_parsing() {
        let text = "# comment\n0 1\n\n2 3\n";
        let g = read_edge_list(text.as_bytes(), None, "t").unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.edge_count(), 2);
        assert!(read_edge_list("0 1\n".as_bytes(), Some(1), "t").is_err());
        assert!(read_edge_list("0 x\n".as_bytes(), None, "t").is_err());
        assert!(read_edge_list("0 1\n1 0\n".as_bytes(), None, "t").is_err());
        let mut out = Vec::new();
        g.write_edge_list(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0 1\n2 3\n");
    }

    #[test]
    fn label_and_mask_parsing() {
        let (c, names) = read_labels("node,label\n0,b\n1,a\n2,b\n".as_bytes(), 3, "t").unwrap();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(c.labels(), &[1, 0, 1]);
        assert!(read_labels("node,label\n0,a\n".as_bytes(), 2, "t").is_err());
        let m = read_mask("0\n2\n".as_bytes(), 3, "t").unwrap();
        assert!(m.is_known(0, 2));
        assert!(!m.is_known(0, 1));
        assert!(read_mask("5\n".as_bytes(), 3, "t").is_err());
    }
}

//! Graphicality of classification mixing matrices and constructive
//! realization. A symmetric non-negative integer matrix is the mixing matrix
//! of some network with the given class sizes iff every cell is within the
//! number of node pairs available to it.

use std::io::BufRead;

use rand::seq::index;
use rand::Rng;

use crate::error::{CcmError, Result};
use crate::graph::{Dyad, MixingMatrix, Network, NodeClassification};

/// Target mixing matrix together with the class sizes it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct MmTarget {
    classes: NodeClassification,
    matrix: MixingMatrix,
}

impl MmTarget {
    /// Validates symmetry, non-negativity and dimensions. Nodes are labeled
    /// in contiguous blocks by class.
    pub fn new(class_sizes: &[usize], rows: &[Vec<i64>]) -> Result<Self> {
        let q = class_sizes.len();
        if rows.len() != q {
            return Err(CcmError::Dimension(format!(
                "{} matrix rows for {q} classes",
                rows.len()
            )));
        }
        let mut conv = Vec::with_capacity(q);
        for (k, row) in rows.iter().enumerate() {
            let mut r = Vec::with_capacity(row.len());
            for (l, &v) in row.iter().enumerate() {
                if v < 0 {
                    return Err(CcmError::invalid(format!(
                        "negative entry {v} at ({k},{l})"
                    )));
                }
                r.push(v as u64);
            }
            conv.push(r);
        }
        let matrix = MixingMatrix::from_rows(&conv)?;
        Self::from_parts(NodeClassification::from_class_sizes(class_sizes)?, matrix)
    }

    pub fn from_parts(classes: NodeClassification, matrix: MixingMatrix) -> Result<Self> {
        if classes.q() != matrix.q() {
            return Err(CcmError::Dimension(format!(
                "{} classes but a {}x{} matrix",
                classes.q(),
                matrix.q(),
                matrix.q()
            )));
        }
        Ok(MmTarget { classes, matrix })
    }

    pub fn classes(&self) -> &NodeClassification {
        &self.classes
    }

    pub fn matrix(&self) -> &MixingMatrix {
        &self.matrix
    }
}

/// True iff `MM_kl ≤ n_k·n_l` off the diagonal and `MM_kk ≤ n_k(n_k−1)/2`.
pub fn is_graphical(t: &MmTarget) -> bool {
    t.matrix
        .cells()
        .iter()
        .zip(t.classes.cell_capacities())
        .all(|(&m, cap)| m <= cap)
}

fn require_graphical(t: &MmTarget) -> Result<()> {
    if !is_graphical(t) {
        return Err(CcmError::invalid(
            "mixing matrix is not graphical for these class sizes",
        ));
    }
    Ok(())
}

/// Node pairs of each cell in lexicographic order.
fn cell_slots(c: &NodeClassification) -> Vec<Vec<Dyad>> {
    let mut slots = vec![Vec::new(); c.cell_count()];
    for i in 0..c.n() {
        for j in i + 1..c.n() {
            slots[c.cell_index(c.label(i), c.label(j))].push((i, j));
        }
    }
    slots
}

/// Realization following the existence proof: start from the complete graph
/// and, while some cell holds more edges than its target, remove the
/// lexicographically smallest edge from the first such cell. Returns the
/// network and the number of removals.
pub fn realize_by_removal(t: &MmTarget) -> Result<(Network, usize)> {
    require_graphical(t)?;
    let c = &t.classes;
    let target = t.matrix.cells();
    let mut g = Network::complete(c.n());
    g.track_mixing(c)?;
    let slots = cell_slots(c);
    let mut cursor = vec![0usize; slots.len()];
    let mut removals = 0;
    loop {
        let current = g.mixing_cells().expect("tracked");
        let Some(cell) = (0..target.len()).find(|&k| current[k] > target[k]) else {
            break;
        };
        // edges in a cell are only ever removed in slot order, so the cursor
        // points at the smallest remaining one
        let (i, j) = slots[cell][cursor[cell]];
        cursor[cell] += 1;
        g.toggle(i, j)?;
        removals += 1;
    }
    Ok((g, removals))
}

/// Direct construction: each cell gets its lexicographically first `MM_kl`
/// node pairs.
pub fn realize_direct(t: &MmTarget) -> Result<Network> {
    require_graphical(t)?;
    let target = t.matrix.cells();
    let edges = cell_slots(&t.classes)
        .into_iter()
        .zip(&target)
        .flat_map(|(s, &m)| s.into_iter().take(m as usize));
    Network::from_edges(t.classes.n(), edges)
}

/// As [`realize_direct`] but with the pairs of each cell chosen uniformly at
/// random.
pub fn realize_random<R: Rng + ?Sized>(t: &MmTarget, rng: &mut R) -> Result<Network> {
    require_graphical(t)?;
    let target = t.matrix.cells();
    let mut edges = Vec::with_capacity(t.matrix.total_edges() as usize);
    for (s, &m) in cell_slots(&t.classes).iter().zip(&target) {
        let mut picked: Vec<usize> = index::sample(rng, s.len(), m as usize).into_vec();
        picked.sort_unstable();
        edges.extend(picked.into_iter().map(|k| s[k]));
    }
    Network::from_edges(t.classes.n(), edges)
}

/// Reads a symmetric integer matrix, one row per line, separated by commas
/// or whitespace. Blank lines and `#` comments are skipped.
pub fn read_matrix<R: BufRead>(reader: R, name: &str) -> Result<Vec<Vec<i64>>> {
    let mut rows = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row = t
            .split(|ch: char| ch == ',' || ch.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<i64>()
                    .map_err(|_| CcmError::parse(name, k + 1, format!("bad integer `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Parses class sizes given as a comma-separated list.
pub fn parse_class_sizes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CcmError::invalid(format!("bad class size `{t}`")))
        })
        .collect()
}

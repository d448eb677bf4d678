//! Viral genetic linkage networks from aligned sequences: TN93 pairwise
//! distances, thresholded into edges, with node attributes joined by id.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{CcmError, Result};
use crate::graph::{Network, NodeClassification, ObservationMask};

pub const DEFAULT_THRESHOLD: f64 = 0.015;

/// Treatment of sites where a sequence has a symbol other than A, C, G, T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmbiguityPolicy {
    /// Drop the site from this pair.
    #[default]
    Skip,
    /// Spread IUPAC codes evenly over the bases they stand for. Gaps are
    /// still dropped.
    ResolveFractional,
}

impl std::str::FromStr for AmbiguityPolicy {
    type Err = CcmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(AmbiguityPolicy::Skip),
            "resolve-fractional" | "resolve" => Ok(AmbiguityPolicy::ResolveFractional),
            _ => Err(CcmError::invalid(format!(
                "unknown ambiguity policy `{s}` (expected skip or resolve-fractional)"
            ))),
        }
    }
}

/// Bit set over A=1, C=2, G=4, T=8; 0 marks a gap or unknown symbol.
fn encode(b: u8) -> u8 {
    match b.to_ascii_uppercase() {
        b'A' => 1,
        b'C' => 2,
        b'G' => 4,
        b'T' | b'U' => 8,
        b'R' => 1 | 4,
        b'Y' => 2 | 8,
        b'S' => 2 | 4,
        b'W' => 1 | 8,
        b'K' => 4 | 8,
        b'M' => 1 | 2,
        b'B' => 2 | 4 | 8,
        b'D' => 1 | 4 | 8,
        b'H' => 1 | 2 | 8,
        b'V' => 1 | 2 | 4,
        b'N' | b'?' => 15,
        _ => 0,
    }
}

fn is_resolved(code: u8) -> bool {
    code.count_ones() == 1
}

/// Aligned sequences with unique ids, stored as base bit sets.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSequenceSet {
    ids: Vec<String>,
    seqs: Vec<Vec<u8>>,
}

impl AlignedSequenceSet {
    pub fn new(records: Vec<(String, String)>) -> Result<Self> {
        let mut seen = FxHashMap::default();
        let mut ids = Vec::with_capacity(records.len());
        let mut seqs = Vec::with_capacity(records.len());
        for (id, s) in records {
            if seen.insert(id.clone(), ()).is_some() {
                return Err(CcmError::invalid(format!("duplicate sequence id `{id}`")));
            }
            let enc: Vec<u8> = s
                .bytes()
                .filter(|b| !b.is_ascii_whitespace())
                .map(encode)
                .collect();
            if let Some(first) = seqs.first().map(Vec::len) {
                if enc.len() != first {
                    return Err(CcmError::Dimension(format!(
                        "sequence `{id}` has length {} but alignment length is {first}",
                        enc.len()
                    )));
                }
            }
            ids.push(id);
            seqs.push(enc);
        }
        Ok(AlignedSequenceSet { ids, seqs })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn alignment_len(&self) -> usize {
        self.seqs.first().map(Vec::len).unwrap_or(0)
    }

    pub fn distance(&self, i: usize, j: usize, policy: AmbiguityPolicy) -> Result<f64> {
        tn93_encoded(&self.seqs[i], &self.seqs[j], policy)
    }
}

/// Reads `>id` header lines followed by sequence lines. The id is the first
/// whitespace-delimited token of the header.
pub fn read_fasta<R: BufRead>(reader: R, name: &str) -> Result<AlignedSequenceSet> {
    let mut records: Vec<(String, String)> = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with(';') {
            continue;
        }
        if let Some(h) = t.strip_prefix('>') {
            let id = h.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(CcmError::parse(name, k + 1, "empty sequence id"));
            }
            records.push((id.to_string(), String::new()));
        } else {
            match records.last_mut() {
                Some((_, s)) => s.push_str(t),
                None => {
                    return Err(CcmError::parse(
                        name,
                        k + 1,
                        "sequence data before the first `>` header",
                    ))
                }
            }
        }
    }
    AlignedSequenceSet::new(records)
}

/// Pair counts over the 4×4 base table (A, C, G, T).
fn pair_counts(a: &[u8], b: &[u8], policy: AmbiguityPolicy) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    match policy {
        AmbiguityPolicy::Skip => {
            let mut c = [[0u64; 4]; 4];
            for (&x, &y) in a.iter().zip(b) {
                if is_resolved(x) && is_resolved(y) {
                    c[x.trailing_zeros() as usize][y.trailing_zeros() as usize] += 1;
                }
            }
            for k in 0..4 {
                for l in 0..4 {
                    m[k][l] = c[k][l] as f64;
                }
            }
        }
        AmbiguityPolicy::ResolveFractional => {
            for (&x, &y) in a.iter().zip(b) {
                if x == 0 || y == 0 {
                    continue;
                }
                let w = 1.0 / (x.count_ones() * y.count_ones()) as f64;
                for k in (0..4).filter(|k| x & (1 << k) != 0) {
                    for l in (0..4).filter(|l| y & (1 << l) != 0) {
                        m[k][l] += w;
                    }
                }
            }
        }
    }
    m
}

/// TN93 distance between two aligned nucleotide strings. Returns NaN when a
/// logarithm argument is not positive (saturated pair).
pub fn tn93_distance(a: &str, b: &str, policy: AmbiguityPolicy) -> Result<f64> {
    let ea: Vec<u8> = a.bytes().map(encode).collect();
    let eb: Vec<u8> = b.bytes().map(encode).collect();
    tn93_encoded(&ea, &eb, policy)
}

fn tn93_encoded(a: &[u8], b: &[u8], policy: AmbiguityPolicy) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CcmError::Dimension(format!(
            "sequences of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    tn93_from_counts(&pair_counts(a, b, policy))
}

const A: usize = 0;
const C: usize = 1;
const G: usize = 2;
const T: usize = 3;

fn tn93_from_counts(m: &[[f64; 4]; 4]) -> Result<f64> {
    let total: f64 = m.iter().flatten().sum();
    if total <= 0.0 {
        return Err(CcmError::invalid("no comparable sites after filtering"));
    }
    let mut pi = [0.0; 4];
    for k in 0..4 {
        for l in 0..4 {
            pi[k] += m[k][l];
            pi[l] += m[k][l];
        }
    }
    for p in &mut pi {
        *p /= 2.0 * total;
    }
    let p1 = (m[A][G] + m[G][A]) / total;
    let p2 = (m[C][T] + m[T][C]) / total;
    let q = (m[A][C] + m[C][A] + m[A][T] + m[T][A] + m[G][C] + m[C][G] + m[G][T] + m[T][G]) / total;
    if p1 == 0.0 && p2 == 0.0 && q == 0.0 {
        return Ok(0.0);
    }
    let (pr, py) = (pi[A] + pi[G], pi[C] + pi[T]);
    let (ag, ct) = (pi[A] * pi[G], pi[C] * pi[T]);

    let mut d = 0.0;
    if ag > 0.0 {
        d -= 2.0 * ag / pr * (1.0 - pr * p1 / (2.0 * ag) - q / (2.0 * pr)).ln();
    }
    if ct > 0.0 {
        d -= 2.0 * ct / py * (1.0 - py * p2 / (2.0 * ct) - q / (2.0 * py)).ln();
    }
    if q > 0.0 {
        let mut coef = pr * py;
        if ag > 0.0 {
            coef -= ag * py / pr;
        }
        if ct > 0.0 {
            coef -= ct * pr / py;
        }
        d -= 2.0 * coef * (1.0 - q / (2.0 * pr * py)).ln();
    }
    Ok(if d.is_finite() { d.max(0.0) } else { f64::NAN })
}

/// One row of the attribute table.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub id: String,
    pub label: String,
    pub sequenced: bool,
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Reads a CSV with header `id,label,sequenced`.
pub fn read_attributes<R: BufRead>(reader: R, name: &str) -> Result<Vec<Attribute>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let h = rdr.headers()?.clone();
    if h.len() < 3 || &h[0] != "id" || &h[1] != "label" || &h[2] != "sequenced" {
        return Err(CcmError::parse(
            name,
            1,
            "expected header \"id,label,sequenced\"",
        ));
    }
    let mut seen = FxHashMap::default();
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(CcmError::parse(name, line, "empty id"));
        }
        if seen.insert(id.clone(), ()).is_some() {
            return Err(CcmError::parse(name, line, format!("duplicate id `{id}`")));
        }
        let sequenced = parse_flag(rec.get(2).unwrap_or("")).ok_or_else(|| {
            CcmError::parse(name, line, "sequenced must be 0/1, true/false or yes/no")
        })?;
        out.push(Attribute {
            id,
            label: rec.get(1).unwrap_or("").to_string(),
            sequenced,
        });
    }
    Ok(out)
}

/// Label given to sequences absent from the attribute table.
pub const UNKNOWN_LABEL: &str = "unknown";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VglWarnings {
    /// Pairs whose distance could not be estimated; they get no edge.
    pub inestimable_pairs: usize,
    /// Attribute rows marked sequenced with no matching sequence.
    pub unmatched_attribute_ids: Vec<String>,
    /// Sequences with no attribute row.
    pub unlabeled_sequence_ids: Vec<String>,
    /// Sequences whose attribute row says `sequenced = 0`.
    pub sequenced_flag_mismatches: Vec<String>,
}

impl VglWarnings {
    pub fn count(&self) -> usize {
        self.inestimable_pairs
            + self.unmatched_attribute_ids.len()
            + self.unlabeled_sequence_ids.len()
            + self.sequenced_flag_mismatches.len()
    }
}

/// Linkage network over all individuals. Sequenced individuals come first in
/// sequence-file order, followed by the unsequenced ones in attribute order.
#[derive(Debug, Clone, PartialEq)]
pub struct VglNetwork {
    pub ids: Vec<String>,
    pub network: Network,
    /// Dyads are known iff both endpoints have a sequence.
    pub mask: ObservationMask,
    pub labels: Option<(NodeClassification, Vec<String>)>,
    pub warnings: VglWarnings,
}

/// Links every pair at distance at most `threshold`.
pub fn build_vgl_network(
    seqs: &AlignedSequenceSet,
    threshold: f64,
    policy: AmbiguityPolicy,
    attrs: Option<&[Attribute]>,
) -> Result<VglNetwork> {
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(CcmError::invalid(format!(
            "threshold {threshold} must be non-negative"
        )));
    }
    let m = seqs.len();
    let rows: Vec<(Vec<usize>, usize)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut linked = Vec::new();
            let mut bad = 0;
            for j in i + 1..m {
                match seqs.distance(i, j, policy) {
                    Ok(d) if d.is_nan() => bad += 1,
                    Ok(d) if d <= threshold => linked.push(j),
                    Ok(_) => {}
                    Err(_) => bad += 1,
                }
            }
            (linked, bad)
        })
        .collect();
    let mut warnings = VglWarnings::default();
    let mut edges = Vec::new();
    for (i, (linked, bad)) in rows.into_iter().enumerate() {
        warnings.inestimable_pairs += bad;
        edges.extend(linked.into_iter().map(|j| (i, j)));
    }

    let mut ids = seqs.ids().to_vec();
    let mut labels = None;
    if let Some(attrs) = attrs {
        let by_id: FxHashMap<&str, &Attribute> = attrs.iter().map(|a| (a.id.as_str(), a)).collect();
        let seq_index: FxHashMap<&str, usize> = seqs
            .ids()
            .iter()
            .enumerate()
            .map(|(k, s)| (s.as_str(), k))
            .collect();
        let mut raw: Vec<String> = Vec::with_capacity(attrs.len().max(m));
        for id in seqs.ids() {
            match by_id.get(id.as_str()) {
                Some(a) => {
                    if !a.sequenced {
                        warnings.sequenced_flag_mismatches.push(id.clone());
                    }
                    raw.push(a.label.clone());
                }
                None => {
                    warnings.unlabeled_sequence_ids.push(id.clone());
                    raw.push(UNKNOWN_LABEL.to_string());
                }
            }
        }
        for a in attrs {
            if seq_index.contains_key(a.id.as_str()) {
                continue;
            }
            if a.sequenced {
                warnings.unmatched_attribute_ids.push(a.id.clone());
            }
            ids.push(a.id.clone());
            raw.push(a.label.clone());
        }
        let mut names = raw.clone();
        names.sort();
        names.dedup();
        let idx = raw
            .iter()
            .map(|r| names.binary_search(r).expect("label indexed"))
            .collect();
        labels = Some((NodeClassification::new(idx, names.len().max(1))?, names));
    }
    let n = ids.len();
    let network = Network::from_edges(n, edges)?;
    let mask = ObservationMask::from_sampled_ids(n, &(0..m).collect::<Vec<_>>())?;
    Ok(VglNetwork {
        ids,
        network,
        mask,
        labels,
        warnings,
    })
}

impl VglNetwork {
    /// `node,id` mapping from internal indices to input ids.
    pub fn write_ids<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["node", "id"])?;
        for (k, id) in self.ids.iter().enumerate() {
            wtr.write_record([k.to_string(), id.clone()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// `node,label` file readable by [`crate::graph::read_labels`].
    pub fn write_labels<W: Write>(&self, w: W) -> Result<()> {
        let Some((c, names)) = &self.labels else {
            return Err(CcmError::invalid("network has no labels"));
        };
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["node", "label"])?;
        for (k, &l) in c.labels().iter().enumerate() {
            wtr.write_record([k.to_string(), names[l].clone()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

//! Brute-force oracles over every labeled network on a few nodes.

#![allow(dead_code)]

use std::collections::HashMap;

use ccm_core::graph::{pairs, Network, ObservationMask};
use ccm_core::model::{log_q_class, phi, CcmSpec, CongruenceMapping, Statistic};

/// Dyads in the bit order used by [`bits`].
pub fn dyads(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(pairs(n));
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j));
        }
    }
    out
}

/// Edge set of `g` as a bitmask over [`dyads`].
pub fn bits(g: &Network) -> u32 {
    let n = g.n();
    let mut b = 0;
    for &(i, j) in g.edges() {
        b |= 1 << dyad_index(n, i, j);
    }
    b
}

pub fn dyad_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Calls `f(bits, network)` once for each of the `2^{n(n-1)/2}` networks,
/// walking them in Gray-code order so each step is a single toggle.
pub fn for_each_network<F: FnMut(u32, &Network)>(
    n: usize,
    classes: Option<&ccm_core::graph::NodeClassification>,
    mut f: F,
) {
    let d = dyads(n);
    let mut g = Network::empty(n);
    if let Some(c) = classes {
        g.track_mixing(c).unwrap();
    }
    let mut b = 0u32;
    f(b, &g);
    for k in 1u64..(1u64 << d.len()) {
        let flip = k.trailing_zeros() as usize;
        let (i, j) = d[flip];
        g.toggle_unchecked(i, j);
        b ^= 1 << flip;
        f(b, &g);
    }
}

/// Exact class sizes `|c(x)|` by counting every network.
pub fn class_counts(n: usize, mapping: &CongruenceMapping) -> HashMap<Statistic, u64> {
    let classes = match mapping {
        CongruenceMapping::MixingMatrix(c) => Some(c),
        CongruenceMapping::DegreeDistribution => None,
    };
    let mut counts = HashMap::new();
    for_each_network(n, classes, |_, g| {
        *counts.entry(phi(g, mapping).unwrap()).or_insert(0u64) += 1;
    });
    counts
}

/// Exact network law `Q(φ(g)) / |c(φ(g))|`, indexed by [`bits`], with class
/// sizes counted by enumeration. With `given = (observed, mask)` the law is
/// conditioned on agreeing with `observed` on every known dyad.
pub fn exact_law(
    spec: &CcmSpec,
    n: usize,
    given: Option<(&Network, &ObservationMask)>,
) -> Vec<f64> {
    let counts = class_counts(n, &spec.mapping);
    let classes = match &spec.mapping {
        CongruenceMapping::MixingMatrix(c) => Some(c),
        CongruenceMapping::DegreeDistribution => None,
    };
    let d = dyads(n);
    let (fixed_mask, fixed_bits) = match given {
        Some((obs, mask)) => {
            let mut m = 0u32;
            for (k, &(i, j)) in d.iter().enumerate() {
                if mask.is_known(i, j) {
                    m |= 1 << k;
                }
            }
            (m, bits(obs) & m)
        }
        None => (0, 0),
    };
    let mut law = vec![0.0; 1 << d.len()];
    for_each_network(n, classes, |b, g| {
        if b & fixed_mask != fixed_bits {
            return;
        }
        let x = phi(g, &spec.mapping).unwrap();
        let lq = log_q_class(&x, &spec.law).unwrap();
        law[b as usize] = (lq - (counts[&x] as f64).ln()).exp();
    });
    let s: f64 = law.iter().sum();
    law.iter_mut().for_each(|p| *p /= s);
    law
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical law over networks from visit counts.
pub fn empirical(counts: &[u64]) -> Vec<f64> {
    let s: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / s as f64).collect()
}

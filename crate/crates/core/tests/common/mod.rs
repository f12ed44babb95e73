//! Independent reference computations shared by the property and acceptance
//! targets. Written directly from the definitions, without calling the code
//! under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use auctionflow::flows::{BinAssignments, FlowGraph};
use auctionflow::profiles::ProfileLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect()
}

fn means(rows: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let p = rows[0].len();
    let mut sums = vec![vec![0.0; p]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        for j in 0..p {
            sums[l][j] += r[j];
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c.max(1) as f64;
        }
    }
    sums
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// `(trace W, trace B, trace T)` from the scatter-matrix definitions.
pub fn traces(rows: &[Vec<f64>], labels: &[usize], k: usize) -> (f64, f64, f64) {
    let mu = means(rows, labels, k);
    let grand = means(rows, &vec![0; rows.len()], 1).remove(0);
    let w = rows.iter().zip(labels).map(|(r, &l)| sq(r, &mu[l])).sum();
    let b = labels.iter().map(|&l| sq(&mu[l], &grand)).sum();
    let t = rows.iter().map(|r| sq(r, &grand)).sum();
    (w, b, t)
}

/// Minimum within-cluster SSE over every partition of the rows into exactly
/// `k` non-empty groups, by enumerating label vectors.
pub fn exhaustive_min_sse(rows: &[Vec<f64>], k: usize) -> f64 {
    let n = rows.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let used: BTreeSet<usize> = labels.iter().copied().collect();
        if used.len() == k {
            best = best.min(traces(rows, &labels, k).0);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Bias-corrected skewness from k-statistics, `k3 / k2^(3/2)`.
pub fn skewness_oracle(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let s2: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let s3: f64 = xs.iter().map(|x| (x - mean).powi(3)).sum();
    let k2 = s2 / (n - 1.0);
    let k3 = n * s3 / ((n - 1.0) * (n - 2.0));
    k3 / k2.powf(1.5)
}

pub fn random_assignments(rng: &mut ChaCha8Rng, bins: usize, players: usize) -> BinAssignments {
    (0..bins)
        .map(|_| {
            let mut bin = BTreeMap::new();
            for p in 0..players {
                if rng.random_bool(0.6) {
                    let l = ProfileLabel::ALL[rng.random_range(0..ProfileLabel::ALL.len())];
                    bin.insert(format!("p{p}"), l);
                }
            }
            bin
        })
        .collect()
}

/// Node sizes, joins and departures counted straight from assignments, and
/// compared against the graph: size = inflow + joining = outflow + departing.
pub fn conservation_holds(graph: &FlowGraph, a: &BinAssignments) -> Result<(), String> {
    let bins = a.len();
    for node in &graph.nodes {
        let t = node.bin_index;
        let members: Vec<&String> = a[t]
            .iter()
            .filter(|(_, l)| **l == node.label)
            .map(|(p, _)| p)
            .collect();
        let size = members.len() as u64;
        let joining = members
            .iter()
            .filter(|p| t == 0 || !a[t - 1].contains_key(**p))
            .count() as u64;
        let departing = members
            .iter()
            .filter(|p| t + 1 == bins || !a[t + 1].contains_key(**p))
            .count() as u64;
        let inflow: u64 = graph
            .links
            .iter()
            .filter(|l| l.target == node.node_id)
            .map(|l| l.value)
            .sum();
        let outflow: u64 = graph
            .links
            .iter()
            .filter(|l| l.source == node.node_id)
            .map(|l| l.value)
            .sum();
        if node.size != size || node.joining != joining || node.departing != departing {
            return Err(format!("node {} counts differ from assignments", node.node_id));
        }
        if inflow + joining != size || outflow + departing != size {
            return Err(format!("node {} does not conserve flow", node.node_id));
        }
    }
    let expected: usize = a.iter().map(|b| b.values().collect::<BTreeSet<_>>().len()).sum();
    if expected != graph.nodes.len() {
        return Err("node count differs from manifested labels".into());
    }
    Ok(())
}

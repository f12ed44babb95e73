//! Quintile standardization and multi-start K-means with scatter-based
//! model selection.
//!
//! K-means here is Lloyd's iteration: assign every row to its nearest
//! centroid (squared Euclidean, ties to the lowest centroid index), then move
//! each centroid to the mean of its rows, until an assignment repeats or the
//! iteration cap is hit. A cluster left empty by an assignment step is
//! reseeded with the row farthest from its own centroid. Each restart draws
//! its initial centroids from a ChaCha stream keyed by `(seed, restart)`, so
//! results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{PlayerBinKpi, KPI_FEATURES};

/// Row-major matrix of clustering features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    /// Columns holding 0/1 booleans.
    pub boolean: Vec<bool>,
    pub standardized: bool,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(feature_names: Vec<String>, boolean: Vec<bool>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = feature_names.len();
        if boolean.len() != p {
            return Err(Error::Invariant(
                "boolean mask length differs from feature count".into(),
            ));
        }
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Invariant(format!(
                    "row {i} has {} features, expected {p}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Invariant(format!("row {i} has non-finite value {v}")));
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureMatrix {
            feature_names,
            boolean,
            standardized: false,
            data,
        })
    }

    /// Unnamed, non-boolean features; handy for tests and benchmarks.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let names = (0..p).map(|j| format!("x{j}")).collect();
        Self::new(names, vec![false; p], rows)
    }

    pub fn from_kpis(kpis: &[PlayerBinKpi]) -> Self {
        let rows: Vec<Vec<f64>> = kpis.iter().map(|k| k.features().to_vec()).collect();
        Self::new(
            KPI_FEATURES.iter().map(|s| s.to_string()).collect(),
            vec![false, false, false, false, true],
            &rows,
        )
        .expect("KPI features are finite")
    }

    pub fn n(&self) -> usize {
        if self.p() == 0 {
            0
        } else {
            self.data.len() / self.p()
        }
    }

    pub fn p(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p().max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

/// Nearest-rank 20/40/60/80th percentile boundaries of a column.
pub fn quintile_boundaries(column: &[f64]) -> [f64; 4] {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    [20, 40, 60, 80].map(|pct| {
        let rank = (pct * n).div_ceil(100).max(1);
        sorted[rank - 1]
    })
}

/// Level 1..=5: the smallest q with `value <= boundary[q]`, else 5.
pub fn quintile_level(value: f64, boundaries: &[f64; 4]) -> u8 {
    boundaries
        .iter()
        .position(|&b| value <= b)
        .map_or(5, |q| q as u8 + 1)
}

/// Replaces each column by its quintile level; boolean columns map
/// false to 1 and true to 5.
pub fn quintile_standardize(matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
    if matrix.standardized {
        return Err(Error::Invariant("matrix is already standardized".into()));
    }
    let n = matrix.n();
    if n == 0 {
        return Err(Error::EmptyInput("cannot standardize a matrix with no rows"));
    }
    let p = matrix.p();
    let mut data = vec![0.0; n * p];
    for j in 0..p {
        let column = matrix.column(j);
        if matrix.boolean[j] {
            for (i, v) in column.iter().enumerate() {
                data[i * p + j] = if *v != 0.0 { 5.0 } else { 1.0 };
            }
        } else {
            let bounds = quintile_boundaries(&column);
            for (i, v) in column.iter().enumerate() {
                data[i * p + j] = quintile_level(*v, &bounds) as f64;
            }
        }
    }
    Ok(FeatureMatrix {
        feature_names: matrix.feature_names.clone(),
        boolean: matrix.boolean.clone(),
        standardized: true,
        data,
    })
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn assign_all(m: &FeatureMatrix, centroids: &[Vec<f64>]) -> Vec<usize> {
    m.rows().map(|r| nearest(r, centroids)).collect()
}

/// Per-cluster means; an empty cluster keeps a zero vector.
pub fn cluster_means(m: &FeatureMatrix, assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let p = m.p();
    let mut sums = vec![vec![0.0; p]; k];
    let mut counts = vec![0usize; k];
    for (row, &c) in m.rows().zip(assignments) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            for v in s.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    sums
}

/// Sum of squared distances from rows to their assigned centroids.
pub fn sse(m: &FeatureMatrix, assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    m.rows()
        .zip(assignments)
        .map(|(r, &c)| sq_dist(r, &centroids[c]))
        .sum()
}

fn repair_empty(m: &FeatureMatrix, assignments: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    let mut sizes = vec![0usize; k];
    for &c in assignments.iter() {
        sizes[c] += 1;
    }
    let mut moved = vec![false; assignments.len()];
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, row) in m.rows().enumerate() {
            let c = assignments[i];
            if moved[i] || sizes[c] < 2 {
                continue;
            }
            let d = sq_dist(row, &centroids[c]);
            if donor.is_none_or(|(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        let (i, _) = donor.expect("k <= n guarantees a donor row");
        sizes[assignments[i]] -= 1;
        assignments[i] = empty;
        sizes[empty] = 1;
        moved[i] = true;
    }
}

/// One run of Lloyd's iteration from given initial centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// SSE after the initial assignment, then after every centroid update.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LloydRun {
    pub fn sse(&self) -> f64 {
        *self.sse_history.last().expect("history is never empty")
    }
}

pub fn lloyd(m: &FeatureMatrix, initial: Vec<Vec<f64>>, max_iter: usize) -> LloydRun {
    let k = initial.len();
    let mut centroids = initial;
    let mut assignments = assign_all(m, &centroids);
    let mut history = vec![sse(m, &assignments, &centroids)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        repair_empty(m, &mut assignments, &centroids, k);
        centroids = cluster_means(m, &assignments, k);
        history.push(sse(m, &assignments, &centroids));
        let next = assign_all(m, &centroids);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    if !converged {
        repair_empty(m, &mut assignments, &centroids, k);
        centroids = cluster_means(m, &assignments, k);
        history.push(sse(m, &assignments, &centroids));
    }
    LloydRun {
        assignments,
        centroids,
        sse_history: history,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            restarts: 100,
            seed,
            max_iter: 100,
        }
    }
}

/// Result of clustering one matrix. Assignments are zero-based cluster
/// indices aligned with the matrix rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub sse: f64,
    pub trace_w: f64,
    pub trace_b: f64,
    pub trace_t: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    pub best_restart: usize,
    pub seed: u64,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }

    /// `trace(W) / trace(B)`, or `None` when there is no between-cluster
    /// scatter.
    pub fn wb_ratio(&self) -> Option<f64> {
        (self.trace_b > 0.0).then(|| self.trace_w / self.trace_b)
    }
}

fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

/// Indices of the first occurrence of each distinct row, in row order.
fn distinct_rows(m: &FeatureMatrix) -> Vec<usize> {
    let mut seen = std::collections::HashSet::new();
    (0..m.n()).filter(|&i| seen.insert(row_key(m.row(i)))).collect()
}

fn initial_centroids(
    m: &FeatureMatrix,
    distinct: &[usize],
    k: usize,
    seed: u64,
    restart: usize,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let picks: Vec<usize> = if distinct.len() >= k {
        rand::seq::index::sample(&mut rng, distinct.len(), k)
            .into_iter()
            .map(|i| distinct[i])
            .collect()
    } else {
        rand::seq::index::sample(&mut rng, m.n(), k).into_vec()
    };
    picks.into_iter().map(|i| m.row(i).to_vec()).collect()
}

/// Multi-start K-means; the restart with the lowest SSE wins, ties to the
/// lowest restart index.
pub fn kmeans(m: &FeatureMatrix, params: &KMeansParams) -> Result<ClusterModel> {
    let n = m.n();
    let k = params.k;
    if k < 1 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let restarts = params.restarts.max(1);
    let distinct = distinct_rows(m);
    let runs: Vec<LloydRun> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            lloyd(
                m,
                initial_centroids(m, &distinct, k, params.seed, r),
                params.max_iter,
            )
        })
        .collect();

    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.sse() < runs[best].sse() {
            best = r;
        }
    }
    let run = runs.into_iter().nth(best).expect("at least one restart");
    let traces = scatter_decomposition(m, &run.assignments, &run.centroids);
    Ok(ClusterModel {
        k,
        sse: sse(m, &run.assignments, &run.centroids),
        trace_w: traces.within,
        trace_b: traces.between,
        trace_t: traces.total,
        iterations: run.iterations,
        converged: run.converged,
        centroids: run.centroids,
        assignments: run.assignments,
        restarts_used: restarts,
        best_restart: best,
        seed: params.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterTraces {
    pub within: f64,
    pub between: f64,
    pub total: f64,
}

/// Traces of the within-cluster, between-cluster and total scatter matrices
/// about the global mean.
pub fn scatter_decomposition(
    m: &FeatureMatrix,
    assignments: &[usize],
    centroids: &[Vec<f64>],
) -> ScatterTraces {
    let p = m.p();
    let n = m.n();
    let mut global = vec![0.0; p];
    for row in m.rows() {
        for (g, v) in global.iter_mut().zip(row) {
            *g += v;
        }
    }
    for g in global.iter_mut() {
        *g /= n as f64;
    }
    let mut within = 0.0;
    let mut between = 0.0;
    let mut total = 0.0;
    for (row, &c) in m.rows().zip(assignments) {
        within += sq_dist(row, &centroids[c]);
        between += sq_dist(&centroids[c], &global);
        total += sq_dist(row, &global);
    }
    ScatterTraces {
        within,
        between,
        total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSelectOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub threshold: f64,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl KSelectOptions {
    pub fn new(seed: u64) -> Self {
        KSelectOptions {
            k_min: 2,
            k_max: 12,
            threshold: 0.3,
            restarts: 100,
            seed,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCandidate {
    pub k: usize,
    pub sse: f64,
    pub wb_ratio: Option<f64>,
    pub converged: bool,
    /// W/B rose relative to the previous converged candidate.
    pub non_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub candidates: Vec<KCandidate>,
    pub chosen_k: usize,
    pub threshold: f64,
    /// Set when the requested range had to be cut to `2..=n-1`.
    pub truncated_to: Option<(usize, usize)>,
    /// No candidate reached the threshold; the lowest ratio was taken.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub model: ClusterModel,
    pub report: KSelectionReport,
}

/// Picks the smallest k whose W/B ratio is at or below the threshold,
/// falling back to the lowest ratio among converged candidates.
pub fn select_k(m: &FeatureMatrix, options: &KSelectOptions) -> Result<KSelection> {
    let n = m.n();
    let mut lo = options.k_min.max(1);
    let mut hi = options.k_max;
    let mut truncated_to = None;
    if n <= hi {
        lo = lo.max(2);
        hi = n.saturating_sub(1);
        truncated_to = Some((lo, hi));
    }
    let tried: Vec<usize> = (lo..=hi).collect();
    if tried.is_empty() {
        return Err(Error::NoConvergence { tried });
    }

    let mut candidates = Vec::new();
    let mut models = Vec::new();
    let mut last_ratio: Option<f64> = None;
    for &k in &tried {
        let model = kmeans(
            m,
            &KMeansParams {
                k,
                restarts: options.restarts,
                seed: options.seed,
                max_iter: options.max_iter,
            },
        )?;
        let ratio = model.wb_ratio();
        let converged = model.converged && ratio.is_some();
        let non_monotone = converged && matches!((last_ratio, ratio), (Some(a), Some(b)) if b > a);
        if converged {
            last_ratio = ratio;
        }
        candidates.push(KCandidate {
            k,
            sse: model.sse,
            wb_ratio: ratio,
            converged,
            non_monotone,
        });
        models.push(model);
    }

    let usable = || candidates.iter().enumerate().filter(|(_, c)| c.converged);
    let mut fallback = false;
    let chosen = match usable().find(|(_, c)| c.wb_ratio.is_some_and(|r| r <= options.threshold)) {
        Some((i, _)) => i,
        None => {
            fallback = true;
            let mut best: Option<(usize, f64)> = None;
            for (i, c) in usable() {
                let r = c.wb_ratio.expect("converged candidates have a ratio");
                if best.is_none_or(|(_, b)| r < b) {
                    best = Some((i, r));
                }
            }
            best.ok_or(Error::NoConvergence { tried: tried.clone() })?.0
        }
    };
    let chosen_k = candidates[chosen].k;
    Ok(KSelection {
        model: models.swap_remove(chosen),
        report: KSelectionReport {
            candidates,
            chosen_k,
            threshold: options.threshold,
            truncated_to,
            fallback,
        },
    })
}

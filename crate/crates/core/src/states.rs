//! Recurring connectivity states: pairwise tensors from many subjects are
//! flattened to pair-space columns, concatenated and clustered with k-means.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psmetrics::{pair_index, Metric, PsTensor, WindowSpec};
use crate::surrogates::make_rng;

/// Lloyd iterations allowed per restart.
pub const MAX_ITER: usize = 300;

/// Rows of a tensor in pair order, one `Vec` per pair (missing entries `NaN`).
pub fn vectorize_lower(tensor: &PsTensor) -> Vec<Vec<f64>> {
    (0..tensor.n_pairs()).map(|p| tensor.row(p).to_vec()).collect()
}

/// Inverse of [`vectorize_lower`]; `NaN` entries become missing.
pub fn devectorize(
    rows: &[Vec<f64>],
    metric: Metric,
    window: Option<WindowSpec>,
    n_regions: usize,
    start: usize,
    tr_seconds: f64,
) -> Result<PsTensor> {
    let n_times = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_times) {
        return Err(Error::Inconsistent("ragged pair rows".into()));
    }
    let values: Vec<f64> = rows.iter().flatten().copied().collect();
    let valid = values.iter().map(|v| !v.is_nan()).collect();
    PsTensor::from_parts(metric, window, n_regions, start, n_times, tr_seconds, values, valid)
}

/// A column removed before clustering because it held a missing value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnOrigin {
    pub subject: usize,
    /// Column index within that subject's tensor.
    pub time_index: usize,
}

/// Pair-space observations from all subjects, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMatrix {
    dim: usize,
    data: Vec<f64>,
    origins: Vec<ColumnOrigin>,
    /// `subject_boundaries[s]..subject_boundaries[s + 1]` are subject `s`'s columns.
    pub subject_boundaries: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
    pub n_regions: usize,
    pub metric: Option<Metric>,
    pub dropped: Vec<ColumnOrigin>,
}

impl GroupMatrix {
    /// Builds a matrix from raw observation vectors (one subject).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let dim = columns.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidInput("no observations".into()));
        }
        if columns.iter().any(|c| c.len() != dim) {
            return Err(Error::Inconsistent("observations differ in dimension".into()));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        Ok(Self {
            dim,
            data: columns.iter().flatten().copied().collect(),
            origins: (0..columns.len()).map(|t| ColumnOrigin { subject: 0, time_index: t }).collect(),
            subject_boundaries: vec![0, columns.len()],
            pairs: Vec::new(),
            n_regions: 0,
            metric: None,
            dropped: Vec::new(),
        })
    }

    /// Concatenates per-subject tensors; columns with any missing entry are
    /// dropped and recorded in [`GroupMatrix::dropped`].
    pub fn concatenate(tensors: &[PsTensor]) -> Result<Self> {
        let first = tensors
            .first()
            .ok_or_else(|| Error::InvalidInput("no subject tensors".into()))?;
        for (s, t) in tensors.iter().enumerate() {
            if t.n_regions != first.n_regions || t.metric != first.metric {
                return Err(Error::Inconsistent(format!(
                    "subject {s} has {} regions / metric {}, expected {} / {}",
                    t.n_regions, t.metric, first.n_regions, first.metric
                )));
            }
        }
        let dim = first.n_pairs();
        let mut data = Vec::new();
        let mut origins = Vec::new();
        let mut dropped = Vec::new();
        let mut boundaries = vec![0];
        for (s, t) in tensors.iter().enumerate() {
            for c in 0..t.n_times {
                let origin = ColumnOrigin { subject: s, time_index: c };
                let column: Option<Vec<f64>> = (0..dim).map(|p| t.get(p, c)).collect();
                match column {
                    Some(col) => {
                        data.extend(col);
                        origins.push(origin);
                    }
                    None => dropped.push(origin),
                }
            }
            boundaries.push(origins.len());
        }
        if origins.is_empty() {
            return Err(Error::InvalidInput("every column has missing values".into()));
        }
        Ok(Self {
            dim,
            data,
            origins,
            subject_boundaries: boundaries,
            pairs: first.pairs.clone(),
            n_regions: first.n_regions,
            metric: Some(first.metric),
            dropped,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_columns(&self) -> usize {
        self.origins.len()
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.dim..(c + 1) * self.dim]
    }

    pub fn origin(&self, c: usize) -> ColumnOrigin {
        self.origins[c]
    }
}

/// Squared Euclidean distance, accumulated in eight lanes so the loop
/// vectorizes.
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Centroid initialization strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `k` distinct columns drawn uniformly.
    #[default]
    Uniform,
    PlusPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub init: Init,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { restarts: 200, max_iter: MAX_ITER, init: Init::Uniform, seed: 0 }
    }
}

/// One Lloyd descent from fixed initial centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step.
    pub trace: Vec<f64>,
}

fn assign(data: &GroupMatrix, centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let labels = (0..data.n_columns())
        .map(|c| {
            let col = data.column(c);
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(k, m)| (k, sq_dist(col, m)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            total += d;
            best
        })
        .collect();
    (labels, total)
}

fn update(data: &GroupMatrix, labels: &mut [usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = old.len();
    let dim = data.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (c, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        sums[l].iter_mut().zip(data.column(c)).for_each(|(s, v)| *s += v);
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    // Empty clusters take the column farthest from its own centroid.
    let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
    if !empty.is_empty() {
        let mut taken = vec![false; labels.len()];
        for j in empty {
            let far = (0..labels.len())
                .filter(|&c| !taken[c] && counts[labels[c]] > 1)
                .map(|c| (c, sq_dist(data.column(c), &sums[labels[c]])))
                .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                    Some(a) if a.1 >= x.1 => Some(a),
                    _ => Some(x),
                });
            if let Some((c, _)) = far {
                taken[c] = true;
                counts[labels[c]] -= 1;
                counts[j] = 1;
                labels[c] = j;
                sums[j] = data.column(c).to_vec();
            }
        }
    }
    sums
}

/// Lloyd's algorithm from `init` until the assignment stops changing or
/// `max_iter` updates have been made.
pub fn lloyd(data: &GroupMatrix, init: Vec<Vec<f64>>, max_iter: usize) -> LloydRun {
    let mut centroids = init;
    let (mut labels, mut inertia) = assign(data, &centroids);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        centroids = update(data, &mut labels, &centroids);
        let (next, next_inertia) = assign(data, &centroids);
        trace.push(next_inertia);
        inertia = next_inertia;
        if next == labels {
            break;
        }
        labels = next;
    }
    LloydRun { centroids, labels, inertia, iterations, trace }
}

fn initial_centroids<R: Rng + ?Sized>(data: &GroupMatrix, k: usize, init: Init, rng: &mut R) -> Vec<Vec<f64>> {
    match init {
        Init::Uniform => sample(rng, data.n_columns(), k)
            .into_iter()
            .map(|c| data.column(c).to_vec())
            .collect(),
        Init::PlusPlus => {
            let n = data.n_columns();
            let mut chosen = vec![data.column(rng.random_range(0..n)).to_vec()];
            let mut d2: Vec<f64> = (0..n).map(|c| sq_dist(data.column(c), &chosen[0])).collect();
            while chosen.len() < k {
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    let mut target = rng.random_range(0.0..total);
                    d2.iter()
                        .position(|&w| {
                            target -= w;
                            target < 0.0
                        })
                        .unwrap_or(n - 1)
                } else {
                    rng.random_range(0..n)
                };
                let col = data.column(next).to_vec();
                for (c, d) in d2.iter_mut().enumerate() {
                    *d = d.min(sq_dist(data.column(c), &col));
                }
                chosen.push(col);
            }
            chosen
        }
    }
}

/// Best of several k-means restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResult {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub dbi_by_k: BTreeMap<usize, f64>,
    pub restarts_used: usize,
    /// Index of the winning restart.
    pub best_restart: usize,
}

fn kmeans_streams(data: &GroupMatrix, k: usize, options: &KMeansOptions, stream_base: u64) -> Result<StateResult> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be at least 2, got {k}")));
    }
    if k > data.n_columns() {
        return Err(Error::Infeasible(format!("k = {k} exceeds {} columns", data.n_columns())));
    }
    if options.restarts < 1 {
        return Err(Error::InvalidInput("at least one restart is required".into()));
    }
    let runs: Vec<LloydRun> = (0..options.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = make_rng(options.seed, stream_base + r as u64);
            let init = initial_centroids(data, k, options.init, &mut rng);
            lloyd(data, init, options.max_iter)
        })
        .collect();
    // Strict comparison: the lowest restart index wins ties.
    let (best_restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.inertia < a.1.inertia { b } else { a })
        .expect("at least one restart");
    Ok(StateResult {
        k,
        centroids: best.centroids,
        labels: best.labels,
        inertia: best.inertia,
        dbi_by_k: BTreeMap::new(),
        restarts_used: options.restarts,
        best_restart,
    })
}

/// k-means over the columns of `data` with `options.restarts` random starts;
/// the restart with the lowest inertia is kept.
pub fn kmeans(data: &GroupMatrix, k: usize, options: &KMeansOptions) -> Result<StateResult> {
    kmeans_streams(data, k, options, 0)
}

/// Davies-Bouldin index of a clustering; `+inf` if two centroids coincide.
pub fn davies_bouldin(data: &GroupMatrix, labels: &[usize], centroids: &[Vec<f64>]) -> Result<f64> {
    let k = centroids.len();
    let mut scatter = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (c, &l) in labels.iter().enumerate() {
        scatter[l] += sq_dist(data.column(c), &centroids[l]).sqrt();
        counts[l] += 1;
    }
    if let Some(j) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidInput(format!("cluster {j} is empty")));
    }
    scatter.iter_mut().zip(&counts).for_each(|(s, &n)| *s /= n as f64);
    let mut total = 0.0;
    for i in 0..k {
        let worst = (0..k)
            .filter(|&j| j != i)
            .map(|j| {
                let d = sq_dist(&centroids[i], &centroids[j]).sqrt();
                if d == 0.0 {
                    f64::INFINITY
                } else {
                    (scatter[i] + scatter[j]) / d
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += worst;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// When set, this k is reported regardless of the DBI sweep.
    pub forced_k: Option<usize>,
    pub restarts: usize,
    pub init: Init,
    pub seed: u64,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self { k_min: 2, k_max: 6, forced_k: Some(2), restarts: 200, init: Init::Uniform, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub k: usize,
    pub dbi: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePipelineResult {
    pub result: StateResult,
    pub sweep: Vec<SweepEntry>,
    /// One symmetric `R x R` matrix per state.
    pub centroid_matrices: Vec<Vec<Vec<f64>>>,
    pub group: GroupMatrix,
}

/// Symmetric region-by-region matrix from a pair-space vector.
pub fn centroid_matrix(centroid: &[f64], n_regions: usize, diagonal: f64) -> Vec<Vec<f64>> {
    let mut m = vec![vec![diagonal; n_regions]; n_regions];
    for (p, (i, j)) in pair_index(n_regions).into_iter().enumerate() {
        m[i][j] = centroid[p];
        m[j][i] = centroid[p];
    }
    m
}

/// Vectorize, concatenate, sweep k by Davies-Bouldin and reshape the
/// selected centroids into region matrices.
pub fn run_state_pipeline(tensors: &[PsTensor], config: &StateConfig) -> Result<StatePipelineResult> {
    if config.k_min < 2 || config.k_max < config.k_min {
        return Err(Error::InvalidInput(format!("invalid k range {}..{}", config.k_min, config.k_max)));
    }
    if let Some(k) = config.forced_k {
        if k < 2 {
            return Err(Error::InvalidInput(format!("forced k must be at least 2, got {k}")));
        }
    }
    let group = GroupMatrix::concatenate(tensors)?;
    let options = KMeansOptions { restarts: config.restarts, max_iter: MAX_ITER, init: config.init, seed: config.seed };
    let stream_base = |k: usize| (k as u64) << 32;

    let mut sweep = Vec::new();
    let mut fits: BTreeMap<usize, StateResult> = BTreeMap::new();
    for k in config.k_min..=config.k_max {
        let fit = kmeans_streams(&group, k, &options, stream_base(k))?;
        let dbi = davies_bouldin(&group, &fit.labels, &fit.centroids)?;
        sweep.push(SweepEntry { k, dbi, inertia: fit.inertia });
        fits.insert(k, fit);
    }
    let selected = match config.forced_k {
        Some(k) => k,
        None => sweep
            .iter()
            .fold(None, |best: Option<&SweepEntry>, e| match best {
                Some(b) if b.dbi <= e.dbi => Some(b),
                _ => Some(e),
            })
            .map(|e| e.k)
            .expect("non-empty sweep"),
    };
    let mut result = match fits.remove(&selected) {
        Some(fit) => fit,
        None => kmeans_streams(&group, selected, &options, stream_base(selected))?,
    };
    result.dbi_by_k = sweep.iter().map(|e| (e.k, e.dbi)).collect();
    let diagonal = group.metric.map_or(1.0, Metric::self_value);
    let centroid_matrices = result
        .centroids
        .iter()
        .map(|c| centroid_matrix(c, group.n_regions, diagonal))
        .collect();
    Ok(StatePipelineResult { result, sweep, centroid_matrices, group })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::psmetrics::{pairwise_tensor, PairSource};
    use crate::signals::PhaseMatrix;
    use crate::surrogates::make_rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    /// Two clouds ten SDs apart, first `n_a` columns from the first one.
    fn two_clouds(n_a: usize, n_b: usize, dim: usize, seed: u64) -> GroupMatrix {
        let mut rng = make_rng(seed, 0);
        let cols: Vec<Vec<f64>> = (0..n_a + n_b)
            .map(|c| {
                let centre = if c < n_a { 0.0 } else { 10.0 };
                (0..dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        centre + z / (dim as f64).sqrt()
                    })
                    .collect()
            })
            .collect();
        GroupMatrix::from_columns(&cols).unwrap()
    }

    fn opts(restarts: usize) -> KMeansOptions {
        KMeansOptions { restarts, seed: 3, ..KMeansOptions::default() }
    }

    #[test]
    fn vectorize_shape_order_and_round_trip() {
        let mut rng = make_rng(1, 1);
        let rows = (0..3).map(|_| (0..12).map(|_| rng.random_range(-PI..PI)).collect()).collect();
        let pm = PhaseMatrix::new(rows, 2.0).unwrap();
        let t = pairwise_tensor(PairSource::Phases(&pm), Metric::Crp, None).unwrap();
        let v = vectorize_lower(&t);
        assert_eq!(v.len(), 3);
        // Lower-triangle (row, col), 1-based: (2,1), (3,1), (3,2).
        assert_eq!(t.pairs, vec![(0, 1), (0, 2), (1, 2)]);
        let back = devectorize(&v, t.metric, t.window, 3, t.start, t.tr_seconds).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn vectorize_21_regions() {
        let mut rng = make_rng(2, 2);
        let rows = (0..21).map(|_| (0..210).map(|_| rng.random_range(-PI..PI)).collect()).collect();
        let pm = PhaseMatrix::new(rows, 2.0).unwrap();
        let t = pairwise_tensor(PairSource::Phases(&pm), Metric::Crp, None).unwrap();
        let v = vectorize_lower(&t);
        assert_eq!((v.len(), v[0].len()), (210, 210));
    }

    #[test]
    fn planted_partition_is_recovered() {
        let data = two_clouds(40, 60, 8, 4);
        let fit = kmeans(&data, 2, &opts(20)).unwrap();
        let first = fit.labels[0];
        assert!(fit.labels[..40].iter().all(|&l| l == first));
        assert!(fit.labels[40..].iter().all(|&l| l != first));
        assert!(fit.labels.iter().all(|&l| l < 2));
        let direct: f64 = (0..data.n_columns())
            .map(|c| sq_dist(data.column(c), &fit.centroids[fit.labels[c]]))
            .sum();
        assert!((direct - fit.inertia).abs() < 1e-9 * direct.max(1.0));
    }

    #[test]
    fn k_contract() {
        let data = two_clouds(3, 3, 2, 5);
        assert!(kmeans(&data, 1, &opts(2)).is_err());
        assert!(matches!(kmeans(&data, 7, &opts(2)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn duplicating_columns_doubles_inertia() {
        let data = two_clouds(15, 15, 4, 6);
        let cols: Vec<Vec<f64>> = (0..data.n_columns()).map(|c| data.column(c).to_vec()).collect();
        let doubled: Vec<Vec<f64>> = cols.iter().chain(&cols).cloned().collect();
        let a = kmeans(&data, 2, &opts(10)).unwrap();
        let b = kmeans(&GroupMatrix::from_columns(&doubled).unwrap(), 2, &opts(10)).unwrap();
        let mut ca = a.centroids.clone();
        let mut cb = b.centroids.clone();
        ca.sort_by(|x, y| x[0].total_cmp(&y[0]));
        cb.sort_by(|x, y| x[0].total_cmp(&y[0]));
        for (x, y) in ca.iter().flatten().zip(cb.iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((b.inertia - 2.0 * a.inertia).abs() < 1e-9);
    }

    #[test]
    fn lloyd_inertia_never_increases() {
        let mut rng = make_rng(8, 0);
        let cols: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..5).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let data = GroupMatrix::from_columns(&cols).unwrap();
        for r in 0..10 {
            let mut rng = make_rng(9, r);
            let init = initial_centroids(&data, 4, Init::Uniform, &mut rng);
            let run = lloyd(&data, init, MAX_ITER);
            for w in run.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
            }
        }
        let best = kmeans(&data, 4, &opts(10)).unwrap();
        for r in 0..10 {
            let mut rng = make_rng(3, r);
            let init = initial_centroids(&data, 4, Init::Uniform, &mut rng);
            assert!(best.inertia <= lloyd(&data, init, MAX_ITER).inertia);
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let cols = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.2]];
        let data = GroupMatrix::from_columns(&cols).unwrap();
        // The third centroid starts far from everything.
        let run = lloyd(&data, vec![vec![0.05], vec![5.1], vec![100.0]], MAX_ITER);
        let mut used = run.labels.clone();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn relabeling_preserves_inertia_and_dbi() {
        let data = two_clouds(20, 25, 3, 10);
        let fit = kmeans(&data, 2, &opts(5)).unwrap();
        let dbi = davies_bouldin(&data, &fit.labels, &fit.centroids).unwrap();
        let swapped: Vec<usize> = fit.labels.iter().map(|l| 1 - l).collect();
        let centroids = vec![fit.centroids[1].clone(), fit.centroids[0].clone()];
        let dbi2 = davies_bouldin(&data, &swapped, &centroids).unwrap();
        assert!((dbi - dbi2).abs() < 1e-12);
        let inertia2: f64 = (0..data.n_columns())
            .map(|c| sq_dist(data.column(c), &centroids[swapped[c]]))
            .sum();
        assert!((inertia2 - fit.inertia).abs() < 1e-9);
    }

    #[test]
    fn dbi_sweep_prefers_planted_k() {
        let data = two_clouds(50, 50, 6, 11);
        let dbis: Vec<f64> = (2..=6)
            .map(|k| {
                let fit = kmeans(&data, k, &opts(20)).unwrap();
                davies_bouldin(&data, &fit.labels, &fit.centroids).unwrap()
            })
            .collect();
        for d in &dbis[1..] {
            assert!(dbis[0] < *d, "{dbis:?}");
        }
    }

    #[test]
    fn dbi_edge_cases() {
        let tight = GroupMatrix::from_columns(&[vec![0.0], vec![1e-6], vec![1000.0], vec![1000.0 + 1e-6]]).unwrap();
        let dbi = davies_bouldin(&tight, &[0, 0, 1, 1], &[vec![5e-7], vec![1000.0 + 5e-7]]).unwrap();
        assert!(dbi < 1e-8);
        let same = davies_bouldin(&tight, &[0, 0, 1, 1], &[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(same, f64::INFINITY);
        assert!(davies_bouldin(&tight, &[0, 0, 0, 0], &[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn kmeans_is_deterministic() {
        let data = two_clouds(30, 30, 4, 12);
        assert_eq!(kmeans(&data, 3, &opts(8)).unwrap(), kmeans(&data, 3, &opts(8)).unwrap());
        let pp = KMeansOptions { init: Init::PlusPlus, ..opts(8) };
        let fit = kmeans(&data, 2, &pp).unwrap();
        assert_eq!(fit.labels[..30].iter().filter(|&&l| l == fit.labels[0]).count(), 30);
    }

    #[test]
    fn centroid_matrices_are_symmetric() {
        let m = centroid_matrix(&[0.1, 0.2, 0.3], 3, 1.0);
        assert_eq!(m, vec![vec![1.0, 0.1, 0.2], vec![0.1, 1.0, 0.3], vec![0.2, 0.3, 1.0]]);
    }

    #[test]
    fn concatenation_drops_missing_columns_and_checks_shapes() {
        let mut rng = make_rng(13, 0);
        let mk = |rng: &mut crate::surrogates::PsRng, r: usize| {
            let rows = (0..r).map(|_| (0..40).map(|_| rng.random_range(-PI..PI)).collect()).collect();
            PhaseMatrix::new(rows, 2.0).unwrap()
        };
        let w = Some(WindowSpec { length: 10 });
        let a = pairwise_tensor(PairSource::Phases(&mk(&mut rng, 4)), Metric::Plv, w).unwrap();
        let mut b = pairwise_tensor(PairSource::Phases(&mk(&mut rng, 4)), Metric::Plv, w).unwrap();
        b.valid[3] = false;
        b.values[3] = f64::NAN;
        let g = GroupMatrix::concatenate(&[a.clone(), b]).unwrap();
        assert_eq!(g.n_columns(), 31 + 30);
        assert_eq!(g.dropped, vec![ColumnOrigin { subject: 1, time_index: 3 }]);
        assert_eq!(g.subject_boundaries, vec![0, 31, 61]);
        let c = pairwise_tensor(PairSource::Phases(&mk(&mut rng, 5)), Metric::Plv, w).unwrap();
        assert!(matches!(GroupMatrix::concatenate(&[a, c]), Err(Error::Inconsistent(_))));
        assert!(GroupMatrix::concatenate(&[]).is_err());
    }

    #[test]
    fn pipeline_forced_k_and_sweep() {
        let mut rng = make_rng(14, 0);
        let tensors: Vec<PsTensor> = (0..3)
            .map(|_| {
                let rows = (0..4).map(|_| (0..30).map(|_| rng.random_range(-PI..PI)).collect()).collect();
                let pm = PhaseMatrix::new(rows, 2.0).unwrap();
                pairwise_tensor(PairSource::Phases(&pm), Metric::Crp, None).unwrap()
            })
            .collect();
        let cfg = StateConfig { restarts: 5, ..StateConfig::default() };
        let out = run_state_pipeline(&tensors, &cfg).unwrap();
        assert_eq!(out.result.k, 2);
        assert_eq!(out.centroid_matrices.len(), 2);
        assert_eq!(out.sweep.len(), 5);
        assert_eq!(out.result.dbi_by_k.len(), 5);
        assert_eq!(out.group.n_columns(), 90);
        for m in &out.centroid_matrices {
            for i in 0..4 {
                assert_eq!(m[i][i], 1.0);
                for j in 0..4 {
                    assert_eq!(m[i][j], m[j][i]);
                }
            }
        }
        let free = StateConfig { forced_k: None, ..cfg };
        let out = run_state_pipeline(&tensors, &free).unwrap();
        let best = out.sweep.iter().map(|e| e.dbi).fold(f64::INFINITY, f64::min);
        assert_eq!(out.result.dbi_by_k[&out.result.k], best);
    }
}

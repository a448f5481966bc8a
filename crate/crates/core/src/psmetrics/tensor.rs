use rayon::prelude::*;

use super::sliding::{sliding_apply, PsSeries, WindowSpec};
use super::Metric;
use crate::error::{Error, Result};
use crate::signals::PhaseMatrix;

/// Region pairs `(i, j)`, `i < j`, ordered by `i` then `j`.
///
/// Read as lower-triangle entries `(row = j, col = i)` this is column-major
/// order: for three regions `(0,1), (0,2), (1,2)`.
pub fn pair_index(n_regions: usize) -> Vec<(usize, usize)> {
    (0..n_regions)
        .flat_map(|i| (i + 1..n_regions).map(move |j| (i, j)))
        .collect()
}

/// Input rows for [`pairwise_tensor`].
#[derive(Debug, Clone, Copy)]
pub enum PairSource<'a> {
    Phases(&'a PhaseMatrix),
    /// Band-limited signals, for CSW and PW-CSW.
    Signals { rows: &'a [Vec<f64>], tr_seconds: f64 },
}

impl PairSource<'_> {
    fn rows(&self) -> &[Vec<f64>] {
        match self {
            PairSource::Phases(p) => p.rows(),
            PairSource::Signals { rows, .. } => rows,
        }
    }

    fn tr_seconds(&self) -> f64 {
        match self {
            PairSource::Phases(p) => p.tr_seconds(),
            PairSource::Signals { tr_seconds, .. } => *tr_seconds,
        }
    }
}

/// Pairwise synchronization values for every region pair over time.
#[derive(Debug, Clone, PartialEq)]
pub struct PsTensor {
    pub metric: Metric,
    pub window: Option<WindowSpec>,
    pub n_regions: usize,
    /// Sample index of the first column.
    pub start: usize,
    pub n_times: usize,
    pub tr_seconds: f64,
    pub pairs: Vec<(usize, usize)>,
    /// Row-major `pairs.len() x n_times`; missing entries are `NaN`.
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl PsTensor {
    /// Assembles a tensor from parts, checking shapes.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        metric: Metric,
        window: Option<WindowSpec>,
        n_regions: usize,
        start: usize,
        n_times: usize,
        tr_seconds: f64,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if n_regions < 2 {
            return Err(Error::InvalidInput(format!("tensor needs at least 2 regions, got {n_regions}")));
        }
        let pairs = pair_index(n_regions);
        let cells = pairs.len() * n_times;
        if values.len() != cells || valid.len() != cells {
            return Err(Error::Inconsistent(format!(
                "tensor of {} pairs x {n_times} times needs {cells} cells, got {} values and {} flags",
                pairs.len(),
                values.len(),
                valid.len()
            )));
        }
        Ok(Self { metric, window, n_regions, start, n_times, tr_seconds, pairs, values, valid })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.values[p * self.n_times..(p + 1) * self.n_times]
    }

    pub fn row_valid(&self, p: usize) -> &[bool] {
        &self.valid[p * self.n_times..(p + 1) * self.n_times]
    }

    pub fn get(&self, p: usize, t: usize) -> Option<f64> {
        let k = p * self.n_times + t;
        self.valid[k].then_some(self.values[k])
    }

    /// Row index of the unordered pair `{a, b}`.
    pub fn pair_position(&self, a: usize, b: usize) -> Option<usize> {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        if i == j || j >= self.n_regions {
            return None;
        }
        // Rows before block i: sum_{k<i} (R - 1 - k).
        let r = self.n_regions;
        Some(i * (2 * r - i - 1) / 2 + (j - i - 1))
    }

    /// Time in seconds of column `c`.
    pub fn time_seconds(&self, c: usize) -> f64 {
        (self.start + c) as f64 * self.tr_seconds
    }
}

/// Evaluates `metric` for every region pair.
pub fn pairwise_tensor(source: PairSource<'_>, metric: Metric, window: Option<WindowSpec>) -> Result<PsTensor> {
    let matches = matches!(source, PairSource::Phases(_)) == metric.uses_phases();
    if !matches {
        return Err(Error::InvalidInput(format!(
            "metric {metric} expects {} input",
            if metric.uses_phases() { "phase" } else { "signal" }
        )));
    }
    let rows = source.rows();
    let r = rows.len();
    if r < 2 {
        return Err(Error::InvalidInput(format!("pairwise tensor needs at least 2 regions, got {r}")));
    }
    let pairs = pair_index(r);
    let series: Vec<PsSeries> = pairs
        .par_iter()
        .map(|&(i, j)| sliding_apply(metric, &rows[i], &rows[j], window))
        .collect::<Result<_>>()?;
    let n_times = series[0].len();
    let start = series[0].start;
    let mut values = Vec::with_capacity(pairs.len() * n_times);
    let mut valid = Vec::with_capacity(pairs.len() * n_times);
    for s in series {
        values.extend(s.values);
        valid.extend(s.valid);
    }
    PsTensor::from_parts(metric, window, r, start, n_times, source.tr_seconds(), values, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn phases(r: usize, t: usize, seed: u64) -> PhaseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..r).map(|_| (0..t).map(|_| rng.random_range(-PI..PI)).collect()).collect();
        PhaseMatrix::new(rows, 2.0).unwrap()
    }

    #[test]
    fn pair_counts_and_order() {
        assert_eq!(pair_index(21).len(), 210);
        assert_eq!(pair_index(2), vec![(0, 1)]);
        assert_eq!(pair_index(3), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn pair_position_inverts_pair_index() {
        let pm = phases(6, 20, 1);
        let t = pairwise_tensor(PairSource::Phases(&pm), Metric::Crp, None).unwrap();
        for (p, &(i, j)) in t.pairs.iter().enumerate() {
            assert_eq!(t.pair_position(i, j), Some(p));
            assert_eq!(t.pair_position(j, i), Some(p));
        }
        assert_eq!(t.pair_position(2, 2), None);
    }

    #[test]
    fn tensor_shapes() {
        let pm = phases(21, 60, 2);
        let t = pairwise_tensor(PairSource::Phases(&pm), Metric::Plv, Some(WindowSpec::new(28).unwrap())).unwrap();
        assert_eq!(t.n_pairs(), 210);
        assert_eq!(t.n_times, 33);
        assert_eq!(t.start, 27);
        let pm = phases(2, 30, 3);
        let t = pairwise_tensor(PairSource::Phases(&pm), Metric::Coherence, None).unwrap();
        assert_eq!((t.n_pairs(), t.n_times), (1, 30));
    }

    #[test]
    fn swapped_arguments_give_same_values() {
        let pm = phases(3, 40, 4);
        let w = Some(WindowSpec::new(10).unwrap());
        for metric in Metric::PHASE {
            let t = pairwise_tensor(PairSource::Phases(&pm), metric, w).unwrap();
            for (p, &(i, j)) in t.pairs.iter().enumerate() {
                let swapped = sliding_apply(metric, pm.row(j), pm.row(i), w).unwrap();
                for (a, b) in t.row(p).iter().zip(&swapped.values) {
                    assert!((a - b).abs() < 1e-12, "{metric}");
                }
            }
        }
    }

    #[test]
    fn rejects_mismatched_source() {
        let pm = phases(3, 40, 5);
        assert!(pairwise_tensor(PairSource::Phases(&pm), Metric::Csw, Some(WindowSpec { length: 5 })).is_err());
        let rows = pm.rows().to_vec();
        let src = PairSource::Signals { rows: &rows, tr_seconds: 2.0 };
        assert!(pairwise_tensor(src, Metric::Crp, None).is_err());
        assert!(pairwise_tensor(src, Metric::Csw, Some(WindowSpec { length: 5 })).is_ok());
        let one = phases(1, 40, 6);
        assert!(pairwise_tensor(PairSource::Phases(&one), Metric::Crp, None).is_err());
    }
}

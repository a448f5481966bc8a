//! Cyclic phase permutation (CPP) surrogates and the seeded random streams
//! shared by every stochastic operation.

use std::f64::consts::PI;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random stream type used throughout the crate.
pub type PsRng = ChaCha8Rng;

/// Number of wrap events required before a surrogate is defined.
pub const MIN_WRAP_EVENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub seed: u64,
    pub n_realizations: usize,
}

/// Deterministic stream `stream_id` of the generator keyed by `seed`.
///
/// ChaCha streams with distinct ids are independent, so parallel replicates
/// can each own one without coordination.
pub fn make_rng(seed: u64, stream_id: u64) -> PsRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Partition of a wrapped phase series at its wrap events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSegments {
    pub head: Range<usize>,
    pub cycles: Vec<Range<usize>>,
    pub tail: Range<usize>,
}

impl CycleSegments {
    pub fn cycle_lengths(&self) -> Vec<usize> {
        self.cycles.iter().map(|c| c.len()).collect()
    }
}

/// Splits `phase` at every index `t` where `phase[t] - phase[t-1] < -pi`.
///
/// Complete cycles run between consecutive wrap events; the partial runs
/// before the first and after the last event are the head and tail.
pub fn segment_cycles(phase: &[f64]) -> Result<CycleSegments> {
    let events: Vec<usize> = (1..phase.len())
        .filter(|&t| phase[t] - phase[t - 1] < -PI)
        .collect();
    if events.len() < MIN_WRAP_EVENTS {
        return Err(Error::TooFewCycles { found: events.len(), needed: MIN_WRAP_EVENTS });
    }
    let first = events[0];
    let last = events[events.len() - 1];
    Ok(CycleSegments {
        head: 0..first,
        cycles: events.windows(2).map(|w| w[0]..w[1]).collect(),
        tail: last..phase.len(),
    })
}

/// Reassembles `phase` with its complete cycles in the order `perm`.
pub fn apply_cycle_permutation(phase: &[f64], segments: &CycleSegments, perm: &[usize]) -> Vec<f64> {
    debug_assert_eq!(perm.len(), segments.cycles.len());
    let mut out = Vec::with_capacity(phase.len());
    out.extend_from_slice(&phase[segments.head.clone()]);
    for &k in perm {
        out.extend_from_slice(&phase[segments.cycles[k].clone()]);
    }
    out.extend_from_slice(&phase[segments.tail.clone()]);
    out
}

/// CPP surrogate: complete cycles shuffled uniformly, head and tail fixed.
pub fn cpp_surrogate<R: Rng + ?Sized>(phase: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let segments = segment_cycles(phase)?;
    let mut perm: Vec<usize> = (0..segments.cycles.len()).collect();
    perm.shuffle(rng);
    Ok(apply_cycle_permutation(phase, &segments, &perm))
}

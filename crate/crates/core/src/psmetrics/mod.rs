//! Phase synchronization metrics: windowed (PLV, circular-circular and
//! toroidal correlation), instantaneous (phase coherence, cosine of the
//! relative phase) and the correlation baselines (CSW, AR(1)-prewhitened CSW).

mod correlation;
mod kernels;
mod sliding;
mod tensor;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use correlation::{csw_window, prewhiten_ar1, Prewhitened};
pub use kernels::{
    circ_circ_window, crp, phase_coherence, phase_difference, plv_window, toroidal_window,
};
pub use sliding::{sliding_apply, PsSeries, WindowSpec};
pub use tensor::{pair_index, pairwise_tensor, PairSource, PsTensor};

/// Identifies a synchronization metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Plv,
    CircCirc,
    Toroidal,
    Coherence,
    Crp,
    Csw,
    PwCsw,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Plv,
        Metric::CircCirc,
        Metric::Toroidal,
        Metric::Coherence,
        Metric::Crp,
        Metric::Csw,
        Metric::PwCsw,
    ];

    /// The five phase-based metrics.
    pub const PHASE: [Metric; 5] = [
        Metric::Plv,
        Metric::CircCirc,
        Metric::Toroidal,
        Metric::Coherence,
        Metric::Crp,
    ];

    pub fn is_windowed(self) -> bool {
        !matches!(self, Metric::Coherence | Metric::Crp)
    }

    /// Whether the metric consumes instantaneous phases (as opposed to the
    /// band-limited signals themselves).
    pub fn uses_phases(self) -> bool {
        !matches!(self, Metric::Csw | Metric::PwCsw)
    }

    /// Closed value range of the metric.
    pub fn range(self) -> (f64, f64) {
        match self {
            Metric::Plv | Metric::Coherence => (0.0, 1.0),
            _ => (-1.0, 1.0),
        }
    }

    /// Value of the metric for a region paired with itself.
    pub fn self_value(self) -> f64 {
        1.0
    }

    /// Stable numeric identifier used by the binary tensor format.
    pub fn id(self) -> u32 {
        match self {
            Metric::Plv => 1,
            Metric::CircCirc => 2,
            Metric::Toroidal => 3,
            Metric::Coherence => 4,
            Metric::Crp => 5,
            Metric::Csw => 6,
            Metric::PwCsw => 7,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Metric::ALL.into_iter().find(|m| m.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Plv => "plv",
            Metric::CircCirc => "circ_circ",
            Metric::Toroidal => "toroidal",
            Metric::Coherence => "coherence",
            Metric::Crp => "crp",
            Metric::Csw => "csw",
            Metric::PwCsw => "pw_csw",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .or(match key.as_str() {
                "circcirc" | "circular" => Some(Metric::CircCirc),
                "tor" => Some(Metric::Toroidal),
                "pwcsw" => Some(Metric::PwCsw),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidInput(format!("unknown metric '{s}'")))
    }
}

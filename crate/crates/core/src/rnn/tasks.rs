//! Synthetic long-range dependency tasks used to compare cells.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geno::SequenceBatch;
use crate::linalg::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SyntheticTask {
    /// `lag` steps of one channel `x_t ~ U[0, 1]`; the target is the
    /// standardized sum `(sum x_t - lag/2) / sqrt(lag/12)`, so the first input
    /// matters as much as the last.
    LagMemory { lag: usize },
    /// Two channels over `length` steps: a value `~ U[0, 1]` and a marker that
    /// is 1 at exactly one step in each half. The target is the sum of the
    /// two marked values.
    Adding { length: usize },
}

impl SyntheticTask {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticTask::LagMemory { .. } => "lag-memory",
            SyntheticTask::Adding { .. } => "adding",
        }
    }

    pub fn length(&self) -> usize {
        match *self {
            SyntheticTask::LagMemory { lag } => lag,
            SyntheticTask::Adding { length } => length,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            SyntheticTask::LagMemory { .. } => 1,
            SyntheticTask::Adding { .. } => 2,
        }
    }

    /// Same task family with a different sequence length.
    pub fn with_length(self, length: usize) -> Self {
        match self {
            SyntheticTask::LagMemory { .. } => SyntheticTask::LagMemory { lag: length },
            SyntheticTask::Adding { .. } => SyntheticTask::Adding { length },
        }
    }

    /// Draws `samples` sequences from `seed`.
    pub fn generate(&self, samples: usize, seed: u64) -> Result<SequenceBatch> {
        let len = self.length();
        match self {
            SyntheticTask::LagMemory { .. } if len == 0 => {
                return Err(Error::Config("lag must be at least 1".into()))
            }
            SyntheticTask::Adding { .. } if len < 2 => {
                return Err(Error::Config("adding task needs length at least 2".into()))
            }
            _ => {}
        }
        if samples == 0 {
            return Err(Error::Config("task needs at least one sample".into()));
        }
        let mut rng = Rng::new(seed);
        let mut inputs = Vec::with_capacity(samples);
        let mut targets = Vec::with_capacity(samples);
        for _ in 0..samples {
            let (seq, y) = match self {
                SyntheticTask::LagMemory { .. } => {
                    let seq: Vec<Vec<f64>> = (0..len).map(|_| vec![rng.next_f64()]).collect();
                    let sum: f64 = seq.iter().map(|x| x[0]).sum();
                    let n = len as f64;
                    (seq, (sum - n / 2.0) / (n / 12.0).sqrt())
                }
                SyntheticTask::Adding { .. } => {
                    let half = len / 2;
                    let a = rng.below(half);
                    let b = half + rng.below(len - half);
                    let mut y = 0.0;
                    let seq = (0..len)
                        .map(|t| {
                            let v = rng.next_f64();
                            let marked = t == a || t == b;
                            if marked {
                                y += v;
                            }
                            vec![v, if marked { 1.0 } else { 0.0 }]
                        })
                        .collect();
                    (seq, y)
                }
            };
            inputs.push(seq);
            targets.push(vec![y]);
        }
        Ok(SequenceBatch {
            inputs,
            targets,
            sample_ids: (0..samples).collect(),
            timesteps: len,
            chunk_width: self.channels(),
            excluded: Vec::new(),
        })
    }
}

impl fmt::Display for SyntheticTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.name(), self.length())
    }
}

/// Parses `lag-memory`, `lag-memory-100`, `adding` or `adding-50`; a bare
/// name gets length 100.
impl FromStr for SyntheticTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let (base, len) = match s.rsplit_once('-') {
            Some((b, n)) if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() => {
                let len = n
                    .parse()
                    .map_err(|_| Error::Config(format!("bad task length in {s:?}")))?;
                (b.to_string(), len)
            }
            _ => (s.clone(), 100),
        };
        match base.as_str() {
            "lag-memory" | "lag" | "lag_memory" => Ok(SyntheticTask::LagMemory { lag: len }),
            "adding" => Ok(SyntheticTask::Adding { length: len }),
            _ => Err(Error::Config(format!(
                "unknown task {s:?}; expected lag-memory or adding"
            ))),
        }
    }
}

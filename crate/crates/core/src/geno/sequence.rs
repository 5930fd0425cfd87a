use serde::{Deserialize, Serialize};

use super::types::{GenotypeMatrix, PhenotypeTable};
use crate::error::{Error, Result};

/// Scaling applied to genotype codes before they enter a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `{0, 1, 2}` to `{0, 0.5, 1}`.
    #[default]
    Half,
    Raw,
}

impl Normalization {
    #[inline]
    pub fn apply(self, code: u8) -> f64 {
        match self {
            Normalization::Half => f64::from(code) * 0.5,
            Normalization::Raw => f64::from(code),
        }
    }
}

/// Input sequences and regression targets for a set of samples.
///
/// `inputs[s][t]` is timestep `t` of sample `s`, a vector of width
/// `chunk_width`. `sample_ids[s]` is the sample's row in the source tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub targets: Vec<Vec<f64>>,
    pub sample_ids: Vec<usize>,
    pub timesteps: usize,
    pub chunk_width: usize,
    /// Source rows dropped because a requested trait was missing.
    pub excluded: Vec<usize>,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn output_width(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// Samples whose source row appears in `rows`, kept in batch order.
    pub fn subset(&self, rows: &[usize]) -> SequenceBatch {
        let wanted: std::collections::HashSet<usize> = rows.iter().copied().collect();
        let mut out = SequenceBatch {
            inputs: Vec::new(),
            targets: Vec::new(),
            sample_ids: Vec::new(),
            timesteps: self.timesteps,
            chunk_width: self.chunk_width,
            excluded: Vec::new(),
        };
        for (i, id) in self.sample_ids.iter().enumerate() {
            if wanted.contains(id) {
                out.inputs.push(self.inputs[i].clone());
                out.targets.push(self.targets[i].clone());
                out.sample_ids.push(*id);
            }
        }
        out
    }

    /// Reassembles sample `s`'s first `len` feature values from its chunks.
    pub fn dechunk(&self, s: usize, len: usize) -> Vec<f64> {
        self.inputs[s].iter().flatten().copied().take(len).collect()
    }
}

pub fn timesteps_for(snps: usize, chunk_width: usize) -> usize {
    snps.div_ceil(chunk_width)
}

fn chunk_row(features: impl Iterator<Item = f64>, timesteps: usize, width: usize) -> Vec<Vec<f64>> {
    let mut seq = vec![vec![0.0; width]; timesteps];
    for (i, x) in features.enumerate() {
        seq[i / width][i % width] = x;
    }
    seq
}

/// Cuts each genotype row into `ceil(V / chunk_width)` timesteps of width
/// `chunk_width`, zero-padding the last one, paired with the requested trait.
pub fn build_sequences(
    g: &GenotypeMatrix,
    phenos: &PhenotypeTable,
    trait_index: usize,
    chunk_width: usize,
    normalization: Normalization,
) -> Result<SequenceBatch> {
    build_sequences_multi(g, phenos, &[trait_index], chunk_width, normalization)
}

/// Like [`build_sequences`] with one target column per listed trait; samples
/// missing any of them are excluded.
pub fn build_sequences_multi(
    g: &GenotypeMatrix,
    phenos: &PhenotypeTable,
    traits: &[usize],
    chunk_width: usize,
    normalization: Normalization,
) -> Result<SequenceBatch> {
    if !g.is_complete() {
        return Err(Error::State(format!(
            "genotype matrix has {} missing cells; impute before building sequences",
            g.missing_count()
        )));
    }
    assemble(g, phenos, traits, chunk_width, normalization)
}

/// Sequences from a matrix that may still have holes; missing cells enter
/// the network as 0.
pub fn build_sequences_zero_filled(
    g: &GenotypeMatrix,
    phenos: &PhenotypeTable,
    traits: &[usize],
    chunk_width: usize,
    normalization: Normalization,
) -> Result<SequenceBatch> {
    assemble(g, phenos, traits, chunk_width, normalization)
}

fn assemble(
    g: &GenotypeMatrix,
    phenos: &PhenotypeTable,
    traits: &[usize],
    chunk_width: usize,
    normalization: Normalization,
) -> Result<SequenceBatch> {
    if chunk_width == 0 {
        return Err(Error::Config("chunk width must be at least 1".into()));
    }
    if traits.is_empty() {
        return Err(Error::Config("at least one trait is required".into()));
    }
    if let Some(&t) = traits.iter().find(|&&t| t >= phenos.traits()) {
        return Err(Error::Index(format!(
            "trait {t} requested but the phenotype table has {} traits",
            phenos.traits()
        )));
    }
    if phenos.samples() != g.samples() {
        return Err(Error::Shape(format!(
            "{} genotype rows but {} phenotype rows",
            g.samples(),
            phenos.samples()
        )));
    }
    let timesteps = timesteps_for(g.snps(), chunk_width);
    let mut batch = SequenceBatch {
        inputs: Vec::new(),
        targets: Vec::new(),
        sample_ids: Vec::new(),
        timesteps,
        chunk_width,
        excluded: Vec::new(),
    };
    for u in 0..g.samples() {
        let target: Option<Vec<f64>> = traits.iter().map(|&t| phenos.get(u, t)).collect();
        let Some(target) = target else {
            batch.excluded.push(u);
            continue;
        };
        let feats = (0..g.snps()).map(|v| g.get(u, v).map_or(0.0, |c| normalization.apply(c)));
        batch.inputs.push(chunk_row(feats, timesteps, chunk_width));
        batch.targets.push(target);
        batch.sample_ids.push(u);
    }
    Ok(batch)
}

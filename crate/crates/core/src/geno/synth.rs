//! Synthetic genotype and phenotype generators.
//!
//! Genotypes come from a low-rank continuous matrix `A B^T`. Column 0 of `A`
//! is fixed at 1, so the first latent component acts as a per-SNP baseline
//! and the remaining `rank - 1` components vary across samples; all other
//! factor entries are uniform on [-1, 1]. The continuous matrix is rescaled
//! affinely to mean 1 and standard deviation [`CLASS_SPREAD`], and the offset
//! is folded into the baseline column so the rescaled matrix keeps rank at
//! most `rank`. Rounding to the nearest integer, clamped to `{0, 1, 2}`,
//! gives roughly a 25/50/25 split of homozygous/heterozygous calls.

use serde::{Deserialize, Serialize};

use super::types::{default_snp_ids, GenotypeMatrix, PhenotypeTable};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};

/// Standard deviation of the rescaled continuous matrix around its mean of 1.
pub const CLASS_SPREAD: f64 = 0.75;

/// How missing cells are placed in the holed copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MissingPattern {
    /// Uniformly chosen cells over the whole matrix.
    Uniform,
    /// Whole SNP columns receive a per-SNP missing rate drawn uniformly from
    /// `[min_rate, max_rate]`, visiting SNPs in random order until the cell
    /// budget is spent.
    PerSnp { min_rate: f64, max_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGenotypeConfig {
    pub samples: usize,
    pub snps: usize,
    pub rank: usize,
    pub missing_frac: f64,
    pub pattern: MissingPattern,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthGenotypes {
    pub holed: GenotypeMatrix,
    pub truth: GenotypeMatrix,
    /// Rescaled continuous matrix before rounding.
    pub continuous: Matrix,
}

/// Number of cells to mask: `ceil(frac * cells)` with float slack.
pub fn masked_cell_count(frac: f64, cells: usize) -> usize {
    let raw = frac * cells as f64;
    let k = (raw - 1e-9).ceil().max(0.0) as usize;
    k.min(cells)
}

pub fn synth_lowrank_genotypes(cfg: &SynthGenotypeConfig) -> Result<SynthGenotypes> {
    let (u, v, rank) = (cfg.samples, cfg.snps, cfg.rank);
    if u == 0 || v == 0 {
        return Err(Error::InvalidDimension(format!(
            "synthetic matrix needs positive dimensions, got {u}x{v}"
        )));
    }
    if rank == 0 || rank > u.min(v) {
        return Err(Error::Config(format!(
            "rank must lie in [1, {}], got {rank}",
            u.min(v)
        )));
    }
    if !(0.0..1.0).contains(&cfg.missing_frac) {
        return Err(Error::Config(format!(
            "missing_frac must lie in [0, 1), got {}",
            cfg.missing_frac
        )));
    }

    let mut rng = Rng::new(cfg.seed);
    let mut a = Matrix::zeros(u, rank);
    for i in 0..u {
        a.set(i, 0, 1.0);
        for k in 1..rank {
            a.set(i, k, rng.uniform(-1.0, 1.0));
        }
    }
    let mut b = Matrix::zeros(v, rank);
    for x in b.as_mut_slice() {
        *x = rng.uniform(-1.0, 1.0);
    }

    let raw = a.matmul_transposed(&b)?;
    let n = (u * v) as f64;
    let mean = raw.as_slice().iter().sum::<f64>() / n;
    let var = raw
        .as_slice()
        .iter()
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / n;
    let scale = if var > 0.0 {
        CLASS_SPREAD / var.sqrt()
    } else {
        0.0
    };

    // scale * A B^T + (1 - scale * mean) 1 1^T, folded into column 0 of B.
    b.scale(scale);
    let offset = 1.0 - scale * mean;
    for j in 0..v {
        let x = b.get(j, 0);
        b.set(j, 0, x + offset);
    }
    let continuous = a.matmul_transposed(&b)?;

    let codes: Vec<u8> = continuous
        .as_slice()
        .iter()
        .map(|&x| x.round_ties_even().clamp(0.0, 2.0) as u8)
        .collect();
    let truth = GenotypeMatrix::new(u, v, default_snp_ids(v), codes, vec![true; u * v])?;

    let holes = hole_mask(u, v, cfg.missing_frac, cfg.pattern, &mut rng)?;
    let holed = truth.with_holes(&holes)?;
    Ok(SynthGenotypes {
        holed,
        truth,
        continuous,
    })
}

fn hole_mask(
    u: usize,
    v: usize,
    frac: f64,
    pattern: MissingPattern,
    rng: &mut Rng,
) -> Result<Vec<bool>> {
    let budget = masked_cell_count(frac, u * v);
    let mut holes = vec![false; u * v];
    match pattern {
        MissingPattern::Uniform => {
            for i in rng.sample_indices(u * v, budget) {
                holes[i] = true;
            }
        }
        MissingPattern::PerSnp { min_rate, max_rate } => {
            if !(0.0 < min_rate && min_rate <= max_rate && max_rate <= 1.0) {
                return Err(Error::Config(format!(
                    "per-SNP missing rates must satisfy 0 < min <= max <= 1, got [{min_rate}, {max_rate}]"
                )));
            }
            let mut order: Vec<usize> = (0..v).collect();
            rng.shuffle(&mut order);
            let mut remaining = budget;
            for snp in order {
                if remaining == 0 {
                    break;
                }
                let rate = rng.uniform(min_rate, max_rate);
                let take = ((rate * u as f64).round() as usize)
                    .clamp(1, u)
                    .min(remaining);
                for row in rng.sample_indices(u, take) {
                    holes[row * v + snp] = true;
                }
                remaining -= take;
            }
        }
    }
    Ok(holes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPhenotypeConfig {
    pub traits: usize,
    pub causal_snps: usize,
    /// Fraction of trait variance explained by the causal SNPs.
    pub heritability: f64,
    /// Fraction of samples with a missing measurement, per trait.
    pub missing_frac: f64,
    pub seed: u64,
}

impl Default for SynthPhenotypeConfig {
    fn default() -> Self {
        SynthPhenotypeConfig {
            traits: 2,
            causal_snps: 10,
            heritability: 0.8,
            missing_frac: 0.05,
            seed: 0,
        }
    }
}

/// Additive traits over a random set of causal SNPs plus gaussian noise.
///
/// Each trait's genetic value is standardized before mixing with noise so the
/// trait has unit variance and the requested heritability.
pub fn synth_phenotypes(
    truth: &GenotypeMatrix,
    cfg: &SynthPhenotypeConfig,
) -> Result<PhenotypeTable> {
    if !truth.is_complete() {
        return Err(Error::State(
            "phenotypes need a fully observed genotype matrix".into(),
        ));
    }
    if cfg.traits == 0 {
        return Err(Error::Config("at least one trait is required".into()));
    }
    if cfg.causal_snps == 0 || cfg.causal_snps > truth.snps() {
        return Err(Error::Config(format!(
            "causal_snps must lie in [1, {}], got {}",
            truth.snps(),
            cfg.causal_snps
        )));
    }
    if !(0.0..=1.0).contains(&cfg.heritability) || !(0.0..1.0).contains(&cfg.missing_frac) {
        return Err(Error::Config(
            "heritability in [0,1] and missing_frac in [0,1) required".into(),
        ));
    }
    let u = truth.samples();
    let mut rng = Rng::new(cfg.seed);
    let mut values = vec![0.0; u * cfg.traits];
    let mut observed = vec![true; u * cfg.traits];
    for t in 0..cfg.traits {
        let causal = rng.sample_indices(truth.snps(), cfg.causal_snps);
        let effects: Vec<f64> = causal.iter().map(|_| rng.gaussian(0.0, 1.0)).collect();
        let genetic: Vec<f64> = (0..u)
            .map(|s| {
                causal
                    .iter()
                    .zip(&effects)
                    .map(|(&j, &e)| e * f64::from(truth.code(s, j)))
                    .sum()
            })
            .collect();
        let mean = genetic.iter().sum::<f64>() / u as f64;
        let sd = (genetic.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / u as f64).sqrt();
        let g_scale = if sd > 0.0 {
            cfg.heritability.sqrt() / sd
        } else {
            0.0
        };
        let e_scale = (1.0 - cfg.heritability).sqrt();
        for (s, g) in genetic.iter().enumerate() {
            values[s * cfg.traits + t] = (g - mean) * g_scale + e_scale * rng.gaussian(0.0, 1.0);
        }
        for s in rng.sample_indices(u, masked_cell_count(cfg.missing_frac, u)) {
            observed[s * cfg.traits + t] = false;
        }
    }
    let names = (1..=cfg.traits).map(|t| format!("trait{t}")).collect();
    PhenotypeTable::new(u, names, values, observed)
}

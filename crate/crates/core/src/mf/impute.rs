use serde::{Deserialize, Serialize};

use super::fit::{mf_reconstruct, FactorPair};
use crate::error::{Error, Result};
use crate::geno::GenotypeMatrix;

/// Nearest genotype code for a reconstructed value: round half to even,
/// then clamp to `[0, 2]`.
pub fn discretize(x: f64) -> u8 {
    if x.is_nan() {
        return 1;
    }
    x.round_ties_even().clamp(0.0, 2.0) as u8
}

/// Fills every missing cell with the discretized reconstruction; observed
/// cells keep their codes.
pub fn impute(g: &GenotypeMatrix, fp: &FactorPair) -> Result<GenotypeMatrix> {
    if fp.p.rows() != g.samples() || fp.q.rows() != g.snps() {
        return Err(Error::Shape("factors do not match genotype matrix".into()));
    }
    let recon = mf_reconstruct(fp);
    let codes = (0..g.samples() * g.snps())
        .map(|i| {
            let (u, v) = (i / g.snps(), i % g.snps());
            g.get(u, v).unwrap_or_else(|| discretize(recon.get(u, v)))
        })
        .collect();
    GenotypeMatrix::new(
        g.samples(),
        g.snps(),
        g.snp_ids().to_vec(),
        codes,
        vec![true; g.samples() * g.snps()],
    )
}

/// Rounded reconstruction for every cell, observed or not.
pub fn reconstruct_codes(fp: &FactorPair) -> Vec<u8> {
    mf_reconstruct(fp)
        .as_slice()
        .iter()
        .map(|&x| discretize(x))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputationAccuracy {
    /// Percent of holed cells recovered exactly; `None` when there are no holes.
    pub missing_pct: Option<f64>,
    /// Percent of all cells matching the truth.
    pub full_pct: f64,
}

/// Compares an imputed (or reconstructed) matrix against the truth.
pub fn imputation_accuracy(
    truth: &GenotypeMatrix,
    imputed: &GenotypeMatrix,
    holes: &[bool],
) -> Result<ImputationAccuracy> {
    if truth.samples() != imputed.samples()
        || truth.snps() != imputed.snps()
        || holes.len() != truth.samples() * truth.snps()
    {
        return Err(Error::Shape(format!(
            "truth {}x{}, imputed {}x{}, mask of {} cells",
            truth.samples(),
            truth.snps(),
            imputed.samples(),
            imputed.snps(),
            holes.len()
        )));
    }
    if !truth.is_complete() || !imputed.is_complete() {
        return Err(Error::State(
            "accuracy needs fully observed matrices".into(),
        ));
    }
    let mut hole_total = 0usize;
    let mut hole_hits = 0usize;
    let mut hits = 0usize;
    for ((&t, &p), &h) in truth.codes().iter().zip(imputed.codes()).zip(holes) {
        let same = t == p;
        hits += usize::from(same);
        if h {
            hole_total += 1;
            hole_hits += usize::from(same);
        }
    }
    let cells = holes.len() as f64;
    Ok(ImputationAccuracy {
        missing_pct: (hole_total > 0).then(|| 100.0 * hole_hits as f64 / hole_total as f64),
        full_pct: 100.0 * hits as f64 / cells,
    })
}

/// Table-style accuracy pair for a fit: missing-cell recovery from the
/// imputed matrix and whole-matrix agreement of the rounded reconstruction.
pub fn fit_accuracy(
    truth: &GenotypeMatrix,
    holed: &GenotypeMatrix,
    fp: &FactorPair,
) -> Result<ImputationAccuracy> {
    let imputed = impute(holed, fp)?;
    let holes = holed.holes();
    let missing = imputation_accuracy(truth, &imputed, &holes)?.missing_pct;
    let rebuilt = GenotypeMatrix::new(
        truth.samples(),
        truth.snps(),
        truth.snp_ids().to_vec(),
        reconstruct_codes(fp),
        vec![true; truth.samples() * truth.snps()],
    )?;
    let full = imputation_accuracy(truth, &rebuilt, &holes)?.full_pct;
    Ok(ImputationAccuracy {
        missing_pct: missing,
        full_pct: full,
    })
}

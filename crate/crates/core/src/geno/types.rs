use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// On-disk code for a missing genotype call.
pub const MISSING_CODE: u8 = 5;

/// Genotype calls for `samples` rows by `snps` columns.
///
/// Observed cells hold 0, 1 or 2 (copies of the B allele). The `observed`
/// mask is authoritative; unobserved cells always carry [`MISSING_CODE`] so
/// the sentinel shows up on disk but never reaches arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenotypeMatrix {
    samples: usize,
    snps: usize,
    snp_ids: Vec<String>,
    codes: Vec<u8>,
    observed: Vec<bool>,
}

impl GenotypeMatrix {
    pub fn new(
        samples: usize,
        snps: usize,
        snp_ids: Vec<String>,
        codes: Vec<u8>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        if samples == 0 || snps == 0 {
            return Err(Error::InvalidDimension(format!(
                "genotype matrix needs at least one sample and one SNP, got {samples}x{snps}"
            )));
        }
        let n = samples * snps;
        if codes.len() != n || observed.len() != n || snp_ids.len() != snps {
            return Err(Error::Shape(format!(
                "genotype buffers do not match {samples}x{snps}"
            )));
        }
        let mut codes = codes;
        for (i, (c, &obs)) in codes.iter_mut().zip(&observed).enumerate() {
            if obs {
                if *c > 2 {
                    return Err(Error::Data(format!(
                        "observed cell ({}, {}) has code {c}",
                        i / snps,
                        i % snps
                    )));
                }
            } else {
                *c = MISSING_CODE;
            }
        }
        Ok(GenotypeMatrix {
            samples,
            snps,
            snp_ids,
            codes,
            observed,
        })
    }

    /// Builds a matrix from raw codes, treating [`MISSING_CODE`] as missing.
    pub fn from_codes(samples: usize, snps: usize, codes: Vec<u8>) -> Result<Self> {
        let observed = codes.iter().map(|&c| c != MISSING_CODE).collect();
        GenotypeMatrix::new(samples, snps, default_snp_ids(snps), codes, observed)
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let snps = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != snps) {
            return Err(Error::Shape("ragged genotype rows".into()));
        }
        GenotypeMatrix::from_codes(rows.len(), snps, rows.concat())
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn snps(&self) -> usize {
        self.snps
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn observed_mask(&self) -> &[bool] {
        &self.observed
    }

    #[inline]
    pub fn code(&self, u: usize, v: usize) -> u8 {
        self.codes[u * self.snps + v]
    }

    #[inline]
    pub fn is_observed(&self, u: usize, v: usize) -> bool {
        self.observed[u * self.snps + v]
    }

    /// The call at `(u, v)`, or `None` when it is missing.
    pub fn get(&self, u: usize, v: usize) -> Option<u8> {
        let i = u * self.snps + v;
        self.observed[i].then_some(self.codes[i])
    }

    pub fn row_codes(&self, u: usize) -> &[u8] {
        &self.codes[u * self.snps..(u + 1) * self.snps]
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn missing_count(&self) -> usize {
        self.observed.len() - self.observed_count()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Mask of missing cells, the complement of the observation mask.
    pub fn holes(&self) -> Vec<bool> {
        self.observed.iter().map(|&o| !o).collect()
    }

    /// Marks additional cells missing.
    pub fn with_holes(&self, holes: &[bool]) -> Result<Self> {
        if holes.len() != self.observed.len() {
            return Err(Error::Shape("hole mask does not match matrix".into()));
        }
        let observed = self
            .observed
            .iter()
            .zip(holes)
            .map(|(&o, &h)| o && !h)
            .collect();
        GenotypeMatrix::new(
            self.samples,
            self.snps,
            self.snp_ids.clone(),
            self.codes.clone(),
            observed,
        )
    }

    /// Codes as reals; unobserved cells are 0.
    pub fn to_matrix(&self) -> Matrix {
        let data = self
            .codes
            .iter()
            .zip(&self.observed)
            .map(|(&c, &o)| if o { f64::from(c) } else { 0.0 })
            .collect();
        Matrix::from_vec(self.samples, self.snps, data).expect("dims checked at construction")
    }

    /// Rows reordered so that row `i` is the original row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.samples {
            return Err(Error::Shape("permutation length mismatch".into()));
        }
        let mut codes = Vec::with_capacity(self.codes.len());
        let mut observed = Vec::with_capacity(self.observed.len());
        for &p in perm {
            codes.extend_from_slice(self.row_codes(p));
            observed.extend_from_slice(&self.observed[p * self.snps..(p + 1) * self.snps]);
        }
        GenotypeMatrix::new(
            self.samples,
            self.snps,
            self.snp_ids.clone(),
            codes,
            observed,
        )
    }
}

pub fn default_snp_ids(snps: usize) -> Vec<String> {
    (1..=snps).map(|j| format!("snp{j}")).collect()
}

/// Continuous trait measurements, one row per sample.
#[derive(Debug, Clone)]
pub struct PhenotypeTable {
    samples: usize,
    trait_names: Vec<String>,
    values: Vec<f64>,
    observed: Vec<bool>,
}

/// Tables are equal when their shapes, names, masks and observed values agree;
/// values under a missing mask are ignored.
impl PartialEq for PhenotypeTable {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
            && self.trait_names == other.trait_names
            && self.observed == other.observed
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.observed)
                .all(|((a, b), &obs)| !obs || a.to_bits() == b.to_bits())
    }
}

impl PhenotypeTable {
    pub fn new(
        samples: usize,
        trait_names: Vec<String>,
        values: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        let n = samples * trait_names.len();
        if values.len() != n || observed.len() != n {
            return Err(Error::Shape(format!(
                "phenotype buffers do not match {samples}x{}",
                trait_names.len()
            )));
        }
        let values = values
            .into_iter()
            .zip(&observed)
            .map(|(v, &o)| if o { v } else { f64::NAN })
            .collect();
        Ok(PhenotypeTable {
            samples,
            trait_names,
            values,
            observed,
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn traits(&self) -> usize {
        self.trait_names.len()
    }

    pub fn trait_names(&self) -> &[String] {
        &self.trait_names
    }

    pub fn get(&self, u: usize, t: usize) -> Option<f64> {
        let i = u * self.traits() + t;
        self.observed[i].then_some(self.values[i])
    }

    pub fn is_observed(&self, u: usize, t: usize) -> bool {
        self.observed[u * self.traits() + t]
    }

    pub fn missing_count(&self, t: usize) -> usize {
        (0..self.samples)
            .filter(|&u| !self.is_observed(u, t))
            .count()
    }
}

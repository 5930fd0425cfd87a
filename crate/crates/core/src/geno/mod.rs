//! Genotype and phenotype tables: parsing, encoding, splitting, synthesis and
//! sequence assembly.

mod csv_io;
mod sequence;
mod split;
pub mod synth;
mod types;

pub use csv_io::{
    encode_call, encode_calls, parse_genotype_csv, parse_phenotype_csv, write_genotype_csv,
    write_phenotype_csv,
};
pub use sequence::{
    build_sequences, build_sequences_multi, build_sequences_zero_filled, timesteps_for,
    Normalization, SequenceBatch,
};
pub use split::{split_dataset, SplitIndices, SplitRatios};
pub use synth::{
    synth_lowrank_genotypes, synth_phenotypes, MissingPattern, SynthGenotypeConfig, SynthGenotypes,
    SynthPhenotypeConfig,
};
pub use types::{default_snp_ids, GenotypeMatrix, PhenotypeTable, MISSING_CODE};

use std::fs;
use std::path::{Path, PathBuf};

use genoseq::geno::MissingPattern;
use genoseq::gradcheck::{GradcheckConfig, DEFAULT_STEP, DEFAULT_THRESHOLD, DEFAULT_TRIALS};
use genoseq::pipeline::{BenchmarkConfig, PipelineConfig};
use genoseq::rnn::CellKind;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// The JSON configuration file. Every section is optional; command-line
/// flags override whatever it sets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub inputs: InputPaths,
    pub pipeline: PipelineConfig,
    pub synth: SynthSection,
    pub benchmark: BenchmarkConfig,
    pub gradcheck: GradcheckSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputPaths {
    pub geno: Option<PathBuf>,
    pub pheno: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub samples: usize,
    pub snps: usize,
    pub rank: usize,
    pub missing_frac: f64,
    pub pattern: MissingPattern,
    pub traits: usize,
    pub causal_snps: usize,
    pub heritability: f64,
    pub pheno_missing_frac: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            samples: 100,
            snps: 200,
            rank: 5,
            missing_frac: 0.1,
            pattern: MissingPattern::Uniform,
            traits: 2,
            causal_snps: 10,
            heritability: 0.8,
            pheno_missing_frac: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    pub trials: usize,
    pub step: f64,
    pub threshold: f64,
    pub mf: bool,
    pub cells: Vec<CellKind>,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            trials: DEFAULT_TRIALS,
            step: DEFAULT_STEP,
            threshold: DEFAULT_THRESHOLD,
            mf: true,
            cells: CellKind::ALL.to_vec(),
        }
    }
}

impl GradcheckSection {
    pub fn to_config(&self, seed: u64) -> GradcheckConfig {
        GradcheckConfig {
            trials: self.trials,
            seed,
            step: self.step,
            threshold: self.threshold,
            mf: self.mf,
            cells: self.cells.clone(),
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geno::{Normalization, SplitRatios};
use crate::linalg::derive_seed;
use crate::mf::MfConfig;
use crate::rnn::{BatchMode, CellKind, ClipNorm, Loss, TrainConfig, DEFAULT_INIT_STDDEV};

/// Default chunk width when turning a genotype row into a sequence.
pub const DEFAULT_CHUNK_WIDTH: usize = 20;
/// Default success band as a fraction of the training target range.
pub const DEFAULT_SUCCESS_TOLERANCE: f64 = 0.1;

/// Network architecture and optimizer settings for the trait models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RnnSection {
    pub cell: CellKind,
    pub hidden: usize,
    pub init_stddev: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub clip_norm: ClipNorm,
    pub batch_mode: BatchMode,
    pub loss: Loss,
}

impl Default for RnnSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        RnnSection {
            cell: CellKind::ReluIdentity,
            hidden: 32,
            init_stddev: DEFAULT_INIT_STDDEV,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            clip_norm: t.clip_norm,
            batch_mode: t.batch_mode,
            loss: t.loss,
        }
    }
}

impl RnnSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            clip_norm: self.clip_norm,
            loss: self.loss,
            seed,
            batch_mode: self.batch_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("rnn.hidden must be at least 1".into()));
        }
        if !(self.init_stddev.is_finite() && self.init_stddev > 0.0) {
            return Err(Error::Config(format!(
                "rnn.init_stddev must be positive, got {}",
                self.init_stddev
            )));
        }
        self.train_config(0).validate()
    }
}

/// Which genotype inputs the trained models are scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// The matrix after factorization-based imputation.
    Imputed,
    /// The matrix as observed, with missing cells entering as 0.
    ObservedOnly,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Imputed => "imputed",
            EvalMode::ObservedOnly => "observed_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Top-level seed; every stage seed is derived from it by stage name.
    pub seed: u64,
    pub mf: MfConfig,
    pub rnn: RnnSection,
    pub chunk_width: usize,
    pub normalization: Normalization,
    pub split: SplitRatios,
    /// Trait columns to model; empty means every trait.
    pub traits: Vec<usize>,
    pub success_tolerance: f64,
    /// One model with an output per trait instead of one model per trait.
    pub joint: bool,
    pub eval_modes: Vec<EvalMode>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            mf: MfConfig::default(),
            rnn: RnnSection::default(),
            chunk_width: DEFAULT_CHUNK_WIDTH,
            normalization: Normalization::Half,
            split: SplitRatios::default(),
            traits: Vec::new(),
            success_tolerance: DEFAULT_SUCCESS_TOLERANCE,
            joint: false,
            eval_modes: vec![EvalMode::Imputed, EvalMode::ObservedOnly],
        }
    }
}

/// Stage seeds fanned out from the top-level seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub top: u64,
    pub mf: u64,
    pub split: u64,
    /// `(model key, seed)`; the key is `trait<i>` or `joint`.
    pub rnn: Vec<(String, u64)>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.mf.validate()?;
        self.rnn.validate()?;
        self.split.validate()?;
        if self.chunk_width == 0 {
            return Err(Error::Config("chunk_width must be at least 1".into()));
        }
        if !(self.success_tolerance.is_finite() && self.success_tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "success_tolerance must be non-negative, got {}",
                self.success_tolerance
            )));
        }
        if self.eval_modes.is_empty() {
            return Err(Error::Config("eval_modes must not be empty".into()));
        }
        Ok(())
    }

    pub fn mf_seed(&self) -> u64 {
        derive_seed(self.seed, "mf")
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, "split")
    }

    pub fn rnn_seed(&self, key: &str) -> u64 {
        derive_seed(self.seed, &format!("rnn/{key}"))
    }

    /// Trait columns to model for a table with `available` traits.
    pub fn resolve_traits(&self, available: usize) -> Result<Vec<usize>> {
        if available == 0 {
            return Err(Error::Data("phenotype table has no traits".into()));
        }
        if self.traits.is_empty() {
            return Ok((0..available).collect());
        }
        if let Some(&t) = self.traits.iter().find(|&&t| t >= available) {
            return Err(Error::Index(format!(
                "trait {t} requested but the phenotype table has {available} traits"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(&t) = self.traits.iter().find(|&&t| !seen.insert(t)) {
            return Err(Error::Config(format!("trait {t} listed twice")));
        }
        Ok(self.traits.clone())
    }
}

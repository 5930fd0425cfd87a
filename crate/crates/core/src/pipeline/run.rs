use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EvalMode, PipelineConfig, RnnSection, StageSeeds};
use crate::error::{Error, Result};
use crate::geno::{
    build_sequences_multi, build_sequences_zero_filled, parse_genotype_csv, parse_phenotype_csv,
    split_dataset, GenotypeMatrix, PhenotypeTable, SequenceBatch, SplitIndices,
};
use crate::linalg::derive_seed;
use crate::mf::{fit_accuracy, impute, mf_fit, CostCurve, ImputationAccuracy};
use crate::rnn::{
    loss_mse, pearson_correlation, predict, rnn_init_with_stddev, train_tolerant, BatchMode,
    CellKind, Checkpoint, DivergenceInfo, Preprocessing, RnnParams, SyntheticTask, TrainingCurve,
};

pub const REPORT_VERSION: &str = "genoseq-report-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }

    fn pick(self, s: &SplitIndices) -> &[usize] {
        match self {
            SplitName::Train => &s.train,
            SplitName::Validation => &s.validation,
            SplitName::Test => &s.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub n: usize,
    /// `None` when predictions or targets are constant.
    pub correlation: Option<f64>,
    pub mse: f64,
    pub success_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub trait_name: String,
    pub mode: EvalMode,
    pub split: SplitName,
    /// `None` when the split holds no samples with this trait measured.
    pub metrics: Option<SplitMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    /// `trait<k>` (1-based) or `joint`.
    pub key: String,
    pub traits: Vec<usize>,
    pub trait_names: Vec<String>,
    pub cell: CellKind,
    pub seed: u64,
    pub status: ModelStatus,
    pub error: Option<String>,
    /// Samples dropped because a modeled trait is missing.
    pub excluded_samples: Vec<usize>,
    /// Samples the model was trained on.
    pub train_samples: Vec<usize>,
    pub curve: TrainingCurve,
    pub metrics: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfReport {
    pub curve: CostCurve,
    pub imputed_cells: usize,
    /// Present only when a fully observed reference matrix was supplied.
    pub accuracy: Option<ImputationAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub samples: usize,
    pub snps: usize,
    pub trait_names: Vec<String>,
    pub missing_genotypes: usize,
    pub missing_phenotypes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: PipelineConfig,
    pub seeds: StageSeeds,
    pub data: DataSummary,
    /// `None` when the genotype matrix had no missing cells.
    pub mf: Option<MfReport>,
    pub split: SplitIndices,
    pub models: Vec<ModelReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Everything a run produces. Only `report` is covered by the determinism
/// contract; `timings` holds wall-clock measurements.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: RunReport,
    pub imputed: GenotypeMatrix,
    /// Trained models keyed like [`ModelReport::key`]; failed models are absent.
    pub checkpoints: Vec<(String, Checkpoint)>,
    pub timings: Vec<StageTiming>,
}

struct Stopwatch {
    timings: Vec<StageTiming>,
    at: Instant,
}

impl Stopwatch {
    fn new() -> Self {
        Stopwatch {
            timings: Vec::new(),
            at: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: (now - self.at).as_secs_f64(),
        });
        self.at = now;
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Parses the input files and runs [`run_pipeline_data`].
pub fn run_pipeline(
    geno_path: &Path,
    pheno_path: &Path,
    truth_path: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let parse = || -> Result<_> {
        let g = parse_genotype_csv(open(geno_path)?)?;
        let p = parse_phenotype_csv(open(pheno_path)?)?;
        let t = truth_path
            .map(|t| parse_genotype_csv(open(t)?))
            .transpose()?;
        Ok((g, p, t))
    };
    let (g, p, t) = parse().map_err(|e| e.in_stage("parse"))?;
    run_pipeline_data(&g, &p, t.as_ref(), cfg)
}

/// Imputes, splits, trains one model per trait (or one joint model) and
/// scores every model on every split.
///
/// Stage errors carry the stage name. A model whose training diverges is
/// reported as failed without affecting the others.
pub fn run_pipeline_data(
    geno: &GenotypeMatrix,
    phenos: &PhenotypeTable,
    truth: Option<&GenotypeMatrix>,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    let mut clock = Stopwatch::new();
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let traits = validate_inputs(geno, phenos, truth, cfg).map_err(|e| e.in_stage("validate"))?;
    clock.lap("validate");

    let mut mf_cfg = cfg.mf.clone();
    mf_cfg.seed = cfg.mf_seed();
    let (imputed, mf) = if geno.is_complete() {
        info!("genotype matrix is complete; skipping factorization");
        (geno.clone(), None)
    } else {
        let run = || -> Result<_> {
            info!(
                "factorizing {}x{} genotypes with {} missing cells",
                geno.samples(),
                geno.snps(),
                geno.missing_count()
            );
            let fit = mf_fit(geno, &mf_cfg)?;
            let imputed = impute(geno, &fit.factors)?;
            let accuracy = truth
                .map(|t| fit_accuracy(t, geno, &fit.factors))
                .transpose()?;
            Ok((
                imputed,
                Some(MfReport {
                    curve: fit.curve,
                    imputed_cells: geno.missing_count(),
                    accuracy,
                }),
            ))
        };
        run().map_err(|e| e.in_stage("mf"))?
    };
    clock.lap("mf");

    let split = split_dataset(geno.samples(), cfg.split, cfg.split_seed())
        .map_err(|e| e.in_stage("split"))?;
    clock.lap("split");

    let jobs: Vec<(String, Vec<usize>)> = if cfg.joint {
        vec![("joint".to_string(), traits.clone())]
    } else {
        traits
            .iter()
            .map(|&t| (format!("trait{}", t + 1), vec![t]))
            .collect()
    };
    let ctx = ModelContext {
        geno,
        imputed: &imputed,
        phenos,
        split: &split,
        cfg,
    };
    let results: Vec<(ModelReport, Option<Checkpoint>)> = jobs
        .par_iter()
        .map(|(key, t)| ctx.run_model(key, t))
        .collect::<Result<_>>()?;
    clock.lap("rnn");

    let seeds = StageSeeds {
        top: cfg.seed,
        mf: mf_cfg.seed,
        split: split.seed,
        rnn: jobs
            .iter()
            .map(|(k, _)| (k.clone(), cfg.rnn_seed(k)))
            .collect(),
    };
    let mut resolved = cfg.clone();
    resolved.mf = mf_cfg;
    resolved.traits = traits;
    let mut models = Vec::new();
    let mut checkpoints = Vec::new();
    for (report, ck) in results {
        if let Some(ck) = ck {
            checkpoints.push((report.key.clone(), ck));
        }
        models.push(report);
    }
    let report = RunReport {
        version: REPORT_VERSION.to_string(),
        config: resolved,
        seeds,
        data: DataSummary {
            samples: geno.samples(),
            snps: geno.snps(),
            trait_names: phenos.trait_names().to_vec(),
            missing_genotypes: geno.missing_count(),
            missing_phenotypes: (0..phenos.traits())
                .map(|t| phenos.missing_count(t))
                .collect(),
        },
        mf,
        split,
        models,
    };
    Ok(PipelineOutcome {
        report,
        imputed,
        checkpoints,
        timings: clock.timings,
    })
}

fn validate_inputs(
    geno: &GenotypeMatrix,
    phenos: &PhenotypeTable,
    truth: Option<&GenotypeMatrix>,
    cfg: &PipelineConfig,
) -> Result<Vec<usize>> {
    if phenos.samples() != geno.samples() {
        return Err(Error::Data(format!(
            "{} genotype rows but {} phenotype rows",
            geno.samples(),
            phenos.samples()
        )));
    }
    if let Some(t) = truth {
        if (t.samples(), t.snps()) != (geno.samples(), geno.snps()) {
            return Err(Error::Shape(format!(
                "reference matrix is {}x{}, genotypes are {}x{}",
                t.samples(),
                t.snps(),
                geno.samples(),
                geno.snps()
            )));
        }
        if !t.is_complete() {
            return Err(Error::Data("reference matrix has missing cells".into()));
        }
    }
    cfg.resolve_traits(phenos.traits())
}

struct ModelContext<'a> {
    geno: &'a GenotypeMatrix,
    imputed: &'a GenotypeMatrix,
    phenos: &'a PhenotypeTable,
    split: &'a SplitIndices,
    cfg: &'a PipelineConfig,
}

impl ModelContext<'_> {
    fn batch(&self, mode: EvalMode, traits: &[usize]) -> Result<SequenceBatch> {
        let (w, n) = (self.cfg.chunk_width, self.cfg.normalization);
        match mode {
            EvalMode::Imputed => build_sequences_multi(self.imputed, self.phenos, traits, w, n),
            EvalMode::ObservedOnly => {
                build_sequences_zero_filled(self.geno, self.phenos, traits, w, n)
            }
        }
    }

    fn run_model(&self, key: &str, traits: &[usize]) -> Result<(ModelReport, Option<Checkpoint>)> {
        let cfg = self.cfg;
        let seed = cfg.rnn_seed(key);
        let names: Vec<String> = traits
            .iter()
            .map(|&t| self.phenos.trait_names()[t].clone())
            .collect();
        let full = self
            .batch(EvalMode::Imputed, traits)
            .map_err(|e| e.in_stage("sequences"))?;
        let train_batch = full.subset(&self.split.train);
        let val_batch = full.subset(&self.split.validation);
        let mut report = ModelReport {
            key: key.to_string(),
            traits: traits.to_vec(),
            trait_names: names.clone(),
            cell: cfg.rnn.cell,
            seed,
            status: ModelStatus::Ok,
            error: None,
            excluded_samples: full.excluded.clone(),
            train_samples: train_batch.sample_ids.clone(),
            curve: TrainingCurve::default(),
            metrics: Vec::new(),
        };
        if train_batch.is_empty() {
            report.status = ModelStatus::Failed;
            report.error = Some("no training samples with this trait measured".into());
            warn!("{key}: no training samples");
            return Ok((report, None));
        }
        let train = || -> Result<_> {
            let params = rnn_init_with_stddev(
                cfg.rnn.cell,
                cfg.chunk_width,
                cfg.rnn.hidden,
                traits.len(),
                seed,
                cfg.rnn.init_stddev,
            )?;
            let val = (!val_batch.is_empty()).then_some(&val_batch);
            train_tolerant(params, &train_batch, val, &cfg.rnn.train_config(seed))
        };
        let run = train().map_err(|e| e.in_stage("rnn"))?;
        report.curve = run.curve;
        if let Some(d) = run.diverged {
            warn!(
                "{key}: training diverged at epoch {}: {}",
                d.epoch, d.message
            );
            report.status = ModelStatus::Failed;
            report.error = Some(format!("diverged at epoch {}: {}", d.epoch, d.message));
            return Ok((report, None));
        }
        info!(
            "{key}: trained {} for {} epochs, final loss {:?}",
            cfg.rnn.cell,
            report.curve.len(),
            report.curve.final_train_loss()
        );

        let evaluate = || -> Result<Vec<MetricRow>> {
            let ranges = target_ranges(&train_batch);
            let mut rows = Vec::new();
            for &mode in &cfg.eval_modes {
                let batch = if mode == EvalMode::Imputed {
                    full.clone()
                } else {
                    self.batch(mode, traits)?
                };
                for split in SplitName::ALL {
                    let part = batch.subset(split.pick(self.split));
                    let metrics: Vec<Option<SplitMetrics>> = if part.is_empty() {
                        vec![None; traits.len()]
                    } else {
                        evaluate_split(&run.params, &part, cfg.success_tolerance, &ranges)?
                            .into_iter()
                            .map(Some)
                            .collect()
                    };
                    for (name, m) in names.iter().zip(metrics) {
                        rows.push(MetricRow {
                            trait_name: name.clone(),
                            mode,
                            split,
                            metrics: m,
                        });
                    }
                }
            }
            Ok(rows)
        };
        report.metrics = evaluate().map_err(|e| e.in_stage("evaluate"))?;
        let checkpoint = Checkpoint {
            params: run.params,
            preprocessing: Some(Preprocessing {
                chunk_width: cfg.chunk_width,
                normalization: cfg.normalization,
            }),
            target_name: Some(names.join(",")),
        };
        Ok((report, Some(checkpoint)))
    }
}

/// `max - min` of each target column.
pub fn target_ranges(batch: &SequenceBatch) -> Vec<f64> {
    (0..batch.output_width())
        .map(|c| {
            let (lo, hi) = batch
                .targets
                .iter()
                .map(|t| t[c])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                });
            hi - lo
        })
        .collect()
}

/// Scores one output column.
///
/// A prediction succeeds when `|pred - actual| <= tolerance * range`, where
/// `range` is the spread of that target over the training split.
pub fn score_predictions(
    pred: &[f64],
    actual: &[f64],
    tolerance: f64,
    range: f64,
) -> Result<SplitMetrics> {
    if pred.len() != actual.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Input("nothing to evaluate".into()));
    }
    let correlation = if pred.len() >= 2 {
        pearson_correlation(pred, actual)?
    } else {
        None
    };
    let as_rows = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
    let mse = loss_mse(&as_rows(pred), &as_rows(actual))?;
    let band = tolerance * range;
    let hits = pred
        .iter()
        .zip(actual)
        .filter(|(p, a)| (*p - *a).abs() <= band)
        .count();
    Ok(SplitMetrics {
        n: pred.len(),
        correlation,
        mse,
        success_pct: 100.0 * hits as f64 / pred.len() as f64,
    })
}

/// Correlation, mean squared error and success percentage of `params` on
/// `batch`, one entry per output column. `ranges` holds each column's
/// training-split target range.
pub fn evaluate_split(
    params: &RnnParams,
    batch: &SequenceBatch,
    success_tolerance: f64,
    ranges: &[f64],
) -> Result<Vec<SplitMetrics>> {
    if batch.is_empty() {
        return Err(Error::Input("cannot evaluate an empty batch".into()));
    }
    if ranges.len() != params.n_out {
        return Err(Error::Shape(format!(
            "{} target ranges for {} outputs",
            ranges.len(),
            params.n_out
        )));
    }
    let preds = predict(params, batch)?;
    (0..params.n_out)
        .map(|c| {
            let p: Vec<f64> = preds.iter().map(|y| y[c]).collect();
            let a: Vec<f64> = batch.targets.iter().map(|t| t[c]).collect();
            score_predictions(&p, &a, success_tolerance, ranges[c])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCurve {
    pub cell: CellKind,
    pub curve: TrainingCurve,
    pub diverged: Option<DivergenceInfo>,
}

impl CellCurve {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.curve.final_train_loss()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub seed: u64,
    pub curves: Vec<CellCurve>,
    /// Cells by ascending final training loss; diverged cells come last.
    pub ordering: Vec<CellKind>,
}

/// Trains each cell on the same data with the same budget.
///
/// All cells share one initialization seed and training seed; only the
/// cell-specific initialization rules differ.
pub fn compare_cells(
    train_batch: &SequenceBatch,
    val_batch: Option<&SequenceBatch>,
    cells: &[CellKind],
    rnn: &RnnSection,
    seed: u64,
) -> Result<CellComparison> {
    if cells.len() < 2 {
        return Err(Error::Config(
            "cell comparison needs at least two cells".into(),
        ));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(c) = cells.iter().find(|c| !seen.insert(**c)) {
        return Err(Error::Config(format!("cell {c} listed twice")));
    }
    rnn.validate()?;
    let n_in = train_batch.chunk_width;
    let n_out = train_batch.output_width();
    let curves: Vec<CellCurve> = cells
        .par_iter()
        .map(|&cell| {
            let params =
                rnn_init_with_stddev(cell, n_in, rnn.hidden, n_out, seed, rnn.init_stddev)?;
            let run = train_tolerant(params, train_batch, val_batch, &rnn.train_config(seed))?;
            Ok(CellCurve {
                cell,
                curve: run.curve,
                diverged: run.diverged,
            })
        })
        .collect::<Result<_>>()?;
    let mut ranked: Vec<&CellCurve> = curves.iter().collect();
    ranked.sort_by(|a, b| {
        let key = |c: &CellCurve| match (&c.diverged, c.final_train_loss()) {
            (None, Some(l)) => (0, l),
            _ => (1, 0.0),
        };
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    });
    let ordering = ranked.iter().map(|c| c.cell).collect();
    Ok(CellComparison {
        seed,
        curves,
        ordering,
    })
}

/// [`compare_cells`] on genotype data: imputes if needed, builds sequences
/// for the first configured trait and trains on its training split.
pub fn compare_cells_genotypes(
    geno: &GenotypeMatrix,
    phenos: &PhenotypeTable,
    cfg: &PipelineConfig,
    cells: &[CellKind],
) -> Result<CellComparison> {
    cfg.validate()?;
    let traits = validate_inputs(geno, phenos, None, cfg)?;
    let imputed = if geno.is_complete() {
        geno.clone()
    } else {
        let mut mf_cfg = cfg.mf.clone();
        mf_cfg.seed = cfg.mf_seed();
        let fit = mf_fit(geno, &mf_cfg).map_err(|e| e.in_stage("mf"))?;
        impute(geno, &fit.factors)?
    };
    let split = split_dataset(geno.samples(), cfg.split, cfg.split_seed())?;
    let full = build_sequences_multi(
        &imputed,
        phenos,
        &traits[..1],
        cfg.chunk_width,
        cfg.normalization,
    )?;
    let train_batch = full.subset(&split.train);
    let val_batch = full.subset(&split.validation);
    let val = (!val_batch.is_empty()).then_some(&val_batch);
    let key = format!("trait{}", traits[0] + 1);
    compare_cells(&train_batch, val, cells, &cfg.rnn, cfg.rnn_seed(&key))
}

/// Settings for [`run_benchmark`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    /// Task name such as `lag-memory-100` or `adding-50`.
    pub task: String,
    pub samples: usize,
    pub cells: Vec<CellKind>,
    pub rnn: RnnSection,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            task: "lag-memory-100".into(),
            samples: 64,
            cells: CellKind::ALL.to_vec(),
            rnn: RnnSection {
                hidden: 16,
                learning_rate: 0.001,
                epochs: 100,
                batch_mode: BatchMode::PerSample,
                ..RnnSection::default()
            },
        }
    }
}

/// Generates the task data from `derive_seed(seed, "benchmark/data")` and runs
/// [`compare_cells`] with `derive_seed(seed, "benchmark/rnn")`.
pub fn run_benchmark(cfg: &BenchmarkConfig, seed: u64) -> Result<CellComparison> {
    let task: SyntheticTask = cfg.task.parse()?;
    let batch = task.generate(cfg.samples, derive_seed(seed, "benchmark/data"))?;
    compare_cells(
        &batch,
        None,
        &cfg.cells,
        &cfg.rnn,
        derive_seed(seed, "benchmark/rnn"),
    )
}

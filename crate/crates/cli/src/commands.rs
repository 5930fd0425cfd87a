use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use genoseq::geno::{
    build_sequences_multi, parse_genotype_csv, parse_phenotype_csv, synth_lowrank_genotypes,
    synth_phenotypes, write_genotype_csv, write_phenotype_csv, GenotypeMatrix, Normalization,
    PhenotypeTable, SynthGenotypeConfig, SynthPhenotypeConfig,
};
use genoseq::gradcheck::run_gradcheck;
use genoseq::linalg::derive_seed;
use genoseq::mf::{
    fit_accuracy, impute as mf_impute, mf_fit, CostRecord, ImputationAccuracy, MfConfig,
};
use genoseq::pipeline::{
    evaluate_split, run_benchmark, run_pipeline_data, target_ranges, write_report_files,
    BenchmarkConfig, CellComparison, Manifest, ModelStatus, PipelineConfig, RnnSection,
    SplitMetrics,
};
use genoseq::rnn::{predict as rnn_predict, Checkpoint, ClipNorm};
use log::info;
use serde::Serialize;

use crate::config::CliConfig;
use crate::{
    BenchmarkArgs, CliError, GradcheckArgs, ImputeArgs, PredictArgs, RnnArgs, SharedArgs,
    SynthArgs, TrainArgs,
};

pub struct Context {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub cfg: CliConfig,
}

impl Context {
    pub fn new(shared: &SharedArgs, cfg: CliConfig) -> Self {
        Context {
            seed: shared.seed.unwrap_or(cfg.pipeline.seed),
            out: shared.out.clone().or_else(|| cfg.out.clone()),
            cfg,
        }
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::usage("--out is required"))
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            seed: self.seed,
            ..self.cfg.pipeline.clone()
        }
    }
}

fn required(
    flag: Option<PathBuf>,
    config: &Option<PathBuf>,
    name: &str,
) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::usage(format!("--{name} is required")))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(genoseq::Error::io(path, e)))
}

fn read_genotypes(path: &Path) -> Result<GenotypeMatrix, CliError> {
    parse_genotype_csv(open(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_phenotypes(path: &Path) -> Result<PhenotypeTable, CliError> {
    parse_phenotype_csv(open(path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_truth(path: &Path, holed: &GenotypeMatrix) -> Result<GenotypeMatrix, CliError> {
    let t = read_genotypes(path)?;
    if (t.samples(), t.snps()) != (holed.samples(), holed.snps()) {
        return Err(CliError::usage(format!(
            "{} is {}x{}, genotypes are {}x{}",
            path.display(),
            t.samples(),
            t.snps(),
            holed.samples(),
            holed.snps()
        )));
    }
    if !t.is_complete() {
        return Err(CliError::usage(format!(
            "{} has missing cells",
            path.display()
        )));
    }
    Ok(t)
}

/// Files written under one output directory, hashed into `manifest.json`.
struct Outputs {
    dir: PathBuf,
    manifest: Manifest,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| genoseq::Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            manifest: Manifest::default(),
        })
    }

    fn write(&mut self, file: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.manifest.write(&self.dir, file, bytes)?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(genoseq::Error::from)?;
        text.push('\n');
        self.write(file, text.as_bytes())
    }

    fn genotypes(&mut self, file: &str, g: &GenotypeMatrix) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write_genotype_csv(g, &mut buf)?;
        self.write(file, &buf)
    }

    fn finish(self) -> Result<Manifest, CliError> {
        Ok(self.manifest.finish(&self.dir)?)
    }
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::from(genoseq::Error::Data(format!("csv encoding: {e}")));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.into_inner()
        .map_err(|e| CliError::from(genoseq::Error::Data(format!("csv encoding: {e}"))))
}

fn apply_rnn_args(section: &mut RnnSection, a: &RnnArgs) {
    if let Some(c) = a.cell {
        section.cell = c;
    }
    if let Some(h) = a.hidden {
        section.hidden = h;
    }
    if let Some(e) = a.epochs {
        section.epochs = e;
    }
    if let Some(lr) = a.lr {
        section.learning_rate = lr;
    }
    if let Some(m) = a.batch_mode {
        section.batch_mode = m;
    }
    if let Some(c) = a.clip_norm {
        section.clip_norm = if c == 0.0 {
            ClipNorm::Off
        } else {
            ClipNorm::Norm(c)
        };
    }
}

#[derive(Serialize)]
struct FitReport {
    version: &'static str,
    seed: u64,
    config: MfConfig,
    samples: usize,
    snps: usize,
    missing_cells: usize,
    epochs_run: usize,
    final_cost: Option<CostRecord>,
    /// Present only when reference genotypes were given.
    accuracy: Option<ImputationAccuracy>,
}

pub fn impute(ctx: &Context, a: ImputeArgs) -> Result<(), CliError> {
    let geno_path = required(a.geno, &ctx.cfg.inputs.geno, "geno")?;
    let truth_path = a.truth.or_else(|| ctx.cfg.inputs.truth.clone());
    let out = ctx.out_dir()?;
    let pipeline = ctx.pipeline();
    let mut mf = MfConfig {
        seed: pipeline.mf_seed(),
        ..pipeline.mf.clone()
    };
    if let Some(f) = a.features {
        mf.features = f;
    }
    if let Some(e) = a.epochs {
        mf.epochs = e;
    }
    if let Some(x) = a.alpha {
        mf.alpha = x;
    }
    if let Some(x) = a.beta {
        mf.beta = x;
    }
    if let Some(m) = a.mode {
        mf.mode = m;
    }
    mf.validate()?;

    let g = read_genotypes(&geno_path)?;
    let truth = truth_path.map(|p| read_truth(&p, &g)).transpose()?;
    info!(
        "fitting {} features to {}x{} genotypes",
        mf.features,
        g.samples(),
        g.snps()
    );
    let fit = mf_fit(&g, &mf)?;
    let imputed = mf_impute(&g, &fit.factors)?;
    let accuracy = truth
        .as_ref()
        .map(|t| fit_accuracy(t, &g, &fit.factors))
        .transpose()?;

    let mut files = Outputs::create(out)?;
    files.genotypes("imputed.csv", &imputed)?;
    let mut cost = Vec::new();
    fit.curve
        .write_csv(&mut cost)
        .map_err(|e| genoseq::Error::io("mf_cost.csv", e))?;
    files.write("mf_cost.csv", &cost)?;
    let report = FitReport {
        version: "genoseq-fit-v1",
        seed: ctx.seed,
        config: mf,
        samples: g.samples(),
        snps: g.snps(),
        missing_cells: g.missing_count(),
        epochs_run: fit.curve.len(),
        final_cost: fit.curve.last().copied(),
        accuracy,
    };
    files.json("fit_report.json", &report)?;
    files.finish()?;

    println!("imputed {} missing cells", g.missing_count());
    if let Some(c) = report.final_cost {
        println!("final sse {} objective {}", c.sse, c.objective);
    }
    if let Some(acc) = report.accuracy {
        match acc.missing_pct {
            Some(m) => println!("missing-cell accuracy {m:.2}%"),
            None => println!("missing-cell accuracy n/a"),
        }
        println!("full-matrix accuracy {:.2}%", acc.full_pct);
    }
    Ok(())
}

pub fn train(ctx: &Context, a: TrainArgs) -> Result<(), CliError> {
    let geno_path = required(a.geno, &ctx.cfg.inputs.geno, "geno")?;
    let pheno_path = required(a.pheno, &ctx.cfg.inputs.pheno, "pheno")?;
    let truth_path = a.truth.or_else(|| ctx.cfg.inputs.truth.clone());
    let out = ctx.out_dir()?;
    let mut cfg = ctx.pipeline();
    apply_rnn_args(&mut cfg.rnn, &a.rnn);
    if let Some(t) = a.traits {
        cfg.traits = t;
    }
    if a.joint {
        cfg.joint = true;
    }
    if let Some(w) = a.chunk_width {
        cfg.chunk_width = w;
    }
    if let Some(f) = a.features {
        cfg.mf.features = f;
    }
    if let Some(e) = a.mf_epochs {
        cfg.mf.epochs = e;
    }
    cfg.validate()?;
    let formats: BTreeSet<_> = a.formats.into_iter().collect();

    let g = read_genotypes(&geno_path)?;
    let p = read_phenotypes(&pheno_path)?;
    let truth = truth_path.map(|t| read_truth(&t, &g)).transpose()?;
    let outcome = run_pipeline_data(&g, &p, truth.as_ref(), &cfg)?;

    let mut files = Outputs::create(out)?;
    write_report_files(&outcome.report, &files.dir, &formats, &mut files.manifest)?;
    for (key, ck) in &outcome.checkpoints {
        files.write(&format!("model_{key}.json"), ck.to_json()?.as_bytes())?;
    }
    if !g.is_complete() {
        files.genotypes("imputed.csv", &outcome.imputed)?;
    }
    files.finish()?;
    // Wall-clock data stays out of the manifest so reruns hash identically.
    let timings = out.join("timings.json");
    let text = serde_json::to_string_pretty(&outcome.timings).map_err(genoseq::Error::from)?;
    fs::write(&timings, text + "\n").map_err(|e| genoseq::Error::io(&timings, e))?;

    let mut failed = Vec::new();
    for m in &outcome.report.models {
        match m.status {
            ModelStatus::Ok => println!(
                "{}: {} epochs, final training loss {:?}",
                m.key,
                m.curve.len(),
                m.curve.final_train_loss().unwrap_or(f64::NAN)
            ),
            ModelStatus::Failed => {
                let why = m.error.clone().unwrap_or_default();
                println!("{}: failed: {why}", m.key);
                failed.push(format!("{}: {why}", m.key));
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::numerical(format!(
            "{} of {} models failed ({})",
            failed.len(),
            outcome.report.models.len(),
            failed.join("; ")
        )))
    }
}

#[derive(Serialize)]
struct TargetMetrics {
    target: String,
    metrics: SplitMetrics,
}

#[derive(Serialize)]
struct PredictReport {
    version: &'static str,
    samples_scored: usize,
    /// The success band uses the range of the supplied targets.
    targets: Vec<TargetMetrics>,
}

pub fn predict(ctx: &Context, a: PredictArgs) -> Result<(), CliError> {
    let ck_path = required(a.checkpoint, &ctx.cfg.inputs.checkpoint, "checkpoint")?;
    let geno_path = required(a.geno, &ctx.cfg.inputs.geno, "geno")?;
    let pheno_path = a.pheno.or_else(|| ctx.cfg.inputs.pheno.clone());
    let out = ctx.out_dir()?;

    let ck = Checkpoint::load(&ck_path).map_err(CliError::input)?;
    let g = read_genotypes(&geno_path)?;
    if !g.is_complete() {
        return Err(CliError::usage(format!(
            "{} has {} missing cells; run impute first",
            geno_path.display(),
            g.missing_count()
        )));
    }
    let params = &ck.params;
    let (width, norm) = match ck.preprocessing {
        Some(p) => (p.chunk_width, p.normalization),
        None => (params.n_in, Normalization::default()),
    };
    let names: Vec<String> = match &ck.target_name {
        Some(n) if n.split(',').count() == params.n_out => n.split(',').map(String::from).collect(),
        _ => (0..params.n_out).map(|i| format!("output{i}")).collect(),
    };
    let outputs: Vec<usize> = (0..params.n_out).collect();
    let placeholder = PhenotypeTable::new(
        g.samples(),
        names.clone(),
        vec![0.0; g.samples() * params.n_out],
        vec![true; g.samples() * params.n_out],
    )?;
    let batch = build_sequences_multi(&g, &placeholder, &outputs, width, norm)?;
    let preds = rnn_predict(params, &batch)?;

    let report = pheno_path
        .map(|path| -> Result<PredictReport, CliError> {
            let p = read_phenotypes(&path)?;
            let cols = names
                .iter()
                .enumerate()
                .map(|(i, n)| match p.trait_names().iter().position(|t| t == n) {
                    Some(c) => Ok(c),
                    None if ck.target_name.is_none() && i < p.traits() => Ok(i),
                    None => Err(CliError::usage(format!(
                        "{} has no column {n:?}",
                        path.display()
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let scored = build_sequences_multi(&g, &p, &cols, width, norm)?;
            if scored.is_empty() {
                return Err(CliError::usage("no sample has every target measured"));
            }
            let ranges = target_ranges(&scored);
            let metrics =
                evaluate_split(params, &scored, ctx.cfg.pipeline.success_tolerance, &ranges)?;
            Ok(PredictReport {
                version: "genoseq-predict-v1",
                samples_scored: scored.len(),
                targets: names
                    .iter()
                    .cloned()
                    .zip(metrics)
                    .map(|(target, metrics)| TargetMetrics { target, metrics })
                    .collect(),
            })
        })
        .transpose()?;

    let mut files = Outputs::create(out)?;
    let header: Vec<String> = std::iter::once("sample".to_string())
        .chain(names.iter().cloned())
        .collect();
    let rows: Vec<Vec<String>> = batch
        .sample_ids
        .iter()
        .zip(&preds)
        .map(|(id, y)| {
            std::iter::once(id.to_string())
                .chain(y.iter().map(|v| format!("{v:?}")))
                .collect()
        })
        .collect();
    files.write("predictions.csv", &csv_text(&header, &rows)?)?;
    if let Some(r) = &report {
        files.json("metrics.json", r)?;
        for t in &r.targets {
            let corr = t
                .metrics
                .correlation
                .map_or_else(|| "n/a".to_string(), |c| format!("{c:.4}"));
            println!(
                "{}: n {} correlation {corr} mse {:.6} success {:.1}%",
                t.target, t.metrics.n, t.metrics.mse, t.metrics.success_pct
            );
        }
    }
    files.finish()?;
    println!("wrote predictions for {} samples", preds.len());
    Ok(())
}

#[derive(Serialize)]
struct BenchmarkReport<'a> {
    version: &'static str,
    seed: u64,
    config: &'a BenchmarkConfig,
    comparison: &'a CellComparison,
}

pub fn benchmark(ctx: &Context, a: BenchmarkArgs) -> Result<(), CliError> {
    let out = ctx.out_dir()?;
    let mut cfg = ctx.cfg.benchmark.clone();
    if let Some(t) = a.task {
        cfg.task = t;
    }
    if let Some(c) = a.cells {
        cfg.cells = c;
    }
    if let Some(n) = a.samples {
        cfg.samples = n;
    }
    apply_rnn_args(&mut cfg.rnn, &a.rnn);
    let cmp = run_benchmark(&cfg, ctx.seed)?;

    let mut files = Outputs::create(out)?;
    for c in &cmp.curves {
        let mut buf = Vec::new();
        c.curve
            .write_csv(&mut buf)
            .map_err(|e| genoseq::Error::io("curve", e))?;
        files.write(&format!("curve_{}.csv", c.cell), &buf)?;
    }
    let epochs = cmp.curves.iter().map(|c| c.curve.len()).max().unwrap_or(0);
    let header: Vec<String> = std::iter::once("epoch".to_string())
        .chain(cmp.curves.iter().map(|c| c.cell.to_string()))
        .collect();
    let rows: Vec<Vec<String>> = (0..epochs)
        .map(|e| {
            std::iter::once(e.to_string())
                .chain(cmp.curves.iter().map(|c| {
                    c.curve
                        .records
                        .get(e)
                        .map_or_else(String::new, |r| format!("{:?}", r.train_loss))
                }))
                .collect()
        })
        .collect();
    files.write("curves.csv", &csv_text(&header, &rows)?)?;
    files.json(
        "benchmark.json",
        &BenchmarkReport {
            version: "genoseq-benchmark-v1",
            seed: ctx.seed,
            config: &cfg,
            comparison: &cmp,
        },
    )?;
    files.finish()?;

    for c in &cmp.curves {
        match (&c.diverged, c.final_train_loss()) {
            (Some(d), _) => println!("{}: diverged at epoch {}", c.cell, d.epoch),
            (None, Some(l)) => println!("{}: final training loss {l:.6}", c.cell),
            (None, None) => println!("{}: no epochs run", c.cell),
        }
    }
    let order: Vec<String> = cmp.ordering.iter().map(|c| c.to_string()).collect();
    println!("ordering: {}", order.join(" < "));
    Ok(())
}

#[derive(Serialize)]
struct SynthSidecar {
    version: &'static str,
    seed: u64,
    genotypes: SynthGenotypeConfig,
    phenotypes: SynthPhenotypeConfig,
    missing_cells: usize,
}

pub fn synth(ctx: &Context, a: SynthArgs) -> Result<(), CliError> {
    let out = ctx.out_dir()?;
    let mut s = ctx.cfg.synth.clone();
    if let Some(x) = a.samples {
        s.samples = x;
    }
    if let Some(x) = a.snps {
        s.snps = x;
    }
    if let Some(x) = a.rank {
        s.rank = x;
    }
    if let Some(x) = a.missing_frac {
        s.missing_frac = x;
    }
    if let Some(x) = a.pattern {
        s.pattern = x;
    }
    if let Some(x) = a.traits {
        s.traits = x;
    }
    if let Some(x) = a.causal_snps {
        s.causal_snps = x;
    }
    if let Some(x) = a.heritability {
        s.heritability = x;
    }
    if let Some(x) = a.pheno_missing_frac {
        s.pheno_missing_frac = x;
    }
    let gcfg = SynthGenotypeConfig {
        samples: s.samples,
        snps: s.snps,
        rank: s.rank,
        missing_frac: s.missing_frac,
        pattern: s.pattern,
        seed: derive_seed(ctx.seed, "synth/genotypes"),
    };
    let pcfg = SynthPhenotypeConfig {
        traits: s.traits,
        causal_snps: s.causal_snps,
        heritability: s.heritability,
        missing_frac: s.pheno_missing_frac,
        seed: derive_seed(ctx.seed, "synth/phenotypes"),
    };
    let g = synth_lowrank_genotypes(&gcfg)?;
    let p = synth_phenotypes(&g.truth, &pcfg)?;

    let mut files = Outputs::create(out)?;
    files.genotypes("genotypes.csv", &g.holed)?;
    files.genotypes("truth.csv", &g.truth)?;
    let mut buf = Vec::new();
    write_phenotype_csv(&p, &mut buf)?;
    files.write("phenotypes.csv", &buf)?;
    let missing_cells = g.holed.missing_count();
    files.json(
        "synth.json",
        &SynthSidecar {
            version: "genoseq-synth-v1",
            seed: ctx.seed,
            genotypes: gcfg,
            phenotypes: pcfg,
            missing_cells,
        },
    )?;
    files.finish()?;
    println!(
        "wrote {}x{} genotypes ({missing_cells} missing) and {} traits",
        g.holed.samples(),
        g.holed.snps(),
        p.traits()
    );
    Ok(())
}

pub fn gradcheck(ctx: &Context, a: GradcheckArgs) -> Result<(), CliError> {
    let mut sec = ctx.cfg.gradcheck.clone();
    if let Some(t) = a.trials {
        sec.trials = t;
    }
    if let Some(c) = a.cells {
        sec.cells = c;
        sec.mf = a.mf;
    } else if a.mf {
        sec.mf = true;
    }
    if let Some(t) = a.threshold {
        sec.threshold = t;
    }
    if let Some(s) = a.step {
        sec.step = s;
    }
    let results = run_gradcheck(&sec.to_config(ctx.seed))?;
    for r in &results {
        println!(
            "{:<14} trials {:>3} components {:>6} max rel error {:.3e} {}",
            r.target,
            r.trials,
            r.components,
            r.max_rel_error,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    if let Some(out) = &ctx.out {
        let mut files = Outputs::create(out)?;
        files.json("gradcheck.json", &results)?;
        files.finish()?;
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.target.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::numerical(format!(
            "gradient check failed for {} (threshold {:e})",
            failed.join(", "),
            sec.threshold
        )))
    }
}

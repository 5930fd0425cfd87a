//! End-to-end runs of the impute-then-predict pipeline on synthetic data.

use std::collections::BTreeSet;
use std::fs::File;

use genoseq::geno::{
    synth_lowrank_genotypes, synth_phenotypes, write_genotype_csv, write_phenotype_csv,
    MissingPattern, SplitRatios, SynthGenotypeConfig, SynthPhenotypeConfig,
};
use genoseq::mf::MfConfig;
use genoseq::pipeline::{
    export_report, run_pipeline, run_pipeline_data, EvalMode, ExportFormat, ModelStatus,
    PipelineConfig, RnnSection, SplitName,
};
use genoseq::rnn::BatchMode;

#[test]
fn defaults_follow_parameter_table() {
    let mf = MfConfig::default();
    assert_eq!(mf.alpha, 0.001);
    assert_eq!(mf.beta, 0.02);
    assert_eq!(mf.epochs, 5000);
    assert_eq!(mf.features, 400);
    assert_eq!(mf.init_range, (0.0, 1.0));
    let split = SplitRatios::default();
    assert_eq!((split.train, split.validation, split.test), (0.8, 0.1, 0.1));
}

#[test]
fn file_run_is_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let g = synth_lowrank_genotypes(&SynthGenotypeConfig {
        samples: 50,
        snps: 60,
        rank: 3,
        missing_frac: 0.1,
        pattern: MissingPattern::PerSnp {
            min_rate: 0.05,
            max_rate: 0.3,
        },
        seed: 21,
    })
    .unwrap();
    let p = synth_phenotypes(&g.truth, &SynthPhenotypeConfig::default()).unwrap();
    let geno_path = dir.path().join("g.csv");
    let truth_path = dir.path().join("t.csv");
    let pheno_path = dir.path().join("p.csv");
    write_genotype_csv(&g.holed, File::create(&geno_path).unwrap()).unwrap();
    write_genotype_csv(&g.truth, File::create(&truth_path).unwrap()).unwrap();
    write_phenotype_csv(&p, File::create(&pheno_path).unwrap()).unwrap();

    let cfg = PipelineConfig {
        seed: 9,
        mf: MfConfig {
            features: 4,
            epochs: 200,
            ..MfConfig::default()
        },
        rnn: RnnSection {
            hidden: 6,
            epochs: 10,
            ..RnnSection::default()
        },
        ..PipelineConfig::default()
    };
    let a = run_pipeline(&geno_path, &pheno_path, Some(&truth_path), &cfg).unwrap();
    let r = &a.report;
    let acc = r.mf.as_ref().unwrap().accuracy.as_ref().unwrap();
    assert!(acc.missing_pct.unwrap() > 0.0 && acc.full_pct > 0.0);
    assert_eq!(r.models.len(), 2);
    for m in &r.models {
        assert_eq!(m.status, ModelStatus::Ok);
        assert_eq!(m.curve.len(), 10);
        for mode in [EvalMode::Imputed, EvalMode::ObservedOnly] {
            for split in SplitName::ALL {
                let n = m
                    .metrics
                    .iter()
                    .filter(|row| row.mode == mode && row.split == split)
                    .count();
                assert_eq!(n, 1);
            }
        }
    }

    let b = run_pipeline(&geno_path, &pheno_path, Some(&truth_path), &cfg).unwrap();
    let formats: BTreeSet<_> = [ExportFormat::Json, ExportFormat::Csv]
        .into_iter()
        .collect();
    let ma = export_report(&a.report, &dir.path().join("a"), &formats).unwrap();
    let mb = export_report(&b.report, &dir.path().join("b"), &formats).unwrap();
    assert_eq!(ma, mb);
    let ja = std::fs::read(dir.path().join("a/report.json")).unwrap();
    let jb = std::fs::read(dir.path().join("b/report.json")).unwrap();
    assert_eq!(ja, jb);
}

/// Training-split error should not exceed test-split error when the traits
/// carry learnable signal; required in at least 8 of 10 seeded runs.
#[test]
fn training_error_beats_test_error() {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let g = synth_lowrank_genotypes(&SynthGenotypeConfig {
            samples: 100,
            snps: 100,
            rank: 5,
            missing_frac: 0.0,
            pattern: MissingPattern::Uniform,
            seed,
        })
        .unwrap();
        let p = synth_phenotypes(
            &g.truth,
            &SynthPhenotypeConfig {
                traits: 1,
                missing_frac: 0.0,
                seed,
                ..SynthPhenotypeConfig::default()
            },
        )
        .unwrap();
        let cfg = PipelineConfig {
            seed,
            chunk_width: 10,
            split: SplitRatios {
                train: 0.6,
                validation: 0.2,
                test: 0.2,
            },
            rnn: RnnSection {
                hidden: 16,
                init_stddev: 0.1,
                learning_rate: 0.01,
                epochs: 100,
                batch_mode: BatchMode::PerSample,
                ..RnnSection::default()
            },
            eval_modes: vec![EvalMode::Imputed],
            ..PipelineConfig::default()
        };
        let out = run_pipeline_data(&g.truth, &p, None, &cfg).unwrap();
        let m = &out.report.models[0];
        let mse = |s: SplitName| {
            m.metrics
                .iter()
                .find(|row| row.split == s)
                .and_then(|row| row.metrics.as_ref())
                .unwrap()
                .mse
        };
        let (train, test) = (mse(SplitName::Train), mse(SplitName::Test));
        if train <= test {
            wins += 1;
        }
        lines.push(format!("seed {seed}: train {train:.4} test {test:.4}"));
    }
    assert!(wins >= 8, "{wins}/10\n{}", lines.join("\n"));
}

//! The impute-then-predict workflow: factorization-based imputation,
//! sequence assembly, per-trait recurrent models, evaluation and export.

mod config;
mod export;
mod run;

pub use config::{
    EvalMode, PipelineConfig, RnnSection, StageSeeds, DEFAULT_CHUNK_WIDTH,
    DEFAULT_SUCCESS_TOLERANCE,
};
pub use export::{
    export_report, write_report_files, ExportFormat, Manifest, ManifestEntry, MANIFEST_FILE,
};
pub use run::{
    compare_cells, compare_cells_genotypes, evaluate_split, run_benchmark, run_pipeline,
    run_pipeline_data, score_predictions, target_ranges, BenchmarkConfig, CellComparison,
    CellCurve, DataSummary, MetricRow, MfReport, ModelReport, ModelStatus, PipelineOutcome,
    RunReport, SplitMetrics, SplitName, StageTiming, REPORT_VERSION,
};

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::error::Error;
    use crate::geno::{
        synth_lowrank_genotypes, synth_phenotypes, MissingPattern, PhenotypeTable,
        SynthGenotypeConfig, SynthPhenotypeConfig,
    };
    use crate::mf::MfConfig;
    use crate::rnn::{rnn_init, BatchMode, CellKind, ClipNorm, SyntheticTask};

    fn dataset(seed: u64) -> (crate::geno::SynthGenotypes, PhenotypeTable) {
        let g = synth_lowrank_genotypes(&SynthGenotypeConfig {
            samples: 50,
            snps: 60,
            rank: 3,
            missing_frac: 0.1,
            pattern: MissingPattern::Uniform,
            seed,
        })
        .unwrap();
        let p = synth_phenotypes(
            &g.truth,
            &SynthPhenotypeConfig {
                seed,
                ..SynthPhenotypeConfig::default()
            },
        )
        .unwrap();
        (g, p)
    }

    fn tiny_config() -> PipelineConfig {
        PipelineConfig {
            seed: 3,
            mf: MfConfig {
                features: 3,
                epochs: 50,
                ..MfConfig::default()
            },
            rnn: RnnSection {
                hidden: 4,
                epochs: 5,
                ..RnnSection::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn smoke_run_fills_every_field() {
        let (g, p) = dataset(1);
        let cfg = PipelineConfig {
            traits: vec![0],
            ..tiny_config()
        };
        let out = run_pipeline_data(&g.holed, &p, Some(&g.truth), &cfg).unwrap();
        let r = &out.report;
        assert_eq!(r.version, REPORT_VERSION);
        assert_eq!((r.data.samples, r.data.snps), (50, 60));
        assert_eq!(r.data.missing_genotypes, g.holed.missing_count());
        let mf = r.mf.as_ref().unwrap();
        assert_eq!(mf.curve.len(), 50);
        assert!(mf.accuracy.as_ref().unwrap().missing_pct.is_some());
        assert_eq!(r.seeds.mf, cfg.mf_seed());
        assert_eq!(r.config.mf.seed, cfg.mf_seed());
        assert_eq!(
            r.seeds.rnn,
            vec![("trait1".to_string(), cfg.rnn_seed("trait1"))]
        );
        assert_eq!(r.models.len(), 1);
        let m = &r.models[0];
        assert_eq!(m.status, ModelStatus::Ok);
        assert_eq!(m.curve.len(), 5);
        assert!(m.curve.records.iter().all(|e| e.val_loss.is_some()));
        // 2 modes x 3 splits
        assert_eq!(m.metrics.len(), 6);
        assert!(m.metrics.iter().all(|row| row.metrics.is_some()));
        assert!(out.imputed.is_complete());
        assert_eq!(out.checkpoints.len(), 1);
        let stages: Vec<&str> = out.timings.iter().map(|t| t.stage.as_str()).collect();
        assert_eq!(stages, ["validate", "mf", "split", "rnn"]);
    }

    #[test]
    fn complete_input_skips_factorization() {
        let (g, p) = dataset(2);
        let out = run_pipeline_data(&g.truth, &p, None, &tiny_config()).unwrap();
        assert!(out.report.mf.is_none());
        assert_eq!(out.imputed, g.truth);
    }

    #[test]
    fn two_traits_train_two_models() {
        let (g, p) = dataset(3);
        let out = run_pipeline_data(&g.holed, &p, None, &tiny_config()).unwrap();
        let r = &out.report;
        assert!(r.mf.as_ref().unwrap().accuracy.is_none());
        assert_eq!(r.models.len(), 2);
        assert_eq!(r.models[0].key, "trait1");
        assert_eq!(r.models[1].key, "trait2");
        assert_ne!(r.models[0].seed, r.models[1].seed);
        for m in &r.models {
            for split in SplitName::ALL {
                let rows = m.metrics.iter().filter(|row| row.split == split).count();
                assert_eq!(rows, 2, "{} {split:?}", m.key);
            }
        }
    }

    #[test]
    fn joint_mode_trains_one_two_output_model() {
        let (g, p) = dataset(4);
        let cfg = PipelineConfig {
            joint: true,
            eval_modes: vec![EvalMode::Imputed],
            ..tiny_config()
        };
        let out = run_pipeline_data(&g.holed, &p, None, &cfg).unwrap();
        let m = &out.report.models[0];
        assert_eq!(out.report.models.len(), 1);
        assert_eq!(m.key, "joint");
        assert_eq!(m.traits, vec![0, 1]);
        assert_eq!(m.metrics.len(), 6);
        assert_eq!(out.checkpoints[0].1.params.n_out, 2);
    }

    #[test]
    fn reruns_are_identical() {
        let (g, p) = dataset(5);
        let cfg = tiny_config();
        let a = run_pipeline_data(&g.holed, &p, Some(&g.truth), &cfg).unwrap();
        let b = run_pipeline_data(&g.holed, &p, Some(&g.truth), &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
    }

    #[test]
    fn training_never_sees_test_samples() {
        let (g, p) = dataset(6);
        let out = run_pipeline_data(&g.holed, &p, None, &tiny_config()).unwrap();
        let test: BTreeSet<usize> = out.report.split.test.iter().copied().collect();
        for m in &out.report.models {
            assert!(!m.train_samples.is_empty());
            assert!(m.train_samples.iter().all(|s| !test.contains(s)));
            assert!(m
                .train_samples
                .iter()
                .all(|s| !m.excluded_samples.contains(s)));
        }
    }

    #[test]
    fn diverging_trait_fails_alone() {
        let (g, p) = dataset(7);
        let mut values = Vec::new();
        let mut observed = Vec::new();
        for u in 0..p.samples() {
            values.push(p.get(u, 0).unwrap_or(0.0));
            observed.push(p.is_observed(u, 0));
            values.push(1e300);
            observed.push(true);
        }
        let p = PhenotypeTable::new(
            p.samples(),
            vec!["ok".into(), "huge".into()],
            values,
            observed,
        )
        .unwrap();
        let cfg = PipelineConfig {
            rnn: RnnSection {
                clip_norm: ClipNorm::Off,
                ..tiny_config().rnn
            },
            ..tiny_config()
        };
        let out = run_pipeline_data(&g.truth, &p, None, &cfg).unwrap();
        let r = &out.report;
        assert_eq!(r.models[0].status, ModelStatus::Ok);
        assert_eq!(r.models[1].status, ModelStatus::Failed);
        assert!(r.models[1].error.as_ref().unwrap().contains("diverged"));
        assert!(r.models[1].curve.len() < 5);
        assert!(r.models[1].metrics.is_empty());
        assert_eq!(out.checkpoints.len(), 1);
        assert_eq!(out.checkpoints[0].0, "trait1");
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let (g, p) = dataset(8);
        let short = PhenotypeTable::new(1, vec!["t".into()], vec![1.0], vec![true]).unwrap();
        let err = run_pipeline_data(&g.holed, &short, None, &tiny_config()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Stage {
                    stage: "validate",
                    ..
                }
            ),
            "{err}"
        );
        let bad = PipelineConfig {
            traits: vec![5],
            ..tiny_config()
        };
        let err = run_pipeline_data(&g.holed, &p, None, &bad).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Stage {
                    stage: "validate",
                    ..
                }
            ),
            "{err}"
        );
        let bad_mf = PipelineConfig {
            mf: MfConfig {
                alpha: 1e10,
                ..tiny_config().mf
            },
            ..tiny_config()
        };
        let err = run_pipeline_data(&g.holed, &p, None, &bad_mf).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "mf", .. }), "{err}");
        let err = run_pipeline(
            std::path::Path::new("/nonexistent/g.csv"),
            std::path::Path::new("/nonexistent/p.csv"),
            None,
            &tiny_config(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "parse", .. }), "{err}");
        assert_eq!(err.kind(), crate::error::ErrorKind::Io);
    }

    #[test]
    fn score_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let perfect = score_predictions(&a, &a, 0.1, 3.0).unwrap();
        assert!((perfect.correlation.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            (perfect.mse, perfect.success_pct, perfect.n),
            (0.0, 100.0, 4)
        );

        let mean = [2.5; 4];
        let m = score_predictions(&mean, &a, 0.2, 3.0).unwrap();
        assert_eq!(m.correlation, None);
        // band 0.6: only |2.5 - 2| and |2.5 - 3| fit
        assert_eq!(m.success_pct, 50.0);
        assert_eq!(m.mse, (2.25 + 0.25 + 0.25 + 2.25) / 4.0);

        let near = [1.0, 2.0 + 1e-12, 3.0, 4.5];
        assert_eq!(
            score_predictions(&near, &a, 0.0, 3.0).unwrap().success_pct,
            50.0
        );

        let constant_actual = score_predictions(&a, &[1.0; 4], 0.1, 1.0).unwrap();
        assert_eq!(constant_actual.correlation, None);

        assert!(matches!(
            score_predictions(&[], &[], 0.1, 1.0),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            score_predictions(&a, &a[..2], 0.1, 1.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn evaluate_split_checks_inputs() {
        let batch = SyntheticTask::LagMemory { lag: 3 }.generate(6, 1).unwrap();
        let params = rnn_init(CellKind::SimpleTanh, 1, 3, 1, 0).unwrap();
        let ranges = target_ranges(&batch);
        let rows = evaluate_split(&params, &batch, 0.1, &ranges).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n, 6);
        let empty = batch.subset(&[]);
        assert!(matches!(
            evaluate_split(&params, &empty, 0.1, &ranges),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            evaluate_split(&params, &batch, 0.1, &[]),
            Err(Error::Shape(_))
        ));
    }

    fn compare_section(epochs: usize) -> RnnSection {
        RnnSection {
            hidden: 16,
            learning_rate: 0.001,
            epochs,
            batch_mode: BatchMode::PerSample,
            ..RnnSection::default()
        }
    }

    #[test]
    fn relu_beats_tanh_on_lag_task() {
        let batch = SyntheticTask::LagMemory { lag: 50 }
            .generate(64, 11)
            .unwrap();
        let cells = [CellKind::SimpleTanh, CellKind::ReluIdentity];
        let cmp = compare_cells(&batch, None, &cells, &compare_section(100), 11).unwrap();
        let loss = |i: usize| cmp.curves[i].final_train_loss().unwrap();
        assert!(loss(1) < loss(0), "relu {} vs tanh {}", loss(1), loss(0));
        assert_eq!(
            cmp.ordering,
            vec![CellKind::ReluIdentity, CellKind::SimpleTanh]
        );
    }

    #[test]
    fn three_cells_give_aligned_curves() {
        let batch = SyntheticTask::Adding { length: 10 }
            .generate(16, 2)
            .unwrap();
        let cells = [CellKind::SimpleTanh, CellKind::Lstm, CellKind::ReluIdentity];
        let cmp = compare_cells(&batch, Some(&batch), &cells, &compare_section(100), 2).unwrap();
        assert_eq!(cmp.curves.len(), 3);
        for c in &cmp.curves {
            assert_eq!(c.curve.len(), 100);
            assert!(c.diverged.is_none());
            let epochs: Vec<usize> = c.curve.records.iter().map(|r| r.epoch).collect();
            assert_eq!(epochs, (0..100).collect::<Vec<_>>());
        }
        let again = compare_cells(&batch, Some(&batch), &cells, &compare_section(100), 2).unwrap();
        assert_eq!(cmp, again);
    }

    #[test]
    fn diverging_cell_is_truncated() {
        let mut batch = SyntheticTask::LagMemory { lag: 5 }.generate(8, 3).unwrap();
        for t in &mut batch.targets {
            t[0] += 3.0;
        }
        let section = RnnSection {
            learning_rate: 1e200,
            clip_norm: ClipNorm::Off,
            batch_mode: BatchMode::FullBatch,
            ..compare_section(10)
        };
        let cells = [CellKind::SimpleTanh, CellKind::Lstm];
        let cmp = compare_cells(&batch, None, &cells, &section, 3).unwrap();
        assert!(cmp.curves.iter().any(|c| c.diverged.is_some()));
        for c in &cmp.curves {
            match &c.diverged {
                Some(d) => assert_eq!(c.curve.len(), d.epoch),
                None => assert_eq!(c.curve.len(), 10),
            }
        }
        let diverged: Vec<bool> = cmp
            .ordering
            .iter()
            .map(|cell| {
                cmp.curves
                    .iter()
                    .any(|c| c.cell == *cell && c.diverged.is_some())
            })
            .collect();
        assert!(
            diverged.windows(2).all(|w| w[0] <= w[1]),
            "{:?}",
            cmp.ordering
        );
    }

    #[test]
    fn compare_rejects_bad_cell_lists() {
        let batch = SyntheticTask::LagMemory { lag: 3 }.generate(4, 0).unwrap();
        let s = compare_section(1);
        let one = compare_cells(&batch, None, &[CellKind::Lstm], &s, 0);
        assert!(matches!(one, Err(Error::Config(_))));
        let dup = compare_cells(&batch, None, &[CellKind::Lstm, CellKind::Lstm], &s, 0);
        assert!(matches!(dup, Err(Error::Config(_))));
    }

    #[test]
    fn compare_on_genotypes_uses_imputed_data() {
        let (g, p) = dataset(9);
        let cfg = PipelineConfig {
            rnn: compare_section(3),
            ..tiny_config()
        };
        let cells = [CellKind::SimpleTanh, CellKind::ReluIdentity];
        let cmp = compare_cells_genotypes(&g.holed, &p, &cfg, &cells).unwrap();
        assert_eq!(cmp.seed, cfg.rnn_seed("trait1"));
        assert!(cmp.curves.iter().all(|c| c.curve.len() == 3));
    }

    fn formats(f: &[ExportFormat]) -> BTreeSet<ExportFormat> {
        f.iter().copied().collect()
    }

    #[test]
    fn export_formats_and_hashes() {
        let (g, p) = dataset(10);
        let out = run_pipeline_data(&g.holed, &p, Some(&g.truth), &tiny_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();

        let json_dir = dir.path().join("json");
        let m = export_report(&out.report, &json_dir, &formats(&[ExportFormat::Json])).unwrap();
        assert_eq!(m.files.len(), 1);
        assert_eq!(m.files[0].file, "report.json");
        let mut on_disk: Vec<String> = std::fs::read_dir(&json_dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        on_disk.sort();
        assert_eq!(on_disk, ["manifest.json", "report.json"]);
        let back: RunReport =
            serde_json::from_str(&std::fs::read_to_string(json_dir.join("report.json")).unwrap())
                .unwrap();
        assert_eq!(
            serde_json::to_string(&back).unwrap(),
            serde_json::to_string(&out.report).unwrap()
        );

        let all = formats(&[ExportFormat::Json, ExportFormat::Csv]);
        let a = export_report(&out.report, &dir.path().join("a"), &all).unwrap();
        let b = export_report(&out.report, &dir.path().join("b"), &all).unwrap();
        assert_eq!(a, b);
        let names: Vec<&str> = a.files.iter().map(|e| e.file.as_str()).collect();
        assert_eq!(
            names,
            [
                "curve_trait1.csv",
                "curve_trait2.csv",
                "metrics.csv",
                "mf_cost.csv",
                "report.json"
            ]
        );
        let metrics = std::fs::read_to_string(dir.path().join("a/metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 1 + 2 * 6);
        assert!(metrics.starts_with("model,trait,mode,split,n,correlation,mse,success_pct\n"));
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("a").join(MANIFEST_FILE)).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest, a);

        let none = export_report(&out.report, dir.path(), &BTreeSet::new());
        assert!(matches!(none, Err(Error::Config(_))));
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let parsed: PipelineConfig =
            serde_json::from_str(r#"{"seed": 4, "rnn": {"cell": "lstm"}}"#).unwrap();
        assert_eq!(parsed.seed, 4);
        assert_eq!(parsed.rnn.cell, CellKind::Lstm);
        assert_eq!(parsed.rnn.hidden, RnnSection::default().hidden);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 4}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"rnn": {"hiden": 4}}"#).is_err());
        for bad in [
            PipelineConfig {
                chunk_width: 0,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                success_tolerance: -0.1,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                eval_modes: vec![],
                ..PipelineConfig::default()
            },
            PipelineConfig {
                rnn: RnnSection {
                    hidden: 0,
                    ..RnnSection::default()
                },
                ..PipelineConfig::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn stage_seeds_are_keyed_by_name() {
        let a = PipelineConfig {
            seed: 1,
            ..PipelineConfig::default()
        };
        let mut b = a.clone();
        b.rnn.epochs = 999;
        b.mf.features = 2;
        assert_eq!(a.mf_seed(), b.mf_seed());
        assert_eq!(a.rnn_seed("trait1"), b.rnn_seed("trait1"));
        assert_ne!(a.mf_seed(), a.split_seed());
        assert_ne!(a.rnn_seed("trait1"), a.rnn_seed("trait2"));
        assert_eq!(a.resolve_traits(3).unwrap(), vec![0, 1, 2]);
        let dup = PipelineConfig {
            traits: vec![1, 1],
            ..a
        };
        assert!(dup.resolve_traits(3).is_err());
    }
}

//! End-to-end pipeline checks on a small synthetic corpus: ingest,
//! feature extraction, forest training, scoring and aggregation, plus
//! the determinism and cache-reuse contracts the library promises.

use ncdforest::compressor::{CompressorConfig, SizeCache};
use ncdforest::corpus::{ingest_manifest, Label};
use ncdforest::eval::{aggregate, run_experiment, write_aggregate_csv, ExperimentConfig};
use ncdforest::features::FeatureMask;
use ncdforest::forest::ForestParams;
use ncdforest::synth::{write_corpus, FamilyKind, FamilySpec, SynthSpec};

fn small_spec() -> SynthSpec {
    SynthSpec {
        seed: 77,
        families: vec![
            FamilySpec {
                label: Label::Positive,
                kind: FamilyKind::TemplateMutants {
                    templates: 3,
                    mutation_min: 0.05,
                    mutation_max: 0.15,
                    compressible_fraction: 0.5,
                },
                count: 30,
                size: 2048,
            },
            FamilySpec {
                label: Label::Negative,
                kind: FamilyKind::IndependentMixes {
                    compressible_min: 0.3,
                    compressible_max: 0.7,
                },
                count: 30,
                size: 2048,
            },
        ],
    }
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        n_references: 8,
        n_train: 24,
        n_test: 24,
        runs: 2,
        base_seed: 4242,
        mask: FeatureMask::Combined,
        forest: ForestParams {
            n_trees: 50,
            ..ForestParams::default()
        },
        compressor: CompressorConfig::default(),
        train_positive_fraction: None,
        thresholds_from_test: false,
    }
}

#[test]
fn experiment_learns_separates_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &small_spec()).unwrap();
    let (corpus, skipped) = ingest_manifest(&manifest).unwrap();
    assert!(skipped.is_empty());
    assert_eq!(corpus.len(), 60);

    let cache_path = dir.path().join("sizes.cache");
    let cache = SizeCache::open(&cache_path).unwrap();
    let config = small_config();

    let outputs = run_experiment(&corpus, &config, &cache).unwrap();
    assert_eq!(outputs.len(), 2);
    for out in &outputs {
        // Splits must be disjoint and test scoring meaningful.
        let r = &out.result;
        for id in &r.split.test {
            assert!(!r.split.train.contains(id));
            assert!(!r.split.reference.contains(id));
        }
        assert!(
            r.best.accuracy >= 0.9,
            "run {} best accuracy {}",
            r.run_index,
            r.best.accuracy
        );
        assert_eq!(out.forest.trees.len(), 50);
        assert_eq!(out.forest.reference_fingerprint, r.reference_fingerprint);
    }
    // Distinct runs use distinct derived seeds and splits.
    assert_ne!(outputs[0].result.seeds.run, outputs[1].result.seeds.run);
    assert_ne!(outputs[0].result.split.test, outputs[1].result.split.test);

    let results: Vec<_> = outputs.iter().map(|o| o.result.clone()).collect();
    let agg = aggregate(&results).unwrap();
    assert!(agg.best_accuracy.mean >= 0.9);
    assert!(agg.best_accuracy.min <= agg.best_accuracy.mean);
    assert!(agg.best_accuracy.mean <= agg.best_accuracy.max);

    let csv_path = dir.path().join("aggregate.csv");
    write_aggregate_csv(&agg, &csv_path).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), 102, "header plus 101 grid rows");
    assert!(text.starts_with("fp_grid,tp_mean,tp_min,tp_max\n"));

    // Re-running with a warm cache is byte-identical and compression-free.
    let misses_after_first = cache.misses();
    assert!(misses_after_first > 0);
    let outputs2 = run_experiment(&corpus, &config, &cache).unwrap();
    assert_eq!(cache.misses(), misses_after_first, "no new compression work");
    for (a, b) in outputs.iter().zip(&outputs2) {
        assert_eq!(
            serde_json::to_string(&a.result).unwrap(),
            serde_json::to_string(&b.result).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&a.forest).unwrap(),
            serde_json::to_string(&b.forest).unwrap()
        );
    }

    // A cold cache in a fresh process location reproduces the same bytes.
    let cache2 = SizeCache::in_memory();
    let outputs3 = run_experiment(&corpus, &config, &cache2).unwrap();
    assert_eq!(
        serde_json::to_string(&outputs[0].result).unwrap(),
        serde_json::to_string(&outputs3[0].result).unwrap()
    );
}

#[test]
fn experiment_rejects_undersized_population() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &small_spec()).unwrap();
    let (corpus, _) = ingest_manifest(&manifest).unwrap();
    let cache = SizeCache::in_memory();
    let config = ExperimentConfig {
        n_train: 200,
        ..small_config()
    };
    let err = run_experiment(&corpus, &config, &cache).unwrap_err();
    assert!(
        matches!(err, ncdforest::Error::InsufficientPopulation { .. }),
        "got {err}"
    );
}

#[test]
fn biased_training_split_still_scores() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &small_spec()).unwrap();
    let (corpus, _) = ingest_manifest(&manifest).unwrap();
    let cache = SizeCache::in_memory();
    let config = ExperimentConfig {
        runs: 1,
        n_train: 20,
        n_test: 20,
        train_positive_fraction: Some(0.75),
        ..small_config()
    };
    let outputs = run_experiment(&corpus, &config, &cache).unwrap();
    let r = &outputs[0].result;
    let pos = r
        .split
        .train
        .iter()
        .filter(|id| corpus.require(id).unwrap().label == Label::Positive)
        .count();
    assert_eq!(pos, 15, "75% of 20 training rows are positive");
    assert!(r.best.accuracy > 0.5);
}

//! Subcommand implementations. Every command prints a machine-readable
//! JSON summary on stdout; files land where the flags point; progress
//! and cache statistics go to stderr.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use ncdforest::cluster::{kmedoids, label_clusters, write_assignment_csv};
use ncdforest::compressor::{compress_corpus, write_compression_csv, CompressorConfig, SizeCache};
use ncdforest::corpus::{
    ingest_directory, ingest_manifest, read_sample_bytes, sha256_hex, write_dedupe_report,
    write_manifest, CorpusSet, Label, SkipReport,
};
use ncdforest::distance::{
    load_matrix, pairwise_matrix, save_matrix, savings_curve, self_distance_curve,
    write_matrix_csv, write_self_distance_csv,
};
use ncdforest::eval::{
    aggregate, compare_scan_report, load_scan_report, mann_whitney_u, run_experiment,
    write_aggregate_csv,
};
use ncdforest::forest::{feature_importance, load_model, save_model};
use ncdforest::synth::{write_corpus, FamilyKind, FamilySpec, SynthSpec};

use crate::config::{CompressorSection, FileConfig};
use crate::{
    CliError, ClusterArgs, CompareScansArgs, CompressArgs, CompressorArgs, CorpusArgs, DedupeArgs,
    ExperimentArgs, ImportanceArgs, IngestArgs, MatrixArgs, MwuArgs, NormalityArgs, SavingsArgs,
    SelfcurveArgs, SynthArgs,
};

type CmdResult = Result<(), CliError>;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn require_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn load_corpus(args: &CorpusArgs) -> Result<(CorpusSet, Vec<SkipReport>), CliError> {
    let mut parts: Vec<(CorpusSet, Vec<SkipReport>)> = Vec::new();
    if let Some(manifest) = &args.manifest {
        require_exists(manifest, "manifest")?;
        parts.push(ingest_manifest(manifest)?);
    }
    if let Some(dir) = &args.dir_malware {
        require_exists(dir, "directory")?;
        parts.push(ingest_directory(dir, Label::Positive)?);
    }
    if let Some(dir) = &args.dir_benign {
        require_exists(dir, "directory")?;
        parts.push(ingest_directory(dir, Label::Negative)?);
    }
    if parts.is_empty() {
        return Err(CliError::usage(
            "no corpus source: pass --manifest, --dir-malware or --dir-benign",
        ));
    }
    let mut skipped = Vec::new();
    let mut corpus: Option<CorpusSet> = None;
    for (set, skips) in parts {
        skipped.extend(skips);
        corpus = Some(match corpus {
            None => set,
            Some(existing) => existing.union(&set)?,
        });
    }
    let corpus = corpus.expect("at least one source");
    if !skipped.is_empty() {
        eprintln!("ingest: skipped {} unreadable or empty files", skipped.len());
    }
    Ok((corpus, skipped))
}

fn compressor_from_args(args: &CompressorArgs) -> Result<CompressorConfig, CliError> {
    let section = CompressorSection {
        backend: args.backend.clone(),
        level: args.level,
        dictionary_bytes: args.dict_bytes,
    };
    FileConfig {
        compressor: section,
        ..FileConfig::default()
    }
    .compressor_config()
}

fn open_cache(path: Option<&Path>) -> Result<SizeCache, CliError> {
    match path {
        Some(p) => Ok(SizeCache::open(p)?),
        None => Ok(SizeCache::in_memory()),
    }
}

fn report_cache(cache: &SizeCache) {
    eprintln!(
        "cache: hits={} misses={} entries={}",
        cache.hits(),
        cache.misses(),
        cache.len()
    );
}

fn print_summary(value: &serde_json::Value) -> CmdResult {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value).map_err(CliError::runtime)?;
    stdout.write_all(b"\n").map_err(CliError::runtime)?;
    Ok(())
}

fn write_json_pretty<T: serde::Serialize>(value: &T, out: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    std::fs::write(out, text + "\n")
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", out.display())))
}

fn parse_float_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    let mut values = Vec::new();
    for token in text.split([',', ' ', '\t', '\n']).filter(|t| !t.is_empty()) {
        values.push(token.parse::<f64>().map_err(|_| {
            CliError::usage(format!("{what}: {token:?} is not a number"))
        })?);
    }
    if values.is_empty() {
        return Err(CliError::usage(format!("{what}: no values given")));
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// Corpus commands
// ---------------------------------------------------------------------------

pub fn ingest(args: IngestArgs) -> CmdResult {
    let (corpus, skipped) = load_corpus(&args.corpus)?;
    if let Some(out) = &args.out {
        write_manifest(&corpus, out)?;
    }
    print_summary(&serde_json::json!({
        "samples": corpus.len(),
        "positive": corpus.count(Label::Positive),
        "negative": corpus.count(Label::Negative),
        "skipped": skipped.iter().map(|s| serde_json::json!({
            "path": s.path.display().to_string(),
            "reason": s.reason,
        })).collect::<Vec<_>>(),
        "manifest": args.out.as_ref().map(|p| p.display().to_string()),
    }))
}

pub fn dedupe(args: DedupeArgs) -> CmdResult {
    let (corpus, _) = load_corpus(&args.corpus)?;
    let (deduped, records) = corpus.dedupe()?;
    if let Some(out) = &args.out_manifest {
        write_manifest(&deduped, out)?;
    }
    if let Some(report) = &args.report {
        write_dedupe_report(&records, report)?;
    }
    print_summary(&serde_json::json!({
        "kept": deduped.len(),
        "removed": records.len(),
        "manifest": args.out_manifest.as_ref().map(|p| p.display().to_string()),
        "report": args.report.as_ref().map(|p| p.display().to_string()),
    }))
}

pub fn compress(args: CompressArgs) -> CmdResult {
    let (corpus, _) = load_corpus(&args.corpus)?;
    let cfg = compressor_from_args(&args.compressor)?;
    let cache = open_cache(args.cache.as_deref())?;
    let records = compress_corpus(&corpus, &cfg, &cache)?;
    if let Some(out) = &args.out {
        write_compression_csv(&records, out)?;
    }
    report_cache(&cache);
    let mean_ratio = records.iter().map(|r| r.ratio).sum::<f64>() / records.len() as f64;
    print_summary(&serde_json::json!({
        "files": records.len(),
        "compressor": cfg.fingerprint(),
        "mean_ratio": mean_ratio,
        "csv": args.out.as_ref().map(|p| p.display().to_string()),
    }))
}

pub fn normality(args: NormalityArgs) -> CmdResult {
    if args.limit == 0 {
        return Err(CliError::usage("--limit must be positive"));
    }
    let (corpus, _) = load_corpus(&args.corpus)?;
    let cfg = compressor_from_args(&args.compressor)?;
    let suite: Vec<(String, Vec<u8>)> = corpus
        .samples()
        .iter()
        .take(args.limit)
        .map(|s| Ok((s.id.clone(), read_sample_bytes(s)?)))
        .collect::<Result<_, ncdforest::Error>>()?;
    eprintln!(
        "normality: {} samples, {} compressions",
        suite.len(),
        suite.len() + suite.len() * suite.len()
    );
    let report = ncdforest::compressor::normality_report(&suite, &cfg)?;
    if let Some(out) = &args.out {
        write_json_pretty(&report, out)?;
    }
    print_summary(&serde_json::to_value(&report).map_err(CliError::runtime)?)
}

// ---------------------------------------------------------------------------
// Distance commands
// ---------------------------------------------------------------------------

pub fn selfcurve(args: SelfcurveArgs) -> CmdResult {
    let cfg = compressor_from_args(&args.compressor)?;
    let sizes: Vec<u64> = parse_float_list(&args.sizes, "--sizes")?
        .into_iter()
        .map(|v| v as u64)
        .collect();
    let points = self_distance_curve(&sizes, &cfg, args.seed)?;
    write_self_distance_csv(&points, &args.out)?;
    print_summary(&serde_json::json!({
        "points": points.len(),
        "csv": args.out.display().to_string(),
    }))
}

pub fn matrix(args: MatrixArgs) -> CmdResult {
    let (corpus, _) = load_corpus(&args.corpus)?;
    let cfg = compressor_from_args(&args.compressor)?;
    let cache = open_cache(args.cache.as_deref())?;
    eprintln!(
        "matrix: {} samples, up to {} pair compressions",
        corpus.len(),
        corpus.len() * (corpus.len() + 1) / 2
    );
    let matrix = pairwise_matrix(&corpus, &cfg, &cache, args.prune)?;
    save_matrix(&matrix, &args.out)?;
    if let Some(csv) = &args.csv {
        write_matrix_csv(&matrix, csv)?;
    }
    report_cache(&cache);
    print_summary(&serde_json::json!({
        "n": matrix.n(),
        "entries": matrix.entry_count(),
        "pruned": matrix.pruned_count(),
        "out": args.out.display().to_string(),
    }))
}

pub fn savings(args: SavingsArgs) -> CmdResult {
    let (corpus, _) = load_corpus(&args.corpus)?;
    let cfg = compressor_from_args(&args.compressor)?;
    let cache = open_cache(args.cache.as_deref())?;
    let thresholds = parse_float_list(&args.thresholds, "--thresholds")?;
    let curve = savings_curve(&corpus, &cfg, &cache, &thresholds)?;
    let mut text = String::from("threshold,pruned_fraction\n");
    for point in &curve {
        text.push_str(&format!("{},{}\n", point.threshold, point.pruned_fraction));
    }
    std::fs::write(&args.out, text)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", args.out.display())))?;
    report_cache(&cache);
    print_summary(&serde_json::to_value(&curve).map_err(CliError::runtime)?)
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

/// Layer the config file under the flags, returning the effective config.
fn layered_config(args: &ExperimentArgs) -> Result<FileConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let c = &mut cfg.corpus;
    if args.corpus.manifest.is_some() {
        c.manifest = args.corpus.manifest.clone();
    }
    if args.corpus.dir_malware.is_some() {
        c.dir_malware = args.corpus.dir_malware.clone();
    }
    if args.corpus.dir_benign.is_some() {
        c.dir_benign = args.corpus.dir_benign.clone();
    }
    if args.dedupe {
        c.dedupe = Some(true);
    }
    let z = &mut cfg.compressor;
    if args.compressor.backend.is_some() {
        z.backend = args.compressor.backend.clone();
    }
    if args.compressor.level.is_some() {
        z.level = args.compressor.level;
    }
    if args.compressor.dict_bytes.is_some() {
        z.dictionary_bytes = args.compressor.dict_bytes;
    }
    let e = &mut cfg.experiment;
    if args.n_references.is_some() {
        e.n_references = args.n_references;
    }
    if args.n_train.is_some() {
        e.n_train = args.n_train;
    }
    if args.n_test.is_some() {
        e.n_test = args.n_test;
    }
    if args.runs.is_some() {
        e.runs = args.runs;
    }
    if args.seed.is_some() {
        e.base_seed = args.seed;
    }
    if args.mask.is_some() {
        e.mask = args.mask.clone();
    }
    if args.train_positive_fraction.is_some() {
        e.train_positive_fraction = args.train_positive_fraction;
    }
    if args.thresholds_from_test {
        e.thresholds_from_test = Some(true);
    }
    let f = &mut cfg.forest;
    if args.trees.is_some() {
        f.trees = args.trees;
    }
    if args.candidates.is_some() {
        f.candidates_per_branch = args.candidates;
    }
    if args.min_gain.is_some() {
        f.min_gain_bits = args.min_gain;
    }
    if args.max_depth.is_some() {
        f.max_depth = args.max_depth;
    }
    let o = &mut cfg.output;
    if args.out_dir.is_some() {
        o.dir = args.out_dir.clone();
    }
    if args.cache.is_some() {
        o.cache = args.cache.clone();
    }
    Ok(cfg.resolved())
}

pub fn experiment(args: ExperimentArgs) -> CmdResult {
    let cfg = layered_config(&args)?;
    let corpus_args = CorpusArgs {
        manifest: cfg.corpus.manifest.clone(),
        dir_malware: cfg.corpus.dir_malware.clone(),
        dir_benign: cfg.corpus.dir_benign.clone(),
    };
    let (mut corpus, _) = load_corpus(&corpus_args)?;
    if cfg.corpus.dedupe == Some(true) {
        let (deduped, records) = corpus.dedupe()?;
        if !records.is_empty() {
            eprintln!("experiment: dropped {} duplicate files", records.len());
        }
        corpus = deduped;
    }
    let experiment_cfg = cfg.experiment_config()?;
    experiment_cfg.validate()?;

    let out_dir = cfg.output.dir.clone().expect("resolved");
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let cache_path = cfg
        .output
        .cache
        .clone()
        .unwrap_or_else(|| out_dir.join("sizes.cache"));
    let cache = SizeCache::open(&cache_path)?;

    // Persist the effective config first: a crashed run still documents
    // exactly what was asked, and re-running from this file reproduces it.
    let config_text = toml::to_string_pretty(&cfg).map_err(CliError::runtime)?;
    let config_path = out_dir.join("config.toml");
    std::fs::write(&config_path, &config_text)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", config_path.display())))?;

    eprintln!(
        "experiment: {} samples, {} runs, {} trees, mask {}",
        corpus.len(),
        experiment_cfg.runs,
        experiment_cfg.forest.n_trees,
        experiment_cfg.mask.as_str()
    );
    let outputs = run_experiment(&corpus, &experiment_cfg, &cache)?;

    let mut artifact_names = vec!["config.toml".to_string()];
    for out in &outputs {
        let r = &out.result;
        eprintln!(
            "experiment: run {} best accuracy {:.4} (fp {:.4}, tp {:.4})",
            r.run_index, r.best.accuracy, r.best.fp_rate, r.best.tp_rate
        );
        let run_name = format!("run_{:02}.json", r.run_index);
        write_json_pretty(r, &out_dir.join(&run_name))?;
        let model_name = format!("model_run_{:02}.json", r.run_index);
        save_model(&out.forest, &out_dir.join(&model_name))?;
        artifact_names.push(run_name);
        artifact_names.push(model_name);
    }

    let results: Vec<_> = outputs.into_iter().map(|o| o.result).collect();
    let agg = aggregate(&results)?;
    write_aggregate_csv(&agg, &out_dir.join("aggregate.csv"))?;
    artifact_names.push("aggregate.csv".to_string());

    artifact_names.sort();
    let mut artifacts = Vec::with_capacity(artifact_names.len());
    for name in &artifact_names {
        let bytes = std::fs::read(out_dir.join(name))
            .map_err(|e| CliError::runtime(format!("cannot hash {name}: {e}")))?;
        artifacts.push(serde_json::json!({
            "path": name,
            "sha256": sha256_hex(&bytes),
        }));
    }
    write_json_pretty(
        &serde_json::json!({ "artifacts": artifacts }),
        &out_dir.join("manifest.json"),
    )?;

    report_cache(&cache);
    print_summary(&serde_json::json!({
        "runs": agg.runs,
        "best_accuracy": agg.best_accuracy,
        "best_fp_rate": agg.best_fp_rate,
        "best_tp_rate": agg.best_tp_rate,
        "results_dir": out_dir.display().to_string(),
    }))
}

// ---------------------------------------------------------------------------
// Clustering and models
// ---------------------------------------------------------------------------

pub fn cluster(args: ClusterArgs) -> CmdResult {
    require_exists(&args.matrix, "matrix file")?;
    let matrix = load_matrix(&args.matrix)?;
    let assignment = kmedoids(&matrix, args.k, args.seed, args.max_iters)?;
    if let Some(out) = &args.out {
        write_assignment_csv(&assignment, &matrix, out)?;
    }
    let labeling = match &args.manifest {
        None => None,
        Some(manifest) => {
            require_exists(manifest, "manifest")?;
            let (corpus, _) = ingest_manifest(manifest)?;
            let labels: Vec<Label> = matrix
                .ids()
                .iter()
                .map(|id| Ok(corpus.require(id)?.label))
                .collect::<Result<_, ncdforest::Error>>()?;
            Some(label_clusters(&assignment, &labels)?)
        }
    };
    print_summary(&serde_json::json!({
        "k": assignment.k,
        "iterations": assignment.iterations,
        "total_cost": assignment.total_cost,
        "cost_trace": assignment.cost_trace,
        "labeling": labeling,
        "assignments": args.out.as_ref().map(|p| p.display().to_string()),
    }))
}

pub fn importance(args: ImportanceArgs) -> CmdResult {
    require_exists(&args.model, "model file")?;
    let forest = load_model(&args.model)?;
    let scores = feature_importance(&forest);
    if let Some(out) = &args.out {
        let mut text = String::from("feature,importance\n");
        for (i, score) in scores.iter().enumerate() {
            text.push_str(&format!("f{i},{score}\n"));
        }
        std::fs::write(out, text)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", out.display())))?;
    }
    let ranked: Vec<serde_json::Value> = scores
        .iter()
        .enumerate()
        .map(|(i, score)| serde_json::json!({ "feature": format!("f{i}"), "importance": score }))
        .collect();
    print_summary(&serde_json::json!({
        "feature_dim": forest.feature_dim,
        "trees": forest.trees.len(),
        "importance": ranked,
    }))
}

pub fn compare_scans(args: CompareScansArgs) -> CmdResult {
    require_exists(&args.report, "scan report")?;
    require_exists(&args.manifest, "manifest")?;
    let records = load_scan_report(&args.report)?;
    let (corpus, _) = ingest_manifest(&args.manifest)?;
    let mut labels: HashMap<String, Label> = HashMap::new();
    for sample in corpus.samples() {
        if let Some(prev) = labels.insert(sample.sha256.clone(), sample.label) {
            if prev != sample.label {
                return Err(CliError::runtime(format!(
                    "digest {} carries both labels in the corpus",
                    sample.sha256
                )));
            }
        }
    }
    let comparison = compare_scan_report(&records, &labels)?;
    if let Some(out) = &args.out {
        write_json_pretty(&comparison, out)?;
    }
    print_summary(&serde_json::to_value(&comparison).map_err(CliError::runtime)?)
}

pub fn mwu(args: MwuArgs) -> CmdResult {
    let read_side = |inline: &Option<String>,
                     file: &Option<PathBuf>,
                     name: &str|
     -> Result<Vec<f64>, CliError> {
        match (inline, file) {
            (Some(text), None) => parse_float_list(text, name),
            (None, Some(path)) => {
                require_exists(path, name)?;
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
                parse_float_list(&text, name)
            }
            _ => Err(CliError::usage(format!(
                "pass exactly one of {name} or {name}-file"
            ))),
        }
    };
    let a = read_side(&args.a, &args.a_file, "--a")?;
    let b = read_side(&args.b, &args.b_file, "--b")?;
    let result = mann_whitney_u(&a, &b)?;
    print_summary(&serde_json::to_value(result).map_err(CliError::runtime)?)
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

fn preset_spec(name: &str, count: usize, size: usize, seed: u64) -> Result<SynthSpec, CliError> {
    let families = match name {
        "two-family" => vec![
            FamilySpec {
                label: Label::Positive,
                kind: FamilyKind::TemplateMutants {
                    templates: 5,
                    mutation_min: 0.05,
                    mutation_max: 0.15,
                    compressible_fraction: 0.5,
                },
                count,
                size,
            },
            FamilySpec {
                label: Label::Negative,
                kind: FamilyKind::IndependentMixes {
                    compressible_min: 0.85,
                    compressible_max: 0.95,
                },
                count,
                size,
            },
        ],
        // Packed files are mostly-random mixes (like a compressed payload
        // behind a small stub); text is ~5x more compressible, so sizing
        // it at 5x the raw bytes lands both families on overlapping
        // compressed sizes. Distances to packed references then carry no
        // class signal and the compressibility ratio dominates.
        "ratio-split" => vec![
            FamilySpec {
                label: Label::Positive,
                kind: FamilyKind::IndependentMixes {
                    compressible_min: 0.05,
                    compressible_max: 0.15,
                },
                count,
                size,
            },
            FamilySpec {
                label: Label::Negative,
                kind: FamilyKind::PlainText,
                count,
                size: size * 5,
            },
        ],
        other => {
            return Err(CliError::usage(format!(
                "unknown preset {other:?} (expected two-family or ratio-split)"
            )))
        }
    };
    Ok(SynthSpec { seed, families })
}

pub fn synth(args: SynthArgs) -> CmdResult {
    let spec = match (&args.spec, &args.preset) {
        (Some(path), None) => {
            require_exists(path, "spec file")?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::usage(format!("invalid spec {}: {e}", path.display())))?
        }
        (None, Some(preset)) => preset_spec(preset, args.count, args.size, args.seed)?,
        (None, None) => {
            return Err(CliError::usage("pass --spec or --preset"));
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", args.out.display())))?;
    let manifest = write_corpus(&args.out, &spec)?;
    let total: usize = spec.families.iter().map(|f| f.count).sum();
    print_summary(&serde_json::json!({
        "files": total,
        "manifest": manifest.display().to_string(),
    }))
}

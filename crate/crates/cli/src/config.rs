//! Experiment configuration: a TOML file provides defaults, command-line
//! flags override individual values, and the fully resolved form is
//! written back into the results directory so a run can be repeated
//! exactly from its own artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ncdforest::compressor::{Backend, CompressorConfig};
use ncdforest::eval::ExperimentConfig;
use ncdforest::features::FeatureMask;
use ncdforest::forest::ForestParams;

use crate::CliError;

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: CorpusSection,
    pub compressor: CompressorSection,
    pub experiment: ExperimentSection,
    pub forest: ForestSection,
    pub output: OutputSection,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub manifest: Option<PathBuf>,
    pub dir_malware: Option<PathBuf>,
    pub dir_benign: Option<PathBuf>,
    pub dedupe: Option<bool>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressorSection {
    pub backend: Option<String>,
    pub level: Option<u32>,
    pub dictionary_bytes: Option<u64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_references: Option<usize>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub runs: Option<usize>,
    pub base_seed: Option<u64>,
    pub mask: Option<String>,
    pub train_positive_fraction: Option<f64>,
    pub thresholds_from_test: Option<bool>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub trees: Option<usize>,
    pub candidates_per_branch: Option<usize>,
    pub min_gain_bits: Option<f64>,
    pub max_depth: Option<usize>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub cache: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        if !path.exists() {
            return Err(CliError::usage(format!(
                "config file {} does not exist",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Fill every unset field with its default so the persisted form is
    /// complete and self-describing.
    pub fn resolved(&self) -> FileConfig {
        let comp = CompressorConfig::default();
        let forest = ForestParams::default();
        FileConfig {
            corpus: CorpusSection {
                manifest: self.corpus.manifest.clone(),
                dir_malware: self.corpus.dir_malware.clone(),
                dir_benign: self.corpus.dir_benign.clone(),
                dedupe: Some(self.corpus.dedupe.unwrap_or(false)),
            },
            compressor: CompressorSection {
                backend: Some(
                    self.compressor
                        .backend
                        .clone()
                        .unwrap_or_else(|| comp.backend.as_str().to_string()),
                ),
                level: Some(self.compressor.level.unwrap_or(comp.level)),
                dictionary_bytes: Some(
                    self.compressor
                        .dictionary_bytes
                        .unwrap_or(comp.dictionary_bytes),
                ),
            },
            experiment: ExperimentSection {
                n_references: Some(self.experiment.n_references.unwrap_or(40)),
                n_train: Some(self.experiment.n_train.unwrap_or(200)),
                n_test: Some(self.experiment.n_test.unwrap_or(200)),
                runs: Some(self.experiment.runs.unwrap_or(5)),
                base_seed: Some(self.experiment.base_seed.unwrap_or(1)),
                mask: Some(
                    self.experiment
                        .mask
                        .clone()
                        .unwrap_or_else(|| FeatureMask::Combined.as_str().to_string()),
                ),
                train_positive_fraction: self.experiment.train_positive_fraction,
                thresholds_from_test: Some(self.experiment.thresholds_from_test.unwrap_or(false)),
            },
            forest: ForestSection {
                trees: Some(self.forest.trees.unwrap_or(forest.n_trees)),
                candidates_per_branch: Some(
                    self.forest
                        .candidates_per_branch
                        .unwrap_or(forest.features_per_branch),
                ),
                min_gain_bits: Some(self.forest.min_gain_bits.unwrap_or(forest.min_gain_bits)),
                max_depth: Some(self.forest.max_depth.unwrap_or(forest.max_depth)),
            },
            output: OutputSection {
                dir: Some(
                    self.output
                        .dir
                        .clone()
                        .unwrap_or_else(|| PathBuf::from("results")),
                ),
                cache: self.output.cache.clone(),
            },
        }
    }

    pub fn compressor_config(&self) -> Result<CompressorConfig, CliError> {
        let defaults = CompressorConfig::default();
        let backend = match &self.compressor.backend {
            None => defaults.backend,
            Some(name) => Backend::parse(name).ok_or_else(|| {
                CliError::usage(format!(
                    "unknown backend {name:?} (expected lzma, deflate or bzip2)"
                ))
            })?,
        };
        let cfg = CompressorConfig {
            backend,
            level: self.compressor.level.unwrap_or(defaults.level),
            dictionary_bytes: self
                .compressor
                .dictionary_bytes
                .unwrap_or(defaults.dictionary_bytes),
        };
        cfg.validate().map_err(CliError::usage_from)?;
        Ok(cfg)
    }

    /// Translate the (resolved) sections into the library's experiment
    /// parameters.
    pub fn experiment_config(&self) -> Result<ExperimentConfig, CliError> {
        let r = self.resolved();
        let mask_name = r.experiment.mask.as_deref().expect("resolved");
        let mask = FeatureMask::parse(mask_name).ok_or_else(|| {
            CliError::usage(format!(
                "unknown feature mask {mask_name:?} (expected combined, ncd_only or ratio_only)"
            ))
        })?;
        Ok(ExperimentConfig {
            n_references: r.experiment.n_references.expect("resolved"),
            n_train: r.experiment.n_train.expect("resolved"),
            n_test: r.experiment.n_test.expect("resolved"),
            runs: r.experiment.runs.expect("resolved"),
            base_seed: r.experiment.base_seed.expect("resolved"),
            mask,
            forest: ForestParams {
                n_trees: r.forest.trees.expect("resolved"),
                features_per_branch: r.forest.candidates_per_branch.expect("resolved"),
                min_gain_bits: r.forest.min_gain_bits.expect("resolved"),
                max_depth: r.forest.max_depth.expect("resolved"),
                seed: 0,
            },
            compressor: self.compressor_config()?,
            train_positive_fraction: r.experiment.train_positive_fraction,
            thresholds_from_test: r.experiment.thresholds_from_test.expect("resolved"),
        })
    }
}

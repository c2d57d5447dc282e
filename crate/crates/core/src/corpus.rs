//! Labelled file collections: ingest, dedupe, sampling and splits.
//!
//! A corpus is a set of on-disk files, each tagged `malware` (the positive
//! class) or `benign` (the negative class). Files are never executed or
//! parsed; they are only read as bytes, hashed and later compressed.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::seed::{draw_index, rng_from_seed, sample_indices, shuffle};
use crate::{Error, Result};

/// Class label. `malware` is the positive class throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "malware")]
    Positive,
    #[serde(rename = "benign")]
    Negative,
}

impl Label {
    pub fn as_manifest_str(self) -> &'static str {
        match self {
            Label::Positive => "malware",
            Label::Negative => "benign",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "malware" => Some(Label::Positive),
            "benign" => Some(Label::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_manifest_str())
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One corpus member. `id` is the manifest path (or the path relative to the
/// ingest root) and is unique within a [`CorpusSet`]; `path` is where the
/// bytes actually live.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub path: PathBuf,
    pub label: Label,
    pub size_bytes: u64,
    pub sha256: String,
}

/// Re-read a sample's bytes, guarding against the file changing since
/// ingest: a size mismatch would silently poison every digest-keyed cache
/// entry, so it is an error rather than a warning.
pub fn read_sample_bytes(sample: &Sample) -> Result<Vec<u8>> {
    let bytes = std::fs::read(&sample.path).map_err(|_| Error::FileVanished {
        path: sample.path.clone(),
    })?;
    if bytes.len() as u64 != sample.size_bytes {
        return Err(Error::FileChanged {
            path: sample.path.clone(),
            expected: sample.size_bytes,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

/// Why a file was left out during ingest.
#[derive(Debug, Clone, Serialize)]
pub struct SkipReport {
    pub path: PathBuf,
    pub reason: String,
}

/// One removal decided by [`CorpusSet::dedupe`].
#[derive(Debug, Clone, Serialize)]
pub struct DupRecord {
    pub kept_id: String,
    pub removed_id: String,
    /// Always the full three-stage match: equal size, equal digest, equal bytes.
    pub reason: &'static str,
}

const DUP_REASON: &str = "size+digest+bytes";

/// A set of samples with unique ids, held sorted by id.
#[derive(Debug, Clone)]
pub struct CorpusSet {
    samples: Vec<Sample>,
    by_id: HashMap<String, usize>,
}

impl CorpusSet {
    /// Sorts by id and rejects duplicates.
    pub fn new(mut samples: Vec<Sample>) -> Result<CorpusSet> {
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        let mut by_id = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if by_id.insert(s.id.clone(), i).is_some() {
                return Err(Error::DuplicateId { id: s.id.clone() });
            }
        }
        Ok(CorpusSet { samples, by_id })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples in id order.
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.by_id.get(id).map(|&i| &self.samples[i])
    }

    pub fn require(&self, id: &str) -> Result<&Sample> {
        self.get(id).ok_or_else(|| Error::UnknownSampleId { id: id.into() })
    }

    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Ids of one label, in id order.
    fn ids_of(&self, label: Label) -> Vec<&str> {
        self.samples
            .iter()
            .filter(|s| s.label == label)
            .map(|s| s.id.as_str())
            .collect()
    }

    /// Union of two corpora; duplicate ids are an error.
    pub fn union(&self, other: &CorpusSet) -> Result<CorpusSet> {
        let mut all = self.samples.clone();
        all.extend(other.samples.iter().cloned());
        CorpusSet::new(all)
    }

    /// Remove byte-identical duplicates, keeping the smallest id of each
    /// equivalence class. Candidates are narrowed by size, then digest, and
    /// confirmed byte-by-byte, so a digest collision cannot merge distinct
    /// files.
    pub fn dedupe(&self) -> Result<(CorpusSet, Vec<DupRecord>)> {
        let mut groups: HashMap<(u64, &str), Vec<&Sample>> = HashMap::new();
        for s in &self.samples {
            groups
                .entry((s.size_bytes, s.sha256.as_str()))
                .or_default()
                .push(s);
        }

        let mut removed: HashMap<&str, &str> = HashMap::new(); // removed id -> kept id
        let mut keys: Vec<(u64, &str)> = groups.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let members = &groups[&key];
            if members.len() < 2 {
                continue;
            }
            // Equality classes within the (size, digest) bucket; members are
            // in id order because self.samples is.
            let mut classes: Vec<(Vec<u8>, &Sample)> = Vec::new();
            for s in members {
                let bytes = read_sample_bytes(s)?;
                match classes.iter().find(|(b, _)| *b == bytes) {
                    Some((_, keeper)) => {
                        removed.insert(&s.id, &keeper.id);
                    }
                    None => classes.push((bytes, s)),
                }
            }
        }

        let mut records: Vec<DupRecord> = removed
            .iter()
            .map(|(rm, keep)| DupRecord {
                kept_id: keep.to_string(),
                removed_id: rm.to_string(),
                reason: DUP_REASON,
            })
            .collect();
        records.sort_by(|a, b| a.removed_id.cmp(&b.removed_id));

        let kept: Vec<Sample> = self
            .samples
            .iter()
            .filter(|s| !removed.contains_key(s.id.as_str()))
            .cloned()
            .collect();
        Ok((CorpusSet::new(kept)?, records))
    }

    /// Draw `n_per_label` samples of each label, uniformly and seeded.
    ///
    /// With replacement, repeated draws of the same sample are kept as
    /// distinct members: the k-th repeat gets id `"<id>#k"` so the result is
    /// still a well-formed set while preserving multiplicity.
    pub fn sample(
        &self,
        n_per_label: usize,
        with_replacement: bool,
        seed: u64,
    ) -> Result<CorpusSet> {
        let mut rng = rng_from_seed(seed);
        let mut picked = Vec::with_capacity(n_per_label * 2);
        for label in [Label::Positive, Label::Negative] {
            let pool = self.ids_of(label);
            if with_replacement {
                if pool.is_empty() && n_per_label > 0 {
                    return Err(Error::InsufficientPopulation {
                        label,
                        needed: 1,
                        available: 0,
                    });
                }
                let mut seen: HashMap<&str, usize> = HashMap::new();
                for _ in 0..n_per_label {
                    let id = pool[draw_index(&mut rng, pool.len())];
                    let k = seen.entry(id).or_insert(0);
                    *k += 1;
                    let mut s = self.get(id).expect("pool id").clone();
                    if *k > 1 {
                        s.id = format!("{id}#{k}");
                    }
                    picked.push(s);
                }
            } else {
                if pool.len() < n_per_label {
                    return Err(Error::InsufficientPopulation {
                        label,
                        needed: n_per_label,
                        available: pool.len(),
                    });
                }
                for i in sample_indices(&mut rng, pool.len(), n_per_label) {
                    picked.push(self.get(pool[i]).expect("pool id").clone());
                }
            }
        }
        CorpusSet::new(picked)
    }

    /// Disjoint label-balanced reference / training / test id lists.
    /// Each count is the list's total size and must be even.
    pub fn split(
        &self,
        n_reference: usize,
        n_train: usize,
        n_test: usize,
        seed: u64,
    ) -> Result<ExperimentSplit> {
        for (what, v) in [
            ("n_reference", n_reference),
            ("n_train", n_train),
            ("n_test", n_test),
        ] {
            if v % 2 != 0 {
                return Err(Error::OddCount { what, value: v });
            }
        }
        let half = |n| PerLabelCounts {
            positive: n / 2,
            negative: n / 2,
        };
        self.split_counts(half(n_reference), half(n_train), half(n_test), seed)
    }

    /// Like [`split`](Self::split) but with a class-imbalanced training
    /// list: `train_positive_fraction` of `n_train` (rounded to nearest) is
    /// positive. Reference and test lists stay balanced.
    pub fn split_biased(
        &self,
        n_reference: usize,
        n_train: usize,
        n_test: usize,
        train_positive_fraction: f64,
        seed: u64,
    ) -> Result<ExperimentSplit> {
        if !(0.0..=1.0).contains(&train_positive_fraction) {
            return Err(Error::InvalidArgument {
                message: format!(
                    "train_positive_fraction {train_positive_fraction} out of [0, 1]"
                ),
            });
        }
        for (what, v) in [("n_reference", n_reference), ("n_test", n_test)] {
            if v % 2 != 0 {
                return Err(Error::OddCount { what, value: v });
            }
        }
        let train_pos = (n_train as f64 * train_positive_fraction).round() as usize;
        self.split_counts(
            PerLabelCounts {
                positive: n_reference / 2,
                negative: n_reference / 2,
            },
            PerLabelCounts {
                positive: train_pos,
                negative: n_train - train_pos,
            },
            PerLabelCounts {
                positive: n_test / 2,
                negative: n_test / 2,
            },
            seed,
        )
    }

    fn split_counts(
        &self,
        reference: PerLabelCounts,
        train: PerLabelCounts,
        test: PerLabelCounts,
        seed: u64,
    ) -> Result<ExperimentSplit> {
        let mut rng = rng_from_seed(seed);
        let mut lists = SplitLists::default();
        for label in [Label::Positive, Label::Negative] {
            let needed = reference.of(label) + train.of(label) + test.of(label);
            let mut pool = self.ids_of(label);
            if pool.len() < needed {
                return Err(Error::InsufficientPopulation {
                    label,
                    needed,
                    available: pool.len(),
                });
            }
            shuffle(&mut rng, &mut pool);
            let take = |n: usize, from: &mut usize| -> Vec<String> {
                let slice = &pool[*from..*from + n];
                *from += n;
                slice.iter().map(|s| s.to_string()).collect()
            };
            let mut at = 0;
            lists.reference.extend(take(reference.of(label), &mut at));
            lists.train.extend(take(train.of(label), &mut at));
            lists.test.extend(take(test.of(label), &mut at));
        }
        lists.reference.sort();
        lists.train.sort();
        lists.test.sort();
        Ok(ExperimentSplit {
            reference: lists.reference,
            train: lists.train,
            test: lists.test,
        })
    }
}

#[derive(Clone, Copy)]
struct PerLabelCounts {
    positive: usize,
    negative: usize,
}

impl PerLabelCounts {
    fn of(self, label: Label) -> usize {
        match label {
            Label::Positive => self.positive,
            Label::Negative => self.negative,
        }
    }
}

#[derive(Default)]
struct SplitLists {
    reference: Vec<String>,
    train: Vec<String>,
    test: Vec<String>,
}

/// Disjoint id lists produced by [`CorpusSet::split`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSplit {
    pub reference: Vec<String>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Ingest every regular file under `root` (recursively, in sorted order)
/// with one label. Unreadable and empty files are skipped and reported.
pub fn ingest_directory(root: &Path, label: Label) -> Result<(CorpusSet, Vec<SkipReport>)> {
    let mut paths = Vec::new();
    collect_files(root, &mut paths)?;
    paths.sort();

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let id = path
            .strip_prefix(root)
            .unwrap_or(&path)
            .to_string_lossy()
            .into_owned();
        match std::fs::read(&path) {
            Err(e) => skipped.push(SkipReport {
                path,
                reason: format!("unreadable: {e}"),
            }),
            Ok(bytes) if bytes.is_empty() => skipped.push(SkipReport {
                path,
                reason: "empty file".into(),
            }),
            Ok(bytes) => samples.push(Sample {
                id,
                sha256: sha256_hex(&bytes),
                size_bytes: bytes.len() as u64,
                path,
                label,
            }),
        }
    }
    Ok((CorpusSet::new(samples)?, skipped))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let ft = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
        if ft.is_dir() {
            collect_files(&entry.path(), out)?;
        } else if ft.is_file() {
            out.push(entry.path());
        }
        // Symlinks and special files are ignored.
    }
    Ok(())
}

/// Ingest from a CSV manifest with header `path,label,sha256`.
///
/// `sha256` may be empty or the column absent; when present it is verified
/// against the file on disk and a mismatch is an error, not a skip. Relative
/// paths are resolved against the manifest's directory; the path as written
/// becomes the sample id.
pub fn ingest_manifest(manifest: &Path) -> Result<(CorpusSet, Vec<SkipReport>)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(manifest)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (path_col, label_col) = match (col("path"), col("label")) {
        (Some(p), Some(l)) => (p, l),
        _ => {
            return Err(Error::ManifestRow {
                path: manifest.into(),
                row: 1,
                message: "header must contain `path` and `label` columns".into(),
            })
        }
    };
    let sha_col = col("sha256");
    let base = manifest.parent().unwrap_or(Path::new("."));

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record = record?;
        let bad = |message: String| Error::ManifestRow {
            path: manifest.into(),
            row,
            message,
        };
        let raw_path = record
            .get(path_col)
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| bad("missing path".into()))?;
        let label = record
            .get(label_col)
            .and_then(Label::parse)
            .ok_or_else(|| bad("label must be `malware` or `benign`".into()))?;
        let expect_sha = sha_col
            .and_then(|c| record.get(c))
            .map(str::trim)
            .filter(|s| !s.is_empty());

        let path = {
            let p = Path::new(raw_path);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        match std::fs::read(&path) {
            Err(e) => skipped.push(SkipReport {
                path,
                reason: format!("unreadable: {e}"),
            }),
            Ok(bytes) if bytes.is_empty() => skipped.push(SkipReport {
                path,
                reason: "empty file".into(),
            }),
            Ok(bytes) => {
                let digest = sha256_hex(&bytes);
                if let Some(expected) = expect_sha {
                    if !expected.eq_ignore_ascii_case(&digest) {
                        return Err(bad(format!(
                            "sha256 mismatch for {raw_path}: manifest says {expected}, file is {digest}"
                        )));
                    }
                }
                samples.push(Sample {
                    id: raw_path.to_string(),
                    path,
                    label,
                    size_bytes: bytes.len() as u64,
                    sha256: digest,
                });
            }
        }
    }
    Ok((CorpusSet::new(samples)?, skipped))
}

/// Write `path,label,sha256` rows for every sample, in id order.
///
/// The path column must resolve from the manifest being written, not from
/// wherever the source manifest lived, so each sample's resolved path is
/// re-expressed relative to `out`'s directory when it sits underneath it
/// and absolutized otherwise. When `out` is written at the corpus root the
/// relative forms equal the sample ids, and re-ingesting reproduces them.
pub fn write_manifest(corpus: &CorpusSet, out: &Path) -> Result<()> {
    let out_dir = out.parent().unwrap_or(Path::new(""));
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["path", "label", "sha256"])?;
    for s in corpus.samples() {
        let written = match s.path.strip_prefix(out_dir) {
            Ok(rel) => rel.to_path_buf(),
            Err(_) => std::path::absolute(&s.path).map_err(|e| Error::io(&s.path, e))?,
        };
        w.write_record([
            written.to_string_lossy().as_ref(),
            s.label.as_manifest_str(),
            s.sha256.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(())
}

/// Write a `kept_id,removed_id,reason` CSV for a dedupe pass.
pub fn write_dedupe_report(records: &[DupRecord], out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["kept_id", "removed_id", "reason"])?;
    for r in records {
        w.write_record([r.kept_id.as_str(), r.removed_id.as_str(), r.reason])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(())
}

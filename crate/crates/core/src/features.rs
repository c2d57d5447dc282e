//! Feature vectors: one compressibility ratio plus NCDs to a reference set.
//!
//! A sample's vector has `n + 1` entries, all clamped to `[0, 1]`:
//!
//! * index 0: the sample's own compressibility ratio `Z(x) / |x|`;
//! * indices `1..=n`: NCD to each of the `n` reference samples, in the
//!   reference set's fixed order.
//!
//! The reference set is drawn once per run (half per label, deterministic
//! shuffle) and its fingerprint travels with every vector, model and
//! sidecar, so mixing vectors built against different references is
//! detectable instead of silent.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compressor::{compressed_size, CompressorConfig, SizeCache};
use crate::corpus::{read_sample_bytes, CorpusSet, ExperimentSplit, Label};
use crate::distance::{ncd_prepared, Prepared};
use crate::seed::{rng_from_seed, sample_indices, shuffle};
use crate::{Error, Result};

/// Which slice of the feature vector a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMask {
    /// Ratio and NCD features together (the full vector).
    Combined,
    /// NCD features only (drops index 0).
    NcdOnly,
    /// The ratio alone.
    RatioOnly,
}

impl FeatureMask {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMask::Combined => "combined",
            FeatureMask::NcdOnly => "ncd_only",
            FeatureMask::RatioOnly => "ratio_only",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureMask> {
        match s.trim() {
            "combined" => Some(FeatureMask::Combined),
            "ncd_only" => Some(FeatureMask::NcdOnly),
            "ratio_only" => Some(FeatureMask::RatioOnly),
            _ => None,
        }
    }

    /// Project a full vector down to the masked feature space. One code
    /// path for all three arms: models differ only in which indices they
    /// ever see.
    pub fn apply(self, full: &[f64]) -> Vec<f64> {
        match self {
            FeatureMask::Combined => full.to_vec(),
            FeatureMask::NcdOnly => full[1..].to_vec(),
            FeatureMask::RatioOnly => full[..1].to_vec(),
        }
    }
}

/// An ordered, labelled list of reference sample ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceSet {
    entries: Vec<(String, Label)>,
    seed: u64,
}

impl ReferenceSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn entries(&self) -> &[(String, Label)] {
        &self.entries
    }

    /// Short stable id of the exact reference list (ids in order).
    pub fn fingerprint(&self) -> String {
        let joined: Vec<u8> = self
            .entries
            .iter()
            .flat_map(|(id, _)| id.bytes().chain([b'\n']))
            .collect();
        format!("rf1:{}", &crate::corpus::sha256_hex(&joined)[..16])
    }
}

/// Draw `n` references from a split's reference pool: `n / 2` per label,
/// then one deterministic shuffle of the combined list. Drawing the whole
/// pool (`n` equal to the pool size) degenerates to just the shuffle.
pub fn select_references(
    split: &ExperimentSplit,
    corpus: &CorpusSet,
    n: usize,
    seed: u64,
) -> Result<ReferenceSet> {
    if n == 0 {
        return Err(Error::EmptyInput {
            what: "reference set",
        });
    }
    if n % 2 != 0 {
        return Err(Error::OddCount {
            what: "reference count",
            value: n,
        });
    }
    let mut pools: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    for id in &split.reference {
        let sample = corpus.require(id)?;
        let slot = match sample.label {
            Label::Positive => 0,
            Label::Negative => 1,
        };
        pools[slot].push(&sample.id);
    }
    let mut rng = rng_from_seed(seed);
    let mut combined: Vec<(String, Label)> = Vec::with_capacity(n);
    for (slot, label) in [(0, Label::Positive), (1, Label::Negative)] {
        let pool = &pools[slot];
        if pool.len() < n / 2 {
            return Err(Error::InsufficientPopulation {
                label,
                needed: n / 2,
                available: pool.len(),
            });
        }
        for i in sample_indices(&mut rng, pool.len(), n / 2) {
            combined.push((pool[i].to_string(), label));
        }
    }
    shuffle(&mut rng, &mut combined);
    Ok(ReferenceSet {
        entries: combined,
        seed,
    })
}

/// One sample's full (unmasked) feature vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sample_id: String,
    /// `values[0]` is the ratio, `values[1..]` the reference NCDs; every
    /// entry lies in `[0, 1]`.
    pub values: Vec<f64>,
    pub reference_fingerprint: String,
}

/// Build vectors for `ids` (in the given order), reading each reference
/// once and fanning samples out across threads. A vector is returned only
/// if every one of its entries computed; one bad pair fails the whole call
/// rather than leaving a hole.
pub fn feature_vectors(
    ids: &[String],
    refs: &ReferenceSet,
    corpus: &CorpusSet,
    cfg: &CompressorConfig,
    cache: &SizeCache,
) -> Result<Vec<FeatureVector>> {
    cfg.validate()?;
    let ref_samples: Vec<&crate::corpus::Sample> = refs
        .entries()
        .iter()
        .map(|(id, _)| corpus.require(id))
        .collect::<Result<_>>()?;
    let ref_bytes: Vec<Vec<u8>> = ref_samples
        .par_iter()
        .map(|s| read_sample_bytes(s))
        .collect::<Result<_>>()?;
    let fingerprint = refs.fingerprint();

    ids.par_iter()
        .map(|id| {
            let sample = corpus.require(id)?;
            if sample.size_bytes == 0 {
                return Err(Error::EmptySample { id: id.clone() });
            }
            let bytes = read_sample_bytes(sample)?;
            let z = cache.size_for(&sample.sha256, cfg, || compressed_size(&bytes, cfg))?;
            let mut values = Vec::with_capacity(refs.len() + 1);
            values.push((z as f64 / sample.size_bytes as f64).clamp(0.0, 1.0));
            let prepared = Prepared::new(sample, &bytes);
            for (r, r_bytes) in ref_samples.iter().zip(&ref_bytes) {
                let d = ncd_prepared(&prepared, &Prepared::new(r, r_bytes), cfg, cache)?;
                values.push(d.clamp(0.0, 1.0));
            }
            Ok(FeatureVector {
                sample_id: id.clone(),
                values,
                reference_fingerprint: fingerprint.clone(),
            })
        })
        .collect()
}

/// Convenience wrapper for a single sample.
pub fn feature_vector(
    id: &str,
    refs: &ReferenceSet,
    corpus: &CorpusSet,
    cfg: &CompressorConfig,
    cache: &SizeCache,
) -> Result<FeatureVector> {
    Ok(feature_vectors(&[id.to_string()], refs, corpus, cfg, cache)?.remove(0))
}

/// Sidecar describing how a feature CSV was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub reference_fingerprint: String,
    pub reference_ids: Vec<String>,
    pub reference_labels: Vec<Label>,
    pub reference_seed: u64,
    pub config_fingerprint: String,
}

/// Write `sample_id,label,f0..fn` rows plus a JSON sidecar naming the
/// reference set and compressor they were built with.
pub fn write_feature_csv(
    vectors: &[FeatureVector],
    corpus: &CorpusSet,
    refs: &ReferenceSet,
    cfg: &CompressorConfig,
    csv_out: &Path,
    sidecar_out: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_out)?;
    let width = refs.len() + 1;
    let mut header = vec!["sample_id".to_string(), "label".to_string()];
    header.extend((0..width).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for v in vectors {
        if v.values.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: v.values.len(),
            });
        }
        let label = corpus.require(&v.sample_id)?.label;
        let mut row = vec![v.sample_id.clone(), label.as_manifest_str().to_string()];
        row.extend(v.values.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(csv_out, e))?;

    let sidecar = FeatureSidecar {
        reference_fingerprint: refs.fingerprint(),
        reference_ids: refs.ids().map(str::to_string).collect(),
        reference_labels: refs.entries().iter().map(|(_, l)| *l).collect(),
        reference_seed: refs.seed(),
        config_fingerprint: cfg.fingerprint(),
    };
    let file = std::fs::File::create(sidecar_out).map_err(|e| Error::io(sidecar_out, e))?;
    serde_json::to_writer_pretty(file, &sidecar)?;
    Ok(())
}
